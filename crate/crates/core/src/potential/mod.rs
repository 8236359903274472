//! Discrete potential theory for simple random walk on Z^d.

mod ball;
mod equilibrium;
mod green;
mod kernels;

pub use ball::BallDomain;
pub use equilibrium::{
    capacity, checked_inverse, equilibrium_measure, escape_probability, green_matrix,
    EquilibriumData, MAX_CONDITION, RESIDUAL_TOLERANCE,
};
pub use green::{far_field_constant, gauss_legendre, green, scaled_bessel_row, GreenTable};
pub use kernels::{
    condenser_capacity, escape_table, exit_distribution, exit_distribution_in,
    hitting_distribution, transition_density, EscapeTable, HittingSolver,
};
