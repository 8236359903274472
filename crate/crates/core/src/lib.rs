//! Random interlacements on two distant sets: potential theory on `Z^d`,
//! soft local time sampling of excursions, the interlacement and noodle soup
//! processes on `K = K1 ∪ K2`, their coupling, and the experiments built on
//! them.

pub mod analysis;
pub mod coupling;
pub mod error;
pub mod excursions;
pub mod lattice;
pub mod potential;
pub mod processes;
pub mod replicas;
pub mod rng;
pub mod scene;
pub mod slt;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/potential.md")]
    mod potential {}
    #[doc = include_str!("../../../book/src/processes.md")]
    mod processes {}
    #[doc = include_str!("../../../book/src/soft-local-times.md")]
    mod soft_local_times {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
