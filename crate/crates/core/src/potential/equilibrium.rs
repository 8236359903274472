use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{internal_boundary, Point, SiteSet};

use super::green::GreenTable;

/// Largest accepted 1-norm condition estimate of a Green matrix.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest accepted max-norm residual of the equilibrium system.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Equilibrium measure, capacity and harmonic measure of a finite set.
#[derive(Clone, Debug)]
pub struct EquilibriumData {
    k: SiteSet,
    e: Vec<f64>,
    cap: f64,
    hbar: Vec<f64>,
    residual: f64,
    condition: f64,
}

impl EquilibriumData {
    pub fn k(&self) -> &SiteSet {
        &self.k
    }
    /// `e_K(x)`, indexed by the enumeration of `K`.
    pub fn e(&self) -> &[f64] {
        &self.e
    }
    pub fn cap(&self) -> f64 {
        self.cap
    }
    /// `ē_K(x) = e_K(x) / cap(K)`.
    pub fn hbar(&self) -> &[f64] {
        &self.hbar
    }
    /// `max_x |Σ_y G(x,y) e(y) - 1|`.
    pub fn residual(&self) -> f64 {
        self.residual
    }
    /// 1-norm condition estimate of the Green matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }
    pub fn e_at(&self, x: &Point) -> Option<f64> {
        self.k.index_of(x).map(|i| self.e[i])
    }
    pub fn hbar_at(&self, x: &Point) -> Option<f64> {
        self.k.index_of(x).map(|i| self.hbar[i])
    }
}

/// `[G(x_i, x_j)]` over an enumerated set.
pub fn green_matrix(green: &GreenTable, sites: &[Point]) -> DMatrix<f64> {
    let n = sites.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = green.between(&sites[i], &sites[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse of a Green matrix together with its 1-norm condition estimate.
pub fn checked_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let inv = m.clone().lu().try_inverse().ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let condition = norm1(m) * norm1(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    Ok((inv, condition))
}

/// Solves `Σ_y G(x,y) e(y) = 1` on `K`.
///
/// The solution vanishes on interior sites; values there below `1e-9` in
/// magnitude are set to zero, as are negligible values elsewhere.
/// Negative values below `-1e-10` are an error.
pub fn equilibrium_measure(green: &GreenTable, k: &SiteSet) -> Result<EquilibriumData> {
    if k.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(p) = k.iter().find(|p| p.dim() != green.dim()) {
        return Err(Error::DimensionMismatch {
            expected: green.dim(),
            found: p.dim(),
        });
    }
    let m = green_matrix(green, k.sites());
    let (inv, condition) = checked_inverse(&m)?;
    let ones = DVector::from_element(k.len(), 1.0);
    let sol = &inv * &ones;
    let boundary = internal_boundary(k);
    let emax = sol.iter().cloned().fold(0.0, f64::max);
    let mut e = Vec::with_capacity(k.len());
    for (i, x) in k.iter().enumerate() {
        let v = sol[i];
        if !boundary.contains(x) {
            if v.abs() > 1e-9 {
                return Err(Error::Residual { residual: v.abs() });
            }
            e.push(0.0);
        } else if v < -1e-10 {
            return Err(Error::NegativeProbability {
                what: "equilibrium measure",
                value: v,
            });
        } else if v.abs() <= 1e-13 * emax {
            e.push(0.0);
        } else {
            e.push(v);
        }
    }
    let ev = DVector::from_column_slice(&e);
    let residual = (&m * &ev)
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::Residual { residual });
    }
    let cap: f64 = e.iter().sum();
    let hbar = e.iter().map(|v| v / cap).collect();
    Ok(EquilibriumData {
        k: k.clone(),
        e,
        cap,
        hbar,
        residual,
        condition,
    })
}

/// `cap(K) = Σ_x e_K(x)`.
pub fn capacity(green: &GreenTable, k: &SiteSet) -> Result<f64> {
    Ok(equilibrium_measure(green, k)?.cap)
}

/// `P_y[τ_K = ∞] = 1 - Σ_z G(y,z) e_K(z)` for `y ∉ K`.
pub fn escape_probability(green: &GreenTable, eq: &EquilibriumData, y: &Point) -> Result<f64> {
    if eq.k.contains(y) {
        return Err(Error::InteriorStartPoint(y.to_string()));
    }
    let hit: f64 =
        eq.k.iter()
            .zip(&eq.e)
            .filter(|(_, &e)| e > 0.0)
            .map(|(z, e)| green.between(y, z) * e)
            .sum();
    Ok(clamp_probability(1.0 - hit, "escape probability"))
}

/// Clamps round-off excursions outside `[0, 1]`, reporting larger ones.
pub(crate) fn clamp_probability(p: f64, what: &str) -> f64 {
    if !(-1e-10..=1.0 + 1e-10).contains(&p) {
        eprintln!("warning: clamping {what} {p:.3e} into [0, 1]");
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i32]) -> Point {
        Point::new(c)
    }

    fn table() -> GreenTable {
        GreenTable::with_cutoff(3, 128).unwrap()
    }

    #[test]
    fn singleton() {
        let g = table();
        let g0 = g.value(&Point::origin(3));
        let eq = equilibrium_measure(&g, &SiteSet::singleton(Point::origin(3))).unwrap();
        assert!((eq.e()[0] - 1.0 / g0).abs() < 1e-15);
        assert!((eq.cap() - 0.6594626704490009).abs() < 1e-12);
        assert_eq!(eq.hbar(), &[1.0]);
        assert!(eq.residual() <= 1e-12);
    }

    #[test]
    fn two_points() {
        let g = table();
        let g0 = g.value(&Point::origin(3));
        for l in [10, 100] {
            let k = SiteSet::new([Point::origin(3), p(&[l, 0, 0])]);
            let eq = equilibrium_measure(&g, &k).unwrap();
            let gl = g.value(&p(&[l, 0, 0]));
            assert!((eq.cap() - 2.0 / (g0 + gl)).abs() < 1e-14);
            assert!(eq.residual() <= 1e-8);
            if l == 100 {
                assert!((eq.cap() / (2.0 / g0) - 1.0).abs() < 0.01);
            }
            assert!((eq.hbar()[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cube_is_symmetric_and_supported_on_boundary() {
        let g = table();
        let cube: SiteSet = (-1..=1)
            .flat_map(|x| (-1..=1).flat_map(move |y| (-1..=1).map(move |z| p(&[x, y, z]))))
            .collect();
        let eq = equilibrium_measure(&g, &cube).unwrap();
        assert_eq!(eq.e_at(&Point::origin(3)), Some(0.0));
        let corner = eq.e_at(&p(&[1, 1, 1])).unwrap();
        for c in [p(&[-1, 1, -1]), p(&[1, -1, -1]), p(&[-1, -1, -1])] {
            assert!((eq.e_at(&c).unwrap() - corner).abs() < 1e-14);
        }
        let face = eq.e_at(&p(&[1, 0, 0])).unwrap();
        assert!((eq.e_at(&p(&[0, 0, -1])).unwrap() - face).abs() < 1e-14);
        assert!((eq.hbar().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(eq.e().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn capacity_is_monotone_subadditive_and_translation_invariant() {
        let g = table();
        let a = SiteSet::new([Point::origin(3), p(&[1, 0, 0])]);
        let b = a.union(&SiteSet::singleton(p(&[0, 1, 0])));
        let ca = capacity(&g, &a).unwrap();
        let cb = capacity(&g, &b).unwrap();
        assert!(ca <= cb);
        let far = a.translate(p(&[20, 3, 0]));
        assert!((capacity(&g, &far).unwrap() - ca).abs() < 1e-13);
        let u = a.union(&far);
        assert!(capacity(&g, &u).unwrap() <= 2.0 * ca);
    }

    #[test]
    fn escape_probability_values() {
        let g = table();
        let k = SiteSet::singleton(Point::origin(3));
        let eq = equilibrium_measure(&g, &k).unwrap();
        let e1 = escape_probability(&g, &eq, &p(&[1, 0, 0])).unwrap();
        assert!((e1 - (1.0 - 0.3405)).abs() < 1e-4);
        assert!((e1 - eq.cap()).abs() < 1e-14);
        let y = p(&[7, 2, 1]);
        let direct = 1.0 - g.value(&y) / g.value(&Point::origin(3));
        assert!((escape_probability(&g, &eq, &y).unwrap() - direct).abs() < 1e-15);
        assert!(matches!(
            escape_probability(&g, &eq, &Point::origin(3)),
            Err(Error::InteriorStartPoint(_))
        ));
        let v = p(&[4, -5, 9]);
        let shifted = equilibrium_measure(&g, &k.translate(v)).unwrap();
        let a = escape_probability(&g, &eq, &y).unwrap();
        let b = escape_probability(&g, &shifted, &(y + v)).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(matches!(
            equilibrium_measure(&table(), &SiteSet::empty()),
            Err(Error::EmptySet)
        ));
    }
}
