//! Escape, hitting, transition and exit kernels of a two-ball scene.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Point, SiteSet};

use super::ball::BallDomain;
use super::equilibrium::{checked_inverse, clamp_probability, green_matrix, EquilibriumData};
use super::green::GreenTable;

/// Escape probabilities `p_y = P_y[τ_K = ∞]` on `∂_e V_R` and their minimum `q`.
#[derive(Clone, Debug)]
pub struct EscapeTable {
    boundary: SiteSet,
    p: Vec<f64>,
    q: f64,
    argmin: usize,
}

impl EscapeTable {
    /// A table with every `p_y` set to one (no trajectory ever returns).
    pub fn forced_escape(boundary: SiteSet) -> EscapeTable {
        let p = vec![1.0; boundary.len()];
        EscapeTable {
            boundary,
            p,
            q: 1.0,
            argmin: 0,
        }
    }

    pub fn boundary(&self) -> &SiteSet {
        &self.boundary
    }
    pub fn p(&self) -> &[f64] {
        &self.p
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    /// A site of `∂_e V_R` attaining `q`.
    pub fn argmin(&self) -> Point {
        self.boundary.sites()[self.argmin]
    }
    /// Whether the scene is in the regime `q >= 1/2`.
    pub fn regime_ok(&self) -> bool {
        self.q >= 0.5
    }
    pub fn p_at(&self, y: &Point) -> Option<f64> {
        self.boundary.index_of(y).map(|i| self.p[i])
    }
}

/// First-entrance kernel into `K`, solved on `∂K` only: the walk from outside
/// enters `K` through `∂K`, so the entrance law `h` satisfies
/// `Σ_x h(x) G(x, x') = G(y, x')` for `x' ∈ ∂K`.
#[derive(Clone, Debug)]
pub struct HittingSolver {
    bk: SiteSet,
    inv: DMatrix<f64>,
    /// `e_K` restricted to `∂K`, in the enumeration of `∂K`.
    e_bk: Vec<f64>,
    hbar_bk: Vec<f64>,
}

impl HittingSolver {
    pub fn new(green: &GreenTable, eq: &EquilibriumData, bk: &SiteSet) -> Result<HittingSolver> {
        let m = green_matrix(green, bk.sites());
        let (inv, _) = checked_inverse(&m)?;
        let e_bk: Vec<f64> = bk.iter().map(|x| eq.e_at(x).expect("∂K ⊆ K")).collect();
        let hbar_bk = e_bk.iter().map(|e| e / eq.cap()).collect();
        Ok(HittingSolver {
            bk: bk.clone(),
            inv,
            e_bk,
            hbar_bk,
        })
    }

    pub fn boundary_k(&self) -> &SiteSet {
        &self.bk
    }

    /// Harmonic measure over `∂K`.
    pub fn hbar(&self) -> &[f64] {
        &self.hbar_bk
    }

    fn green_row(&self, green: &GreenTable, y: &Point) -> Vec<f64> {
        self.bk.iter().map(|x| green.between(y, x)).collect()
    }

    /// `P_y[τ_K = ∞]` for `y ∉ K`.
    pub fn escape(&self, green: &GreenTable, y: &Point) -> f64 {
        let v = self.green_row(green, y);
        let hit: f64 = v.iter().zip(&self.e_bk).map(|(g, e)| g * e).sum();
        clamp_probability(1.0 - hit, "escape probability")
    }

    /// Conditional entrance law `P_y[X_{τ_K} = · | τ_K < ∞]` over `∂K`
    /// together with `P_y[τ_K < ∞]`.
    pub fn hit_row(&self, green: &GreenTable, y: &Point) -> Result<(Vec<f64>, f64)> {
        let v = DVector::from_vec(self.green_row(green, y));
        let h = &self.inv * v;
        let mut row: Vec<f64> = h.iter().copied().collect();
        for (x, val) in self.bk.iter().zip(row.iter_mut()) {
            if *val < 0.0 {
                if *val < -1e-10 {
                    return Err(Error::NegativeProbability {
                        what: "hitting probability",
                        value: *val,
                    });
                }
                *val = 0.0;
            }
            let _ = x;
        }
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::NegativeProbability {
                what: "return probability",
                value: total,
            });
        }
        row.iter_mut().for_each(|v| *v /= total);
        Ok((row, total))
    }

    /// `g(y, ·) = hit(y, ·) / ē_K(·)` over `∂K`, zero where `ē_K` vanishes.
    pub fn density_from_hit(&self, hit: &[f64]) -> Vec<f64> {
        hit.iter()
            .zip(&self.hbar_bk)
            .map(|(h, e)| if *e > 0.0 { h / e } else { 0.0 })
            .collect()
    }
}

/// Escape probabilities over `∂_e V_R`.
pub fn escape_table(
    cfg: &Configuration,
    green: &GreenTable,
    solver: &HittingSolver,
) -> EscapeTable {
    let boundary = cfg.boundary_vr().clone();
    let p: Vec<f64> = boundary.iter().map(|y| solver.escape(green, y)).collect();
    let (argmin, q) = p
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bq), (i, v)| if v < bq { (i, v) } else { (bi, bq) },
        );
    EscapeTable {
        boundary,
        p,
        q,
        argmin,
    }
}

/// Conditional entrance law from `y ∈ ∂_e V_R` over the enumeration of `∂K`.
pub fn hitting_distribution(
    cfg: &Configuration,
    green: &GreenTable,
    solver: &HittingSolver,
    y: &Point,
) -> Result<Vec<f64>> {
    if !cfg.boundary_vr().contains(y) {
        return Err(Error::NotInSet {
            site: y.to_string(),
            set: "∂_e V_R",
        });
    }
    Ok(solver.hit_row(green, y)?.0)
}

/// `g(y, x)` for `y ∈ ∂_e V_R` and `x ∈ ∂K`.
pub fn transition_density(
    cfg: &Configuration,
    green: &GreenTable,
    solver: &HittingSolver,
    y: &Point,
    x: &Point,
) -> Result<f64> {
    let i = solver.bk.index_of(x).ok_or_else(|| Error::NotInSet {
        site: x.to_string(),
        set: "∂K",
    })?;
    if solver.hbar_bk[i] <= 0.0 {
        return Err(Error::NullHarmonicMass(x.to_string()));
    }
    let hit = hitting_distribution(cfg, green, solver, y)?;
    Ok(hit[i] / solver.hbar_bk[i])
}

/// Exit law of an excursion started at `x ∈ V_R`, over the enumeration of
/// `∂_e V_R`. Solves the Dirichlet problem on the ball containing `x`.
pub fn exit_distribution(cfg: &Configuration, x: &Point) -> Result<Vec<f64>> {
    let b = cfg.vr().ball_of(x).ok_or_else(|| Error::NotInSet {
        site: x.to_string(),
        set: "V_R",
    })?;
    let domain = BallDomain::new(cfg.vr().centers()[b], cfg.radius());
    exit_distribution_in(cfg, &domain, x)
}

/// As [`exit_distribution`], reusing a prebuilt domain for the ball of `x`.
pub fn exit_distribution_in(
    cfg: &Configuration,
    domain: &BallDomain,
    x: &Point,
) -> Result<Vec<f64>> {
    let pairs = domain.exit_distribution(x)?;
    let mut row = vec![0.0; cfg.boundary_vr().len()];
    for (y, p) in pairs {
        let j = cfg
            .boundary_vr()
            .index_of(&y)
            .expect("exit site on ∂_e V_R");
        row[j] += p;
    }
    Ok(row)
}

/// `Σ_{x ∈ K} P_x[leave V_R before returning to K]`, the capacity of `K`
/// relative to `V_R`. An interlacement at level `u` makes on average `u`
/// times this many excursions from `∂K` to `∂_e V_R`.
pub fn condenser_capacity(cfg: &Configuration) -> Result<f64> {
    let domain = BallDomain::new(cfg.vr().centers()[0], cfg.radius());
    let esc = domain.escape_before_return(cfg.k1().sites())?;
    // K2 is a translate of K1 inside a translate of the same ball.
    Ok(2.0 * esc.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::equilibrium::equilibrium_measure;

    fn p(c: &[i32]) -> Point {
        Point::new(c)
    }

    fn scene(
        k1: SiteSet,
        xhat: Point,
    ) -> (Configuration, GreenTable, HittingSolver, EquilibriumData) {
        let cfg = Configuration::new(k1, xhat, 1.0).unwrap();
        let g = GreenTable::with_cutoff(3, 128).unwrap();
        let eq = equilibrium_measure(&g, cfg.k()).unwrap();
        let s = HittingSolver::new(&g, &eq, cfg.boundary_k()).unwrap();
        (cfg, g, s, eq)
    }

    #[test]
    fn hitting_kernel_is_harmonic_off_k() {
        let k1 = SiteSet::new([Point::origin(3), p(&[1, 0, 0]), p(&[0, 1, 0])]);
        let (cfg, g, s, _) = scene(k1, p(&[13, 0, 0]));
        let k = cfg.k();
        // unconditioned entrance probabilities h_x(y) = hit(y, x) P_y[return]
        let h = |y: &Point| -> Vec<f64> {
            if let Some(i) = s.boundary_k().index_of(y) {
                let mut v = vec![0.0; s.boundary_k().len()];
                v[i] = 1.0;
                v
            } else {
                let (row, ret) = s.hit_row(&g, y).unwrap();
                row.iter().map(|r| r * ret).collect()
            }
        };
        for y in [
            p(&[2, 0, 0]),
            p(&[1, 1, 0]),
            p(&[-3, 2, 1]),
            p(&[6, 0, 0]),
            p(&[20, 4, 1]),
        ] {
            assert!(!k.contains(&y));
            let hy = h(&y);
            let mut avg = vec![0.0; hy.len()];
            for z in y.neighbours() {
                for (a, b) in avg.iter_mut().zip(h(&z)) {
                    *a += b / 6.0;
                }
            }
            for (a, b) in hy.iter().zip(&avg) {
                assert!((a - b).abs() < 1e-12, "{y}");
            }
        }
    }

    #[test]
    fn hitting_rows_sum_to_one_and_density_normalizes() {
        let (cfg, g, s, _) = scene(SiteSet::singleton(Point::origin(3)), p(&[9, 0, 0]));
        for y in cfg.boundary_vr() {
            let hit = hitting_distribution(&cfg, &g, &s, y).unwrap();
            assert!((hit.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let dens = s.density_from_hit(&hit);
            let norm: f64 = dens.iter().zip(s.hbar()).map(|(a, b)| a * b).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // on the mid-plane the two singletons are hit equally often
        let mid = p(&[4, 2, 1]);
        let mirror = p(&[5, 2, 1]);
        let a = hitting_distribution(&cfg, &g, &s, &mid).unwrap();
        let b = hitting_distribution(&cfg, &g, &s, &mirror).unwrap();
        assert!((a[0] - b[1]).abs() < 1e-12 && (a[1] - b[0]).abs() < 1e-12);
        assert!(hitting_distribution(&cfg, &g, &s, &Point::origin(3)).is_err());
    }

    #[test]
    fn escape_table_and_regime() {
        let (cfg, g, s, _) = scene(SiteSet::singleton(Point::origin(3)), p(&[41, 0, 0]));
        let t = escape_table(&cfg, &g, &s);
        assert!(t.p().iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(t.regime_ok());
        assert_eq!(t.q(), t.p().iter().cloned().fold(1.0, f64::min));
        // reflection exchanging the balls preserves p
        for (y, &py) in t.boundary().iter().zip(t.p()) {
            let c = y.coords();
            let ry = p(&[41 - c[0], c[1], c[2]]);
            assert!((t.p_at(&ry).unwrap() - py).abs() < 1e-14);
        }
        let (cfg2, g2, s2, _) = scene(SiteSet::singleton(Point::origin(3)), p(&[81, 0, 0]));
        assert!(escape_table(&cfg2, &g2, &s2).q() >= t.q());
    }

    #[test]
    fn transition_density_errors_and_values() {
        let (cfg, g, s, _) = scene(SiteSet::singleton(Point::origin(3)), p(&[9, 0, 0]));
        let y = cfg.boundary_vr().sites()[0];
        let v = transition_density(&cfg, &g, &s, &y, &Point::origin(3)).unwrap();
        assert!((0.0..=2.0).contains(&v));
        assert!(transition_density(&cfg, &g, &s, &y, &p(&[1, 0, 0])).is_err());
    }

    #[test]
    fn exit_rows_cover_only_the_own_ball() {
        let (cfg, _, _, _) = scene(SiteSet::singleton(Point::origin(3)), p(&[9, 0, 0]));
        let row = exit_distribution(&cfg, &Point::origin(3)).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (y, &v) in cfg.boundary_vr().iter().zip(&row) {
            if v > 0.0 {
                assert!(y.norm_sq() < 36);
            }
        }
        assert!(exit_distribution(&cfg, &p(&[30, 0, 0])).is_err());
    }
}
