//! A configuration together with all of its potential-theoretic tables.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Point};
use crate::potential::{
    condenser_capacity, equilibrium_measure, escape_table, EquilibriumData, EscapeTable,
    GreenTable, HittingSolver,
};

/// Numerical and diagnostic options for building a [`Scene`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneOptions {
    /// Gauss–Legendre nodes per quadrature panel of the Green's function.
    pub quadrature_order: usize,
    /// Exact range of the Green table; by default large enough for every
    /// displacement the scene needs.
    pub green_cutoff: Option<u32>,
    /// Diagnostic mode: every escape probability is one, so no trajectory
    /// ever returns.
    pub force_escape: bool,
    /// Keep only the visited sites and a path fingerprint of excursions.
    pub memory_lean: bool,
}

impl Default for SceneOptions {
    fn default() -> SceneOptions {
        SceneOptions {
            quadrature_order: 20,
            green_cutoff: None,
            force_escape: false,
            memory_lean: false,
        }
    }
}

/// Conditional entrance law from one exit site, with its SLT density.
#[derive(Clone, Debug)]
pub struct HitRow {
    /// `P_y[X_{τ_K} = x | τ_K < ∞]` over `∂K`.
    pub hit: Vec<f64>,
    /// `g(y, x) = hit(y, x) / ē_K(x)` over `∂K`.
    pub density: Vec<f64>,
    cdf: Vec<f64>,
}

impl HitRow {
    fn new(hit: Vec<f64>, density: Vec<f64>) -> HitRow {
        let mut acc = 0.0;
        let cdf = hit
            .iter()
            .map(|h| {
                acc += h;
                acc
            })
            .collect();
        HitRow { hit, density, cdf }
    }

    /// Draws an entrance site (index into `∂K`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= u);
        let mut i = i.min(self.cdf.len() - 1);
        while self.hit[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}

/// Everything the samplers need about one configuration. Immutable apart
/// from lazily filled caches, and shareable across threads.
pub struct Scene {
    cfg: Configuration,
    opts: SceneOptions,
    green: GreenTable,
    eq: EquilibriumData,
    solver: HittingSolver,
    escape: EscapeTable,
    hbar_bk: Vec<f64>,
    active: Vec<usize>,
    alias: WeightedAliasIndex<f64>,
    hit_cache: Vec<OnceLock<HitRow>>,
    mean_total: OnceLock<f64>,
    warned: AtomicBool,
}

impl std::fmt::Debug for Scene {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scene")
            .field("xhat", &self.cfg.xhat())
            .field("k1", self.cfg.k1())
            .field("u", &self.cfg.u())
            .field("cap", &self.eq.cap())
            .field("q", &self.escape.q())
            .finish()
    }
}

impl Scene {
    pub fn new(cfg: Configuration, opts: SceneOptions) -> Result<Scene> {
        let reach = cfg
            .boundary_vr()
            .iter()
            .chain(cfg.k().iter())
            .map(Point::max_abs)
            .max()
            .unwrap_or(0);
        let cutoff = opts.green_cutoff.unwrap_or(2 * reach + 2).max(16);
        let green = GreenTable::new(cfg.dim(), cutoff, opts.quadrature_order)?;
        let eq = equilibrium_measure(&green, cfg.k())?;
        let solver = HittingSolver::new(&green, &eq, cfg.boundary_k())?;
        let escape = if opts.force_escape {
            EscapeTable::forced_escape(cfg.boundary_vr().clone())
        } else {
            escape_table(&cfg, &green, &solver)
        };
        let hbar_bk = solver.hbar().to_vec();
        let active: Vec<usize> = (0..hbar_bk.len()).filter(|&i| hbar_bk[i] > 0.0).collect();
        let alias = WeightedAliasIndex::new(active.iter().map(|&i| hbar_bk[i]).collect())
            .map_err(|e| Error::InvalidArgument(format!("harmonic measure: {e}")))?;
        let hit_cache = (0..cfg.boundary_vr().len())
            .map(|_| OnceLock::new())
            .collect();
        Ok(Scene {
            cfg,
            opts,
            green,
            eq,
            solver,
            escape,
            hbar_bk,
            active,
            alias,
            hit_cache,
            mean_total: OnceLock::new(),
            warned: AtomicBool::new(false),
        })
    }

    /// Scene with default options.
    pub fn build(cfg: Configuration) -> Result<Scene> {
        Scene::new(cfg, SceneOptions::default())
    }

    pub fn cfg(&self) -> &Configuration {
        &self.cfg
    }
    pub fn options(&self) -> &SceneOptions {
        &self.opts
    }
    pub fn green(&self) -> &GreenTable {
        &self.green
    }
    pub fn equilibrium(&self) -> &EquilibriumData {
        &self.eq
    }
    pub fn hitting_solver(&self) -> &HittingSolver {
        &self.solver
    }
    pub fn escape(&self) -> &EscapeTable {
        &self.escape
    }
    pub fn u(&self) -> f64 {
        self.cfg.u()
    }
    /// `cap(K)`.
    pub fn cap(&self) -> f64 {
        self.eq.cap()
    }
    /// `u · cap(K)`.
    pub fn theta(&self) -> f64 {
        self.cfg.u() * self.eq.cap()
    }
    pub fn q(&self) -> f64 {
        self.escape.q()
    }
    /// Harmonic measure over `∂K`.
    pub fn hbar(&self) -> &[f64] {
        &self.hbar_bk
    }
    /// Indices of `∂K` carrying positive harmonic measure.
    pub fn active_sites(&self) -> &[usize] {
        &self.active
    }
    /// `|∂K|`.
    pub fn n_bk(&self) -> usize {
        self.hbar_bk.len()
    }

    /// Escape probability at the `j`-th site of `∂_e V_R`.
    #[inline]
    pub fn p_exit(&self, j: usize) -> f64 {
        self.escape.p()[j]
    }

    /// Entrance law and density from the `j`-th site of `∂_e V_R`.
    pub fn hit_row(&self, j: usize) -> Result<&HitRow> {
        let cell = &self.hit_cache[j];
        if let Some(r) = cell.get() {
            return Ok(r);
        }
        let y = self.cfg.boundary_vr().sites()[j];
        let (hit, _) = self.solver.hit_row(&self.green, &y)?;
        let density = self.solver.density_from_hit(&hit);
        let _ = cell.set(HitRow::new(hit, density));
        Ok(cell.get().expect("just set"))
    }

    /// Draws a start site (index into `∂K`) from the harmonic measure.
    #[inline]
    pub fn sample_harmonic_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.active[self.alias.sample(rng)]
    }

    /// `E[𝒩]`: the mean number of excursions of the interlacement between
    /// `∂K` and `∂_e V_R`, equal to `u` times the capacity of `K` relative to
    /// `V_R` (one Dirichlet solve on a ball).
    pub fn mean_total_excursions(&self) -> Result<f64> {
        if let Some(v) = self.mean_total.get() {
            return Ok(*v);
        }
        let v = if self.opts.force_escape {
            self.theta()
        } else {
            self.u() * condenser_capacity(&self.cfg)?
        };
        let _ = self.mean_total.set(v);
        Ok(v)
    }

    /// `E[Θ_{N1}] = E[𝒩] - q u cap(K)`.
    pub fn mean_theta(&self) -> Result<f64> {
        Ok((self.mean_total_excursions()? - self.q() * self.theta()).max(0.0))
    }

    /// Prints a one-time warning when `q < 1/2`. The constructions stay
    /// well defined there, but the decoupling bounds do not apply.
    pub fn warn_if_out_of_regime(&self) {
        if !self.escape.regime_ok() && !self.warned.swap(true, Ordering::Relaxed) {
            eprintln!(
                "warning: q = {:.4} < 1/2 at |xhat| = {:.3}; outside the regime of the bounds",
                self.q(),
                self.cfg.xhat().norm()
            );
        }
    }

    /// The same scene at another level `u`; tables are copied, not rebuilt.
    pub fn with_level(&self, u: f64) -> Result<Scene> {
        let cfg = self.cfg.with_level(u)?;
        let mean_total = OnceLock::new();
        if let Some(v) = self.mean_total.get() {
            if self.u() > 0.0 {
                let _ = mean_total.set(v / self.u() * u);
            }
        }
        Ok(Scene {
            cfg,
            opts: self.opts.clone(),
            green: self.green.clone(),
            eq: self.eq.clone(),
            solver: self.solver.clone(),
            escape: self.escape.clone(),
            hbar_bk: self.hbar_bk.clone(),
            active: self.active.clone(),
            alias: self.alias.clone(),
            hit_cache: self.hit_cache.clone(),
            mean_total,
            warned: AtomicBool::new(false),
        })
    }
}
