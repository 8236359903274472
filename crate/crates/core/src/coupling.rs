//! The coupling of the interlacement excursions with the noodle soup.
//!
//! One replica's randomness builds two point processes: `η^ℐ`, from which
//! the interlacement excursions are read, and `η^𝔐`, from which the noodle
//! soup is read. Both have the law of `η`, so each coordinate of the pair has
//! the law of its standalone builder, while the two share most of their marks.

use std::io::Write;
use std::sync::OnceLock;

use rand::Rng;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::excursions::{Excursion, Trace};
use crate::processes::{poisson, run_possibly_returning, run_uniform, NsSample, RiSample};
use crate::replicas::run_replicas;
use crate::rng::ReplicaStreams;
use crate::scene::Scene;
use crate::slt::{slt_init, slt_next, Density, SltState};
use crate::stats::{wilson, z_value};

/// Overlap mass below which a shift is treated as outside the window.
pub const SHIFT_WINDOW_TAIL: f64 = 1e-12;

fn ln_poisson_pmf(theta: f64, n: i64) -> f64 {
    if n < 0 {
        return f64::NEG_INFINITY;
    }
    let n = n as f64;
    n * theta.ln() - theta - ln_gamma(n + 1.0)
}

/// Exact `d_TV(Poisson(θ), k + Poisson(θ))`.
pub fn poisson_shift_tv(theta: f64, k: i64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if theta <= 0.0 {
        return 1.0;
    }
    let k = k.abs();
    let top = (theta + k as f64 + 40.0 * theta.sqrt() + 100.0).ceil() as i64;
    let mut pos = 0.0;
    let mut comp = 0.0;
    for n in 0..=top {
        let a = ln_poisson_pmf(theta, n).exp();
        let b = ln_poisson_pmf(theta, n - k).exp();
        if a > b {
            let y = (a - b) - comp;
            let t = pos + y;
            comp = (t - pos) - y;
            pos = t;
        }
    }
    let tv = pos.min(1.0);
    assert!(
        tv <= k as f64 / theta.sqrt() + 1e-12,
        "shift bound violated: tv = {tv}, theta = {theta}, k = {k}"
    );
    tv
}

#[derive(Clone, Debug)]
struct ShiftTable {
    /// Value of the first cell.
    offset: i64,
    common: f64,
    overlap: Vec<f64>,
    resid_y: Vec<f64>,
    resid_x: Vec<f64>,
}

/// Maximal couplings of `Ỹ_k ~ Poisson(λ)` with `k + X̃_k`, `X̃_k ~ Poisson(λ)`.
#[derive(Debug)]
pub struct PoissonShiftCoupler {
    lambda: f64,
    pmf: Vec<f64>,
    kmax: i64,
    tables: Vec<OnceLock<ShiftTable>>,
}

fn draw_weighted<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let mut r = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            last = i;
            if r < x {
                return i;
            }
            r -= x;
        }
    }
    last
}

impl PoissonShiftCoupler {
    pub fn new(lambda: f64) -> PoissonShiftCoupler {
        let lambda = lambda.max(0.0);
        let top = (lambda + 12.0 * lambda.sqrt() + 30.0).ceil() as usize;
        let mut pmf: Vec<f64> = (0..=top)
            .map(|n| {
                if lambda == 0.0 {
                    f64::from(n == 0)
                } else {
                    ln_poisson_pmf(lambda, n as i64).exp()
                }
            })
            .collect();
        let s: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|p| *p /= s);
        let overlap_at = |k: usize| -> f64 { (k..pmf.len()).map(|n| pmf[n].min(pmf[n - k])).sum() };
        let mut kmax = 0;
        while kmax < top && overlap_at(kmax + 1) >= SHIFT_WINDOW_TAIL {
            kmax += 1;
        }
        let kmax = kmax as i64;
        PoissonShiftCoupler {
            lambda,
            pmf,
            kmax,
            tables: (0..(2 * kmax + 1)).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest `|k|` with tabulated overlap.
    pub fn window(&self) -> i64 {
        self.kmax
    }

    fn p(&self, n: i64) -> f64 {
        if n < 0 || n as usize >= self.pmf.len() {
            0.0
        } else {
            self.pmf[n as usize]
        }
    }

    fn table(&self, k: i64) -> &ShiftTable {
        self.tables[(k + self.kmax) as usize].get_or_init(|| {
            let lo = k.min(0);
            let hi = self.pmf.len() as i64 + k.max(0);
            let mut overlap = Vec::with_capacity((hi - lo) as usize);
            let mut resid_y = Vec::with_capacity((hi - lo) as usize);
            let mut resid_x = Vec::with_capacity((hi - lo) as usize);
            for n in lo..hi {
                let a = self.p(n);
                let b = self.p(n - k);
                let o = a.min(b);
                overlap.push(o);
                resid_y.push(a - o);
                resid_x.push(b - o);
            }
            ShiftTable {
                offset: lo,
                common: overlap.iter().sum(),
                overlap,
                resid_y,
                resid_x,
            }
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        draw_weighted(&self.pmf, rng) as u64
    }

    /// Returns `(X̃_k, Ỹ_k)` with `P[Ỹ_k = k + X̃_k] = 1 - d_TV`.
    pub fn sample<R: Rng + ?Sized>(&self, k: i64, rng: &mut R) -> (u64, u64) {
        if self.lambda == 0.0 {
            return (0, 0);
        }
        if k.abs() > self.kmax {
            return (self.draw(rng), self.draw(rng));
        }
        let t = self.table(k);
        if rng.random::<f64>() < t.common {
            let n = draw_weighted(&t.overlap, rng) as i64 + t.offset;
            ((n - k) as u64, n as u64)
        } else {
            let y = draw_weighted(&t.resid_y, rng) as i64 + t.offset;
            let kx = draw_weighted(&t.resid_x, rng) as i64 + t.offset;
            ((kx - k) as u64, y as u64)
        }
    }
}

/// One draw of the maximally coupled pair `(X̃_k, Ỹ_k)` at parameter `θ`.
pub fn sample_shift_coupled<R: Rng + ?Sized>(theta: f64, k: i64, rng: &mut R) -> (u64, u64) {
    PoissonShiftCoupler::new(theta).sample(k, rng)
}

/// `Ψ(x) = (G' - G(x))_+ / Σ_z ē(z) (G' - G(z))_+`, or `Ψ ≡ 1` when the
/// denominator vanishes. Sites with `ē = 0` are ignored by the normalization.
pub fn psi_density(gi: &[f64], gp: f64, hbar: &[f64]) -> Vec<f64> {
    let pos: Vec<f64> = gi.iter().map(|&g| (gp - g).max(0.0)).collect();
    let active: Vec<usize> = (0..gi.len()).filter(|&x| hbar[x] > 0.0).collect();
    let denom: f64 = active.iter().map(|&x| hbar[x] * pos[x]).sum();
    if denom <= 0.0 {
        return vec![1.0; gi.len()];
    }
    if let Some(&x0) = active.first() {
        if active.iter().all(|&x| pos[x] == pos[x0]) {
            return vec![1.0; gi.len()];
        }
    }
    pos.iter().map(|p| p / denom).collect()
}

/// Given `y` drawn from the law with weights `a`, returns a draw from the law
/// with weights `b`, equal to `y` with the largest possible probability.
/// The second component is `true` when `y` was kept.
fn couple_site<R: Rng + ?Sized>(y: usize, a: &[f64], b: &[f64], rng: &mut R) -> (usize, bool) {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let pa = a[y] / sa;
    let pb = b[y] / sb;
    if pb >= pa || rng.random::<f64>() * pa < pb {
        return (y, true);
    }
    let resid: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, z)| (z / sb - x / sa).max(0.0))
        .collect();
    (draw_weighted(&resid, rng), false)
}

/// Multiset equality of excursions.
pub fn same_multiset(a: &[Excursion], b: &[Excursion]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut a: Vec<&Excursion> = a.iter().collect();
    let mut b: Vec<&Excursion> = b.iter().collect();
    a.sort_by_key(|e| e.key());
    b.sort_by_key(|e| e.key());
    a.iter().zip(&b).all(|(x, y)| x == y)
}

/// Where a replica falls in the partition of `Υ^c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FailureClass {
    /// `Υ` holds.
    None,
    /// `Υ^c ∩ D^c`.
    CountMismatch,
    /// `Υ^c ∩ D ∩ {N1 = 0}`.
    NoReturning,
    /// `Υ^c ∩ D ∩ {N1 ≥ 1, N22 = 0}`.
    NoCorrection,
    /// `Υ^c ∩ D ∩ {N1 ≥ 1, N22 ≥ 1}`.
    Remainder,
}

/// Full record of one coupled replica.
#[derive(Clone, Debug)]
pub struct CouplingRecord {
    pub master_seed: u64,
    pub replica_id: u64,
    pub n1: u64,
    /// `N'_1`.
    pub n1p: u64,
    pub n21: u64,
    /// `N'_{2,1}`.
    pub n21p: u64,
    pub n22: u64,
    /// `Θ_{N1}`.
    pub theta: u64,
    /// `Ξ_{2,2}`.
    pub xi22: f64,
    pub d: bool,
    pub upsilon: bool,
    pub ri: RiSample,
    pub ns: NsSample,
    /// `max_x |Ψ(x) - 1|` over sites of positive harmonic mass.
    pub psi_sup_dev: f64,
}

impl CouplingRecord {
    pub fn class(&self) -> FailureClass {
        if self.upsilon {
            FailureClass::None
        } else if !self.d {
            FailureClass::CountMismatch
        } else if self.n1 == 0 {
            FailureClass::NoReturning
        } else if self.n22 == 0 {
            FailureClass::NoCorrection
        } else {
            FailureClass::Remainder
        }
    }

    /// Lean per-replica summary.
    pub fn row(&self, k_len: usize) -> CouplingRow {
        CouplingRow {
            master_seed: self.master_seed,
            replica_id: self.replica_id,
            n1: self.n1,
            n1p: self.n1p,
            n21: self.n21,
            n21p: self.n21p,
            n22: self.n22,
            theta: self.theta,
            xi22: self.xi22,
            d: self.d,
            upsilon: self.upsilon,
            psi_sup_dev: self.psi_sup_dev,
            class: self.class(),
            ri_trace: self.ri.trace(k_len),
            ns_trace: self.ns.trace(k_len),
        }
    }
}

/// The per-replica CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingRow {
    pub master_seed: u64,
    pub replica_id: u64,
    pub n1: u64,
    pub n1p: u64,
    pub n21: u64,
    pub n21p: u64,
    pub n22: u64,
    pub theta: u64,
    pub xi22: f64,
    pub d: bool,
    pub upsilon: bool,
    pub psi_sup_dev: f64,
    pub class: FailureClass,
    pub ri_trace: Trace,
    pub ns_trace: Trace,
}

impl CouplingRow {
    /// Values in the order of `COUPLING_CSV_COLUMNS`.
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.master_seed.to_string(),
            self.replica_id.to_string(),
            self.n1.to_string(),
            self.n1p.to_string(),
            self.n21.to_string(),
            self.n21p.to_string(),
            self.n22.to_string(),
            self.theta.to_string(),
            self.xi22.to_string(),
            u8::from(self.d).to_string(),
            u8::from(self.upsilon).to_string(),
            self.psi_sup_dev.to_string(),
            self.ri_trace.to_string(),
            self.ns_trace.to_string(),
        ]
    }
}

pub const COUPLING_CSV_COLUMNS: [&str; 14] = [
    "seed",
    "replica",
    "N1",
    "N1p",
    "N21",
    "N21p",
    "N22",
    "Theta",
    "Xi22",
    "D",
    "Upsilon",
    "psi_sup_dev",
    "ri_trace",
    "ns_trace",
];

/// Writes per-replica rows as CSV. Traces are bit strings, site 0 first.
pub fn write_coupling_csv<W: Write>(w: W, rows: &[CouplingRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(COUPLING_CSV_COLUMNS)?;
    for r in rows {
        wr.write_record(r.fields())?;
    }
    wr.flush()?;
    Ok(())
}

/// Precomputed per-scene data for the coupling.
#[derive(Debug)]
pub struct CouplingPlan<'a> {
    scene: &'a Scene,
    mean_theta: f64,
    shift: PoissonShiftCoupler,
}

impl<'a> CouplingPlan<'a> {
    pub fn new(scene: &'a Scene) -> Result<CouplingPlan<'a>> {
        let q = scene.q().min(1.0);
        Ok(CouplingPlan {
            scene,
            mean_theta: scene.mean_theta()?,
            shift: PoissonShiftCoupler::new(q * scene.theta() / 2.0),
        })
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    /// Builds one coupled pair from the streams of replica `replica_id`.
    pub fn build(&self, master_seed: u64, replica_id: u64) -> Result<CouplingRecord> {
        let mut streams = ReplicaStreams::new(master_seed, replica_id);
        let mut rec = self.build_from(&mut streams)?;
        rec.master_seed = master_seed;
        rec.replica_id = replica_id;
        Ok(rec)
    }

    /// Builds one coupled pair from the given streams.
    pub fn build_from(&self, streams: &mut ReplicaStreams) -> Result<CouplingRecord> {
        let scene = self.scene;
        scene.warn_if_out_of_regime();
        let hbar = scene.hbar();
        let n = scene.n_bk();
        let q = scene.q().min(1.0);
        let theta_u = scene.theta();

        let n1 = poisson((1.0 - q) * theta_u, &mut streams.counts);
        let n1p = poisson(self.mean_theta, &mut streams.counts);
        let n22 = poisson(q * theta_u / 2.0, &mut streams.counts);

        // η^ℐ: possibly returning part, count coupling, then N21 + N22 steps
        let mut state = slt_init(scene, streams.clocks.clone());
        let t =
            run_possibly_returning(scene, &mut state, n1, &mut streams.zeta, &mut streams.paths)?;
        let theta: u64 = t.iter().sum();
        let k = theta as i64 - n1p as i64;
        let (n21, n21p) = self.shift.sample(k, &mut streams.shift);
        run_uniform(scene, &mut state, n21, &mut streams.paths)?;
        let nb = state.step();
        let base = state.g();
        run_uniform(scene, &mut state, n22, &mut streams.paths)?;
        let xi22: f64 = state.marks()[nb..]
            .iter()
            .map(|m| m.xi)
            .fold(0.0, |a, b| a + b);
        streams.clocks = state.clock_stream().clone();
        let g_final = state.g();

        // first resampling: Y_j on the curves G_{nb+1}, ..., G_{nb+N22}
        let ys: Vec<Excursion> = (0..n22)
            .map(|_| scene.harmonic_excursion(&mut streams.resample))
            .collect();
        let overwrite: Vec<(usize, f64, Excursion)> = ys
            .iter()
            .enumerate()
            .map(|(j, y)| {
                let s = y.start_index();
                (s, state.curve(nb + j + 1)[s], y.clone())
            })
            .collect();
        if !overwrite.is_empty() {
            state.resample_overwrite(nb + 1, overwrite)?;
        }
        let ri_marks = state.into_marks();
        let below: Vec<(usize, f64, Option<Excursion>)> = ri_marks[..nb]
            .iter()
            .map(|m| (m.site, m.level, Some(m.excursion.clone())))
            .collect();
        let ri_exc: Vec<Excursion> = ri_marks.into_iter().map(|m| m.excursion).collect();

        // G', Ψ and the coupled Y'
        let active = scene.active_sites();
        let bmin = active
            .iter()
            .map(|&x| base[x])
            .fold(f64::INFINITY, f64::min);
        let bmin = if bmin.is_finite() { bmin } else { 0.0 };
        let gp = bmin + xi22;
        let psi = psi_density(&base, gp, hbar);
        let psi_sup_dev = active
            .iter()
            .map(|&x| (psi[x] - 1.0).abs())
            .fold(0.0, f64::max);
        let w_psi: Vec<f64> = (0..n).map(|x| hbar[x] * psi[x]).collect();
        let mut w_top: Vec<f64> = (0..n)
            .map(|x| if gp > base[x] { hbar[x] } else { 0.0 })
            .collect();
        if w_top.iter().all(|&w| w <= 0.0) {
            w_top = hbar.to_vec();
        }
        let mut explicit = below;
        let ys_start = ri_exc.len() - n22 as usize;
        for (j, y) in ri_exc[ys_start..].iter().enumerate() {
            let top = j + 1 == n22 as usize;
            let target = if top { &w_top } else { &w_psi };
            let (s, kept) = couple_site(y.start_index(), hbar, target, &mut streams.resample);
            let exc = if kept {
                y.clone()
            } else {
                scene.excursion_from(s, &mut streams.resample)
            };
            let level = if top {
                gp
            } else {
                let u: f64 = streams.resample.random();
                if psi[s] > 0.0 {
                    base[s] + u * (gp - base[s])
                } else {
                    base[s] + u
                }
            };
            explicit.push((s, level, Some(exc)));
        }

        // η^𝔐: kept and resampled marks, then a fresh copy above G' ∨ G
        let floor: Vec<f64> = base.iter().map(|&b| b.max(gp)).collect();
        let mut ns_state = SltState::with_marks(hbar, explicit, &floor, streams.glue.clone());
        let n_prime = n1p + n21p + n22;
        for _ in 0..n_prime {
            slt_next(
                &mut ns_state,
                scene,
                Density::Uniform,
                &mut streams.glue_paths,
            )?;
        }
        streams.glue = ns_state.clock_stream().clone();
        let ns_exc: Vec<Excursion> = ns_state
            .into_marks()
            .into_iter()
            .map(|m| m.excursion)
            .collect();

        let d = theta + n21 == n1p + n21p;
        let upsilon = same_multiset(&ri_exc, &ns_exc);
        let ri = RiSample {
            n1,
            theta,
            n2: n21 + n22,
            ntot: theta + n21 + n22,
            zeta_used: theta,
            t,
            excursions: ri_exc,
            g_final,
        };
        debug_assert!(ri.check().is_ok());
        Ok(CouplingRecord {
            master_seed: 0,
            replica_id: 0,
            n1,
            n1p,
            n21,
            n21p,
            n22,
            theta,
            xi22,
            d,
            upsilon,
            ri,
            ns: NsSample {
                n_prime,
                excursions: ns_exc,
            },
            psi_sup_dev,
        })
    }
}

/// One coupled pair from the given streams.
pub fn build_coupled_pair(scene: &Scene, streams: &mut ReplicaStreams) -> Result<CouplingRecord> {
    CouplingPlan::new(scene)?.build_from(streams)
}

/// Counts of `Υ^c` and of its partition, over a batch of replicas.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CouplingEstimate {
    pub replicas: u64,
    pub failures: u64,
    pub phat: f64,
    /// Wilson 95% interval for `P[Υ^c]`.
    pub ci: (f64, f64),
    /// Replicas with `D^c`.
    pub d_failures: u64,
    /// `Υ^c ∩ D^c`.
    pub count_mismatch: u64,
    /// `Υ^c ∩ D ∩ {N1 = 0}`.
    pub no_returning: u64,
    /// `Υ^c ∩ D ∩ {N1 ≥ 1, N22 = 0}`.
    pub no_correction: u64,
    /// `Υ^c ∩ D ∩ {N1 ≥ 1, N22 ≥ 1}`.
    pub remainder: u64,
    /// Replicas with `D ∩ {N1 = 0}`.
    pub d_no_returning: u64,
    pub psi_sup_dev_median: f64,
}

impl CouplingEstimate {
    pub fn from_rows(rows: &[CouplingRow]) -> CouplingEstimate {
        let mut e = CouplingEstimate {
            replicas: rows.len() as u64,
            ..Default::default()
        };
        for r in rows {
            if !r.d {
                e.d_failures += 1;
            }
            if r.d && r.n1 == 0 {
                e.d_no_returning += 1;
            }
            match r.class {
                FailureClass::None => {}
                FailureClass::CountMismatch => e.count_mismatch += 1,
                FailureClass::NoReturning => e.no_returning += 1,
                FailureClass::NoCorrection => e.no_correction += 1,
                FailureClass::Remainder => e.remainder += 1,
            }
        }
        e.failures = e.count_mismatch + e.no_returning + e.no_correction + e.remainder;
        e.phat = if e.replicas == 0 {
            0.0
        } else {
            e.failures as f64 / e.replicas as f64
        };
        e.ci = wilson(e.failures, e.replicas, 0.95);
        let mut dev: Vec<f64> = rows.iter().map(|r| r.psi_sup_dev).collect();
        dev.sort_by(f64::total_cmp);
        e.psi_sup_dev_median = if dev.is_empty() {
            0.0
        } else {
            dev[dev.len() / 2]
        };
        e
    }

    /// Normal-approximation standard error of `phat`.
    pub fn se(&self) -> f64 {
        if self.replicas == 0 {
            return 0.0;
        }
        (self.phat * (1.0 - self.phat) / self.replicas as f64).sqrt()
    }

    /// Half-width of the two-sided normal interval at `level`.
    pub fn half_width(&self, level: f64) -> f64 {
        z_value(level) * self.se()
    }
}

/// Runs `replicas` coupled pairs (ids `0..replicas`) and returns their rows.
pub fn coupling_rows(
    scene: &Scene,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<Vec<CouplingRow>> {
    let plan = CouplingPlan::new(scene)?;
    let k_len = scene.cfg().k().len();
    run_replicas(replicas, threads, |id| {
        Ok(plan.build(master_seed, id)?.row(k_len))
    })
}

/// Empirical `P[Υ^c]` with its Wilson interval and the partition counts.
pub fn estimate_coupling_failure(
    scene: &Scene,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<CouplingEstimate> {
    if replicas == 0 {
        return Err(Error::InvalidArgument(
            "at least one replica is required".into(),
        ));
    }
    Ok(CouplingEstimate::from_rows(&coupling_rows(
        scene,
        replicas,
        master_seed,
        threads,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Configuration, Point, SiteSet};
    use crate::rng::{seed_derive, Purpose};

    fn scene(l: i32, u: f64) -> Scene {
        let cfg = Configuration::new(
            SiteSet::singleton(Point::origin(3)),
            Point::new(&[l, 0, 0]),
            u,
        )
        .unwrap();
        Scene::build(cfg).unwrap()
    }

    #[test]
    fn shift_tv_values() {
        assert_eq!(poisson_shift_tv(4.0, 0), 0.0);
        assert!((poisson_shift_tv(1.0, 1) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(poisson_shift_tv(25.0, 3), poisson_shift_tv(25.0, -3));
        assert!(poisson_shift_tv(25.0, 3) <= 0.6);
        assert_eq!(poisson_shift_tv(0.0, 2), 1.0);
        for theta in [1.0, 4.0, 25.0] {
            let mut prev = 0.0;
            for k in 0..=5 {
                let tv = poisson_shift_tv(theta, k);
                assert!(tv >= prev && tv <= k as f64 / f64::sqrt(theta) + 1e-12);
                prev = tv;
            }
        }
    }

    #[test]
    fn shift_coupler_is_maximal_with_exact_marginals() {
        let lambda = 3.0;
        let c = PoissonShiftCoupler::new(lambda);
        assert!(c.window() > 10);
        let mut rng = seed_derive(1, 0, Purpose::Shift);
        let n = 200_000;
        for k in [0i64, 1, -2, 4] {
            let (mut sx, mut sy, mut neq) = (0.0, 0.0, 0u64);
            for _ in 0..n {
                let (x, y) = c.sample(k, &mut rng);
                sx += x as f64;
                sy += y as f64;
                if y as i64 != k + x as i64 {
                    neq += 1;
                }
            }
            let se = (lambda / n as f64).sqrt();
            assert!((sx / n as f64 - lambda).abs() < 4.0 * se, "k = {k}");
            assert!((sy / n as f64 - lambda).abs() < 4.0 * se, "k = {k}");
            let tv = poisson_shift_tv(lambda, k);
            let f = neq as f64 / n as f64;
            assert!(
                (f - tv).abs() < 4.0 * (tv * (1.0 - tv) / n as f64).sqrt() + 1e-12,
                "k = {k}: {f} vs {tv}"
            );
        }
        assert_eq!(PoissonShiftCoupler::new(0.0).sample(3, &mut rng), (0, 0));
    }

    #[test]
    fn psi_examples() {
        let hbar = [0.25, 0.25, 0.5];
        assert_eq!(psi_density(&[2.0, 2.0, 2.0], 3.0, &hbar), vec![1.0; 3]);
        let psi = psi_density(&[1.0, 2.0, 4.0], 3.0, &hbar);
        assert_eq!(psi[2], 0.0);
        let total: f64 = psi.iter().zip(&hbar).map(|(p, h)| p * h).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(psi_density(&[5.0, 5.0, 5.0], 5.0, &hbar), vec![1.0; 3]);
        assert_eq!(
            psi_density(&[1.0, 9.0, 5.0], 3.0, &[0.0, 0.5, 0.5]),
            vec![1.0; 3]
        );
    }

    #[test]
    fn record_invariants_hold() {
        let s = scene(9, 2.0);
        let plan = CouplingPlan::new(&s).unwrap();
        let mut seen_n1_zero_d = 0;
        for id in 0..400 {
            let r = plan.build(17, id).unwrap();
            r.ri.check().unwrap();
            assert_eq!(r.ri.ntot, r.theta + r.n21 + r.n22);
            assert_eq!(r.ns.excursions.len() as u64, r.n1p + r.n21p + r.n22);
            assert_eq!(r.d, r.theta + r.n21 == r.n1p + r.n21p);
            if r.upsilon {
                assert!(same_multiset(&r.ri.excursions, &r.ns.excursions));
            }
            if r.d && r.n1 == 0 {
                seen_n1_zero_d += 1;
                assert!(r.upsilon, "replica {id}");
                assert_eq!(r.psi_sup_dev, 0.0);
            }
        }
        assert!(seen_n1_zero_d > 0);
    }

    #[test]
    fn zero_level_always_succeeds() {
        let s = scene(9, 0.0);
        let e = estimate_coupling_failure(&s, 50, 3, 2).unwrap();
        assert_eq!(e.failures, 0);
        assert_eq!(e.phat, 0.0);
        assert_eq!(e.replicas, 50);
    }

    #[test]
    fn partition_sums_and_determinism() {
        let s = scene(9, 1.0);
        let a = coupling_rows(&s, 300, 5, 1).unwrap();
        let b = coupling_rows(&s, 300, 5, 3).unwrap();
        assert_eq!(a, b);
        let e = CouplingEstimate::from_rows(&a);
        let direct = a.iter().filter(|r| !r.upsilon).count() as u64;
        assert_eq!(e.failures, direct);
        assert_eq!(e.no_returning, 0);
        let mut buf = Vec::new();
        write_coupling_csv(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 301);
        assert!(text.starts_with("seed,replica,N1,"));
    }
}
