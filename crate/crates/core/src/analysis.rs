//! Estimators and experiment drivers: trace laws, total variation,
//! covariances, exact lemma checks and scaling fits.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::coupling::{coupling_rows, poisson_shift_tv, CouplingEstimate};
use crate::error::{Error, Result};
use crate::excursions::{direct_trajectory, Excursion, StopRule, Trace};
use crate::potential::equilibrium_measure;
use crate::processes::{build_ns, build_ri, build_ri_direct, poisson};
use crate::replicas::run_replicas;
use crate::rng::{seed_derive, Purpose, ReplicaStreams, ESTIMATOR_REPLICA};
use crate::scene::Scene;
use crate::stats::{
    chi_square_two_sample, fit_line, fit_line_ols, mean_se, z_value, ChiSquare, LineFit,
};

/// Largest set for which exact trace histograms are kept.
pub const MAX_HISTOGRAM_SITES: usize = 20;

/// Number of bootstrap resamples behind total variation intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Counts of traces over the `2^n` subsets of an `n`-site set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceHistogram {
    sites: usize,
    counts: Vec<u64>,
    total: u64,
}

impl TraceHistogram {
    pub fn new(sites: usize) -> Result<TraceHistogram> {
        if sites > MAX_HISTOGRAM_SITES {
            return Err(Error::TooManySites(sites));
        }
        Ok(TraceHistogram {
            sites,
            counts: vec![0; 1 << sites],
            total: 0,
        })
    }

    pub fn from_traces<'a, I: IntoIterator<Item = &'a Trace>>(
        sites: usize,
        traces: I,
    ) -> Result<TraceHistogram> {
        let mut h = TraceHistogram::new(sites)?;
        for t in traces {
            h.add(t)?;
        }
        Ok(h)
    }

    /// Histogram from raw counts; the length must be a power of two.
    pub fn from_counts(counts: Vec<u64>) -> Result<TraceHistogram> {
        if !counts.len().is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "{} cells is not a power of two",
                counts.len()
            )));
        }
        let sites = counts.len().trailing_zeros() as usize;
        if sites > MAX_HISTOGRAM_SITES {
            return Err(Error::TooManySites(sites));
        }
        let total = counts.iter().sum();
        Ok(TraceHistogram {
            sites,
            counts,
            total,
        })
    }

    pub fn add(&mut self, t: &Trace) -> Result<()> {
        if t.universe() != self.sites {
            return Err(Error::DimensionMismatch {
                expected: self.sites,
                found: t.universe(),
            });
        }
        self.add_mask(t.mask().expect("at most 20 sites") as usize);
        Ok(())
    }

    pub fn add_mask(&mut self, mask: usize) {
        self.counts[mask] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &TraceHistogram) -> Result<()> {
        if other.sites != self.sites {
            return Err(Error::DimensionMismatch {
                expected: self.sites,
                found: other.sites,
            });
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        self.total += other.total;
        Ok(())
    }

    pub fn sites(&self) -> usize {
        self.sites
    }
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn probabilities(&self) -> Result<Vec<f64>> {
        if self.total == 0 {
            return Err(Error::ZeroTotal);
        }
        Ok(self
            .counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect())
    }

    /// Multinomial resample of the same total.
    fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        let mut left = self.total;
        let mut mass = self.total;
        let mut out = vec![0; self.counts.len()];
        for (o, &c) in out.iter_mut().zip(&self.counts) {
            if left == 0 || mass == 0 {
                break;
            }
            if c > 0 {
                let p = (c as f64 / mass as f64).min(1.0);
                let k = Binomial::new(left, p).expect("valid binomial").sample(rng);
                *o = k;
                left -= k;
                mass -= c;
            }
        }
        out
    }
}

fn half_l1(a: &[u64], na: u64, b: &[u64], nb: u64) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
        .sum::<f64>()
}

/// Empirical total variation with a bootstrap interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvEstimate {
    pub tv: f64,
    /// Percentile 95% bootstrap interval.
    pub ci: (f64, f64),
    /// Bootstrap standard deviation.
    pub sd: f64,
}

/// Half-L1 distance between the normalized histograms, with a bootstrap
/// interval from `BOOTSTRAP_RESAMPLES` multinomial resamples of both.
pub fn tv_empirical<R: Rng + ?Sized>(
    h1: &TraceHistogram,
    h2: &TraceHistogram,
    rng: &mut R,
) -> Result<TvEstimate> {
    if h1.sites != h2.sites {
        return Err(Error::DimensionMismatch {
            expected: h1.sites,
            found: h2.sites,
        });
    }
    if h1.total == 0 || h2.total == 0 {
        return Err(Error::ZeroTotal);
    }
    let tv = half_l1(&h1.counts, h1.total, &h2.counts, h2.total);
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let a = h1.resample(rng);
            let b = h2.resample(rng);
            half_l1(&a, h1.total, &b, h2.total)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let (_, se) = mean_se(&boot);
    let sd = se * (boot.len() as f64).sqrt();
    let lo = boot[(0.025 * boot.len() as f64) as usize];
    let hi = boot[((0.975 * boot.len() as f64) as usize).min(boot.len() - 1)];
    Ok(TvEstimate {
        tv,
        ci: (lo, hi),
        sd,
    })
}

/// Histograms of the traces of standalone interlacement and noodle soup
/// samples, replica `i` using the streams of id `i`.
pub fn standalone_histograms(
    scene: &Scene,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<(TraceHistogram, TraceHistogram)> {
    let k = scene.cfg().k().len();
    if k > MAX_HISTOGRAM_SITES {
        return Err(Error::TooManySites(k));
    }
    let masks = run_replicas(replicas, threads, |id| {
        let mut st = ReplicaStreams::new(master_seed, id);
        let ri = build_ri(scene, &mut st)?;
        let ns = build_ns(scene, &mut st)?;
        Ok((
            ri.trace(k).mask().unwrap() as usize,
            ns.trace(k).mask().unwrap() as usize,
        ))
    })?;
    let mut hr = TraceHistogram::new(k)?;
    let mut hn = TraceHistogram::new(k)?;
    for (a, b) in masks {
        hr.add_mask(a);
        hn.add_mask(b);
    }
    Ok((hr, hn))
}

/// Total variation between the trace laws against the coupling failure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceTvReport {
    pub replicas: u64,
    pub tv: TvEstimate,
    pub coupling: CouplingEstimate,
    /// `3 sqrt(sd_tv^2 + se_phat^2)`.
    pub margin: f64,
    /// `tv <= phat + margin`.
    pub holds: bool,
    pub ri: TraceHistogram,
    pub ns: TraceHistogram,
}

/// Estimates `d_TV` between the trace laws from independent standalone runs
/// (replica ids `0..n`) and `P[Υ^c]` from coupled runs (ids `n..2n`).
pub fn trace_tv_experiment(
    scene: &Scene,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<TraceTvReport> {
    let (ri, ns) = standalone_histograms(scene, replicas, master_seed, threads)?;
    let mut boot = seed_derive(master_seed, ESTIMATOR_REPLICA, Purpose::Bootstrap);
    let tv = tv_empirical(&ri, &ns, &mut boot)?;
    let rows = coupling_rows_from(scene, replicas, replicas, master_seed, threads)?;
    let coupling = CouplingEstimate::from_rows(&rows);
    let margin = 3.0 * (tv.sd * tv.sd + coupling.se() * coupling.se()).sqrt();
    Ok(TraceTvReport {
        replicas,
        holds: tv.tv <= coupling.phat + margin,
        tv,
        coupling,
        margin,
        ri,
        ns,
    })
}

fn coupling_rows_from(
    scene: &Scene,
    first: u64,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<Vec<crate::coupling::CouplingRow>> {
    let plan = crate::coupling::CouplingPlan::new(scene)?;
    let k = scene.cfg().k().len();
    run_replicas(replicas, threads, |i| {
        Ok(plan.build(master_seed, first + i)?.row(k))
    })
}

/// Positions of the sites of `part` in the enumeration of `K`.
fn positions(scene: &Scene, part: &crate::lattice::SiteSet) -> Vec<usize> {
    part.iter()
        .map(|p| scene.cfg().k().index_of(p).expect("part of K"))
        .collect()
}

/// Covariance of `f1(trace ∩ K1)` and `f2(trace ∩ K2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovEstimate {
    pub cov: f64,
    pub se: f64,
    /// Normal 95% interval.
    pub ci: (f64, f64),
    /// `sqrt(u) cap(K1)^{3/2} / dist^{d-2}`, the new bound without constant.
    pub shape_new: f64,
    /// `u cap(K1)^2 / dist^{d-2}`, the older bound without constant.
    pub shape_old: f64,
}

/// Extracts the sub-trace masks on `K1` and `K2` from a trace mask over `K`.
fn split_mask(mask: usize, i1: &[usize], i2: &[usize]) -> (usize, usize) {
    let pick = |idx: &[usize]| {
        idx.iter()
            .enumerate()
            .fold(0usize, |acc, (b, &i)| acc | (((mask >> i) & 1) << b))
    };
    (pick(i1), pick(i2))
}

fn bound_shapes(scene: &Scene) -> Result<(f64, f64)> {
    let cfg = scene.cfg();
    let cap1 = equilibrium_measure(scene.green(), cfg.k1())?.cap();
    let dist = crate::lattice::set_distance(cfg.k1(), cfg.k2())?;
    let dd = dist.powi(cfg.dim() as i32 - 2);
    let u = scene.u();
    Ok((u.sqrt() * cap1.powf(1.5) / dd, u * cap1 * cap1 / dd))
}

/// Covariance from a histogram of traces over `K`. Truth tables are indexed
/// by the sub-trace mask, bit `i` for the `i`-th site of `K1` (resp. `K2`).
pub fn covariance_from_histogram(
    scene: &Scene,
    h: &TraceHistogram,
    f1: &[f64],
    f2: &[f64],
) -> Result<CovEstimate> {
    let cfg = scene.cfg();
    let (n1, n2) = (cfg.k1().len(), cfg.k2().len());
    if f1.len() != 1 << n1 {
        return Err(Error::TruthTableSize {
            found: f1.len(),
            sites: n1,
        });
    }
    if f2.len() != 1 << n2 {
        return Err(Error::TruthTableSize {
            found: f2.len(),
            sites: n2,
        });
    }
    if f1.iter().chain(f2).any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument(
            "truth table values must lie in [0, 1]".into(),
        ));
    }
    let p = h.probabilities()?;
    let i1 = positions(scene, cfg.k1());
    let i2 = positions(scene, cfg.k2());
    let vals: Vec<(f64, f64, f64)> = p
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(m, &w)| {
            let (a, b) = split_mask(m, &i1, &i2);
            (w, f1[a], f2[b])
        })
        .collect();
    let m1: f64 = vals.iter().map(|(w, a, _)| w * a).sum();
    let m2: f64 = vals.iter().map(|(w, _, b)| w * b).sum();
    let cov: f64 = vals.iter().map(|(w, a, b)| w * (a - m1) * (b - m2)).sum();
    let var: f64 = vals
        .iter()
        .map(|(w, a, b)| {
            let d = (a - m1) * (b - m2) - cov;
            w * d * d
        })
        .sum();
    let n = h.total() as f64;
    let se = (var / n).sqrt();
    let z = z_value(0.95);
    let (shape_new, shape_old) = bound_shapes(scene)?;
    Ok(CovEstimate {
        cov,
        se,
        ci: (cov - z * se, cov + z * se),
        shape_new,
        shape_old,
    })
}

/// Monte Carlo covariance of `f1(ℐ ∩ K1)` and `f2(ℐ ∩ K2)` under the
/// interlacement excursions.
pub fn covariance_experiment(
    scene: &Scene,
    f1: &[f64],
    f2: &[f64],
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<CovEstimate> {
    let cfg = scene.cfg();
    if f1.len() != 1 << cfg.k1().len() {
        return Err(Error::TruthTableSize {
            found: f1.len(),
            sites: cfg.k1().len(),
        });
    }
    if f2.len() != 1 << cfg.k2().len() {
        return Err(Error::TruthTableSize {
            found: f2.len(),
            sites: cfg.k2().len(),
        });
    }
    let h = ri_histogram(scene, replicas, master_seed, threads)?;
    covariance_from_histogram(scene, &h, f1, f2)
}

/// Histogram of interlacement traces over `K`.
pub fn ri_histogram(
    scene: &Scene,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<TraceHistogram> {
    let k = scene.cfg().k().len();
    if k > MAX_HISTOGRAM_SITES {
        return Err(Error::TooManySites(k));
    }
    let masks = run_replicas(replicas, threads, |id| {
        let mut st = ReplicaStreams::new(master_seed, id);
        Ok(build_ri(scene, &mut st)?.trace(k).mask().unwrap() as usize)
    })?;
    let mut h = TraceHistogram::new(k)?;
    masks.into_iter().for_each(|m| h.add_mask(m));
    Ok(h)
}

/// All `2^(2^n)` truth tables with values in `{0, 1}` on `n` sites.
pub fn extremal_tables(n: usize) -> Result<Vec<Vec<f64>>> {
    let cells = 1usize << n;
    if cells > 4 {
        return Err(Error::TooManySites(n));
    }
    Ok((0..(1usize << cells))
        .map(|t| (0..cells).map(|c| ((t >> c) & 1) as f64).collect())
        .collect())
}

/// One entry of the extremal covariance grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovEntry {
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub cov: f64,
    pub se: f64,
}

/// `|Cov| <= 3 d_TV` over all extremal truth tables.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub tv: TvEstimate,
    /// `3 sd_tv`.
    pub margin: f64,
    pub entries: Vec<CovEntry>,
    pub max_abs_cov: f64,
    /// `max |cov| <= 3 (tv + margin)`.
    pub holds: bool,
}

/// Checks `|Cov(f1, f2)| <= 3 d_TV(ℐ_K, 𝔐_K)` for every pair of extremal
/// truth tables. Both quantities come from the same standalone runs.
pub fn covariance_tv_consistency(
    scene: &Scene,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<ConsistencyReport> {
    let cfg = scene.cfg();
    let t1 = extremal_tables(cfg.k1().len())?;
    let t2 = extremal_tables(cfg.k2().len())?;
    let (ri, ns) = standalone_histograms(scene, replicas, master_seed, threads)?;
    let mut boot = seed_derive(master_seed, ESTIMATOR_REPLICA, Purpose::Bootstrap);
    let tv = tv_empirical(&ri, &ns, &mut boot)?;
    let mut entries = Vec::with_capacity(t1.len() * t2.len());
    for f1 in &t1 {
        for f2 in &t2 {
            let c = covariance_from_histogram(scene, &ri, f1, f2)?;
            entries.push(CovEntry {
                f1: f1.clone(),
                f2: f2.clone(),
                cov: c.cov,
                se: c.se,
            });
        }
    }
    let max_abs_cov = entries.iter().map(|e| e.cov.abs()).fold(0.0, f64::max);
    let margin = 3.0 * tv.sd;
    Ok(ConsistencyReport {
        holds: max_abs_cov <= 3.0 * (tv.tv + margin),
        tv,
        margin,
        entries,
        max_abs_cov,
    })
}

/// Exact quantities for one scene of a ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRung {
    pub xhat_norm: f64,
    pub r: f64,
    pub u: f64,
    pub cap_k1: f64,
    pub cap_k: f64,
    pub q: f64,
    pub one_minus_q: f64,
    /// `sup_{y, x} |g(y, x) - 1|` over `∂_e V_R × supp ē_K`.
    pub sup_g_dev: f64,
    /// `min_{y ∈ ∂K1} (ē_K(y) - ē_{K1}(y) / 4)`.
    pub harmonic_margin: f64,
    /// `E[N22^{-1/2}; N22 >= 1]`.
    pub inv_sqrt_n22: f64,
    /// `(u cap(K1))^{-1/2}`.
    pub inv_sqrt_shape: f64,
    /// `P[N1 >= 1, N22 = 0]`.
    pub p_n1_no_n22: f64,
    /// `sqrt(u) cap(K1)^{3/2} / R^{d-2}`.
    pub p_n1_no_n22_shape: f64,
    /// `max_{k <= 5} d_TV(Poisson(λ), k + Poisson(λ)) sqrt(λ) / k` with
    /// `λ = q u cap(K) / 2`; at most 1.
    pub shift_tv_ratio: f64,
}

/// Exact values along a ladder with fitted exponents in `R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub rungs: Vec<LemmaRung>,
    /// Slope of `log(1 - q)` against `log R`.
    pub one_minus_q_fit: Option<FitSummary>,
    /// Slope of `log sup|g - 1|` against `log R`.
    pub sup_g_fit: Option<FitSummary>,
    /// Slope of `log P[N1 >= 1, N22 = 0]` against `log R`.
    pub p_n1_no_n22_fit: Option<FitSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

impl From<LineFit> for FitSummary {
    fn from(f: LineFit) -> FitSummary {
        FitSummary {
            slope: f.slope,
            slope_se: f.slope_se,
            intercept: f.intercept,
            residuals: f.residuals,
        }
    }
}

/// `sup_{y ∈ ∂_e V_R, x : ē_K(x) > 0} |g(y, x) - 1|`, one hitting solve per
/// `y`, without caching the rows.
pub fn sup_density_deviation(scene: &Scene) -> Result<f64> {
    let solver = scene.hitting_solver();
    let green = scene.green();
    let active = scene.active_sites();
    let ys = scene.cfg().boundary_vr().sites();
    let devs = run_replicas(ys.len() as u64, 0, |j| {
        let (hit, _) = solver.hit_row(green, &ys[j as usize])?;
        let g = solver.density_from_hit(&hit);
        Ok(active
            .iter()
            .map(|&x| (g[x] - 1.0).abs())
            .fold(0.0, f64::max))
    })?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// `min_{y ∈ ∂K1} (ē_K(y) - ē_{K1}(y) / 4)`.
pub fn harmonic_margin(scene: &Scene) -> Result<f64> {
    let cfg = scene.cfg();
    let eq1 = equilibrium_measure(scene.green(), cfg.k1())?;
    let eq = scene.equilibrium();
    let b1 = crate::lattice::internal_boundary(cfg.k1());
    Ok(b1
        .iter()
        .map(|y| eq.hbar_at(y).expect("∂K1 ⊆ K") - eq1.hbar_at(y).expect("∂K1 ⊆ K1") / 4.0)
        .fold(f64::INFINITY, f64::min))
}

/// `E[N^{-1/2}; N >= 1]` for `N ~ Poisson(λ)`, summed to convergence.
pub fn inv_sqrt_poisson_moment(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let mut p = (-lambda).exp();
    let mut sum = 0.0;
    let top = (lambda + 40.0 * lambda.sqrt() + 100.0) as u64;
    for n in 1..=top {
        p *= lambda / n as f64;
        sum += p / (n as f64).sqrt();
    }
    sum
}

fn log_fit(x: &[f64], y: &[f64]) -> Option<FitSummary> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    fit_line_ols(&lx, &ly).ok().map(FitSummary::from)
}

/// Exact lemma quantities for one scene.
pub fn lemma_rung(scene: &Scene) -> Result<LemmaRung> {
    let cfg = scene.cfg();
    let cap_k1 = equilibrium_measure(scene.green(), cfg.k1())?.cap();
    let q = scene.q().min(1.0);
    let u = scene.u();
    let theta = scene.theta();
    let r = cfg.r();
    let lambda = q * theta / 2.0;
    let shift_tv_ratio = if lambda > 0.0 {
        (1..=5)
            .map(|k| poisson_shift_tv(lambda, k) * lambda.sqrt() / k as f64)
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(LemmaRung {
        xhat_norm: cfg.xhat().norm(),
        r,
        u,
        cap_k1,
        cap_k: scene.cap(),
        q,
        one_minus_q: 1.0 - q,
        sup_g_dev: sup_density_deviation(scene)?,
        harmonic_margin: harmonic_margin(scene)?,
        inv_sqrt_n22: inv_sqrt_poisson_moment(lambda),
        inv_sqrt_shape: if u > 0.0 {
            (u * cap_k1).powf(-0.5)
        } else {
            f64::INFINITY
        },
        p_n1_no_n22: (1.0 - (-(1.0 - q) * theta).exp()) * (-lambda).exp(),
        p_n1_no_n22_shape: u.sqrt() * cap_k1.powf(1.5) / r.powi(cfg.dim() as i32 - 2),
        shift_tv_ratio,
    })
}

/// Exact lemma quantities along a ladder, with log-log fits against `R`.
pub fn lemma_suite(scenes: &[Scene]) -> Result<LemmaReport> {
    let rungs = scenes.iter().map(lemma_rung).collect::<Result<Vec<_>>>()?;
    let r: Vec<f64> = rungs.iter().map(|x| x.r).collect();
    let col = |f: fn(&LemmaRung) -> f64| rungs.iter().map(f).collect::<Vec<f64>>();
    Ok(LemmaReport {
        one_minus_q_fit: log_fit(&r, &col(|x| x.one_minus_q)),
        sup_g_fit: log_fit(&r, &col(|x| x.sup_g_dev)),
        p_n1_no_n22_fit: log_fit(&r, &col(|x| x.p_n1_no_n22)),
        rungs,
    })
}

/// Abscissa of a scaling fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Abscissa {
    /// `log P̂[Υ^c]` against `log dist(K1, K2)`.
    Distance,
    /// `log (P̂[Υ^c] dist^{d-2})` against `log cap(K1)`.
    Capacity,
    /// `log P̂[Υ^c]` against `log u`.
    Level,
}

/// Minimum failure count for a rung to enter a fit.
pub const CENSOR_BELOW: u64 = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRung {
    pub dist: f64,
    pub cap_k1: f64,
    pub u: f64,
    pub replicas: u64,
    pub failures: u64,
    pub phat: f64,
    pub ci: (f64, f64),
    /// Fewer than `CENSOR_BELOW` failures: `ci` is one-sided and the rung is
    /// left out of the fit.
    pub censored: bool,
    pub estimate: CouplingEstimate,
}

/// Coupling failure along a ladder, with a weighted log-log fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub abscissa: Abscissa,
    pub ladder: Vec<ScalingRung>,
    pub fit: Option<FitSummary>,
    /// Normal 95% interval for the slope.
    pub slope_ci: Option<(f64, f64)>,
}

/// One-sided 95% upper bound for a binomial proportion.
fn one_sided_upper(k: u64, n: u64) -> f64 {
    crate::stats::wilson(k, n, 0.90).1
}

/// Runs the coupling on every scene and fits the exponent along `abscissa`.
/// Rungs are sorted by the abscissa.
pub fn scaling_experiment(
    scenes: &[Scene],
    abscissa: Abscissa,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<ScalingReport> {
    let mut ladder = Vec::with_capacity(scenes.len());
    for s in scenes {
        let rows = coupling_rows(s, replicas, master_seed, threads)?;
        let e = CouplingEstimate::from_rows(&rows);
        let cfg = s.cfg();
        let censored = e.failures < CENSOR_BELOW;
        ladder.push(ScalingRung {
            dist: crate::lattice::set_distance(cfg.k1(), cfg.k2())?,
            cap_k1: equilibrium_measure(s.green(), cfg.k1())?.cap(),
            u: s.u(),
            replicas,
            failures: e.failures,
            phat: e.phat,
            ci: if censored {
                (0.0, one_sided_upper(e.failures, replicas))
            } else {
                e.ci
            },
            censored,
            estimate: e,
        });
    }
    let dim = scenes.first().map(|s| s.cfg().dim()).unwrap_or(3) as i32;
    let x_of = |r: &ScalingRung| match abscissa {
        Abscissa::Distance => r.dist,
        Abscissa::Capacity => r.cap_k1,
        Abscissa::Level => r.u,
    };
    ladder.sort_by(|a, b| x_of(a).total_cmp(&x_of(b)));
    let used: Vec<&ScalingRung> = ladder.iter().filter(|r| !r.censored).collect();
    let x: Vec<f64> = used.iter().map(|r| x_of(r).ln()).collect();
    let y: Vec<f64> = used
        .iter()
        .map(|r| match abscissa {
            Abscissa::Capacity => (r.phat * r.dist.powi(dim - 2)).ln(),
            _ => r.phat.ln(),
        })
        .collect();
    let w: Vec<f64> = used
        .iter()
        .map(|r| r.replicas as f64 * r.phat / (1.0 - r.phat).max(1e-12))
        .collect();
    let fit = fit_line(&x, &y, &w).ok();
    let z = z_value(0.95);
    let slope_ci = fit
        .as_ref()
        .map(|f| (f.slope - z * f.slope_se, f.slope + z * f.slope_se));
    Ok(ScalingReport {
        abscissa,
        ladder,
        fit: fit.map(FitSummary::from),
        slope_ci,
    })
}

/// Ratio of coupling failure probabilities at two levels on one scene.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRatio {
    pub u: (f64, f64),
    pub estimates: (CouplingEstimate, CouplingEstimate),
    pub ratio: f64,
    /// Delta-method 95% interval.
    pub ci: (f64, f64),
}

/// `P̂[Υ^c](u2) / P̂[Υ^c](u1)` on the scene with its level replaced.
pub fn level_ratio(
    scene: &Scene,
    u1: f64,
    u2: f64,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<LevelRatio> {
    let a = CouplingEstimate::from_rows(&coupling_rows(
        &scene.with_level(u1)?,
        replicas,
        master_seed,
        threads,
    )?);
    let b = CouplingEstimate::from_rows(&coupling_rows(
        &scene.with_level(u2)?,
        replicas,
        master_seed,
        threads,
    )?);
    if a.failures == 0 || b.failures == 0 {
        return Err(Error::ZeroTotal);
    }
    let ratio = b.phat / a.phat;
    let var = (1.0 - a.phat) / (a.failures as f64) + (1.0 - b.phat) / (b.failures as f64);
    let h = z_value(0.95) * var.sqrt();
    Ok(LevelRatio {
        u: (u1, u2),
        ratio,
        ci: (ratio * (-h).exp(), ratio * h.exp()),
        estimates: (a, b),
    })
}

/// Cell of the first possibly returning trajectory: `T_1` bucket
/// (`1, 2, 3, >= 4`), start site in `∂K`, exit octant of the first excursion
/// relative to its ball center.
pub fn first_trajectory_cell(scene: &Scene, first: &[Excursion]) -> usize {
    let cfg = scene.cfg();
    let bucket = first.len().clamp(1, 4) - 1;
    let e = &first[0];
    let ball = cfg.vr().ball_of(&e.start()).expect("start inside V_R");
    let c = cfg.vr().centers()[ball];
    let end = e.end();
    let oct = end
        .coords()
        .iter()
        .zip(c.coords())
        .take(3)
        .enumerate()
        .fold(0usize, |acc, (i, (a, b))| acc | (usize::from(a < b) << i));
    (bucket * scene.n_bk() + e.start_index()) * 8 + oct
}

/// Agreement between the soft-local-times construction and direct
/// simulation of trajectories.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SltCheckReport {
    pub replicas: u64,
    pub trace_tv: TvEstimate,
    /// `Σ_cells sd(p̂_a - p̂_b) / 2` under equal laws, which bounds the mean
    /// of the estimator when the laws agree.
    pub sigma: f64,
    pub slt: TraceHistogram,
    pub direct: TraceHistogram,
    /// Two-sample test on the first-trajectory cells.
    pub first_trajectory: ChiSquare,
}

/// Compares `build_ri` with directly simulated trajectories: trace laws over
/// `K`, and the joint law of the first possibly returning trajectory's
/// length, start and first exit octant.
pub fn slt_vs_direct(
    scene: &Scene,
    replicas: u64,
    master_seed: u64,
    threads: usize,
) -> Result<SltCheckReport> {
    let k = scene.cfg().k().len();
    let cells = 4 * scene.n_bk() * 8;
    let out = run_replicas(replicas, threads, |id| {
        let mut st = ReplicaStreams::new(master_seed, id);
        let ri = build_ri(scene, &mut st)?;
        let first = if ri.n1 > 0 {
            Some(first_trajectory_cell(
                scene,
                &ri.excursions[..ri.t[0] as usize],
            ))
        } else {
            None
        };
        let mut d = seed_derive(master_seed, id, Purpose::Reference);
        let trajectories = build_ri_direct(scene, &mut d)?;
        let dtrace = crate::excursions::trace(trajectories.iter().flatten(), k);
        let n1_direct = poisson((1.0 - scene.q().min(1.0)) * scene.theta(), &mut d);
        let mut dfirst = None;
        if n1_direct > 0 {
            let tr = direct_trajectory(scene, &mut d, StopRule::PossiblyReturning)?;
            dfirst = Some(first_trajectory_cell(scene, &tr));
        }
        Ok((
            ri.trace(k).mask().unwrap() as usize,
            dtrace.mask().unwrap() as usize,
            first,
            dfirst,
        ))
    })?;
    let mut hs = TraceHistogram::new(k)?;
    let mut hd = TraceHistogram::new(k)?;
    let mut ca = vec![0u64; cells];
    let mut cb = vec![0u64; cells];
    for (a, b, fa, fb) in out {
        hs.add_mask(a);
        hd.add_mask(b);
        if let Some(c) = fa {
            ca[c] += 1;
        }
        if let Some(c) = fb {
            cb[c] += 1;
        }
    }
    let mut boot = seed_derive(master_seed, ESTIMATOR_REPLICA, Purpose::Bootstrap);
    let trace_tv = tv_empirical(&hs, &hd, &mut boot)?;
    let pooled: Vec<f64> = hs
        .counts()
        .iter()
        .zip(hd.counts())
        .map(|(a, b)| (a + b) as f64 / (hs.total() + hd.total()) as f64)
        .collect();
    let sigma = 0.5
        * pooled
            .iter()
            .map(|p| (p * (1.0 - p) * (1.0 / hs.total() as f64 + 1.0 / hd.total() as f64)).sqrt())
            .sum::<f64>();
    Ok(SltCheckReport {
        replicas,
        trace_tv,
        sigma,
        slt: hs,
        direct: hd,
        first_trajectory: chi_square_two_sample(&ca, &cb)?,
    })
}
