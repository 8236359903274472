//! The random interlacement excursion soup and the noodle soup.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::excursions::{direct_trajectory, kappa, trace, Excursion, StopRule, Trace};
use crate::potential::BallDomain;
use crate::rng::{ReplicaStreams, RngStream};
use crate::scene::Scene;
use crate::slt::{slt_init, slt_next, Density, SltState};

/// Poisson draw, with `Poisson(0) = 0`.
pub fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .expect("finite positive mean")
        .sample(rng) as u64
}

/// The random interlacement excursions between `∂K` and `∂_e V_R`.
#[derive(Clone, Debug)]
pub struct RiSample {
    pub n1: u64,
    /// `T_j`, excursions of the `j`-th possibly returning trajectory.
    pub t: Vec<u64>,
    /// `Θ_{N1} = Σ T_j`.
    pub theta: u64,
    pub n2: u64,
    /// `𝒩 = Θ_{N1} + N2`.
    pub ntot: u64,
    pub excursions: Vec<Excursion>,
    /// Uniforms `ζ_i` consumed.
    pub zeta_used: u64,
    /// Accumulated soft local time over `∂K`.
    pub g_final: Vec<f64>,
}

impl RiSample {
    /// Checks the count bookkeeping.
    pub fn check(&self) -> Result<()> {
        let sum: u64 = self.t.iter().sum();
        let ok = self.t.len() as u64 == self.n1
            && sum == self.theta
            && self.ntot == self.theta + self.n2
            && self.excursions.len() as u64 == self.ntot
            && self.t.iter().all(|&t| t >= 1)
            && self.zeta_used == self.theta;
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                "RI count bookkeeping",
                format!(
                    "N1 = {}, sum T = {sum}, Theta = {}, N2 = {}, N = {}, excursions = {}",
                    self.n1,
                    self.theta,
                    self.n2,
                    self.ntot,
                    self.excursions.len()
                ),
            ))
        }
    }

    pub fn trace(&self, k_len: usize) -> Trace {
        trace(&self.excursions, k_len)
    }
}

/// The noodle soup: `𝒩'` independent excursions from the harmonic measure.
#[derive(Clone, Debug)]
pub struct NsSample {
    pub n_prime: u64,
    pub excursions: Vec<Excursion>,
}

impl NsSample {
    pub fn trace(&self, k_len: usize) -> Trace {
        trace(&self.excursions, k_len)
    }
}

/// Independent `N1 ~ Poisson((1-q) u cap(K))` and `N2 ~ Poisson(q u cap(K))`.
pub fn sample_counts<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> (u64, u64) {
    let theta = scene.theta();
    let q = scene.q().min(1.0);
    (poisson((1.0 - q) * theta, rng), poisson(q * theta, rng))
}

/// Runs the `N1` possibly returning trajectories on `state`: each starts with
/// the uniform density, continues with `g(S_f(z_{n-1}), ·)` and stops at the
/// first `n` with `ζ_n < κ_n`. Returns the `T_j`.
pub(crate) fn run_possibly_returning(
    scene: &Scene,
    state: &mut SltState,
    n1: u64,
    zeta: &mut RngStream,
    paths: &mut RngStream,
) -> Result<Vec<u64>> {
    let mut t = Vec::with_capacity(n1 as usize);
    for _ in 0..n1 {
        let mut density = Density::Uniform;
        let mut tj = 0u64;
        loop {
            let (_, mark) = slt_next(state, scene, density, paths)?;
            let j = mark.excursion.end_index();
            tj += 1;
            let z: f64 = zeta.random();
            if z < kappa(scene, j, tj == 1, StopRule::PossiblyReturning) {
                break;
            }
            density = Density::Exit(j);
        }
        t.push(tj);
    }
    Ok(t)
}

/// Runs `n` steps with the uniform density.
pub(crate) fn run_uniform(
    scene: &Scene,
    state: &mut SltState,
    n: u64,
    paths: &mut RngStream,
) -> Result<()> {
    for _ in 0..n {
        slt_next(state, scene, Density::Uniform, paths)?;
    }
    Ok(())
}

/// Builds the interlacement excursions by soft local times: `N1` possibly
/// returning trajectories, then `N2` non-returning excursions, all from one
/// point process.
pub fn build_ri(scene: &Scene, streams: &mut ReplicaStreams) -> Result<RiSample> {
    scene.warn_if_out_of_regime();
    let (n1, n2) = sample_counts(scene, &mut streams.counts);
    let mut state = slt_init(scene, streams.clocks.clone());
    let t = run_possibly_returning(scene, &mut state, n1, &mut streams.zeta, &mut streams.paths)?;
    run_uniform(scene, &mut state, n2, &mut streams.paths)?;
    let theta: u64 = t.iter().sum();
    let g_final = state.g();
    streams.clocks = state.clock_stream().clone();
    let sample = RiSample {
        n1,
        t,
        theta,
        n2,
        ntot: theta + n2,
        excursions: state
            .into_marks()
            .into_iter()
            .map(|m| m.excursion)
            .collect(),
        zeta_used: theta,
        g_final,
    };
    debug_assert!(sample.check().is_ok());
    Ok(sample)
}

/// Builds the noodle soup: `𝒩' ~ Poisson(E[𝒩])` independent excursions with
/// starts drawn from `ē_K`.
pub fn build_ns(scene: &Scene, streams: &mut ReplicaStreams) -> Result<NsSample> {
    let n_prime = poisson(scene.mean_total_excursions()?, &mut streams.counts);
    let excursions = (0..n_prime)
        .map(|_| scene.harmonic_excursion(&mut streams.paths))
        .collect();
    Ok(NsSample {
        n_prime,
        excursions,
    })
}

/// Reference soup: `Poisson(u cap(K))` directly simulated trajectories, each
/// stopping after an excursion ending at `y` with probability `p_y`.
pub fn build_ri_direct<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Result<Vec<Vec<Excursion>>> {
    let n = poisson(scene.theta(), rng);
    (0..n)
        .map(|_| direct_trajectory(scene, rng, StopRule::Unconditioned))
        .collect()
}

/// `E[𝒩]`: the mean number of excursions of the interlacement.
pub fn mean_total_excursions(scene: &Scene) -> Result<f64> {
    scene.mean_total_excursions()
}

/// Expected excursion counts from the finite absorbing chain of entrance
/// sites.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainMeans {
    /// `E[T_1]` under the possibly-returning stopping rule.
    pub t1: f64,
    /// Mean excursions of an unconditioned trajectory.
    pub per_trajectory: f64,
    /// `E[Θ_{N1}] = (1 - q) u cap(K) E[T_1]`.
    pub theta: f64,
    /// `E[𝒩] = E[Θ_{N1}] + q u cap(K)`.
    pub total: f64,
}

/// Solves the chain exactly. With `f(x)` the mean number of excursions of a
/// trajectory from its entrance at `x ∈ ∂K` on,
/// `f = 1 + M f`, `M(x, x') = Σ_y P_x[exit at y] (1 - p_y) hit(y, x')`, and
/// `E[T_1] = 1 + Σ_x ē(x) Σ_y P_x[exit at y] (1 - κ_1(y)) Σ_{x'} hit(y, x') f(x')`.
///
/// Needs one killed Green's function solve per site of `∂K ∩ K1`, so it is
/// meant for moderate scenes.
pub fn mean_excursions_chain(scene: &Scene) -> Result<ChainMeans> {
    let cfg = scene.cfg();
    let bk = cfg.boundary_k();
    let bvr = cfg.boundary_vr();
    let n = bk.len();
    let domain = BallDomain::new(cfg.vr().centers()[0], cfg.radius());
    let xhat = cfg.xhat();
    // exit[i] = sparse exit law of the i-th site of ∂K over ∂_e V_R
    let mut exit: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, x) in bk.iter().enumerate() {
        if cfg.k1().contains(x) {
            for (y, p) in domain.exit_distribution(x)? {
                exit[i].push((bvr.index_of(&y).expect("exit site"), p));
                let i2 = bk.index_of(&(*x + xhat)).expect("translated boundary");
                exit[i2].push((bvr.index_of(&(y + xhat)).expect("exit site"), p));
            }
        }
    }
    // column view: for each exit site, the (i, P_i[exit at y]) pairs
    let mut by_exit: Vec<Vec<(usize, f64)>> = vec![Vec::new(); bvr.len()];
    for (i, row) in exit.iter().enumerate() {
        for &(j, p) in row {
            by_exit[j].push((i, p));
        }
    }
    let hbar = scene.hbar();
    let mut m = DMatrix::<f64>::zeros(n, n);
    // first[x'] = Σ_x ē(x) Σ_y P_x[exit at y] (1 - κ_1(y)) hit(y, x')
    let mut first = DVector::<f64>::zeros(n);
    let solver = scene.hitting_solver();
    for (j, col) in by_exit.iter().enumerate() {
        if col.is_empty() {
            continue;
        }
        let back = 1.0 - scene.p_exit(j);
        if back <= 0.0 {
            continue;
        }
        let back1 = 1.0 - kappa(scene, j, true, StopRule::PossiblyReturning);
        let (hit, _) = solver.hit_row(scene.green(), &bvr.sites()[j])?;
        let mass1: f64 = col.iter().map(|&(i, p)| hbar[i] * p).sum::<f64>() * back1;
        for &(i, p) in col {
            let w = p * back;
            for (k, h) in hit.iter().enumerate() {
                m[(i, k)] += w * h;
            }
        }
        for (k, h) in hit.iter().enumerate() {
            first[k] += mass1 * h;
        }
    }
    let a = DMatrix::<f64>::identity(n, n) - m;
    let f = a
        .lu()
        .solve(&DVector::from_element(n, 1.0))
        .ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
    let t1 = 1.0 + first.dot(&f);
    let per_trajectory: f64 = hbar.iter().zip(f.iter()).map(|(h, v)| h * v).sum();
    let theta_level = scene.theta();
    let q = scene.q().min(1.0);
    let theta = (1.0 - q) * theta_level * t1;
    Ok(ChainMeans {
        t1,
        per_trajectory,
        theta,
        total: theta + q * theta_level,
    })
}

/// Writes one summary row per RI sample: replica, N1, Theta, N2, N, trace.
pub fn write_ri_summary<W: Write>(w: W, k_len: usize, samples: &[RiSample]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["replica", "n1", "theta", "n2", "ntot", "trace"])?;
    for (i, s) in samples.iter().enumerate() {
        wr.write_record([
            i.to_string(),
            s.n1.to_string(),
            s.theta.to_string(),
            s.n2.to_string(),
            s.ntot.to_string(),
            s.trace(k_len).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
