//! Acceptance criteria 1 to 10. Prints one line per criterion and exits
//! nonzero if any fails.

use std::time::Instant;

use interlace::analysis::{
    covariance_tv_consistency, harmonic_margin, lemma_suite, level_ratio, scaling_experiment,
    slt_vs_direct, standalone_histograms, trace_tv_experiment, tv_empirical, Abscissa,
    TraceHistogram,
};
use interlace::coupling::{coupling_rows, poisson_shift_tv, write_coupling_csv};
use interlace::lattice::{ball, Configuration, Point, SiteSet};
use interlace::potential::{equilibrium_measure, green, GreenTable};
use interlace::rng::{seed_derive, Purpose, ESTIMATOR_REPLICA};
use interlace::scene::Scene;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

const SEED: u64 = 1;
const REPLICAS: u64 = 100_000;
const DIST_LADDER: [i32; 4] = [16, 32, 64, 128];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn singleton_scene(l: i32, u: f64) -> Scene {
    let cfg = Configuration::new(
        SiteSet::singleton(Point::origin(3)),
        Point::new(&[l, 0, 0]),
        u,
    )
    .unwrap();
    Scene::build(cfg).unwrap()
}

/// Ball `K1` with `K2` at distance `dist` along the first axis.
fn ball_scene(r: f64, dist: i32) -> Scene {
    let k1 = ball(Point::origin(3), r).unwrap();
    let xs = k1.iter().map(|p| p.coords()[0]);
    let width = xs.clone().max().unwrap() - xs.min().unwrap();
    let cfg = Configuration::new(k1, Point::new(&[dist + width, 0, 0]), 1.0).unwrap();
    Scene::build(cfg).unwrap()
}

/// Mean visits to the origin of a walk started there: visits before leaving
/// the ball of radius `r`, plus `(3 / 2π) / |X|` at the exit point.
fn green_origin_monte_carlo(walks: u64, r: i64, seed: u64) -> (f64, f64) {
    let mut rng = SmallRng::seed_from_u64(seed);
    let a3 = 3.0 / (2.0 * std::f64::consts::PI);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let (mut bits, mut left) = (0u64, 0u32);
    for _ in 0..walks {
        let mut x = [0i64; 3];
        let mut n2 = 0i64;
        let mut visits = 1.0;
        while n2 < r * r {
            let dir = loop {
                if left == 0 {
                    bits = rng.random();
                    left = 21;
                }
                let v = bits & 7;
                bits >>= 3;
                left -= 1;
                if v < 6 {
                    break v as usize;
                }
            };
            let (axis, up) = (dir >> 1, dir & 1 == 0);
            let c = x[axis];
            n2 += if up { 2 * c + 1 } else { 1 - 2 * c };
            x[axis] += if up { 1 } else { -1 };
            if n2 == 0 {
                visits += 1.0;
            }
        }
        let v = visits + a3 / (n2 as f64).sqrt();
        sum += v;
        sum_sq += v * v;
    }
    let n = walks as f64;
    let mean = sum / n;
    (mean, ((sum_sq / n - mean * mean) / (n - 1.0)).sqrt())
}

fn criterion_1() -> Outcome {
    let g00 = green(3, &Point::origin(3)).unwrap();
    let table = GreenTable::new(3, 64, 20).unwrap();
    let single = equilibrium_measure(&table, &SiteSet::singleton(Point::origin(3))).unwrap();
    let pair = equilibrium_measure(
        &table,
        &SiteSet::new([Point::origin(3), Point::new(&[10, 0, 0])]),
    )
    .unwrap();
    let (mc, se) = green_origin_monte_carlo(10_000_000, 16, 7);
    let residual = single.residual().max(pair.residual());
    let cap_ok = (single.cap() - 1.0 / g00).abs() <= 1e-12;
    let pass =
        residual <= 1e-8 && cap_ok && (g00 - 1.5164).abs() < 5e-5 && (mc - g00).abs() <= 3.0 * se;
    outcome(
        pass,
        format!(
            "residual {residual:.2e} <= 1e-8; cap({{0}}) = 1/G(0,0) = {:.10}; G(0,0) quadrature {g00:.10}, \
             monte carlo {mc:.5} +- {se:.5} (1e7 walks, |diff| {:.5} <= 3 se)",
            single.cap(),
            (mc - g00).abs()
        ),
    )
}

fn criterion_2() -> Outcome {
    let margins: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&d| harmonic_margin(&ball_scene(2.0, d)).unwrap())
        .collect();
    let pass = margins.iter().all(|&m| m >= -1e-8);
    outcome(
        pass,
        format!("min over boundary of e_K - e_K1/4 at dist 32, 64, 128: {margins:.4?} >= -1e-8"),
    )
}

fn criteria_3_and_4() -> (Outcome, Outcome) {
    let scenes: Vec<Scene> = [16, 32, 64, 128]
        .iter()
        .map(|r| singleton_scene(2 * r + 1, 1.0))
        .collect();
    let rep = lemma_suite(&scenes).unwrap();
    let slope = rep.one_minus_q_fit.as_ref().unwrap().slope;
    let qs: Vec<f64> = rep.rungs.iter().map(|r| r.q).collect();
    let three = outcome(
        (slope + 1.0).abs() <= 0.3 && qs.iter().all(|&q| q >= 0.5),
        format!("slope of log(1-q) vs log R over R = 16..128: {slope:.4} in [-1.3, -0.7]; q {qs:.4?} >= 1/2"),
    );
    let dev: Vec<f64> = rep.rungs.iter().map(|r| r.sup_g_dev).collect();
    let four = outcome(
        dev.windows(2).all(|w| w[1] < w[0]),
        format!("sup |g - 1| along R = 16..128: {dev:.5?} strictly decreasing"),
    );
    (three, four)
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for theta in [1.0, 4.0, 25.0] {
        for k in 0..=5i64 {
            let tv = poisson_shift_tv(theta, k);
            let bound = k as f64 / f64::sqrt(theta);
            ok &= tv <= bound;
            if k > 0 {
                worst = worst.max(tv / bound);
            }
        }
    }
    let at_one = poisson_shift_tv(1.0, 1);
    let exact = (at_one - (-1.0f64).exp()).abs() <= 1e-12;
    outcome(
        ok && exact,
        format!(
            "tv <= |k|/sqrt(theta) on the grid (max ratio {worst:.4}); tv(1, 1) - 1/e = {:.1e}",
            at_one - (-1.0f64).exp()
        ),
    )
}

fn criterion_6() -> Outcome {
    let r = slt_vs_direct(&singleton_scene(9, 1.0), REPLICAS, SEED, 0).unwrap();
    let bound = 0.01 + 3.0 * r.sigma;
    let p = r.first_trajectory.p_value;
    outcome(
        r.trace_tv.tv <= bound && p > 0.01,
        format!(
            "trace tv {:.4} <= {bound:.4}; chi-square on first trajectory p = {p:.3} > 0.01 (df {})",
            r.trace_tv.tv, r.first_trajectory.df
        ),
    )
}

fn criterion_7() -> Outcome {
    let scene = singleton_scene(9, 1.0);
    let k = scene.cfg().k().len();
    let rows = coupling_rows(&scene, REPLICAS, SEED, 0).unwrap();
    let violations = rows
        .iter()
        .filter(|r| !r.upsilon && r.d && r.n1 == 0)
        .count();
    let cri = TraceHistogram::from_traces(k, rows.iter().map(|r| &r.ri_trace)).unwrap();
    let cns = TraceHistogram::from_traces(k, rows.iter().map(|r| &r.ns_trace)).unwrap();
    let (sri, sns) = standalone_histograms(&scene, REPLICAS, SEED + 1, 0).unwrap();
    let mut boot = seed_derive(SEED, ESTIMATOR_REPLICA, Purpose::Bootstrap);
    let a = tv_empirical(&cri, &sri, &mut boot).unwrap();
    let b = tv_empirical(&cns, &sns, &mut boot).unwrap();
    let (ba, bb) = (0.01 + 3.0 * a.sd, 0.01 + 3.0 * b.sd);
    outcome(
        a.tv <= ba && b.tv <= bb && violations == 0,
        format!(
            "coupled vs standalone trace tv: ri {:.4} <= {ba:.4}, ns {:.4} <= {bb:.4}; \
             replicas in Upsilon^c, D, N1 = 0: {violations}",
            a.tv, b.tv
        ),
    )
}

fn criterion_8a() -> Outcome {
    let scenes: Vec<Scene> = DIST_LADDER
        .iter()
        .map(|&d| singleton_scene(d, 1.0))
        .collect();
    let r = scaling_experiment(&scenes, Abscissa::Distance, REPLICAS, SEED, 0).unwrap();
    let phat: Vec<f64> = r.ladder.iter().map(|g| g.phat).collect();
    let Some(fit) = r.fit else {
        return outcome(false, "no fit: every rung censored".into());
    };
    outcome(
        (-1.3..=-0.7).contains(&fit.slope),
        format!(
            "phat at dist 16..128: {phat:.4?}; slope {:.3} (95% ci {:.3?}) in [-1.3, -0.7]",
            fit.slope, r.slope_ci
        ),
    )
}

fn criterion_8b() -> Outcome {
    let r = level_ratio(&singleton_scene(32, 1.0), 1.0, 4.0, REPLICAS, SEED, 0).unwrap();
    outcome(
        r.ci.0 <= 2.0 && 2.0 <= r.ci.1,
        format!(
            "dist 32: phat(u=1) {:.4}, phat(u=4) {:.4}; ratio {:.3}, 95% ci [{:.3}, {:.3}] contains 2",
            r.estimates.0.phat, r.estimates.1.phat, r.ratio, r.ci.0, r.ci.1
        ),
    )
}

fn criterion_8c() -> Outcome {
    let scenes: Vec<Scene> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&r| ball_scene(r, (16.0 * r) as i32))
        .collect();
    let caps: Vec<f64> = scenes
        .iter()
        .map(|s| equilibrium_measure(s.green(), s.cfg().k1()).unwrap().cap())
        .collect();
    let r = scaling_experiment(&scenes, Abscissa::Capacity, REPLICAS, SEED, 0).unwrap();
    let Some(fit) = r.fit else {
        return outcome(false, "no fit: every rung censored".into());
    };
    let favored = if (fit.slope - 1.5).abs() <= (fit.slope - 2.0).abs() {
        "1.5"
    } else {
        "2.0"
    };
    outcome(
        (1.0..=2.0).contains(&fit.slope),
        format!(
            "cap(K1) {caps:.3?}; cap exponent {:.3} (95% ci {:.3?}) in [1, 2]; favors {favored}",
            fit.slope, r.slope_ci
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut covs = Vec::new();
    let mut holds = true;
    for d in [16, 32, 64] {
        let c = covariance_tv_consistency(&singleton_scene(d, 1.0), REPLICAS, SEED, 0).unwrap();
        holds &= c.holds;
        covs.push((c.max_abs_cov, c.tv.tv));
    }
    let decreasing = covs.windows(2).all(|w| w[1].0 < w[0].0);
    outcome(
        holds && decreasing,
        format!(
            "(max |cov|, tv) at dist 16, 32, 64: {covs:.4?}; |cov| <= 3 (tv + 3 sd) and decreasing"
        ),
    )
}

fn criterion_10() -> Outcome {
    let scene = singleton_scene(9, 1.0);
    let csv = |threads| {
        let rows = coupling_rows(&scene, 5000, SEED, threads).unwrap();
        let mut out = Vec::new();
        write_coupling_csv(&mut out, &rows).unwrap();
        out
    };
    let same_rows = csv(1) == csv(8);
    let same_tv = trace_tv_experiment(&scene, 5000, SEED, 1).unwrap()
        == trace_tv_experiment(&scene, 5000, SEED, 8).unwrap();
    let scenes = [singleton_scene(9, 1.0), singleton_scene(17, 1.0)];
    let same_scaling = scaling_experiment(&scenes, Abscissa::Distance, 2000, SEED, 1).unwrap()
        == scaling_experiment(&scenes, Abscissa::Distance, 2000, SEED, 8).unwrap();
    outcome(
        same_rows && same_tv && same_scaling,
        format!("threads 1 vs 8: coupling csv identical {same_rows}, tv report {same_tv}, scaling report {same_scaling}"),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = Vec::new();
    let mut report = |name: &str, o: Outcome, secs: f64| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {name}: {status} [{secs:.1}s] {}", o.detail);
        if !o.pass {
            failed.push(name.to_string());
        }
    };
    let timed = |run: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = run();
        (o, t.elapsed().as_secs_f64())
    };
    let (o, t) = timed(&criterion_1);
    report("1", o, t);
    let (o, t) = timed(&criterion_2);
    report("2", o, t);
    let start = Instant::now();
    let (three, four) = criteria_3_and_4();
    let t = start.elapsed().as_secs_f64();
    report("3", three, t);
    report("4", four, t);
    for (name, run) in [
        ("5", criterion_5 as fn() -> Outcome),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8a", criterion_8a),
        ("8b", criterion_8b),
        ("8c", criterion_8c),
        ("9", criterion_9),
        ("10", criterion_10),
    ] {
        let (o, t) = timed(&run);
        report(name, o, t);
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
