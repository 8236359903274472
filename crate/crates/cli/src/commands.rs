//! Subcommand implementations. Each returns a report; writing is left to
//! the caller.

use interlace::analysis::{
    covariance_experiment, covariance_tv_consistency, lemma_suite, level_ratio, scaling_experiment,
    trace_tv_experiment, Abscissa, ScalingReport, TraceHistogram, MAX_HISTOGRAM_SITES,
};
use interlace::coupling::{coupling_rows, CouplingEstimate, COUPLING_CSV_COLUMNS};
use interlace::lattice::set_distance;
use interlace::potential::equilibrium_measure;
use interlace::processes::{build_ns, build_ri};
use interlace::replicas::run_replicas;
use interlace::rng::ReplicaStreams;
use interlace::scene::Scene;
use interlace::{Error, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{Report, Table};
use crate::{Command, ExperimentName, Process};

fn num(x: f64) -> String {
    x.to_string()
}

fn coords(p: &interlace::lattice::Point) -> String {
    p.coords()
        .iter()
        .map(i32::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Report> {
    match cmd {
        Command::Potential => potential(cfg),
        Command::Sample { process } => sample(cfg, *process),
        Command::Couple => couple(cfg),
        Command::Experiment { name } => match name {
            ExperimentName::Scaling => scaling(cfg),
            ExperimentName::Covariance => covariance(cfg),
            ExperimentName::Lemmas => lemmas(cfg),
            ExperimentName::Tv => tv(cfg),
        },
    }
}

fn scene_summary(s: &Scene) -> Result<Value> {
    let c = s.cfg();
    let eq = s.equilibrium();
    Ok(json!({
        "dim": c.dim(),
        "xhat": c.xhat().coords(),
        "u": s.u(),
        "R": c.r(),
        "k1_sites": c.k1().len(),
        "dist": set_distance(c.k1(), c.k2())?,
        "cap_k": s.cap(),
        "cap_k1": equilibrium_measure(s.green(), c.k1())?.cap(),
        "equilibrium_residual": eq.residual(),
        "condition": eq.condition(),
        "q": s.q(),
        "q_argmin": c.boundary_vr().len().min(1).checked_sub(1).map(|_| coords(&s.escape().argmin())),
        "regime_ok": s.escape().regime_ok(),
        "boundary_k_sites": s.n_bk(),
        "boundary_vr_sites": c.boundary_vr().len(),
        "mean_total_excursions": s.mean_total_excursions()?,
        "mean_theta": s.mean_theta()?,
        "u_cap": s.theta(),
    }))
}

fn potential(cfg: &RunConfig) -> Result<Report> {
    let s = cfg.scene()?;
    let c = s.cfg();
    let eq = s.equilibrium();
    let mut t = Table::new(&["index", "set", "site", "e", "hbar", "boundary"]);
    for (i, (x, (e, h))) in eq.k().iter().zip(eq.e().iter().zip(eq.hbar())).enumerate() {
        t.push(vec![
            i.to_string(),
            if c.k1().contains(x) { "K1" } else { "K2" }.into(),
            coords(x),
            num(*e),
            num(*h),
            u8::from(c.boundary_k().contains(x)).to_string(),
        ]);
    }
    Ok(Report {
        name: "potential",
        table: Some(t),
        summary: scene_summary(&s)?,
    })
}

fn histogram_json(h: Option<TraceHistogram>) -> Value {
    match h {
        Some(h) => json!(h.counts()),
        None => Value::Null,
    }
}

fn sample(cfg: &RunConfig, process: Process) -> Result<Report> {
    let s = cfg.scene()?;
    let k = s.cfg().k().len();
    let e = &cfg.engine;
    let mut hist = if k <= MAX_HISTOGRAM_SITES {
        Some(TraceHistogram::new(k)?)
    } else {
        None
    };
    match process {
        Process::Ri => {
            let out = run_replicas(e.replicas, e.threads, |id| {
                let mut st = ReplicaStreams::new(e.seed, id);
                let r = build_ri(&s, &mut st)?;
                Ok((r.n1, r.theta, r.n2, r.ntot, r.trace(k)))
            })?;
            let mut t = Table::new(&["replica", "N1", "Theta", "N2", "N", "trace"]);
            let mut sums = [0u64; 4];
            for (id, (n1, th, n2, n, tr)) in out.into_iter().enumerate() {
                sums[0] += n1;
                sums[1] += th;
                sums[2] += n2;
                sums[3] += n;
                if let Some(h) = hist.as_mut() {
                    h.add(&tr)?;
                }
                t.push(vec![
                    id.to_string(),
                    n1.to_string(),
                    th.to_string(),
                    n2.to_string(),
                    n.to_string(),
                    tr.to_string(),
                ]);
            }
            let m = |v: u64| v as f64 / e.replicas as f64;
            Ok(Report {
                name: "sample_ri",
                table: Some(t),
                summary: json!({
                    "replicas": e.replicas,
                    "mean_N1": m(sums[0]),
                    "mean_Theta": m(sums[1]),
                    "mean_N2": m(sums[2]),
                    "mean_N": m(sums[3]),
                    "expected_N": s.mean_total_excursions()?,
                    "expected_Theta": s.mean_theta()?,
                    "trace_histogram": histogram_json(hist),
                }),
            })
        }
        Process::Ns => {
            let out = run_replicas(e.replicas, e.threads, |id| {
                let mut st = ReplicaStreams::new(e.seed, id);
                let r = build_ns(&s, &mut st)?;
                Ok((r.n_prime, r.trace(k)))
            })?;
            let mut t = Table::new(&["replica", "Nprime", "trace"]);
            let mut sum = 0u64;
            for (id, (n, tr)) in out.into_iter().enumerate() {
                sum += n;
                if let Some(h) = hist.as_mut() {
                    h.add(&tr)?;
                }
                t.push(vec![id.to_string(), n.to_string(), tr.to_string()]);
            }
            Ok(Report {
                name: "sample_ns",
                table: Some(t),
                summary: json!({
                    "replicas": e.replicas,
                    "mean_Nprime": sum as f64 / e.replicas as f64,
                    "expected_N": s.mean_total_excursions()?,
                    "trace_histogram": histogram_json(hist),
                }),
            })
        }
    }
}

fn couple(cfg: &RunConfig) -> Result<Report> {
    let s = cfg.scene()?;
    let e = &cfg.engine;
    let rows = coupling_rows(&s, e.replicas, e.seed, e.threads)?;
    let est = CouplingEstimate::from_rows(&rows);
    let mut t = Table::new(&COUPLING_CSV_COLUMNS);
    rows.iter().for_each(|r| t.push(r.fields()));
    Ok(Report {
        name: "couple",
        table: Some(t),
        summary: json!({ "scene": scene_summary(&s)?, "estimate": est }),
    })
}

fn ladder_scenes(cfg: &RunConfig) -> Result<Vec<Scene>> {
    if cfg.experiment.distances.is_empty() {
        return Err(Error::InvalidArgument(
            "experiment.distances is empty".into(),
        ));
    }
    cfg.experiment
        .distances
        .iter()
        .map(|&d| cfg.scene_at(d))
        .collect()
}

fn push_scaling(t: &mut Table, kind: &str, r: &ScalingReport) {
    for g in &r.ladder {
        t.push(vec![
            kind.into(),
            num(g.dist),
            num(g.cap_k1),
            num(g.u),
            g.replicas.to_string(),
            g.failures.to_string(),
            num(g.phat),
            num(g.ci.0),
            num(g.ci.1),
            u8::from(g.censored).to_string(),
        ]);
    }
}

fn scaling(cfg: &RunConfig) -> Result<Report> {
    let e = &cfg.engine;
    let mut t = Table::new(&[
        "ladder", "dist", "cap_k1", "u", "replicas", "failures", "phat", "ci_lo", "ci_hi",
        "censored",
    ]);
    let dist = scaling_experiment(
        &ladder_scenes(cfg)?,
        Abscissa::Distance,
        e.replicas,
        e.seed,
        e.threads,
    )?;
    push_scaling(&mut t, "distance", &dist);
    let mut summary = json!({ "distance": dist });
    if !cfg.experiment.radii.is_empty() {
        let scenes = cfg
            .experiment
            .radii
            .iter()
            .map(|&r| Scene::new(cfg.capacity_rung(r)?, cfg.options()))
            .collect::<Result<Vec<_>>>()?;
        let cap = scaling_experiment(&scenes, Abscissa::Capacity, e.replicas, e.seed, e.threads)?;
        push_scaling(&mut t, "capacity", &cap);
        let favored = cap.fit.as_ref().map(|f| {
            if (f.slope - 1.5).abs() <= (f.slope - 2.0).abs() {
                1.5
            } else {
                2.0
            }
        });
        summary["capacity"] = json!(cap);
        summary["capacity_exponent_favored"] = json!(favored);
    }
    if cfg.experiment.levels.len() >= 2 {
        let base = cfg.scene()?;
        let (u1, u2) = (cfg.experiment.levels[0], cfg.experiment.levels[1]);
        match level_ratio(&base, u1, u2, e.replicas, e.seed, e.threads) {
            Ok(r) => {
                summary["level_ratio"] = json!(r);
                summary["level_ratio_sqrt_prediction"] = json!((u2 / u1).sqrt());
            }
            Err(Error::ZeroTotal) => summary["level_ratio"] = Value::Null,
            Err(err) => return Err(err),
        }
    }
    Ok(Report {
        name: "scaling",
        table: Some(t),
        summary,
    })
}

fn covariance(cfg: &RunConfig) -> Result<Report> {
    let e = &cfg.engine;
    let x = &cfg.experiment;
    let mut t = Table::new(&[
        "dist",
        "cov",
        "se",
        "ci_lo",
        "ci_hi",
        "shape_new",
        "shape_old",
    ]);
    let mut rungs = Vec::new();
    for (s, d) in ladder_scenes(cfg)?.iter().zip(&x.distances) {
        let c = covariance_experiment(s, &x.f1, &x.f2, e.replicas, e.seed, e.threads)?;
        t.push(vec![
            d.to_string(),
            num(c.cov),
            num(c.se),
            num(c.ci.0),
            num(c.ci.1),
            num(c.shape_new),
            num(c.shape_old),
        ]);
        rungs.push(json!({ "dist": d, "estimate": c }));
    }
    Ok(Report {
        name: "covariance",
        table: Some(t),
        summary: json!({ "f1": x.f1, "f2": x.f2, "rungs": rungs }),
    })
}

fn lemmas(cfg: &RunConfig) -> Result<Report> {
    let rep = lemma_suite(&ladder_scenes(cfg)?)?;
    let mut t = Table::new(&[
        "xhat_norm",
        "R",
        "u",
        "cap_k1",
        "cap_k",
        "q",
        "one_minus_q",
        "sup_g_dev",
        "harmonic_margin",
        "inv_sqrt_n22",
        "inv_sqrt_shape",
        "p_n1_no_n22",
        "p_n1_no_n22_shape",
        "shift_tv_ratio",
    ]);
    for r in &rep.rungs {
        t.push(
            [
                r.xhat_norm,
                r.r,
                r.u,
                r.cap_k1,
                r.cap_k,
                r.q,
                r.one_minus_q,
                r.sup_g_dev,
                r.harmonic_margin,
                r.inv_sqrt_n22,
                r.inv_sqrt_shape,
                r.p_n1_no_n22,
                r.p_n1_no_n22_shape,
                r.shift_tv_ratio,
            ]
            .into_iter()
            .map(num)
            .collect(),
        );
    }
    Ok(Report {
        name: "lemmas",
        table: Some(t),
        summary: json!(rep),
    })
}

fn tv(cfg: &RunConfig) -> Result<Report> {
    let e = &cfg.engine;
    let mut t = Table::new(&[
        "dist",
        "tv",
        "tv_lo",
        "tv_hi",
        "tv_sd",
        "phat",
        "phat_lo",
        "phat_hi",
        "margin",
        "tv_below_phat",
        "max_abs_cov",
        "cov_below_3tv",
    ]);
    let mut rungs = Vec::new();
    for (s, d) in ladder_scenes(cfg)?.iter().zip(&cfg.experiment.distances) {
        let r = trace_tv_experiment(s, e.replicas, e.seed, e.threads)?;
        let c = match covariance_tv_consistency(s, e.replicas, e.seed, e.threads) {
            Ok(c) => Some(c),
            Err(Error::TooManySites(_)) => None,
            Err(err) => return Err(err),
        };
        t.push(vec![
            d.to_string(),
            num(r.tv.tv),
            num(r.tv.ci.0),
            num(r.tv.ci.1),
            num(r.tv.sd),
            num(r.coupling.phat),
            num(r.coupling.ci.0),
            num(r.coupling.ci.1),
            num(r.margin),
            u8::from(r.holds).to_string(),
            c.as_ref().map(|c| num(c.max_abs_cov)).unwrap_or_default(),
            c.as_ref()
                .map(|c| u8::from(c.holds).to_string())
                .unwrap_or_default(),
        ]);
        rungs.push(json!({ "dist": d, "trace_tv": r, "covariance": c }));
    }
    Ok(Report {
        name: "tv",
        table: Some(t),
        summary: json!({ "rungs": rungs }),
    })
}
