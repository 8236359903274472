//! Soft local times over a finite start alphabet.
//!
//! Every density in play depends on an excursion only through its start site,
//! so the Poisson point process `η` on `Σ × R_+` with intensity `μ ⊗ dt` is
//! realized as independent Poisson processes of mark levels, one per site
//! `x ∈ ∂K` with rate `ē_K(x)`, and excursions are attached to marks only
//! when they are consumed.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::excursions::Excursion;
use crate::rng::RngStream;
use crate::scene::Scene;

/// Relative tolerance for matching a supplied mark level to a curve value.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

/// Density used for one step, as a function of the start site.
#[derive(Clone, Copy, Debug)]
pub enum Density<'a> {
    /// `g ≡ 1`.
    Uniform,
    /// `g(y, ·)` for the `j`-th site `y` of `∂_e V_R`.
    Exit(usize),
    /// An explicit vector over `∂K`.
    Vector(&'a [f64]),
}

impl Density<'_> {
    fn label(&self) -> String {
        match self {
            Density::Uniform => "uniform".into(),
            Density::Exit(j) => format!("exit:{j}"),
            Density::Vector(_) => "vector".into(),
        }
    }
}

/// A consumed mark of `η`.
#[derive(Clone, Debug)]
pub struct Mark {
    /// Step `n` at which the mark was consumed, from 1.
    pub step: usize,
    /// Index of the start site in `∂K`.
    pub site: usize,
    pub level: f64,
    /// `ξ_n`.
    pub xi: f64,
    /// The attached excursion, starting at `site`.
    pub excursion: Excursion,
}

/// One row of the audit transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptRow {
    pub step: usize,
    pub site: usize,
    pub level: f64,
    pub xi: f64,
    pub density: String,
}

/// Sum with a running compensation term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }
    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// State of the soft-local-times recursion.
#[derive(Clone, Debug)]
pub struct SltState {
    hbar: Vec<f64>,
    g: Vec<Compensated>,
    /// Level of the next unconsumed mark at each site.
    clocks: Vec<f64>,
    /// Excursion attached in advance to the next mark, if any.
    payload: Vec<Option<Excursion>>,
    /// Explicit marks waiting above the current clock, in increasing level.
    queued: Vec<VecDeque<(f64, Option<Excursion>)>>,
    /// Level of the last lazily generated mark (or the floor of the lazy part).
    lazy_base: Vec<f64>,
    consumed: Vec<u32>,
    rng: RngStream,
    curves: Vec<Vec<f64>>,
    marks: Vec<Mark>,
    transcript: Vec<TranscriptRow>,
}

impl SltState {
    /// `G ≡ 0`, with each site's first mark level drawn `Exp(ē_K(x))`.
    /// Sites with `ē_K(x) = 0` carry no marks.
    pub fn new(hbar: &[f64], clocks: RngStream) -> SltState {
        SltState::with_marks(hbar, Vec::new(), &vec![0.0; hbar.len()], clocks)
    }

    /// A point process made of the given explicit marks `(site, level,
    /// excursion)`, plus independent Poisson marks of rate `ē_K(x)` above
    /// `floor(x)` at each site. Explicit marks must lie at or below the floor
    /// of their site.
    pub fn with_marks(
        hbar: &[f64],
        explicit: Vec<(usize, f64, Option<Excursion>)>,
        floor: &[f64],
        clocks: RngStream,
    ) -> SltState {
        let n = hbar.len();
        assert_eq!(floor.len(), n);
        let mut queued: Vec<Vec<(f64, Option<Excursion>)>> = vec![Vec::new(); n];
        for (site, level, exc) in explicit {
            debug_assert!(level <= floor[site] + LEVEL_TOLERANCE * floor[site].abs().max(1.0));
            queued[site].push((level, exc));
        }
        let queued = queued
            .into_iter()
            .map(|mut v| {
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                VecDeque::from(v)
            })
            .collect();
        let mut s = SltState {
            hbar: hbar.to_vec(),
            g: vec![Compensated::default(); n],
            clocks: vec![f64::INFINITY; n],
            payload: vec![None; n],
            queued,
            lazy_base: floor.to_vec(),
            consumed: vec![0; n],
            rng: clocks,
            curves: Vec::new(),
            marks: Vec::new(),
            transcript: Vec::new(),
        };
        for x in 0..n {
            s.advance(x);
        }
        s
    }

    /// Toy state with hand-set first clock levels.
    pub fn with_clocks(hbar: &[f64], clocks: &[f64], rng: RngStream) -> SltState {
        let mut s = SltState::new(hbar, rng);
        s.clocks.copy_from_slice(clocks);
        s.lazy_base.copy_from_slice(clocks);
        s
    }

    fn advance(&mut self, x: usize) {
        if let Some((level, exc)) = self.queued[x].pop_front() {
            self.clocks[x] = level;
            self.payload[x] = exc;
        } else if self.hbar[x] > 0.0 {
            let e: f64 = Exp1.sample(&mut self.rng);
            self.lazy_base[x] += e / self.hbar[x];
            self.clocks[x] = self.lazy_base[x];
            self.payload[x] = None;
        } else {
            self.clocks[x] = f64::INFINITY;
            self.payload[x] = None;
        }
    }

    pub fn len(&self) -> usize {
        self.hbar.len()
    }
    pub fn is_empty(&self) -> bool {
        self.hbar.is_empty()
    }
    /// Number of steps taken.
    pub fn step(&self) -> usize {
        self.marks.len()
    }
    /// Current curve `G_n` over `∂K`.
    pub fn g(&self) -> Vec<f64> {
        self.g.iter().map(Compensated::value).collect()
    }
    pub fn g_at(&self, x: usize) -> f64 {
        self.g[x].value()
    }
    /// Curve after step `n` (`n = 0` is the starting curve, which is zero).
    pub fn curve(&self, n: usize) -> Vec<f64> {
        if n == 0 {
            vec![0.0; self.len()]
        } else {
            self.curves[n - 1].clone()
        }
    }
    /// Next unconsumed mark level at each site.
    pub fn clocks(&self) -> &[f64] {
        &self.clocks
    }
    /// Marks consumed per site.
    pub fn consumed(&self) -> &[u32] {
        &self.consumed
    }
    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }
    /// The stream the mark levels are drawn from.
    pub fn clock_stream(&self) -> &RngStream {
        &self.rng
    }
    pub fn into_marks(self) -> Vec<Mark> {
        self.marks
    }
    pub fn transcript(&self) -> &[TranscriptRow] {
        &self.transcript
    }

    /// One step of the recursion with the density `dens` over `∂K`:
    /// `ξ = min_x (t_x - G(x)) / dens(x)` over sites with positive density,
    /// the argmin mark is consumed (lowest index on ties) and `G += ξ dens`.
    /// Returns `ξ`, the site and the mark level, plus the excursion attached
    /// in advance to the mark, if any.
    pub fn next_raw(
        &mut self,
        dens: &[f64],
        label: String,
    ) -> Result<(f64, usize, f64, Option<Excursion>)> {
        assert_eq!(dens.len(), self.len());
        let mut best = f64::INFINITY;
        let mut site = usize::MAX;
        for (x, &w) in dens.iter().enumerate() {
            if w < 0.0 {
                return Err(Error::NegativeProbability {
                    what: "soft local time density",
                    value: w,
                });
            }
            if w > 0.0 && self.clocks[x].is_finite() {
                let l = ((self.clocks[x] - self.g[x].value()) / w).max(0.0);
                if l < best {
                    best = l;
                    site = x;
                }
            }
        }
        if site == usize::MAX {
            return Err(Error::DegenerateDensity);
        }
        let xi = best;
        for (x, &w) in dens.iter().enumerate() {
            if w > 0.0 {
                self.g[x].add(xi * w);
            }
        }
        let level = self.clocks[site];
        let payload = self.payload[site].take();
        self.consumed[site] += 1;
        self.advance(site);
        self.curves.push(self.g());
        self.transcript.push(TranscriptRow {
            step: self.marks.len() + 1,
            site,
            level,
            xi,
            density: label,
        });
        Ok((xi, site, level, payload))
    }

    fn record(&mut self, xi: f64, site: usize, level: f64, excursion: Excursion) -> &Mark {
        let step = self.marks.len() + 1;
        self.marks.push(Mark {
            step,
            site,
            level,
            xi,
            excursion,
        });
        self.marks.last().unwrap()
    }

    /// Replaces the consumed marks of steps `from, from + 1, ...` by the
    /// supplied `(site, level, excursion)` triples. Each level must equal the
    /// curve after its step at its site. The unconsumed marks are untouched.
    pub fn resample_overwrite(
        &mut self,
        from: usize,
        marks: Vec<(usize, f64, Excursion)>,
    ) -> Result<()> {
        if from == 0 || from + marks.len() > self.marks.len() + 1 {
            return Err(Error::InconsistentLevels(format!(
                "steps {from}..{} outside the {} consumed",
                from + marks.len(),
                self.marks.len()
            )));
        }
        for (k, (site, level, _)) in marks.iter().enumerate() {
            let step = from + k;
            let curve = self.curves[step - 1][*site];
            if (level - curve).abs() > LEVEL_TOLERANCE * curve.abs().max(1.0) {
                return Err(Error::InconsistentLevels(format!(
                    "step {step}: level {level} at site {site}, curve value {curve}"
                )));
            }
        }
        for (k, (site, level, exc)) in marks.into_iter().enumerate() {
            if exc.start_index() != site {
                return Err(Error::InconsistentLevels(format!(
                    "excursion starts at site {} but the mark is at site {site}",
                    exc.start_index()
                )));
            }
            let m = &mut self.marks[from + k - 1];
            self.consumed[m.site] -= 1;
            self.consumed[site] += 1;
            m.site = site;
            m.level = level;
            m.excursion = exc;
            let row = &mut self.transcript[from + k - 1];
            row.site = site;
            row.level = level;
        }
        Ok(())
    }

    /// Writes the transcript as CSV: step, site, level, xi, density.
    pub fn write_transcript<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["step", "site", "level", "xi", "density"])?;
        for r in &self.transcript {
            wr.write_record([
                r.step.to_string(),
                r.site.to_string(),
                format!("{:e}", r.level),
                format!("{:e}", r.xi),
                r.density.clone(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Fresh state for a scene: `G ≡ 0`, clocks `Exp(ē_K(x))`.
pub fn slt_init(scene: &Scene, clocks: RngStream) -> SltState {
    SltState::new(scene.hbar(), clocks)
}

/// One soft-local-times step. The consumed mark's excursion is drawn from
/// the conditional law of `μ` given its start, unless one was attached in
/// advance.
pub fn slt_next<'s, R: Rng + ?Sized>(
    state: &'s mut SltState,
    scene: &Scene,
    density: Density<'_>,
    paths: &mut R,
) -> Result<(f64, &'s Mark)> {
    let ones;
    let dens: &[f64] = match density {
        Density::Uniform => {
            ones = vec![1.0; state.len()];
            &ones
        }
        Density::Exit(j) => &scene.hit_row(j)?.density,
        Density::Vector(v) => v,
    };
    let (xi, site, level, payload) = state.next_raw(dens, density.label())?;
    let exc = match payload {
        Some(e) => e,
        None => scene.excursion_from(site, paths),
    };
    Ok((xi, state.record(xi, site, level, exc)))
}

/// Erase-then-rewrite surgery, see [`SltState::resample_overwrite`].
pub fn slt_resample_overwrite(
    state: &mut SltState,
    from: usize,
    marks: Vec<(usize, f64, Excursion)>,
) -> Result<()> {
    state.resample_overwrite(from, marks)
}

/// Recomputes the final curve from a transcript, with the same compensated
/// arithmetic as the live recursion.
pub fn replay_curve(scene: &Scene, transcript: &[TranscriptRow]) -> Result<Vec<f64>> {
    let n = scene.n_bk();
    let mut g = vec![Compensated::default(); n];
    for row in transcript {
        let dens: Vec<f64> = if row.density == "uniform" {
            vec![1.0; n]
        } else if let Some(j) = row.density.strip_prefix("exit:") {
            let j: usize = j
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("density id {}", row.density)))?;
            scene.hit_row(j)?.density.clone()
        } else {
            return Err(Error::InvalidArgument(format!(
                "density {} cannot be replayed",
                row.density
            )));
        };
        for x in 0..n {
            if dens[x] > 0.0 {
                g[x].add(row.xi * dens[x]);
            }
        }
    }
    Ok(g.iter().map(Compensated::value).collect())
}
