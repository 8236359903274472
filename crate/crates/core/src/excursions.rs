//! Simple random walk excursions from `∂K` to `∂_e V_R`, direct trajectory
//! simulation and traces on `K`.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Point};
use crate::scene::Scene;

const HASH_MUL: u64 = 0x517c_c1b7_2722_0a95;
const BINARY_MAGIC: &[u8; 4] = b"IEXC";
const BINARY_VERSION: u8 = 1;

/// A set of sites of `K`, as a bitmask over the fixed enumeration of `K`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trace {
    bits: Vec<u64>,
    n: usize,
}

impl Trace {
    /// The empty trace over a set of `n` sites.
    pub fn new(n: usize) -> Trace {
        Trace {
            bits: vec![0; n.div_ceil(64)],
            n,
        }
    }

    /// Trace from the low `n` bits of `mask`.
    pub fn from_mask(n: usize, mask: u64) -> Trace {
        let mut t = Trace::new(n);
        for i in 0..n.min(64) {
            if mask >> i & 1 == 1 {
                t.insert(i);
            }
        }
        t
    }

    /// Number of sites of the underlying set.
    pub fn universe(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n, "site index {i} outside K");
        self.bits[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn union_with(&mut self, other: &Trace) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn is_subset(&self, other: &Trace) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Number of occupied sites.
    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Occupied site indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&i| self.contains(i))
    }

    /// The bitmask as an integer, when `K` has at most 64 sites.
    pub fn mask(&self) -> Option<u64> {
        (self.n <= 64).then(|| self.bits.first().copied().unwrap_or(0))
    }

    /// Restriction to the sites with indices in `idx`, renumbered in order.
    pub fn restrict(&self, idx: &[usize]) -> Trace {
        let mut t = Trace::new(idx.len());
        for (j, &i) in idx.iter().enumerate() {
            if self.contains(i) {
                t.insert(j);
            }
        }
        t
    }
}

impl fmt::Debug for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Trace({self})")
    }
}

/// Site 0 first.
impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            f.write_str(if self.contains(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// One nearest-neighbour path from `∂K` stopped at its first visit to
/// `∂_e V_R`.
///
/// The path is stored as its start and its move directions. In memory-lean
/// mode only the visited sites of `K` and a fingerprint of the moves are
/// kept.
#[derive(Clone, Debug)]
pub struct Excursion {
    start: Point,
    start_bk: u32,
    end: Point,
    end_vr: u32,
    len: u32,
    fingerprint: u64,
    visited: Trace,
    moves: Option<Vec<u8>>,
}

impl Excursion {
    pub fn start(&self) -> Point {
        self.start
    }
    /// Index of the start site in `∂K`.
    pub fn start_index(&self) -> usize {
        self.start_bk as usize
    }
    pub fn end(&self) -> Point {
        self.end
    }
    /// Index of the end site in `∂_e V_R`.
    pub fn end_index(&self) -> usize {
        self.end_vr as usize
    }
    /// Number of steps.
    pub fn len(&self) -> usize {
        self.len as usize
    }
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
    /// Hash of the move sequence.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
    /// Sites of `K` visited, including the start.
    pub fn visited(&self) -> &Trace {
        &self.visited
    }
    /// Move directions, absent in memory-lean mode.
    pub fn moves(&self) -> Option<&[u8]> {
        self.moves.as_deref()
    }

    /// The full path `x_0, ..., x_n`, if the moves were kept.
    pub fn path(&self) -> Option<Vec<Point>> {
        let moves = self.moves.as_ref()?;
        let mut p = self.start;
        let mut out = Vec::with_capacity(moves.len() + 1);
        out.push(p);
        for &m in moves {
            p = p.step(m as usize);
            out.push(p);
        }
        Some(out)
    }

    /// Sort key identifying the path up to fingerprint collisions.
    pub fn key(&self) -> (Point, Point, u32, u64) {
        (self.start, self.end, self.len, self.fingerprint)
    }

    /// Rebuilds an excursion from its start and moves, checking validity.
    pub fn from_moves(cfg: &Configuration, start: &Point, moves: Vec<u8>) -> Result<Excursion> {
        let start_bk = cfg
            .boundary_k()
            .index_of(start)
            .ok_or_else(|| Error::NotInSet {
                site: start.to_string(),
                set: "∂K",
            })? as u32;
        let two_d = 2 * cfg.dim();
        let mut visited = Trace::new(cfg.k().len());
        let mut h = 0u64;
        let mut p = *start;
        visited.insert(cfg.k().index_of(start).expect("∂K ⊂ K"));
        for (i, &m) in moves.iter().enumerate() {
            if m as usize >= two_d {
                return Err(Error::InvalidArgument(format!("move {m} out of range")));
            }
            if i > 0 && !cfg.vr().contains(&p) {
                return Err(Error::config(
                    "excursion ends at its first visit to ∂_e V_R",
                    format!("step {i} leaves V_R at {p}"),
                ));
            }
            p = p.step(m as usize);
            h = mix(h, m);
            if let Some(k) = cfg.k().index_of(&p) {
                visited.insert(k);
            }
        }
        let end_vr = cfg
            .boundary_vr()
            .index_of(&p)
            .ok_or_else(|| Error::NotInSet {
                site: p.to_string(),
                set: "∂_e V_R",
            })? as u32;
        Ok(Excursion {
            start: *start,
            start_bk,
            end: p,
            end_vr,
            len: moves.len() as u32,
            fingerprint: finish(h, moves.len()),
            visited,
            moves: Some(moves),
        })
    }

    /// Drops the stored moves.
    pub fn into_lean(mut self) -> Excursion {
        self.moves = None;
        self
    }
}

/// Paths are compared sitewise when both sides kept their moves, and by
/// fingerprint otherwise.
impl PartialEq for Excursion {
    fn eq(&self, other: &Excursion) -> bool {
        if self.key() != other.key() {
            return false;
        }
        match (&self.moves, &other.moves) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }
}

impl Eq for Excursion {}

#[inline]
fn mix(h: u64, m: u8) -> u64 {
    (h.rotate_left(5) ^ m as u64).wrapping_mul(HASH_MUL)
}

#[inline]
fn finish(h: u64, len: usize) -> u64 {
    let mut x = h ^ (len as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x
}

/// Runs simple random walk from `start ∈ ∂K` until its first visit to
/// `∂_e V_R`.
///
/// Positions are tracked relative to the center of the ball containing the
/// walk, so leaving the ball is one integer comparison per step.
pub fn sample_excursion<R: Rng + ?Sized>(
    cfg: &Configuration,
    start: &Point,
    rng: &mut R,
    keep_moves: bool,
) -> Result<Excursion> {
    let start_bk = cfg
        .boundary_k()
        .index_of(start)
        .ok_or_else(|| Error::NotInSet {
            site: start.to_string(),
            set: "∂K",
        })?;
    Ok(walk(cfg, start, start_bk, rng, keep_moves))
}

pub(crate) fn walk<R: Rng + ?Sized>(
    cfg: &Configuration,
    start: &Point,
    start_bk: usize,
    rng: &mut R,
    keep_moves: bool,
) -> Excursion {
    let two_d = 2 * cfg.dim();
    let b = cfg.vr().ball_of(start).expect("∂K ⊂ V_R");
    let center = cfg.vr().centers()[b];
    let max_inside = cfg.vr().max_inside_norm_sq();
    let reach = cfg.k_reach_sq();
    let mut rel = *start - center;
    let mut nsq = rel.norm_sq();
    let mut visited = Trace::new(cfg.k().len());
    visited.insert(cfg.k().index_of(start).expect("∂K ⊂ K"));
    let mut moves = if keep_moves {
        Some(Vec::with_capacity(64))
    } else {
        None
    };
    let mut h = 0u64;
    let mut len = 0usize;
    loop {
        let m = rng.random_range(0..two_d);
        let x = rel.coords()[m >> 1] as i64;
        nsq += if m & 1 == 0 { 2 * x + 1 } else { 1 - 2 * x };
        rel = rel.step(m);
        len += 1;
        h = mix(h, m as u8);
        if let Some(mv) = moves.as_mut() {
            mv.push(m as u8);
        }
        if nsq > max_inside {
            break;
        }
        if nsq <= reach {
            if let Some(k) = cfg.k_index_at_offset(b, &rel, nsq) {
                visited.insert(k);
            }
        }
    }
    let end = rel + center;
    let end_vr = cfg
        .boundary_vr()
        .index_of(&end)
        .expect("first site outside a ball lies on ∂_e V_R");
    let exc = Excursion {
        start: *start,
        start_bk: start_bk as u32,
        end,
        end_vr: end_vr as u32,
        len: len as u32,
        fingerprint: finish(h, len),
        visited,
        moves,
    };
    if cfg!(debug_assertions) || exc.fingerprint.is_multiple_of(100) {
        if let Err(e) = validate_excursion(cfg, &exc) {
            panic!("invalid excursion: {e}");
        }
    }
    exc
}

/// Checks the path invariants: unit steps, start in `∂K`, end in `∂_e V_R`
/// and no earlier visit to `∂_e V_R`. Without stored moves only the
/// endpoints are checked.
pub fn validate_excursion(cfg: &Configuration, exc: &Excursion) -> Result<()> {
    if !cfg.boundary_k().contains(&exc.start) {
        return Err(Error::NotInSet {
            site: exc.start.to_string(),
            set: "∂K",
        });
    }
    if !cfg.boundary_vr().contains(&exc.end) {
        return Err(Error::NotInSet {
            site: exc.end.to_string(),
            set: "∂_e V_R",
        });
    }
    if exc.len == 0 {
        return Err(Error::config("excursion length >= 1", "empty path"));
    }
    let Some(path) = exc.path() else {
        return Ok(());
    };
    for w in path.windows(2) {
        if (w[1] - w[0]).norm_sq() != 1 {
            return Err(Error::config("unit steps", format!("{} -> {}", w[0], w[1])));
        }
    }
    for p in &path[..path.len() - 1] {
        if cfg.boundary_vr().contains(p) || !cfg.vr().contains(p) {
            return Err(Error::config(
                "excursion ends at its first visit to ∂_e V_R",
                format!("interior site {p}"),
            ));
        }
    }
    if *path.last().unwrap() != exc.end {
        return Err(Error::config(
            "path ends at the recorded end",
            exc.end.to_string(),
        ));
    }
    Ok(())
}

impl Scene {
    /// Excursion from the `i`-th site of `∂K`.
    pub fn excursion_from<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Excursion {
        let start = self.cfg().boundary_k().sites()[i];
        walk(self.cfg(), &start, i, rng, !self.options().memory_lean)
    }

    /// Excursion with start drawn from the harmonic measure, i.e. a draw
    /// from the normalized `μ`.
    pub fn harmonic_excursion<R: Rng + ?Sized>(&self, rng: &mut R) -> Excursion {
        let i = self.sample_harmonic_index(rng);
        self.excursion_from(i, rng)
    }
}

/// Start site drawn from the harmonic measure `ē_K`.
pub fn sample_from_harmonic<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Point {
    scene.cfg().boundary_k().sites()[scene.sample_harmonic_index(rng)]
}

/// When a directly simulated trajectory stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// Stop after each excursion with probability `p_y`.
    Unconditioned,
    /// First excursion stops with probability `(p_y - q) / (1 - q)`, later
    /// ones with `p_y`: the trajectories counted by `N1`.
    PossiblyReturning,
}

/// Stopping probability after an excursion ending at exit index `j`.
#[inline]
pub fn kappa(scene: &Scene, j: usize, first: bool, rule: StopRule) -> f64 {
    let p = scene.p_exit(j);
    if first && rule == StopRule::PossiblyReturning {
        let q = scene.q();
        if q >= 1.0 {
            1.0
        } else {
            ((p - q) / (1.0 - q)).clamp(0.0, 1.0)
        }
    } else {
        p
    }
}

/// Simulates the excursions of one trajectory directly: start from `ē_K`,
/// after each excursion ending at `y` stop with the rule's probability, else
/// re-enter `∂K` at a site drawn from the exact hitting law of `y`.
pub fn direct_trajectory<R: Rng + ?Sized>(
    scene: &Scene,
    rng: &mut R,
    rule: StopRule,
) -> Result<Vec<Excursion>> {
    let mut out = Vec::new();
    let mut i = scene.sample_harmonic_index(rng);
    loop {
        let exc = scene.excursion_from(i, rng);
        let j = exc.end_index();
        let stop = rng.random::<f64>() < kappa(scene, j, out.is_empty(), rule);
        out.push(exc);
        if stop {
            return Ok(out);
        }
        i = scene.hit_row(j)?.sample(rng);
    }
}

/// Union of the visited sites of `K`.
pub fn trace<'a, I>(excursions: I, k_len: usize) -> Trace
where
    I: IntoIterator<Item = &'a Excursion>,
{
    let mut t = Trace::new(k_len);
    for e in excursions {
        t.union_with(&e.visited);
    }
    t
}

/// Writes excursions as compact binary records: a header
/// `IEXC, version, dim, count`, then per excursion the start coordinates
/// (`i32` little endian), the length (`u32`) and the moves packed two per
/// byte.
pub fn write_binary<W: Write>(mut w: W, dim: usize, excursions: &[Excursion]) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&[BINARY_VERSION, dim as u8])?;
    w.write_all(&(excursions.len() as u64).to_le_bytes())?;
    for e in excursions {
        let moves = e
            .moves()
            .ok_or_else(|| Error::InvalidArgument("binary export needs stored moves".into()))?;
        for &c in e.start.coords() {
            w.write_all(&c.to_le_bytes())?;
        }
        w.write_all(&e.len.to_le_bytes())?;
        for pair in moves.chunks(2) {
            let hi = pair.get(1).copied().unwrap_or(0);
            w.write_all(&[pair[0] | hi << 4])?;
        }
    }
    Ok(())
}

/// Reads records written by [`write_binary`], replaying and checking every
/// path against the scene.
pub fn read_binary<R: Read>(mut r: R, cfg: &Configuration) -> Result<Vec<Excursion>> {
    let mut head = [0u8; 14];
    r.read_exact(&mut head)?;
    if &head[..4] != BINARY_MAGIC || head[4] != BINARY_VERSION {
        return Err(Error::Parse {
            line: 0,
            message: "not an excursion record file".into(),
        });
    }
    let dim = head[5] as usize;
    if dim != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            found: dim,
        });
    }
    let count = u64::from_le_bytes(head[6..14].try_into().unwrap());
    let mut out = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut word = [0u8; 4];
    for _ in 0..count {
        let mut coords = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut word)?;
            coords.push(i32::from_le_bytes(word));
        }
        r.read_exact(&mut word)?;
        let len = u32::from_le_bytes(word) as usize;
        let mut packed = vec![0u8; len.div_ceil(2)];
        r.read_exact(&mut packed)?;
        let moves: Vec<u8> = (0..len)
            .map(|i| packed[i / 2] >> (4 * (i % 2)) & 0xf)
            .collect();
        out.push(Excursion::from_moves(cfg, &Point::new(&coords), moves)?);
    }
    Ok(out)
}

/// Writes one CSV row per excursion: index, start, end, length, fingerprint
/// and the move string (one digit per step, empty in memory-lean mode).
pub fn write_csv<W: Write>(w: W, excursions: &[Excursion]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "start", "end", "len", "fingerprint", "moves"])?;
    for (i, e) in excursions.iter().enumerate() {
        let moves: String = e
            .moves()
            .map(|m| m.iter().map(|&d| char::from(b'0' + d)).collect())
            .unwrap_or_default();
        wr.write_record([
            i.to_string(),
            e.start.to_string(),
            e.end.to_string(),
            e.len.to_string(),
            format!("{:016x}", e.fingerprint),
            moves,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SiteSet;
    use crate::rng::RngStream;

    fn scene() -> Scene {
        let cfg = Configuration::new(
            SiteSet::singleton(Point::origin(3)),
            Point::new(&[9, 0, 0]),
            1.0,
        )
        .unwrap();
        Scene::build(cfg).unwrap()
    }

    #[test]
    fn excursions_are_valid_and_deterministic() {
        let s = scene();
        let mut a = RngStream::new(5, 1);
        let mut b = RngStream::new(5, 1);
        for _ in 0..200 {
            let e = s.harmonic_excursion(&mut a);
            let f = s.harmonic_excursion(&mut b);
            assert_eq!(e, f);
            assert!(!e.is_empty());
            validate_excursion(s.cfg(), &e).unwrap();
            assert!(e
                .visited()
                .contains(s.cfg().k().index_of(&e.start()).unwrap()));
        }
    }

    #[test]
    fn start_outside_boundary_is_rejected() {
        let s = scene();
        let mut r = RngStream::new(1, 1);
        assert!(sample_excursion(s.cfg(), &Point::new(&[1, 0, 0]), &mut r, true).is_err());
    }

    #[test]
    fn binary_and_replay_round_trip() {
        let s = scene();
        let mut r = RngStream::new(9, 2);
        let ex: Vec<Excursion> = (0..50).map(|_| s.harmonic_excursion(&mut r)).collect();
        let mut buf = Vec::new();
        write_binary(&mut buf, 3, &ex).unwrap();
        let back = read_binary(&buf[..], s.cfg()).unwrap();
        assert_eq!(back.len(), ex.len());
        for (a, b) in ex.iter().zip(&back) {
            assert_eq!(a, b);
            assert_eq!(a.fingerprint(), b.fingerprint());
            assert_eq!(a.visited(), b.visited());
            assert_eq!(a.end_index(), b.end_index());
        }
        let mut csv_buf = Vec::new();
        write_csv(&mut csv_buf, &ex[..2]).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        assert!(text.starts_with("index,start,end,len,fingerprint,moves"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn forced_escape_gives_single_excursions() {
        let cfg = Configuration::new(
            SiteSet::singleton(Point::origin(3)),
            Point::new(&[9, 0, 0]),
            1.0,
        )
        .unwrap();
        let opts = crate::scene::SceneOptions {
            force_escape: true,
            ..Default::default()
        };
        let s = Scene::new(cfg, opts).unwrap();
        let mut r = RngStream::new(3, 3);
        for _ in 0..500 {
            assert_eq!(
                direct_trajectory(&s, &mut r, StopRule::Unconditioned)
                    .unwrap()
                    .len(),
                1
            );
        }
    }

    #[test]
    fn trace_basics() {
        let s = scene();
        let n = s.cfg().k().len();
        assert!(trace(std::iter::empty(), n).is_empty());
        let mut r = RngStream::new(4, 4);
        let ex: Vec<Excursion> = (0..20).map(|_| s.harmonic_excursion(&mut r)).collect();
        let mut prev = Trace::new(n);
        for m in 1..=ex.len() {
            let t = trace(&ex[..m], n);
            assert!(prev.is_subset(&t));
            prev = t;
        }
        let t = Trace::from_mask(5, 0b10110);
        assert_eq!(t.to_string(), "01101");
        assert_eq!(t.count(), 3);
        assert_eq!(t.mask(), Some(0b10110));
        assert_eq!(t.restrict(&[1, 3]).mask(), Some(0b01));
    }

    #[test]
    fn lean_mode_keeps_visits_and_fingerprint() {
        let s = scene();
        let mut r = RngStream::new(6, 1);
        let e = s.harmonic_excursion(&mut r);
        let lean = e.clone().into_lean();
        assert!(lean.moves().is_none());
        assert_eq!(lean, e);
        assert_eq!(lean.visited(), e.visited());
    }
}
