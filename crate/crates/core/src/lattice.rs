//! Integer-lattice geometry: points, site sets, balls, boundaries and the
//! two-ball scene.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

/// A point of Z^d, `1 <= d <= MAX_DIM`.
///
/// Ordering is lexicographic on coordinates for points of equal dimension.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Point {
    /// Builds a point from its coordinates. Panics if there are none or more
    /// than [`MAX_DIM`].
    pub fn new(coords: &[i32]) -> Point {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "point dimension must be in 1..={MAX_DIM}"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point {
            dim: coords.len() as u8,
            coords: c,
        }
    }

    pub fn origin(dim: usize) -> Point {
        assert!((1..=MAX_DIM).contains(&dim));
        Point {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        }
    }

    /// The point `sign * e_axis`.
    pub fn unit(dim: usize, axis: usize, sign: i32) -> Point {
        let mut p = Point::origin(dim);
        p.coords[axis] = sign;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn norm_sq(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// Largest absolute coordinate.
    pub fn max_abs(&self) -> u32 {
        self.coords()
            .iter()
            .map(|c| c.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Neighbour in direction `dir`, where `dir = 2 * axis` is `+e_axis` and
    /// `dir = 2 * axis + 1` is `-e_axis`.
    #[inline]
    pub fn step(&self, dir: usize) -> Point {
        let mut p = *self;
        if dir & 1 == 0 {
            p.coords[dir >> 1] += 1;
        } else {
            p.coords[dir >> 1] -= 1;
        }
        p
    }

    /// The `2d` nearest neighbours, in direction order.
    pub fn neighbours(&self) -> impl Iterator<Item = Point> + '_ {
        (0..2 * self.dim()).map(move |dir| self.step(dir))
    }

    /// Direction index of the unit step from `self` to `other`, if adjacent.
    pub fn direction_to(&self, other: &Point) -> Option<usize> {
        if self.dim != other.dim {
            return None;
        }
        let mut found = None;
        for i in 0..self.dim() {
            match other.coords[i] - self.coords[i] {
                0 => {}
                1 if found.is_none() => found = Some(2 * i),
                -1 if found.is_none() => found = Some(2 * i + 1),
                _ => return None,
            }
        }
        found
    }
}

impl Add for Point {
    type Output = Point;
    fn add(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim() {
            self.coords[i] += rhs.coords[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(mut self, rhs: Point) -> Point {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim() {
            self.coords[i] -= rhs.coords[i];
        }
        self
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(mut self) -> Point {
        for i in 0..self.dim() {
            self.coords[i] = -self.coords[i];
        }
        self
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// A finite set of sites with a canonical (sorted) enumeration.
#[derive(Clone, Default)]
pub struct SiteSet {
    sites: Vec<Point>,
    index: HashMap<Point, usize>,
}

impl SiteSet {
    pub fn new<I: IntoIterator<Item = Point>>(points: I) -> SiteSet {
        let mut sites: Vec<Point> = points.into_iter().collect();
        sites.sort_unstable();
        sites.dedup();
        let index = sites.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        SiteSet { sites, index }
    }

    pub fn empty() -> SiteSet {
        SiteSet::default()
    }

    pub fn singleton(p: Point) -> SiteSet {
        SiteSet::new([p])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        self.index.contains_key(p)
    }

    #[inline]
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.index.get(p).copied()
    }

    #[inline]
    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.sites.iter()
    }

    /// Common dimension of the sites, `None` for the empty set.
    pub fn dim(&self) -> Option<usize> {
        self.sites.first().map(Point::dim)
    }

    pub fn translate(&self, v: Point) -> SiteSet {
        SiteSet::new(self.sites.iter().map(|p| *p + v))
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        SiteSet::new(self.sites.iter().chain(other.sites.iter()).copied())
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.sites.iter().all(|p| other.contains(p))
    }

    fn check_dim(&self) -> Result<()> {
        if let Some(d) = self.dim() {
            if let Some(p) = self.sites.iter().find(|p| p.dim() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.dim(),
                });
            }
        }
        Ok(())
    }

    /// Writes one site per line, coordinates separated by single spaces.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.sites {
            let line: Vec<String> = p.coords().iter().map(i32::to_string).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads the format of [`SiteSet::write_text`]. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn read_text<R: BufRead>(r: R) -> Result<SiteSet> {
        let mut pts = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let coords: std::result::Result<Vec<i32>, _> =
                t.split_whitespace().map(str::parse::<i32>).collect();
            let coords = coords.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if coords.is_empty() || coords.len() > MAX_DIM {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 1..={MAX_DIM} coordinates"),
                });
            }
            pts.push(Point::new(&coords));
        }
        let set = SiteSet::new(pts);
        set.check_dim()?;
        Ok(set)
    }
}

impl PartialEq for SiteSet {
    fn eq(&self, other: &SiteSet) -> bool {
        self.sites == other.sites
    }
}

impl Eq for SiteSet {}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.sites.iter()).finish()
    }
}

impl<'a> IntoIterator for &'a SiteSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;
    fn into_iter(self) -> Self::IntoIter {
        self.sites.iter()
    }
}

impl FromIterator<Point> for SiteSet {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> SiteSet {
        SiteSet::new(iter)
    }
}

/// A ball radius with exact comparison against squared integer norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Radius {
    /// `num / den` with `den` a power of two.
    Dyadic { num: i128, den: i128 },
    /// `(sqrt(norm_sq) - 1) / 2`, the half-distance radius of a two-ball scene.
    HalfGap { norm_sq: i64 },
}

impl Radius {
    /// Exact dyadic representation of a positive finite `f64`, rounded to a
    /// multiple of `2^-30` when finer.
    pub fn from_f64(r: f64) -> Result<Radius> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidRadius(r));
        }
        let bits = r.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mut mant, mut e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        while mant & 1 == 0 && mant != 0 {
            mant >>= 1;
            e += 1;
        }
        if e >= 0 {
            if e > 30 {
                return Err(Error::InvalidRadius(r));
            }
            Ok(Radius::Dyadic {
                num: (mant as i128) << e,
                den: 1,
            })
        } else {
            if -e > 30 {
                return Ok(Radius::Dyadic {
                    num: (r * (1u64 << 30) as f64).round() as i128,
                    den: 1 << 30,
                });
            }
            Ok(Radius::Dyadic {
                num: mant as i128,
                den: 1i128 << (-e),
            })
        }
    }

    pub fn half_gap(norm_sq: i64) -> Radius {
        Radius::HalfGap { norm_sq }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Radius::Dyadic { num, den } => num as f64 / den as f64,
            Radius::HalfGap { norm_sq } => ((norm_sq as f64).sqrt() - 1.0) / 2.0,
        }
    }

    /// Whether `n < radius^2`, decided exactly.
    pub fn exceeds_sqrt(&self, n: i64) -> bool {
        match *self {
            Radius::Dyadic { num, den } => (n as i128) * den * den < num * num,
            Radius::HalfGap { norm_sq: m } => {
                // n < ((sqrt(m) - 1) / 2)^2 with sqrt(m) >= 1
                //   <=> 2 sqrt(m) < m + 1 - 4n
                let c = m as i128 + 1 - 4 * n as i128;
                m >= 1 && c > 0 && 4 * (m as i128) < c * c
            }
        }
    }

    /// Largest integer `n` with `n < radius^2` (or -1 if none).
    pub fn max_inside_norm_sq(&self) -> i64 {
        let v = self.value();
        let mut n = (v * v).floor() as i64;
        while n >= 0 && !self.exceeds_sqrt(n) {
            n -= 1;
        }
        while self.exceeds_sqrt(n + 1) {
            n += 1;
        }
        n.max(-1)
    }
}

fn require_nonempty(a: &SiteSet) -> Result<()> {
    if a.is_empty() {
        Err(Error::EmptySet)
    } else {
        Ok(())
    }
}

/// Squared Euclidean distance between two sets.
pub fn set_distance_sq(a: &SiteSet, b: &SiteSet) -> Result<i64> {
    require_nonempty(a)?;
    require_nonempty(b)?;
    let mut best = i64::MAX;
    for x in a {
        for y in b {
            best = best.min((*x - *y).norm_sq());
        }
    }
    Ok(best)
}

/// Euclidean distance `min ||x - y||` between two non-empty sets.
pub fn set_distance(a: &SiteSet, b: &SiteSet) -> Result<f64> {
    Ok((set_distance_sq(a, b)? as f64).sqrt())
}

/// Squared diameter of a set.
pub fn set_diameter_sq(a: &SiteSet) -> Result<i64> {
    require_nonempty(a)?;
    let s = a.sites();
    let mut best = 0;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            best = best.max((s[i] - s[j]).norm_sq());
        }
    }
    Ok(best)
}

/// Euclidean diameter `max ||x - y||` of a non-empty set.
pub fn set_diameter(a: &SiteSet) -> Result<f64> {
    Ok((set_diameter_sq(a)? as f64).sqrt())
}

fn isqrt(n: i64) -> i64 {
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Calls `f` on every `rel` in Z^d with `lo < |rel|^2 <= hi`.
fn for_each_in_shell(dim: usize, lo: i64, hi: i64, mut f: impl FnMut(&[i32])) {
    if hi < 0 {
        return;
    }
    let bound = (hi as f64).sqrt().floor() as i32 + 1;
    let mut c = vec![0i32; dim];
    fn rec(
        k: usize,
        partial: i64,
        c: &mut Vec<i32>,
        bound: i32,
        lo: i64,
        hi: i64,
        f: &mut dyn FnMut(&[i32]),
    ) {
        let dim = c.len();
        if k + 1 == dim {
            let rest_hi = hi - partial;
            if rest_hi < 0 {
                return;
            }
            let top = isqrt(rest_hi);
            let rest_lo = lo - partial;
            let bottom = if rest_lo < 0 { 0 } else { isqrt(rest_lo) + 1 };
            if bottom > top {
                return;
            }
            if bottom == 0 {
                for v in -top..=top {
                    c[k] = v as i32;
                    f(c);
                }
            } else {
                for v in (-top..=-bottom).chain(bottom..=top) {
                    c[k] = v as i32;
                    f(c);
                }
            }
            return;
        }
        for v in -bound..=bound {
            let p = partial + (v as i64) * (v as i64);
            if p > hi {
                continue;
            }
            c[k] = v;
            rec(k + 1, p, c, bound, lo, hi, f);
        }
    }
    rec(0, 0, &mut c, bound, lo, hi, &mut f);
}

/// Sites of the open ball `{x : |x - center| < radius}` for an exact radius.
pub fn ball_exact(center: Point, radius: &Radius) -> SiteSet {
    let dim = center.dim();
    let hi = radius.max_inside_norm_sq();
    let mut pts = Vec::new();
    for_each_in_shell(dim, -1, hi, |rel| pts.push(center + Point::new(rel)));
    SiteSet::new(pts)
}

/// Sites of the open ball `{x : |x - center| < radius}`.
pub fn ball(center: Point, radius: f64) -> Result<SiteSet> {
    let r = Radius::from_f64(radius)?;
    Ok(ball_exact(center, &r))
}

/// `{x in A : some neighbour of x is outside A}`.
pub fn internal_boundary(a: &SiteSet) -> SiteSet {
    SiteSet::new(
        a.iter()
            .filter(|x| x.neighbours().any(|y| !a.contains(&y)))
            .copied(),
    )
}

/// `{x not in A : some neighbour of x is in A}`.
pub fn external_boundary(a: &SiteSet) -> SiteSet {
    SiteSet::new(
        a.iter()
            .flat_map(|x| x.neighbours().collect::<Vec<_>>())
            .filter(|y| !a.contains(y)),
    )
}

/// External boundary of the open ball `B(center, radius)`, enumerated without
/// materializing the ball.
pub fn ball_external_boundary(center: Point, radius: &Radius) -> SiteSet {
    let dim = center.dim();
    let inside = radius.max_inside_norm_sq();
    // A site adjacent to the ball has norm < r + 1 <= floor(r) + 2.
    let outer = (radius.value().floor() as i64 + 2).pow(2);
    let mut pts = Vec::new();
    for_each_in_shell(dim, inside, outer, |rel| {
        let p = Point::new(rel);
        if p.neighbours().any(|q| q.norm_sq() <= inside) {
            pts.push(center + p);
        }
    });
    SiteSet::new(pts)
}

/// The union of the two open balls `B_R(0)` and `B_R(xhat)`, held implicitly.
#[derive(Clone, Debug)]
pub struct BallPair {
    centers: [Point; 2],
    radius: Radius,
    inside: i64,
}

impl BallPair {
    pub fn new(xhat: Point, radius: Radius) -> BallPair {
        BallPair {
            centers: [Point::origin(xhat.dim()), xhat],
            inside: radius.max_inside_norm_sq(),
            radius,
        }
    }

    pub fn centers(&self) -> &[Point; 2] {
        &self.centers
    }

    pub fn radius(&self) -> &Radius {
        &self.radius
    }

    /// Largest squared norm, relative to a center, of a site inside a ball.
    pub fn max_inside_norm_sq(&self) -> i64 {
        self.inside
    }

    /// Index of the ball containing `p`, if any.
    pub fn ball_of(&self, p: &Point) -> Option<usize> {
        (0..2).find(|&b| (*p - self.centers[b]).norm_sq() <= self.inside)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.ball_of(p).is_some()
    }

    /// All sites of both balls. Only sensible for small radii.
    pub fn sites(&self) -> SiteSet {
        let a = ball_exact(self.centers[0], &self.radius);
        let b = ball_exact(self.centers[1], &self.radius);
        a.union(&b)
    }

    /// Sites of one ball.
    pub fn ball_sites(&self, b: usize) -> SiteSet {
        ball_exact(self.centers[b], &self.radius)
    }

    pub fn external_boundary(&self) -> SiteSet {
        ball_external_boundary(self.centers[0], &self.radius)
            .union(&ball_external_boundary(self.centers[1], &self.radius))
    }
}

/// The two-set scene: `K1 ∋ 0`, `K2 = K1 + xhat`, `R = (|xhat| - 1) / 2`.
#[derive(Clone, Debug)]
pub struct Configuration {
    dim: usize,
    k1: SiteSet,
    k2: SiteSet,
    k: SiteSet,
    xhat: Point,
    balls: BallPair,
    boundary_k: SiteSet,
    boundary_vr: SiteSet,
    delta: f64,
    u: f64,
    /// For each site of K1 (as an offset from the ball center), its index in K
    /// for ball 0 and ball 1.
    k_offsets: HashMap<Point, [u32; 2]>,
    k_reach_sq: i64,
}

impl Configuration {
    /// Validates the scene and materializes `∂K` and `∂_e V_R`.
    pub fn new(k1: SiteSet, xhat: Point, u: f64) -> Result<Configuration> {
        let dim = xhat.dim();
        if dim < 3 {
            return Err(Error::TransientDimensionRequired(dim));
        }
        if k1.is_empty() {
            return Err(Error::config("0 in K1", "K1 is empty"));
        }
        if let Some(p) = k1.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        if !k1.contains(&Point::origin(dim)) {
            return Err(Error::config("0 in K1", "the origin is not a site of K1"));
        }
        if !(u.is_finite() && u >= 0.0) {
            return Err(Error::config("u >= 0", format!("u = {u}")));
        }
        let m = xhat.norm_sq();
        let diam_sq = set_diameter_sq(&k1)?;
        // sqrt(m) >= 4 sqrt(D) + 3  <=>  m - 16 D - 9 >= 24 sqrt(D)
        let lhs = m as i128 - 16 * diam_sq as i128 - 9;
        if lhs < 0 || lhs * lhs < 576 * diam_sq as i128 {
            return Err(Error::config(
                "|xhat| >= 4 diam(K1) + 3",
                format!(
                    "|xhat| = {:.4}, 4 diam(K1) + 3 = {:.4}",
                    (m as f64).sqrt(),
                    4.0 * (diam_sq as f64).sqrt() + 3.0
                ),
            ));
        }
        let radius = Radius::half_gap(m);
        let balls = BallPair::new(xhat, radius);
        if let Some(p) = k1.iter().find(|p| !radius.exceeds_sqrt(p.norm_sq())) {
            return Err(Error::config("K1 inside B_R(0)", format!("site {p}")));
        }
        let k2 = k1.translate(xhat);
        if k1.iter().any(|p| k2.contains(p)) {
            return Err(Error::config("K1 and K2 disjoint", "sets intersect"));
        }
        let k = k1.union(&k2);
        let boundary_k = internal_boundary(&k);
        let boundary_vr = balls.external_boundary();
        let r = radius.value();
        let delta = (diam_sq as f64).sqrt().max(1.0) / r;
        let mut k_offsets = HashMap::new();
        for p in &k1 {
            let i0 = k.index_of(p).expect("K1 site in K") as u32;
            let i1 = k.index_of(&(*p + xhat)).expect("K2 site in K") as u32;
            k_offsets.insert(*p, [i0, i1]);
        }
        let k_reach_sq = k1.iter().map(Point::norm_sq).max().unwrap_or(0);
        Ok(Configuration {
            dim,
            k1,
            k2,
            k,
            xhat,
            balls,
            boundary_k,
            boundary_vr,
            delta,
            u,
            k_offsets,
            k_reach_sq,
        })
    }

    /// Same scene at another interlacement level.
    pub fn with_level(&self, u: f64) -> Result<Configuration> {
        if !(u.is_finite() && u >= 0.0) {
            return Err(Error::config("u >= 0", format!("u = {u}")));
        }
        let mut c = self.clone();
        c.u = u;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn k1(&self) -> &SiteSet {
        &self.k1
    }
    pub fn k2(&self) -> &SiteSet {
        &self.k2
    }
    /// `K = K1 ∪ K2`.
    pub fn k(&self) -> &SiteSet {
        &self.k
    }
    pub fn xhat(&self) -> Point {
        self.xhat
    }
    pub fn radius(&self) -> &Radius {
        self.balls.radius()
    }
    /// `R` as a float.
    pub fn r(&self) -> f64 {
        self.balls.radius().value()
    }
    /// `V_R = B_R(0) ∪ B_R(xhat)`.
    pub fn vr(&self) -> &BallPair {
        &self.balls
    }
    /// `∂K`.
    pub fn boundary_k(&self) -> &SiteSet {
        &self.boundary_k
    }
    /// `∂_e V_R`.
    pub fn boundary_vr(&self) -> &SiteSet {
        &self.boundary_vr
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn u(&self) -> f64 {
        self.u
    }

    /// `dist(K1, K2)`.
    pub fn dist(&self) -> f64 {
        set_distance(&self.k1, &self.k2).expect("non-empty")
    }

    /// Index in `K` of the site at offset `rel` from the center of ball `b`,
    /// if that site belongs to `K`.
    #[inline]
    pub fn k_index_at_offset(&self, b: usize, rel: &Point, rel_norm_sq: i64) -> Option<usize> {
        if rel_norm_sq > self.k_reach_sq {
            return None;
        }
        self.k_offsets.get(rel).map(|ix| ix[b] as usize)
    }

    /// Squared norm beyond which an offset from a ball center cannot be in `K`.
    pub fn k_reach_sq(&self) -> i64 {
        self.k_reach_sq
    }
}

/// Validating constructor, see [`Configuration::new`].
pub fn make_configuration(k1: SiteSet, xhat: Point, u: f64) -> Result<Configuration> {
    Configuration::new(k1, xhat, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i32]) -> Point {
        Point::new(c)
    }

    fn brute_ball(r2_lt: impl Fn(i64) -> bool, b: i32) -> usize {
        let mut n = 0;
        for x in -b..=b {
            for y in -b..=b {
                for z in -b..=b {
                    if r2_lt((x * x + y * y + z * z) as i64) {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    #[test]
    fn distances_and_diameters() {
        let o = SiteSet::singleton(p(&[0, 0, 0]));
        let a = SiteSet::singleton(p(&[5, 0, 0]));
        assert_eq!(set_distance(&o, &a).unwrap(), 5.0);
        assert_eq!(set_distance(&o, &o).unwrap(), 0.0);
        let two = SiteSet::new([p(&[0, 0, 0]), p(&[1, 0, 0])]);
        let b = SiteSet::singleton(p(&[4, 3, 0]));
        assert!((set_distance(&two, &b).unwrap() - 18f64.sqrt()).abs() < 1e-15);
        assert_eq!(set_diameter(&o).unwrap(), 0.0);
        let tri = SiteSet::new([p(&[0, 0, 0]), p(&[1, 0, 0]), p(&[0, 1, 0])]);
        assert!((set_diameter(&tri).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let pair = SiteSet::new([p(&[0, 0, 0]), p(&[3, 4, 0])]);
        assert_eq!(set_diameter(&pair).unwrap(), 5.0);
        assert!(matches!(
            set_diameter(&SiteSet::empty()),
            Err(Error::EmptySet)
        ));
        assert!(matches!(
            set_distance(&o, &SiteSet::empty()),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn ball_counts_match_enumeration() {
        let o = Point::origin(3);
        assert_eq!(ball(o, 1.0).unwrap().sites(), &[o]);
        assert_eq!(
            ball(o, 1.5).unwrap().len(),
            brute_ball(|n| (n as f64) < 2.25, 3)
        );
        assert_eq!(ball(o, 1.5).unwrap().len(), 19);
        assert_eq!(ball(o, 2.0).unwrap().len(), brute_ball(|n| n < 4, 3));
        assert_eq!(ball(o, 2.0).unwrap().len(), 27);
        assert!(ball(o, 0.0).is_err());
        assert!(ball(o, -1.0).is_err());
        let c = p(&[3, -2, 7]);
        let shifted = ball(c, 3.25).unwrap();
        assert_eq!(shifted, ball(o, 3.25).unwrap().translate(c));
    }

    #[test]
    fn half_gap_radius_is_exact() {
        for m in 1..2000i64 {
            let r = Radius::half_gap(m);
            let v = r.value();
            for n in 0..200 {
                let exact = r.exceeds_sqrt(n);
                let approx = (n as f64) < v * v;
                if ((n as f64) - v * v).abs() > 1e-6 {
                    assert_eq!(exact, approx, "m={m} n={n}");
                }
            }
            let mi = r.max_inside_norm_sq();
            assert!(mi < 0 || r.exceeds_sqrt(mi));
            assert!(!r.exceeds_sqrt(mi + 1));
        }
        // sqrt(81) = 9: R = 4 exactly; 16 is on the sphere, so not inside
        let r = Radius::half_gap(81);
        assert!(r.exceeds_sqrt(15));
        assert!(!r.exceeds_sqrt(16));
    }

    #[test]
    fn boundaries() {
        let o = Point::origin(3);
        let single = SiteSet::singleton(o);
        assert_eq!(internal_boundary(&single), single);
        assert_eq!(external_boundary(&single).len(), 6);
        assert!(internal_boundary(&SiteSet::empty()).is_empty());
        assert!(external_boundary(&SiteSet::empty()).is_empty());
        let cube: SiteSet = (-1..=1)
            .flat_map(|x| (-1..=1).flat_map(move |y| (-1..=1).map(move |z| p(&[x, y, z]))))
            .collect();
        let ib = internal_boundary(&cube);
        assert_eq!(ib.len(), 26);
        assert!(!ib.contains(&o));
        let two = SiteSet::new([o, p(&[1, 0, 0])]);
        assert_eq!(external_boundary(&two).len(), 10);
    }

    #[test]
    fn ball_external_boundary_matches_generic() {
        for &(m, cx) in &[(81i64, 0), (100, 3), (170, -2), (49, 0)] {
            let r = Radius::half_gap(m);
            let c = p(&[cx, 1, 0]);
            let b = ball_exact(c, &r);
            assert_eq!(
                ball_external_boundary(c, &r),
                external_boundary(&b),
                "m={m}"
            );
        }
        let r = Radius::from_f64(2.5).unwrap();
        let b = ball_exact(Point::origin(4), &r);
        assert_eq!(
            ball_external_boundary(Point::origin(4), &r),
            external_boundary(&b)
        );
    }

    #[test]
    fn configuration_arithmetic() {
        let o = Point::origin(3);
        let cfg = Configuration::new(SiteSet::singleton(o), p(&[9, 0, 0]), 1.0).unwrap();
        assert_eq!(cfg.r(), 4.0);
        assert_eq!(cfg.k2().sites(), &[p(&[9, 0, 0])]);
        assert_eq!(cfg.delta(), 0.25);
        let err = Configuration::new(SiteSet::singleton(o), p(&[2, 0, 0]), 1.0).unwrap_err();
        match err {
            Error::InvalidConfiguration { invariant, .. } => {
                assert_eq!(invariant, "|xhat| >= 4 diam(K1) + 3")
            }
            e => panic!("unexpected {e}"),
        }
        let k1 = SiteSet::new([o, p(&[1, 0, 0])]);
        let cfg = Configuration::new(k1, p(&[11, 0, 0]), 0.5).unwrap();
        assert_eq!(cfg.r(), 5.0);
        assert_eq!(cfg.delta(), 0.2);
        // exactly at the threshold: |xhat| = 7 = 4 * 1 + 3
        let k1 = SiteSet::new([o, p(&[1, 0, 0])]);
        assert!(Configuration::new(k1.clone(), p(&[7, 0, 0]), 1.0).is_ok());
        assert!(Configuration::new(k1, p(&[6, 0, 0]), 1.0).is_err());
        assert!(Configuration::new(SiteSet::singleton(p(&[1, 0, 0])), p(&[9, 0, 0]), 1.0).is_err());
        assert!(Configuration::new(SiteSet::singleton(o), p(&[9, 0, 0]), -1.0).is_err());
        assert!(matches!(
            Configuration::new(SiteSet::singleton(Point::origin(2)), p(&[9, 0]), 1.0),
            Err(Error::TransientDimensionRequired(2))
        ));
    }

    #[test]
    fn scene_invariants_by_enumeration() {
        let o = Point::origin(3);
        for xhat in [p(&[9, 0, 0]), p(&[7, 5, 1]), p(&[0, -12, 3])] {
            let cfg = Configuration::new(SiteSet::singleton(o), xhat, 1.0).unwrap();
            let vr = cfg.vr().sites();
            assert!(cfg.k1().is_subset(&cfg.vr().ball_sites(0)));
            assert!(cfg.k2().is_subset(&cfg.vr().ball_sites(1)));
            assert_eq!(cfg.boundary_vr(), &external_boundary(&vr));
            assert!(cfg.dist() <= 3.0 * cfg.r());
            assert!(cfg.boundary_vr().iter().all(|y| !cfg.vr().contains(y)));
        }
    }

    #[test]
    fn ball_boundaries_can_touch() {
        // With |xhat| even the midpoint is adjacent to both balls.
        let o = Point::origin(3);
        let cfg = Configuration::new(SiteSet::singleton(o), p(&[8, 0, 0]), 1.0).unwrap();
        let r = cfg.radius();
        let mid = p(&[4, 0, 0]);
        assert!(ball_external_boundary(o, r).contains(&mid));
        assert!(ball_external_boundary(p(&[8, 0, 0]), r).contains(&mid));
        assert!(cfg.boundary_vr().contains(&mid));
        assert_eq!(cfg.vr().ball_of(&mid), None);
    }

    #[test]
    fn text_round_trip() {
        let s = SiteSet::new([p(&[0, 0, 0]), p(&[1, -2, 3]), p(&[-4, 5, 6])]);
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 3);
        let back = SiteSet::read_text(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert!(SiteSet::read_text(&b"1 2 x\n"[..]).is_err());
        assert!(SiteSet::read_text(&b"1 2 3\n1 2\n"[..]).is_err());
    }

    #[test]
    fn direction_round_trip() {
        let a = p(&[1, 2, 3]);
        for dir in 0..6 {
            assert_eq!(a.direction_to(&a.step(dir)), Some(dir));
        }
        assert_eq!(a.direction_to(&a), None);
        assert_eq!(a.direction_to(&p(&[2, 3, 3])), None);
    }
}
