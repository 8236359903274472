//! Lattice Green's function of simple random walk on Z^d, d >= 3.
//!
//! The walk run in continuous time at rate one has independent coordinates,
//! each a rate-`1/d` walk on Z, so
//!
//! `G(0, x) = d * ∫_0^∞ Π_i e^{-s} I_{x_i}(s) ds`.
//!
//! The scaled Bessel values come from Miller's backward recurrence, the
//! integral from composite Gauss–Legendre quadrature on doubling panels, and
//! the far tail of the integral from the term-by-term integrated asymptotic
//! series of `e^{-s} I_n(s)`.

use crate::error::{Error, Result};
use crate::lattice::Point;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `e^{-s} I_n(s)` for `n = 0..out.len()`, by Miller's backward recurrence
/// normalized with `I_0 + 2 Σ_{n>=1} I_n = e^s`.
pub fn scaled_bessel_row(s: f64, out: &mut [f64]) {
    assert!(s > 0.0 && !out.is_empty());
    let nmax = out.len() - 1;
    let start = nmax + (12.0 * s.sqrt()) as usize + 40;
    let mut f_next = 0.0f64;
    let mut f_cur = 1e-30f64;
    let mut sum = 0.0f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in (1..=start).rev() {
        let f_prev = f_next + (2.0 * k as f64 / s) * f_cur;
        if k <= nmax {
            out[k] = f_cur;
        }
        sum += 2.0 * f_cur;
        f_next = f_cur;
        f_cur = f_prev;
        if f_cur > 1e250 {
            let scale = 1e-250;
            f_cur *= scale;
            f_next *= scale;
            sum *= scale;
            if k <= nmax {
                out[k..].iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    out[0] = f_cur;
    sum += f_cur;
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|v| *v *= inv);
}

/// Coefficients `c_k(n)` of `e^{-s} I_n(s) ~ (2πs)^{-1/2} Σ_k c_k(n) s^{-k}`.
fn asymptotic_coeffs(n: u32, order: usize) -> Vec<f64> {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut c = vec![0.0; order + 1];
    c[0] = 1.0;
    for k in 1..=order {
        let odd = (2 * k - 1) as f64;
        c[k] = -c[k - 1] * (mu - odd * odd) / (8.0 * k as f64);
    }
    c
}

const TAIL_ORDER: usize = 10;

/// Tabulated Green's function `G(0, x)`.
///
/// Exact (to quadrature precision) whenever every coordinate of `x` is at
/// most `cutoff` in absolute value. Beyond, the far-field form
/// `a_d r^{2-d} (1 + (A + B Σ x_i^4 / r^4) / r^2)` is used, with `A` and `B`
/// matched to the exact values at `cutoff * e_1` and `cutoff * (1, ..., 1)`.
#[derive(Clone, Debug)]
pub struct GreenTable {
    dim: usize,
    cutoff: u32,
    quadrature_order: usize,
    /// Right end of each panel; panels are `[ends[i-1], ends[i]]`, `ends[-1] = 0`.
    panel_ends: Vec<f64>,
    weights: Vec<f64>,
    /// Node-major rows of `e^{-s_j} I_n(s_j)`, `n = 0..=cutoff`.
    bessel: Vec<f64>,
    far_const: f64,
    far_a: f64,
    far_b: f64,
}

impl GreenTable {
    /// Builds the table. `quadrature_order` is the number of Gauss–Legendre
    /// nodes per panel.
    pub fn new(dim: usize, cutoff: u32, quadrature_order: usize) -> Result<GreenTable> {
        if dim < 3 {
            return Err(Error::TransientDimensionRequired(dim));
        }
        if quadrature_order < 4 {
            return Err(Error::InvalidArgument(format!(
                "quadrature order {quadrature_order} < 4"
            )));
        }
        let cutoff = cutoff.max(1);
        let s_max = split_point(cutoff);
        let mut panel_ends = vec![0.5];
        while *panel_ends.last().unwrap() < s_max {
            let last = *panel_ends.last().unwrap();
            panel_ends.push(if last < 1.0 { 1.0 } else { 2.0 * last });
        }
        let (gx, gw) = gauss_legendre(quadrature_order);
        let width = cutoff as usize + 1;
        let mut weights = Vec::with_capacity(panel_ends.len() * quadrature_order);
        let mut bessel = vec![0.0; panel_ends.len() * quadrature_order * width];
        let mut a = 0.0;
        for (p, &b) in panel_ends.iter().enumerate() {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            for (q, (&x, &w)) in gx.iter().zip(&gw).enumerate() {
                let s = mid + half * x;
                weights.push(half * w);
                let j = p * quadrature_order + q;
                scaled_bessel_row(s, &mut bessel[j * width..(j + 1) * width]);
            }
            a = b;
        }
        let mut table = GreenTable {
            dim,
            cutoff,
            quadrature_order,
            panel_ends,
            weights,
            bessel,
            far_const: far_field_constant(dim),
            far_a: 0.0,
            far_b: 0.0,
        };
        let m = cutoff as i32;
        let axis = Point::unit(dim, 0, m);
        let diag = Point::new(&vec![m; dim]);
        let y = |x: &Point| {
            let r2 = x.norm_sq() as f64;
            let lead = table.far_const * r2.sqrt().powi(2 - dim as i32);
            (table.exact(x) / lead - 1.0) * r2
        };
        let (y1, y2) = (y(&axis), y(&diag));
        let w2 = 1.0 / dim as f64;
        table.far_b = (y1 - y2) / (1.0 - w2);
        table.far_a = y1 - table.far_b;
        Ok(table)
    }

    /// Table with the default quadrature order (20 nodes per panel).
    pub fn with_cutoff(dim: usize, cutoff: u32) -> Result<GreenTable> {
        GreenTable::new(dim, cutoff, 20)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    /// Constant `a_d` of the far-field form `a_d |x|^{2-d}`.
    pub fn far_constant(&self) -> f64 {
        self.far_const
    }

    fn far_field(&self, x: &Point) -> f64 {
        let r2 = x.norm_sq() as f64;
        let w = x.coords().iter().map(|&c| (c as f64).powi(4)).sum::<f64>() / (r2 * r2);
        self.far_const
            * r2.sqrt().powi(2 - self.dim as i32)
            * (1.0 + (self.far_a + self.far_b * w) / r2)
    }

    /// `G(0, x)`.
    pub fn value(&self, x: &Point) -> f64 {
        assert_eq!(x.dim(), self.dim, "dimension mismatch");
        if x.max_abs() > self.cutoff {
            self.far_field(x)
        } else {
            self.exact(x)
        }
    }

    /// `G(x, y) = G(0, y - x)`.
    #[inline]
    pub fn between(&self, x: &Point, y: &Point) -> f64 {
        self.value(&(*y - *x))
    }

    fn exact(&self, x: &Point) -> f64 {
        let mut n = [0usize; crate::lattice::MAX_DIM];
        for (i, c) in x.coords().iter().enumerate() {
            n[i] = c.unsigned_abs() as usize;
        }
        let n = &n[..self.dim];
        let m = x.max_abs();
        let split = split_point(m);
        let panels = self
            .panel_ends
            .iter()
            .position(|&e| e >= split)
            .expect("split point within table")
            + 1;
        let s_split = self.panel_ends[panels - 1];
        let width = self.cutoff as usize + 1;
        let mut sum = 0.0;
        for j in 0..panels * self.quadrature_order {
            let row = &self.bessel[j * width..(j + 1) * width];
            let mut prod = self.weights[j];
            for &k in n {
                prod *= row[k];
            }
            sum += prod;
        }
        let d = self.dim as f64;
        // product of the per-coordinate asymptotic series
        let mut series = vec![0.0; TAIL_ORDER + 1];
        series[0] = 1.0;
        for &k in n {
            let c = asymptotic_coeffs(k as u32, TAIL_ORDER);
            let mut next = vec![0.0; TAIL_ORDER + 1];
            for a in 0..=TAIL_ORDER {
                for b in 0..=TAIL_ORDER - a {
                    next[a + b] += series[a] * c[b];
                }
            }
            series = next;
        }
        let mut tail = 0.0;
        for (k, ck) in series.iter().enumerate() {
            let p = d / 2.0 + k as f64 - 1.0;
            tail += ck * s_split.powf(-p) / p;
        }
        tail *= (2.0 * std::f64::consts::PI).powf(-d / 2.0);
        d * (sum + tail)
    }
}

/// `a_d = (d/2) Γ(d/2 - 1) π^{-d/2}`.
pub fn far_field_constant(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * statrs::function::gamma::gamma(h - 1.0) * std::f64::consts::PI.powf(-h)
}

/// Point past which the asymptotic series is used for coordinates up to `m`.
fn split_point(m: u32) -> f64 {
    let m = m as f64;
    (32.0 * (m * m + 1.0)).max(64.0)
}

/// `G(0, x)` from a table sized for `x`.
pub fn green(d: usize, x: &Point) -> Result<f64> {
    if d < 3 {
        return Err(Error::TransientDimensionRequired(d));
    }
    if x.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.dim(),
        });
    }
    let t = GreenTable::with_cutoff(d, x.max_abs().max(8))?;
    Ok(t.value(x))
}
