//! Dirichlet problems for simple random walk on a single lattice ball.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lattice::{ball_exact, Point, Radius};

const OUTSIDE: u32 = u32::MAX;

/// The sites of an open ball with their neighbour table.
#[derive(Clone, Debug)]
pub struct BallDomain {
    dim: usize,
    sites: Vec<Point>,
    index: HashMap<Point, u32>,
    /// `2d` entries per site; `OUTSIDE` marks neighbours outside the ball.
    nbrs: Vec<u32>,
}

impl BallDomain {
    pub fn new(center: Point, radius: &Radius) -> BallDomain {
        let dim = center.dim();
        let sites = ball_exact(center, radius).sites().to_vec();
        let index: HashMap<Point, u32> = sites
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, i as u32))
            .collect();
        let mut nbrs = Vec::with_capacity(sites.len() * 2 * dim);
        for p in &sites {
            for q in p.neighbours() {
                nbrs.push(index.get(&q).copied().unwrap_or(OUTSIDE));
            }
        }
        BallDomain {
            dim,
            sites,
            index,
            nbrs,
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.index.get(p).map(|&i| i as usize)
    }

    fn neighbours(&self, i: usize) -> &[u32] {
        let w = 2 * self.dim;
        &self.nbrs[i * w..(i + 1) * w]
    }

    /// Number of neighbours of site `i` outside the ball.
    pub fn outside_degree(&self, i: usize) -> usize {
        self.neighbours(i).iter().filter(|&&j| j == OUTSIDE).count()
    }

    /// Solves `(I - P) x = rhs` on the free sites, with `x = 0` on fixed sites
    /// and outside the ball, by conjugate gradients. `P` is the transition
    /// matrix of simple random walk, so the operator is symmetric positive
    /// definite.
    pub fn solve(&self, fixed: &[bool], rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(fixed.len(), n);
        assert_eq!(rhs.len(), n);
        let inv_deg = 1.0 / (2 * self.dim) as f64;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                if fixed[i] {
                    out[i] = 0.0;
                    continue;
                }
                let mut s = 0.0;
                for &j in self.neighbours(i) {
                    if j != OUTSIDE && !fixed[j as usize] {
                        s += x[j as usize];
                    }
                }
                out[i] = x[i] - inv_deg * s;
            }
        };
        let mut x = vec![0.0; n];
        let mut r: Vec<f64> = rhs
            .iter()
            .zip(fixed)
            .map(|(&b, &f)| if f { 0.0 } else { b })
            .collect();
        let bnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let max_iter = 20 * n + 1000;
        for it in 0..max_iter {
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            if rr_new.sqrt() <= tol * bnorm {
                return Ok(x);
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            if it + 1 == max_iter {
                break;
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: rr.sqrt() / bnorm,
        })
    }

    /// Green's function of the walk killed on leaving the ball, `G_B(x, ·)`.
    pub fn killed_green(&self, x: &Point) -> Result<Vec<f64>> {
        let i = self.index_of(x).ok_or_else(|| Error::NotInSet {
            site: x.to_string(),
            set: "ball",
        })?;
        let mut rhs = vec![0.0; self.len()];
        rhs[i] = 1.0;
        self.solve(&vec![false; self.len()], &rhs, 1e-14)
    }

    /// Exit distribution from `x`: the law of the first site visited outside
    /// the ball, as `(site, probability)` pairs sorted by site.
    pub fn exit_distribution(&self, x: &Point) -> Result<Vec<(Point, f64)>> {
        let gb = self.killed_green(x)?;
        let inv_deg = 1.0 / (2 * self.dim) as f64;
        let mut acc: HashMap<Point, f64> = HashMap::new();
        for (i, p) in self.sites.iter().enumerate() {
            for (dir, &j) in self.neighbours(i).iter().enumerate() {
                if j == OUTSIDE {
                    *acc.entry(p.step(dir)).or_default() += gb[i] * inv_deg;
                }
            }
        }
        let mut out: Vec<(Point, f64)> = acc.into_iter().collect();
        out.sort_by_key(|a| a.0);
        Ok(out)
    }

    /// For each site `x` of `k` (inside the ball), the probability that the
    /// walk from `x` leaves the ball before returning to `k`.
    pub fn escape_before_return(&self, k: &[Point]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut fixed = vec![false; n];
        for x in k {
            let i = self.index_of(x).ok_or_else(|| Error::NotInSet {
                site: x.to_string(),
                set: "ball",
            })?;
            fixed[i] = true;
        }
        let inv_deg = 1.0 / (2 * self.dim) as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|i| self.outside_degree(i) as f64 * inv_deg)
            .collect();
        // h(z) = P_z[leave the ball before hitting k]
        let h = self.solve(&fixed, &rhs, 1e-13)?;
        Ok(k.iter()
            .map(|x| {
                let i = self.index_of(x).unwrap();
                self.neighbours(i)
                    .iter()
                    .map(|&j| {
                        if j == OUTSIDE {
                            1.0
                        } else if fixed[j as usize] {
                            0.0
                        } else {
                            h[j as usize]
                        }
                    })
                    .sum::<f64>()
                    * inv_deg
            })
            .collect())
    }
}
