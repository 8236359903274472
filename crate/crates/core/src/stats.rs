//! Small statistical toolkit: binomial intervals, chi-square tests and
//! weighted line fits.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided standard normal quantile for confidence level `level`.
pub fn z_value(level: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z_value(level);
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df as f64).expect("positive df").cdf(stat)
}

/// Result of a chi-square test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Goodness of fit of `observed` counts to probabilities `probs`. Cells with
/// expected count below 5 are pooled.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() {
        return Err(Error::InvalidArgument("cell count mismatch".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::ZeroTotal);
    }
    let total_p: f64 = probs.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut po, mut pe) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = n as f64 * p / total_p;
        if e >= 5.0 {
            cells.push((o as f64, e));
        } else {
            po += o as f64;
            pe += e;
        }
    }
    if pe > 0.0 || po > 0.0 {
        if pe >= 5.0 || cells.is_empty() {
            cells.push((po, pe));
        } else if let Some(last) = cells.last_mut() {
            last.0 += po;
            last.1 += pe;
        }
    }
    let statistic: f64 = cells
        .iter()
        .filter(|c| c.1 > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = cells.len().saturating_sub(1);
    Ok(ChiSquare {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    })
}

/// Test of independence on a contingency table (rows × columns). Rows and
/// columns with zero total are dropped.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquare> {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    if rows.is_empty() {
        return Err(Error::ZeroTotal);
    }
    let ncol = rows[0].len();
    let col_tot: Vec<u64> = (0..ncol).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let cols: Vec<usize> = (0..ncol).filter(|&j| col_tot[j] > 0).collect();
    let n: u64 = col_tot.iter().sum();
    let mut statistic = 0.0;
    for r in &rows {
        let rt: u64 = r.iter().sum();
        for &j in &cols {
            let e = rt as f64 * col_tot[j] as f64 / n as f64;
            let o = r[j] as f64;
            statistic += (o - e) * (o - e) / e;
        }
    }
    let df = (rows.len() - 1) * cols.len().saturating_sub(1);
    Ok(ChiSquare {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    })
}

/// Two-sample homogeneity test on aligned histograms. Cells whose pooled
/// expected count is below 5 in either sample are merged.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquare> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("cell count mismatch".into()));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::ZeroTotal);
    }
    let fa = na as f64 / (na + nb) as f64;
    let mut table: Vec<Vec<u64>> = Vec::new();
    let mut pool = [0u64; 2];
    for (&x, &y) in a.iter().zip(b) {
        let t = (x + y) as f64;
        if t * fa.min(1.0 - fa) >= 5.0 {
            table.push(vec![x, y]);
        } else {
            pool[0] += x;
            pool[1] += y;
        }
    }
    if pool[0] + pool[1] > 0 {
        if ((pool[0] + pool[1]) as f64) * fa.min(1.0 - fa) >= 5.0 || table.is_empty() {
            table.push(pool.to_vec());
        } else {
            let last = table.last_mut().unwrap();
            last[0] += pool[0];
            last[1] += pool[1];
        }
    }
    chi_square_independence(&table)
}

/// Weighted least-squares line `y = a + b x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope from the weights, scaled by the residual
    /// variance when there are more than two points.
    pub slope_se: f64,
    pub residuals: Vec<f64>,
}

/// Fits `y = a + b x` with weights `w` (inverse variances).
pub fn fit_line(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    fit(x, y, w, true)
}

/// Ordinary least squares, with the slope error from the residual variance.
pub fn fit_line_ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    fit(x, y, &vec![1.0; x.len()], false)
}

fn fit(x: &[f64], y: &[f64], w: &[f64], inverse_variance: bool) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || w.len() != n {
        return Err(Error::InvalidArgument(
            "a line fit needs at least two points".into(),
        ));
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("degenerate abscissae".into()));
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - mx) * (c - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, c)| c - intercept - slope * a)
        .collect();
    let chi2: f64 = residuals.iter().zip(w).map(|(r, b)| b * r * r).sum();
    let var = match (inverse_variance, n > 2) {
        (true, true) => (chi2 / (n - 2) as f64).max(1.0) / sxx,
        (true, false) => 1.0 / sxx,
        (false, true) => chi2 / (n - 2) as f64 / sxx,
        (false, false) => 0.0,
    };
    Ok(LineFit {
        intercept,
        slope,
        slope_se: var.sqrt(),
        residuals,
    })
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_interval() {
        let (lo, hi) = wilson(50, 100, 0.95);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson(0, 100, 0.95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.03 && hi < 0.04);
        assert!((z_value(0.95) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn chi_square_values() {
        assert!((chi_square_sf(3.841458820694124, 1) - 0.05).abs() < 1e-9);
        let g = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(g.statistic, 0.0);
        assert_eq!(g.df, 1);
        let t = chi_square_two_sample(&[10, 20, 30], &[10, 20, 30]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.df, 2);
        let i = chi_square_independence(&[vec![10, 0], vec![0, 10]]).unwrap();
        assert!(i.p_value < 1e-3);
    }

    #[test]
    fn line_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v).collect();
        let f = fit_line(&x, &y, &[1.0; 4]).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0], &[1.0], &[1.0]).is_err());
        let o = fit_line_ols(&x, &y).unwrap();
        assert!(o.slope_se < 1e-12);
        let o = fit_line_ols(&x, &[0.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((o.slope - 0.6).abs() < 1e-12 && (o.slope_se - 0.02f64.sqrt()).abs() < 1e-12);
    }
}
