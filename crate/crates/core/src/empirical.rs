//! Estimators computed directly from a long simulated path of `X²`.

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{Domain, SeedStream};
use crate::stats::{ols, quantile, quantile_sorted};

/// Runs estimate of the extremal index.
#[derive(Debug, Clone, Serialize)]
pub struct RunsEstimate {
    pub u: f64,
    pub m: usize,
    pub theta_tilde: f64,
    pub n_exceed: usize,
    /// Percentile interval from a blocked bootstrap with blocks of `10 m`.
    pub ci95: (f64, f64),
}

pub const BOOTSTRAP_REPLICATES: usize = 500;

/// Fraction of exceedances of `u` not followed by another within `m` steps.
pub fn runs_estimator(x2: &[f64], u: f64, m: usize, seeds: &SeedStream) -> Result<RunsEstimate> {
    let n = x2.len();
    if m == 0 || n <= m {
        return Err(Error::Config(format!(
            "runs estimator needs a path longer than m = {m}, got {n}"
        )));
    }
    let upto = n - m;
    // next_exceed[j] = smallest i > j with x2[i] > u (or n)
    let mut next = vec![n; n];
    let mut nxt = n;
    for j in (0..n).rev() {
        next[j] = nxt;
        if x2[j] > u {
            nxt = j;
        }
    }
    let block = 10 * m;
    let nb = upto.div_ceil(block);
    let mut num = vec![0.0; nb];
    let mut den = vec![0.0; nb];
    for j in 0..upto {
        if x2[j] > u {
            den[j / block] += 1.0;
            if next[j] > j + m {
                num[j / block] += 1.0;
            }
        }
    }
    let total_den: f64 = den.iter().sum();
    if total_den == 0.0 {
        return Err(Error::NoExceedances(u));
    }
    let theta = num.iter().sum::<f64>() / total_den;
    let mut rng = seeds.rng(Domain::Bootstrap, m as u64);
    let mut reps = Vec::with_capacity(BOOTSTRAP_REPLICATES);
    for _ in 0..BOOTSTRAP_REPLICATES {
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..nb {
            let i = rng.random_range(0..nb);
            a += num[i];
            b += den[i];
        }
        if b > 0.0 {
            reps.push(a / b);
        }
    }
    reps.sort_by(|a, b| a.total_cmp(b));
    let lo = quantile_sorted(&reps, 0.025).min(theta);
    let hi = quantile_sorted(&reps, 0.975).max(theta);
    Ok(RunsEstimate {
        u,
        m,
        theta_tilde: theta,
        n_exceed: total_den as usize,
        ci95: (lo, hi),
    })
}

/// `χ̃(τ, u)` for `τ = 0..=tau_max`.
pub fn empirical_extremogram(x2: &[f64], u: f64, tau_max: usize) -> Result<Vec<f64>> {
    let n = x2.len();
    let exceed: Vec<bool> = x2.iter().map(|&v| v > u).collect();
    let mut out = Vec::with_capacity(tau_max + 1);
    for tau in 0..=tau_max {
        if tau >= n {
            return Err(Error::NoExceedances(u));
        }
        let (mut a, mut b) = (0usize, 0usize);
        for j in 0..n - tau {
            if exceed[j] {
                b += 1;
                if exceed[j + tau] {
                    a += 1;
                }
            }
        }
        if b == 0 {
            return Err(Error::NoExceedances(u));
        }
        out.push(a as f64 / b as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TailQq {
    pub x: f64,
    pub n_exceed: usize,
    /// `(ln r, ln P̂(X² > r x | X² > x))`, only where the count is positive.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub slope_se: f64,
}

/// Conditional survival of `X²/x` above the `x_quantile` threshold on `r_grid`.
pub fn tail_qq(x2: &[f64], x_quantile: f64, r_grid: &[f64]) -> Result<TailQq> {
    let x = quantile(x2, x_quantile);
    let over: Vec<f64> = x2.iter().copied().filter(|&v| v > x).collect();
    if over.is_empty() {
        return Err(Error::NoExceedances(x));
    }
    let n = over.len() as f64;
    let mut points = Vec::new();
    for &r in r_grid {
        let c = over.iter().filter(|&&v| v > r * x).count();
        if c > 0 && r > 0.0 {
            points.push((r.ln(), (c as f64 / n).ln()));
        }
    }
    let (slope, slope_se) = if points.len() >= 2 {
        let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let (s, _, se) = ols(&lx, &ly);
        (s, se)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(TailQq {
        x,
        n_exceed: over.len(),
        points,
        slope,
        slope_se,
    })
}

/// Log-spaced grid `1 ..= r_max` with `n` points.
pub fn log_grid(r_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (r_max.ln() * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}
