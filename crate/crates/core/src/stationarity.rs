//! Top Lyapunov exponent of the random matrix product and the strict
//! stationarity decision.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::Z2Rule;
use crate::rng::{Domain, SeedStream};
use crate::sre::GarchSpec;
use crate::stats::{mean, mean_stderr};

/// How expectations over the innovation law are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Expectation {
    /// Fixed quadrature rule over `Z²`.
    Quadrature,
    /// Plain Monte Carlo with `draws` innovations from the given seed.
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct NaiveReplicate {
    /// Last finite value of `t⁻¹ ln‖A_t···A_1‖`.
    pub gamma: f64,
    /// Step at which the running norm underflowed to zero.
    pub underflow_at: Option<usize>,
    pub overflow_at: Option<usize>,
    pub trace: Vec<(usize, f64)>,
}

/// Per-replicate plain products. Underflow is recorded, not raised.
pub fn gamma_naive(
    spec: &GarchSpec,
    t: usize,
    replicates: usize,
    seeds: &SeedStream,
) -> Vec<NaiveReplicate> {
    let checkpoints = log_checkpoints(t, 200);
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeds.rng(Domain::GammaNaive, r as u64);
            let sampler = spec.innovation.sampler();
            let d = spec.dim();
            let mut m = identity(d);
            let mut col = vec![0.0; d];
            let mut out = NaiveReplicate {
                gamma: f64::NAN,
                underflow_at: None,
                overflow_at: None,
                trace: Vec::new(),
            };
            let mut next = 0;
            for step in 1..=t {
                let z2 = sampler.draw_z2(&mut rng);
                for j in 0..d {
                    let src: Vec<f64> = (0..d).map(|i| m[i * d + j]).collect();
                    spec.apply(z2, &src, &mut col);
                    for i in 0..d {
                        m[i * d + j] = col[i];
                    }
                }
                let norm: f64 = m.iter().map(|v| v.abs()).sum();
                if norm == 0.0 {
                    out.underflow_at = Some(step);
                    break;
                }
                if !norm.is_finite() {
                    out.overflow_at = Some(step);
                    break;
                }
                out.gamma = norm.ln() / step as f64;
                if next < checkpoints.len() && checkpoints[next] == step {
                    out.trace.push((step, out.gamma));
                    next += 1;
                }
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StableReplicate {
    pub log_norm_half: f64,
    pub log_norm: f64,
    pub sum_log_lambda: f64,
    pub sum_sq_log_lambda: f64,
    pub non_finite: bool,
    pub naive_underflow: bool,
    /// `(t, γ_t, η_t)` at log-spaced checkpoints.
    pub trace: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub t: usize,
    pub gamma_t: f64,
    pub eta_t: f64,
    /// `t⁻¹ ln‖C_t‖ = η_t − η`, averaged over replicates.
    pub log_c_t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaReport {
    /// Mean naive estimate, absent when any replicate underflowed.
    pub gamma_naive: Option<f64>,
    pub naive_underflows: usize,
    pub gamma_theorem1: f64,
    pub gamma_theorem3: Option<f64>,
    pub eta: f64,
    pub eta_stderr: f64,
    /// Mean of `t⁻¹ ln‖Δ_t‖` without the half-path bias correction.
    pub eta_raw: f64,
    pub e_log_lambda: f64,
    pub e_log_lambda_mc: f64,
    pub t_used: usize,
    pub replicates: usize,
    pub mc_stderr: f64,
    pub stable_flags: usize,
    pub condition_suspect: bool,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableConfig {
    pub t: usize,
    pub replicates: usize,
    pub expectation: Expectation,
}

impl Default for StableConfig {
    fn default() -> Self {
        Self {
            t: 30_000,
            replicates: 10,
            expectation: Expectation::Quadrature,
        }
    }
}

/// Lyapunov exponent as `E ln λ + η` with the product kept as a unit-norm
/// matrix and an accumulated log-norm.
///
/// `η` for a replicate is `(ln‖Δ_t‖ − ln‖Δ_{t/2}‖)/(t − t/2)`, which cancels the
/// `O(1/t)` offset carried by `t⁻¹ ln‖Δ_t‖`.
pub fn gamma_stable(
    spec: &GarchSpec,
    cfg: &StableConfig,
    seeds: &SeedStream,
) -> Result<GammaReport> {
    let t = cfg.t.max(2);
    let half = t / 2;
    let checkpoints = log_checkpoints(t, 200);
    let reps: Vec<StableReplicate> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| stable_replicate(spec, t, half, &checkpoints, seeds, r as u64))
        .collect();

    let etas: Vec<f64> = reps
        .iter()
        .map(|r| (r.log_norm - r.log_norm_half) / (t - half) as f64)
        .collect();
    let (eta, eta_stderr) = mean_stderr(&etas);
    let eta_raw = mean(
        &reps
            .iter()
            .map(|r| r.log_norm / t as f64)
            .collect::<Vec<_>>(),
    );

    let n_draws = (t * reps.len()) as f64;
    let s1: f64 = reps.iter().map(|r| r.sum_log_lambda).sum();
    let s2: f64 = reps.iter().map(|r| r.sum_sq_log_lambda).sum();
    let e_log_lambda_mc = s1 / n_draws;
    let var_ll = (s2 / n_draws - e_log_lambda_mc * e_log_lambda_mc).max(0.0);
    let (e_log_lambda, ell_se) = match cfg.expectation {
        Expectation::Quadrature => (e_log_lambda_quad(spec, &spec.innovation.z2_rule()), 0.0),
        Expectation::MonteCarlo { .. } => (e_log_lambda_mc, (var_ll / n_draws).sqrt()),
    };

    let trace: Vec<TracePoint> = checkpoints
        .iter()
        .enumerate()
        .map(|(k, &tk)| {
            let g = mean(&reps.iter().map(|r| r.trace[k].1).collect::<Vec<_>>());
            let e = mean(&reps.iter().map(|r| r.trace[k].2).collect::<Vec<_>>());
            TracePoint {
                t: tk,
                gamma_t: g,
                eta_t: e,
                log_c_t: e - eta,
            }
        })
        .collect();
    let condition_suspect = condition_suspect(&trace, eta_stderr);
    if condition_suspect {
        log::warn!(
            "t⁻¹ ln‖C_t‖ does not appear to approach 0; the decomposition may be unreliable"
        );
    }

    let underflows = reps.iter().filter(|r| r.naive_underflow).count();
    let gamma_naive = if underflows == 0 {
        Some(mean(
            &reps
                .iter()
                .map(|r| (r.log_norm + r.sum_log_lambda) / t as f64)
                .collect::<Vec<_>>(),
        ))
    } else {
        None
    };
    Ok(GammaReport {
        gamma_naive,
        naive_underflows: underflows,
        gamma_theorem1: e_log_lambda + eta,
        gamma_theorem3: None,
        eta,
        eta_stderr,
        eta_raw,
        e_log_lambda,
        e_log_lambda_mc,
        t_used: t,
        replicates: reps.len(),
        mc_stderr: (eta_stderr * eta_stderr + ell_se * ell_se).sqrt(),
        stable_flags: reps.iter().filter(|r| r.non_finite).count(),
        condition_suspect,
        trace,
    })
}

fn stable_replicate(
    spec: &GarchSpec,
    t: usize,
    half: usize,
    checkpoints: &[usize],
    seeds: &SeedStream,
    r: u64,
) -> StableReplicate {
    let mut rng = seeds.rng(Domain::GammaStable, r);
    let sampler = spec.innovation.sampler();
    let d = spec.dim();
    let mut m = identity(d);
    let norm0 = d as f64;
    m.iter_mut().for_each(|v| *v /= norm0);
    let mut log_norm = norm0.ln();
    let mut naive = identity(d);
    let mut naive_underflow = false;
    let mut src = vec![0.0; d];
    let mut col = vec![0.0; d];
    let mut out = StableReplicate {
        log_norm_half: 0.0,
        log_norm: 0.0,
        sum_log_lambda: 0.0,
        sum_sq_log_lambda: 0.0,
        non_finite: false,
        naive_underflow: false,
        trace: Vec::with_capacity(checkpoints.len()),
    };
    let mut next = 0;
    for step in 1..=t {
        let z2 = sampler.draw_z2(&mut rng);
        let lambda = spec.lambda(z2);
        let inv = 1.0 / lambda;
        let mut norm = 0.0;
        for j in 0..d {
            for i in 0..d {
                src[i] = m[i * d + j];
            }
            spec.apply(z2, &src, &mut col);
            for i in 0..d {
                let v = col[i] * inv;
                m[i * d + j] = v;
                norm += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= norm);
        log_norm += norm.ln();
        let ll = lambda.ln();
        out.sum_log_lambda += ll;
        out.sum_sq_log_lambda += ll * ll;
        if !log_norm.is_finite() || !ll.is_finite() {
            out.non_finite = true;
        }
        if !naive_underflow {
            let mut nn = 0.0;
            for j in 0..d {
                for i in 0..d {
                    src[i] = naive[i * d + j];
                }
                spec.apply(z2, &src, &mut col);
                for i in 0..d {
                    naive[i * d + j] = col[i];
                    nn += col[i];
                }
            }
            if nn == 0.0 || !nn.is_finite() {
                naive_underflow = true;
            }
        }
        if step == half {
            out.log_norm_half = log_norm;
        }
        if next < checkpoints.len() && checkpoints[next] == step {
            let tf = step as f64;
            out.trace
                .push((step, (log_norm + out.sum_log_lambda) / tf, log_norm / tf));
            next += 1;
        }
    }
    out.log_norm = log_norm;
    out.naive_underflow = naive_underflow;
    out
}

/// Flags a `t⁻¹ ln‖C_t‖` trace that is not shrinking towards zero over its second half.
fn condition_suspect(trace: &[TracePoint], eta_stderr: f64) -> bool {
    let (Some(last), Some(mid)) = (
        trace.last(),
        trace.iter().find(|p| 2 * p.t >= trace.last().unwrap().t),
    ) else {
        return false;
    };
    last.log_c_t.abs() > 3.0 * eta_stderr.max(1.0 / last.t as f64)
        && last.log_c_t.abs() >= mid.log_c_t.abs()
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Up to `count` distinct, roughly log-spaced steps ending at `t`.
pub fn log_checkpoints(t: usize, count: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..count)
        .map(|k| ((t as f64).powf((k + 1) as f64 / count as f64)).round() as usize)
        .map(|x| x.clamp(1, t))
        .collect();
    v.dedup();
    v
}

pub fn e_log_lambda_quad(spec: &GarchSpec, rule: &Z2Rule) -> f64 {
    rule.expect(|s| spec.lambda(s).ln())
}

/// `E λ^k`, failing when the estimate is dominated by the far tail.
pub fn lambda_moment(spec: &GarchSpec, k: f64, how: Expectation) -> Result<f64> {
    match how {
        Expectation::Quadrature => {
            let rule = spec.innovation.z2_rule();
            let full = rule.expect(|s| spec.lambda(s).powf(k));
            let cut = TAIL_CHECK_Z2;
            let core = rule.expect(|s| {
                if s <= cut {
                    spec.lambda(s).powf(k)
                } else {
                    0.0
                }
            });
            let change = (full - core) / full;
            if !full.is_finite() || change > 0.2 {
                return Err(Error::MomentDiverged { order: k, change });
            }
            Ok(full)
        }
        Expectation::MonteCarlo { draws, seed } => {
            let mut rng = SeedStream::new(seed).rng(Domain::Moments, 0);
            let sampler = spec.innovation.sampler();
            let vals: Vec<f64> = (0..draws.max(2))
                .map(|_| spec.lambda(sampler.draw_z2(&mut rng)).powf(k))
                .collect();
            let full = mean(&vals);
            let first = mean(&vals[..vals.len() / 2]);
            let change = ((full - first) / full).abs();
            if !full.is_finite() || change > 0.2 {
                return Err(Error::MomentDiverged { order: k, change });
            }
            Ok(full)
        }
    }
}

/// Largest `Z²` kept when testing whether a moment is tail-dominated.
pub const TAIL_CHECK_Z2: f64 = 1e26;

/// `η = −κ⁻¹ ln E(λ^κ)`.
pub fn eta_from_kappa(spec: &GarchSpec, kappa: f64, how: Expectation) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    Ok(-lambda_moment(spec, kappa, how)?.ln() / kappa)
}

/// `γ = E(ln λ) − κ⁻¹ ln E(λ^κ)`.
pub fn gamma_combined(spec: &GarchSpec, kappa: f64, how: Expectation) -> Result<f64> {
    let eta = eta_from_kappa(spec, kappa, how)?;
    let ell = match how {
        Expectation::Quadrature => e_log_lambda_quad(spec, &spec.innovation.z2_rule()),
        Expectation::MonteCarlo { draws, seed } => {
            let mut rng = SeedStream::new(seed).rng(Domain::Moments, 1);
            let sampler = spec.innovation.sampler();
            mean(
                &(0..draws.max(1))
                    .map(|_| spec.lambda(sampler.draw_z2(&mut rng)).ln())
                    .collect::<Vec<_>>(),
            )
        }
    };
    Ok(ell + eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StationaryBySufficiency,
    StationaryByGamma,
    NotStationary,
    Inconclusive,
}

/// Sufficient and necessary coefficient conditions first, then the sign of `γ`
/// with a two-standard-error margin. The report is absent when a coefficient
/// condition decided; see [`stationarity_report`].
pub fn check_stationarity(
    spec: &GarchSpec,
    cfg: &StableConfig,
    seeds: &SeedStream,
) -> Result<(Verdict, Option<GammaReport>)> {
    if spec.phi() <= 1.0 + 1e-12 {
        return Ok((Verdict::StationaryBySufficiency, None));
    }
    if spec.beta_sum() >= 1.0 {
        return Ok((Verdict::NotStationary, None));
    }
    let rep = gamma_stable(spec, cfg, seeds)?;
    let g = rep.gamma_theorem1;
    let se = rep.mc_stderr;
    let v = if g + 2.0 * se < 0.0 {
        Verdict::StationaryByGamma
    } else if g - 2.0 * se > 0.0 {
        Verdict::NotStationary
    } else {
        Verdict::Inconclusive
    };
    Ok((v, Some(rep)))
}

/// As [`check_stationarity`], but also estimates `γ` when `φ ≤ 1` settled the verdict.
pub fn stationarity_report(
    spec: &GarchSpec,
    cfg: &StableConfig,
    seeds: &SeedStream,
) -> Result<(Verdict, Option<GammaReport>)> {
    match check_stationarity(spec, cfg, seeds)? {
        (Verdict::StationaryBySufficiency, None) => Ok((
            Verdict::StationaryBySufficiency,
            Some(gamma_stable(spec, cfg, seeds)?),
        )),
        other => Ok(other),
    }
}
