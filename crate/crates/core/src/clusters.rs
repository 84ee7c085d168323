//! Cluster functionals of the squared process from tail-chain summaries, the
//! tail skewness `δ`, and the Bernoulli-thinned upper and lower tail versions.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::innovations::Innovation;
use crate::quad;
use crate::rng::{Domain, SeedStream};
use crate::spectral::ParticleEnsemble;
use crate::sre::GarchSpec;
use crate::tailchain::{ChainSummary, Condition};

/// `χ(τ)` with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn binomial(count: u64, n: u64) -> Estimate {
    let p = count as f64 / n as f64;
    Estimate {
        value: p,
        stderr: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

/// Proportion of chains above 1 at each lag `τ = 0..=tau_max`.
pub fn extremogram_limit(summary: &ChainSummary, tau_max: usize) -> Result<Vec<Estimate>> {
    if summary.condition != Condition::OnX2 {
        return Err(Error::Config(
            "the extremogram needs chains conditioned on X² > 1".into(),
        ));
    }
    let n = summary.n_chains;
    Ok((0..=tau_max.min(summary.t_max))
        .map(|t| binomial(summary.exceed_x2[t], n))
        .collect())
}

/// Pool-adjacent-violators fit of a nonincreasing sequence (equal weights).
pub fn pava_nonincreasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ladder {
    /// `θ^(i) = P(exactly i exceedances on [0, T] | X̂²₀ > 1)`, `i = 1..=i_max`.
    pub theta_raw: Vec<f64>,
    /// Nonincreasing fit of `theta_raw`.
    pub theta_ladder: Vec<f64>,
    /// `π(i) = (θ^(i) − θ^(i+1))/θ^(1)`, `i = 1..=i_max`.
    pub pi: Vec<f64>,
    pub theta: Estimate,
    /// Mass of chains with more than `i_max` exceedances.
    pub truncated_mass: f64,
    pub mean_cluster_size: f64,
}

/// Extremal index and cluster-size distribution.
///
/// A chain started at a uniformly chosen member of a cluster of size `K` sees
/// `K − m + 1` exceedances forward from its `m`-th member, so the count `N`
/// satisfies `P(N = i) = θ P(K ≥ i)`. Hence `θ = P(N = 1)` and
/// `π(i) = (P(N = i) − P(N = i+1))/θ`.
pub fn cluster_ladder(summary: &ChainSummary, i_max: usize) -> Result<Ladder> {
    let n = summary.n_chains;
    if n == 0 {
        return Err(Error::NoExceedances(1.0));
    }
    let at = |i: usize| summary.count_hist.get(i).copied().unwrap_or(0) as f64 / n as f64;
    let theta_raw: Vec<f64> = (1..=i_max + 1).map(at).collect();
    let beyond: f64 = summary.count_hist.iter().skip(i_max + 1).sum::<u64>() as f64 / n as f64;
    if beyond > 1e-3 {
        log::warn!(
            "{:.2e} of the cluster-count mass lies beyond i_max = {i_max}",
            beyond
        );
    }
    let smooth = pava_nonincreasing(&theta_raw);
    let theta1 = smooth[0];
    if !(theta1 > 0.0) {
        return Err(Error::NoExceedances(1.0));
    }
    let pi: Vec<f64> = (0..i_max)
        .map(|i| (smooth[i] - smooth[i + 1]) / theta1)
        .collect();
    let mean: f64 = pi.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    let theta = Estimate {
        value: theta1,
        stderr: (theta1 * (1.0 - theta1) / n as f64).sqrt(),
    };
    Ok(Ladder {
        theta_raw: theta_raw[..i_max].to_vec(),
        theta_ladder: smooth[..i_max].to_vec(),
        pi,
        theta,
        truncated_mass: beyond,
        mean_cluster_size: mean,
    })
}

/// `P(Z > y | |Z| > y)` on a log grid, interpolated in `ln y`.
#[derive(Debug, Clone)]
pub struct SignTable {
    log_lo: f64,
    step: f64,
    ratio: Vec<f64>,
    limit: f64,
    symmetric: bool,
}

impl SignTable {
    pub fn new(inn: &Innovation) -> Self {
        let (log_lo, log_hi, step): (f64, f64, f64) = (-6.0, 25.0, 0.01);
        let n = ((log_hi - log_lo) / step).round() as usize;
        if inn.is_symmetric() {
            return Self {
                log_lo,
                step,
                ratio: Vec::new(),
                limit: 0.5,
                symmetric: true,
            };
        }
        let ys: Vec<f64> = (0..=n).map(|k| (log_lo + k as f64 * step).exp()).collect();
        let tail = |g: &dyn Fn(f64) -> f64| -> Vec<f64> {
            // cumulative from the far end
            let mut out = vec![0.0; ys.len()];
            let mut acc = quad::integrate_upper(g, ys[n], 1e-300, 1e-12).0;
            out[n] = acc;
            for k in (0..n).rev() {
                acc += quad::integrate(g, ys[k], ys[k + 1], 1e-300, 1e-13).0;
                out[k] = acc;
            }
            out
        };
        let up = tail(&|x| inn.density(x));
        let lo = tail(&|x| inn.density(-x));
        let ratio = up
            .iter()
            .zip(&lo)
            .map(|(a, b)| {
                if a + b > 0.0 {
                    a / (a + b)
                } else {
                    inn.delta_z()
                }
            })
            .collect();
        Self {
            log_lo,
            step,
            ratio,
            limit: inn.delta_z(),
            symmetric: false,
        }
    }

    pub fn at(&self, y: f64) -> f64 {
        if self.symmetric {
            return 0.5;
        }
        let x = (y.ln() - self.log_lo) / self.step;
        if x <= 0.0 {
            return self.ratio[0];
        }
        let k = x.floor() as usize;
        if k + 1 >= self.ratio.len() {
            return self.limit;
        }
        let f = x - k as f64;
        let r = &self.ratio;
        if k == 0 || k + 2 >= r.len() {
            return r[k] * (1.0 - f) + r[k + 1] * f;
        }
        // Catmull-Rom
        let (p0, p1, p2, p3) = (r[k - 1], r[k], r[k + 1], r[k + 2]);
        p1 + 0.5
            * f
            * (p2 - p0
                + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMethod {
    /// Volatility share of the spectral state, integrated against the exact
    /// conditional sign probability.
    Spectral,
    /// Sign probability given `Z₀² = X̂²₀/σ̂²₀` over tail chains conditioned on `X̂²₀ > 1`.
    TailChain,
    /// `E[Z₊^{2κ}]/E|Z|^{2κ}`.
    Breiman,
}

/// `δ = Σ_j w_j P(Z > s_j^{-1/2} | |Z| > s_j^{-1/2})` over weighted volatility samples.
pub fn delta_eval(inn: &Innovation, s: &[f64], w: &[f64]) -> f64 {
    if inn.is_symmetric() {
        return 0.5;
    }
    let table = SignTable::new(inn);
    let total: f64 = w.iter().sum();
    s.iter()
        .zip(w)
        .map(|(&si, &wi)| wi * table.at(si.powf(-0.5)))
        .sum::<f64>()
        / total
}

/// Weighted law of the volatility coordinate `σ²/‖Y‖₁` under the spectral
/// measure. For ARCH models, whose state omits `σ²`, it is produced by one
/// more particle step from the ensemble.
pub fn volatility_share(
    spec: &GarchSpec,
    ens: &ParticleEnsemble,
    kappa: f64,
    seeds: &SeedStream,
) -> (Vec<f64>, Vec<f64>) {
    if spec.p > 0 {
        return (ens.component(spec.q), ens.weights.clone());
    }
    let sampler = spec.innovation.sampler();
    let mut rng = seeds.rng(Domain::Propagate, u64::MAX);
    let mut s = Vec::with_capacity(ens.len());
    let mut w = Vec::with_capacity(ens.len());
    for j in 0..ens.len() {
        let th = ens.particle(j);
        let z2 = sampler.draw_z2(&mut rng);
        let norm = spec.apply_norm(z2, th);
        s.push(spec.linear_part(th) / norm);
        w.push(ens.weights[j] * norm.powf(kappa));
    }
    (s, w)
}

/// `E[Z₊^{2κ}] / E|Z|^{2κ}` by quadrature.
pub fn delta_breiman(inn: &Innovation, kappa: f64) -> f64 {
    let up = quad::integrate_upper(|z| z.powf(2.0 * kappa) * inn.density(z), 0.0, 1e-14, 1e-11).0;
    let lo = quad::integrate_upper(|z| z.powf(2.0 * kappa) * inn.density(-z), 0.0, 1e-14, 1e-11).0;
    up / (up + lo)
}

/// Tail skewness by the chosen reading.
pub fn delta(
    spec: &GarchSpec,
    kappa: f64,
    ens: &ParticleEnsemble,
    summary: Option<&ChainSummary>,
    method: DeltaMethod,
    seeds: &SeedStream,
) -> Result<f64> {
    if spec.innovation.is_symmetric() {
        return Ok(0.5);
    }
    match method {
        DeltaMethod::Spectral => {
            let (s, w) = volatility_share(spec, ens, kappa, seeds);
            Ok(delta_eval(&spec.innovation, &s, &w))
        }
        DeltaMethod::Breiman => Ok(delta_breiman(&spec.innovation, kappa)),
        DeltaMethod::TailChain => {
            let s = summary
                .ok_or_else(|| Error::Config("tail-chain delta needs a chain batch".into()))?;
            if spec.p == 0 || s.condition != Condition::OnX2 {
                return Err(Error::Config(
                    "tail-chain delta needs X²-conditioned chains with a volatility state".into(),
                ));
            }
            Ok(s.sign_prob_sum / s.n_chains as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Signed {
    pub chi: Vec<f64>,
    /// Probability that a squared-process cluster has no exceedance in this tail.
    pub no_exceedance: f64,
    pub pi: Vec<f64>,
    pub theta: f64,
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Thinning of squared-process clusters with retention probability `r`.
fn thin(chi: &[f64], pi: &[f64], theta: f64, r: f64) -> Signed {
    let chi_t: Vec<f64> = chi
        .iter()
        .enumerate()
        .map(|(t, c)| if t == 0 { 1.0 } else { r * c })
        .collect();
    let m = pi.len();
    if r >= 1.0 {
        return Signed {
            chi: chi_t,
            no_exceedance: 0.0,
            pi: pi.to_vec(),
            theta,
        };
    }
    if r <= 0.0 {
        let mut p = vec![0.0; m];
        if m > 0 {
            p[0] = 1.0;
        }
        // limit of θ(1−Π)/r as r → 0 is θ·E[size] = 1
        return Signed {
            chi: chi_t,
            no_exceedance: 1.0,
            pi: p,
            theta: 1.0,
        };
    }
    let none: f64 = pi
        .iter()
        .enumerate()
        .map(|(i, p)| p * (1.0 - r).powi(i as i32 + 1))
        .sum();
    let keep = 1.0 - none;
    let (lr, lq) = (r.ln(), (1.0 - r).ln());
    let pi_t: Vec<f64> = (1..=m)
        .map(|j| {
            (j..=m)
                .map(|k| pi[k - 1] * (ln_choose(k, j) + j as f64 * lr + (k - j) as f64 * lq).exp())
                .sum::<f64>()
                / keep
        })
        .collect();
    Signed {
        chi: chi_t,
        no_exceedance: none,
        pi: pi_t,
        theta: theta * keep / r,
    }
}

/// Upper- and lower-tail functionals from the squared-process ones.
pub fn signed_transforms(
    chi: &[f64],
    pi: &[f64],
    theta: f64,
    delta: f64,
) -> Result<(Signed, Signed)> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::DegenerateDelta(delta));
    }
    if delta < 1e-12 || delta > 1.0 - 1e-12 {
        log::warn!("tail skewness {delta} is degenerate; returning limiting values");
    }
    Ok((
        thin(chi, pi, theta, delta),
        thin(chi, pi, theta, 1.0 - delta),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub n_chains: u64,
    pub chi_x2: Vec<Estimate>,
    pub theta_ladder: Vec<f64>,
    pub pi_x2: Vec<f64>,
    pub theta_x2: Estimate,
    pub mean_cluster_size: f64,
    pub truncated_mass: f64,
    pub delta: f64,
    pub delta_method: DeltaMethod,
    pub chi_up: Vec<f64>,
    pub chi_lo: Vec<f64>,
    pub pi_up: Vec<f64>,
    pub pi_lo: Vec<f64>,
    pub no_exceedance_up: f64,
    pub no_exceedance_lo: f64,
    pub theta_up: Estimate,
    pub theta_lo: Estimate,
    pub alive_at_horizon: f64,
}

pub fn cluster_report(
    summary: &ChainSummary,
    tau_max: usize,
    i_max: usize,
    delta: f64,
    method: DeltaMethod,
) -> Result<ClusterReport> {
    let chi = extremogram_limit(summary, tau_max)?;
    let lad = cluster_ladder(summary, i_max)?;
    let chi_v: Vec<f64> = chi.iter().map(|e| e.value).collect();
    let (up, lo) = signed_transforms(&chi_v, &lad.pi, lad.theta.value, delta)?;
    let scale = |s: &Signed, r: f64| {
        if r > 0.0 {
            s.theta / lad.theta.value
        } else {
            0.0
        }
    };
    let theta_up = Estimate {
        value: up.theta,
        stderr: lad.theta.stderr * scale(&up, delta),
    };
    let theta_lo = Estimate {
        value: lo.theta,
        stderr: lad.theta.stderr * scale(&lo, 1.0 - delta),
    };
    Ok(ClusterReport {
        n_chains: summary.n_chains,
        chi_x2: chi,
        theta_ladder: lad.theta_ladder,
        pi_x2: lad.pi,
        theta_x2: lad.theta,
        mean_cluster_size: lad.mean_cluster_size,
        truncated_mass: lad.truncated_mass,
        delta,
        delta_method: method,
        chi_up: up.chi,
        chi_lo: lo.chi,
        pi_up: up.pi,
        pi_lo: lo.pi,
        no_exceedance_up: up.no_exceedance,
        no_exceedance_lo: lo.no_exceedance,
        theta_up,
        theta_lo,
        alive_at_horizon: summary.alive_at_horizon(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_examples() {
        assert_eq!(pava_nonincreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(pava_nonincreasing(&[1.0, 3.0, 0.0]), vec![2.0, 2.0, 0.0]);
    }

    #[test]
    fn thinning_limits() {
        let pi = vec![0.5, 0.3, 0.2];
        let (up, lo) = signed_transforms(&[1.0, 0.4], &pi, 0.6, 1.0).unwrap();
        assert_eq!(up.theta, 0.6);
        assert_eq!(up.no_exceedance, 0.0);
        assert_eq!(lo.theta, 1.0);
        let (u, l) = signed_transforms(&[1.0, 0.4], &pi, 0.6, 0.5).unwrap();
        assert!((u.theta - l.theta).abs() < 1e-15);
        assert!(signed_transforms(&[1.0], &pi, 0.6, 1.5).is_err());
    }

    #[test]
    fn sign_table_matches_direct_tails() {
        let inn = Innovation::skew_t(3.0, 1.0).unwrap();
        let t = SignTable::new(&inn);
        for y in [0.5, 1.0, 3.7, 20.0] {
            let up = inn.upper_tail(y);
            let lo = inn.lower_tail(y);
            assert!(
                (t.at(y) - up / (up + lo)).abs() < 1e-6,
                "{y}: {} vs {} ({up} {lo})",
                t.at(y),
                up / (up + lo)
            );
        }
        assert!((t.at(1e12) - inn.delta_z()).abs() < 1e-6);
    }
}
