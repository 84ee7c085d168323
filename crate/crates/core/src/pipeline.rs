//! End-to-end runs: stationarity, tail index, spectral ensemble, tail chains
//! and cluster functionals for one model, and sweeps of that over a grid.

use serde::{Deserialize, Serialize};

use crate::clusters::{cluster_report, delta, ClusterReport, DeltaMethod, Estimate};
use crate::error::{Error, Result};
use crate::innovations::Innovation;
use crate::rng::{Domain, SeedStream};
use crate::spectral::{
    find_kappa, init_ensemble, iterate, InitConfig, KappaConfig, RhoCurve, RhoPoint,
};
use crate::sre::GarchSpec;
use crate::stationarity::{
    e_log_lambda_quad, eta_from_kappa, stationarity_report, Expectation, GammaReport, StableConfig,
    Verdict,
};
use crate::tailchain::{batch_chains, ChainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub stable: StableConfig,
    pub init: InitConfig,
    pub kappa: KappaConfig,
    pub chains: ChainConfig,
    pub n_chains: usize,
    pub tau_max: usize,
    pub i_max: usize,
    pub delta: DeltaMethod,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            stable: StableConfig::default(),
            init: InitConfig::default(),
            kappa: KappaConfig::default(),
            chains: ChainConfig::default(),
            n_chains: 100_000,
            tau_max: 25,
            i_max: 200,
            delta: DeltaMethod::Breiman,
        }
    }
}

/// One summary row per model.
///
/// `gamma` and `eta` are `E ln λ + η` and `η = −κ⁻¹ ln E λ^κ` at the estimated
/// `κ`. The product-based Lyapunov estimate is carried separately in
/// `gamma_product`/`eta_product`; both forms agree for GARCH(1,1) and ARCH(1).
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub verdict: Verdict,
    pub e_log_lambda: f64,
    pub gamma: Estimate,
    pub eta: Estimate,
    pub gamma_product: Option<Estimate>,
    pub eta_product: Option<Estimate>,
    pub kappa: Estimate,
    pub kappa_bracket: (f64, f64),
    pub theta_x2: Estimate,
    pub theta_up: Estimate,
    pub theta_lo: Estimate,
    pub delta: f64,
    pub delta_method: DeltaMethod,
    pub converged_at: Option<usize>,
    pub alive_at_horizon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub row: ReportRow,
    pub gamma: Option<GammaReport>,
    pub rho_curve: RhoCurve,
    pub clusters: ClusterReport,
}

/// Standard error of `κ̂` from the averaged estimates at the bracket ends.
pub fn kappa_stderr(curve: &RhoCurve) -> f64 {
    let end = |k: f64| -> Option<&RhoPoint> {
        curve
            .points
            .iter()
            .filter(|p| p.k == k && p.rho.is_finite())
            .max_by_key(|p| p.averaged)
    };
    let (Some(lo), Some(hi)) = (end(curve.bracket.0), end(curve.bracket.1)) else {
        return f64::NAN;
    };
    let slope = (hi.rho - lo.rho) / (hi.k - lo.k);
    let se = 0.5 * (lo.stderr + hi.stderr);
    let width = hi.k - lo.k;
    if slope > 0.0 {
        (se / slope).hypot(width / 12f64.sqrt())
    } else {
        width / 12f64.sqrt()
    }
}

/// `η` at `κ̂`, with the uncertainty in `κ̂` carried through by a difference quotient.
fn eta_at(spec: &GarchSpec, kappa: Estimate) -> Result<Estimate> {
    let eta = eta_from_kappa(spec, kappa.value, Expectation::Quadrature)?;
    let h = 1e-3;
    let slope = (eta_from_kappa(spec, kappa.value + h, Expectation::Quadrature)?
        - eta_from_kappa(spec, kappa.value - h, Expectation::Quadrature)?)
        / (2.0 * h);
    Ok(Estimate {
        value: eta,
        stderr: (slope * kappa.stderr).abs(),
    })
}

pub fn report(
    spec: &GarchSpec,
    label: &str,
    cfg: &ReportConfig,
    seeds: &SeedStream,
) -> Result<Report> {
    let (verdict, gamma) = stationarity_report(spec, &cfg.stable, seeds)?;
    match verdict {
        Verdict::NotStationary => {
            let detail = match &gamma {
                Some(g) => format!("gamma = {:.4} ± {:.4}", g.gamma_theorem1, g.mc_stderr),
                None => format!("sum of beta = {:.4} ≥ 1", spec.beta_sum()),
            };
            return Err(Error::NotStationary(detail));
        }
        Verdict::Inconclusive => log::warn!("{label}: stationarity is inconclusive; continuing"),
        _ => {}
    }
    log::info!("{label}: {verdict:?}");
    let init = init_ensemble(spec, &cfg.init, seeds)?;
    let curve = find_kappa(spec, &init, &cfg.kappa, seeds)?;
    let kappa = Estimate {
        value: curve.kappa_hat,
        stderr: kappa_stderr(&curve),
    };
    log::info!("{label}: kappa = {:.4} ± {:.4}", kappa.value, kappa.stderr);
    let run = iterate(
        spec,
        kappa.value,
        &init,
        &cfg.kappa.spectral,
        &seeds.child(Domain::Kappa, 1),
    )?;
    if run.converged_at.is_none() {
        log::warn!("{label}: particle filter at kappa did not settle");
    }
    let batch = batch_chains(
        spec,
        kappa.value,
        &run.ensemble,
        &cfg.chains,
        cfg.n_chains,
        0,
        seeds,
    )?;
    let method = if spec.p == 0 && cfg.delta == DeltaMethod::TailChain {
        DeltaMethod::Breiman
    } else {
        cfg.delta
    };
    let d = delta(
        spec,
        kappa.value,
        &run.ensemble,
        Some(&batch.summary),
        method,
        seeds,
    )?;
    let clusters = cluster_report(&batch.summary, cfg.tau_max, cfg.i_max, d, method)?;

    let ell = e_log_lambda_quad(spec, &spec.innovation.z2_rule());
    let eta = eta_at(spec, kappa)?;
    let gamma_k = Estimate {
        value: ell + eta.value,
        stderr: eta.stderr,
    };
    let gamma = gamma.map(|mut g| {
        g.gamma_theorem3 = Some(gamma_k.value);
        g
    });
    let row = ReportRow {
        label: label.to_string(),
        verdict,
        e_log_lambda: ell,
        gamma: gamma_k,
        eta,
        gamma_product: gamma.as_ref().map(|g| Estimate {
            value: g.gamma_theorem1,
            stderr: g.mc_stderr,
        }),
        eta_product: gamma.as_ref().map(|g| Estimate {
            value: g.eta,
            stderr: g.eta_stderr,
        }),
        kappa,
        kappa_bracket: curve.bracket,
        theta_x2: clusters.theta_x2,
        theta_up: clusters.theta_up,
        theta_lo: clusters.theta_lo,
        delta: d,
        delta_method: method,
        converged_at: run.converged_at,
        alive_at_horizon: clusters.alive_at_horizon,
    };
    Ok(Report {
        row,
        gamma,
        rho_curve: curve,
        clusters,
    })
}

/// A GARCH(2,2) grid over `(α₁, β₁)` with `α₂, β₂` held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourConfig {
    pub alpha0: f64,
    pub alpha1: Vec<f64>,
    pub beta1: Vec<f64>,
    pub alpha2: f64,
    pub beta2: f64,
    pub report: ReportConfig,
}

impl Default for ContourConfig {
    fn default() -> Self {
        let mut report = ReportConfig {
            n_chains: 20_000,
            ..ReportConfig::default()
        };
        report.init.n = 2_000_000;
        report.init.u_quantile = 0.999;
        report.stable.t = 10_000;
        report.kappa.hi = 12.0;
        report.kappa.refine_average = 20;
        report.kappa.max_average = 200;
        report.kappa.tol = 0.02;
        report.kappa.spectral.j = 5_000;
        Self {
            alpha0: 1.0,
            alpha1: vec![0.1, 0.2, 0.3],
            beta1: vec![0.4, 0.5, 0.6],
            alpha2: 0.05,
            beta2: 0.05,
            report,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContourPoint {
    pub alpha1: f64,
    pub beta1: f64,
    pub phi: f64,
    pub kappa: Option<f64>,
    pub theta_x2: Option<Estimate>,
    pub theta_up: Option<Estimate>,
    /// Error message for points that could not be evaluated.
    pub failure: Option<String>,
}

/// Evaluates every grid point; points whose report fails are kept with the
/// failure recorded. Point `i` (row-major, `α₁` outer) uses substream `i`.
pub fn contour(
    cfg: &ContourConfig,
    innovation: Innovation,
    seeds: &SeedStream,
) -> Result<Vec<ContourPoint>> {
    let mut out = Vec::with_capacity(cfg.alpha1.len() * cfg.beta1.len());
    for (i, &a1) in cfg.alpha1.iter().enumerate() {
        for (j, &b1) in cfg.beta1.iter().enumerate() {
            let spec = GarchSpec::new(
                cfg.alpha0,
                vec![a1, cfg.alpha2],
                vec![b1, cfg.beta2],
                innovation,
            )?;
            let sub = seeds.child(Domain::Contour, (i * cfg.beta1.len() + j) as u64);
            let label = format!("alpha1={a1} beta1={b1}");
            let mut pt = ContourPoint {
                alpha1: a1,
                beta1: b1,
                phi: spec.phi(),
                kappa: None,
                theta_x2: None,
                theta_up: None,
                failure: None,
            };
            match report(&spec, &label, &cfg.report, &sub) {
                Ok(r) => {
                    pt.kappa = Some(r.row.kappa.value);
                    pt.theta_x2 = Some(r.row.theta_x2);
                    pt.theta_up = Some(r.row.theta_up);
                }
                Err(e) => pt.failure = Some(e.to_string()),
            }
            out.push(pt);
        }
    }
    Ok(out)
}
