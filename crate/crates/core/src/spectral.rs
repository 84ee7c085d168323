//! Sequential importance sampling for the spectral measure `H` of the
//! stationary state vector, the moment function `ρ_k` and the tail index `κ`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::{TiltedZ2, Z2Rule};
use crate::quad;
use crate::rng::{Domain, SeedStream};
use crate::sre::{GarchSpec, Simulator};
use crate::stationarity::TAIL_CHECK_Z2;
use crate::stats::{ess, mean_stderr, sum, weighted_ks};

/// Particles per parallel work unit; fixes the stream layout independently of
/// the number of threads.
const CHUNK: usize = 1024;

/// Weighted points on the unit simplex of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// Row-major `J × dim`.
    pub particles: Vec<f64>,
    pub weights: Vec<f64>,
    pub iteration: usize,
    pub kappa_used: f64,
}

impl ParticleEnsemble {
    pub fn from_points(dim: usize, particles: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || particles.len() % dim != 0 || particles.is_empty() {
            return Err(Error::Dimension(format!(
                "{} coordinates do not form {dim}-vectors",
                particles.len()
            )));
        }
        let j = particles.len() / dim;
        let weights = weights.unwrap_or_else(|| vec![1.0 / j as f64; j]);
        if weights.len() != j {
            return Err(Error::Dimension("one weight per particle required".into()));
        }
        let mut e = Self {
            dim,
            particles,
            weights,
            iteration: 0,
            kappa_used: f64::NAN,
        };
        for p in e.particles.chunks_mut(dim) {
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
        }
        let t = sum(&e.weights);
        e.weights.iter_mut().for_each(|w| *w /= t);
        Ok(e)
    }

    /// Equal-weight points drawn uniformly on the simplex.
    pub fn uniform<R: Rng>(dim: usize, j: usize, rng: &mut R) -> Self {
        let mut pts = Vec::with_capacity(j * dim);
        for _ in 0..j {
            let e: Vec<f64> = (0..dim)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let s: f64 = e.iter().sum();
            pts.extend(e.iter().map(|v| v / s));
        }
        Self::from_points(dim, pts, None).expect("consistent dimensions")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, j: usize) -> &[f64] {
        &self.particles[j * self.dim..(j + 1) * self.dim]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.particles.chunks(self.dim).map(|p| p[i]).collect()
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }

    /// Simplex and weight invariants.
    pub fn check(&self) -> Result<()> {
        for (j, p) in self.particles.chunks(self.dim).enumerate() {
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-12 || p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Dimension(format!(
                    "particle {j} is off the simplex (sum {s})"
                )));
            }
        }
        let t = sum(&self.weights);
        if (t - 1.0).abs() > 1e-12 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Dimension(format!("weights sum to {t}")));
        }
        Ok(())
    }

    /// Cumulative weights for inverse-cdf selection.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut c: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = c.last_mut() {
            *last = f64::INFINITY;
        }
        c
    }
}

/// Index `j` with `cum[j-1] <= u < cum[j]`.
#[inline]
pub fn select(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub n: usize,
    pub n_b: usize,
    pub u_quantile: f64,
    pub min_particles: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            n: 11_000_000,
            n_b: 10_000,
            u_quantile: 0.9999,
            min_particles: 500,
        }
    }
}

/// Angular parts `Y_t/‖Y_t‖₁` of a simulated path at times when `‖Y_t‖₁`
/// exceeds its empirical `u_quantile`.
pub fn init_ensemble(
    spec: &GarchSpec,
    cfg: &InitConfig,
    seeds: &SeedStream,
) -> Result<ParticleEnsemble> {
    if cfg.n <= cfg.n_b || !(cfg.u_quantile > 0.0 && cfg.u_quantile < 1.0) {
        return Err(Error::Config(
            "init needs n > n_b and 0 < u_quantile < 1".into(),
        ));
    }
    // first pass: radii; second pass replays the same stream
    let mut radii = Vec::with_capacity(cfg.n - cfg.n_b);
    let mut sim = Simulator::new(spec, seeds.rng(Domain::Init, 0));
    for t in 0..cfg.n {
        let (y, _) = sim.advance()?;
        if t >= cfg.n_b {
            radii.push(y.iter().sum::<f64>());
        }
    }
    let k = ((radii.len() - 1) as f64 * cfg.u_quantile).floor() as usize;
    let (_, u, _) = radii.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    let u = *u;
    drop(radii);
    let mut pts = Vec::new();
    let mut sim = Simulator::new(spec, seeds.rng(Domain::Init, 0));
    for t in 0..cfg.n {
        let (y, _) = sim.advance()?;
        if t >= cfg.n_b {
            let r: f64 = y.iter().sum();
            if r > u {
                pts.extend(y.iter().map(|v| v / r));
            }
        }
    }
    let found = pts.len() / spec.dim();
    if found < cfg.min_particles {
        return Err(Error::TooFewParticles {
            found,
            required: cfg.min_particles,
        });
    }
    ParticleEnsemble::from_points(spec.dim(), pts, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    /// Particles after each resampling.
    pub j: usize,
    pub max_s: usize,
    /// Consecutive passing comparisons required.
    pub window: usize,
    pub tol_ks: f64,
    /// Widen `tol_ks` by the two-sample KS 95% point at the effective sizes.
    pub noise_allowance: bool,
    pub resampling: Resampling,
    /// Minimum effective sample size as a fraction of `j`.
    pub ess_floor: f64,
    /// Draw `Z²` from a `(1+Z²)^k`-tilted proposal and correct the weights,
    /// instead of drawing from the innovation law directly.
    pub tilted: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            j: 10_000,
            max_s: 100,
            window: 3,
            tol_ks: 0.01,
            noise_allowance: true,
            resampling: Resampling::Multinomial,
            ess_floor: 1e-3,
            tilted: true,
        }
    }
}

/// One resample–propagate–reweight pass. `s` selects the random streams.
pub fn step(
    ens: &ParticleEnsemble,
    spec: &GarchSpec,
    kappa: f64,
    cfg: &SpectralConfig,
    seeds: &SeedStream,
    s: u64,
) -> Result<ParticleEnsemble> {
    let proposal = cfg.tilted.then(|| TiltedZ2::new(&spec.innovation, kappa));
    step_with(ens, spec, kappa, cfg, seeds, s, proposal.as_ref())
}

/// As [`step`] with a prebuilt proposal for `Z²`.
pub fn step_with(
    ens: &ParticleEnsemble,
    spec: &GarchSpec,
    kappa: f64,
    cfg: &SpectralConfig,
    seeds: &SeedStream,
    s: u64,
    proposal: Option<&TiltedZ2>,
) -> Result<ParticleEnsemble> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let d = spec.dim();
    if ens.dim != d {
        return Err(Error::Dimension(format!(
            "ensemble has dimension {}, model needs {d}",
            ens.dim
        )));
    }
    let j = cfg.j;
    let cum = ens.cumulative();
    let sampler = spec.innovation.sampler();
    let offset = match cfg.resampling {
        Resampling::Systematic => seeds.rng2(Domain::Resample, s, u64::MAX).random::<f64>(),
        Resampling::Multinomial => 0.0,
    };
    let mut particles = vec![0.0; j * d];
    let mut weights = vec![0.0; j];
    particles
        .par_chunks_mut(CHUNK * d)
        .zip(weights.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (pchunk, wchunk))| {
            let mut rs = seeds.rng2(Domain::Resample, s, c as u64);
            let mut rp = seeds.rng2(Domain::Propagate, s, c as u64);
            for (i, (p, w)) in pchunk.chunks_mut(d).zip(wchunk.iter_mut()).enumerate() {
                let u = match cfg.resampling {
                    Resampling::Multinomial => rs.random::<f64>(),
                    Resampling::Systematic => ((c * CHUNK + i) as f64 + offset) / j as f64,
                };
                let src = ens.particle(select(&cum, u));
                let (z2, lr) = match proposal {
                    Some(q) => q.draw(&mut rp),
                    None => (sampler.draw_z2(&mut rp), 1.0),
                };
                spec.apply(z2, src, p);
                let norm: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= norm);
                *w = norm.powf(kappa) * lr;
            }
        });
    let total = sum(&weights);
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateWeights {
            ess: 0.0,
            floor: cfg.ess_floor * j as f64,
        });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let out = ParticleEnsemble {
        dim: d,
        particles,
        weights,
        iteration: ens.iteration + 1,
        kappa_used: kappa,
    };
    let e = out.ess();
    if e < cfg.ess_floor * j as f64 {
        return Err(Error::DegenerateWeights {
            ess: e,
            floor: cfg.ess_floor * j as f64,
        });
    }
    Ok(out)
}

/// Comparison of successive ensembles.
#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub s: usize,
    pub ks_components: Vec<f64>,
    pub ks_weights: f64,
    pub threshold: f64,
    pub ess: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralRun {
    pub ensemble: ParticleEnsemble,
    /// First iteration whose next `window` comparisons all pass.
    pub converged_at: Option<usize>,
    pub trace: Vec<IterationTrace>,
}

/// KS distances between two ensembles, per coordinate and for the scaled weights.
pub fn compare(a: &ParticleEnsemble, b: &ParticleEnsemble) -> (Vec<f64>, f64) {
    let comps = (0..a.dim)
        .map(|i| weighted_ks(&a.component(i), &a.weights, &b.component(i), &b.weights))
        .collect();
    let sa: Vec<f64> = a.weights.iter().map(|w| w * a.len() as f64).collect();
    let sb: Vec<f64> = b.weights.iter().map(|w| w * b.len() as f64).collect();
    let ones_a = vec![1.0; sa.len()];
    let ones_b = vec![1.0; sb.len()];
    (comps, weighted_ks(&sa, &ones_a, &sb, &ones_b))
}

/// Iterates [`step`] until `window` successive comparisons pass, or `max_s`.
/// Returns the run even when it did not converge.
pub fn iterate(
    spec: &GarchSpec,
    kappa: f64,
    init: &ParticleEnsemble,
    cfg: &SpectralConfig,
    seeds: &SeedStream,
) -> Result<SpectralRun> {
    let mut prev = init.clone();
    prev.iteration = 0;
    let mut trace = Vec::new();
    let mut streak = 0;
    let proposal = cfg.tilted.then(|| TiltedZ2::new(&spec.innovation, kappa));
    for s in 1..=cfg.max_s {
        let next = step_with(&prev, spec, kappa, cfg, seeds, s as u64, proposal.as_ref())?;
        let (ks_components, ks_weights) = compare(&prev, &next);
        let mut threshold = cfg.tol_ks;
        if cfg.noise_allowance {
            threshold += 1.36 * (1.0 / prev.ess() + 1.0 / next.ess()).sqrt();
        }
        let passed = ks_components.iter().all(|k| *k < threshold) && ks_weights < threshold;
        trace.push(IterationTrace {
            s,
            ks_components,
            ks_weights,
            threshold,
            ess: next.ess(),
            passed,
        });
        streak = if passed { streak + 1 } else { 0 };
        prev = next;
        if streak >= cfg.window.max(1) {
            return Ok(SpectralRun {
                ensemble: prev,
                converged_at: Some(s - cfg.window.max(1)),
                trace,
            });
        }
    }
    Ok(SpectralRun {
        ensemble: prev,
        converged_at: None,
        trace,
    })
}

/// As [`iterate`], failing with `NoConvergence` when the window never fills.
pub fn run_to_convergence(
    spec: &GarchSpec,
    kappa: f64,
    init: &ParticleEnsemble,
    cfg: &SpectralConfig,
    seeds: &SeedStream,
) -> Result<SpectralRun> {
    let run = iterate(spec, kappa, init, cfg, seeds)?;
    if run.converged_at.is_none() {
        return Err(Error::NoConvergence {
            max_iterations: cfg.max_s,
        });
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum RhoMethod {
    /// `Σ_j m_j g(θ_j)` with `g(θ) = E_Z ‖A θ‖₁^k` by quadrature.
    Quadrature,
    /// Ratio `Σ m_j E g(A θ_j) / Σ m_j g(θ_j)`, both by quadrature. Exact for
    /// GARCH(1,1) whatever the ensemble, and damps the ensemble error in general.
    TwoStep,
    /// `z_replicates` innovation draws per particle.
    MonteCarlo { z_replicates: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoEstimate {
    pub k: f64,
    pub rho: f64,
    pub stderr: f64,
    /// `E|Z|^{2k}` is dominated by its far tail, i.e. it is likely infinite.
    pub diverging: bool,
}

/// Panel width in `ln |z|` for the compact rule used by the `ρ` estimators.
const RHO_PANEL: f64 = 1.0;

/// Everything the `ρ̃_k` estimators need at one `k`, built once.
pub struct RhoEstimator {
    spec: GarchSpec,
    k: f64,
    method: RhoMethod,
    rule: Z2Rule,
    table: Option<MomentTable>,
    diverging: bool,
}

impl RhoEstimator {
    pub fn new(spec: &GarchSpec, k: f64, method: RhoMethod) -> Self {
        let full = spec.innovation.z2_rule();
        let all = full.expect(|s| (1.0 + s).powf(k));
        let core = full.expect(|s| {
            if s <= TAIL_CHECK_Z2 {
                (1.0 + s).powf(k)
            } else {
                0.0
            }
        });
        let diverging = !all.is_finite() || (all - core) / all > 0.2;
        let rule = Z2Rule::with_panel(&spec.innovation, RHO_PANEL).compact(k, 1e-7);
        let table = (method == RhoMethod::TwoStep && !diverging)
            .then(|| MomentTable::new(&rule, spec.sigma_flag(), k));
        Self {
            spec: spec.clone(),
            k,
            method,
            rule,
            table,
            diverging,
        }
    }

    pub fn diverging(&self) -> bool {
        self.diverging
    }

    /// `g(θ) = E_Z ‖A θ‖₁^k` by quadrature.
    pub fn g(&self, theta: &[f64]) -> f64 {
        let e = self.spec.sigma_flag();
        let (c, d) = self.spec.norm_parts(theta);
        match &self.table {
            Some(t) => t.eval(c, d),
            None => self.rule.expect(|s| ((s + e) * c + d).powf(self.k)),
        }
    }

    pub fn estimate(&self, ens: &ParticleEnsemble, seeds: &SeedStream) -> RhoEstimate {
        let k = self.k;
        if self.diverging {
            return RhoEstimate {
                k,
                rho: f64::INFINITY,
                stderr: f64::NAN,
                diverging: true,
            };
        }
        let spec = &self.spec;
        let e = spec.sigma_flag();
        let idx: Vec<usize> = (0..ens.len()).collect();
        let g: Vec<f64> = match self.method {
            RhoMethod::Quadrature | RhoMethod::TwoStep => {
                idx.par_iter().map(|&j| self.g(ens.particle(j))).collect()
            }
            RhoMethod::MonteCarlo { z_replicates } => {
                let sampler = spec.innovation.sampler();
                let n = z_replicates.max(1);
                idx.par_chunks(CHUNK)
                    .enumerate()
                    .flat_map_iter(|(c, chunk)| {
                        let mut rng = seeds.rng2(Domain::Rho, c as u64, 0);
                        chunk
                            .iter()
                            .map(|&j| {
                                let (cc, d) = spec.norm_parts(ens.particle(j));
                                let vals: Vec<f64> = (0..n)
                                    .map(|_| ((sampler.draw_z2(&mut rng) + e) * cc + d).powf(k))
                                    .collect();
                                sum(&vals) / n as f64
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect()
            }
        };
        let rho = weighted_sum(&ens.weights, &g);
        if let (RhoMethod::TwoStep, Some(table)) = (self.method, &self.table) {
            let g2: Vec<f64> = idx
                .par_iter()
                .map(|&j| two_step(spec, ens.particle(j), &self.rule, table))
                .collect();
            let ratio = weighted_sum(&ens.weights, &g2) / rho;
            let resid: Vec<f64> = g2.iter().zip(&g).map(|(a, b)| a - ratio * b).collect();
            let stderr = weighted_sum_sq(&ens.weights, &resid).sqrt() / rho;
            return RhoEstimate {
                k,
                rho: ratio,
                stderr,
                diverging: !ratio.is_finite(),
            };
        }
        let resid: Vec<f64> = g.iter().map(|v| v - rho).collect();
        RhoEstimate {
            k,
            rho,
            stderr: weighted_sum_sq(&ens.weights, &resid).sqrt(),
            diverging: !rho.is_finite(),
        }
    }
}

fn weighted_sum(w: &[f64], x: &[f64]) -> f64 {
    sum(&w.iter().zip(x).map(|(a, b)| a * b).collect::<Vec<_>>())
}

fn weighted_sum_sq(w: &[f64], x: &[f64]) -> f64 {
    sum(&w
        .iter()
        .zip(x)
        .map(|(a, b)| (a * b) * (a * b))
        .collect::<Vec<_>>())
}

/// `ρ̃_k` from one ensemble.
pub fn rho_estimate(
    ens: &ParticleEnsemble,
    spec: &GarchSpec,
    k: f64,
    method: RhoMethod,
    seeds: &SeedStream,
) -> RhoEstimate {
    RhoEstimator::new(spec, k, method).estimate(ens, seeds)
}

/// `ρ̃_k`, failing with `MomentDiverged` when the `k`-th moment looks infinite.
pub fn rho(
    ens: &ParticleEnsemble,
    spec: &GarchSpec,
    k: f64,
    method: RhoMethod,
    seeds: &SeedStream,
) -> Result<RhoEstimate> {
    let r = rho_estimate(ens, spec, k, method, seeds);
    if r.diverging {
        return Err(Error::MomentDiverged {
            order: k,
            change: f64::NAN,
        });
    }
    Ok(r)
}

/// `G(r) = E(Z² + e + r)^k` tabulated against `u = r/(1+r)` as `G(r)/(1+r)^k`,
/// so that `E_Z ‖A θ‖₁^k = c^k G(d/c)`.
struct MomentTable {
    k: f64,
    vals: Vec<f64>,
}

const TABLE_N: usize = 4096;

impl MomentTable {
    fn new(rule: &Z2Rule, e: f64, k: f64) -> Self {
        let vals = (0..=TABLE_N)
            .into_par_iter()
            .map(|i| {
                if i == TABLE_N {
                    return 1.0;
                }
                let u = i as f64 / TABLE_N as f64;
                rule.expect(|z2| (z2 * (1.0 - u) + (e * (1.0 - u) + u)).powf(k))
            })
            .collect();
        Self { k, vals }
    }

    /// `E((Z² + e) c + d)^k`.
    #[inline]
    fn eval(&self, c: f64, d: f64) -> f64 {
        if c <= 0.0 {
            return d.powf(self.k);
        }
        let u = d / (c + d);
        let x = u * TABLE_N as f64;
        let i = (x as usize).min(TABLE_N - 1);
        let t = x - i as f64;
        let f = self.vals[i] + t * (self.vals[i + 1] - self.vals[i]);
        (c + d).powf(self.k) * f
    }
}

/// `E_Z g(A θ)`; `A θ` is affine in `Z²` and `g` comes from the table.
fn two_step(spec: &GarchSpec, theta: &[f64], rule: &Z2Rule, table: &MomentTable) -> f64 {
    let dim = theta.len();
    let mut v0 = vec![0.0; dim];
    let mut v1 = vec![0.0; dim];
    spec.apply(0.0, theta, &mut v0);
    spec.apply(1.0, theta, &mut v1);
    let (c0, d0) = spec.norm_parts(&v0);
    let (c1, d1) = spec.norm_parts(&v1);
    let (dc, dd) = (c1 - c0, d1 - d0);
    rule.expect(|s| table.eval(c0 + s * dc, (d0 + s * dd).max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaConfig {
    pub lo: f64,
    pub hi: f64,
    pub grid_step: f64,
    pub tol: f64,
    pub rho: RhoMethod,
    /// Iterations averaged per `ρ̃_k` during the grid scan.
    pub scan_average: usize,
    /// Minimum iterations averaged per `ρ̃_k` while refining the bracket.
    pub refine_average: usize,
    /// Cap on the iterations averaged when the curve is flat near the root.
    pub max_average: usize,
    /// Averaging continues until the standard error of `ρ̃_k`, divided by the
    /// slope of the curve, is below this.
    pub kappa_se: f64,
    pub spectral: SpectralConfig,
}

impl Default for KappaConfig {
    fn default() -> Self {
        Self {
            lo: 0.1,
            hi: 6.0,
            grid_step: 0.1,
            tol: 0.005,
            rho: RhoMethod::TwoStep,
            scan_average: 1,
            refine_average: 100,
            max_average: 1000,
            kappa_se: 0.01,
            spectral: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoPoint {
    pub k: f64,
    pub rho: f64,
    pub stderr: f64,
    pub diverging: bool,
    pub converged_at: Option<usize>,
    /// Number of iterations the estimate averages over.
    pub averaged: usize,
}

impl RhoPoint {
    fn above(&self) -> bool {
        self.diverging || self.rho >= 1.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoCurve {
    pub points: Vec<RhoPoint>,
    pub bracket: (f64, f64),
    pub kappa_hat: f64,
}

/// `ρ̃_k` at one `k`: run the particle filter from `init` until it settles,
/// then average the estimate over at least `average` successive iterations,
/// continuing up to `cfg.max_average` until the standard error is below
/// `target_se`.
pub fn rho_at(
    spec: &GarchSpec,
    k: f64,
    init: &ParticleEnsemble,
    cfg: &KappaConfig,
    average: usize,
    target_se: f64,
    seeds: &SeedStream,
) -> Result<(RhoPoint, SpectralRun)> {
    let est = RhoEstimator::new(spec, k, cfg.rho);
    if est.diverging() {
        let pt = RhoPoint {
            k,
            rho: f64::INFINITY,
            stderr: f64::NAN,
            diverging: true,
            converged_at: None,
            averaged: 0,
        };
        let run = SpectralRun {
            ensemble: init.clone(),
            converged_at: None,
            trace: Vec::new(),
        };
        return Ok((pt, run));
    }
    let mut run = iterate(spec, k, init, &cfg.spectral, seeds)?;
    if run.converged_at.is_none() {
        log::warn!("particle filter did not settle at k = {k}; using the last ensemble");
    }
    let rho_seeds = seeds.child(Domain::Rho, 0);
    let min = average.max(1);
    let max = cfg.max_average.max(min);
    let proposal = cfg
        .spectral
        .tilted
        .then(|| TiltedZ2::new(&spec.innovation, k));
    let mut vals = Vec::with_capacity(min);
    let s0 = run.trace.len() as u64;
    let mut ens = run.ensemble.clone();
    let mut first_se = f64::NAN;
    let (rho, stderr) = loop {
        let i = vals.len();
        if i > 0 {
            ens = step_with(
                &ens,
                spec,
                k,
                &cfg.spectral,
                seeds,
                s0 + i as u64,
                proposal.as_ref(),
            )?;
        }
        let r = est.estimate(&ens, &rho_seeds);
        if i == 0 {
            first_se = r.stderr;
        }
        vals.push(r.rho);
        let n = vals.len();
        if n < min {
            continue;
        }
        let (m, se) = if n == 1 {
            (vals[0], first_se)
        } else {
            batch_mean_stderr(&vals)
        };
        if n >= max || se <= target_se || !m.is_finite() {
            break (m, se);
        }
    };
    run.ensemble = ens;
    let pt = RhoPoint {
        k,
        rho,
        stderr,
        diverging: !rho.is_finite(),
        converged_at: run.converged_at,
        averaged: vals.len(),
    };
    Ok((pt, run))
}

/// Mean with a standard error from means of 10 consecutive values, which
/// allows for correlation between successive iterations.
fn batch_mean_stderr(xs: &[f64]) -> (f64, f64) {
    const B: usize = 10;
    if xs.len() < 2 * B {
        return mean_stderr(xs);
    }
    let means: Vec<f64> = xs
        .chunks(B)
        .filter(|c| c.len() == B)
        .map(|c| c.iter().sum::<f64>() / B as f64)
        .collect();
    let (_, se) = mean_stderr(&means);
    (xs.iter().sum::<f64>() / xs.len() as f64, se)
}

/// Root of `ρ̃_k = 1`.
///
/// A grid scan upwards from `lo` with cheap estimates brackets the first
/// crossing; the bracket is then checked and narrowed with averaged estimates
/// by safeguarded false position. Every `k` reuses the same random streams and
/// starting ensemble, so the estimated curve is smooth in `k`. `ln ρ_k` is
/// convex with `ρ_0 = 1` and slope `γ < 0` at zero, so there is one crossing.
pub fn find_kappa(
    spec: &GarchSpec,
    init: &ParticleEnsemble,
    cfg: &KappaConfig,
    seeds: &SeedStream,
) -> Result<RhoCurve> {
    let stream = seeds.child(Domain::Kappa, 0);
    let mut points: Vec<RhoPoint> = Vec::new();
    let n = ((cfg.hi - cfg.lo) / cfg.grid_step).round() as usize;
    let no_crossing = Error::NoCrossing {
        lo: cfg.lo,
        hi: cfg.hi,
    };
    let mut bracket = None;
    for i in 0..=n {
        let k = cfg.lo + i as f64 * cfg.grid_step;
        let (pt, _) = rho_at(spec, k, init, cfg, cfg.scan_average, f64::INFINITY, &stream)?;
        let up = pt.above();
        points.push(pt);
        if up {
            if i == 0 {
                return Err(no_crossing);
            }
            bracket = Some((k - cfg.grid_step, k));
            break;
        }
    }
    let Some((a, b)) = bracket else {
        return Err(no_crossing);
    };
    if cfg.refine_average <= cfg.scan_average {
        let lo = points[points.len() - 2].clone();
        let hi = points[points.len() - 1].clone();
        return finish(
            points,
            lo,
            hi,
            cfg,
            spec,
            init,
            &stream,
            (cfg.scan_average, f64::INFINITY),
        );
    }
    // slope of the scanned curve across the bracket, floored for flat curves
    let n_pts = points.len();
    let (pa, pb) = (&points[n_pts - 2], &points[n_pts - 1]);
    let slope = if pb.rho.is_finite() {
        ((pb.rho - pa.rho) / (pb.k - pa.k)).max(1e-3)
    } else {
        f64::INFINITY
    };
    let avg = (cfg.refine_average, cfg.kappa_se * slope);
    let eval = |k: f64, pts: &mut Vec<RhoPoint>| -> Result<RhoPoint> {
        let (pt, _) = rho_at(spec, k, init, cfg, avg.0, avg.1, &stream)?;
        pts.push(pt.clone());
        Ok(pt)
    };
    let mut lo = eval(a, &mut points)?;
    while lo.above() {
        let k = lo.k - cfg.grid_step;
        if k < cfg.lo - 1e-12 {
            return Err(no_crossing);
        }
        lo = eval(k, &mut points)?;
    }
    let mut hi = eval(b.max(lo.k + cfg.grid_step), &mut points)?;
    while !hi.above() {
        lo = hi;
        let k = lo.k + cfg.grid_step;
        if k > cfg.hi + 1e-12 {
            return Err(no_crossing);
        }
        hi = eval(k, &mut points)?;
    }
    finish(points, lo, hi, cfg, spec, init, &stream, avg)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    mut points: Vec<RhoPoint>,
    mut lo: RhoPoint,
    mut hi: RhoPoint,
    cfg: &KappaConfig,
    spec: &GarchSpec,
    init: &ParticleEnsemble,
    stream: &SeedStream,
    avg: (usize, f64),
) -> Result<RhoCurve> {
    let interp = |lo: &RhoPoint, hi: &RhoPoint| {
        if hi.diverging || !hi.rho.is_finite() {
            0.5 * (lo.k + hi.k)
        } else {
            lo.k + (1.0 - lo.rho) * (hi.k - lo.k) / (hi.rho - lo.rho)
        }
    };
    let mut guess = interp(&lo, &hi);
    for _ in 0..30 {
        if hi.k - lo.k <= cfg.tol {
            break;
        }
        let w = hi.k - lo.k;
        let m = guess.clamp(lo.k + 0.1 * w, hi.k - 0.1 * w);
        let (pt, _) = rho_at(spec, m, init, cfg, avg.0, avg.1, stream)?;
        points.push(pt.clone());
        if pt.above() {
            hi = pt;
        } else {
            lo = pt;
        }
        let next = interp(&lo, &hi);
        let settled = (next - guess).abs() < 0.5 * cfg.tol;
        guess = next;
        if settled {
            break;
        }
    }
    points.sort_by(|x, y| x.k.total_cmp(&y.k).then(x.averaged.cmp(&y.averaged)));
    Ok(RhoCurve {
        points,
        bracket: (lo.k, hi.k),
        kappa_hat: guess,
    })
}

/// Cdf of the first coordinate under `H` for GARCH(1,1):
/// `H(w) = E[(1+Z²)^κ; Z² ≤ w/(1−w)] / E(1+Z²)^κ`.
pub fn garch11_h_cdf(spec: &GarchSpec, kappa: f64) -> impl Fn(f64) -> f64 + '_ {
    let inn = spec.innovation;
    let g = move |z: f64| (1.0 + z * z).powf(kappa) * inn.density(z);
    let total = quad::integrate_real(g, 1e-12, 1e-10).0;
    move |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        if w >= 1.0 {
            return 1.0;
        }
        let y = (w / (1.0 - w)).sqrt();
        (quad::integrate(g, -y, y, 1e-12, 1e-10).0 / total).clamp(0.0, 1.0)
    }
}

/// Weighted quantiles of one coordinate, for summaries.
pub fn weighted_quantiles(x: &[f64], w: &[f64], qs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let total: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(qs.len());
    for &q in qs {
        let mut acc = 0.0;
        let mut v = x[idx[idx.len() - 1]];
        for &i in &idx {
            acc += w[i] / total;
            if acc >= q {
                v = x[i];
                break;
            }
        }
        out.push(v);
    }
    out
}
