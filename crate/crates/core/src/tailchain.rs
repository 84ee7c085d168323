//! Forward tail chains: a Pareto radius times a spectral draw, conditioned on
//! an exceedance at time 0 and propagated by fresh random matrices.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::Innovation;
use crate::rng::{Domain, SeedStream};
use crate::spectral::{select, ParticleEnsemble};
use crate::sre::GarchSpec;

/// Chains per random stream.
const CHAIN_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[serde(alias = "x2")]
    OnX2,
    #[serde(alias = "sigma2")]
    OnSigma2,
}

/// One realization. Entries past an early stop are omitted and read as zero.
/// `sigma2hat` is empty for pure ARCH models, whose state carries no volatility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailChain {
    pub r0: f64,
    pub x2hat: Vec<f64>,
    pub sigma2hat: Vec<f64>,
    pub condition: Condition,
    /// Proposals drawn before acceptance, including the accepted one.
    pub proposals: u64,
    /// Index of the starting spectral particle.
    pub particle: usize,
}

impl TailChain {
    pub fn x2_at(&self, t: usize) -> f64 {
        self.x2hat.get(t).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Horizon `T`.
    pub t_max: usize,
    pub condition: Condition,
    /// Stop once `‖R̂₀Θ̂_t‖₁^κ` falls below this; further exceedances then have
    /// probability of the same order.
    pub stop_eps: f64,
    /// Proposals without an acceptance that count as a stall, i.e. an
    /// acceptance rate below `1/probe_window`.
    pub probe_window: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            t_max: 1000,
            condition: Condition::OnX2,
            stop_eps: 1e-6,
            probe_window: 1_000_000,
        }
    }
}

/// Draws starting states `(R̂₀, Θ̂₀)` from a weighted spectral ensemble.
pub struct Proposer<'a> {
    ens: &'a ParticleEnsemble,
    cum: Vec<f64>,
    kappa: f64,
}

impl<'a> Proposer<'a> {
    pub fn new(ens: &'a ParticleEnsemble, kappa: f64) -> Self {
        Self {
            ens,
            cum: ens.cumulative(),
            kappa,
        }
    }

    /// `R̂₀ = U^(-1/κ)` and the index of a weight-sampled particle.
    #[inline]
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize) {
        let u: f64 = 1.0 - rng.random::<f64>();
        let r0 = u.powf(-1.0 / self.kappa);
        let j = select(&self.cum, rng.random::<f64>());
        (r0, j)
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        self.ens
    }
}

fn condition_index(spec: &GarchSpec, c: Condition) -> Result<usize> {
    match c {
        Condition::OnX2 => Ok(0),
        Condition::OnSigma2 if spec.p > 0 => Ok(spec.q),
        Condition::OnSigma2 => Err(Error::InvalidSpec(
            "an ARCH state has no volatility coordinate".into(),
        )),
    }
}

/// One chain by literal rejection on the conditioning event.
pub fn sample_chain<R: Rng + ?Sized>(
    spec: &GarchSpec,
    proposer: &Proposer,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<TailChain> {
    let ci = condition_index(spec, cfg.condition)?;
    let ens = proposer.ensemble();
    if ens.dim != spec.dim() {
        return Err(Error::Dimension(format!(
            "ensemble has dimension {}, model needs {}",
            ens.dim,
            spec.dim()
        )));
    }
    let mut proposals = 0u64;
    let (r0, j) = loop {
        proposals += 1;
        let (r0, j) = proposer.propose(rng);
        if r0 * ens.particle(j)[ci] > 1.0 {
            break (r0, j);
        }
        // no acceptance in the probe window bounds the rate by 1/window
        if proposals >= cfg.probe_window {
            return Err(Error::RejectionStall {
                rate: 1.0 / proposals as f64,
                floor: 1.0 / cfg.probe_window as f64,
            });
        }
    };
    let sampler = spec.innovation.sampler();
    let d = spec.dim();
    let mut v: Vec<f64> = ens.particle(j).iter().map(|x| r0 * x).collect();
    let mut next = vec![0.0; d];
    let has_sigma = spec.p > 0;
    let mut x2hat = Vec::with_capacity(64);
    let mut sigma2hat = Vec::with_capacity(if has_sigma { 64 } else { 0 });
    x2hat.push(v[0]);
    if has_sigma {
        sigma2hat.push(v[spec.q]);
    }
    for _ in 0..cfg.t_max {
        let norm: f64 = v.iter().sum();
        if norm.powf(proposer.kappa) < cfg.stop_eps {
            break;
        }
        let z2 = sampler.draw_z2(rng);
        spec.apply(z2, &v, &mut next);
        std::mem::swap(&mut v, &mut next);
        x2hat.push(v[0]);
        if has_sigma {
            sigma2hat.push(v[spec.q]);
        }
    }
    Ok(TailChain {
        r0,
        x2hat,
        sigma2hat,
        condition: cfg.condition,
        proposals,
        particle: j,
    })
}

/// Streaming summary of a batch of chains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub n_chains: u64,
    pub proposals: u64,
    pub t_max: usize,
    pub kappa: f64,
    pub condition: Condition,
    /// Chains with `X̂²_τ > 1`, for `τ = 0..=T`.
    pub exceed_x2: Vec<u64>,
    /// Chains with `σ̂²_τ > 1`; empty for ARCH models.
    pub exceed_sigma2: Vec<u64>,
    /// `count_hist[i]` chains had exactly `i` exceedances of 1 by `X̂²` on `[0, T]`.
    pub count_hist: Vec<u64>,
    /// Chains that ran to `T` without meeting the stopping rule.
    pub reached_horizon: u64,
    /// Sum over chains of `P(Z > 0 | Z² = X̂²₀/σ̂²₀)`; NaN for ARCH models.
    pub sign_prob_sum: f64,
}

impl ChainSummary {
    fn empty(spec: &GarchSpec, kappa: f64, cfg: &ChainConfig) -> Self {
        Self {
            n_chains: 0,
            proposals: 0,
            t_max: cfg.t_max,
            kappa,
            condition: cfg.condition,
            exceed_x2: vec![0; cfg.t_max + 1],
            exceed_sigma2: if spec.p > 0 {
                vec![0; cfg.t_max + 1]
            } else {
                Vec::new()
            },
            count_hist: Vec::new(),
            reached_horizon: 0,
            sign_prob_sum: if spec.p > 0 { 0.0 } else { f64::NAN },
        }
    }

    fn add(
        &mut self,
        chain: &TailChain,
        spec: &GarchSpec,
        inn: &Innovation,
        ens: &ParticleEnsemble,
    ) {
        self.n_chains += 1;
        self.proposals += chain.proposals;
        let mut count = 0usize;
        for (t, &x) in chain.x2hat.iter().enumerate() {
            if x > 1.0 {
                self.exceed_x2[t] += 1;
                count += 1;
            }
        }
        for (t, &s) in chain.sigma2hat.iter().enumerate() {
            if s > 1.0 {
                self.exceed_sigma2[t] += 1;
            }
        }
        if self.count_hist.len() <= count {
            self.count_hist.resize(count + 1, 0);
        }
        self.count_hist[count] += 1;
        if chain.x2hat.len() == self.t_max + 1 {
            self.reached_horizon += 1;
        }
        if spec.p > 0 {
            let th = ens.particle(chain.particle);
            let z = (th[0] / th[spec.q]).sqrt();
            let (fp, fm) = (inn.density(z), inn.density(-z));
            self.sign_prob_sum += if fp + fm > 0.0 {
                fp / (fp + fm)
            } else {
                inn.delta_z()
            };
        }
    }

    fn merge(&mut self, o: &ChainSummary) {
        self.n_chains += o.n_chains;
        self.proposals += o.proposals;
        for (a, b) in self.exceed_x2.iter_mut().zip(&o.exceed_x2) {
            *a += b;
        }
        for (a, b) in self.exceed_sigma2.iter_mut().zip(&o.exceed_sigma2) {
            *a += b;
        }
        if self.count_hist.len() < o.count_hist.len() {
            self.count_hist.resize(o.count_hist.len(), 0);
        }
        for (a, b) in self.count_hist.iter_mut().zip(&o.count_hist) {
            *a += b;
        }
        self.reached_horizon += o.reached_horizon;
        self.sign_prob_sum += o.sign_prob_sum;
    }

    /// Fraction of proposals accepted.
    pub fn acceptance_rate(&self) -> f64 {
        self.n_chains as f64 / self.proposals as f64
    }

    /// Fraction of chains still above 1 at the horizon.
    pub fn alive_at_horizon(&self) -> f64 {
        self.exceed_x2[self.t_max] as f64 / self.n_chains as f64
    }
}

#[derive(Debug, Clone)]
pub struct ChainBatch {
    pub summary: ChainSummary,
    /// The first `keep` chains in full.
    pub chains: Vec<TailChain>,
}

/// `n` independent chains; chain `i` uses the stream of chunk `i / 256`.
pub fn batch_chains(
    spec: &GarchSpec,
    kappa: f64,
    ens: &ParticleEnsemble,
    cfg: &ChainConfig,
    n: usize,
    keep: usize,
    seeds: &SeedStream,
) -> Result<ChainBatch> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    condition_index(spec, cfg.condition)?;
    let proposer = Proposer::new(ens, kappa);
    let inn = spec.innovation;
    let chunks = n.div_ceil(CHAIN_CHUNK);
    let parts: Vec<Result<(ChainSummary, Vec<TailChain>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeds.rng2(Domain::TailChain, c as u64, 0);
            let mut summ = ChainSummary::empty(spec, kappa, cfg);
            let mut kept = Vec::new();
            let start = c * CHAIN_CHUNK;
            for i in start..(start + CHAIN_CHUNK).min(n) {
                let ch = sample_chain(spec, &proposer, cfg, &mut rng)?;
                summ.add(&ch, spec, &inn, ens);
                if i < keep {
                    kept.push(ch);
                }
            }
            Ok((summ, kept))
        })
        .collect();
    let mut summary = ChainSummary::empty(spec, kappa, cfg);
    let mut chains = Vec::new();
    for p in parts {
        let (s, k) = p?;
        summary.merge(&s);
        chains.extend(k);
    }
    Ok(ChainBatch { summary, chains })
}
