//! GARCH(p,q) processes in stochastic-recurrence form `Y_t = A_t Y_{t-1} + B_t`.
//!
//! The state is `Y_t = (X²_t, ..., X²_{t-q+1}, σ²_t, ..., σ²_{t-p+1})`. Row 1 of
//! `A_t` is `Z_t² (α, β)`, row `q+1` is `(α, β)`, and the remaining rows shift
//! the two lag blocks down by one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::innovations::Innovation;
use crate::linalg::{secular_root, Matrix};

/// Volatility level treated as a numerical explosion.
pub const OVERFLOW_GUARD: f64 = 1e300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchSpec {
    pub p: usize,
    pub q: usize,
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    pub innovation: Innovation,
}

impl GarchSpec {
    pub fn new(
        alpha0: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        innovation: Innovation,
    ) -> Result<Self> {
        let spec = Self {
            p: beta.len(),
            q: alpha.len(),
            alpha0,
            alpha,
            beta,
            innovation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p + self.q < 1 {
            return Err(Error::Dimension("p + q must be at least 1".into()));
        }
        if self.alpha.len() != self.q {
            return Err(Error::InvalidSpec(format!(
                "q = {} but {} alpha coefficients given",
                self.q,
                self.alpha.len()
            )));
        }
        if self.beta.len() != self.p {
            return Err(Error::InvalidSpec(format!(
                "p = {} but {} beta coefficients given",
                self.p,
                self.beta.len()
            )));
        }
        if self.q == 0 {
            return Err(Error::InvalidSpec("q must be positive".into()));
        }
        if !(self.alpha0 > 0.0) || !self.alpha0.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "alpha0 must be positive, got {}",
                self.alpha0
            )));
        }
        for (name, v) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "{name} coefficients must be nonnegative, got {x}"
                )));
            }
            if let Some(last) = v.last() {
                if *last <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "trailing {name} coefficient must be positive"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Dimension `p + q` of the state vector.
    pub fn dim(&self) -> usize {
        self.p + self.q
    }

    pub fn phi(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    pub fn beta_sum(&self) -> f64 {
        self.beta.iter().sum()
    }

    pub fn is_igarch(&self) -> bool {
        (self.phi() - 1.0).abs() < 1e-12
    }

    /// `(α, β) · y`, the volatility recursion applied to a state.
    #[inline]
    pub fn linear_part(&self, y: &[f64]) -> f64 {
        let (x, s) = y.split_at(self.q);
        self.alpha.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
            + self.beta.iter().zip(s).map(|(b, v)| b * v).sum::<f64>()
    }

    /// `out = A(z²) y` without forming the matrix.
    #[inline]
    pub fn apply(&self, z2: f64, y: &[f64], out: &mut [f64]) {
        let c = self.linear_part(y);
        let q = self.q;
        out[0] = z2 * c;
        out[1..q].copy_from_slice(&y[..q - 1]);
        if self.p > 0 {
            out[q] = c;
            out[q + 1..].copy_from_slice(&y[q..self.dim() - 1]);
        }
    }

    /// `‖A(z²) θ‖₁` for a nonnegative `θ`, as `(z² + e) c + d`.
    #[inline]
    pub fn apply_norm(&self, z2: f64, theta: &[f64]) -> f64 {
        let (c, d) = self.norm_parts(theta);
        (z2 + self.sigma_flag()) * c + d
    }

    /// `(c, d)` with `‖A(z²) θ‖₁ = (z² + e) c + d`, `e = 1` when `p ≥ 1`.
    #[inline]
    pub fn norm_parts(&self, theta: &[f64]) -> (f64, f64) {
        let c = self.linear_part(theta);
        let q = self.q;
        let mut d: f64 = theta[..q - 1].iter().sum();
        if self.p > 0 {
            d += theta[q..self.dim() - 1].iter().sum::<f64>();
        }
        (c, d)
    }

    #[inline]
    pub fn sigma_flag(&self) -> f64 {
        if self.p > 0 {
            1.0
        } else {
            0.0
        }
    }

    /// Coefficients `α_i z² + β_i` of the characteristic equation of `A(z²)`.
    pub fn secular_coefficients(&self, z2: f64) -> Vec<f64> {
        let m = self.p.max(self.q);
        (0..m)
            .map(|i| {
                self.alpha.get(i).copied().unwrap_or(0.0) * z2
                    + self.beta.get(i).copied().unwrap_or(0.0)
            })
            .collect()
    }

    /// Dominant eigenvalue of `A(z²)`, the positive root of `Σ (α_i z² + β_i) λ^-i = 1`.
    pub fn lambda(&self, z2: f64) -> f64 {
        if self.p.max(self.q) == 1 {
            return self.alpha[0] * z2 + self.beta.first().copied().unwrap_or(0.0);
        }
        secular_root(&self.secular_coefficients(z2))
    }

    pub fn build_matrix(&self, z2: f64) -> Result<MatrixSample> {
        let d = self.dim();
        if d < 1 {
            return Err(Error::Dimension("p + q must be at least 1".into()));
        }
        let q = self.q;
        let mut a = Matrix::zeros(d);
        for (i, &al) in self.alpha.iter().enumerate() {
            a[(0, i)] = al * z2;
            if self.p > 0 {
                a[(q, i)] = al;
            }
        }
        for (j, &be) in self.beta.iter().enumerate() {
            a[(0, q + j)] = be * z2;
            a[(q, q + j)] = be;
        }
        for i in 1..q {
            a[(i, i - 1)] = 1.0;
        }
        for j in 1..self.p {
            a[(q + j, q + j - 1)] = 1.0;
        }
        let mut b = vec![0.0; d];
        b[0] = self.alpha0 * z2;
        if self.p > 0 {
            b[q] = self.alpha0;
        }
        let lambda = self.lambda(z2);
        Ok(MatrixSample { a, b, z2, lambda })
    }

    /// Starting state: the fixed point of the expected recursion when `φ < 1`,
    /// otherwise every coordinate equal to `α₀`.
    pub fn initial_state(&self) -> Vec<f64> {
        let phi = self.phi();
        let v = if phi < 1.0 {
            self.alpha0 / (1.0 - phi)
        } else {
            self.alpha0
        };
        vec![v; self.dim()]
    }
}

/// A realized `A_t`, `B_t` with the `Z²` that drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSample {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub z2: f64,
    pub lambda: f64,
}

/// Simulated path. The first `burn_in` entries are warm-up.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessPath {
    pub x2: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub burn_in: usize,
}

impl ProcessPath {
    pub fn len(&self) -> usize {
        self.x2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x2.is_empty()
    }

    pub fn kept_x2(&self) -> &[f64] {
        &self.x2[self.burn_in..]
    }

    pub fn kept_sigma2(&self) -> &[f64] {
        &self.sigma2[self.burn_in..]
    }
}

/// Step-by-step SRE iteration; yields the state after each step.
pub struct Simulator<'a, R: Rng> {
    spec: &'a GarchSpec,
    sampler: crate::innovations::Sampler,
    rng: R,
    y: Vec<f64>,
    scratch: Vec<f64>,
    step: usize,
}

impl<'a, R: Rng> Simulator<'a, R> {
    pub fn new(spec: &'a GarchSpec, rng: R) -> Self {
        let y = spec.initial_state();
        Self {
            spec,
            sampler: spec.innovation.sampler(),
            rng,
            scratch: y.clone(),
            y,
            step: 0,
        }
    }

    /// Advances one step and returns `(state, σ²_t)`.
    #[inline]
    pub fn advance(&mut self) -> Result<(&[f64], f64)> {
        let z2 = self.sampler.draw_z2(&mut self.rng);
        let s = self.spec;
        let sigma2 = s.alpha0 + s.linear_part(&self.y);
        s.apply(z2, &self.y, &mut self.scratch);
        self.scratch[0] += s.alpha0 * z2;
        if s.p > 0 {
            self.scratch[s.q] += s.alpha0;
        }
        std::mem::swap(&mut self.y, &mut self.scratch);
        self.step += 1;
        if !(sigma2 <= OVERFLOW_GUARD) {
            return Err(Error::Explosion {
                step: self.step,
                guard: OVERFLOW_GUARD,
            });
        }
        Ok((&self.y, sigma2))
    }
}

/// Simulates `n` steps of the process; the first `n_b` are marked as burn-in.
pub fn simulate<R: Rng>(spec: &GarchSpec, n: usize, n_b: usize, rng: R) -> Result<ProcessPath> {
    if n <= n_b {
        return Err(Error::Config(format!(
            "path length {n} must exceed burn-in {n_b}"
        )));
    }
    let mut sim = Simulator::new(spec, rng);
    let mut x2 = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    for _ in 0..n {
        let (y, s2) = sim.advance()?;
        x2.push(y[0]);
        sigma2.push(s2);
    }
    Ok(ProcessPath {
        x2,
        sigma2,
        burn_in: n_b,
    })
}

/// Reference implementation through the scalar GARCH recursions.
pub fn simulate_scalar<R: Rng>(spec: &GarchSpec, n: usize, mut rng: R) -> Result<ProcessPath> {
    let sampler = spec.innovation.sampler();
    let init = spec.initial_state()[0];
    let (p, q) = (spec.p, spec.q);
    // lagged values, most recent last
    let mut xs = vec![init; q];
    let mut ss = vec![init; p];
    let mut x2 = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    for t in 0..n {
        let z2 = sampler.draw_z2(&mut rng);
        let mut s2 = spec.alpha0;
        for i in 0..q {
            s2 += spec.alpha[i] * xs[q - 1 - i];
        }
        for j in 0..p {
            s2 += spec.beta[j] * ss[p - 1 - j];
        }
        if !(s2 <= OVERFLOW_GUARD) {
            return Err(Error::Explosion {
                step: t + 1,
                guard: OVERFLOW_GUARD,
            });
        }
        let x = s2 * z2;
        if q > 0 {
            xs.remove(0);
            xs.push(x);
        }
        if p > 0 {
            ss.remove(0);
            ss.push(s2);
        }
        x2.push(x);
        sigma2.push(s2);
    }
    Ok(ProcessPath {
        x2,
        sigma2,
        burn_in: 0,
    })
}
