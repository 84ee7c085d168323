//! Small dense matrices: entrywise L1 norm and dominant eigenvalue.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("rows must form a square matrix".into()));
        }
        Ok(Self {
            n,
            data: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Entrywise absolute sum `Σ|a_ij|`.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, x.len());
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Spectral radius by power iteration with Rayleigh-quotient stopping.
    pub fn power_iteration(&self, tol: f64, max_iter: usize) -> Result<f64> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Dimension("empty matrix".into()));
        }
        if n == 1 {
            return Ok(self.data[0].abs());
        }
        // a positive start that is not an eigenvector of simple permutations
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let mut prev = f64::NAN;
        for _ in 0..max_iter {
            let y = self.mul_vec(&x);
            let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if ny == 0.0 {
                return Ok(0.0);
            }
            // residual of the Rayleigh pair
            let resid = y
                .iter()
                .zip(&x)
                .map(|(b, a)| (b - rq * a).powi(2))
                .sum::<f64>()
                .sqrt();
            if (rq - prev).abs() <= tol * rq.abs() && resid <= tol.sqrt() * ny {
                return Ok(rq.abs());
            }
            prev = rq;
            x = y.into_iter().map(|v| v / ny).collect();
        }
        Err(Error::Convergence {
            iterations: max_iter,
        })
    }

    /// Spectral radius via `‖M^(2^k)‖^(2^-k)`, accumulated in log space.
    pub fn spectral_radius_by_squaring(&self) -> f64 {
        let mut m = self.clone();
        // M^(2^k) = exp(log_norm) * m with ‖m‖ = 1
        let mut log_norm = 0.0;
        let mut power = 1.0;
        let mut est = f64::NAN;
        for _ in 0..60 {
            let nm = m.norm();
            if nm == 0.0 {
                return 0.0;
            }
            m.scale(1.0 / nm);
            log_norm += nm.ln();
            let next = (log_norm / power).exp();
            if (next - est).abs() <= 1e-15 * next {
                return next;
            }
            est = next;
            m = m.mul(&m);
            log_norm *= 2.0;
            power *= 2.0;
        }
        est
    }

    /// Dominant eigenvalue magnitude. Falls back to repeated squaring when power
    /// iteration stalls on a nearly tied second eigenvalue.
    pub fn dominant_eigenvalue(&self) -> Result<f64> {
        match self.power_iteration(1e-10, 10_000) {
            Ok(v) => Ok(v),
            Err(e) => {
                log::debug!("power iteration failed ({e}); using repeated squaring");
                let v = self.spectral_radius_by_squaring();
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(e)
                }
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Positive root `mu` of `Σ_i c_i mu^-i = 1` for nonnegative `c` (index 0 holds `c_1`).
///
/// `ln Σ c_i e^{-ix}` is convex and decreasing in `x`, so Newton started left of
/// the root climbs to it monotonically.
pub fn secular_root(c: &[f64]) -> f64 {
    let start = c
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| v.powf(1.0 / (i + 1) as f64))
        .fold(0.0, f64::max);
    if start == 0.0 {
        return 0.0;
    }
    if c.len() == 1 {
        return c[0];
    }
    let mut x = start.ln();
    for _ in 0..100 {
        let mut f = 0.0;
        let mut df = 0.0;
        for (i, &ci) in c.iter().enumerate() {
            if ci > 0.0 {
                let k = (i + 1) as f64;
                let t = ci * (-k * x).exp();
                f += t;
                df -= k * t;
            }
        }
        let h = f.ln();
        let step = -h / (df / f);
        x += step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        assert_eq!(Matrix::identity(3).norm(), 3.0);
        let m = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.0]]).unwrap();
        assert_eq!(m.norm(), 3.5);
    }

    #[test]
    fn eigen_examples() {
        let d = Matrix::from_rows(&[vec![0.3, 0.0], vec![0.0, 0.7]]).unwrap();
        assert!((d.dominant_eigenvalue().unwrap() - 0.7).abs() < 1e-10);
        let g = Matrix::from_rows(&[vec![0.1 * 2.0, 0.9 * 2.0], vec![0.1, 0.9]]).unwrap();
        assert!((g.dominant_eigenvalue().unwrap() - 1.1).abs() < 1e-10);
    }

    #[test]
    fn squaring_handles_periodic_matrix() {
        // eigenvalues ±1: power iteration cannot settle
        let p = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(p.power_iteration(1e-10, 1000).is_err());
        assert!((p.dominant_eigenvalue().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn secular_root_examples() {
        assert_eq!(secular_root(&[1.1]), 1.1);
        // mu^2 = mu + 1
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((secular_root(&[1.0, 1.0]) - golden).abs() < 1e-14);
        assert_eq!(secular_root(&[0.0, 0.0]), 0.0);
        // mu^2 = 0.25 with c_1 = 0
        assert!((secular_root(&[0.0, 0.25]) - 0.5).abs() < 1e-14);
    }
}
