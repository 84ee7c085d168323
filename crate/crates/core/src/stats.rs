//! Small summary-statistics helpers with a fixed reduction order.

/// Neumaier-compensated sum.
pub fn sum(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sum(xs) / xs.len() as f64
}

/// Mean and its standard error (sample standard deviation over `√n`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let ss: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = sum(&ss) / (xs.len() - 1) as f64;
    (m, (var / xs.len() as f64).sqrt())
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Two-sample Kolmogorov–Smirnov distance between weighted samples.
pub fn weighted_ks(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let mut ia: Vec<usize> = (0..a.len()).collect();
    let mut ib: Vec<usize> = (0..b.len()).collect();
    ia.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    ib.sort_by(|&i, &j| b[i].total_cmp(&b[j]));
    let ta: f64 = wa.iter().sum();
    let tb: f64 = wb.iter().sum();
    let (mut fa, mut fb, mut d) = (0.0, 0.0, 0.0f64);
    let (mut i, mut j) = (0, 0);
    while i < ia.len() || j < ib.len() {
        let x = match (ia.get(i), ib.get(j)) {
            (Some(&p), Some(&q)) => a[p].min(b[q]),
            (Some(&p), None) => a[p],
            (None, Some(&q)) => b[q],
            (None, None) => unreachable!(),
        };
        while i < ia.len() && a[ia[i]] <= x {
            fa += wa[ia[i]] / ta;
            i += 1;
        }
        while j < ib.len() && b[ib[j]] <= x {
            fb += wb[ib[j]] / tb;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d
}

/// Kolmogorov–Smirnov distance between a weighted sample and a cdf.
pub fn ks_against<F: Fn(f64) -> f64>(x: &[f64], w: &[f64], cdf: F) -> f64 {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let total: f64 = w.iter().sum();
    let mut f = 0.0;
    let mut d = 0.0f64;
    let mut k = 0;
    while k < idx.len() {
        let v = x[idx[k]];
        let before = f;
        while k < idx.len() && x[idx[k]] == v {
            f += w[idx[k]] / total;
            k += 1;
        }
        let c = cdf(v);
        d = d.max((c - before).abs()).max((c - f).abs());
    }
    d
}

/// Effective sample size `1 / Σ w²` of normalized weights.
pub fn ess(w: &[f64]) -> f64 {
    let t: f64 = w.iter().sum();
    1.0 / w.iter().map(|x| (x / t) * (x / t)).sum::<f64>()
}

/// Ordinary least-squares slope and intercept with the slope's standard error.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum();
    let se = if n > 2.0 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, icpt, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(&v), 2.0);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [0.1, 0.2, 0.3];
        let w = [1.0, 1.0, 1.0];
        assert_eq!(weighted_ks(&a, &w, &a, &w), 0.0);
        let b = [1.1, 1.2];
        assert!((weighted_ks(&a, &w, &b, &[1.0, 1.0]) - 1.0).abs() < 1e-15);
        // uniform cdf against a grid sample
        let g: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_against(&g, &vec![1.0; 100], |x| x);
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
    }

    #[test]
    fn ols_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (s, i, se) = ols(&x, &y);
        assert!((s - 2.0).abs() < 1e-14 && (i - 1.0).abs() < 1e-14 && se < 1e-12);
    }
}
