//! Descriptive statistics and the two-sample Kolmogorov–Smirnov test.

use crate::error::{Error, Result};

/// Linear-interpolation quantile of sorted data (`(n − 1)·p` positioning).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptySample);
    }
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn quantile(data: &[f64], p: f64) -> Result<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

/// Adjusted Fisher–Pearson skewness `G1 = g1 · √(n(n−1)) / (n−2)`.
/// A sample with zero variance has skewness 0.
pub fn skewness(data: &[f64]) -> Result<f64> {
    let n = data.len();
    if n < 3 {
        return Err(Error::SampleTooSmall { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean = data.iter().sum::<f64>() / nf;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &x in data {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    if m2 == 0.0 {
        return Ok(0.0);
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `D = sup |F_a − F_b|` with an asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    // Advance past every copy of the smaller value on both sides before
    // comparing the CDFs, so ties across samples are handled.
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let p_value = kolmogorov_survival((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult {
        statistic: d,
        p_value,
    })
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`, kept strictly positive.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term <= 1e-16 * sum.abs() {
            return (2.0 * sum).clamp(f64::MIN_POSITIVE, 1.0);
        }
        sign = -sign;
    }
    // Series did not settle: only happens for tiny λ, where Q → 1.
    1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let d = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&d, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&d, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&d, 0.5).unwrap(), 2.5);
        assert!((quantile(&d, 0.01).unwrap() - 1.03).abs() < 1e-12);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn skewness_values() {
        assert_eq!(skewness(&[-1.0, 0.0, 1.0]).unwrap(), 0.0);
        // mean 2.5, m2 = 18.75, m3 = 93.75 → g1 = 2/√3, G1 = g1·√12/2 = 2.
        assert!((skewness(&[0.0, 0.0, 0.0, 10.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(skewness(&[1.0, 2.0]).is_err());
        assert_eq!(skewness(&[5.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);

        let r = ks_two_sample(&[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 0.2);

        let r = ks_two_sample(&a, &[1.5, 2.5, 3.5, 4.5]).unwrap();
        assert!((r.statistic - 0.25).abs() < 1e-15);
        let swapped = ks_two_sample(&[1.5, 2.5, 3.5, 4.5], &a).unwrap();
        assert_eq!(swapped.statistic, r.statistic);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn survival_function_reference_points() {
        // Q(1.36) ≈ 0.049 and Q(1.63) ≈ 0.010: the classic 5% and 1%
        // critical values.
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }
}
