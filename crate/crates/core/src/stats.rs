//! Small statistical helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n-1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2, "sample sd needs n >= 2");
    let m = mean(values);
    let ss = values.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

/// Population standard deviation (1/n denominator).
pub fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let ss = values.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    (ss / values.len() as f64).sqrt()
}

/// Adjusted Fisher-Pearson skewness: g1 * sqrt(n(n-1)) / (n-2).
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = mean(values);
    let m2 = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let g1 = m3 / m2.powf(1.5);
    g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)
}

/// Sample excess kurtosis (normal distribution -> 0), bias-adjusted.
pub fn excess_kurtosis(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = mean(values);
    let s = sample_sd(values);
    if s <= 0.0 {
        return 0.0;
    }
    let z4 = values.iter().map(|v| ((v - m) / s).powi(4)).sum::<f64>();
    n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * z4
        - 3.0 * (n - 1.0).powi(2) / ((n - 2.0) * (n - 3.0))
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.cdf(z)
}

/// One-sample Kolmogorov-Smirnov test of `values` against the standard
/// normal distribution. Returns the asymptotic p-value from the Kolmogorov
/// distribution, Q(t) = 2 * sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2).
pub fn ks_normal_p(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 1, "KS test needs at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &z) in sorted.iter().enumerate() {
        let f = standard_normal_cdf(z);
        let d_plus = (i + 1) as f64 / nf - f;
        let d_minus = f - i as f64 / nf;
        d = d.max(d_plus).max(d_minus);
    }
    kolmogorov_q(nf.sqrt() * d)
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided Welch t-test. Returns (t statistic, degrees of freedom, p-value).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_sd(a).powi(2), sample_sd(b).powi(2));
    let se2 = va / na + vb / nb;
    if se2 <= 0.0 {
        // Identical constants in both groups: no evidence of a difference.
        return if (ma - mb).abs() < 1e-300 {
            (0.0, na + nb - 2.0, 1.0)
        } else {
            (f64::INFINITY, na + nb - 2.0, 0.0)
        };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, df, p.clamp(0.0, 1.0))
}
