//! Shared numerical helpers: seeded substreams, exponential-integrator weights,
//! least squares, order statistics and a two-sample Kolmogorov-Smirnov test.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Counter-based substream: one master seed, independent streams per id.
/// Identical (seed, id) always reproduces the same generator state.
pub fn substream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.into());
    rng
}

pub fn standard_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// (1 - e^{-x}) / x, the first exponential-integrator weight, stable near 0.
pub fn exp_phi1(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 1e-8 {
        1.0 - 0.5 * x + x * x / 6.0
    } else {
        -f64::exp_m1(-x) / x
    }
}

/// (x - 1 + e^{-x}) / x^2, the second exponential-integrator weight, stable near 0.
pub fn exp_phi2(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 1e-4 {
        0.5 - x / 6.0 + x * x / 24.0
    } else {
        (x - 1.0 + (-x).exp()) / (x * x)
    }
}

/// Ordinary least squares y = slope * x + intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a line fit");
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = if denom.abs() < 1e-300 { 0.0 } else { (n * sxy - sx * sy) / denom };
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample variance (denominator n - 1).
pub fn variance(samples: &[f64]) -> f64 {
    assert!(samples.len() >= 2);
    let m = mean(samples);
    samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (samples.len() - 1) as f64
}

/// Pearson correlation coefficient.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = sa[i].min(sb[j]);
        while i < n && sa[i] <= x {
            i += 1;
        }
        while j < m && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    // Kolmogorov tail sum, truncated once terms vanish.
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k as i32 - 1) * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    KsTest { statistic: d, p_value: p.clamp(0.0, 1.0) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn substream_reproducible_and_distinct() {
        let a = standard_normal_vec(&mut substream(7, 0), 8);
        let b = standard_normal_vec(&mut substream(7, 0), 8);
        let c = standard_normal_vec(&mut substream(7, 1), 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn phi_weights_match_reference() {
        assert_relative_eq!(exp_phi1(1.0), 1.0 - (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(exp_phi1(1e-12), 1.0, max_relative = 1e-10);
        assert_relative_eq!(exp_phi2(2.0), (2.0 - 1.0 + (-2.0f64).exp()) / 4.0, max_relative = 1e-14);
        assert_relative_eq!(exp_phi2(1e-9), 0.5, max_relative = 1e-8);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 2.0).collect();
        let (s, c) = linear_fit(&xs, &ys);
        assert_relative_eq!(s, 3.0, max_relative = 1e-12);
        assert_relative_eq!(c, -2.0, max_relative = 1e-10);
    }

    #[test]
    fn ks_same_distribution_high_p() {
        let mut rng = substream(11, 0);
        let a = standard_normal_vec(&mut rng, 2000);
        let b = standard_normal_vec(&mut rng, 2000);
        let ks = ks_two_sample(&a, &b);
        assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
    }

    #[test]
    fn ks_shifted_distribution_low_p() {
        let mut rng = substream(11, 1);
        let a = standard_normal_vec(&mut rng, 2000);
        let b: Vec<f64> = standard_normal_vec(&mut rng, 2000).iter().map(|x| x + 1.0).collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks.p_value < 1e-6);
    }
}
