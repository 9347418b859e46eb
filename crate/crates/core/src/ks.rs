//! Kolmogorov-Smirnov distances.

use std::cmp::Ordering;

fn sort(values: &mut [f64]) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
}

/// Sup distance between the empirical CCDF of `samples` and `ccdf`,
/// taken over `x >= lower` only. The empirical CCDF is over all samples.
pub fn ks_ccdf_tail(samples: &mut [f64], lower: f64, ccdf: impl Fn(f64) -> f64) -> f64 {
    sort(samples);
    let n = samples.len() as f64;
    let first = samples.partition_point(|&x| x < lower);
    let above = samples.partition_point(|&x| x <= lower);
    let mut d = ((samples.len() - above) as f64 / n - ccdf(lower)).abs();
    for (i, &x) in samples.iter().enumerate().skip(first) {
        if x < lower {
            continue;
        }
        let c = ccdf(x);
        let before = (samples.len() - i) as f64 / n;
        let after = (samples.len() - i - 1) as f64 / n;
        d = d.max((before - c).abs()).max((after - c).abs());
    }
    d
}

/// One-sample KS distance against a CDF.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sort(samples);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    sort(&mut a);
    sort(&mut b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_zero_distance() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn disjoint_samples_unit_distance() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
    }

    #[test]
    fn uniform_grid_against_uniform_cdf() {
        let mut s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = ks_one_sample(&mut s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn tail_distance_matches_full_when_lower_is_min() {
        let mut a: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let mut b = a.clone();
        let ccdf = |x: f64| (1.0 / x).min(1.0);
        let full = ks_one_sample(&mut b, |x| 1.0 - ccdf(x));
        let tail = ks_ccdf_tail(&mut a, 1.0, ccdf);
        assert!((full - tail).abs() < 1e-12);
    }
}
