//! Capped Pareto law for recall-set lengths.

use rand::{Rng, RngExt};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("alpha = {0} outside (1, 2)")]
    Alpha(f64),
    #[error("scale L0 = {0} must be >= 1")]
    Scale(f64),
    #[error("cap {cap} must exceed scale {l0}")]
    Cap { l0: f64, cap: f64 },
}

fn check(alpha: f64, l0: f64, cap: f64) -> Result<(), ParetoError> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(ParetoError::Alpha(alpha));
    }
    if !(l0 >= 1.0) || !l0.is_finite() {
        return Err(ParetoError::Scale(l0));
    }
    if !(cap > l0) {
        return Err(ParetoError::Cap { l0, cap });
    }
    Ok(())
}

/// Complementary CDF of the uncapped law, `(L0/L)^alpha` for `L >= L0`.
pub fn pareto_ccdf(alpha: f64, l0: f64, x: f64) -> f64 {
    if x <= l0 {
        1.0
    } else {
        (l0 / x).powf(alpha)
    }
}

/// Draws one length by inverse CDF, redrawing anything above `cap`.
/// `cap` may be `f64::INFINITY`.
pub fn sample_pareto<R: Rng + ?Sized>(
    alpha: f64,
    l0: f64,
    cap: f64,
    rng: &mut R,
) -> Result<f64, ParetoError> {
    check(alpha, l0, cap)?;
    Ok(draw(alpha, l0, cap, rng))
}

/// Unchecked draw for hot loops; parameters validated by the caller.
#[inline]
pub(crate) fn draw<R: Rng + ?Sized>(alpha: f64, l0: f64, cap: f64, rng: &mut R) -> f64 {
    loop {
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let x = l0 * u.powf(-1.0 / alpha);
        if x <= cap {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ccdf_endpoints() {
        assert_eq!(pareto_ccdf(1.5, 10.0, 10.0), 1.0);
        let v = pareto_ccdf(1.5, 10.0, 20.0);
        assert!((v - 0.353_553_390_593_273_8).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_pareto(2.0, 10.0, 100.0, &mut rng).is_err());
        assert!(sample_pareto(1.5, 0.5, 100.0, &mut rng).is_err());
        assert!(sample_pareto(1.5, 10.0, 10.0, &mut rng).is_err());
    }

    #[test]
    fn cap_honored() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let x = sample_pareto(1.2, 1.0, 5.0, &mut rng).unwrap();
            assert!((1.0..=5.0).contains(&x));
        }
    }

    #[test]
    fn sample_mean_near_closed_form() {
        // mean alpha*L0/(alpha-1) = 30 for alpha = 1.5, L0 = 10
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| sample_pareto(1.5, 10.0, 1e9, &mut rng).unwrap())
            .sum();
        let mean = sum / n as f64;
        assert!((mean - 30.0).abs() < 0.05 * 30.0, "mean {mean}");
    }
}
