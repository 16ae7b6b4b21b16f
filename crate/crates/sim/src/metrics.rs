//! Evaluation metrics: relative error against ground truth and a histogram
//! KL divergence between objective samples.

use crate::env::SimError;

/// |y_pred − y_opt| / |y_opt| × 100.
pub fn relative_error(y_pred: f64, y_opt: f64) -> Result<f64, SimError> {
    if y_opt == 0.0 {
        return Err(SimError::Spec("relative error undefined for y_opt = 0".into()));
    }
    Ok((y_pred - y_opt).abs() / y_opt.abs() * 100.0)
}

/// Histogram KL divergence KL(a ‖ b) in nats: shared equal-width bin edges
/// over the union range, one smoothing pseudo-count per histogram spread
/// uniformly across the bins (a per-bin pseudo-count of a full unit flattens
/// the tails enough to bias the estimate far below the analytic value).
pub fn kl_divergence(a: &[f64], b: &[f64], bins: usize) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "kl_divergence needs non-empty samples");
    let bins = bins.max(1);
    let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return 0.0;
    }
    let width = (hi - lo) / bins as f64;
    let smoothing = 1.0 / bins as f64;
    let mut ca = vec![smoothing; bins];
    let mut cb = vec![smoothing; bins];
    for &x in a {
        let i = (((x - lo) / width) as usize).min(bins - 1);
        ca[i] += 1.0;
    }
    for &x in b {
        let i = (((x - lo) / width) as usize).min(bins - 1);
        cb[i] += 1.0;
    }
    let sa: f64 = ca.iter().sum();
    let sb: f64 = cb.iter().sum();
    ca.iter()
        .zip(&cb)
        .map(|(p, q)| {
            let p = p / sa;
            let q = q / sb;
            p * (p / q).ln()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use cameo_core::stats::std_normal;
    use rand::SeedableRng;

    #[test]
    fn relative_error_arithmetic() {
        assert!((relative_error(11.0, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(relative_error(10.0, 10.0).unwrap(), 0.0);
        assert!((relative_error(8.0, 10.0).unwrap() - 20.0).abs() < 1e-12);
        assert!(relative_error(1.0, 0.0).is_err());
    }

    #[test]
    fn kl_of_identical_samples_is_zero() {
        let a: Vec<f64> = (0..200).map(|i| i as f64 / 10.0).collect();
        let kl = kl_divergence(&a, &a, 20);
        assert!(kl.abs() < 1e-2, "kl {kl}");
    }

    #[test]
    fn kl_matches_analytic_gaussian_value() {
        // N(0,1) vs N(3,1): analytic KL = (μ₁−μ₂)²/2 = 4.5 nats.
        let mut r1 = rand_chacha::ChaCha12Rng::seed_from_u64(100);
        let mut r2 = rand_chacha::ChaCha12Rng::seed_from_u64(200);
        let a: Vec<f64> = (0..10_000).map(|_| std_normal(&mut r1)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| 3.0 + std_normal(&mut r2)).collect();
        let kl = kl_divergence(&a, &b, 50);
        assert!((kl - 4.5).abs() / 4.5 < 0.15, "kl {kl} vs analytic 4.5");
    }

    #[test]
    fn kl_is_asymmetric_on_skewed_samples() {
        use rand::RngExt;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..5000).map(|_| rng.random::<f64>().powi(3)).collect();
        let b: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let ab = kl_divergence(&a, &b, 40);
        let ba = kl_divergence(&b, &a, 40);
        assert!((ab - ba).abs() > 1e-3, "expected asymmetry, got {ab} vs {ba}");
    }
}
