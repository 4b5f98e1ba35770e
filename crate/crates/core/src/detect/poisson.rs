//! Poisson quantiles by cumulative summation of the mass function.

use statrs::function::gamma::ln_gamma;

/// Smallest `k` with `P(X <= k) >= p` for `X ~ Poisson(lambda)`.
///
/// Summation starts far enough below the mean that the skipped lower tail
/// is below `1e-40`, so large means cost `O(sqrt(lambda))` terms.
pub fn quantile(lambda: f64, p: f64) -> u64 {
    assert!(lambda >= 0.0 && lambda.is_finite(), "lambda must be finite and non-negative");
    assert!((0.0..=1.0).contains(&p), "p must be a probability");
    if lambda == 0.0 || p == 0.0 {
        return 0;
    }
    let start = (lambda - 14.0 * lambda.sqrt() - 20.0).floor().max(0.0) as u64;
    let kf = start as f64;
    let mut pmf = (kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)).exp();
    let mut cdf = pmf;
    let mut k = start;
    while cdf < p {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
        // past the mode with a vanishing term: the sum has converged in f64
        if k as f64 > lambda && pmf < f64::MIN_POSITIVE {
            break;
        }
    }
    k
}

/// Two-sided bounds holding `confidence` of the mass.
pub fn bounds(lambda: f64, confidence: f64) -> (u64, u64) {
    let alpha = 1.0 - confidence;
    (quantile(lambda, alpha / 2.0), quantile(lambda, 1.0 - alpha / 2.0))
}
