//! Numeric primitives shared by the likelihood and the samplers.
//!
//! Everything probabilistic in this crate is carried in natural-log space.
//! The ascending factorial `[x]_a^N = x (x + a) ... (x + (N-1) a)` is the
//! building block of every closed-form probability the model produces.

use rand::Rng;

use crate::error::{Error, Result};

pub use statrs::function::beta::ln_beta;
pub use statrs::function::gamma::ln_gamma;

/// `log([x]_a^n)`, the log of `x (x + a) ... (x + (n-1) a)`.
///
/// The empty product (`n == 0`) is 1, so the result is 0. Every factor must
/// be strictly positive; the first offending factor is reported otherwise.
pub fn log_ascending_factorial(x: f64, a: f64, n: u64) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..n {
        let factor = x + k as f64 * a;
        if !(factor > 0.0) {
            return Err(Error::FactorialDomain {
                x,
                a,
                n,
                k,
                value: factor,
            });
        }
        acc += factor.ln();
    }
    Ok(acc)
}

/// `log([x]_1^n)` through the gamma function; `x` must be positive.
///
/// Same value as `log_ascending_factorial(x, 1.0, n)` but O(1), which the
/// samplers need for hub nodes and large blocks.
#[inline]
pub fn log_rising(x: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        ln_gamma(x + n as f64) - ln_gamma(x)
    }
}

/// Numerically stable `log(sum(exp(values)))`. Returns `-inf` for an empty
/// slice or when every value is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-weights into probabilities.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights);
    log_weights.iter().map(|w| (w - lse).exp()).collect()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// Falls back to a uniform draw if no weight is finite.
pub fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> usize {
    debug_assert!(!log_weights.is_empty());
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return rng.random_range(0..log_weights.len());
    }
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, w) in log_weights.iter().enumerate() {
        cum += (w - lse).exp();
        if u < cum {
            return i;
        }
    }
    // Rounding left `cum` a hair below 1; take the last positive weight.
    log_weights
        .iter()
        .rposition(|w| w.is_finite())
        .unwrap_or(log_weights.len() - 1)
}

/// Draws an index proportionally to non-negative `weights` (linear scale).
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0);
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws from `Dirichlet(concentration)` through normalized gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: &[f64]) -> Vec<f64> {
    use rand_distr::{Distribution, Gamma};
    loop {
        let mut draws: Vec<f64> = concentration
            .iter()
            .map(|&a| {
                Gamma::new(a, 1.0)
                    .expect("positive concentration")
                    .sample(rng)
            })
            .collect();
        let total: f64 = draws.iter().sum();
        // Tiny concentrations can underflow every gamma draw to zero.
        if total > 0.0 && total.is_finite() {
            draws.iter_mut().for_each(|x| *x /= total);
            return draws;
        }
    }
}

/// Log of the multivariate Beta function `prod Gamma(a_k) / Gamma(sum a_k)`.
pub fn log_multivariate_beta(a: &[f64]) -> f64 {
    let sum: f64 = a.iter().sum();
    a.iter().map(|&x| ln_gamma(x)).sum::<f64>() - ln_gamma(sum)
}

/// `log(n!)`.
#[inline]
pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ascending_factorial_examples() {
        assert!((log_ascending_factorial(2.0, 1.0, 3).unwrap() - 24f64.ln()).abs() < 1e-14);
        assert_eq!(log_ascending_factorial(3.7, -2.0, 0).unwrap(), 0.0);
        assert!((log_ascending_factorial(0.5, 0.5, 2).unwrap() - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn ascending_factorial_reports_offending_factor() {
        // 3, 2, 1, 0 -> the fourth factor (k = 3) vanishes
        match log_ascending_factorial(3.0, -1.0, 4) {
            Err(Error::FactorialDomain { k, .. }) => assert_eq!(k, 3),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(log_ascending_factorial(-0.5, 1.0, 1).is_err());
    }

    #[test]
    fn falling_factorial_via_negative_step() {
        // [4]_{-1}^3 = 4 * 3 * 2
        let v = log_ascending_factorial(4.0, -1.0, 3).unwrap();
        assert!((v - 24f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn categorical_never_picks_impossible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let i = sample_log_categorical(&mut rng, &[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]);
            assert_eq!(i, 1);
        }
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logw = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        let mut counts = [0usize; 3];
        let n = 200_000;
        for _ in 0..n {
            counts[sample_log_categorical(&mut rng, &logw)] += 1;
        }
        for (c, p) in counts.iter().zip([0.2, 0.3, 0.5]) {
            let f = *c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 4.0 * se, "{f} vs {p}");
        }
    }

    proptest! {
        #[test]
        fn ascending_factorial_matches_product(x in 0.1f64..10.0, a in 0.1f64..10.0, n in 0u64..=50) {
            let direct: f64 = (0..n).map(|k| x + k as f64 * a).product();
            let got = log_ascending_factorial(x, a, n).unwrap().exp();
            prop_assert!(((got - direct) / direct).abs() < 1e-10);
        }

        #[test]
        fn rising_matches_sum(x in 0.05f64..50.0, n in 0u64..400) {
            let a = log_ascending_factorial(x, 1.0, n).unwrap();
            let b = log_rising(x, n);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}
