//! Uniform probability measures on the simplex and exact moments of their
//! components.
//!
//! A uniform point of the simplex is obtained by normalising `n`
//! independent unit-mean exponential draws. Expectations of monomials
//! `μ₁^α₁ ⋯ μ_N^α_N` have the closed form
//!
//! ```text
//! (N−1)! ∏ Γ(αᵢ+1) / Γ(Σαᵢ + N)
//! ```
//!
//! which is evaluated in log space so that `N` in the tens of thousands does
//! not overflow.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::Stream;

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector on an event space of `n` points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMeasure {
    weights: Vec<f64>,
}

impl ProbabilityMeasure {
    /// Validates non-negativity and normalisation (to 1e-12).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension("measure needs at least one point".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight {w} is not a non-negative number"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(ProbabilityMeasure { weights })
    }

    /// The point mass on event `index`.
    pub fn degenerate(n: usize, index: usize) -> Result<Self> {
        if n == 0 || index >= n {
            return Err(Error::InvalidDimension(format!(
                "point {index} outside event space of size {n}"
            )));
        }
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Ok(ProbabilityMeasure { weights })
    }

    /// The uniform measure (1/n, …, 1/n).
    pub fn flat(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("n = 0".into()));
        }
        Ok(ProbabilityMeasure {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Entrywise square roots, i.e. the unit vector this measure embeds to.
    pub fn sqrt_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    /// Reorders the event space: the new weight at `i` is the old weight at `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: perm.len(),
            });
        }
        let weights = perm.iter().map(|&p| self.weights[p]).collect();
        ProbabilityMeasure::new(weights)
    }
}

/// Exponents `α₁ … α_N` of a monomial in the components of a measure.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentSpec {
    exponents: Vec<f64>,
}

impl ExponentSpec {
    pub fn new(exponents: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::InvalidDimension("no exponents".into()));
        }
        if let Some(a) = exponents.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "exponent {a} is not a non-negative number"
            )));
        }
        Ok(ExponentSpec { exponents })
    }

    /// Exponents `leading` padded with zeros to dimension `n`.
    pub fn padded(leading: &[f64], n: usize) -> Result<Self> {
        if leading.len() > n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: leading.len(),
            });
        }
        let mut exponents = leading.to_vec();
        exponents.resize(n, 0.0);
        ExponentSpec::new(exponents)
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    /// Evaluates the monomial at `m`.
    pub fn evaluate(&self, m: &ProbabilityMeasure) -> Result<f64> {
        if m.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: m.dim(),
            });
        }
        Ok(self
            .exponents
            .iter()
            .zip(m.weights())
            .filter(|(a, _)| **a != 0.0)
            .map(|(a, w)| w.powf(*a))
            .product())
    }
}

/// Draws a uniformly distributed point of the simplex of dimension `n`.
pub fn sample_uniform_measure(n: usize, stream: &mut Stream) -> Result<ProbabilityMeasure> {
    if n == 0 {
        return Err(Error::InvalidDimension("n = 0".into()));
    }
    let mut weights: Vec<f64> = (0..n).map(|_| stream.exponential()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(ProbabilityMeasure { weights })
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `E(μ₁^α₁ ⋯ μ_N^α_N)` for a uniform measure.
pub fn exact_monomial_expectation(spec: &ExponentSpec) -> f64 {
    let n = spec.dim() as f64;
    // Zero exponents contribute ln Γ(1) = 0. Sorting the rest makes the
    // result independent of the order of the exponents, bit for bit.
    let mut active: Vec<f64> = spec.exponents().iter().copied().filter(|a| *a != 0.0).collect();
    if active.is_empty() {
        return 1.0;
    }
    active.sort_by(f64::total_cmp);
    let total: f64 = active.iter().sum();
    let numerator: f64 = active.iter().map(|a| ln_gamma(a + 1.0)).sum();
    (ln_gamma(n) + numerator - ln_gamma(total + n)).exp()
}

/// Exact expected affinity between two independent uniform measures,
/// `N ((N−1)! Γ(3/2) / Γ(N+½))²`.
pub fn expected_affinity(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidDimension("n = 0".into()));
    }
    let nf = n as f64;
    let log_mean_root = ln_gamma(nf) + ln_gamma(1.5) - ln_gamma(nf + 0.5);
    Ok(nf * (2.0 * log_mean_root).exp())
}

/// Four-term large-`N` expansion of [`expected_affinity`]:
/// `(π/4)(1 + 1/(4N) + 1/(32N²) − 1/(128N³))`.
pub fn expected_affinity_series(n: usize) -> f64 {
    let inv = 1.0 / n as f64;
    PI / 4.0 * (1.0 + inv / 4.0 + inv * inv / 32.0 - inv * inv * inv / 128.0)
}

/// Empirical frequency of `‖X‖/S > t` over `reps` draws of `n` unit
/// exponentials, where `‖X‖` is the Euclidean norm and `S` the sum.
pub fn norm_ratio_tail(n: usize, t: f64, reps: usize, stream: &mut Stream) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidDimension("n = 0".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("reps = 0".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {t} must be positive")));
    }
    let mut exceed = 0usize;
    for _ in 0..reps {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let x = stream.exponential();
            sum += x;
            sq += x * x;
        }
        if sq.sqrt() / sum > t {
            exceed += 1;
        }
    }
    Ok(exceed as f64 / reps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_point_measure_is_one() {
        let mut s = Stream::new(3);
        let m = sample_uniform_measure(1, &mut s).unwrap();
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut s = Stream::new(3);
        assert!(matches!(
            sample_uniform_measure(0, &mut s),
            Err(Error::InvalidDimension(_))
        ));
        assert!(expected_affinity(0).is_err());
        assert!(norm_ratio_tail(0, 0.5, 1, &mut s).is_err());
    }

    #[test]
    fn constructor_checks_invariants() {
        assert!(ProbabilityMeasure::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityMeasure::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityMeasure::new(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityMeasure::new(vec![]).is_err());
        assert!(ExponentSpec::new(vec![-1.0]).is_err());
    }

    #[test]
    fn sampled_measures_satisfy_invariants() {
        for n in [1usize, 2, 3, 17, 256, 4096] {
            let mut s = Stream::substream(5, n as u32, 0);
            for _ in 0..1000 {
                let m = sample_uniform_measure(n, &mut s).unwrap();
                assert!(m.weights().iter().all(|w| *w >= 0.0));
                let total: f64 = m.weights().iter().sum();
                assert!((total - 1.0).abs() <= 1e-12, "n={n} total={total}");
            }
        }
    }

    #[test]
    fn two_point_component_mean_is_half() {
        let mut s = Stream::new(21);
        let reps = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..reps {
            let x = sample_uniform_measure(2, &mut s).unwrap().weights()[0];
            sum += x;
            sq += x * x;
        }
        let mean = sum / reps as f64;
        let se = ((sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn spot_values() {
        for n in [1usize, 2, 5, 40, 1000] {
            assert_eq!(exact_monomial_expectation(&ExponentSpec::padded(&[], n).unwrap()), 1.0);
            let nf = n as f64;
            let first = exact_monomial_expectation(&ExponentSpec::padded(&[1.0], n).unwrap());
            assert_relative_eq!(first, 1.0 / nf, max_relative = 1e-12);
            let second = exact_monomial_expectation(&ExponentSpec::padded(&[2.0], n).unwrap());
            assert_relative_eq!(second, 2.0 / (nf * (nf + 1.0)), max_relative = 1e-12);
            if n >= 2 {
                let cross = exact_monomial_expectation(&ExponentSpec::padded(&[0.5, 0.5], n).unwrap());
                assert_relative_eq!(cross, PI / (4.0 * nf), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn large_dimension_does_not_overflow() {
        let v = exact_monomial_expectation(&ExponentSpec::padded(&[0.5, 0.5], 10_000).unwrap());
        assert_relative_eq!(v, PI / 40_000.0, max_relative = 1e-10);
    }

    #[test]
    fn expected_affinity_values() {
        assert_relative_eq!(expected_affinity(2).unwrap(), 8.0 / 9.0, epsilon = 1e-12);
        let big = expected_affinity(10_000).unwrap();
        assert!((big - (PI / 4.0 + PI / 160_000.0)).abs() < 1e-9);
        // decreasing towards π/4
        let vals: Vec<f64> = [10, 100, 1000, 100_000]
            .iter()
            .map(|&n| expected_affinity(n).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[0] > w[1]));
        assert!((vals[3] - PI / 4.0).abs() < 1e-5);
    }

    #[test]
    fn expected_affinity_is_n_times_squared_root_mean() {
        for n in [1usize, 2, 7, 64, 3000] {
            let root = exact_monomial_expectation(&ExponentSpec::padded(&[0.5], n).unwrap());
            assert_relative_eq!(
                expected_affinity(n).unwrap(),
                n as f64 * root * root,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn tail_frequency_edge_cases() {
        let mut s = Stream::new(8);
        assert_eq!(norm_ratio_tail(1, 0.5, 100, &mut s).unwrap(), 1.0);
        assert_eq!(norm_ratio_tail(100, 0.9, 10_000, &mut s).unwrap(), 0.0);
    }

    #[test]
    fn monomial_expectation_is_permutation_symmetric() {
        let a = ExponentSpec::new(vec![0.5, 2.0, 0.0, 1.25, 3.0]).unwrap();
        let b = ExponentSpec::new(vec![3.0, 0.0, 1.25, 0.5, 2.0]).unwrap();
        assert_eq!(exact_monomial_expectation(&a), exact_monomial_expectation(&b));
    }
}
