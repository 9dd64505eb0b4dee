//! Conjugate posteriors of the Gaussian location model with known variance.

use crate::error::{GviError, Result};
use crate::measures::{Dataset, GaussianMeasure};

/// Standard Bayesian posterior `N(mean, var)` with
/// `var = (1/s_pi^2 + n/s_p^2)^-1` and `mean = var (mu_pi/s_pi^2 + sum x / s_p^2)`.
pub fn bayes_posterior(data: &Dataset, prior: &GaussianMeasure, sigma_p: f64) -> Result<GaussianMeasure> {
    if prior.is_dirac() {
        return Err(GviError::DegenerateMeasure("conjugate update needs a prior with positive variance".into()));
    }
    if data.is_empty() {
        return Err(GviError::EmptyData);
    }
    let lik_precision = 1.0 / (sigma_p * sigma_p);
    let precision = 1.0 / prior.variance() + data.len() as f64 * lik_precision;
    let variance = 1.0 / precision;
    let mean = variance * (prior.mean() / prior.variance() + data.sum() * lik_precision);
    GaussianMeasure::new(mean, variance)
}

/// Minimiser of the KL-regularised expected likelihood loss over Gaussians
/// with unit learning rate. Same formulas as [`bayes_posterior`], computed
/// independently of it.
pub fn vb_kl_posterior(data: &Dataset, prior: &GaussianMeasure, sigma_p: f64) -> Result<GaussianMeasure> {
    if prior.is_dirac() {
        return Err(GviError::DegenerateMeasure("conjugate update needs a prior with positive variance".into()));
    }
    if data.is_empty() {
        return Err(GviError::EmptyData);
    }
    // stationarity of n J(q) + KL(q || prior) in (mu, s^2)
    let s2p = sigma_p * sigma_p;
    let n = data.len() as f64;
    let variance = prior.variance() * s2p / (s2p + n * prior.variance());
    let mean = (s2p * prior.mean() + prior.variance() * data.sum()) / (s2p + n * prior.variance());
    GaussianMeasure::new(mean, variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n4_mean1() -> Dataset {
        Dataset::new(vec![0.0, 1.0, 1.5, 1.5]).unwrap()
    }

    #[test]
    fn bayes_examples() {
        let q = bayes_posterior(&n4_mean1(), &GaussianMeasure::standard(), 1.0).unwrap();
        assert!((q.mean() - 0.8).abs() < 1e-15 && (q.variance() - 0.2).abs() < 1e-15);
        let q = bayes_posterior(&Dataset::new(vec![0.0]).unwrap(), &GaussianMeasure::standard(), 1.0).unwrap();
        assert_eq!((q.mean(), q.variance()), (0.0, 0.5));
        let far = GaussianMeasure::new(100.0, 1.0).unwrap();
        let q = bayes_posterior(&n4_mean1(), &far, 1.0).unwrap();
        assert!((q.mean() - 20.8).abs() < 1e-12);
    }

    #[test]
    fn vb_matches_bayes() {
        let priors = [
            GaussianMeasure::standard(),
            GaussianMeasure::new(100.0, 1.0).unwrap(),
            GaussianMeasure::new(-3.0, 0.25).unwrap(),
        ];
        for prior in &priors {
            for data in [n4_mean1(), Dataset::new(vec![0.0]).unwrap()] {
                for sp in [0.5, 1.0, 3.0] {
                    let a = bayes_posterior(&data, prior, sp).unwrap();
                    let b = vb_kl_posterior(&data, prior, sp).unwrap();
                    assert!((a.mean() - b.mean()).abs() <= 1e-12 * a.mean().abs().max(1.0));
                    assert!((a.variance() - b.variance()).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            bayes_posterior(&n4_mean1(), &GaussianMeasure::dirac(0.0), 1.0),
            Err(GviError::DegenerateMeasure(_))
        ));
        assert!(matches!(
            vb_kl_posterior(&Dataset::new(vec![]).unwrap(), &GaussianMeasure::standard(), 1.0),
            Err(GviError::EmptyData)
        ));
    }
}
