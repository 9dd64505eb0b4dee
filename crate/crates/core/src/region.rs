//! The region `R*_n = {Q : J(Q) - J(P_n*) <= M / (n beta)}` that contains every
//! GVI posterior under a divergence bounded by `M`, whatever the prior.

use serde::{Deserialize, Serialize};

use crate::error::{GviError, Result};
use crate::measures::{Dataset, Measure};
use crate::problem::{Family, GviProblem, Schedules};

/// Tolerance on the membership margin.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// `M / (n beta)`
pub fn rstar_slack(m: f64, n: usize, beta: f64) -> f64 {
    m / (n as f64 * beta)
}

/// `M M(n) / (n beta beta(n))`
pub fn rstar_slack_scheduled(m: f64, n: usize, beta: f64, schedules: &Schedules) -> f64 {
    rstar_slack(m * schedules.bound.at(n), n, beta * schedules.beta.at(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RStarRegion {
    /// `J(P_n*)`
    pub j_star: f64,
    pub slack: f64,
    pub family: Family,
}

impl RStarRegion {
    /// The region of a problem. The prior plays no part in it.
    pub fn of(p: &GviProblem) -> Result<Self> {
        let m = p
            .bound()
            .ok_or_else(|| GviError::UnboundedDivergence(p.divergence.name()))?;
        let (_, j_star) = p.loss.empirical_loss_minimiser(&p.family)?;
        Ok(Self {
            j_star,
            slack: m / (p.n() as f64 * p.effective_beta()),
            family: p.family.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub inside: bool,
    /// `slack - (J(q) - J*)`; negative outside the region.
    pub margin: f64,
}

pub fn is_in_rstar(p: &GviProblem, q: &Measure) -> Result<Membership> {
    let region = RStarRegion::of(p)?;
    let j = p.loss.expected_loss(q)?;
    let margin = region.slack - (j - region.j_star);
    Ok(Membership {
        inside: margin >= -MEMBERSHIP_TOL,
        margin,
    })
}

/// Cross-sections of the Gaussian region in `(mu, sigma)`, from
/// `(mu - xbar)^2 + sigma^2 <= 2 sigma_p^2 M / (beta n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRegionBounds {
    pub center: f64,
    /// `2 sigma_p^2 M / (beta n)`
    pub budget: f64,
}

impl GaussianRegionBounds {
    /// Half-width of the admissible means at standard deviation `sigma`.
    pub fn mean_radius(&self, sigma: f64) -> f64 {
        (self.budget - sigma * sigma).max(0.0).sqrt()
    }

    /// Largest admissible variance at mean `mu`.
    pub fn var_cap(&self, mu: f64) -> f64 {
        let d = mu - self.center;
        (self.budget - d * d).max(0.0)
    }
}

pub fn rstar_gaussian_bounds(data: &Dataset, sigma_p: f64, m: f64, beta: f64) -> Result<GaussianRegionBounds> {
    if data.is_empty() {
        return Err(GviError::EmptyData);
    }
    if !(m > 0.0 && beta > 0.0 && sigma_p > 0.0) {
        return Err(GviError::InvalidProblem("M, beta and sigma_p must be positive".into()));
    }
    Ok(GaussianRegionBounds {
        center: data.mean(),
        budget: 2.0 * sigma_p * sigma_p * rstar_slack(m, data.len(), beta),
    })
}

/// Membership of `a q1 + (1 - a) q2` in the region. Only grid measures are
/// closed under mixing; Gaussian inputs are rejected.
pub fn mixture_membership_check(p: &GviProblem, q1: &Measure, q2: &Measure, a: f64) -> Result<bool> {
    match (q1, q2) {
        (Measure::Discrete(d1), Measure::Discrete(d2)) => {
            let mix = d1.mixture(a, d2)?;
            Ok(is_in_rstar(p, &mix.into())?.inside)
        }
        _ => Err(GviError::FamilyClosure(
            "a mixture of Gaussians is not Gaussian".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::DivergenceSpec;
    use crate::losses::LossModel;
    use crate::measures::{DiscreteMeasure, GaussianMeasure};

    fn tv_problem(values: Vec<f64>, prior: Measure) -> GviProblem {
        let loss = LossModel::gaussian_nll(Dataset::new(values).unwrap(), 1.0).unwrap();
        GviProblem::new(loss, prior, DivergenceSpec::tv(), 1.0, Family::Gaussian).unwrap()
    }

    #[test]
    fn slack_examples() {
        assert_eq!(rstar_slack(1.0, 2, 1.0), 0.5);
        assert!((rstar_slack(2.0, 100, 0.5) - 0.04).abs() < 1e-15);
        let s = Schedules {
            bound: crate::problem::Schedule::Power {
                coef: 1.0,
                exponent: 0.5,
            },
            ..Schedules::default()
        };
        let v = rstar_slack_scheduled(1.0, 10_000, 1.0, &s);
        assert!((v - 1e-2).abs() < 1e-15);
        assert!((v * 1e4 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn membership_examples() {
        let p = tv_problem(vec![0.0, 2.0], GaussianMeasure::standard().into());
        let m = is_in_rstar(&p, &GaussianMeasure::dirac(1.0).into()).unwrap();
        assert!(m.inside);
        assert!((m.margin - 0.5).abs() < 1e-15);
        let m = is_in_rstar(&p, &GaussianMeasure::dirac(3.0).into()).unwrap();
        assert!(!m.inside);
        assert!((m.margin - (0.5 - 2.0)).abs() < 1e-12);
        let (p_star, _) = p.loss.empirical_loss_minimiser(&p.family).unwrap();
        let m = is_in_rstar(&p, &p_star).unwrap();
        assert_eq!(m.margin, RStarRegion::of(&p).unwrap().slack);
    }

    #[test]
    fn membership_needs_a_bound() {
        let loss = LossModel::gaussian_nll(Dataset::new(vec![0.0, 2.0]).unwrap(), 1.0).unwrap();
        let p = GviProblem::new(loss, GaussianMeasure::standard().into(), DivergenceSpec::kl(), 1.0, Family::Gaussian)
            .unwrap();
        assert!(matches!(
            is_in_rstar(&p, &GaussianMeasure::standard().into()),
            Err(GviError::UnboundedDivergence(_))
        ));
    }

    #[test]
    fn region_ignores_the_prior() {
        let a = RStarRegion::of(&tv_problem(vec![0.3, 2.0, -1.0], GaussianMeasure::standard().into())).unwrap();
        for mean in [-1e6, 5.0, 1e6] {
            let b = RStarRegion::of(&tv_problem(
                vec![0.3, 2.0, -1.0],
                GaussianMeasure::new(mean, 0.01).unwrap().into(),
            ))
            .unwrap();
            assert_eq!(a.j_star.to_bits(), b.j_star.to_bits());
            assert_eq!(a.slack.to_bits(), b.slack.to_bits());
        }
    }

    #[test]
    fn gaussian_bounds_examples() {
        let data = Dataset::new(vec![0.0, 2.0]).unwrap();
        let b = rstar_gaussian_bounds(&data, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(b.mean_radius(0.0), 1.0);
        assert_eq!(b.var_cap(1.0), 1.0);
        assert_eq!(b.mean_radius(1.0), 0.0);
        assert_eq!(b.var_cap(2.5), 0.0);
    }

    #[test]
    fn gaussian_bounds_match_membership_scan() {
        let data = Dataset::new(vec![0.0, 2.0]).unwrap();
        let p = tv_problem(data.values().to_vec(), GaussianMeasure::standard().into());
        let b = rstar_gaussian_bounds(&data, 1.0, 1.0, 1.0).unwrap();
        let inside: Vec<f64> = (-300..=500)
            .map(|i| i as f64 * 0.01)
            .filter(|&mu| is_in_rstar(&p, &GaussianMeasure::dirac(mu).into()).unwrap().inside)
            .collect();
        let lo = inside.first().unwrap();
        let hi = inside.last().unwrap();
        assert!((lo - (1.0 - b.mean_radius(0.0))).abs() <= 0.01 + 1e-12);
        assert!((hi - (1.0 + b.mean_radius(0.0))).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn mixtures() {
        let grid = vec![-1.0, 0.0, 1.0];
        let loss = LossModel::table(grid.clone(), vec![1.0, 0.0, 1.0], 1).unwrap();
        let prior: Measure = DiscreteMeasure::uniform(grid.clone()).unwrap().into();
        let p = GviProblem::new(loss, prior, DivergenceSpec::tv(), 1.0, Family::Discrete { grid: grid.clone() }).unwrap();
        let q1: Measure = DiscreteMeasure::new(grid.clone(), vec![0.5, 0.5, 0.0]).unwrap().into();
        let q2: Measure = DiscreteMeasure::vertex(grid, 1).unwrap().into();
        assert!(is_in_rstar(&p, &q1).unwrap().inside);
        for a in [0.0, 0.3, 1.0] {
            assert!(mixture_membership_check(&p, &q1, &q2, a).unwrap());
        }
        let g: Measure = GaussianMeasure::standard().into();
        assert!(matches!(
            mixture_membership_check(&p, &g, &g, 0.5),
            Err(GviError::FamilyClosure(_))
        ));
    }
}
