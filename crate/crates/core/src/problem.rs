//! The GVI objective `T_n(Q) = n E_Q[L_n] + (1/beta) D(Q : prior)` and the
//! data it is built from.

use serde::{Deserialize, Serialize};

use crate::divergences::DivergenceSpec;
use crate::error::{GviError, Result};
use crate::losses::LossModel;
use crate::measures::{validate_grid, DiscreteMeasure, Measure};

/// The variational family the posterior is sought in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Family {
    /// All Gaussians on the real line, Diracs included.
    Gaussian,
    /// All probability vectors on a fixed grid.
    Discrete { grid: Vec<f64> },
}

/// A positive function of the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    Constant { value: f64 },
    /// `coef * n^exponent`
    Power { coef: f64, exponent: f64 },
    /// `coef * ln n`
    Log { coef: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant { value: 1.0 }
    }
}

impl Schedule {
    pub fn at(&self, n: usize) -> f64 {
        let x = n as f64;
        match *self {
            Schedule::Constant { value } => value,
            Schedule::Power { coef, exponent } => coef * x.powf(exponent),
            Schedule::Log { coef } => coef * x.ln(),
        }
    }

    /// Value at `n`, or an error if it is not a positive finite number.
    pub fn positive_at(&self, n: usize, what: &str) -> Result<f64> {
        let v = self.at(n);
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(GviError::ScheduleViolation(format!("{what}({n}) = {v} is not positive")))
        }
    }

    pub fn is_constant_one(&self) -> bool {
        *self == Schedule::default()
    }
}

/// Multipliers `M(n)` on the divergence (and hence its bound) and `beta(n)`
/// on the learning rate. Both default to one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedules {
    #[serde(default)]
    pub bound: Schedule,
    #[serde(default)]
    pub beta: Schedule,
}

/// The three parts of an objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    /// `n J(q)`
    pub loss_part: f64,
    /// `D(q : prior) / beta`, schedules applied
    pub div_part: f64,
}

#[derive(Debug, Clone)]
pub struct GviProblem {
    pub loss: LossModel,
    pub prior: Measure,
    pub divergence: DivergenceSpec,
    pub beta: f64,
    pub family: Family,
    pub schedules: Schedules,
}

impl GviProblem {
    /// Builds and validates a problem with constant schedules.
    pub fn new(loss: LossModel, prior: Measure, divergence: DivergenceSpec, beta: f64, family: Family) -> Result<Self> {
        Self::with_schedules(loss, prior, divergence, beta, family, Schedules::default())
    }

    pub fn with_schedules(
        loss: LossModel,
        prior: Measure,
        divergence: DivergenceSpec,
        beta: f64,
        family: Family,
        schedules: Schedules,
    ) -> Result<Self> {
        let p = Self {
            loss,
            prior,
            divergence,
            beta,
            family,
            schedules,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(GviError::InvalidProblem(format!("beta = {} must be > 0", self.beta)));
        }
        let n = self.n();
        self.schedules.bound.positive_at(n, "M")?;
        self.schedules.beta.positive_at(n, "beta")?;
        match &self.family {
            Family::Gaussian => {
                if self.loss.sigma_p().is_none() {
                    return Err(GviError::InvalidProblem(
                        "the Gaussian family needs the gaussian-nll loss".into(),
                    ));
                }
            }
            Family::Discrete { grid } => {
                validate_grid(grid)?;
                self.loss.losses_on(grid)?;
            }
        }
        if self.finite_start().is_none() {
            return Err(GviError::Infeasible(format!(
                "no member of the family has a finite objective under {} against this prior",
                self.divergence.name()
            )));
        }
        Ok(())
    }

    /// A family member with finite objective, if one of the canonical
    /// candidates (empirical minimiser, prior, prior restricted to the grid) has one.
    pub(crate) fn finite_start(&self) -> Option<Measure> {
        let mut candidates = Vec::new();
        if let Ok((p_star, _)) = self.loss.empirical_loss_minimiser(&self.family) {
            candidates.push(p_star);
        }
        match (&self.family, &self.prior) {
            (Family::Gaussian, Measure::Gaussian(_)) => candidates.push(self.prior.clone()),
            (Family::Discrete { grid }, prior) => {
                let raw: Vec<f64> = grid.iter().map(|&t| prior_mass_at(prior, t)).collect();
                if let Ok(d) = DiscreteMeasure::normalized(grid.clone(), raw) {
                    candidates.push(d.into());
                }
            }
            _ => {}
        }
        candidates
            .into_iter()
            .find(|q| self.objective(q).map(|v| v.total.is_finite()).unwrap_or(false))
    }

    pub fn n(&self) -> usize {
        self.loss.n()
    }

    /// `beta * beta(n)`
    pub fn effective_beta(&self) -> f64 {
        self.beta * self.schedules.beta.at(self.n())
    }

    /// Factor multiplying the raw divergence in the objective: `c(n) M(n) / (beta beta(n))`.
    pub fn divergence_weight(&self) -> f64 {
        let n = self.n();
        self.divergence.scale(n) * self.schedules.bound.at(n) / self.effective_beta()
    }

    /// Effective bound `M` on the (scaled) divergence, if finite.
    pub fn bound(&self) -> Option<f64> {
        let n = self.n();
        self.divergence.bound_at(n).map(|m| m * self.schedules.bound.at(n))
    }

    /// Whether `q` lies in the problem's family.
    pub fn in_family(&self, q: &Measure) -> bool {
        match (&self.family, q) {
            (Family::Gaussian, Measure::Gaussian(_)) => true,
            (Family::Discrete { grid }, Measure::Discrete(d)) => d.grid() == grid.as_slice(),
            _ => false,
        }
    }

    pub fn objective(&self, q: &Measure) -> Result<ObjectiveValue> {
        if !self.in_family(q) {
            return Err(GviError::InvalidProblem("measure is not a member of the problem's family".into()));
        }
        let n = self.n();
        let loss_part = n as f64 * self.loss.expected_loss(q)?;
        let raw = self.divergence.evaluate(q, &self.prior, n)? / self.divergence.scale(n);
        let div_part = self.divergence_weight() * raw;
        Ok(ObjectiveValue {
            total: loss_part + div_part,
            loss_part,
            div_part,
        })
    }
}

/// Prior mass sitting exactly at `theta` (zero for atomless priors).
pub(crate) fn prior_mass_at(prior: &Measure, theta: f64) -> f64 {
    match prior {
        Measure::Discrete(d) => d.mass_at(theta),
        Measure::Gaussian(g) if g.is_dirac() && g.mean() == theta => 1.0,
        Measure::Gaussian(_) => 0.0,
    }
}
