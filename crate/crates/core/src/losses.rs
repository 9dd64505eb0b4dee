//! Losses `L(X_1^n, theta)`, their expectations under a measure, and the
//! almost-sure limit loss of the Gaussian location model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GviError, Result};
use crate::measures::{Dataset, Dgp, DiscreteMeasure, GaussianMeasure, Measure};
use crate::problem::Family;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A subset of the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ThetaSet {
    /// Closed interval; endpoints may be infinite.
    Interval { lo: f64, hi: f64 },
    Points { points: Vec<f64> },
}

impl ThetaSet {
    pub fn interval(lo: f64, hi: f64) -> Self {
        ThetaSet::Interval { lo, hi }
    }

    pub fn whole_line() -> Self {
        ThetaSet::Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// Average Gaussian negative log-likelihood with known model sd `sigma_p`.
    GaussianNll { sigma_p: f64 },
    /// Loss tabulated on a grid.
    Table { grid: Vec<f64>, values: Vec<f64> },
}

/// A loss together with the data it is evaluated on.
#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    kind: LossKind,
    data: Dataset,
    n: usize,
}

#[derive(Debug, Deserialize)]
struct TableRow {
    theta: f64,
    value: f64,
}

impl LossModel {
    pub fn gaussian_nll(data: Dataset, sigma_p: f64) -> Result<Self> {
        if !(sigma_p.is_finite() && sigma_p > 0.0) {
            return Err(GviError::InvalidProblem(format!("sigma_p = {sigma_p} must be > 0")));
        }
        if data.is_empty() {
            return Err(GviError::EmptyData);
        }
        let n = data.len();
        Ok(Self {
            kind: LossKind::GaussianNll { sigma_p },
            data,
            n,
        })
    }

    /// A tabulated loss; `n` is the sample size the objective multiplies it by.
    pub fn table(grid: Vec<f64>, values: Vec<f64>, n: usize) -> Result<Self> {
        crate::measures::validate_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(GviError::InvalidProblem(format!(
                "table has {} nodes but {} values",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GviError::InvalidProblem("table losses must be finite".into()));
        }
        if n == 0 {
            return Err(GviError::EmptyData);
        }
        Ok(Self {
            kind: LossKind::Table { grid, values },
            data: Dataset::new(Vec::new())?,
            n,
        })
    }

    /// Loads a two-column `theta,value` CSV with a header row.
    pub fn table_from_csv(path: &Path, n: usize) -> Result<Self> {
        let csv_err = |source| GviError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut rows: Vec<TableRow> = Vec::new();
        for row in reader.deserialize() {
            rows.push(row.map_err(csv_err)?);
        }
        let (grid, values) = rows.into_iter().map(|r| (r.theta, r.value)).unzip();
        Self::table(grid, values, n)
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma_p(&self) -> Option<f64> {
        match self.kind {
            LossKind::GaussianNll { sigma_p } => Some(sigma_p),
            LossKind::Table { .. } => None,
        }
    }

    /// Lower bound of the loss over all parameters.
    pub fn lower_bound(&self) -> f64 {
        match &self.kind {
            LossKind::GaussianNll { sigma_p } => nll_constant(*sigma_p),
            LossKind::Table { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn loss_at(&self, theta: f64) -> Result<f64> {
        match &self.kind {
            LossKind::GaussianNll { sigma_p } => {
                let r = theta - self.data.mean();
                Ok(nll_constant(*sigma_p) + (r * r + self.data.variance()) / (2.0 * sigma_p * sigma_p))
            }
            LossKind::Table { grid, values } => grid
                .binary_search_by(|g| g.total_cmp(&theta))
                .map(|i| values[i])
                .map_err(|_| GviError::GridMismatch(format!("theta = {theta} is not a node of the loss table"))),
        }
    }

    /// Expected loss under a Gaussian; exact for the Dirac case.
    pub fn expected_loss_gaussian(&self, q: &GaussianMeasure) -> Result<f64> {
        match &self.kind {
            LossKind::GaussianNll { sigma_p } => {
                let r = q.mean() - self.data.mean();
                Ok(nll_constant(*sigma_p)
                    + (r * r + self.data.variance() + q.variance()) / (2.0 * sigma_p * sigma_p))
            }
            LossKind::Table { .. } if q.is_dirac() => self.loss_at(q.mean()),
            LossKind::Table { .. } => Err(GviError::InvalidProblem(
                "a tabulated loss has no expectation under an atomless Gaussian".into(),
            )),
        }
    }

    pub fn expected_loss_discrete(&self, nu: &DiscreteMeasure) -> Result<f64> {
        nu.grid()
            .iter()
            .zip(nu.weights())
            .filter(|(_, w)| **w > 0.0)
            .map(|(&theta, &w)| self.loss_at(theta).map(|l| w * l))
            .sum()
    }

    /// `J(q) = E_q[L_n]` for a measure of either track.
    pub fn expected_loss(&self, q: &Measure) -> Result<f64> {
        match q {
            Measure::Gaussian(g) => self.expected_loss_gaussian(g),
            Measure::Discrete(d) => self.expected_loss_discrete(d),
        }
    }

    /// Loss at every node of `grid`.
    pub fn losses_on(&self, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&t| self.loss_at(t)).collect()
    }

    /// `inf_{theta in A} L_n(theta)`.
    pub fn inf_loss(&self, set: &ThetaSet) -> Result<f64> {
        match (set, &self.kind) {
            (ThetaSet::Interval { lo, hi }, _) if !(lo <= hi) => {
                Err(GviError::EmptySet(format!("interval [{lo}, {hi}]")))
            }
            (ThetaSet::Interval { lo, hi }, LossKind::GaussianNll { .. }) => {
                self.loss_at(self.data.mean().clamp(*lo, *hi))
            }
            (ThetaSet::Interval { lo, hi }, LossKind::Table { grid, values }) => grid
                .iter()
                .zip(values)
                .filter(|(t, _)| *lo <= **t && **t <= *hi)
                .map(|(_, v)| *v)
                .reduce(f64::min)
                .ok_or_else(|| GviError::EmptySet(format!("no table node in [{lo}, {hi}]"))),
            (ThetaSet::Points { points }, _) => {
                if points.is_empty() {
                    return Err(GviError::EmptySet("empty point set".into()));
                }
                points
                    .iter()
                    .map(|&t| self.loss_at(t))
                    .try_fold(f64::INFINITY, |acc, l| l.map(|l| acc.min(l)))
            }
        }
    }

    /// The family member minimising the expected loss, and its value `J(P_n*)`.
    ///
    /// Over Gaussians the minimiser is the Dirac at the sample mean; over a
    /// grid it is the vertex at the smallest-theta argmin.
    pub fn empirical_loss_minimiser(&self, family: &Family) -> Result<(Measure, f64)> {
        match family {
            Family::Gaussian => {
                if self.sigma_p().is_none() {
                    return Err(GviError::InvalidProblem(
                        "the Gaussian family needs the Gaussian likelihood loss".into(),
                    ));
                }
                let q = GaussianMeasure::dirac(self.data.mean());
                let value = self.expected_loss_gaussian(&q)?;
                Ok((q.into(), value))
            }
            Family::Discrete { grid } => {
                let losses = self.losses_on(grid)?;
                let (idx, value) = losses
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::INFINITY), |best, (i, l)| if l < best.1 { (i, l) } else { best });
                Ok((DiscreteMeasure::vertex(grid.clone(), idx)?.into(), value))
            }
        }
    }
}

fn nll_constant(sigma_p: f64) -> f64 {
    0.5 * (LN_2PI + 2.0 * sigma_p.ln())
}

/// Almost-sure limit `L(theta) = E_{P0}[-log p_theta(X)]` of the Gaussian
/// likelihood loss under a Gaussian data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitLoss {
    pub dgp: Dgp,
    pub sigma_p: f64,
}

impl LimitLoss {
    pub fn new(dgp: Dgp, sigma_p: f64) -> Result<Self> {
        if !(sigma_p.is_finite() && sigma_p > 0.0) {
            return Err(GviError::InvalidProblem(format!("sigma_p = {sigma_p} must be > 0")));
        }
        Ok(Self { dgp, sigma_p })
    }

    pub fn value(&self, theta: f64) -> f64 {
        let r = theta - self.dgp.theta0;
        let s0 = self.dgp.sigma0;
        nll_constant(self.sigma_p) + (s0 * s0 + r * r) / (2.0 * self.sigma_p * self.sigma_p)
    }

    /// `L(Theta)`, attained uniquely at `theta0`.
    pub fn minimum(&self) -> f64 {
        self.value(self.dgp.theta0)
    }

    /// `inf` of the limit loss over a closed interval.
    pub fn inf_on(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(GviError::EmptySet(format!("interval [{lo}, {hi}]")));
        }
        Ok(self.value(self.dgp.theta0.clamp(lo, hi)))
    }

    /// `KL(P0 || P_theta)`: the excess limit loss plus the Gaussian entropy gap
    /// between the generating and model variances.
    pub fn kl_rate(&self, theta: f64) -> f64 {
        let r = theta - self.dgp.theta0;
        let ratio = (self.dgp.sigma0 / self.sigma_p).powi(2);
        r * r / (2.0 * self.sigma_p * self.sigma_p) + 0.5 * (ratio - 1.0 - ratio.ln())
    }

    /// Sublevel set `{theta : L(theta) <= L(Theta) + eps}` as `(lo, hi)`.
    pub fn n_eps_interval(&self, eps: f64) -> Result<(f64, f64)> {
        if !(eps > 0.0) {
            return Err(GviError::InvalidProblem(format!("eps = {eps} must be > 0")));
        }
        let half = (2.0 * self.sigma_p * self.sigma_p * eps).sqrt();
        Ok((self.dgp.theta0 - half, self.dgp.theta0 + half))
    }
}
