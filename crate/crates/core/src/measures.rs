//! Probability measures on the real line.
//!
//! Two tracks are supported: one-dimensional Gaussians, where a zero variance
//! encodes a Dirac mass at the mean, and probability vectors supported on a
//! finite, strictly increasing grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GviError, Result};

/// Tolerance on `|sum(weights) - 1|` for discrete measures.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF.
///
/// Evaluated as `erfc(-z / sqrt 2) / 2` with the `libm` port of the FreeBSD
/// msun `erfc`, which is accurate to about one ulp over the whole line; the
/// complementary form keeps full relative accuracy in the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - 0.5 * LN_2PI).exp()
}

/// Standard normal mass of `[lo, hi]`, computed in whichever tail keeps
/// precision.
pub fn standard_interval_mass(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    let upper = |z: f64| 0.5 * libm::erfc(z * std::f64::consts::FRAC_1_SQRT_2);
    let m = if lo > 0.0 {
        upper(lo) - upper(hi)
    } else if hi < 0.0 {
        upper(-hi) - upper(-lo)
    } else {
        1.0 - upper(-lo) - upper(hi)
    };
    m.clamp(0.0, 1.0)
}

/// A Gaussian `N(mean, variance)` on the real line; `variance == 0` is a Dirac mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct GaussianMeasure {
    mean: f64,
    variance: f64,
}

#[derive(Deserialize)]
struct RawGaussian {
    mean: f64,
    variance: f64,
}

impl TryFrom<RawGaussian> for GaussianMeasure {
    type Error = GviError;

    fn try_from(raw: RawGaussian) -> Result<Self> {
        GaussianMeasure::new(raw.mean, raw.variance)
    }
}

impl GaussianMeasure {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(GviError::InvalidMeasure(format!("mean {mean} is not finite")));
        }
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(GviError::InvalidMeasure(format!(
                "variance {variance} must be finite and >= 0"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn dirac(at: f64) -> Self {
        Self {
            mean: at,
            variance: 0.0,
        }
    }

    pub fn standard() -> Self {
        Self {
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn is_dirac(&self) -> bool {
        self.variance == 0.0
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        if self.is_dirac() {
            return Err(GviError::DegenerateMeasure(format!(
                "Dirac mass at {} has no Lebesgue density",
                self.mean
            )));
        }
        let r = x - self.mean;
        Ok(-0.5 * (LN_2PI + self.variance.ln()) - r * r / (2.0 * self.variance))
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    /// Draws `count` values; the sequence is a pure function of `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = self.sd();
        (0..count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.mean + sd * z
            })
            .collect()
    }

    pub fn mass_on_interval(&self, lo: f64, hi: f64) -> f64 {
        if lo > hi {
            return 0.0;
        }
        if self.is_dirac() {
            return if lo <= self.mean && self.mean <= hi { 1.0 } else { 0.0 };
        }
        let sd = self.sd();
        standard_interval_mass((lo - self.mean) / sd, (hi - self.mean) / sd)
    }

    /// Projects onto a grid: weights proportional to the density at each node
    /// times the width of the node's midpoint cell, renormalised.
    pub fn discretize(&self, grid: &[f64]) -> Result<DiscreteMeasure> {
        validate_grid(grid)?;
        if self.is_dirac() {
            let idx = grid.iter().position(|&g| g == self.mean).ok_or_else(|| {
                GviError::DegenerateMeasure(format!("Dirac at {} is not a grid node", self.mean))
            })?;
            return DiscreteMeasure::vertex(grid.to_vec(), idx);
        }
        if grid.len() == 1 {
            return DiscreteMeasure::new(grid.to_vec(), vec![1.0]);
        }
        let widths = cell_widths(grid);
        let log_w: Vec<f64> = grid
            .iter()
            .zip(&widths)
            .map(|(&x, &w)| self.log_density(x).map(|ld| ld + w.ln()))
            .collect::<Result<_>>()?;
        DiscreteMeasure::from_log_weights(grid.to_vec(), &log_w)
    }
}

fn cell_widths(grid: &[f64]) -> Vec<f64> {
    let k = grid.len();
    (0..k)
        .map(|i| match i {
            0 => grid[1] - grid[0],
            i if i == k - 1 => grid[k - 1] - grid[k - 2],
            i => 0.5 * (grid[i + 1] - grid[i - 1]),
        })
        .collect()
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(GviError::InvalidMeasure("grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(GviError::InvalidMeasure("grid has non-finite nodes".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GviError::InvalidMeasure("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// A probability vector on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDiscrete")]
pub struct DiscreteMeasure {
    grid: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDiscrete {
    grid: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawDiscrete> for DiscreteMeasure {
    type Error = GviError;

    fn try_from(raw: RawDiscrete) -> Result<Self> {
        DiscreteMeasure::new(raw.grid, raw.weights)
    }
}

impl DiscreteMeasure {
    pub fn new(grid: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        if grid.len() != weights.len() {
            return Err(GviError::InvalidMeasure(format!(
                "grid has {} nodes but {} weights",
                grid.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(GviError::InvalidMeasure("weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(GviError::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { grid, weights })
    }

    /// Normalises unnormalised log-weights with a log-sum-exp shift.
    pub fn from_log_weights(grid: Vec<f64>, log_weights: &[f64]) -> Result<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(GviError::InvalidMeasure("no finite log-weight".into()));
        }
        let raw: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        Self::normalized(grid, raw)
    }

    /// Normalises nonnegative weights to sum to one.
    pub fn normalized(grid: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(GviError::InvalidMeasure(format!("weight total {total}")));
        }
        let weights = raw.iter().map(|w| w / total).collect();
        Self::new(grid, weights)
    }

    pub fn uniform(grid: Vec<f64>) -> Result<Self> {
        let k = grid.len().max(1);
        Self::normalized(grid, vec![1.0; k])
    }

    /// Dirac mass on the `idx`-th grid node.
    pub fn vertex(grid: Vec<f64>, idx: usize) -> Result<Self> {
        if idx >= grid.len() {
            return Err(GviError::InvalidMeasure(format!(
                "vertex index {idx} out of range for {} nodes",
                grid.len()
            )));
        }
        let mut weights = vec![0.0; grid.len()];
        weights[idx] = 1.0;
        Self::new(grid, weights)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// Mass placed exactly on `theta` (zero when `theta` is not a node).
    pub fn mass_at(&self, theta: f64) -> f64 {
        match self.grid.binary_search_by(|g| g.total_cmp(&theta)) {
            Ok(i) => self.weights[i],
            Err(_) => 0.0,
        }
    }

    pub fn mass_on_interval(&self, lo: f64, hi: f64) -> f64 {
        if lo > hi {
            return 0.0;
        }
        let m: f64 = self
            .grid
            .iter()
            .zip(&self.weights)
            .filter(|(x, _)| lo <= **x && **x <= hi)
            .map(|(_, w)| w)
            .sum();
        m.min(1.0)
    }

    pub fn same_grid(&self, other: &DiscreteMeasure) -> bool {
        self.grid == other.grid
    }

    /// `a * self + (1 - a) * other`; both must live on the same grid.
    pub fn mixture(&self, a: f64, other: &DiscreteMeasure) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(GviError::InvalidMeasure(format!("mixing weight {a} outside [0, 1]")));
        }
        if !self.same_grid(other) {
            return Err(GviError::GridMismatch("mixture components on different grids".into()));
        }
        let raw = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(x, y)| a * x + (1.0 - a) * y)
            .collect();
        Self::normalized(self.grid.clone(), raw)
    }
}

/// A measure from either track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Discrete(DiscreteMeasure),
}

impl From<GaussianMeasure> for Measure {
    fn from(g: GaussianMeasure) -> Self {
        Measure::Gaussian(g)
    }
}

impl From<DiscreteMeasure> for Measure {
    fn from(d: DiscreteMeasure) -> Self {
        Measure::Discrete(d)
    }
}

impl Measure {
    pub fn mean(&self) -> f64 {
        match self {
            Measure::Gaussian(g) => g.mean(),
            Measure::Discrete(d) => d.mean(),
        }
    }

    /// True when the measure is purely atomic (Dirac or grid-supported).
    pub fn is_atomic(&self) -> bool {
        match self {
            Measure::Gaussian(g) => g.is_dirac(),
            Measure::Discrete(_) => true,
        }
    }

    /// Atoms as `(location, mass)` pairs; empty for an atomless measure.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            Measure::Gaussian(g) if g.is_dirac() => vec![(g.mean(), 1.0)],
            Measure::Gaussian(_) => Vec::new(),
            Measure::Discrete(d) => d.grid().iter().copied().zip(d.weights().iter().copied()).collect(),
        }
    }

    pub fn mass_on_interval(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Measure::Gaussian(g) => g.mass_on_interval(lo, hi),
            Measure::Discrete(d) => d.mass_on_interval(lo, hi),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianMeasure> {
        match self {
            Measure::Gaussian(g) => Some(g),
            Measure::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            Measure::Gaussian(_) => None,
            Measure::Discrete(d) => Some(d),
        }
    }
}

/// Generating process `N(theta0, sigma0^2)` of a simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    pub theta0: f64,
    pub sigma0: f64,
}

impl Dgp {
    pub fn new(theta0: f64, sigma0: f64) -> Result<Self> {
        if !(theta0.is_finite() && sigma0.is_finite() && sigma0 > 0.0) {
            return Err(GviError::InvalidMeasure(format!(
                "data-generating process needs finite theta0 and sigma0 > 0, got ({theta0}, {sigma0})"
            )));
        }
        Ok(Self { theta0, sigma0 })
    }

    pub fn measure(&self) -> GaussianMeasure {
        GaussianMeasure {
            mean: self.theta0,
            variance: self.sigma0 * self.sigma0,
        }
    }
}

/// Observations with cached first and second empirical moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    dgp: Option<Dgp>,
    mean: f64,
    mean_sq: f64,
    variance: f64,
}

impl Dataset {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(GviError::InvalidProblem("observations must be finite".into()));
        }
        let n = values.len() as f64;
        let (mean, mean_sq, variance) = if values.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            let mean = values.iter().sum::<f64>() / n;
            (
                mean,
                values.iter().map(|x| x * x).sum::<f64>() / n,
                values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n,
            )
        };
        Ok(Self {
            values,
            dgp: None,
            mean,
            mean_sq,
            variance,
        })
    }

    pub fn simulate(dgp: Dgp, n: usize, seed: u64) -> Self {
        let values = dgp.measure().sample(seed, n);
        let mut d = Self::new(values).expect("samples from a valid Gaussian are finite");
        d.dgp = Some(dgp);
        d
    }

    pub fn with_dgp(mut self, dgp: Dgp) -> Self {
        self.dgp = Some(dgp);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dgp(&self) -> Option<Dgp> {
        self.dgp
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Empirical mean; zero for an empty dataset.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Empirical second moment `sum(x^2) / n`.
    pub fn mean_sq(&self) -> f64 {
        self.mean_sq
    }

    /// Empirical variance `sum((x - mean)^2) / n`, computed in two passes.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// First `n` observations, keeping the generating-process descriptor.
    pub fn prefix(&self, n: usize) -> Self {
        let mut d = Self::new(self.values[..n.min(self.values.len())].to_vec())
            .expect("prefix of a valid dataset");
        d.dgp = self.dgp;
        d
    }
}
