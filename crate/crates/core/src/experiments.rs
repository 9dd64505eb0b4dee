//! Seeded simulation runners for concentration, rates, schedules, the Bayes
//! comparison and the unbounded-divergence contrast.
//!
//! Every (seed, replicate, n) task draws its data from its own RNG stream, so
//! results do not depend on how rayon schedules the tasks. Rows come back in
//! configuration order: by seed, then replicate, then n.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugate::bayes_posterior;
use crate::divergences::{DivergenceKind, DivergenceSpec};
use crate::error::{GviError, Result};
use crate::losses::{LimitLoss, LossModel, ThetaSet};
use crate::measures::{Dataset, Dgp, GaussianMeasure, Measure};
use crate::persist::Record;
use crate::problem::{Family, GviProblem, Schedules};
use crate::region::{is_in_rstar, RStarRegion};
use crate::solve::{solve, SolveResult};

/// `eps_n = c * n^(-a)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub c: f64,
    pub a: f64,
}

impl EpsSchedule {
    pub fn at(&self, n: usize) -> f64 {
        self.c * (n as f64).powf(-self.a)
    }

    /// `c > 0` and `a` in `(0, 1)`, so that `eps_n -> 0` and `n eps_n -> inf`.
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(GviError::PreconditionViolation(format!("eps c = {} must be > 0", self.c)));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(GviError::PreconditionViolation(format!(
                "eps exponent a = {} must lie in (0, 1)",
                self.a
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgp: Dgp,
    pub sigma_p: f64,
    pub prior: Measure,
    pub divergence: DivergenceSpec,
    pub beta: f64,
    pub family: Family,
    #[serde(default)]
    pub schedules: Schedules,
    pub n_schedule: Vec<usize>,
    pub eps: EpsSchedule,
    pub seeds: Vec<u64>,
    /// Independent datasets per seed.
    pub replicates: usize,
    /// Use prefixes of one long sample per seed instead of a fresh sample per n.
    pub nested: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_schedule.is_empty() || self.n_schedule[0] == 0 {
            return Err(GviError::InvalidProblem("n_schedule must be nonempty with n >= 1".into()));
        }
        if self.n_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GviError::InvalidProblem("n_schedule must be strictly increasing".into()));
        }
        if self.seeds.is_empty() || self.replicates == 0 {
            return Err(GviError::InvalidProblem("need at least one seed and one replicate".into()));
        }
        if !(self.sigma_p > 0.0 && self.sigma_p.is_finite()) {
            return Err(GviError::InvalidProblem(format!("sigma_p = {} must be > 0", self.sigma_p)));
        }
        Dgp::new(self.dgp.theta0, self.dgp.sigma0)?;
        Ok(())
    }

    pub fn limit_loss(&self) -> Result<LimitLoss> {
        LimitLoss::new(self.dgp, self.sigma_p)
    }

    /// Seeds of the individual runs: the configured seeds when there is one
    /// replicate, otherwise one derived seed per (seed, replicate).
    pub fn run_seeds(&self) -> Vec<u64> {
        self.seeds
            .iter()
            .flat_map(|&s| (0..self.replicates).map(move |r| if r == 0 { s } else { splitmix(s ^ r as u64) }))
            .collect()
    }

    pub fn with_prior(&self, prior: Measure) -> Self {
        Self {
            prior,
            ..self.clone()
        }
    }

    fn problem(&self, data: Dataset) -> Result<GviProblem> {
        let loss = LossModel::gaussian_nll(data, self.sigma_p)?;
        GviProblem::with_schedules(
            loss,
            self.prior.clone(),
            self.divergence.clone(),
            self.beta,
            self.family.clone(),
            self.schedules,
        )
    }

    fn dataset(&self, run_seed: u64, n: usize) -> Dataset {
        if self.nested {
            let longest = *self.n_schedule.last().expect("validated nonempty");
            Dataset::simulate(self.dgp, longest, stream_seed(run_seed, 0)).prefix(n)
        } else {
            Dataset::simulate(self.dgp, n, stream_seed(run_seed, n))
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Data stream for one run seed at sample size `n`.
pub fn stream_seed(run_seed: u64, n: usize) -> u64 {
    splitmix(splitmix(run_seed) ^ n as u64)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub eps_n: f64,
    pub mass: f64,
    pub slack: f64,
    pub objective: f64,
    pub seed: u64,
}

impl Record for RateRow {
    const HEADER: &'static [&'static str] = &["n", "eps_n", "mass", "slack", "objective", "seed"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub n: usize,
    pub median: f64,
}

impl Record for MedianRow {
    const HEADER: &'static [&'static str] = &["n", "median"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub rows: Vec<RateRow>,
    pub medians: Vec<MedianRow>,
    /// Median over seeds, at the largest n, of
    /// `(inf_{theta outside N_eps} L_n(theta) - L_n(Theta)) / eps_n`.
    pub rate_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub n: usize,
    pub seed: u64,
    pub mass: f64,
}

impl Record for ConcentrationRow {
    const HEADER: &'static [&'static str] = &["n", "seed", "mass"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCurve {
    pub rows: Vec<ConcentrationRow>,
    pub medians: Vec<MedianRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mu_pi: f64,
    pub bayes_mean: f64,
    pub gvi_mean: f64,
    pub bayes_in_rstar: bool,
    pub gvi_in_rstar: bool,
    pub prior_ball_ok: bool,
}

impl Record for ComparisonRow {
    const HEADER: &'static [&'static str] = &[
        "mu_pi",
        "bayes_mean",
        "gvi_mean",
        "bayes_in_rstar",
        "gvi_in_rstar",
        "prior_ball_ok",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedRow {
    pub n: usize,
    pub seed: u64,
    pub mass: f64,
    pub div_over_n: f64,
}

impl Record for UnboundedRow {
    const HEADER: &'static [&'static str] = &["n", "seed", "mass", "div_over_n"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedMedianRow {
    pub n: usize,
    pub median_mass: f64,
    pub median_div_over_n: f64,
}

impl Record for UnboundedMedianRow {
    const HEADER: &'static [&'static str] = &["n", "median_mass", "median_div_over_n"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedCurve {
    pub rows: Vec<UnboundedRow>,
    pub medians: Vec<UnboundedMedianRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub prior_index: usize,
    pub prior_mean: f64,
    pub final_median: f64,
}

impl Record for RobustnessRow {
    const HEADER: &'static [&'static str] = &["prior_index", "prior_mean", "final_median"];
}

/// Solves one task; a solve that did not converge is an error, never a row.
fn solve_task(cfg: &ExperimentConfig, run_seed: u64, n: usize) -> Result<(GviProblem, SolveResult)> {
    let p = cfg.problem(cfg.dataset(run_seed, n))?;
    let r = solve(&p)?;
    if !r.converged {
        return Err(GviError::ContractViolation(format!(
            "existence of the GVI minimiser: solver did not converge at n = {n}, seed = {run_seed}"
        )));
    }
    Ok((p, r))
}

/// Runs `f` on every (run seed, n) pair in parallel, keeping configuration order.
fn map_tasks<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, usize) -> Result<T> + Sync,
{
    let tasks: Vec<(u64, usize)> = cfg
        .run_seeds()
        .into_iter()
        .flat_map(|s| cfg.n_schedule.iter().map(move |&n| (s, n)))
        .collect();
    tasks.par_iter().map(|&(s, n)| f(s, n)).collect()
}

fn medians_by_n<R>(n_schedule: &[usize], rows: &[R], key: impl Fn(&R) -> (usize, f64)) -> Vec<MedianRow> {
    n_schedule
        .iter()
        .map(|&n| {
            let mut vals: Vec<f64> = rows.iter().map(&key).filter(|(m, _)| *m == n).map(|(_, v)| v).collect();
            MedianRow {
                n,
                median: median(&mut vals),
            }
        })
        .collect()
}

fn check_region(cfg: &ExperimentConfig, region: (f64, f64)) -> Result<LimitLoss> {
    let limit = cfg.limit_loss()?;
    let inf = limit.inf_on(region.0, region.1)?;
    if inf <= limit.minimum() + 1e-9 {
        return Err(GviError::PreconditionViolation(format!(
            "the limit loss on [{}, {}] must exceed its global minimum (inf = {inf}, minimum = {})",
            region.0,
            region.1,
            limit.minimum()
        )));
    }
    Ok(limit)
}

/// Posterior mass of a region `A` whose limit loss exceeds the minimum.
pub fn run_concentration(cfg: &ExperimentConfig, region: (f64, f64)) -> Result<ConcentrationCurve> {
    cfg.validate()?;
    check_region(cfg, region)?;
    let rows = map_tasks(cfg, |seed, n| {
        let (_, r) = solve_task(cfg, seed, n)?;
        Ok(ConcentrationRow {
            n,
            seed,
            mass: r.posterior.mass_on_interval(region.0, region.1),
        })
    })?;
    let medians = medians_by_n(&cfg.n_schedule, &rows, |r| (r.n, r.mass));
    Ok(ConcentrationCurve { rows, medians })
}

/// Median mass must not rise over the schedule and must end at most 0.01.
pub fn check_concentration_contract(curve: &ConcentrationCurve) -> Result<()> {
    check_masses(curve.rows.iter().map(|r| r.mass))?;
    let first = curve.medians.first().map(|m| m.median).unwrap_or(f64::NAN);
    let last = curve.medians.last().map(|m| m.median).unwrap_or(f64::NAN);
    if !(last <= first) {
        return Err(GviError::ContractViolation(format!(
            "concentration: median mass rose from {first} to {last}"
        )));
    }
    if !(last <= 0.01) {
        return Err(GviError::ContractViolation(format!(
            "concentration: final median mass {last} exceeds 0.01"
        )));
    }
    Ok(())
}

fn check_masses(masses: impl Iterator<Item = f64>) -> Result<()> {
    for m in masses {
        if !(0.0..=1.0).contains(&m) {
            return Err(GviError::ContractViolation(format!("recorded mass {m} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Posterior mass of `N_eps_n` along the schedule.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<RateCurve> {
    cfg.validate()?;
    cfg.eps.validate()?;
    let limit = cfg.limit_loss()?;
    let results = map_tasks(cfg, |seed, n| {
        let (p, r) = solve_task(cfg, seed, n)?;
        let eps_n = cfg.eps.at(n);
        let (lo, hi) = limit.n_eps_interval(eps_n)?;
        let slack = RStarRegion::of(&p).map(|reg| reg.slack).unwrap_or(f64::INFINITY);
        let row = RateRow {
            n,
            eps_n,
            mass: r.posterior.mass_on_interval(lo, hi),
            slack,
            objective: r.objective,
            seed,
        };
        Ok((row, excess_ratio(&p.loss, lo, hi, eps_n)?))
    })?;
    let last_n = *cfg.n_schedule.last().expect("validated nonempty");
    let mut ratios: Vec<f64> = results.iter().filter(|(r, _)| r.n == last_n).map(|(_, c)| *c).collect();
    let rate_constant = median(&mut ratios);
    let rows: Vec<RateRow> = results.into_iter().map(|(r, _)| r).collect();
    let medians = medians_by_n(&cfg.n_schedule, &rows, |r| (r.n, r.mass));
    Ok(RateCurve {
        rows,
        medians,
        rate_constant,
    })
}

/// `(inf_{theta not in [lo, hi]} L_n - L_n(Theta)) / eps`.
fn excess_ratio(loss: &LossModel, lo: f64, hi: f64, eps: f64) -> Result<f64> {
    let all = loss.inf_loss(&ThetaSet::whole_line())?;
    let outside = loss
        .inf_loss(&ThetaSet::interval(f64::NEG_INFINITY, lo))?
        .min(loss.inf_loss(&ThetaSet::interval(hi, f64::INFINITY))?);
    Ok((outside - all) / eps)
}

/// Rates contract: medians nondecreasing from `monotone_from` (default: the
/// first quartile of the schedule), and at least 0.95 at the largest n when
/// `a <= 1/2`.
pub fn check_rates_contract(curve: &RateCurve, a: f64, monotone_from: Option<usize>) -> Result<()> {
    check_masses(curve.rows.iter().map(|r| r.mass))?;
    if let Some(r) = curve.rows.iter().find(|r| !r.objective.is_finite()) {
        return Err(GviError::ContractViolation(format!("non-finite objective at n = {}", r.n)));
    }
    let start_n = monotone_from.unwrap_or_else(|| curve.medians[curve.medians.len() / 4].n);
    let tail: Vec<&MedianRow> = curve.medians.iter().filter(|m| m.n >= start_n).collect();
    for w in tail.windows(2) {
        if w[1].median < w[0].median {
            return Err(GviError::ContractViolation(format!(
                "rates: median mass fell from {} at n = {} to {} at n = {}",
                w[0].median, w[0].n, w[1].median, w[1].n
            )));
        }
    }
    let last = curve.medians.last().map(|m| m.median).unwrap_or(f64::NAN);
    if a <= 0.5 && !(last >= 0.95) {
        return Err(GviError::ContractViolation(format!(
            "rates: final median mass {last} below 0.95"
        )));
    }
    Ok(())
}

/// `n eps_n beta(n) / M(n)` along the schedule, with `M(n)` the effective bound.
pub fn schedule_ratio(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let base = cfg
        .divergence
        .bound()
        .ok_or_else(|| GviError::UnboundedDivergence(cfg.divergence.name()))?;
    cfg.n_schedule
        .iter()
        .map(|&n| {
            let m = base * cfg.divergence.scale(n) * cfg.schedules.bound.positive_at(n, "M")?;
            let beta = cfg.beta * cfg.schedules.beta.positive_at(n, "beta")?;
            Ok(n as f64 * cfg.eps.at(n) * beta / m)
        })
        .collect()
}

/// Rates under `n`-dependent `M(n)` and `beta(n)`. The ratio
/// `n eps_n beta(n) / M(n)` must grow strictly along the schedule.
pub fn run_schedule(cfg: &ExperimentConfig) -> Result<RateCurve> {
    cfg.validate()?;
    cfg.eps.validate()?;
    let ratio = schedule_ratio(cfg)?;
    if let Some(i) = (1..ratio.len()).find(|&i| ratio[i] <= ratio[i - 1]) {
        return Err(GviError::ScheduleViolation(format!(
            "n eps_n beta(n) / M(n) does not grow: {} at n = {} then {} at n = {}",
            ratio[i - 1],
            cfg.n_schedule[i - 1],
            ratio[i],
            cfg.n_schedule[i]
        )));
    }
    run_rates(cfg)
}

/// Bayes versus GVI posteriors as the prior mean moves away from the data.
/// Uses the largest n of the schedule and the first seed.
pub fn run_bayes_comparison(cfg: &ExperimentConfig, offsets: &[f64], sigma_pi: f64) -> Result<Vec<ComparisonRow>> {
    cfg.validate()?;
    if cfg.family != Family::Gaussian {
        return Err(GviError::InvalidProblem("the Bayes comparison runs on the Gaussian family".into()));
    }
    if cfg.divergence.bound().is_none() {
        return Err(GviError::UnboundedDivergence(cfg.divergence.name()));
    }
    let n = *cfg.n_schedule.last().expect("validated nonempty");
    let data = cfg.dataset(cfg.seeds[0], n);
    let xbar = data.mean();
    let radius = 2.0 / n as f64 + sigma_pi * sigma_pi;
    offsets
        .par_iter()
        .map(|&off| {
            let mu_pi = xbar + off;
            let prior = GaussianMeasure::new(mu_pi, sigma_pi * sigma_pi)?;
            let bayes = bayes_posterior(&data, &prior, cfg.sigma_p)?;
            let p = cfg.with_prior(prior.into()).problem(data.clone())?;
            let gvi = solve(&p)?;
            Ok(ComparisonRow {
                mu_pi,
                bayes_mean: bayes.mean(),
                gvi_mean: gvi.posterior.mean(),
                bayes_in_rstar: is_in_rstar(&p, &bayes.into())?.inside,
                gvi_in_rstar: gvi.in_rstar == Some(true),
                prior_ball_ok: (mu_pi - xbar).abs() <= radius,
            })
        })
        .collect()
}

/// Every GVI posterior lies in the region; at n >= 10 some Bayes posterior
/// with the prior mean outside the ball does not.
pub fn check_comparison_contract(rows: &[ComparisonRow], n: usize) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| !r.gvi_in_rstar) {
        return Err(GviError::ContractViolation(format!(
            "GVI posterior outside R*_n for prior mean {}",
            r.mu_pi
        )));
    }
    let outside: Vec<&ComparisonRow> = rows.iter().filter(|r| !r.prior_ball_ok).collect();
    if n >= 10 && !outside.is_empty() && outside.iter().all(|r| r.bayes_in_rstar) {
        return Err(GviError::ContractViolation(
            "every Bayes posterior stayed in R*_n despite prior means outside the ball".into(),
        ));
    }
    Ok(())
}

/// KL-regularised posteriors: mass of `A` and `KL(Q_n : prior) / n`.
pub fn run_unbounded_kl(cfg: &ExperimentConfig, region: (f64, f64)) -> Result<UnboundedCurve> {
    cfg.validate()?;
    if !matches!(cfg.divergence.kind, DivergenceKind::Kl) {
        return Err(GviError::InvalidProblem("the unbounded contrast uses the KL divergence".into()));
    }
    if let Measure::Gaussian(g) = &cfg.prior {
        if g.is_dirac() {
            return Err(GviError::PreconditionViolation(
                "the prior must charge a neighbourhood of theta0".into(),
            ));
        }
    }
    check_region(cfg, region)?;
    let rows = map_tasks(cfg, |seed, n| {
        let (p, r) = solve_task(cfg, seed, n)?;
        let div = p.divergence.evaluate(&r.posterior, &p.prior, n)?;
        Ok(UnboundedRow {
            n,
            seed,
            mass: r.posterior.mass_on_interval(region.0, region.1),
            div_over_n: div / n as f64,
        })
    })?;
    let masses = medians_by_n(&cfg.n_schedule, &rows, |r| (r.n, r.mass));
    let divs = medians_by_n(&cfg.n_schedule, &rows, |r| (r.n, r.div_over_n));
    let medians = masses
        .iter()
        .zip(&divs)
        .map(|(m, d)| UnboundedMedianRow {
            n: m.n,
            median_mass: m.median,
            median_div_over_n: d.median,
        })
        .collect();
    Ok(UnboundedCurve { rows, medians })
}

/// Both medians end at most 0.02, and `D / n` ends strictly below where it started.
pub fn check_unbounded_contract(curve: &UnboundedCurve) -> Result<()> {
    check_masses(curve.rows.iter().map(|r| r.mass))?;
    let (Some(first), Some(last)) = (curve.medians.first(), curve.medians.last()) else {
        return Err(GviError::ContractViolation("empty curve".into()));
    };
    if !(last.median_mass <= 0.02 && last.median_div_over_n <= 0.02) {
        return Err(GviError::ContractViolation(format!(
            "unbounded KL: final medians mass {} and D/n {} must both be at most 0.02",
            last.median_mass, last.median_div_over_n
        )));
    }
    if !(last.median_div_over_n < first.median_div_over_n) {
        return Err(GviError::ContractViolation("unbounded KL: D/n did not decrease".into()));
    }
    Ok(())
}

/// Final-n median rate mass for each prior in `priors`.
pub fn run_robustness(cfg: &ExperimentConfig, priors: &[Measure]) -> Result<Vec<RobustnessRow>> {
    priors
        .iter()
        .enumerate()
        .map(|(i, prior)| {
            let curve = run_rates(&cfg.with_prior(prior.clone()))?;
            Ok(RobustnessRow {
                prior_index: i,
                prior_mean: prior.mean(),
                final_median: curve.medians.last().map(|m| m.median).unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Final masses across priors differ by at most `tol`.
pub fn check_robustness_contract(rows: &[RobustnessRow], tol: f64) -> Result<()> {
    let lo = rows.iter().map(|r| r.final_median).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.final_median).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > tol {
        return Err(GviError::ContractViolation(format!(
            "robustness: final masses across priors span [{lo}, {hi}], more than {tol}"
        )));
    }
    Ok(())
}
