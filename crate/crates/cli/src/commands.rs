//! Subcommand execution and output.

use std::fs;
use std::path::PathBuf;

use gvi_core::divergences::{f_div_upper_bound, UpperBound};
use gvi_core::experiments::{
    check_comparison_contract, check_concentration_contract, check_rates_contract, check_robustness_contract,
    check_unbounded_contract, run_bayes_comparison, run_concentration, run_rates, run_robustness, run_schedule,
    run_unbounded_kl, EpsSchedule, ExperimentConfig, RateCurve,
};
use gvi_core::persist::{self, Record};
use gvi_core::region::{is_in_rstar, rstar_gaussian_bounds, RStarRegion};
use gvi_core::{Dataset, Dgp, DivergenceSpec, Family, GaussianMeasure, GviError, GviProblem, LossModel, Measure, SolveResult};
use serde::{Deserialize, Serialize};

use crate::config::{Command, Config, DataSpec, LossSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Pretty,
}

/// A failed run and the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 1,
        }
    }

    fn from_core(e: GviError, contract: &str) -> Self {
        use GviError::*;
        match e {
            InvalidMeasure(_) | DegenerateMeasure(_) | GridMismatch(_) | EmptyData | EmptySet(_) | UnboundedDivergence(_)
            | FamilyClosure(_) | InvalidProblem(_) | Infeasible(_) | PreconditionViolation(_) | ScheduleViolation(_) => {
                Failure::Config(format!("configuration rejected by the {contract} requirements: {e}"))
            }
            ContractViolation(_) => Failure::Run(format!("{contract} contract violated: {e}")),
            other => Failure::Run(other.to_string()),
        }
    }
}

pub struct Output {
    pub dir: PathBuf,
    pub format: Format,
    pub fingerprint: String,
}

impl Output {
    pub fn new(dir: PathBuf, format: Format, cfg: &Config) -> Result<Self, Failure> {
        fs::create_dir_all(&dir).map_err(|e| Failure::Run(format!("{}: {e}", dir.display())))?;
        let echo = serde_json::to_string_pretty(cfg).expect("configuration serialises");
        let path = dir.join("config.json");
        fs::write(&path, echo + "\n").map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
        Ok(Self {
            dir,
            format,
            fingerprint: persist::fingerprint(cfg),
        })
    }

    fn write<R: Record>(&self, stem: &str, rows: &[R]) -> Result<PathBuf, Failure> {
        let (path, res) = match self.format {
            Format::Json => {
                let path = self.dir.join(format!("{stem}.json"));
                let res = persist::write_json(&path, &self.fingerprint, rows);
                (path, res)
            }
            Format::Csv | Format::Pretty => {
                let path = self.dir.join(format!("{stem}.csv"));
                let res = persist::write_csv(&path, rows);
                (path, res)
            }
        };
        res.map_err(|e| Failure::Run(e.to_string()))?;
        Ok(path)
    }

    fn announce(&self, paths: &[PathBuf]) {
        if self.format != Format::Pretty {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
    }
}

pub fn run(command: Command, cfg: &Config, out: &Output) -> Result<(), Failure> {
    match command {
        Command::Solve => solve(cfg, out),
        Command::Region => region(cfg, out),
        Command::Rates => rates(cfg, out),
        Command::Concentrate => concentrate(cfg, out),
        Command::Compare => compare(cfg, out),
        Command::Schedule => schedule(cfg, out),
        Command::Unbounded => unbounded(cfg, out),
    }
}

fn problem(cfg: &Config) -> Result<GviProblem, Failure> {
    let cfg_err = |e: GviError| Failure::Config(e.to_string());
    let loss = match cfg.loss.as_ref().expect("solve and region read [loss]") {
        LossSpec::Nll => {
            let data = match cfg.data.as_ref().expect("nll loss comes with [data]") {
                DataSpec::Values { values } => Dataset::new(values.clone()).map_err(cfg_err)?,
                DataSpec::Simulate { theta0, sigma0, n, seed } => {
                    Dataset::simulate(Dgp::new(*theta0, *sigma0).map_err(cfg_err)?, *n, *seed)
                }
            };
            LossModel::gaussian_nll(data, cfg.sigma_p).map_err(cfg_err)?
        }
        LossSpec::Table { grid, values, n } => LossModel::table(grid.clone(), values.clone(), *n).map_err(cfg_err)?,
    };
    GviProblem::with_schedules(
        loss,
        cfg.prior.clone(),
        cfg.divergence.clone(),
        cfg.beta,
        cfg.family.clone(),
        cfg.schedules,
    )
    .map_err(cfg_err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRow {
    pub family: String,
    pub mean: f64,
    pub variance: f64,
    pub objective: f64,
    pub loss_part: f64,
    pub div_part: f64,
    pub iterations: usize,
    pub converged: bool,
    pub in_rstar: Option<bool>,
}

impl Record for SolveRow {
    const HEADER: &'static [&'static str] = &[
        "family",
        "mean",
        "variance",
        "objective",
        "loss_part",
        "div_part",
        "iterations",
        "converged",
        "in_rstar",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRow {
    pub theta: f64,
    pub weight: f64,
}

impl Record for AtomRow {
    const HEADER: &'static [&'static str] = &["theta", "weight"];
}

fn variance(m: &Measure) -> f64 {
    match m {
        Measure::Gaussian(g) => g.variance(),
        Measure::Discrete(d) => {
            let mean = d.mean();
            d.grid().iter().zip(d.weights()).map(|(t, w)| w * (t - mean).powi(2)).sum()
        }
    }
}

fn describe(m: &Measure) -> String {
    match m {
        Measure::Gaussian(g) if g.is_dirac() => format!("point mass at {:.6}", g.mean()),
        Measure::Gaussian(g) => format!("N({:.6}, {:.6})", g.mean(), g.variance()),
        Measure::Discrete(d) => format!("grid measure, mean {:.6}, variance {:.6}", d.mean(), variance(m)),
    }
}

fn solve(cfg: &Config, out: &Output) -> Result<(), Failure> {
    let p = problem(cfg)?;
    let r: SolveResult = gvi_core::solve(&p).map_err(|e| Failure::from_core(e, "solver"))?;
    let row = SolveRow {
        family: match p.family {
            Family::Gaussian => "gaussian".into(),
            Family::Discrete { .. } => "discrete".into(),
        },
        mean: r.posterior.mean(),
        variance: variance(&r.posterior),
        objective: r.objective,
        loss_part: r.loss_part,
        div_part: r.div_part,
        iterations: r.iterations,
        converged: r.converged,
        in_rstar: r.in_rstar,
    };
    let mut paths = vec![out.write("solve", &[row])?];
    if let Measure::Discrete(d) = &r.posterior {
        let atoms: Vec<AtomRow> = d
            .grid()
            .iter()
            .zip(d.weights())
            .map(|(&theta, &weight)| AtomRow { theta, weight })
            .collect();
        paths.push(out.write("posterior", &atoms)?);
    }
    out.announce(&paths);
    if out.format == Format::Pretty {
        println!("posterior   {}", describe(&r.posterior));
        println!("objective   {:.9} = {:.9} (loss) + {:.9} (divergence)", r.objective, r.loss_part, r.div_part);
        println!("iterations  {}{}", r.iterations, if r.converged { "" } else { " (not converged)" });
        if let Some(inside) = r.in_rstar {
            println!("in R*_n     {inside}");
        }
    }
    if !r.converged {
        return Err(Failure::Run(format!(
            "solver did not converge after {} iterations",
            r.iterations
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub n: usize,
    pub bound: f64,
    pub beta: f64,
    pub j_star: f64,
    pub slack: f64,
    pub center: Option<f64>,
    pub budget: Option<f64>,
    pub posterior_margin: f64,
}

impl Record for RegionRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "bound",
        "beta",
        "j_star",
        "slack",
        "center",
        "budget",
        "posterior_margin",
    ];
}

fn region(cfg: &Config, out: &Output) -> Result<(), Failure> {
    let p = problem(cfg)?;
    let reg = RStarRegion::of(&p).map_err(|e| Failure::from_core(e, "region"))?;
    let bound = p.bound().expect("region checked for a bounded divergence");
    let gaussian = match (&p.family, p.loss.sigma_p()) {
        (Family::Gaussian, Some(sigma_p)) => Some(
            rstar_gaussian_bounds(p.loss.data(), sigma_p, bound, p.effective_beta())
                .map_err(|e| Failure::from_core(e, "region"))?,
        ),
        _ => None,
    };
    let r = gvi_core::solve(&p).map_err(|e| Failure::from_core(e, "solver"))?;
    let margin = is_in_rstar(&p, &r.posterior)
        .map_err(|e| Failure::from_core(e, "region"))?
        .margin;
    let row = RegionRow {
        n: p.n(),
        bound,
        beta: p.effective_beta(),
        j_star: reg.j_star,
        slack: reg.slack,
        center: gaussian.map(|g| g.center),
        budget: gaussian.map(|g| g.budget),
        posterior_margin: margin,
    };
    let path = out.write("region", std::slice::from_ref(&row))?;
    out.announce(&[path]);
    if out.format == Format::Pretty {
        println!("R*_n = {{Q : J(Q) <= {:.9} + {:.9}}}", row.j_star, row.slack);
        if let Some(g) = gaussian {
            println!(
                "Gaussian members: (mu - {:.6})^2 + sigma^2 <= {:.6}, mean half-width {:.6} at sigma = 0",
                g.center,
                g.budget,
                g.mean_radius(0.0)
            );
        }
        println!("GVI posterior {} has margin {:.9}", describe(&r.posterior), margin);
    }
    if !r.converged {
        return Err(Failure::Run(format!(
            "solver did not converge after {} iterations",
            r.iterations
        )));
    }
    Ok(())
}

fn experiment_config(cfg: &Config) -> ExperimentConfig {
    let e = cfg.experiment.as_ref().expect("experiment commands read [experiment]");
    ExperimentConfig {
        dgp: Dgp {
            theta0: e.theta0,
            sigma0: e.sigma0,
        },
        sigma_p: cfg.sigma_p,
        prior: cfg.prior.clone(),
        divergence: cfg.divergence.clone(),
        beta: cfg.beta,
        family: cfg.family.clone(),
        schedules: cfg.schedules,
        n_schedule: e.n.clone(),
        eps: EpsSchedule { c: e.eps_c, a: e.eps_a },
        seeds: e.seeds.clone(),
        replicates: e.replicates,
        nested: e.nested,
    }
}

fn print_medians(label: &str, medians: impl Iterator<Item = (usize, f64)>) {
    println!("{:>8}  {label}", "n");
    for (n, m) in medians {
        println!("{n:>8}  {m:.6}");
    }
}

fn rate_outputs(out: &Output, stem: &str, curve: &RateCurve) -> Result<Vec<PathBuf>, Failure> {
    Ok(vec![
        out.write(stem, &curve.rows)?,
        out.write(&format!("{stem}_median"), &curve.medians)?,
    ])
}

fn rates(cfg: &Config, out: &Output) -> Result<(), Failure> {
    let contract = "posterior rate";
    let ecfg = experiment_config(cfg);
    let e = cfg.experiment.as_ref().expect("experiment section");
    let curve = run_rates(&ecfg).map_err(|err| Failure::from_core(err, contract))?;
    let mut paths = rate_outputs(out, "rates", &curve)?;
    let robustness = if e.priors.is_empty() {
        None
    } else {
        let mut priors = vec![cfg.prior.clone()];
        priors.extend(e.priors.iter().cloned());
        let rows = run_robustness(&ecfg, &priors).map_err(|err| Failure::from_core(err, "prior robustness"))?;
        paths.push(out.write("robustness", &rows)?);
        Some(rows)
    };
    out.announce(&paths);
    if out.format == Format::Pretty {
        print_medians("median mass of N_eps_n", curve.medians.iter().map(|m| (m.n, m.median)));
        println!("estimated rate constant {:.6}", curve.rate_constant);
        if let Some(rows) = &robustness {
            for r in rows {
                println!("prior {} (mean {}): final median {:.6}", r.prior_index, r.prior_mean, r.final_median);
            }
        }
    }
    check_rates_contract(&curve, e.eps_a, e.monotone_from).map_err(|err| Failure::from_core(err, contract))?;
    if let Some(rows) = &robustness {
        check_robustness_contract(rows, 0.02).map_err(|err| Failure::from_core(err, "prior robustness"))?;
    }
    Ok(())
}

fn schedule(cfg: &Config, out: &Output) -> Result<(), Failure> {
    let contract = "parameter schedule";
    let ecfg = experiment_config(cfg);
    let e = cfg.experiment.as_ref().expect("experiment section");
    let curve = run_schedule(&ecfg).map_err(|err| Failure::from_core(err, contract))?;
    let paths = rate_outputs(out, "schedule", &curve)?;
    out.announce(&paths);
    if out.format == Format::Pretty {
        print_medians("median mass of N_eps_n", curve.medians.iter().map(|m| (m.n, m.median)));
    }
    check_rates_contract(&curve, e.eps_a, e.monotone_from).map_err(|err| Failure::from_core(err, contract))
}

fn concentrate(cfg: &Config, out: &Output) -> Result<(), Failure> {
    let contract = "concentration";
    let region = cfg.experiment.as_ref().and_then(|e| e.region).expect("region validated");
    let curve = run_concentration(&experiment_config(cfg), region).map_err(|err| Failure::from_core(err, contract))?;
    let paths = vec![
        out.write("concentration", &curve.rows)?,
        out.write("concentration_median", &curve.medians)?,
    ];
    out.announce(&paths);
    if out.format == Format::Pretty {
        print_medians(
            &format!("median mass of [{}, {}]", region.0, region.1),
            curve.medians.iter().map(|m| (m.n, m.median)),
        );
    }
    check_concentration_contract(&curve).map_err(|err| Failure::from_core(err, contract))
}

fn compare(cfg: &Config, out: &Output) -> Result<(), Failure> {
    let contract = "Bayes comparison";
    let e = cfg.experiment.as_ref().expect("experiment section");
    let rows = run_bayes_comparison(&experiment_config(cfg), &e.offsets, e.sigma_pi)
        .map_err(|err| Failure::from_core(err, contract))?;
    let path = out.write("comparison", &rows)?;
    out.announce(&[path]);
    if out.format == Format::Pretty {
        println!("{:>12} {:>12} {:>12}  bayes in R*  gvi in R*", "prior mean", "bayes mean", "gvi mean");
        for r in &rows {
            println!(
                "{:>12.4} {:>12.6} {:>12.6}  {:<11}  {}",
                r.mu_pi, r.bayes_mean, r.gvi_mean, r.bayes_in_rstar, r.gvi_in_rstar
            );
        }
    }
    let n = *e.n.last().expect("validated nonempty");
    check_comparison_contract(&rows, n).map_err(|err| Failure::from_core(err, contract))
}

fn unbounded(cfg: &Config, out: &Output) -> Result<(), Failure> {
    let contract = "unbounded-divergence concentration";
    let region = cfg.experiment.as_ref().and_then(|e| e.region).expect("region validated");
    let curve = run_unbounded_kl(&experiment_config(cfg), region).map_err(|err| Failure::from_core(err, contract))?;
    let paths = vec![
        out.write("unbounded", &curve.rows)?,
        out.write("unbounded_median", &curve.medians)?,
    ];
    out.announce(&paths);
    if out.format == Format::Pretty {
        println!("{:>8}  {:>12}  {:>12}", "n", "median mass", "median D/n");
        for m in &curve.medians {
            println!("{:>8}  {:>12.6}  {:>12.6}", m.n, m.median_mass, m.median_div_over_n);
        }
    }
    check_unbounded_contract(&curve).map_err(|err| Failure::from_core(err, contract))
}

/// `gvi divergence`: the bound of a divergence, or its value between two Gaussians.
pub fn divergence(kind: &str, check_bound: bool, pair: Option<(GaussianMeasure, GaussianMeasure)>) -> Result<(), Failure> {
    let spec = DivergenceSpec::from_name(kind).map_err(|e| Failure::Config(e.to_string()))?;
    if check_bound {
        let limit = f_div_upper_bound(&spec.generator()).map_err(|e| Failure::Run(e.to_string()))?;
        match (spec.bound(), limit) {
            (None, UpperBound::Infinite) => println!("inf"),
            (Some(m), UpperBound::Finite(l)) if (m - l).abs() <= 1e-6 => println!("{m}"),
            (declared, limit) => {
                return Err(Failure::Run(format!(
                    "declared bound {declared:?} disagrees with the limit f(0) + f*(0) = {limit:?}"
                )))
            }
        }
    }
    if let Some((q, p)) = pair {
        let v = spec
            .evaluate(&q.into(), &p.into(), 1)
            .map_err(|e| Failure::Run(e.to_string()))?;
        println!("{v}");
    }
    Ok(())
}

pub fn parse_gaussian(s: &str) -> Result<GaussianMeasure, String> {
    let (m, v) = s.split_once(',').ok_or("expected MEAN,VARIANCE")?;
    let m: f64 = m.trim().parse().map_err(|e| format!("mean: {e}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("variance: {e}"))?;
    GaussianMeasure::new(m, v).map_err(|e| e.to_string())
}
