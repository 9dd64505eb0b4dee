//! Strict TOML configuration. Every key is read through [`Section`], which
//! records what was consumed so leftovers can be reported as unknown. Errors
//! are collected rather than returned one at a time.

use std::collections::BTreeSet;
use std::path::Path;

use gvi_core::problem::Schedule;
use gvi_core::{DiscreteMeasure, DivergenceSpec, Family, GaussianMeasure, Measure, Schedules};
use serde::Serialize;
use toml::{Table, Value};

/// Every accepted key: (key, default, meaning).
pub const KEYS: &[(&str, &str, &str)] = &[
    ("divergence", "\"kl\"", "kl, tv, hellinger, lecam or tv-sqrt-n"),
    ("beta", "1.0", "learning rate, must be > 0"),
    ("sigma_p", "1.0", "standard deviation of the Gaussian likelihood"),
    ("family", "\"gaussian\"", "gaussian or discrete"),
    ("grid", "none", "support of the discrete family (required when family = \"discrete\")"),
    ("prior.kind", "\"gaussian\"", "gaussian or discrete"),
    ("prior.mean", "0.0", "Gaussian prior mean"),
    ("prior.variance", "1.0", "Gaussian prior variance (0 gives a point mass)"),
    ("prior.grid", "none", "support of a discrete prior"),
    ("prior.weights", "uniform", "weights of a discrete prior"),
    ("schedules.bound.kind", "\"constant\"", "M(n) multiplier: constant, power or log"),
    ("schedules.bound.value", "1.0", "constant value"),
    ("schedules.bound.coef", "1.0", "power or log coefficient"),
    ("schedules.bound.exponent", "none", "power exponent"),
    ("schedules.beta.kind", "\"constant\"", "beta(n) multiplier, same keys as schedules.bound"),
    ("schedules.beta.value", "1.0", "constant value"),
    ("schedules.beta.coef", "1.0", "power or log coefficient"),
    ("schedules.beta.exponent", "none", "power exponent"),
    ("data.values", "none", "observations (solve, region); otherwise data is simulated"),
    ("data.theta0", "0.0", "mean of simulated observations"),
    ("data.sigma0", "1.0", "standard deviation of simulated observations"),
    ("data.n", "10", "number of simulated observations"),
    ("data.seed", "0", "seed of the simulated observations"),
    ("loss.kind", "\"nll\"", "nll (Gaussian negative log-likelihood of data) or table"),
    ("loss.grid", "none", "parameter values of a tabulated loss"),
    ("loss.values", "none", "loss values on loss.grid"),
    ("loss.n", "none", "sample size behind a tabulated loss"),
    ("experiment.theta0", "0.0", "true mean of the simulated data"),
    ("experiment.sigma0", "1.0", "true standard deviation of the simulated data"),
    ("experiment.n", "[10, 30, 100, 300, 1000, 3000, 10000]", "strictly increasing sample sizes"),
    ("experiment.seeds", "[0, 1, ..., 19]", "run seeds"),
    ("experiment.replicates", "1", "independent datasets per seed"),
    ("experiment.nested", "false", "use prefixes of one sample per seed"),
    ("experiment.eps_c", "1.0", "eps_n = eps_c * n^(-eps_a)"),
    ("experiment.eps_a", "0.5", "rate exponent in (0, 1)"),
    ("experiment.region", "none", "[lo, hi] for concentrate and unbounded"),
    ("experiment.offsets", "[0.0, 100.0]", "prior mean offsets from the sample mean (compare)"),
    ("experiment.sigma_pi", "1.0", "prior standard deviation (compare)"),
    ("experiment.monotone_from", "first quartile of n", "n from which rate medians must not fall"),
    ("experiment.priors", "[]", "extra priors for a robustness sweep (rates), tables with the prior.* keys"),
];

pub fn key_help() -> String {
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (TOML, unknown keys are rejected):\n");
    for (key, default, meaning) in KEYS {
        s.push_str(&format!("  {key:<width$}  default {default}: {meaning}\n"));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Region,
    Rates,
    Concentrate,
    Compare,
    Schedule,
    Unbounded,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Region => "region",
            Command::Rates => "rates",
            Command::Concentrate => "concentrate",
            Command::Compare => "compare",
            Command::Schedule => "schedule",
            Command::Unbounded => "unbounded",
        }
    }

    fn uses_data(self) -> bool {
        matches!(self, Command::Solve | Command::Region)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub command: &'static str,
    pub divergence: DivergenceSpec,
    pub beta: f64,
    pub sigma_p: f64,
    pub family: Family,
    pub prior: Measure,
    pub schedules: Schedules,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSpec {
    Values { values: Vec<f64> },
    Simulate { theta0: f64, sigma0: f64, n: usize, seed: u64 },
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossSpec {
    Nll,
    Table { grid: Vec<f64>, values: Vec<f64>, n: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment {
    pub theta0: f64,
    pub sigma0: f64,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub replicates: usize,
    pub nested: bool,
    pub eps_c: f64,
    pub eps_a: f64,
    pub region: Option<(f64, f64)>,
    pub offsets: Vec<f64>,
    pub sigma_pi: f64,
    pub monotone_from: Option<usize>,
    pub priors: Vec<Measure>,
}

/// Failure to load a configuration: every problem found, one per line.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

struct Section<'a> {
    prefix: String,
    table: Option<&'a Table>,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(prefix: impl Into<String>, table: Option<&'a Table>) -> Self {
        Self {
            prefix: prefix.into(),
            table,
            used: BTreeSet::new(),
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}{key}", self.prefix)
    }

    fn get(&mut self, key: &str) -> Option<&'a Value> {
        debug_assert!(
            self.prefix.contains('[') || KEYS.iter().any(|k| k.0 == self.path(key) || k.0.starts_with(&self.path(key))),
            "key {} missing from KEYS",
            self.path(key)
        );
        let (k, v) = self.table?.get_key_value(key)?;
        self.used.insert(k.as_str());
        Some(v)
    }

    fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    fn typed<T>(&mut self, errs: &mut Vec<String>, key: &str, what: &str, conv: impl Fn(&'a Value) -> Option<T>) -> Option<T> {
        let v = self.get(key)?;
        let out = conv(v);
        if out.is_none() {
            errs.push(format!("`{}`: expected {what}, found {}", self.path(key), show(v)));
        }
        out
    }

    fn f64(&mut self, errs: &mut Vec<String>, key: &str) -> Option<f64> {
        self.typed(errs, key, "a number", as_f64)
    }

    fn usize(&mut self, errs: &mut Vec<String>, key: &str) -> Option<usize> {
        self.typed(errs, key, "a nonnegative integer", as_usize)
    }

    fn u64(&mut self, errs: &mut Vec<String>, key: &str) -> Option<u64> {
        self.typed(errs, key, "a nonnegative integer", |v| v.as_integer().and_then(|i| u64::try_from(i).ok()))
    }

    fn bool(&mut self, errs: &mut Vec<String>, key: &str) -> Option<bool> {
        self.typed(errs, key, "true or false", Value::as_bool)
    }

    fn str(&mut self, errs: &mut Vec<String>, key: &str) -> Option<&'a str> {
        self.typed(errs, key, "a string", Value::as_str)
    }

    fn f64s(&mut self, errs: &mut Vec<String>, key: &str) -> Option<Vec<f64>> {
        self.typed(errs, key, "an array of numbers", |v| v.as_array()?.iter().map(as_f64).collect())
    }

    fn usizes(&mut self, errs: &mut Vec<String>, key: &str) -> Option<Vec<usize>> {
        self.typed(errs, key, "an array of nonnegative integers", |v| {
            v.as_array()?.iter().map(as_usize).collect()
        })
    }

    fn u64s(&mut self, errs: &mut Vec<String>, key: &str) -> Option<Vec<u64>> {
        self.typed(errs, key, "an array of nonnegative integers", |v| {
            v.as_array()?
                .iter()
                .map(|x| x.as_integer().and_then(|i| u64::try_from(i).ok()))
                .collect()
        })
    }

    fn table(&mut self, errs: &mut Vec<String>, key: &str) -> Option<&'a Table> {
        self.typed(errs, key, "a table", Value::as_table)
    }

    fn finish(self, errs: &mut Vec<String>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(k.as_str()) {
                    errs.push(format!("unknown key `{}{k}`", self.prefix));
                }
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_usize(v: &Value) -> Option<usize> {
    v.as_integer().and_then(|i| usize::try_from(i).ok())
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

pub fn load(path: &Path, command: Command) -> Result<Config, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
    parse(&text, command).map_err(|ConfigErrors(list)| {
        ConfigErrors(list.into_iter().map(|e| format!("{}: {e}", path.display())).collect())
    })
}

pub fn parse(text: &str, command: Command) -> Result<Config, ConfigErrors> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![e.to_string()]))?;
    let mut errs = Vec::new();
    let mut top = Section::new("", Some(&table));

    let divergence = match top.str(&mut errs, "divergence") {
        Some(name) => DivergenceSpec::from_name(name)
            .map_err(|e| errs.push(format!("`divergence`: {e}")))
            .ok(),
        None => Some(DivergenceSpec::kl()),
    };
    let beta = top.f64(&mut errs, "beta").unwrap_or(1.0);
    if !(beta > 0.0 && beta.is_finite()) {
        errs.push(format!("`beta` = {beta}: the learning rate must satisfy beta > 0 and be finite"));
    }
    let sigma_p = top.f64(&mut errs, "sigma_p").unwrap_or(1.0);
    if !(sigma_p > 0.0 && sigma_p.is_finite()) {
        errs.push(format!("`sigma_p` = {sigma_p}: must be > 0 and finite"));
    }
    let family = parse_family(&mut top, &mut errs);

    let prior_table = top.table(&mut errs, "prior");
    let prior = parse_prior(Section::new("prior.", prior_table), &mut errs);

    let sched_table = top.table(&mut errs, "schedules");
    let schedules = parse_schedules(Section::new("schedules.", sched_table), &mut errs);

    let data_table = top.table(&mut errs, "data");
    let loss_table = top.table(&mut errs, "loss");
    let exp_table = top.table(&mut errs, "experiment");

    let (data, loss, experiment) = if command.uses_data() {
        if exp_table.is_some() {
            errs.push(format!("section [experiment] is not used by `{}`", command.name()));
        }
        let loss = parse_loss(Section::new("loss.", loss_table), &mut errs);
        let data = match loss {
            LossSpec::Nll => Some(parse_data(Section::new("data.", data_table), &mut errs)),
            LossSpec::Table { .. } => {
                if data_table.is_some() {
                    errs.push("section [data] conflicts with loss.kind = \"table\"".into());
                }
                None
            }
        };
        (data, Some(loss), None)
    } else {
        for (name, t) in [("data", data_table), ("loss", loss_table)] {
            if t.is_some() {
                errs.push(format!("section [{name}] is not used by `{}`", command.name()));
            }
        }
        let exp = parse_experiment(Section::new("experiment.", exp_table), &mut errs);
        (None, None, Some(exp))
    };
    top.finish(&mut errs);

    let (Some(divergence), Some(family), Some(prior)) = (divergence, family, prior) else {
        return Err(ConfigErrors(errs));
    };
    let cfg = Config {
        command: command.name(),
        divergence,
        beta,
        sigma_p,
        family,
        prior,
        schedules,
        data,
        loss,
        experiment,
    };
    check_command(&cfg, command, &mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errs))
    }
}

fn parse_family(top: &mut Section, errs: &mut Vec<String>) -> Option<Family> {
    let kind = top.str(errs, "family").unwrap_or("gaussian");
    let grid = top.f64s(errs, "grid");
    match kind {
        "gaussian" => {
            if grid.is_some() {
                errs.push("`grid` is only used with family = \"discrete\"".into());
            }
            Some(Family::Gaussian)
        }
        "discrete" => match grid {
            Some(grid) => match DiscreteMeasure::uniform(grid.clone()) {
                Ok(_) => Some(Family::Discrete { grid }),
                Err(e) => {
                    errs.push(format!("`grid`: {e}"));
                    None
                }
            },
            None => {
                errs.push("`grid` is required when family = \"discrete\"".into());
                None
            }
        },
        other => {
            errs.push(format!("`family`: unknown family \"{other}\" (expected gaussian or discrete)"));
            None
        }
    }
}

fn parse_prior(mut s: Section, errs: &mut Vec<String>) -> Option<Measure> {
    let kind = s.str(errs, "kind").unwrap_or("gaussian");
    let out = match kind {
        "gaussian" => {
            for key in ["grid", "weights"] {
                if s.has(key) {
                    s.get(key);
                    errs.push(format!("`{}` is only used by discrete priors", s.path(key)));
                }
            }
            let mean = s.f64(errs, "mean").unwrap_or(0.0);
            let variance = s.f64(errs, "variance").unwrap_or(1.0);
            GaussianMeasure::new(mean, variance)
                .map(Measure::from)
                .map_err(|e| errs.push(format!("`{}`: {e}", s.prefix.trim_end_matches('.'))))
                .ok()
        }
        "discrete" => {
            for key in ["mean", "variance"] {
                if s.has(key) {
                    s.get(key);
                    errs.push(format!("`{}` is only used by Gaussian priors", s.path(key)));
                }
            }
            let grid = s.f64s(errs, "grid");
            let weights = s.f64s(errs, "weights");
            match grid {
                None => {
                    errs.push(format!("`{}` is required for a discrete prior", s.path("grid")));
                    None
                }
                Some(grid) => {
                    let built = match weights {
                        Some(w) => DiscreteMeasure::new(grid, w),
                        None => DiscreteMeasure::uniform(grid),
                    };
                    built
                        .map(Measure::from)
                        .map_err(|e| errs.push(format!("`{}`: {e}", s.prefix.trim_end_matches('.'))))
                        .ok()
                }
            }
        }
        other => {
            errs.push(format!(
                "`{}`: unknown prior kind \"{other}\" (expected gaussian or discrete)",
                s.path("kind")
            ));
            None
        }
    };
    s.finish(errs);
    out
}

fn parse_schedules(mut s: Section, errs: &mut Vec<String>) -> Schedules {
    let mut out = Schedules::default();
    for (key, slot) in [("bound", &mut out.bound), ("beta", &mut out.beta)] {
        let t = s.table(errs, key);
        let prefix = s.path(&format!("{key}."));
        if let Some(parsed) = parse_schedule(Section::new(prefix, t), errs) {
            *slot = parsed;
        }
    }
    s.finish(errs);
    out
}

fn parse_schedule(mut s: Section, errs: &mut Vec<String>) -> Option<Schedule> {
    s.table?;
    let kind = s.str(errs, "kind").unwrap_or("constant");
    let out = match kind {
        "constant" => Some(Schedule::Constant {
            value: s.f64(errs, "value").unwrap_or(1.0),
        }),
        "power" => {
            let coef = s.f64(errs, "coef").unwrap_or(1.0);
            match s.f64(errs, "exponent") {
                Some(exponent) => Some(Schedule::Power { coef, exponent }),
                None => {
                    errs.push(format!("`{}` is required for a power schedule", s.path("exponent")));
                    None
                }
            }
        }
        "log" => Some(Schedule::Log {
            coef: s.f64(errs, "coef").unwrap_or(1.0),
        }),
        other => {
            errs.push(format!(
                "`{}`: unknown schedule \"{other}\" (expected constant, power or log)",
                s.path("kind")
            ));
            None
        }
    };
    if let Some(Schedule::Constant { value } | Schedule::Power { coef: value, .. } | Schedule::Log { coef: value }) = out {
        if !(value > 0.0 && value.is_finite()) {
            errs.push(format!("`{}`: coefficient {value} must be > 0", s.prefix.trim_end_matches('.')));
        }
    }
    s.finish(errs);
    out
}

fn parse_loss(mut s: Section, errs: &mut Vec<String>) -> LossSpec {
    let kind = s.str(errs, "kind").unwrap_or("nll");
    let out = match kind {
        "nll" => LossSpec::Nll,
        "table" => {
            let grid = s.f64s(errs, "grid");
            let values = s.f64s(errs, "values");
            let n = s.usize(errs, "n");
            for (key, missing) in [("grid", grid.is_none()), ("values", values.is_none()), ("n", n.is_none())] {
                if missing {
                    errs.push(format!("`loss.{key}` is required when loss.kind = \"table\""));
                }
            }
            let (grid, values, n) = (grid.unwrap_or_default(), values.unwrap_or_default(), n.unwrap_or(1));
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                errs.push(format!("`loss.values`: {v} is not finite, so the loss has no finite lower bound"));
            }
            if n == 0 {
                errs.push("`loss.n` must be at least 1".into());
            }
            LossSpec::Table { grid, values, n }
        }
        other => {
            errs.push(format!("`loss.kind`: unknown loss \"{other}\" (expected nll or table)"));
            LossSpec::Nll
        }
    };
    s.finish(errs);
    out
}

fn parse_data(mut s: Section, errs: &mut Vec<String>) -> DataSpec {
    let values = s.f64s(errs, "values");
    let theta0 = s.f64(errs, "theta0");
    let sigma0 = s.f64(errs, "sigma0");
    let n = s.usize(errs, "n");
    let seed = s.u64(errs, "seed");
    let out = match values {
        Some(values) => {
            if theta0.is_some() || sigma0.is_some() || n.is_some() || seed.is_some() {
                errs.push("`data.values` cannot be combined with the simulation keys data.theta0/sigma0/n/seed".into());
            }
            if values.is_empty() {
                errs.push("`data.values` is empty".into());
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                errs.push(format!("`data.values`: {v} is not finite"));
            }
            DataSpec::Values { values }
        }
        None => {
            let (theta0, sigma0, n) = (theta0.unwrap_or(0.0), sigma0.unwrap_or(1.0), n.unwrap_or(10));
            if !(sigma0 > 0.0 && sigma0.is_finite() && theta0.is_finite()) {
                errs.push(format!("`data`: need finite theta0 and sigma0 > 0, got ({theta0}, {sigma0})"));
            }
            if n == 0 {
                errs.push("`data.n` must be at least 1".into());
            }
            DataSpec::Simulate {
                theta0,
                sigma0,
                n,
                seed: seed.unwrap_or(0),
            }
        }
    };
    s.finish(errs);
    out
}

fn parse_experiment(mut s: Section, errs: &mut Vec<String>) -> Experiment {
    let theta0 = s.f64(errs, "theta0").unwrap_or(0.0);
    let sigma0 = s.f64(errs, "sigma0").unwrap_or(1.0);
    if !(sigma0 > 0.0 && sigma0.is_finite() && theta0.is_finite()) {
        errs.push(format!("`experiment`: need finite theta0 and sigma0 > 0, got ({theta0}, {sigma0})"));
    }
    let n = s
        .usizes(errs, "n")
        .unwrap_or_else(|| vec![10, 30, 100, 300, 1_000, 3_000, 10_000]);
    if n.is_empty() || n[0] == 0 || n.windows(2).any(|w| w[1] <= w[0]) {
        errs.push(format!("`experiment.n` = {n:?}: must be a nonempty, strictly increasing list of n >= 1"));
    }
    let seeds = s.u64s(errs, "seeds").unwrap_or_else(|| (0..20).collect());
    if seeds.is_empty() {
        errs.push("`experiment.seeds` is empty".into());
    }
    let replicates = s.usize(errs, "replicates").unwrap_or(1);
    if replicates == 0 {
        errs.push("`experiment.replicates` must be at least 1".into());
    }
    let nested = s.bool(errs, "nested").unwrap_or(false);
    let eps_c = s.f64(errs, "eps_c").unwrap_or(1.0);
    let eps_a = s.f64(errs, "eps_a").unwrap_or(0.5);
    let region = s.f64s(errs, "region").and_then(|r| match r[..] {
        [lo, hi] if lo < hi => Some((lo, hi)),
        _ => {
            errs.push(format!("`experiment.region` = {r:?}: expected [lo, hi] with lo < hi"));
            None
        }
    });
    let offsets = s.f64s(errs, "offsets").unwrap_or_else(|| vec![0.0, 100.0]);
    let sigma_pi = s.f64(errs, "sigma_pi").unwrap_or(1.0);
    if !(sigma_pi > 0.0 && sigma_pi.is_finite()) {
        errs.push(format!("`experiment.sigma_pi` = {sigma_pi}: must be > 0"));
    }
    let monotone_from = s.usize(errs, "monotone_from");
    let mut priors = Vec::new();
    if let Some(v) = s.get("priors") {
        match v.as_array() {
            Some(list) => {
                for (i, item) in list.iter().enumerate() {
                    let prefix = format!("experiment.priors[{i}].");
                    match item.as_table() {
                        Some(t) => priors.extend(parse_prior(Section::new(prefix, Some(t)), errs)),
                        None => errs.push(format!("`{}`: expected a table", prefix.trim_end_matches('.'))),
                    }
                }
            }
            None => errs.push("`experiment.priors`: expected an array of tables".into()),
        }
    }
    s.finish(errs);
    Experiment {
        theta0,
        sigma0,
        n,
        seeds,
        replicates,
        nested,
        eps_c,
        eps_a,
        region,
        offsets,
        sigma_pi,
        monotone_from,
        priors,
    }
}

/// Requirements that depend on the subcommand.
fn check_command(cfg: &Config, command: Command, errs: &mut Vec<String>) {
    let bounded = cfg.divergence.bound().is_some();
    let needs_bound = match command {
        Command::Region => Some("region requires a bounded divergence"),
        Command::Compare => Some("compare requires a bounded divergence"),
        Command::Schedule => Some("schedule requires a bounded divergence"),
        Command::Rates if cfg.experiment.as_ref().is_some_and(|e| !e.priors.is_empty()) => {
            Some("a robustness sweep (experiment.priors) requires a bounded divergence")
        }
        _ => None,
    };
    if let (Some(msg), false) = (needs_bound, bounded) {
        errs.push(format!(
            "`divergence` = \"{}\": {msg} (the divergence must be bounded above)",
            cfg.divergence.name()
        ));
    }
    if command == Command::Unbounded && bounded {
        errs.push(format!(
            "`divergence` = \"{}\": unbounded runs the KL divergence",
            cfg.divergence.name()
        ));
    }
    if let Some(LossSpec::Table { .. }) = cfg.loss {
        if cfg.family == Family::Gaussian {
            errs.push("loss.kind = \"table\" needs family = \"discrete\"".into());
        }
    }
    if let Some(e) = &cfg.experiment {
        if matches!(command, Command::Rates | Command::Schedule) {
            if !(e.eps_c > 0.0 && e.eps_c.is_finite()) {
                errs.push(format!("`experiment.eps_c` = {}: must be > 0", e.eps_c));
            }
            if !(e.eps_a > 0.0 && e.eps_a < 1.0) {
                errs.push(format!("`experiment.eps_a` = {}: must lie in (0, 1)", e.eps_a));
            }
        }
        if matches!(command, Command::Concentrate | Command::Unbounded) && e.region.is_none() {
            errs.push(format!("`experiment.region` is required by `{}`", command.name()));
        }
        if command == Command::Compare && cfg.family != Family::Gaussian {
            errs.push("compare runs on family = \"gaussian\"".into());
        }
        if command == Command::Compare && e.offsets.is_empty() {
            errs.push("`experiment.offsets` is empty".into());
        }
    }
}
