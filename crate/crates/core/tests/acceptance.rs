//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::time::{Duration, Instant};

use gvi_core::conjugate::bayes_posterior;
use gvi_core::divergences::{f_div_upper_bound, f_divergence, hellinger_sq, tv, ConvexGenerator, QuadratureSettings, UpperBound};
use gvi_core::experiments::{
    check_comparison_contract, check_rates_contract, run_bayes_comparison, run_concentration, run_rates,
    run_schedule, EpsSchedule, ExperimentConfig, RateCurve,
};
use gvi_core::persist::csv_string;
use gvi_core::region::{is_in_rstar, mixture_membership_check, rstar_gaussian_bounds};
use gvi_core::solve::solve;
use gvi_core::{
    Dataset, Dgp, DiscreteMeasure, DivergenceSpec, Family, GaussianMeasure, GviError, GviProblem, LossModel, Measure,
    Schedule, Schedules,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, center: f64, spread: f64) -> Dataset {
    Dataset::new((0..n).map(|_| center + spread * (rng.gen::<f64>() * 2.0 - 1.0)).collect()).unwrap()
}

fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_grid(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut g: Vec<f64> = Vec::with_capacity(k);
    let mut x = rng.gen_range(-3.0..0.0);
    for _ in 0..k {
        g.push(x);
        x += rng.gen_range(0.05..0.5);
    }
    g
}

/// KL over Gaussians reproduces the conjugate posterior.
fn closed_form_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let prior = GaussianMeasure::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.1..4.0)).unwrap();
        let sigma_p = rng.gen_range(0.5..3.0);
        let n = rng.gen_range(1..=50);
        let center = rng.gen_range(-3.0..3.0);
        let data = random_data(&mut rng, n, center, 2.0);
        let loss = LossModel::gaussian_nll(data.clone(), sigma_p).map_err(err)?;
        let p = GviProblem::new(loss, prior.into(), DivergenceSpec::kl(), 1.0, Family::Gaussian).map_err(err)?;
        let r = solve(&p).map_err(err)?;
        let q = r.posterior.as_gaussian().ok_or("non-Gaussian posterior")?;
        let exact = bayes_posterior(&data, &prior, sigma_p).map_err(err)?;
        let d = (q.mean() - exact.mean()).abs().max((q.variance() - exact.variance()).abs());
        worst = worst.max(d);
        ensure(r.converged, || format!("case {case}: solver did not converge"))?;
        ensure(d <= 1e-6, || format!("case {case}: deviation {d:e} from {exact:?}, got {q:?}"))?;
    }
    Ok(format!("50 configurations, max deviation {worst:.2e}"))
}

/// Discrete KL equals the Gibbs weights.
fn gibbs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let k = rng.gen_range(2..=51);
        let grid = random_grid(&mut rng, k);
        let values: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..5.0)).collect();
        let n = rng.gen_range(1..=20);
        let beta = rng.gen_range(0.2..3.0);
        let prior_w = random_simplex(&mut rng, k);
        let loss = LossModel::table(grid.clone(), values.clone(), n).map_err(err)?;
        let prior = DiscreteMeasure::new(grid.clone(), prior_w.clone()).map_err(err)?;
        let p = GviProblem::new(loss, prior.into(), DivergenceSpec::kl(), beta, Family::Discrete { grid })
            .map_err(err)?;
        let r = solve(&p).map_err(err)?;
        let w = r.posterior.as_discrete().ok_or("non-grid posterior")?.weights().to_vec();
        let lmin = values.iter().copied().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = prior_w
            .iter()
            .zip(&values)
            .map(|(pi, l)| pi * (-beta * n as f64 * (l - lmin)).exp())
            .collect();
        let z: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(&raw) {
            let d = (a - b / z).abs();
            worst = worst.max(d);
            ensure(d <= 1e-7, || format!("case {case}: weight off by {d:e}"))?;
        }
    }
    Ok(format!("50 grids, max deviation {worst:.2e}"))
}

fn bounded_divergence(i: usize) -> DivergenceSpec {
    match i % 3 {
        0 => DivergenceSpec::tv(),
        1 => DivergenceSpec::le_cam(),
        _ => DivergenceSpec::hellinger(),
    }
}

/// Converged bounded-divergence solves lie in the region, whatever the prior.
fn rstar_membership() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::INFINITY;
    let mut converged = 0;
    for case in 0..200 {
        let div = bounded_divergence(case);
        let singular = case % 10 == 0;
        let beta = rng.gen_range(0.2..5.0);
        let n = rng.gen_range(1..=200);
        let sigma_p = rng.gen_range(0.5..2.0);
        let center = rng.gen_range(-2.0..2.0);
        let data = random_data(&mut rng, n, center, 3.0);
        let gaussian_family = case % 2 == 0;
        let prior: Measure = if singular {
            // supported on [100, 101], disjoint from every data region used here
            let grid: Vec<f64> = (0..11).map(|i| 100.0 + 0.1 * i as f64).collect();
            DiscreteMeasure::uniform(grid).unwrap().into()
        } else if gaussian_family {
            GaussianMeasure::new(rng.gen_range(-1e3..1e3) * rng.gen::<f64>().powi(3), rng.gen_range(0.01..10.0))
                .unwrap()
                .into()
        } else {
            let k = rng.gen_range(3..15);
            let grid = random_grid(&mut rng, k);
            DiscreteMeasure::new(grid.clone(), random_simplex(&mut rng, k)).unwrap().into()
        };
        let family = if gaussian_family {
            Family::Gaussian
        } else {
            let k = rng.gen_range(3..30);
            Family::Discrete {
                grid: random_grid(&mut rng, k),
            }
        };
        let loss = LossModel::gaussian_nll(data, sigma_p).map_err(err)?;
        let p = GviProblem::new(loss, prior, div, beta, family).map_err(err)?;
        let r = solve(&p).map_err(|e| format!("case {case}: {e}"))?;
        if !r.converged {
            continue;
        }
        converged += 1;
        let m = is_in_rstar(&p, &r.posterior).map_err(err)?;
        worst = worst.min(m.margin);
        ensure(m.margin >= -1e-8, || format!("case {case}: margin {:e}", m.margin))?;
    }
    ensure(converged == 200, || format!("only {converged} of 200 solves converged"))?;
    Ok(format!("200 problems (20 with singular priors), min margin {worst:.3e}"))
}

/// Brute-force membership scan against the closed-form cross-sections.
fn region_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let step = 0.01;
    for case in 0..10 {
        let div = if case % 2 == 0 {
            DivergenceSpec::tv()
        } else {
            DivergenceSpec::le_cam()
        };
        let m_bound = div.bound().unwrap();
        let beta = rng.gen_range(0.5..3.0);
        let n = rng.gen_range(2..=20);
        let sigma_p = if case < 5 { 1.0 } else { rng.gen_range(0.5..1.5) };
        let center = rng.gen_range(-2.0..2.0);
        let data = random_data(&mut rng, n, center, 1.5);
        let bounds = rstar_gaussian_bounds(&data, sigma_p, m_bound, beta).map_err(err)?;
        let loss = LossModel::gaussian_nll(data.clone(), sigma_p).map_err(err)?;
        let p = GviProblem::new(loss, GaussianMeasure::standard().into(), div, beta, Family::Gaussian)
            .map_err(err)?;
        let radius = bounds.budget.sqrt();
        let xbar = data.mean();
        let mus: Vec<f64> = (0..)
            .map(|i| xbar - radius - 0.3 + i as f64 * step)
            .take_while(|&mu| mu <= xbar + radius + 0.3)
            .collect();
        let sigmas: Vec<f64> = (0..).map(|i| i as f64 * step).take_while(|&s| s <= radius + 0.3).collect();
        let mut inside = vec![vec![false; mus.len()]; sigmas.len()];
        for (i, &s) in sigmas.iter().enumerate() {
            for (j, &mu) in mus.iter().enumerate() {
                let q = GaussianMeasure::new(mu, s * s).unwrap();
                inside[i][j] = is_in_rstar(&p, &q.into()).map_err(err)?.inside;
            }
        }
        for (i, &s) in sigmas.iter().enumerate() {
            let r = bounds.mean_radius(s);
            let hits: Vec<f64> = (0..mus.len()).filter(|&j| inside[i][j]).map(|j| mus[j]).collect();
            match (hits.first(), hits.last()) {
                (Some(lo), Some(hi)) => {
                    ensure((lo - (xbar - r)).abs() <= step && (hi - (xbar + r)).abs() <= step, || {
                        format!("case {case}, sigma {s}: scan [{lo}, {hi}] vs radius {r}")
                    })?;
                }
                _ => ensure(r <= step, || format!("case {case}, sigma {s}: empty scan but radius {r}"))?,
            }
        }
        for (j, &mu) in mus.iter().enumerate() {
            let cap = bounds.var_cap(mu).sqrt();
            let top = (0..sigmas.len()).rev().find(|&i| inside[i][j]).map(|i| sigmas[i]);
            match top {
                Some(t) => ensure((t - cap).abs() <= step, || format!("case {case}, mu {mu}: sd {t} vs cap {cap}"))?,
                None => ensure(cap <= step, || format!("case {case}, mu {mu}: empty column but cap {cap}"))?,
            }
        }
    }
    Ok("10 configurations agree within one grid step".into())
}

/// Bounds of TV, Hellinger and Le Cam, and the Cichocki bound.
fn divergence_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let settings = QuadratureSettings::default();
    let lecam = ConvexGenerator::le_cam();
    let mut max_lecam: f64 = 0.0;
    for case in 0..1000 {
        let a: Measure = GaussianMeasure::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.01..9.0)).unwrap().into();
        let b: Measure = GaussianMeasure::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.01..9.0)).unwrap().into();
        let t = tv(&a, &b);
        let h = hellinger_sq(&a, &b);
        let l = f_divergence(&lecam, &a, &b, &settings).map_err(err)?;
        max_lecam = max_lecam.max(l);
        ensure((0.0..=1.0).contains(&t), || format!("pair {case}: tv {t}"))?;
        ensure(h <= t + 1e-8, || format!("pair {case}: hellinger {h} > tv {t}"))?;
        ensure(l <= 2.0, || format!("pair {case}: le cam {l}"))?;
    }
    let dirac: Measure = GaussianMeasure::dirac(0.3).into();
    let atomless: Measure = GaussianMeasure::new(0.3, 1.0).unwrap().into();
    ensure(tv(&dirac, &atomless) == 1.0, || "tv of Dirac vs atomless is not 1".into())?;
    let ub = f_div_upper_bound(&lecam).map_err(err)?;
    let ub = ub.finite().ok_or("le cam bound reported infinite")?;
    ensure((ub - 2.0).abs() <= 1e-6, || format!("le cam bound {ub}"))?;
    let kl = f_div_upper_bound(&ConvexGenerator::kl()).map_err(err)?;
    ensure(kl == UpperBound::Infinite, || format!("KL bound {kl:?}"))?;
    Ok(format!("1000 pairs, max le cam {max_lecam:.6}, le cam bound {ub:.9}"))
}

fn base_config(prior: Measure, divergence: DivergenceSpec, a: f64) -> ExperimentConfig {
    ExperimentConfig {
        dgp: Dgp::new(0.0, 1.0).unwrap(),
        sigma_p: 1.0,
        prior,
        divergence,
        beta: 1.0,
        family: Family::Gaussian,
        schedules: Schedules::default(),
        n_schedule: vec![10, 30, 100, 300, 1_000, 3_000, 10_000],
        eps: EpsSchedule { c: 1.0, a },
        seeds: (0..20).collect(),
        replicates: 1,
        nested: false,
    }
}

fn far_prior() -> Measure {
    GaussianMeasure::new(100.0, 1.0).unwrap().into()
}

fn concentration() -> Outcome {
    let mut cfg = base_config(far_prior(), DivergenceSpec::tv(), 0.5);
    cfg.n_schedule = vec![10, 100, 1_000, 10_000];
    let curve = run_concentration(&cfg, (2.0, 3.0)).map_err(err)?;
    let last = curve.medians.last().unwrap();
    ensure(last.n == 10_000 && last.median <= 0.01, || format!("median {} at n = {}", last.median, last.n))?;
    Ok(format!("median Q_n([2,3]) at n = 10^4: {}", last.median))
}

fn rates_pair(divergence: DivergenceSpec, a: f64, scheduled: bool) -> Result<(RateCurve, RateCurve), String> {
    let run = |prior: Measure| {
        let cfg = base_config(prior, divergence.clone(), a);
        if scheduled {
            run_schedule(&cfg)
        } else {
            run_rates(&cfg)
        }
    };
    let well = run(GaussianMeasure::standard().into()).map_err(err)?;
    let far = run(far_prior()).map_err(err)?;
    Ok((well, far))
}

fn rates_contract(well: &RateCurve, far: &RateCurve, a: f64) -> Outcome {
    check_rates_contract(well, a, Some(100)).map_err(|e| format!("prior N(0,1): {e}"))?;
    check_rates_contract(far, a, Some(100)).map_err(|e| format!("prior N(100,1): {e}"))?;
    let (x, y) = (well.medians.last().unwrap().median, far.medians.last().unwrap().median);
    ensure((x - y).abs() <= 0.02, || format!("final masses {x} and {y} differ by more than 0.02"))?;
    Ok(format!(
        "final medians {x} / {y}; rate constants {:.3} / {:.3}",
        well.rate_constant, far.rate_constant
    ))
}

fn schedules(rates: &(RateCurve, RateCurve)) -> Outcome {
    let summary = rates_contract(&rates.0, &rates.1, 0.25)?;
    let mut linear = base_config(far_prior(), DivergenceSpec::tv(), 0.25);
    linear.schedules.bound = Schedule::Power {
        coef: 1.0,
        exponent: 1.0,
    };
    match run_schedule(&linear) {
        Err(GviError::ScheduleViolation(_)) => Ok(format!("sqrt(n)-scaled TV: {summary}; M(n) = n rejected")),
        other => Err(format!("M(n) = n gave {other:?}")),
    }
}

fn bayes_contrast() -> Outcome {
    let mut cfg = base_config(far_prior(), DivergenceSpec::tv(), 0.5);
    cfg.n_schedule = vec![10];
    let radius = 2.0 / 10.0 + 1.0;
    let offsets = [0.0, 100.0, radius - 1e-9, radius + 1e-9, -(radius - 1e-9), -(radius + 1e-9)];
    let rows = run_bayes_comparison(&cfg, &offsets, 1.0).map_err(err)?;
    let far = &rows[1];
    ensure(!far.bayes_in_rstar && far.gvi_in_rstar, || format!("offset 100: {far:?}"))?;
    let flags: Vec<bool> = rows[2..].iter().map(|r| r.prior_ball_ok).collect();
    ensure(flags == [true, false, true, false], || format!("ball flags at the boundary: {flags:?}"))?;
    check_comparison_contract(&rows, 10).map_err(err)?;
    Ok(format!("Bayes mean {:.4} outside R*_n, GVI mean {:.4} inside", far.bayes_mean, far.gvi_mean))
}

/// Lower-loss measures win whatever the prior, and mixtures of posteriors stay in R*_n.
fn preference_and_mixture() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut pairs = 0usize;
    let mut mixtures = 0usize;
    for case in 0..200 {
        let k = rng.gen_range(3..25);
        let grid = random_grid(&mut rng, k);
        let n = rng.gen_range(1..=30);
        let beta = rng.gen_range(0.2..5.0);
        let values: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..3.0)).collect();
        let div = bounded_divergence(case);
        let m = div.bound().unwrap();
        let slack = m / (n as f64 * beta);
        let priors: Vec<Measure> = (0..10)
            .map(|i| match i {
                0 => DiscreteMeasure::uniform(grid.clone()).unwrap().into(),
                1 => DiscreteMeasure::uniform(vec![100.0, 100.5, 101.0]).unwrap().into(),
                2 => GaussianMeasure::new(rng.gen_range(-1e6..1e6), 1.0).unwrap().into(),
                3 => GaussianMeasure::standard().into(),
                _ => DiscreteMeasure::new(grid.clone(), random_simplex(&mut rng, k)).unwrap().into(),
            })
            .collect();
        let problems: Vec<GviProblem> = priors
            .iter()
            .map(|prior| {
                let loss = LossModel::table(grid.clone(), values.clone(), n).unwrap();
                GviProblem::new(loss, prior.clone(), div.clone(), beta, Family::Discrete { grid: grid.clone() })
            })
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let mut members: Vec<Measure> = (0..k)
            .map(|i| DiscreteMeasure::vertex(grid.clone(), i).unwrap().into())
            .collect();
        members.extend((0..12).map(|_| DiscreteMeasure::new(grid.clone(), random_simplex(&mut rng, k)).unwrap().into()));
        let js: Vec<f64> = members
            .iter()
            .map(|q| problems[0].loss.expected_loss(q).unwrap())
            .collect();
        let jmin = js.iter().copied().fold(f64::INFINITY, f64::min);
        let jmax = js.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = jmin + rng.gen::<f64>() * (jmax - jmin);
        for (pi, jp) in js.iter().enumerate() {
            for (qi, jq) in js.iter().enumerate() {
                if !(*jp <= c && *jq > c + slack) {
                    continue;
                }
                pairs += 1;
                for (k_prior, prob) in problems.iter().enumerate() {
                    let tp = prob.objective(&members[pi]).map_err(err)?.total;
                    let tq = prob.objective(&members[qi]).map_err(err)?.total;
                    ensure(tp < tq, || format!("case {case}, prior {k_prior}: T(P) = {tp} >= T(Q) = {tq}"))?;
                }
            }
        }
        let q1 = solve(&problems[0]).map_err(err)?.posterior;
        let q2 = solve(&problems[1]).map_err(err)?.posterior;
        for prob in &problems {
            for a in [0.0, 0.25, 0.5, 0.9, 1.0, rng.gen()] {
                mixtures += 1;
                let ok = mixture_membership_check(prob, &q1, &q2, a).map_err(err)?;
                ensure(ok, || format!("case {case}: mixture at a = {a} left R*_n"))?;
            }
        }
    }
    ensure(pairs > 0, || "no qualifying (P, Q) pairs were generated".into())?;
    Ok(format!("200 instances, {pairs} preference pairs x 10 priors, {mixtures} mixtures"))
}

fn determinism(first_csv: &str) -> Outcome {
    let cfg = base_config(far_prior(), DivergenceSpec::tv(), 0.5);
    let again = csv_string(&run_rates(&cfg).map_err(err)?.rows);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(err)?;
    let serial = pool.install(|| run_rates(&cfg).map(|c| csv_string(&c.rows))).map_err(err)?;
    ensure(again == first_csv, || "repeat run differs".into())?;
    ensure(serial == first_csv, || "single-threaded run differs".into())?;
    Ok(format!("{} bytes identical across 3 runs (one single-threaded)", first_csv.len()))
}

struct Report {
    failed: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if took > limit => Err(format!("{msg}; took {took:.1?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS {id:>2} {name}: {msg} ({took:.1?})"),
            Err(msg) => {
                self.failed += 1;
                println!("FAIL {id:>2} {name}: {msg} ({took:.1?})");
            }
        }
    }
}

fn main() {
    let mut report = Report { failed: 0 };
    let secs = Duration::from_secs;
    report.record(1, "closed-form agreement", secs(10), closed_form_agreement);
    report.record(2, "Gibbs oracle", secs(5), gibbs_oracle);
    report.record(3, "R*_n membership", secs(60), rstar_membership);
    report.record(4, "region geometry", secs(30), region_geometry);
    report.record(5, "divergence bounds", secs(20), divergence_bounds);
    report.record(6, "concentration", secs(300), concentration);

    let mut rates = None;
    report.record(7, "rates", secs(600), || {
        let pair = rates_pair(DivergenceSpec::tv(), 0.5, false)?;
        let msg = rates_contract(&pair.0, &pair.1, 0.5);
        rates = Some(csv_string(&pair.1.rows));
        msg
    });
    report.record(8, "schedules", secs(600), || {
        let pair = rates_pair(DivergenceSpec::tv_sqrt_n(), 0.25, true)?;
        schedules(&pair)
    });
    report.record(9, "Bayes contrast", secs(5), bayes_contrast);
    report.record(10, "preference and mixture", secs(10), preference_and_mixture);
    report.record(11, "determinism", secs(600), || match &rates {
        Some(csv) => determinism(csv),
        None => Err("criterion 7 produced no output".into()),
    });

    if report.failed > 0 {
        println!("{} acceptance criteria failed", report.failed);
        std::process::exit(1);
    }
    println!("all 11 acceptance criteria passed");
}
