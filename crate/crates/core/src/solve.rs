//! Minimisation of the GVI objective over either family.
//!
//! Gaussian family: multi-start BFGS in `(mu, ln sigma)` with central
//! difference gradients, plus a probe of the Dirac boundary `sigma = 0`.
//! Grid family: the Gibbs closed form under KL, an exact linear-programming
//! solution under total variation, and spectral projected gradient on the
//! simplex otherwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergences::{atom_term_derivative, DivergenceKind};
use crate::error::{GviError, Result};
use crate::measures::{DiscreteMeasure, GaussianMeasure, Measure};
use crate::problem::{prior_mass_at, Family, GviProblem};
use crate::region::is_in_rstar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteMethod {
    /// Closed forms where available, projected gradient otherwise.
    #[default]
    Auto,
    /// Always run projected gradient.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Objective improvement below which a step counts as stalled.
    pub ftol: f64,
    /// Gradient tolerance, relative to `max(1, |T|)`.
    pub gtol: f64,
    pub max_iter: usize,
    /// Projected-gradient stopping tolerance on the simplex.
    pub pg_tol: f64,
    pub discrete_method: DiscreteMethod,
    /// Starting weights for the simplex solver; defaults to the prior on the grid.
    pub discrete_start: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            ftol: 1e-8,
            gtol: 1e-8,
            max_iter: 10_000,
            pg_tol: 1e-10,
            discrete_method: DiscreteMethod::Auto,
            discrete_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub posterior: Measure,
    pub objective: f64,
    /// `n J(Q)`
    pub loss_part: f64,
    /// `D(Q : prior) / beta`
    pub div_part: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `None` when the divergence has no finite bound.
    pub in_rstar: Option<bool>,
}

pub fn solve(p: &GviProblem) -> Result<SolveResult> {
    solve_with(p, &SolverOptions::default())
}

pub fn solve_with(p: &GviProblem, opts: &SolverOptions) -> Result<SolveResult> {
    let (posterior, iterations, converged) = match &p.family {
        Family::Gaussian => solve_gaussian(p, opts)?,
        Family::Discrete { grid } => solve_discrete(p, grid, opts)?,
    };
    finish(p, posterior, iterations, converged)
}

fn finish(p: &GviProblem, posterior: Measure, iterations: usize, converged: bool) -> Result<SolveResult> {
    let v = p.objective(&posterior)?;
    let in_rstar = match p.bound() {
        Some(_) => Some(is_in_rstar(p, &posterior)?.inside),
        None => None,
    };
    Ok(SolveResult {
        posterior,
        objective: v.total,
        loss_part: v.loss_part,
        div_part: v.div_part,
        iterations,
        converged,
        in_rstar,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    mu: f64,
    sigma: f64,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Lower objective wins; near-ties go to the smaller sigma, then to the mean
/// closer to `xbar`.
fn better(a: &Candidate, b: &Candidate, xbar: f64) -> bool {
    let tol = 1e-12 * a.value.abs().max(b.value.abs()).max(1.0);
    if a.value < b.value - tol {
        true
    } else if a.value > b.value + tol {
        false
    } else if a.sigma != b.sigma {
        a.sigma < b.sigma
    } else {
        (a.mu - xbar).abs() < (b.mu - xbar).abs()
    }
}

fn pick_best(cands: impl IntoIterator<Item = Candidate>, xbar: f64) -> Option<Candidate> {
    cands
        .into_iter()
        .filter(|c| c.value.is_finite())
        .fold(None, |best, c| match best {
            Some(b) if !better(&c, &b, xbar) => Some(b),
            _ => Some(c),
        })
}

fn gaussian_objective(p: &GviProblem, mu: f64, sigma: f64) -> f64 {
    let Ok(q) = GaussianMeasure::new(mu, sigma * sigma) else {
        return f64::INFINITY;
    };
    match p.objective(&q.into()) {
        Ok(v) if v.total.is_finite() => v.total,
        _ => f64::INFINITY,
    }
}

fn prior_spread(prior: &Measure) -> f64 {
    match prior {
        Measure::Gaussian(g) => g.sd(),
        Measure::Discrete(d) => {
            let m = d.mean();
            d.grid()
                .iter()
                .zip(d.weights())
                .map(|(x, w)| w * (x - m) * (x - m))
                .sum::<f64>()
                .sqrt()
        }
    }
}

fn solve_gaussian(p: &GviProblem, opts: &SolverOptions) -> Result<(Measure, usize, bool)> {
    let xbar = p.loss.data().mean();
    let sigma_p = p
        .loss
        .sigma_p()
        .ok_or_else(|| GviError::InvalidProblem("Gaussian family needs the gaussian-nll loss".into()))?;
    let n = p.n() as f64;
    let prior_mean = p.prior.mean();
    let reach = 1f64
        .max(sigma_p)
        .max(prior_spread(&p.prior))
        .max((prior_mean - xbar).abs());
    let s_lo = (1e-7 * xbar.abs().max(1.0)).ln();
    let s_hi = (1e3 * reach).ln();
    let s0 = (sigma_p / n.sqrt()).ln().clamp(s_lo, s_hi);

    // keep sigma above the width at which quadrature treats a Gaussian as an atom
    let f = |x: [f64; 2]| {
        let sigma = x[1].exp().max(2e-9 * x[0].abs().max(1.0));
        gaussian_objective(p, x[0], sigma)
    };

    let mut starts = vec![[prior_mean, s0], [xbar, s0], [0.5 * (prior_mean + xbar), s0]];
    starts.dedup();
    let runs: Vec<Candidate> = starts
        .par_iter()
        .map(|x0| {
            let r = bfgs(&f, *x0, [f64::NEG_INFINITY, s_lo], [f64::INFINITY, s_hi], opts);
            Candidate {
                mu: r.x[0],
                sigma: r.x[1].exp().max(2e-9 * r.x[0].abs().max(1.0)),
                value: r.value,
                iterations: r.iterations,
                converged: r.converged,
            }
        })
        .collect();
    let iterations = runs.iter().map(|c| c.iterations).sum();
    let any_converged = runs.iter().any(|c| c.converged);

    let mut probes = vec![xbar];
    if p.prior.is_atomic() {
        probes.extend(p.prior.atoms().iter().map(|a| a.0));
    }
    let probe_cands = probes.into_iter().map(|mu| Candidate {
        mu,
        sigma: 0.0,
        value: gaussian_objective(p, mu, 0.0),
        iterations: 0,
        converged: any_converged,
    });

    let best = pick_best(runs.into_iter().chain(probe_cands), xbar).ok_or_else(|| {
        GviError::Infeasible("no starting point has a finite objective".into())
    })?;
    let q = GaussianMeasure::new(best.mu, best.sigma * best.sigma)?;
    Ok((q.into(), iterations, best.converged))
}

struct BfgsResult {
    x: [f64; 2],
    value: f64,
    iterations: usize,
    converged: bool,
}

fn clamp2(x: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [x[0].clamp(lo[0], hi[0]), x[1].clamp(lo[1], hi[1])]
}

fn fd_gradient<F: Fn([f64; 2]) -> f64>(f: &F, x: [f64; 2], fx: f64, step: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for i in 0..2 {
        let h = step * x[i].abs().max(1.0);
        let mut up = x;
        let mut dn = x;
        up[i] += h;
        dn[i] -= h;
        let (fu, fd) = (f(up), f(dn));
        g[i] = match (fu.is_finite(), fd.is_finite()) {
            (true, true) => (fu - fd) / (up[i] - dn[i]),
            (true, false) => (fu - fx) / (up[i] - x[i]),
            (false, true) => (fx - fd) / (x[i] - dn[i]),
            (false, false) => 0.0,
        };
    }
    g
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Box-constrained BFGS on two variables. Stops when the projected gradient
/// is below `gtol`, after three consecutive steps improving by less than
/// `ftol`, when no descent step exists at the difference resolution, or at
/// `max_iter` (not converged).
fn bfgs<F: Fn([f64; 2]) -> f64>(f: &F, x0: [f64; 2], lo: [f64; 2], hi: [f64; 2], opts: &SolverOptions) -> BfgsResult {
    let mut x = clamp2(x0, lo, hi);
    let mut fx = f(x);
    if !fx.is_finite() {
        return BfgsResult {
            x,
            value: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    const IDENTITY: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];
    let mut h = IDENTITY;
    let mut fresh = true;
    let mut g = fd_gradient(f, x, fx, opts.fd_step);
    let mut stalls = 0;
    for it in 0..opts.max_iter {
        let mut pg = g;
        for i in 0..2 {
            if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
                pg[i] = 0.0;
            }
        }
        let gnorm = pg[0].abs().max(pg[1].abs());
        if gnorm <= opts.gtol * fx.abs().max(1.0) {
            return BfgsResult {
                x,
                value: fx,
                iterations: it,
                converged: true,
            };
        }
        let mut d = [
            -(h[0][0] * pg[0] + h[0][1] * pg[1]),
            -(h[1][0] * pg[0] + h[1][1] * pg[1]),
        ];
        for i in 0..2 {
            if pg[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        if dot(d, pg) >= 0.0 {
            h = IDENTITY;
            fresh = true;
            d = [-pg[0], -pg[1]];
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let xn = clamp2([x[0] + t * d[0], x[1] + t * d[1]], lo, hi);
            let fnew = f(xn);
            let step = [xn[0] - x[0], xn[1] - x[1]];
            if fnew.is_finite() && fnew <= fx + 1e-4 * dot(g, step) && fnew <= fx {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if !fresh {
                h = IDENTITY;
                fresh = true;
                continue;
            }
            // no descent along the steepest direction at this resolution
            return BfgsResult {
                x,
                value: fx,
                iterations: it + 1,
                converged: true,
            };
        };
        let gn = fd_gradient(f, xn, fnew, opts.fd_step);
        let s = [xn[0] - x[0], xn[1] - x[1]];
        let y = [gn[0] - g[0], gn[1] - g[1]];
        let sy = dot(s, y);
        if sy > 1e-12 * dot(s, s).sqrt() * dot(y, y).sqrt() && sy > 0.0 {
            if fresh {
                let scale = sy / dot(y, y);
                h = [[scale, 0.0], [0.0, scale]];
            }
            let rho = 1.0 / sy;
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let mut a = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] = if i == j { 1.0 } else { 0.0 } - rho * s[i] * y[j];
                }
            }
            let mut ah = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    ah[i][j] = a[i][0] * h[0][j] + a[i][1] * h[1][j];
                }
            }
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = ah[i][0] * a[j][0] + ah[i][1] * a[j][1] + rho * s[i] * s[j];
                }
            }
            h = next;
            fresh = false;
        }
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if improvement < opts.ftol {
            stalls += 1;
            if stalls >= 3 {
                return BfgsResult {
                    x,
                    value: fx,
                    iterations: it + 1,
                    converged: true,
                };
            }
        } else {
            stalls = 0;
        }
    }
    BfgsResult {
        x,
        value: fx,
        iterations: opts.max_iter,
        converged: false,
    }
}

fn solve_discrete(p: &GviProblem, grid: &[f64], opts: &SolverOptions) -> Result<(Measure, usize, bool)> {
    let n = p.n() as f64;
    let lin: Vec<f64> = p.loss.losses_on(grid)?.iter().map(|l| n * l).collect();
    let prior: Vec<f64> = grid.iter().map(|&t| prior_mass_at(&p.prior, t)).collect();
    let weight = p.divergence_weight();
    let kind = &p.divergence.kind;
    match (kind, opts.discrete_method) {
        (DivergenceKind::Kl, DiscreteMethod::Auto) => {
            let w = gibbs_weights(&lin, &prior, weight)?;
            Ok((DiscreteMeasure::new(grid.to_vec(), w)?.into(), 0, true))
        }
        (DivergenceKind::Tv | DivergenceKind::ScaledTv { .. }, DiscreteMethod::Auto) => {
            let w = tv_weights(&lin, &prior, weight);
            Ok((DiscreteMeasure::new(grid.to_vec(), w)?.into(), 0, true))
        }
        _ => {
            let warm;
            let opts = if opts.discrete_method == DiscreteMethod::Auto && opts.discrete_start.is_none() {
                warm = SolverOptions {
                    discrete_start: kkt_weights(p, &lin, &prior, weight),
                    ..opts.clone()
                };
                &warm
            } else {
                opts
            };
            let spg = spg_weights(p, grid, &lin, &prior, weight, opts)?;
            let spg_measure: Measure = DiscreteMeasure::new(grid.to_vec(), spg.w)?.into();
            let (p_star, _) = p.loss.empirical_loss_minimiser(&p.family)?;
            let spg_value = p.objective(&spg_measure).map(|v| v.total).unwrap_or(f64::INFINITY);
            let star_value = p.objective(&p_star).map(|v| v.total).unwrap_or(f64::INFINITY);
            if star_value < spg_value {
                Ok((p_star, spg.iterations, true))
            } else if spg_value.is_finite() {
                Ok((spg_measure, spg.iterations, spg.converged))
            } else {
                Err(GviError::Infeasible("no grid measure has a finite objective".into()))
            }
        }
    }
}

/// `w_i ∝ prior_i exp(-lin_i / weight)`, normalised in log space.
fn gibbs_weights(lin: &[f64], prior: &[f64], weight: f64) -> Result<Vec<f64>> {
    let logw: Vec<f64> = lin
        .iter()
        .zip(prior)
        .map(|(l, v)| if *v > 0.0 { v.ln() - l / weight } else { f64::NEG_INFINITY })
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(GviError::Infeasible("prior puts no mass on the grid".into()));
    }
    let raw: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Stationary point of the separable objective `sum lin_i w_i + weight * sum w_i f(v_i / w_i)`
/// on the simplex, by bisection on the multiplier `lam` of `sum w = 1`: each
/// `w_i(lam)` solves `lin_i + weight * d_i(w) = lam` with `d_i` increasing.
/// Used to start projected gradient, which is slow on the badly conditioned
/// small weights of Hellinger-type terms.
fn kkt_weights(p: &GviProblem, lin: &[f64], prior: &[f64], weight: f64) -> Option<Vec<f64>> {
    let kind = &p.divergence.kind;
    let open = p.divergence.generator().at_zero().is_finite();
    let free: Vec<usize> = (0..lin.len()).filter(|&i| open || prior[i] > 0.0).collect();
    let slope = |i: usize, w: f64| lin[i] + weight * atom_term_derivative(kind, w, prior[i]);
    let at = |lam: f64| -> Vec<f64> {
        let mut w = vec![0.0; lin.len()];
        for &i in &free {
            if slope(i, 0.0) >= lam {
                continue;
            }
            if slope(i, 1.0) <= lam {
                w[i] = 1.0;
                continue;
            }
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if slope(i, m) < lam {
                    a = m;
                } else {
                    b = m;
                }
            }
            w[i] = 0.5 * (a + b);
        }
        w
    };
    let mut lo = free.iter().map(|&i| slope(i, 0.0)).fold(f64::INFINITY, f64::min);
    let mut hi = free.iter().map(|&i| slope(i, 1.0)).fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid).iter().sum::<f64>() < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // interpolate between the bracketing points so that a jump in some
    // w_i(lam) is split exactly
    let (wl, wh) = (at(lo), at(hi));
    let (sl, sh) = (wl.iter().sum::<f64>(), wh.iter().sum::<f64>());
    let t = if sh > sl { ((1.0 - sl) / (sh - sl)).clamp(0.0, 1.0) } else { 1.0 };
    let w: Vec<f64> = wl.iter().zip(&wh).map(|(a, b)| a + t * (b - a)).collect();
    let total: f64 = w.iter().sum();
    (total > 0.0).then(|| w.into_iter().map(|x| x / total).collect())
}

/// Exact minimiser of `sum lin_i w_i + weight * TV(w, prior)`: mass stays on
/// a node while its excess loss over the best node is at most `weight`,
/// everything else moves to the best node.
fn tv_weights(lin: &[f64], prior: &[f64], weight: f64) -> Vec<f64> {
    let best = lin
        .iter()
        .enumerate()
        .fold(0, |b, (i, l)| if *l < lin[b] { i } else { b });
    let mut w: Vec<f64> = lin
        .iter()
        .zip(prior)
        .map(|(l, v)| if l - lin[best] <= weight { *v } else { 0.0 })
        .collect();
    w[best] = 0.0;
    let kept: f64 = w.iter().sum();
    w[best] = (1.0 - kept).max(0.0);
    w
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let w: Vec<f64> = y.iter().map(|v| (v - theta).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

struct SpgResult {
    w: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Spectral projected gradient with a nonmonotone line search.
fn spg_weights(
    p: &GviProblem,
    grid: &[f64],
    lin: &[f64],
    prior: &[f64],
    weight: f64,
    opts: &SolverOptions,
) -> Result<SpgResult> {
    let gen = p.divergence.generator();
    let kind = &p.divergence.kind;
    let k = grid.len();
    // nodes the posterior may charge with a finite objective
    let free: Vec<usize> = if gen.at_zero().is_finite() {
        (0..k).collect()
    } else {
        (0..k).filter(|&i| prior[i] > 0.0).collect()
    };
    if free.is_empty() {
        return Err(GviError::Infeasible("prior puts no mass on the grid".into()));
    }
    let off_grid = (1.0 - prior.iter().sum::<f64>()).max(0.0) * gen.conjugate_at_zero();
    let lin_f: Vec<f64> = free.iter().map(|&i| lin[i]).collect();
    let v_f: Vec<f64> = free.iter().map(|&i| prior[i]).collect();
    let value = |w: &[f64]| -> f64 {
        let div: f64 = w.iter().zip(&v_f).map(|(wi, vi)| gen.term(*wi, *vi)).sum::<f64>()
            + off_grid
            + prior
                .iter()
                .enumerate()
                .filter(|(i, _)| !free.contains(i))
                .map(|(_, v)| gen.term(0.0, *v))
                .sum::<f64>();
        w.iter().zip(&lin_f).map(|(a, b)| a * b).sum::<f64>() + weight * div
    };
    let grad = |w: &[f64]| -> Vec<f64> {
        w.iter()
            .zip(&v_f)
            .zip(&lin_f)
            .map(|((wi, vi), li)| li + weight * atom_term_derivative(kind, *wi, *vi))
            .collect()
    };

    let start: Vec<f64> = match &opts.discrete_start {
        Some(s) if s.len() == k => free.iter().map(|&i| s[i].max(0.0)).collect(),
        Some(s) => {
            return Err(GviError::InvalidProblem(format!(
                "start has {} weights for a grid of {k}",
                s.len()
            )))
        }
        None if v_f.iter().sum::<f64>() > 0.0 => v_f.clone(),
        None => vec![1.0; free.len()],
    };
    let mut w = project_simplex(&start);
    let mut fw = value(&w);
    let mut g = grad(&w);
    let pg_norm = |w: &[f64], g: &[f64]| -> f64 {
        let y: Vec<f64> = w.iter().zip(g).map(|(a, b)| a - b).collect();
        project_simplex(&y)
            .iter()
            .zip(w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let mut alpha = (1.0 / pg_norm(&w, &g).max(1e-12)).clamp(1e-30, 1e30);
    const MEMORY: usize = 10;
    let mut history = vec![fw];
    let mut best = vec![fw];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if pg_norm(&w, &g) <= opts.pg_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let y: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        let d: Vec<f64> = project_simplex(&y).iter().zip(&w).map(|(a, b)| a - b).collect();
        let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand: Vec<f64> = w.iter().zip(&d).map(|(a, b)| (a + lambda * b).max(0.0)).collect();
            let fc = value(&cand);
            if fc.is_finite() && fc <= reference + 1e-4 * lambda * gd {
                next = Some((cand, fc));
                break;
            }
            lambda *= 0.5;
        }
        let Some((wn, fnew)) = next else {
            // the step is below floating-point resolution
            converged = pg_norm(&w, &g) <= opts.pg_tol.sqrt();
            break;
        };
        let gn = grad(&wn);
        let s: Vec<f64> = wn.iter().zip(&w).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-30, 1e30) } else { 1e30 };
        w = wn;
        fw = fnew;
        g = gn;
        history.push(fw);
        if history.len() > MEMORY {
            history.remove(0);
        }
        // no progress over a full window: the gradient test can be out of
        // reach when tiny weights amplify round-off
        best.push(best.last().copied().unwrap_or(f64::INFINITY).min(fw));
        if best.len() > MEMORY {
            let old = best[best.len() - 1 - MEMORY];
            if old - fw.min(old) < opts.ftol * fw.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    let total: f64 = w.iter().sum();
    let mut full = vec![0.0; k];
    for (slot, &i) in free.iter().enumerate() {
        full[i] = w[slot] / total;
    }
    Ok(SpgResult {
        w: full,
        iterations,
        converged,
    })
}

/// Exhaustive search over a `(mu, sigma)` grid for Gaussian-family problems.
/// Cells with infinite objective are skipped; `sigma = 0` is included when
/// the sigma range starts there.
pub fn solve_grid_oracle(
    p: &GviProblem,
    mu_range: (f64, f64),
    sigma_range: (f64, f64),
    step: f64,
) -> Result<SolveResult> {
    if p.family != Family::Gaussian {
        return Err(GviError::InvalidProblem("the grid oracle searches the Gaussian family".into()));
    }
    let finite = [mu_range.0, mu_range.1, sigma_range.0, sigma_range.1, step]
        .iter()
        .all(|v| v.is_finite());
    if !finite || step <= 0.0 || mu_range.0 > mu_range.1 || sigma_range.0 > sigma_range.1 || sigma_range.0 < 0.0 {
        return Err(GviError::InvalidProblem("oracle ranges must be finite and ordered, step > 0".into()));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        (0..=count).map(|k| lo + k as f64 * step).collect()
    };
    let mus = axis(mu_range);
    let sigmas = axis(sigma_range);
    let xbar = p.loss.data().mean();
    let rows: Vec<Option<Candidate>> = mus
        .par_iter()
        .map(|&mu| {
            pick_best(
                sigmas.iter().map(|&sigma| Candidate {
                    mu,
                    sigma,
                    value: gaussian_objective(p, mu, sigma),
                    iterations: 0,
                    converged: true,
                }),
                xbar,
            )
        })
        .collect();
    let best = pick_best(rows.into_iter().flatten(), xbar)
        .ok_or_else(|| GviError::Infeasible("every oracle cell has infinite objective".into()))?;
    let q = GaussianMeasure::new(best.mu, best.sigma * best.sigma)?;
    finish(p, q.into(), mus.len() * sigmas.len(), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::vb_kl_posterior;
    use crate::divergences::DivergenceSpec;
    use crate::losses::LossModel;
    use crate::measures::Dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nll_problem(values: Vec<f64>, prior: Measure, div: DivergenceSpec) -> GviProblem {
        let loss = LossModel::gaussian_nll(Dataset::new(values).unwrap(), 1.0).unwrap();
        GviProblem::new(loss, prior, div, 1.0, Family::Gaussian).unwrap()
    }

    fn table_problem(div: DivergenceSpec) -> GviProblem {
        let grid = vec![-1.0, 0.0, 1.0];
        let loss = LossModel::table(grid.clone(), vec![1.0, 0.0, 1.0], 1).unwrap();
        let prior: Measure = DiscreteMeasure::uniform(grid.clone()).unwrap().into();
        GviProblem::new(loss, prior, div, 1.0, Family::Discrete { grid }).unwrap()
    }

    #[test]
    fn kl_gaussian_matches_conjugate() {
        let data = vec![0.0, 1.0, 1.5, 1.5];
        let p = nll_problem(data.clone(), GaussianMeasure::standard().into(), DivergenceSpec::kl());
        let r = solve(&p).unwrap();
        let q = r.posterior.as_gaussian().unwrap();
        assert!(r.converged);
        assert!((q.mean() - 0.8).abs() < 1e-6, "{q:?}");
        assert!((q.variance() - 0.2).abs() < 1e-6, "{q:?}");
        let c = vb_kl_posterior(&Dataset::new(data).unwrap(), &GaussianMeasure::standard(), 1.0).unwrap();
        assert!((q.mean() - c.mean()).abs() < 1e-6);
        assert_eq!(r.in_rstar, None);
        assert!((r.objective - (r.loss_part + r.div_part)).abs() < 1e-9);
    }

    #[test]
    fn discrete_kl_is_gibbs() {
        let r = solve(&table_problem(DivergenceSpec::kl())).unwrap();
        let w = r.posterior.as_discrete().unwrap().weights().to_vec();
        let e = (-1f64).exp();
        let oracle = [e / (1.0 + 2.0 * e), 1.0 / (1.0 + 2.0 * e), e / (1.0 + 2.0 * e)];
        for (a, b) in w.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w[0] - 0.21194).abs() < 1e-5 && (w[1] - 0.57612).abs() < 1e-5);
    }

    #[test]
    fn discrete_kl_projected_gradient_agrees_from_random_starts() {
        let p = table_problem(DivergenceSpec::kl());
        let gibbs = solve(&p).unwrap();
        let gw = gibbs.posterior.as_discrete().unwrap().weights().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let start: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let opts = SolverOptions {
                discrete_method: DiscreteMethod::ProjectedGradient,
                discrete_start: Some(start),
                ..SolverOptions::default()
            };
            let r = solve_with(&p, &opts).unwrap();
            assert!(r.converged);
            for (a, b) in r.posterior.as_discrete().unwrap().weights().iter().zip(&gw) {
                assert!((a - b).abs() < 1e-7, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn tv_far_prior_posterior_sits_at_the_data() {
        let p = nll_problem(vec![0.0, 2.0], GaussianMeasure::new(100.0, 1.0).unwrap().into(), DivergenceSpec::tv());
        let r = solve(&p).unwrap();
        assert!((r.posterior.mean() - 1.0).abs() <= 1.0);
        assert_eq!(r.in_rstar, Some(true));
        assert!(r.converged);
        let oracle = solve_grid_oracle(&p, (-5.0, 105.0), (0.0, 5.0), 0.01).unwrap();
        assert!(oracle.objective >= r.objective - 1e-6);
        assert_eq!(oracle.in_rstar, Some(true));
    }

    #[test]
    fn oracle_on_a_single_cell_is_the_prior() {
        let prior = GaussianMeasure::new(0.5, 0.25).unwrap();
        let p = nll_problem(vec![0.0, 2.0], prior.into(), DivergenceSpec::hellinger());
        let r = solve_grid_oracle(&p, (0.5, 0.5), (0.5, 0.5), 0.1).unwrap();
        assert_eq!(r.objective, p.objective(&prior.into()).unwrap().total);
    }

    #[test]
    fn oracle_kl_close_to_closed_form() {
        let data = vec![0.0, 1.0, 1.5, 1.5];
        let p = nll_problem(data, GaussianMeasure::standard().into(), DivergenceSpec::kl());
        let r = solve_grid_oracle(&p, (0.5, 1.1), (0.3, 0.6), 0.005).unwrap();
        let exact = p.objective(&GaussianMeasure::new(0.8, 0.2).unwrap().into()).unwrap().total;
        assert!((r.objective - exact).abs() < 1e-4);
    }

    #[test]
    fn tv_greedy_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let k = 4;
            let lin: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..3.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum::<f64>() * rng.gen_range(1.0..1.5);
            let prior: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let weight = rng.gen_range(0.1..2.0);
            let cost = |w: &[f64]| {
                let off = 1.0 - prior.iter().sum::<f64>();
                let tv = 0.5 * (w.iter().zip(&prior).map(|(a, b)| (a - b).abs()).sum::<f64>() + off);
                w.iter().zip(&lin).map(|(a, b)| a * b).sum::<f64>() + weight * tv
            };
            let best = cost(&tv_weights(&lin, &prior, weight));
            // lattice search over the simplex at step 1/40
            let m = 40;
            let mut brute = f64::INFINITY;
            for a in 0..=m {
                for b in 0..=(m - a) {
                    for c in 0..=(m - a - b) {
                        let d = m - a - b - c;
                        let w = [a, b, c, d].map(|x| x as f64 / m as f64);
                        brute = brute.min(cost(&w));
                    }
                }
            }
            assert!(best <= brute + 1e-12, "{best} > {brute}");
        }
    }

    #[test]
    fn hellinger_and_lecam_grid_solves_are_in_the_region() {
        for div in [DivergenceSpec::hellinger(), DivergenceSpec::le_cam()] {
            let p = table_problem(div);
            let r = solve(&p).unwrap();
            assert!(r.converged);
            assert_eq!(r.in_rstar, Some(true));
        }
    }

    #[test]
    fn simplex_projection() {
        let w = project_simplex(&[0.2, 0.2, 0.2]);
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(project_simplex(&[5.0, 0.0, -1.0]), vec![1.0, 0.0, 0.0]);
        let w = project_simplex(&[0.6, 0.6]);
        assert_eq!(w, vec![0.5, 0.5]);
    }
}
