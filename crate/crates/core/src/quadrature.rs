//! Adaptive Simpson quadrature with error control.
//!
//! Integrands arising from pairs of Gaussian densities can be sharply peaked
//! relative to the integration window, so [`integrate_panels`] splits the
//! window at caller-supplied breakpoints before refining each panel.

use crate::error::{GviError, Result};

const MAX_DEPTH: u32 = 48;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let m = 0.5 * (lo + hi);
    let (fa, fm, fb) = (f(lo), f(m), f(hi));
    let panel = Panel {
        a: lo,
        b: hi,
        fa,
        fm,
        fb,
        whole: simpson(lo, hi, fa, fm, fb),
    };
    let mut ok = true;
    let value = refine(f, &panel, abs_tol, MAX_DEPTH, &mut ok);
    if !ok || !value.is_finite() {
        return Err(GviError::NonIntegrable { lo, hi, tol: abs_tol });
    }
    Ok(sign * value)
}

fn refine<F: Fn(f64) -> f64>(f: &F, p: &Panel, tol: f64, depth: u32, ok: &mut bool) -> f64 {
    if !*ok {
        return p.whole;
    }
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(p.a, m, p.fa, flm, p.fm);
    let right = simpson(m, p.b, p.fm, frm, p.fb);
    let both = left + right;
    let delta = both - p.whole;
    // roundoff floor: a few ulps of the panel estimate
    let floor = 64.0 * f64::EPSILON * both.abs();
    if delta.abs() <= 15.0 * tol.max(floor) {
        return both + delta / 15.0;
    }
    if depth == 0 || !(m > p.a && m < p.b) {
        *ok = false;
        return both + delta / 15.0;
    }
    let lp = Panel {
        a: p.a,
        b: m,
        fa: p.fa,
        fm: flm,
        fb: p.fm,
        whole: left,
    };
    let rp = Panel {
        a: m,
        b: p.b,
        fa: p.fm,
        fm: frm,
        fb: p.fb,
        whole: right,
    };
    refine(f, &lp, 0.5 * tol, depth - 1, ok) + refine(f, &rp, 0.5 * tol, depth - 1, ok)
}

/// Integrates `f` over `[lo, hi]`, refining each panel between consecutive
/// breakpoints separately. Breakpoints outside the window are ignored; the
/// tolerance is shared evenly across panels.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    abs_tol: f64,
) -> Result<f64> {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let panels = (cuts.len() - 1).max(1) as f64;
    let tol = abs_tol / panels;
    cuts.windows(2)
        .map(|w| adaptive_simpson(f, w[0], w[1], tol))
        .sum()
}
