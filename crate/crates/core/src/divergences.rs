//! Statistical divergences `D(Q : P)` between measures of either track.
//!
//! f-divergences follow the convention `D_f(Q : P) = E_Q[f(dP/dQ)]`, so the
//! KL divergence `KL(Q || P)` is generated by `f(u) = -ln u`. Pairs that are
//! mutually singular (an atomic measure against an atomless one) take the
//! value `f(0) + lim_{u -> 0} u f(1/u)`, the largest value the divergence can
//! reach.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GviError, Result};
use crate::measures::{standard_interval_mass, GaussianMeasure, Measure};
use crate::quadrature::integrate_panels;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Quadrature controls for divergences without a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    /// Half-width of the integration window in multiples of the widest standard deviation.
    pub support_padding: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            support_padding: 10.0,
        }
    }
}

/// Outcome of the Cichocki limit `lim_{u -> 0+} f(u) + u f(1/u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperBound {
    Finite(f64),
    Infinite,
}

impl UpperBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            UpperBound::Finite(v) => Some(v),
            UpperBound::Infinite => None,
        }
    }
}

/// Geometric-sequence limit of `g(u)` as `u -> 0+`, probing `u = 2^-k`.
///
/// A plateau is declared when consecutive values differ by less than `1e-9`,
/// divergence when a value exceeds `1e12`. Divergence slower than any power
/// (the logarithmic growth of the KL generator) never crosses `1e12` within 60
/// halvings, so a run of 20 increasing steps whose increments are not decaying
/// is also reported as divergent.
fn limit_at_zero<G: Fn(f64) -> f64>(g: G) -> Result<UpperBound> {
    const PLATEAU: f64 = 1e-9;
    const BLOW_UP: f64 = 1e12;
    let mut prev = g(0.5);
    let mut increments = Vec::with_capacity(60);
    for k in 2..=60 {
        let u = (-(k as f64)).exp2();
        let v = g(u);
        if v == f64::INFINITY || v > BLOW_UP {
            return Ok(UpperBound::Infinite);
        }
        if v.is_nan() {
            return Err(GviError::Inconclusive {
                last: prev,
                increment: f64::NAN,
            });
        }
        let inc = v - prev;
        if inc.abs() < PLATEAU {
            return Ok(UpperBound::Finite(v));
        }
        increments.push(inc);
        prev = v;
    }
    let k = increments.len();
    let recent = &increments[k - 20..];
    if recent.iter().all(|d| *d > 0.0) && increments[k - 1] >= 0.5 * increments[k - 21] {
        return Ok(UpperBound::Infinite);
    }
    Err(GviError::Inconclusive {
        last: prev,
        increment: increments[k - 1],
    })
}

/// A convex generator `f` with `f(1) = 0`.
#[derive(Clone)]
pub struct ConvexGenerator {
    name: String,
    f: RealFn,
    /// `t -> f(e^t)`, when a form that avoids overflow is known.
    f_log: Option<RealFn>,
    /// `f(0+)`.
    at_zero: f64,
    /// `lim_{u -> 0+} u f(1/u)`.
    conjugate_at_zero: f64,
}

impl fmt::Debug for ConvexGenerator {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt.debug_struct("ConvexGenerator")
            .field("name", &self.name)
            .field("at_zero", &self.at_zero)
            .field("conjugate_at_zero", &self.conjugate_at_zero)
            .finish()
    }
}

impl ConvexGenerator {
    /// Wraps a user-supplied generator. The boundary limits `f(0+)` and
    /// `lim u f(1/u)` are estimated numerically.
    pub fn new<F>(name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let f: RealFn = Arc::new(f);
        let one = f(1.0);
        if one.abs() > 1e-12 {
            return Err(GviError::InvalidProblem(format!("generator has f(1) = {one}, not 0")));
        }
        let at_zero = {
            let g = f.clone();
            match limit_at_zero(move |u| g(u)) {
                Ok(UpperBound::Finite(v)) => v,
                Ok(UpperBound::Infinite) => f64::INFINITY,
                Err(_) => f64::NAN,
            }
        };
        let conjugate_at_zero = {
            let g = f.clone();
            match limit_at_zero(move |u| u * g(1.0 / u)) {
                Ok(UpperBound::Finite(v)) => v,
                Ok(UpperBound::Infinite) => f64::INFINITY,
                Err(_) => f64::NAN,
            }
        };
        Ok(Self {
            name: name.into(),
            f,
            f_log: None,
            at_zero,
            conjugate_at_zero,
        })
    }

    fn builtin(name: &str, f: RealFn, f_log: Option<RealFn>, at_zero: f64, conjugate_at_zero: f64) -> Self {
        Self {
            name: name.to_string(),
            f,
            f_log,
            at_zero,
            conjugate_at_zero,
        }
    }

    /// `f(u) = -ln u`, generating `KL(Q || P)`.
    pub fn kl() -> Self {
        Self::builtin(
            "kl",
            Arc::new(|u: f64| -u.ln()),
            Some(Arc::new(|t: f64| -t)),
            f64::INFINITY,
            0.0,
        )
    }

    /// `f(u) = |u - 1| / 2`.
    pub fn total_variation() -> Self {
        Self::builtin("tv", Arc::new(|u: f64| 0.5 * (u - 1.0).abs()), None, 0.5, 0.5)
    }

    /// `f(u) = (sqrt(u) - 1)^2 / 2`, the half-normalised squared Hellinger distance.
    pub fn hellinger() -> Self {
        Self::builtin(
            "hellinger",
            Arc::new(|u: f64| {
                let r = u.sqrt() - 1.0;
                0.5 * r * r
            }),
            None,
            0.5,
            0.5,
        )
    }

    /// `f(u) = (u - 1)^2 / (u + 1)`.
    pub fn le_cam() -> Self {
        Self::builtin(
            "lecam",
            Arc::new(|u: f64| {
                let r = u - 1.0;
                r * r / (u + 1.0)
            }),
            None,
            1.0,
            1.0,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn at_zero(&self) -> f64 {
        self.at_zero
    }

    pub fn conjugate_at_zero(&self) -> f64 {
        self.conjugate_at_zero
    }

    /// Value on a mutually singular pair: `f(0) + lim u f(1/u)`.
    pub fn singular_value(&self) -> f64 {
        self.at_zero + self.conjugate_at_zero
    }

    fn eval_log(&self, t: f64) -> f64 {
        match &self.f_log {
            Some(g) => g(t),
            None => (self.f)(t.exp()),
        }
    }

    /// `q f(p / q)` for masses or densities given as logarithms.
    pub(crate) fn term_log(&self, lq: f64, lp: f64) -> f64 {
        let q_zero = lq == f64::NEG_INFINITY;
        let p_zero = lp == f64::NEG_INFINITY;
        match (q_zero, p_zero) {
            (true, true) => 0.0,
            (true, false) => scaled(lp.exp(), self.conjugate_at_zero),
            (false, true) => scaled(lq.exp(), self.at_zero),
            (false, false) => {
                let t = lp - lq;
                if t <= 0.0 {
                    scaled(lq.exp(), self.eval_log(t))
                } else {
                    // p f*(q/p) with f*(u) = u f(1/u)
                    let inner = self.eval_log(t);
                    let conj = if inner.is_finite() {
                        (-t).exp() * inner
                    } else {
                        self.conjugate_at_zero
                    };
                    scaled(lp.exp(), conj)
                }
            }
        }
    }

    /// `q f(p / q)` for plain masses.
    pub(crate) fn term(&self, q: f64, p: f64) -> f64 {
        self.term_log(q.ln(), p.ln())
    }
}

fn scaled(mass: f64, value: f64) -> f64 {
    if mass == 0.0 {
        0.0
    } else {
        mass * value
    }
}

/// The kind of divergence used in an objective.
#[derive(Debug, Clone)]
pub enum DivergenceKind {
    Kl,
    Tv,
    HellingerSq,
    LeCam,
    GenericF(ConvexGenerator),
    /// `n^exponent * TV`.
    ScaledTv { exponent: f64 },
}

/// A divergence together with its quadrature controls.
#[derive(Debug, Clone)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    pub quadrature: QuadratureSettings,
}

impl DivergenceSpec {
    pub fn new(kind: DivergenceKind) -> Self {
        Self {
            kind,
            quadrature: QuadratureSettings::default(),
        }
    }

    pub fn kl() -> Self {
        Self::new(DivergenceKind::Kl)
    }

    pub fn tv() -> Self {
        Self::new(DivergenceKind::Tv)
    }

    pub fn hellinger() -> Self {
        Self::new(DivergenceKind::HellingerSq)
    }

    pub fn le_cam() -> Self {
        Self::new(DivergenceKind::LeCam)
    }

    pub fn tv_sqrt_n() -> Self {
        Self::new(DivergenceKind::ScaledTv { exponent: 0.5 })
    }

    /// Parses the configuration names `kl`, `tv`, `hellinger`, `lecam`, `tv-sqrt-n`.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "kl" => Self::kl(),
            "tv" => Self::tv(),
            "hellinger" => Self::hellinger(),
            "lecam" => Self::le_cam(),
            "tv-sqrt-n" => Self::tv_sqrt_n(),
            other => {
                return Err(GviError::InvalidProblem(format!(
                    "unknown divergence `{other}` (expected kl, tv, hellinger, lecam, tv-sqrt-n)"
                )))
            }
        })
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DivergenceKind::Kl => "kl".into(),
            DivergenceKind::Tv => "tv".into(),
            DivergenceKind::HellingerSq => "hellinger".into(),
            DivergenceKind::LeCam => "lecam".into(),
            DivergenceKind::GenericF(g) => format!("f:{}", g.name()),
            DivergenceKind::ScaledTv { exponent } if *exponent == 0.5 => "tv-sqrt-n".into(),
            DivergenceKind::ScaledTv { exponent } => format!("tv-scaled({exponent})"),
        }
    }

    /// Generator of the underlying f-divergence.
    pub fn generator(&self) -> ConvexGenerator {
        match &self.kind {
            DivergenceKind::Kl => ConvexGenerator::kl(),
            DivergenceKind::Tv | DivergenceKind::ScaledTv { .. } => ConvexGenerator::total_variation(),
            DivergenceKind::HellingerSq => ConvexGenerator::hellinger(),
            DivergenceKind::LeCam => ConvexGenerator::le_cam(),
            DivergenceKind::GenericF(g) => g.clone(),
        }
    }

    /// Supremum `M` of the unscaled divergence over all pairs, if finite.
    pub fn bound(&self) -> Option<f64> {
        match &self.kind {
            DivergenceKind::Kl => None,
            DivergenceKind::Tv | DivergenceKind::ScaledTv { .. } | DivergenceKind::HellingerSq => Some(1.0),
            DivergenceKind::LeCam => Some(2.0),
            DivergenceKind::GenericF(g) => f_div_upper_bound(g).ok().and_then(UpperBound::finite),
        }
    }

    /// Multiplier `c(n)`; one for unscaled kinds.
    pub fn scale(&self, n: usize) -> f64 {
        match &self.kind {
            DivergenceKind::ScaledTv { exponent } => (n as f64).powf(*exponent),
            _ => 1.0,
        }
    }

    /// Bound of the scaled divergence at sample size `n`.
    pub fn bound_at(&self, n: usize) -> Option<f64> {
        self.bound().map(|m| m * self.scale(n))
    }

    /// Whether a Dirac posterior has finite divergence to an atomless prior.
    pub fn tolerates_singular(&self) -> bool {
        self.generator().singular_value().is_finite()
    }

    /// `c(n) * D(q : p)`.
    pub fn evaluate(&self, q: &Measure, p: &Measure, n: usize) -> Result<f64> {
        let base = match &self.kind {
            DivergenceKind::Kl => kl(q, p)?,
            DivergenceKind::Tv => tv(q, p),
            DivergenceKind::HellingerSq => hellinger_sq(q, p),
            DivergenceKind::LeCam => f_divergence(&ConvexGenerator::le_cam(), q, p, &self.quadrature)?,
            DivergenceKind::GenericF(g) => f_divergence(g, q, p, &self.quadrature)?,
            DivergenceKind::ScaledTv { .. } => {
                if n == 0 {
                    return Err(GviError::InvalidProblem("scaled divergence needs n >= 1".into()));
                }
                tv(q, p)
            }
        };
        Ok(self.scale(n) * base)
    }
}

impl Serialize for DivergenceSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for DivergenceSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        DivergenceSpec::from_name(&name).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`DivergenceSpec::evaluate`].
pub fn evaluate(spec: &DivergenceSpec, q: &Measure, p: &Measure, n: usize) -> Result<f64> {
    spec.evaluate(q, p, n)
}

/// Closed-form `KL(q || p)` for non-degenerate Gaussians.
pub fn kl_gaussian(q: &GaussianMeasure, p: &GaussianMeasure) -> Result<f64> {
    if q.is_dirac() || p.is_dirac() {
        return Err(GviError::DegenerateMeasure(
            "KL between a Dirac mass and a Gaussian is infinite".into(),
        ));
    }
    let d = q.mean() - p.mean();
    let v = 0.5 * (p.variance() / q.variance()).ln() + (d * d + q.variance()) / (2.0 * p.variance()) - 0.5;
    Ok(v.max(0.0))
}

/// `KL(q || p)` for measures of either track.
pub fn kl(q: &Measure, p: &Measure) -> Result<f64> {
    match (q, p) {
        (Measure::Gaussian(a), Measure::Gaussian(b)) if !a.is_dirac() && !b.is_dirac() => kl_gaussian(a, b),
        _ if q.is_atomic() && p.is_atomic() => {
            let v = atomic_divergence(&ConvexGenerator::kl(), q, p);
            if v.is_finite() {
                Ok(v.max(0.0))
            } else {
                Err(GviError::InfiniteDivergence(
                    "posterior charges atoms the prior does not".into(),
                ))
            }
        }
        _ => Err(GviError::InfiniteDivergence(
            "KL between mutually singular measures".into(),
        )),
    }
}

/// Sum of `w f(v / w)` over the union of the two atom sets.
fn atomic_divergence(f: &ConvexGenerator, q: &Measure, p: &Measure) -> f64 {
    let mut qa = q.atoms();
    let mut pa = p.atoms();
    qa.sort_by(|a, b| a.0.total_cmp(&b.0));
    pa.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < qa.len() || j < pa.len() {
        let (w, v) = match (qa.get(i), pa.get(j)) {
            (Some(a), Some(b)) if a.0 == b.0 => {
                i += 1;
                j += 1;
                (a.1, b.1)
            }
            (Some(a), Some(b)) if a.0 < b.0 => {
                i += 1;
                (a.1, 0.0)
            }
            (Some(_), Some(b)) => {
                j += 1;
                (0.0, b.1)
            }
            (Some(a), None) => {
                i += 1;
                (a.1, 0.0)
            }
            (None, Some(b)) => {
                j += 1;
                (0.0, b.1)
            }
            (None, None) => unreachable!(),
        };
        total += f.term(w, v);
    }
    total
}

/// Total variation `sup_A |Q(A) - P(A)|`.
pub fn tv(q: &Measure, p: &Measure) -> f64 {
    match (q, p) {
        (Measure::Gaussian(a), Measure::Gaussian(b)) if !a.is_dirac() && !b.is_dirac() => tv_gaussian(a, b),
        _ if q.is_atomic() && p.is_atomic() => {
            atomic_divergence(&ConvexGenerator::total_variation(), q, p).clamp(0.0, 1.0)
        }
        _ => 1.0,
    }
}

/// Exact TV between non-degenerate Gaussians via the crossing points of the densities.
fn tv_gaussian(q: &GaussianMeasure, p: &GaussianMeasure) -> f64 {
    let (sq, sp) = (q.sd(), p.sd());
    if sq == sp {
        let d = (q.mean() - p.mean()).abs();
        return libm::erf(d / (2.0 * std::f64::consts::SQRT_2 * sq));
    }
    let (narrow, wide) = if sq < sp { (q, p) } else { (p, q) };
    let (mn, sn) = (narrow.mean(), narrow.sd());
    let (mw, sw) = (wide.mean(), wide.sd());
    // ln(narrow/wide) at x = mn + y is a*y^2 + b*y + c, positive between its roots
    let d = mn - mw;
    let a = (sn * sn - sw * sw) / (2.0 * sn * sn * sw * sw);
    let b = d / (sw * sw);
    let c = d * d / (2.0 * sw * sw) + (sw / sn).ln();
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let (y1, y2) = if b == 0.0 {
        let r = (-c / a).sqrt();
        (-r, r)
    } else {
        let qq = -0.5 * (b + b.signum() * disc.sqrt());
        let (r1, r2) = (qq / a, c / qq);
        (r1.min(r2), r1.max(r2))
    };
    let (lo, hi) = (mn + y1, mn + y2);
    let inside_narrow = standard_interval_mass(y1 / sn, y2 / sn);
    let inside_wide = standard_interval_mass((lo - mw) / sw, (hi - mw) / sw);
    (inside_narrow - inside_wide).clamp(0.0, 1.0)
}

/// Half-normalised squared Hellinger distance `(1/2) int (sqrt q - sqrt p)^2`.
pub fn hellinger_sq(q: &Measure, p: &Measure) -> f64 {
    match (q, p) {
        (Measure::Gaussian(a), Measure::Gaussian(b)) if !a.is_dirac() && !b.is_dirac() => {
            let (va, vb) = (a.variance(), b.variance());
            let d = a.mean() - b.mean();
            let bc = (2.0 * a.sd() * b.sd() / (va + vb)).sqrt() * (-d * d / (4.0 * (va + vb))).exp();
            (1.0 - bc).clamp(0.0, 1.0)
        }
        _ if q.is_atomic() && p.is_atomic() => {
            atomic_divergence(&ConvexGenerator::hellinger(), q, p).clamp(0.0, 1.0)
        }
        _ => 1.0,
    }
}

/// Gaussians narrower than this fraction of their location scale are treated
/// as atoms by quadrature: their breakpoints would collapse in floating point.
const QUADRATURE_ATOM_SCALE: f64 = 1e-9;

fn effectively_atomic(g: &GaussianMeasure) -> bool {
    g.sd() < QUADRATURE_ATOM_SCALE * g.mean().abs().max(1.0)
}

/// `E_q[f(dp/dq)]` for any pair, by quadrature when both measures are atomless.
pub fn f_divergence(f: &ConvexGenerator, q: &Measure, p: &Measure, settings: &QuadratureSettings) -> Result<f64> {
    if q.is_atomic() && p.is_atomic() {
        return finite_or_err(f, atomic_divergence(f, q, p));
    }
    let (Measure::Gaussian(a), Measure::Gaussian(b)) = (q, p) else {
        return finite_or_err(f, f.singular_value());
    };
    if q.is_atomic() || p.is_atomic() || effectively_atomic(a) || effectively_atomic(b) {
        return finite_or_err(f, f.singular_value());
    }
    let v = f_divergence_gaussian(f, a, b, settings)?;
    // quadrature error can push the value past the supremum f(0) + f*(0)
    let sup = f.singular_value();
    Ok(if sup.is_finite() { v.clamp(0.0, sup) } else { v.max(0.0) })
}

fn finite_or_err(f: &ConvexGenerator, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v.max(0.0))
    } else {
        Err(GviError::InfiniteDivergence(format!(
            "{} divergence is infinite for this pair",
            f.name()
        )))
    }
}

fn f_divergence_gaussian(
    f: &ConvexGenerator,
    q: &GaussianMeasure,
    p: &GaussianMeasure,
    settings: &QuadratureSettings,
) -> Result<f64> {
    let pad = settings.support_padding;
    let widest = q.sd().max(p.sd());
    let lo = q.mean().min(p.mean()) - pad * widest;
    let hi = q.mean().max(p.mean()) + pad * widest;
    let mut breaks = Vec::with_capacity(32);
    for g in [q, p] {
        for k in [-8.0, -6.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0] {
            breaks.push(g.mean() + k * g.sd());
        }
    }
    let integrand = |x: f64| {
        let lq = q.log_density(x).unwrap_or(f64::NEG_INFINITY);
        let lp = p.log_density(x).unwrap_or(f64::NEG_INFINITY);
        f.term_log(lq, lp)
    };
    integrate_panels(&integrand, lo, hi, &breaks, settings.abs_tol)
}

/// Cichocki bound `lim_{u -> 0+} f(u) + u f(1/u)` on every `D_f`.
pub fn f_div_upper_bound(f: &ConvexGenerator) -> Result<UpperBound> {
    limit_at_zero(|u| f.eval(u) + u * f.eval(1.0 / u))
}

/// Derivative in `w` of the atom term `w f(v / w)`, used by simplex solvers.
pub(crate) fn atom_term_derivative(kind: &DivergenceKind, w: f64, v: f64) -> f64 {
    const FLOOR: f64 = 1e-16;
    let w = w.max(FLOOR);
    match kind {
        DivergenceKind::Kl => {
            if v == 0.0 {
                f64::INFINITY
            } else {
                (w / v).ln() + 1.0
            }
        }
        DivergenceKind::HellingerSq => 0.5 * (1.0 - (v / w).sqrt()),
        DivergenceKind::LeCam => {
            let s = v + w;
            -(v - w) * (3.0 * v + w) / (s * s)
        }
        DivergenceKind::Tv | DivergenceKind::ScaledTv { .. } => 0.5 * (w - v).signum(),
        DivergenceKind::GenericF(g) => {
            let h = 1e-7 * w.max(1e-9);
            let lo = (w - h).max(0.0);
            (g.term(w + h, v) - g.term(lo, v)) / (w + h - lo)
        }
    }
}
