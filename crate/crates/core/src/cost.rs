//! Convex cost functions of the attribute vector and their bound constants.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Argument tolerance for the golden-section fallback.
pub const ARG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn unbounded() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }
}

/// One-dimensional convex building block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarConvex {
    Zero,
    Affine { slope: f64, #[serde(default)] offset: f64 },
    /// `a x^2 + b x + c` with `a >= 0`.
    Quadratic { a: f64, b: f64, #[serde(default)] c: f64 },
    /// `-weight * ln(shift + x)` with `weight >= 0`; the negated log utility.
    NegLog { weight: f64, shift: f64 },
    /// `weight * |x - center|`.
    Abs { weight: f64, center: f64 },
    /// `weight * max(x - threshold, 0)`.
    Hinge { weight: f64, threshold: f64 },
}

impl ScalarConvex {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarConvex::Zero => 0.0,
            ScalarConvex::Affine { slope, offset } => slope * x + offset,
            ScalarConvex::Quadratic { a, b, c } => a * x * x + b * x + c,
            ScalarConvex::NegLog { weight, shift } => -weight * (shift + x).ln(),
            ScalarConvex::Abs { weight, center } => weight * (x - center).abs(),
            ScalarConvex::Hinge { weight, threshold } => weight * (x - threshold).max(0.0),
        }
    }

    pub fn validate(&self, dom: &Interval) -> Result<()> {
        let ok = match *self {
            ScalarConvex::Zero => true,
            ScalarConvex::Affine { slope, offset } => slope.is_finite() && offset.is_finite(),
            ScalarConvex::Quadratic { a, b, c } => a >= 0.0 && a.is_finite() && b.is_finite() && c.is_finite(),
            ScalarConvex::NegLog { weight, shift } => {
                weight >= 0.0 && weight.is_finite() && shift.is_finite() && shift + dom.lo > 0.0
            }
            ScalarConvex::Abs { weight, center } => weight >= 0.0 && weight.is_finite() && center.is_finite(),
            ScalarConvex::Hinge { weight, threshold } => {
                weight >= 0.0 && weight.is_finite() && threshold.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{self:?} is not a finite convex function on [{}, {}]", dom.lo, dom.hi)))
        }
    }

    /// Largest magnitude of a one-sided derivative over `dom`.
    pub fn slope_bound(&self, dom: &Interval) -> f64 {
        match *self {
            ScalarConvex::Zero => 0.0,
            ScalarConvex::Affine { slope, .. } => slope.abs(),
            ScalarConvex::Quadratic { a, b, .. } => (2.0 * a * dom.lo + b).abs().max((2.0 * a * dom.hi + b).abs()),
            ScalarConvex::NegLog { weight, shift } => weight / (shift + dom.lo),
            ScalarConvex::Abs { weight, .. } | ScalarConvex::Hinge { weight, .. } => weight,
        }
    }

    /// `(min, max)` of the function over `dom`.
    pub fn range(&self, dom: &Interval) -> (f64, f64) {
        let hi = self.eval(dom.lo).max(self.eval(dom.hi));
        let argmin = minimize_scalar(&[(1.0, self)], 0.0, dom);
        (self.eval(argmin).min(hi), hi)
    }
}

/// A convex function of the whole attribute vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFn {
    /// `constant + sum_m terms[m](x_m)`; an empty term list is the constant function.
    Separable {
        #[serde(default)]
        terms: Vec<ScalarConvex>,
        #[serde(default)]
        constant: f64,
    },
    /// `scale * max_m x_m`. Not separable.
    Max { scale: f64 },
}

impl Default for CostFn {
    fn default() -> Self {
        CostFn::zero()
    }
}

impl CostFn {
    pub fn zero() -> Self {
        CostFn::Separable { terms: Vec::new(), constant: 0.0 }
    }

    pub fn separable(terms: Vec<ScalarConvex>) -> Self {
        CostFn::Separable { terms, constant: 0.0 }
    }

    pub fn is_separable(&self) -> bool {
        matches!(self, CostFn::Separable { .. })
    }

    /// True when the function is identically constant.
    pub fn is_constant(&self) -> bool {
        match self {
            CostFn::Separable { terms, .. } => terms.iter().all(|t| *t == ScalarConvex::Zero),
            CostFn::Max { scale } => *scale == 0.0,
        }
    }

    fn term(&self, m: usize) -> &ScalarConvex {
        const ZERO: ScalarConvex = ScalarConvex::Zero;
        match self {
            CostFn::Separable { terms, .. } => terms.get(m).unwrap_or(&ZERO),
            CostFn::Max { .. } => &ZERO,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            CostFn::Separable { terms, constant } => {
                constant + terms.iter().zip(x).map(|(t, v)| t.eval(*v)).sum::<f64>()
            }
            CostFn::Max { scale } => {
                if x.is_empty() {
                    0.0
                } else {
                    scale * x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
            }
        }
    }

    fn validate(&self, boxes: &[Interval]) -> Result<()> {
        match self {
            CostFn::Separable { terms, constant } => {
                if !terms.is_empty() && terms.len() != boxes.len() {
                    return Err(Error::Config(format!(
                        "separable cost has {} terms but M = {}",
                        terms.len(),
                        boxes.len()
                    )));
                }
                if !constant.is_finite() {
                    return Err(Error::Config("cost constant must be finite".into()));
                }
                terms.iter().zip(boxes).try_for_each(|(t, b)| t.validate(b))
            }
            CostFn::Max { scale } => {
                if *scale >= 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("max cost needs a finite non-negative scale".into()))
                }
            }
        }
    }

    fn range(&self, boxes: &[Interval]) -> (f64, f64) {
        match self {
            CostFn::Separable { terms, constant } => terms.iter().zip(boxes).fold(
                (*constant, *constant),
                |(lo, hi), (t, b)| {
                    let (a, c) = t.range(b);
                    (lo + a, hi + c)
                },
            ),
            CostFn::Max { scale } => {
                if boxes.is_empty() {
                    return (0.0, 0.0);
                }
                let lo = boxes.iter().map(|b| b.lo).fold(f64::NEG_INFINITY, f64::max);
                let hi = boxes.iter().map(|b| b.hi).fold(f64::NEG_INFINITY, f64::max);
                (scale * lo, scale * hi)
            }
        }
    }

    fn slope_bounds(&self, boxes: &[Interval]) -> Vec<f64> {
        match self {
            CostFn::Separable { .. } => boxes.iter().enumerate().map(|(m, b)| self.term(m).slope_bound(b)).collect(),
            CostFn::Max { scale } => vec![scale.abs(); boxes.len()],
        }
    }
}

/// The per-slot auxiliary problem handed to a user-supplied minimizer:
/// minimize `v f(gamma) + sum_l z_l g_l(gamma) + sum_m h_m gamma_m` over
/// the per-coordinate intervals in `feasible`.
pub struct AuxProblem<'a> {
    pub cost: &'a CostSpec,
    pub v: f64,
    pub z: &'a [f64],
    pub h: &'a [f64],
    pub feasible: &'a [Interval],
}

impl AuxProblem<'_> {
    pub fn objective(&self, gamma: &[f64]) -> f64 {
        self.v * self.cost.f.eval(gamma)
            + self.z.iter().zip(&self.cost.g).map(|(z, g)| z * g.eval(gamma)).sum::<f64>()
            + self.h.iter().zip(gamma).map(|(h, x)| h * x).sum::<f64>()
    }
}

type AuxFn = dyn Fn(&AuxProblem<'_>) -> Vec<f64> + Send + Sync;

/// Minimizer hook for cost structures without a per-coordinate decomposition.
#[derive(Clone)]
pub struct AuxHook(pub Arc<AuxFn>);

impl fmt::Debug for AuxHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AuxHook(..)")
    }
}

/// Cost functions together with the box they live on and every constant the
/// bounds need (derivative bounds, ranges).
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub f: CostFn,
    pub g: Vec<CostFn>,
    /// `[x_min, x_max]` per attribute.
    pub bounds_box: Vec<Interval>,
    /// The convex set restricted to an axis-aligned box (possibly unbounded).
    pub x_set: Vec<Interval>,
    pub nu: Vec<f64>,
    /// `beta[l][m]`.
    pub beta: Vec<Vec<f64>>,
    pub f_min: f64,
    pub f_max: f64,
    pub g_min: Vec<f64>,
    pub g_max: Vec<f64>,
    pub minimizer: Option<AuxHook>,
}

impl CostSpec {
    /// Derives `nu`, `beta` and the function ranges from the closed forms.
    pub fn new(f: CostFn, g: Vec<CostFn>, bounds_box: Vec<Interval>, x_set: Option<Vec<Interval>>) -> Result<Self> {
        let m = bounds_box.len();
        for (i, b) in bounds_box.iter().enumerate() {
            if !(b.lo.is_finite() && b.hi.is_finite()) || b.is_empty() {
                return Err(Error::Config(format!("attribute {i} needs a finite non-empty range")));
            }
        }
        let x_set = x_set.unwrap_or_else(|| vec![Interval::unbounded(); m]);
        if x_set.len() != m {
            return Err(Error::Config(format!("x_set has {} intervals but M = {m}", x_set.len())));
        }
        f.validate(&bounds_box)?;
        for gl in &g {
            gl.validate(&bounds_box)?;
        }
        let (f_min, f_max) = f.range(&bounds_box);
        let (g_min, g_max) = g.iter().map(|gl| gl.range(&bounds_box)).unzip();
        Ok(CostSpec {
            nu: f.slope_bounds(&bounds_box),
            beta: g.iter().map(|gl| gl.slope_bounds(&bounds_box)).collect(),
            f,
            g,
            bounds_box,
            x_set,
            f_min,
            f_max,
            g_min,
            g_max,
            minimizer: None,
        })
    }

    pub fn with_minimizer(mut self, hook: AuxHook) -> Self {
        self.minimizer = Some(hook);
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds_box.len()
    }

    pub fn separable(&self) -> bool {
        self.f.is_separable() && self.g.iter().all(CostFn::is_separable)
    }

    /// The per-coordinate interval `x_set ∩ [x_min, x_max]` that auxiliary
    /// variables must lie in.
    pub fn feasible_box(&self) -> Vec<Interval> {
        self.bounds_box.iter().zip(&self.x_set).map(|(b, x)| b.intersect(x)).collect()
    }

    pub fn in_x_set(&self, x: &[f64], tol: f64) -> bool {
        self.x_set.iter().zip(x).all(|(iv, v)| iv.contains(*v, tol))
    }

    pub fn g_eval(&self, x: &[f64]) -> Vec<f64> {
        self.g.iter().map(|gl| gl.eval(x)).collect()
    }

    pub fn beta_sum(&self, l: usize) -> f64 {
        self.beta[l].iter().sum()
    }

    /// Minimizes the auxiliary objective coordinate by coordinate.
    pub(crate) fn minimize_separable(&self, v: f64, z: &[f64], h: &[f64]) -> Vec<f64> {
        let feasible = self.feasible_box();
        (0..self.dim())
            .map(|m| {
                let mut terms: Vec<(f64, &ScalarConvex)> = Vec::with_capacity(1 + z.len());
                terms.push((v, self.f.term(m)));
                for (zl, gl) in z.iter().zip(&self.g) {
                    terms.push((*zl, gl.term(m)));
                }
                minimize_scalar(&terms, h[m], &feasible[m])
            })
            .collect()
    }
}

/// Minimizes `sum_i w_i phi_i(x) + linear * x` over `dom` for non-negative
/// weights. Quadratic/affine mixtures and a single log term plus a linear
/// part are solved in closed form; anything else goes to golden-section
/// search followed by an endpoint check, so optimal endpoints are returned
/// exactly.
pub fn minimize_scalar(terms: &[(f64, &ScalarConvex)], linear: f64, dom: &Interval) -> f64 {
    if dom.width() <= 0.0 {
        return dom.lo;
    }
    let mut quad = 0.0;
    let mut lin = linear;
    let mut logs: Vec<(f64, f64)> = Vec::new();
    let mut kinked = false;
    for &(w, t) in terms {
        if w == 0.0 {
            continue;
        }
        match *t {
            ScalarConvex::Zero => {}
            ScalarConvex::Affine { slope, .. } => lin += w * slope,
            ScalarConvex::Quadratic { a, b, .. } => {
                quad += w * a;
                lin += w * b;
            }
            ScalarConvex::NegLog { weight, shift } => {
                if weight != 0.0 {
                    logs.push((w * weight, shift));
                }
            }
            ScalarConvex::Abs { weight, .. } | ScalarConvex::Hinge { weight, .. } => {
                if weight != 0.0 {
                    kinked = true;
                }
            }
        }
    }
    if !kinked && logs.is_empty() {
        return if quad > 0.0 {
            dom.clamp(-lin / (2.0 * quad))
        } else if lin > 0.0 {
            dom.lo
        } else if lin < 0.0 {
            dom.hi
        } else {
            dom.lo
        };
    }
    if !kinked && quad == 0.0 && logs.len() == 1 {
        let (w, s) = logs[0];
        // d/dx [-w ln(s + x) + lin x] = 0  =>  x = w / lin - s
        return if lin <= 0.0 { dom.hi } else { dom.clamp(w / lin - s) };
    }
    let obj = |x: f64| terms.iter().map(|(w, t)| if *w == 0.0 { 0.0 } else { w * t.eval(x) }).sum::<f64>() + linear * x;
    golden_section(obj, dom)
}

fn golden_section(obj: impl Fn(f64) -> f64, dom: &Interval) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (dom.lo, dom.hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while b - a > ARG_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = obj(d);
        }
    }
    let mid = 0.5 * (a + b);
    let (flo, fhi, fmid) = (obj(dom.lo), obj(dom.hi), obj(mid));
    if flo <= fmid && flo <= fhi {
        dom.lo
    } else if fhi <= fmid {
        dom.hi
    } else {
        mid
    }
}
