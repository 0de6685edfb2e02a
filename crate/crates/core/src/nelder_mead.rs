//! Bounded Nelder–Mead simplex search.
//!
//! The objective is *maximized*: vertices store `L` and are ordered by
//! `-L`, so the usual minimization decision tree applies unchanged. NaN
//! values count as `-inf`. Trial points are clamped to the box before
//! evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::ParameterSpace;

/// Improvements of the best vertex smaller than this count as none.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

/// Reflection, expansion, contraction and shrink coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 2.0,
            rho: 0.5,
            sigma: 0.5,
        }
    }
}

impl NelderMeadConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.gamma > 1.0
            && self.rho > 0.0
            && self.rho < 1.0
            && self.sigma > 0.0
            && self.sigma < 1.0;
        if !ok {
            return Err(Error::Config(format!(
                "Nelder–Mead needs alpha > 0, gamma > 1, 0 < rho < 1, 0 < sigma < 1; got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub theta: Vec<f64>,
    /// Objective value `L` (larger is better).
    pub value: f64,
}

/// `-L` with NaN mapped to the worst value.
fn cost(value: f64) -> f64 {
    if value.is_nan() {
        f64::INFINITY
    } else {
        -value
    }
}

fn sanitize(value: f64) -> f64 {
    if value.is_nan() {
        f64::NEG_INFINITY
    } else {
        value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub vertices: Vec<Vertex>,
}

impl Simplex {
    pub fn new(vertices: Vec<Vertex>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::DegenerateSimplex("no vertices".into()));
        };
        let n = first.theta.len();
        if vertices.len() != n + 1 || vertices.iter().any(|v| v.theta.len() != n) {
            return Err(Error::DegenerateSimplex(format!(
                "{} vertices for a {}-dimensional search",
                vertices.len(),
                n
            )));
        }
        let mut vertices = vertices;
        for v in &mut vertices {
            v.value = sanitize(v.value);
        }
        Ok(Self { vertices })
    }

    /// Builds a simplex by evaluating `f` at each point.
    pub fn from_points(points: Vec<Vec<f64>>, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let vertices = points
            .into_iter()
            .map(|theta| {
                let value = f(&theta);
                Vertex { theta, value }
            })
            .collect();
        Self::new(vertices)
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].theta.len()
    }

    /// Best vertex value; the simplex need not be ordered.
    pub fn best_value(&self) -> f64 {
        self.vertices.iter().map(|v| v.value).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn best(&self) -> &Vertex {
        let mut best = &self.vertices[0];
        for v in &self.vertices[1..] {
            if cost(v.value) < cost(best.value) {
                best = v;
            }
        }
        best
    }
}

/// Stable sort of the vertices by ascending `-L`.
pub fn order_simplex(simplex: &mut Simplex) {
    simplex.vertices.sort_by(|a, b| cost(a.value).total_cmp(&cost(b.value)));
}

/// Mean of every vertex except the last (worst, once ordered).
pub fn centroid(simplex: &Simplex) -> Vec<f64> {
    let n = simplex.dim();
    let best = &simplex.vertices[..simplex.vertices.len() - 1];
    let mut c = vec![0.0; n];
    for v in best {
        for (ci, xi) in c.iter_mut().zip(&v.theta) {
            *ci += xi;
        }
    }
    c.iter_mut().for_each(|ci| *ci /= best.len() as f64);
    c
}

/// Mean Euclidean distance over all vertex pairs.
pub fn average_vertex_distance(simplex: &Simplex) -> f64 {
    let v = &simplex.vertices;
    if v.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            total += v[i]
                .theta
                .iter()
                .zip(&v[j].theta)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            pairs += 1;
        }
    }
    total / pairs as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Reflect,
    Expand,
    OutsideContract,
    InsideContract,
    Shrink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Branch of the decision tree that produced the new simplex.
    pub kind: StepKind,
    /// Every `(θ, L)` evaluated during the step, in call order.
    pub evaluations: Vec<(Vec<f64>, f64)>,
    /// The evaluator refused a call; the step stopped early.
    pub exhausted: bool,
}

fn affine(a: &[f64], b: &[f64], t: f64, space: &ParameterSpace) -> Vec<f64> {
    // a + t (b - a)
    let mut x: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect();
    space.clamp(&mut x);
    x
}

/// One pass of the simplex decision tree.
///
/// `f` returns `None` once no more evaluations are allowed. The simplex is
/// ordered on entry and left in a valid (unordered) state on exit.
pub fn nm_step(
    simplex: &mut Simplex,
    f: &mut dyn FnMut(&[f64]) -> Option<f64>,
    space: &ParameterSpace,
    cfg: &NelderMeadConfig,
) -> StepOutcome {
    order_simplex(simplex);
    let n = simplex.dim();
    let mut evaluations = Vec::new();
    let mut eval = |x: &Vec<f64>, evaluations: &mut Vec<(Vec<f64>, f64)>| -> Option<f64> {
        let v = sanitize(f(x)?);
        evaluations.push((x.clone(), v));
        Some(v)
    };
    let out = |kind, evaluations, exhausted| StepOutcome {
        kind,
        evaluations,
        exhausted,
    };

    let c = centroid(simplex);
    let worst = simplex.vertices[n].clone();
    let f1 = cost(simplex.vertices[0].value);
    let fn_ = cost(simplex.vertices[n - 1].value);
    let fw = cost(worst.value);

    let xr = affine(&c, &worst.theta, -cfg.alpha, space);
    let Some(lr) = eval(&xr, &mut evaluations) else {
        return out(StepKind::Reflect, evaluations, true);
    };
    let fr = cost(lr);

    if f1 <= fr && fr < fn_ {
        simplex.vertices[n] = Vertex { theta: xr, value: lr };
        return out(StepKind::Reflect, evaluations, false);
    }

    if fr < f1 {
        let xe = affine(&c, &xr, cfg.gamma, space);
        let Some(le) = eval(&xe, &mut evaluations) else {
            simplex.vertices[n] = Vertex { theta: xr, value: lr };
            return out(StepKind::Reflect, evaluations, true);
        };
        if cost(le) < fr {
            simplex.vertices[n] = Vertex { theta: xe, value: le };
            return out(StepKind::Expand, evaluations, false);
        }
        simplex.vertices[n] = Vertex { theta: xr, value: lr };
        return out(StepKind::Reflect, evaluations, false);
    }

    // fr >= fn: contract toward the better of the reflected and worst points.
    let (kind, xc) = if fr < fw {
        (StepKind::OutsideContract, affine(&c, &xr, cfg.rho, space))
    } else {
        (StepKind::InsideContract, affine(&c, &worst.theta, cfg.rho, space))
    };
    let Some(lc) = eval(&xc, &mut evaluations) else {
        return out(kind, evaluations, true);
    };
    if cost(lc) < fr {
        simplex.vertices[n] = Vertex { theta: xc, value: lc };
        return out(kind, evaluations, false);
    }

    let best = simplex.vertices[0].theta.clone();
    for i in 1..=n {
        let x = affine(&best, &simplex.vertices[i].theta, cfg.sigma, space);
        let Some(l) = eval(&x, &mut evaluations) else {
            return out(StepKind::Shrink, evaluations, true);
        };
        simplex.vertices[i] = Vertex { theta: x, value: l };
    }
    out(StepKind::Shrink, evaluations, false)
}

/// Stopping rules for [`nm_run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmStop {
    /// Stop once the average vertex distance falls below this.
    pub d_lim: f64,
    /// Stop after this many consecutive steps without improving the best vertex.
    pub patience: usize,
    /// Evaluation cap for this run.
    pub max_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmTermination {
    Distance,
    NoImprovement,
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmRun {
    pub simplex: Simplex,
    pub best: Vertex,
    pub evaluations: Vec<(Vec<f64>, f64)>,
    pub steps: Vec<StepKind>,
    pub termination: NmTermination,
}

/// Repeats [`nm_step`] until a stopping rule fires; at least one step is
/// taken unless the budget is already spent.
pub fn nm_run(
    f: &mut dyn FnMut(&[f64]) -> Option<f64>,
    initial: Simplex,
    stop: &NmStop,
    space: &ParameterSpace,
    cfg: &NelderMeadConfig,
) -> Result<NmRun> {
    cfg.validate()?;
    if initial.dim() != space.dim() {
        return Err(Error::DegenerateSimplex(format!(
            "simplex dimension {} does not match the parameter space ({})",
            initial.dim(),
            space.dim()
        )));
    }
    let d0 = average_vertex_distance(&initial);
    if !(d0 > 0.0) {
        return Err(Error::DegenerateSimplex("initial vertices coincide".into()));
    }
    let mut simplex = initial;
    let mut evaluations = Vec::new();
    let mut steps = Vec::new();
    let mut stale = 0usize;
    let mut used = 0usize;
    let termination = loop {
        if used >= stop.max_evals {
            break NmTermination::Budget;
        }
        let before = simplex.best_value();
        let mut capped = |x: &[f64]| -> Option<f64> {
            if used >= stop.max_evals {
                return None;
            }
            let v = f(x)?;
            used += 1;
            Some(v)
        };
        let outcome = nm_step(&mut simplex, &mut capped, space, cfg);
        evaluations.extend(outcome.evaluations);
        steps.push(outcome.kind);
        if outcome.exhausted {
            break NmTermination::Budget;
        }
        let after = simplex.best_value();
        let improved = after > before && (before == f64::NEG_INFINITY || after - before >= IMPROVEMENT_TOL);
        stale = if improved { 0 } else { stale + 1 };
        if average_vertex_distance(&simplex) < stop.d_lim {
            break NmTermination::Distance;
        }
        if stale >= stop.patience {
            break NmTermination::NoImprovement;
        }
    };
    order_simplex(&mut simplex);
    let best = simplex.vertices[0].clone();
    Ok(NmRun {
        simplex,
        best,
        evaluations,
        steps,
        termination,
    })
}
