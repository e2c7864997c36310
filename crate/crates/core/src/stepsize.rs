//! Closed-form line search for the outer iteration.
//!
//! Along the segment `M + alpha (D - M)` the profit is an exact quadratic
//! `Z = a alpha^2 + b alpha + Z(M)` with
//!
//! ```text
//! a = 1/2 <D - M, A (D - M) B>,      b = <D - M, A M B + lambda K>,
//! ```
//!
//! so the best feasible step is known without any trial evaluations.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::Serialize;

use crate::graph::{self, AttributedGraph};
use crate::util;
use crate::{Error, Result};

/// Step-size rule for the outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// The same step every iteration (1 jumps to the operator output, 0.5
    /// averages, etc).
    Fixed(f64),
    /// Maximize the exact quadratic profit along the segment each iteration.
    Adaptive,
}

impl fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaMode::Fixed(a) => write!(f, "fixed({a})"),
            AlphaMode::Adaptive => f.write_str("adaptive"),
        }
    }
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(AlphaMode::Adaptive);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("alpha must be 'adaptive' or a number, got '{s}'")))?;
        if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument(format!(
                "fixed alpha must lie in [0, 1], got {v}"
            )));
        }
        Ok(AlphaMode::Fixed(v))
    }
}

/// Which case of the maximizer applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaBranch {
    /// Convex along the segment and the far end is no worse: step fully.
    PositiveA,
    /// Concave with an interior vertex in (0, 1).
    Interior,
    /// Concave vertex at or beyond 1: step fully.
    ClampedToOne,
    /// No step improves the profit: stay put.
    ClampedToZero,
}

/// The chosen step together with the quadratic coefficients behind it.
#[derive(Debug, Clone, Copy)]
pub struct AlphaDecision {
    pub alpha: f64,
    /// Quadratic coefficient `1/2 <D - M, A (D - M) B>`.
    pub a: f64,
    /// Linear coefficient `<D - M, grad Z(M)>`.
    pub b: f64,
    pub branch: AlphaBranch,
}

/// Picks the step maximizing the quadratic profit along `M -> D`.
///
/// `m` is the current iterate, `d` the operator output, both n x m for graphs
/// of sizes n and m. The profit never decreases at the returned step: when
/// the quadratic is convex (`a >= 0`) the full step is taken only if it pays,
/// and a vertex outside `[0, 1]` is clamped to the better endpoint.
pub fn adaptive_alpha(
    m: &Array2<f64>,
    d: &Array2<f64>,
    ga: &AttributedGraph,
    gb: &AttributedGraph,
    lambda: f64,
) -> Result<AlphaDecision> {
    if m.dim() != (ga.n(), gb.n()) {
        return Err(Error::Shape(format!(
            "iterate is {}x{}, graphs need {}x{}",
            m.nrows(),
            m.ncols(),
            ga.n(),
            gb.n()
        )));
    }
    if d.dim() != m.dim() {
        return Err(Error::Shape(format!(
            "direction is {}x{}, iterate is {}x{}",
            d.nrows(),
            d.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    util::check_finite(m)?;
    util::check_finite(d)?;
    let k = graph::feature_kernel(ga, gb)?;
    let a_aff = ga.affinity();
    let b_aff = gb.affinity();
    let p = a_aff.dot(m).dot(b_aff);
    let q = a_aff.dot(d).dot(b_aff);
    alpha_from_products(m, d, &p, &q, k.as_ref(), lambda)
}

/// Same decision from precomputed `P = A M B` and `Q = A D B`, so the solver
/// can reuse the gradient product it already has.
pub(crate) fn alpha_from_products(
    m: &Array2<f64>,
    d: &Array2<f64>,
    p: &Array2<f64>,
    q: &Array2<f64>,
    k: Option<&Array2<f64>>,
    lambda: f64,
) -> Result<AlphaDecision> {
    let mp = util::inner(m, p);
    let mq = util::inner(m, q);
    let dp = util::inner(d, p);
    let dq = util::inner(d, q);
    let a = 0.5 * (mp - mq - dp + dq);
    let feature_pull = match k {
        Some(k) => lambda * (util::inner(d, k) - util::inner(m, k)),
        None => 0.0,
    };
    let b = mq - mp + feature_pull;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite step-size coefficients".into(),
        ));
    }
    let (alpha, branch) = if a >= 0.0 {
        if a + b >= 0.0 {
            (1.0, AlphaBranch::PositiveA)
        } else {
            (0.0, AlphaBranch::ClampedToZero)
        }
    } else {
        let vertex = -b / (2.0 * a);
        if vertex >= 1.0 {
            (1.0, AlphaBranch::ClampedToOne)
        } else if vertex <= 0.0 {
            (0.0, AlphaBranch::ClampedToZero)
        } else {
            (vertex, AlphaBranch::Interior)
        }
    };
    Ok(AlphaDecision { alpha, a, b, branch })
}

/// The convex combination `(1 - alpha) M + alpha D`.
pub fn apply_step(m: &Array2<f64>, d: &Array2<f64>, alpha: f64) -> Result<Array2<f64>> {
    if m.dim() != d.dim() {
        return Err(Error::Shape(format!(
            "cannot combine {}x{} with {}x{}",
            m.nrows(),
            m.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let mut out = m * (1.0 - alpha);
    out.scaled_add(alpha, d);
    Ok(out)
}
