//! Quality scores for a computed matching.

use std::collections::HashSet;

use serde::Serialize;

use crate::graph::{AttributedGraph, PermutationMatching};
use crate::util;
use crate::{Error, Result};

/// Scores of one solve; accuracy needs a ground truth and the error rate a
/// baseline, so both are optional.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub matching_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
}

/// Residual of a matching: `1/4 ||A - P B P'||_F + lambda ||F - P Fb||_F`.
///
/// The edge term compares the first affinity with the permuted second one;
/// the feature term appears only when both graphs carry features. Zero means
/// the matching is a perfect structural overlay.
pub fn matching_error(
    p: &PermutationMatching,
    a: &AttributedGraph,
    b: &AttributedGraph,
    lambda: f64,
) -> Result<f64> {
    let (edge, feat) = error_norms(p, a, b)?;
    Ok(0.25 * edge + lambda * feat)
}

/// Squared-norm form of the same residual,
/// `1/4 ||A - P B P'||_F^2 + lambda ||F - P Fb||_F^2`. Up to constants this
/// is the negated profit, which makes it the right form for optimality
/// cross-checks.
pub fn matching_error_squared(
    p: &PermutationMatching,
    a: &AttributedGraph,
    b: &AttributedGraph,
    lambda: f64,
) -> Result<f64> {
    let (edge, feat) = error_norms(p, a, b)?;
    Ok(0.25 * edge * edge + lambda * feat * feat)
}

fn error_norms(
    p: &PermutationMatching,
    a: &AttributedGraph,
    b: &AttributedGraph,
) -> Result<(f64, f64)> {
    if p.n() != a.n() || p.m() != b.n() {
        return Err(Error::Shape(format!(
            "matching is {}x{}, graphs are {} and {} nodes",
            p.n(),
            p.m(),
            a.n(),
            b.n()
        )));
    }
    let pm = p.to_matrix();
    let overlay = pm.dot(b.affinity()).dot(&pm.t());
    let edge = util::l2_diff(a.affinity(), &overlay);
    let feat = match (a.features(), b.features()) {
        (Some(f), Some(g)) => {
            if f.ncols() != g.ncols() {
                return Err(Error::Shape(format!(
                    "feature dimensions disagree: {} vs {}",
                    f.ncols(),
                    g.ncols()
                )));
            }
            util::l2_diff(f, &pm.dot(g))
        }
        (None, None) => 0.0,
        _ => {
            return Err(Error::Shape(
                "features must be present on both graphs or neither".into(),
            ))
        }
    };
    Ok((edge, feat))
}

/// Fraction of ground-truth pairs the matching reproduces.
pub fn accuracy(found: &PermutationMatching, truth: &PermutationMatching) -> Result<f64> {
    if found.n() != truth.n() || found.m() != truth.m() {
        return Err(Error::Shape(format!(
            "matchings have different shapes: {}x{} vs {}x{}",
            found.n(),
            found.m(),
            truth.n(),
            truth.m()
        )));
    }
    let truth_pairs: HashSet<(usize, usize)> = truth.pairs().iter().copied().collect();
    let hit = found
        .pairs()
        .iter()
        .filter(|p| truth_pairs.contains(p))
        .count();
    Ok(hit as f64 / truth.pairs().len() as f64)
}

/// Matching error relative to a baseline solver's error on the same instance.
pub fn error_rate(err: f64, err_baseline: f64) -> Result<f64> {
    if !(err.is_finite() && err >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "matching error must be finite and nonnegative, got {err}"
        )));
    }
    if !(err_baseline.is_finite() && err_baseline > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "baseline error must be positive, got {err_baseline}"
        )));
    }
    Ok(err / err_baseline)
}
