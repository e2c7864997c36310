//! The outer constrained-gradient iteration and the named solver variants.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array2};
use serde::Serialize;

use crate::graph::{self, AttributedGraph, PermutationMatching, SolverConfig};
use crate::ops::{self, OperatorKind};
use crate::stepsize::{self, AlphaMode};
use crate::util;
use crate::{Error, Result};

/// Named operator/step-size combinations from the literature on this
/// iteration family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Dynamical softassign with the adaptive step.
    Scg,
    /// Graduated-assignment style: softassign, full step.
    Ga,
    /// Alternating projection, half step.
    Dspfp,
    /// Greedy hard assignment each iteration, adaptive step.
    Aipfp,
    /// Spectral rescaling, full step.
    Sm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Scg,
        Variant::Ga,
        Variant::Dspfp,
        Variant::Aipfp,
        Variant::Sm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Scg => "scg",
            Variant::Ga => "ga",
            Variant::Dspfp => "dspfp",
            Variant::Aipfp => "aipfp",
            Variant::Sm => "sm",
        }
    }

    pub fn operator(self) -> OperatorKind {
        match self {
            Variant::Scg | Variant::Ga => OperatorKind::Softassign,
            Variant::Dspfp => OperatorKind::Alternating,
            Variant::Aipfp => OperatorKind::Greedy,
            Variant::Sm => OperatorKind::Spectral,
        }
    }

    pub fn default_alpha(self) -> AlphaMode {
        match self {
            Variant::Scg | Variant::Aipfp => AlphaMode::Adaptive,
            Variant::Ga | Variant::Sm => AlphaMode::Fixed(1.0),
            Variant::Dspfp => AlphaMode::Fixed(0.5),
        }
    }

    /// A config with this variant's operator and step rule, keeping the
    /// tolerances and weights of `base`.
    pub fn config_from(self, base: &SolverConfig) -> SolverConfig {
        SolverConfig {
            operator: self.operator(),
            alpha: self.default_alpha(),
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

/// Why the outer loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Entrywise change between iterates fell below `eps_outer`.
    Tolerance,
    /// The step size collapsed to zero: no direction improved the profit.
    Stagnation,
    /// `max_outer` iterations elapsed.
    IterationCap,
}

/// Everything a solve produces, including per-iteration traces.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Hard assignment after discretizing the final relaxed iterate.
    pub matching: PermutationMatching,
    /// Final relaxed iterate, n x m in the orientation of the inputs.
    pub relaxed: Array2<f64>,
    /// Profit of the hard assignment.
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Step size chosen at each iteration.
    pub alpha_trace: Vec<f64>,
    /// Relaxed profit before each iteration, plus the final value.
    pub objective_trace: Vec<f64>,
    /// Wall time of the solve itself (no generation or I/O).
    pub solve_seconds: f64,
}

/// Matches two graphs with the configured operator and step rule.
///
/// Works for unequal sizes: the pair is internally oriented so the first
/// graph is the larger one, the gradient is embedded in a square slack
/// matrix for the operator, and the result is flipped back.
pub fn scg_solve(
    ga: &AttributedGraph,
    gb: &AttributedGraph,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    if ga.n() >= gb.n() {
        solve_oriented(ga, gb, config)
    } else {
        let flipped = solve_oriented(gb, ga, config)?;
        Ok(SolveResult {
            matching: flipped.matching.inverse(),
            relaxed: flipped.relaxed.t().to_owned(),
            ..flipped
        })
    }
}

/// Runs a named variant, honoring its operator and step-size defaults but
/// taking tolerances, `gamma`, and `lambda` from `config`.
pub fn variant_solve(
    variant: Variant,
    ga: &AttributedGraph,
    gb: &AttributedGraph,
    config: &SolverConfig,
) -> Result<SolveResult> {
    scg_solve(ga, gb, &variant.config_from(config))
}

/// Rounds a relaxed matrix to the maximum-profit hard assignment.
pub fn discretize(relaxed: &Array2<f64>) -> Result<PermutationMatching> {
    ops::hungarian(relaxed)
}

fn apply_operator(config: &SolverConfig, slack: &Array2<f64>) -> Result<Array2<f64>> {
    match config.operator {
        OperatorKind::Softassign => Ok(ops::dynamic_softassign(
            slack,
            config.gamma,
            config.eps_sinkhorn,
            config.max_inner,
        )?
        .matrix),
        OperatorKind::Alternating => {
            Ok(ops::alternating_projection(slack, config.max_inner, config.eps_sinkhorn)?.matrix)
        }
        OperatorKind::Spectral => Ok(ops::spectral_normalize(slack)?.matrix),
        OperatorKind::Hungarian => Ok(ops::hungarian(slack)?.to_matrix()),
        OperatorKind::Greedy => Ok(ops::greedy_assign(slack)?.to_matrix()),
    }
}

fn solve_oriented(
    ga: &AttributedGraph,
    gb: &AttributedGraph,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let start = Instant::now();
    let n = ga.n();
    let m = gb.n();
    let a = ga.affinity();
    let b = gb.affinity();
    let k = graph::feature_kernel(ga, gb)?;
    let mut cur = Array2::from_elem((n, m), 1.0 / (n * m) as f64);
    let mut slack = Array2::<f64>::zeros((n, n));
    let mut alpha_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut termination = Termination::IterationCap;
    let mut iterations = 0;

    let profit = |x: &Array2<f64>, ax_b: &Array2<f64>| -> f64 {
        let quad = 0.5 * util::inner(x, ax_b);
        match &k {
            Some(k) => quad + config.lambda * util::inner(x, k),
            None => quad,
        }
    };

    for t in 1..=config.max_outer {
        let pg = a.dot(&cur).dot(b);
        objective_trace.push(profit(&cur, &pg));
        let mut grad = pg.clone();
        if let Some(k) = &k {
            grad.scaled_add(config.lambda, k);
        }
        slack.slice_mut(s![.., ..m]).assign(&grad);
        let d_full = apply_operator(config, &slack)?;
        let d = d_full.slice(s![.., ..m]).to_owned();
        let alpha = match config.alpha {
            AlphaMode::Fixed(v) => v,
            AlphaMode::Adaptive => {
                let q = a.dot(&d).dot(b);
                stepsize::alpha_from_products(&cur, &d, &pg, &q, k.as_ref(), config.lambda)?.alpha
            }
        };
        alpha_trace.push(alpha);
        let next = stepsize::apply_step(&cur, &d, alpha)?;
        let diff = util::max_abs_diff(&next, &cur);
        cur = next;
        iterations = t;
        if diff < config.eps_outer {
            termination = if alpha == 0.0 {
                Termination::Stagnation
            } else {
                Termination::Tolerance
            };
            break;
        }
    }

    let pg = a.dot(&cur).dot(b);
    objective_trace.push(profit(&cur, &pg));
    let matching = discretize(&cur)?;
    let hard = matching.to_matrix();
    let objective = graph::objective_given(&hard, a, b, k.as_ref(), config.lambda);
    Ok(SolveResult {
        matching,
        relaxed: cur,
        objective,
        iterations,
        termination,
        alpha_trace,
        objective_trace,
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}
