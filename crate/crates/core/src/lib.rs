//! Graph matching by constrained gradient ascent over doubly stochastic matrices.
//!
//! Two attributed graphs are matched by maximizing the quadratic assignment
//! profit `Z(M) = 1/2 tr(M' A M B) + lambda tr(M' K)`, where `A` and `B` are
//! the affinity matrices, `K = F Fb'` couples node features, and `M` ranges
//! over the Birkhoff polytope instead of the permutation set. Each iteration
//! pushes the current point along a constrained gradient direction,
//!
//! ```text
//! M[t+1] = (1 - alpha) M[t] + alpha D[t],    D[t] = P(grad Z(M[t])),
//! ```
//!
//! where `P` is a constraining operator mapping the gradient back toward the
//! feasible set and `alpha` is chosen by exact line search on the quadratic
//! profit restricted to the segment. The final relaxed matrix is rounded to a
//! permutation with the Hungarian algorithm.
//!
//! The crate provides:
//!
//! - [`graph`]: attributed graphs, doubly stochastic and permutation types,
//!   JSON I/O, and the profit function itself;
//! - [`ops`]: interchangeable constraining operators (dynamical softassign,
//!   alternating projection, greedy and Hungarian assignment, spectral
//!   normalization);
//! - [`stepsize`]: the closed-form adaptive step size;
//! - [`solver`]: the outer iteration and named solver variants;
//! - [`synth`]: seeded generators for benchmark instances;
//! - [`metrics`]: matching error and accuracy scores;
//! - [`oracles`]: slow, independent reference computations used by the test
//!   suite and the `selftest` command.

pub mod delaunay;
pub mod graph;
pub mod metrics;
pub mod ops;
pub mod oracles;
pub mod solver;
pub mod stepsize;
pub mod synth;

mod util;

use std::path::PathBuf;

pub use graph::{
    graph_from_points, load_graph, objective, save_graph, AttributedGraph,
    DoublyStochasticMatrix, PermutationMatching, SolverConfig,
};
pub use ops::{
    alternating_projection, dynamic_softassign, greedy_assign, hungarian, offset_input,
    permutation_to_matrix, softassign, spectral_normalize, OperatorKind, OperatorResult,
};
pub use solver::{discretize, scg_solve, variant_solve, SolveResult, Termination, Variant};
pub use stepsize::{adaptive_alpha, apply_step, AlphaBranch, AlphaDecision, AlphaMode};

/// Errors shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid graph file {path}: {reason}")]
    GraphFile { path: PathBuf, reason: String },
    #[error("asymmetric matrix: |X[{i}][{j}] - X[{j}][{i}]| = {delta:e}")]
    Asymmetric { i: usize, j: usize, delta: f64 },
    #[error("negative affinity entry {value} at [{i}][{j}]")]
    NegativeAffinity { i: usize, j: usize, value: f64 },
    #[error("non-finite value at [{i}][{j}]")]
    NonFinite { i: usize, j: usize },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("instance too large for exhaustive search: n = {n} exceeds {max}")]
    TooLarge { n: usize, max: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
