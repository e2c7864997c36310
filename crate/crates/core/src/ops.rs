//! Constraining operators: maps from a gradient matrix toward the feasible set.
//!
//! Each operator takes an arbitrary finite profit/gradient matrix and returns
//! either a (relaxed) doubly stochastic matrix or a hard assignment. They are
//! interchangeable inside the solver loop and individually useful.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::Serialize;

use crate::graph::PermutationMatching;
use crate::util;
use crate::{Error, Result};

/// The constraining operators the solver can plug into its iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// Dynamical softassign: entropic assignment with size-adapted sharpness.
    Softassign,
    /// Alternating projection onto the affine marginal set and the nonnegative
    /// orthant.
    Alternating,
    /// Exact maximum-profit assignment (also the discretization step).
    Hungarian,
    /// Greedy row/column elimination assignment.
    Greedy,
    /// Clamp negatives and rescale by the Frobenius norm.
    Spectral,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::Softassign,
        OperatorKind::Alternating,
        OperatorKind::Hungarian,
        OperatorKind::Greedy,
        OperatorKind::Spectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Softassign => "softassign",
            OperatorKind::Alternating => "alternating",
            OperatorKind::Hungarian => "hungarian",
            OperatorKind::Greedy => "greedy",
            OperatorKind::Spectral => "spectral",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown operator '{s}'")))
    }
}

/// Output of a relaxation operator, with its inner-loop bookkeeping.
#[derive(Debug, Clone)]
pub struct OperatorResult {
    pub matrix: Array2<f64>,
    /// Normalization sweeps (or projection rounds) actually performed.
    pub inner_iterations: usize,
    /// Whether the inner tolerance was reached before the iteration cap.
    pub converged: bool,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn check_tolerance(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be finite and nonnegative, got {eps}"
        )));
    }
    Ok(())
}

fn check_nonempty(x: &Array2<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    Ok(())
}

/// Alternating row/column normalization until the sweep-to-sweep L1 change
/// drops below `eps`. Columns are normalized last, so their sums are exact on
/// return even for rectangular inputs.
fn sinkhorn(mut s: Array2<f64>, eps: f64, max_inner: usize) -> Result<OperatorResult> {
    let mut prev = s.clone();
    let mut iterations = 0;
    let mut converged = false;
    for t in 1..=max_inner {
        prev.assign(&s);
        for mut row in s.rows_mut() {
            let sum = row.sum();
            if sum <= 0.0 {
                return Err(Error::InvalidArgument(
                    "zero row sum during normalization".into(),
                ));
            }
            row.mapv_inplace(|v| v / sum);
        }
        for mut col in s.columns_mut() {
            let sum = col.sum();
            if sum <= 0.0 {
                return Err(Error::InvalidArgument(
                    "zero column sum during normalization".into(),
                ));
            }
            col.mapv_inplace(|v| v / sum);
        }
        iterations = t;
        if util::l1_diff(&s, &prev) < eps {
            converged = true;
            break;
        }
    }
    Ok(OperatorResult {
        matrix: s,
        inner_iterations: iterations,
        converged,
    })
}

/// Softassign with a sharpness that adapts to the input scale and size.
///
/// The input is divided by its largest entry, the inverse temperature is set
/// to `gamma ln(max(rows, cols))`, and `exp(beta (x - 1))` is balanced by
/// Sinkhorn sweeps. Dividing by the maximum makes the operator invariant to
/// positive rescaling of the input, so one `gamma` works across magnitudes.
///
/// A constant input (including all zeros) has every assignment tied and
/// returns the uniform matrix directly. Inputs whose maximum is negative are
/// first shifted by their minimum so the division is meaningful.
pub fn dynamic_softassign(
    x: &Array2<f64>,
    gamma: f64,
    eps: f64,
    max_inner: usize,
) -> Result<OperatorResult> {
    util::check_finite(x)?;
    check_nonempty(x)?;
    check_positive("gamma", gamma)?;
    check_tolerance(eps)?;
    check_positive("max_inner", max_inner as f64)?;
    let (r, c) = x.dim();
    let hi = util::max_entry(x);
    let lo = util::min_entry(x);
    if hi == lo {
        return Ok(OperatorResult {
            matrix: Array2::from_elem((r, c), 1.0 / r as f64),
            inner_iterations: 0,
            converged: true,
        });
    }
    let shifted;
    let xr = if hi <= 0.0 {
        shifted = x.mapv(|v| v - lo);
        &shifted
    } else {
        x
    };
    let hi = util::max_entry(xr);
    let beta = gamma * (r.max(c) as f64).ln();
    let s = xr.mapv(|v| (beta * (v / hi - 1.0)).exp());
    sinkhorn(s, eps, max_inner)
}

/// Softassign at a caller-chosen inverse temperature `beta`.
///
/// `exp(beta x)` is balanced by Sinkhorn sweeps; the maximum entry is
/// subtracted inside the exponential purely to avoid overflow (a constant
/// shift cancels in the first row normalization).
pub fn softassign(x: &Array2<f64>, beta: f64, eps: f64, max_inner: usize) -> Result<OperatorResult> {
    util::check_finite(x)?;
    check_nonempty(x)?;
    check_positive("beta", beta)?;
    check_tolerance(eps)?;
    check_positive("max_inner", max_inner as f64)?;
    let hi = util::max_entry(x);
    let s = x.mapv(|v| (beta * (v - hi)).exp());
    sinkhorn(s, eps, max_inner)
}

/// Alternating projection onto the unit-marginal affine set and the
/// nonnegative orthant.
///
/// The affine step has the closed form
/// `X + (1/n + sum(X)/n^2 - rowsum_i/n - colsum_j/n)` per entry; the orthant
/// step clamps negatives to zero. Stops when the round-to-round L1 change
/// drops below `eps` (pass 0 to always run `max_iter` rounds). The returned
/// matrix is nonnegative but its marginals are only approximate, and for
/// badly scaled inputs the iteration may exhaust `max_iter` without
/// converging; `converged` reports which happened.
pub fn alternating_projection(x: &Array2<f64>, max_iter: usize, eps: f64) -> Result<OperatorResult> {
    util::check_finite(x)?;
    check_nonempty(x)?;
    if x.nrows() != x.ncols() {
        return Err(Error::Shape(format!(
            "alternating projection needs a square input, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    check_tolerance(eps)?;
    check_positive("max_iter", max_iter as f64)?;
    let mut cur = x.clone();
    let mut prev = x.clone();
    let mut iterations = 0;
    let mut converged = false;
    for t in 1..=max_iter {
        prev.assign(&cur);
        project_marginals(&mut cur);
        cur.mapv_inplace(|v| v.max(0.0));
        iterations = t;
        if util::l1_diff(&cur, &prev) < eps {
            converged = true;
            break;
        }
    }
    Ok(OperatorResult {
        matrix: cur,
        inner_iterations: iterations,
        converged,
    })
}

/// Orthogonal projection onto `{X : X 1 = 1, X' 1 = 1}`.
fn project_marginals(x: &mut Array2<f64>) {
    let n = x.nrows();
    let nf = n as f64;
    let total = x.sum();
    let row_sums: Vec<f64> = x.rows().into_iter().map(|r| r.sum()).collect();
    let col_sums: Vec<f64> = x.columns().into_iter().map(|c| c.sum()).collect();
    let base = 1.0 / nf + total / (nf * nf);
    for ((i, j), v) in x.indexed_iter_mut() {
        *v += base - row_sums[i] / nf - col_sums[j] / nf;
    }
}

/// Maximum-profit assignment by the Jonker-Volgenant shortest augmenting path
/// method, O(n^3). Rectangular inputs are zero-padded to square internally;
/// the result pairs every node on the smaller side. Ties resolve
/// deterministically (a uniform square matrix yields the identity).
pub fn hungarian(x: &Array2<f64>) -> Result<PermutationMatching> {
    util::check_finite(x)?;
    check_nonempty(x)?;
    let (r, c) = x.dim();
    let dim = r.max(c);
    let hi = util::max_entry(x);
    // Minimize hi - x, padded with zero cost.
    let cost = |i: usize, j: usize| -> f64 {
        if i < r && j < c {
            hi - x[[i, j]]
        } else {
            0.0
        }
    };
    // p[j] = row matched to column j; `dim` doubles as "none" and as the
    // virtual start column of each augmenting search.
    let mut u = vec![0.0f64; dim + 1];
    let mut v = vec![0.0f64; dim + 1];
    let mut p = vec![dim; dim + 1];
    for i in 0..dim {
        let mut j0 = dim;
        p[dim] = i;
        let mut minv = vec![f64::INFINITY; dim + 1];
        let mut way = vec![dim; dim + 1];
        let mut used = vec![false; dim + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = dim;
            for j in 0..dim {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=dim {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == dim {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == dim {
                break;
            }
        }
    }
    let mut pairs = Vec::with_capacity(r.min(c));
    for j in 0..dim {
        if p[j] < r && j < c {
            pairs.push((p[j], j));
        }
    }
    PermutationMatching::new(pairs, r, c)
}

/// Greedy assignment: repeatedly take the largest remaining entry and retire
/// its row and column. Ties go to the smallest row index, then column index.
pub fn greedy_assign(x: &Array2<f64>) -> Result<PermutationMatching> {
    util::check_finite(x)?;
    check_nonempty(x)?;
    let (r, c) = x.dim();
    let mut row_used = vec![false; r];
    let mut col_used = vec![false; c];
    let mut pairs = Vec::with_capacity(r.min(c));
    for _ in 0..r.min(c) {
        let mut best = f64::NEG_INFINITY;
        let mut at = (0, 0);
        for i in 0..r {
            if row_used[i] {
                continue;
            }
            for j in 0..c {
                if !col_used[j] && x[[i, j]] > best {
                    best = x[[i, j]];
                    at = (i, j);
                }
            }
        }
        row_used[at.0] = true;
        col_used[at.1] = true;
        pairs.push(at);
    }
    PermutationMatching::new(pairs, r, c)
}

/// Clamps negatives to zero and rescales to unit Frobenius norm.
pub fn spectral_normalize(x: &Array2<f64>) -> Result<OperatorResult> {
    util::check_finite(x)?;
    check_nonempty(x)?;
    let clamped = x.mapv(|v| v.max(0.0));
    let norm = util::frobenius(&clamped);
    if norm == 0.0 {
        return Err(Error::InvalidArgument(
            "spectral normalization needs at least one positive entry".into(),
        ));
    }
    Ok(OperatorResult {
        matrix: clamped / norm,
        inner_iterations: 1,
        converged: true,
    })
}

/// Subtracts a constant offset from every entry.
pub fn offset_input(x: &Array2<f64>, b: f64) -> Array2<f64> {
    x.mapv(|v| v - b)
}

/// The 0/1 matrix of a matching (ones exactly at matched pairs).
pub fn permutation_to_matrix(p: &PermutationMatching) -> Array2<f64> {
    p.to_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(r: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::zeros((r, c));
        for v in m.iter_mut() {
            *v = rng.random::<f64>();
        }
        m
    }

    fn assert_doubly_stochastic(m: &Array2<f64>, tol: f64) {
        for (j, col) in m.columns().into_iter().enumerate() {
            assert!((col.sum() - 1.0).abs() < tol, "column {j} sums to {}", col.sum());
        }
        if m.nrows() == m.ncols() {
            for (i, row) in m.rows().into_iter().enumerate() {
                assert!((row.sum() - 1.0).abs() < tol, "row {i} sums to {}", row.sum());
            }
        }
        assert!(m.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn softassign_on_constant_input_is_uniform() {
        for c in [0.0, 1.0, -3.5] {
            let x = Array2::from_elem((2, 2), c);
            let r = dynamic_softassign(&x, 5.0, 1e-9, 100).unwrap();
            assert_eq!(r.matrix, Array2::from_elem((2, 2), 0.5));
            assert!(r.converged);
        }
    }

    #[test]
    fn softassign_output_is_doubly_stochastic() {
        let x = random_matrix(7, 7, 3);
        let r = dynamic_softassign(&x, 5.0, 1e-10, 1000).unwrap();
        assert!(r.converged);
        assert_doubly_stochastic(&r.matrix, 1e-8);
    }

    #[test]
    fn softassign_sharpens_toward_the_best_assignment() {
        let x = array![[10.0, 1.0, 2.0], [0.5, 9.0, 1.0], [2.0, 1.5, 8.0]];
        let mut last_min_diag = 0.0;
        for gamma in [1.0, 3.0, 5.0, 10.0] {
            let r = dynamic_softassign(&x, gamma, 1e-10, 2000).unwrap();
            let min_diag = (0..3).map(|i| r.matrix[[i, i]]).fold(f64::INFINITY, f64::min);
            assert!(
                min_diag >= last_min_diag,
                "gamma {gamma} flattened the winners: {min_diag} < {last_min_diag}"
            );
            last_min_diag = min_diag;
        }
        assert!(last_min_diag > 0.9);
    }

    #[test]
    fn softassign_is_invariant_to_positive_scaling() {
        let x = random_matrix(8, 8, 11);
        let scaled = x.mapv(|v| v * 10.0);
        let a = dynamic_softassign(&x, 5.0, 1e-11, 2000).unwrap();
        let b = dynamic_softassign(&scaled, 5.0, 1e-11, 2000).unwrap();
        let diff = crate::util::max_abs_diff(&a.matrix, &b.matrix);
        assert!(diff < 1e-12, "scaling changed the output by {diff:e}");
    }

    #[test]
    fn softassign_handles_all_negative_inputs() {
        let x = array![[-5.0, -1.0], [-2.0, -4.0]];
        let r = dynamic_softassign(&x, 5.0, 1e-10, 1000).unwrap();
        assert_doubly_stochastic(&r.matrix, 1e-8);
        // the least negative entry should win its row
        assert!(r.matrix[[0, 1]] > r.matrix[[0, 0]]);
    }

    #[test]
    fn softassign_average_profit_gap_is_within_the_sharpness_bound() {
        let n = 20;
        let x = random_matrix(n, n, 7);
        for gamma in [3.0, 10.0] {
            let s = dynamic_softassign(&x, gamma, 1e-9, 5000).unwrap();
            assert!(s.converged);
            let best = hungarian(&x).unwrap();
            let opt: f64 = best.pairs().iter().map(|&(i, j)| x[[i, j]]).sum();
            let soft = crate::util::inner(&s.matrix, &x);
            let gap = (opt - soft) / n as f64;
            assert!(
                gap <= 1.0 / gamma + 1e-6,
                "gamma {gamma}: average gap {gap} exceeds {}",
                1.0 / gamma
            );
        }
    }

    #[test]
    fn fixed_beta_softassign_ignores_constant_offsets() {
        let x = random_matrix(6, 6, 19);
        let beta = 5.0 * 6.0f64.ln();
        let plain = softassign(&x, beta, 1e-13, 5000).unwrap();
        for b in [-4.0, 0.3, 50.0] {
            let off = softassign(&offset_input(&x, b), beta, 1e-13, 5000).unwrap();
            let diff = crate::util::max_abs_diff(&plain.matrix, &off.matrix);
            assert!(diff < 1e-10, "offset {b} moved the output by {diff:e}");
        }
    }

    #[test]
    fn alternating_projection_fixes_doubly_stochastic_inputs() {
        let m = array![[0.5, 0.5], [0.5, 0.5]];
        let r = alternating_projection(&m, 30, 1e-9).unwrap();
        assert!(r.converged);
        assert_eq!(r.inner_iterations, 1);
        assert!(crate::util::max_abs_diff(&r.matrix, &m) < 1e-15);
    }

    #[test]
    fn alternating_projection_single_round_matches_the_closed_form() {
        // marginal projection sends [[2,0],[0,2]] to [[1.5,-0.5],[-0.5,1.5]],
        // and the orthant projection clamps the negatives
        let x = array![[2.0, 0.0], [0.0, 2.0]];
        let r = alternating_projection(&x, 1, 1e-9).unwrap();
        assert!(!r.converged);
        assert_eq!(r.matrix, array![[1.5, 0.0], [0.0, 1.5]]);
    }

    #[test]
    fn alternating_projection_converges_on_small_inputs() {
        let x = array![[2.0, 0.0], [0.0, 2.0]];
        let r = alternating_projection(&x, 200, 1e-12).unwrap();
        assert!(r.converged);
        assert!(crate::util::max_abs_diff(&r.matrix, &Array2::eye(2)) < 1e-9);
    }

    #[test]
    fn alternating_projection_stalls_on_large_magnitudes() {
        let x = random_matrix(30, 30, 5).mapv(|v| v * 100.0);
        let r = alternating_projection(&x, 30, 1e-6).unwrap();
        assert!(!r.converged, "expected the iteration cap at magnitude 100");
    }

    #[test]
    fn alternating_projection_requires_square_input() {
        let x = Array2::zeros((3, 2));
        assert!(matches!(
            alternating_projection(&x, 10, 1e-9),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn hungarian_picks_the_swap_when_it_pays() {
        let x = array![[4.0, 3.0], [3.0, 1.0]];
        let m = hungarian(&x).unwrap();
        assert_eq!(m.pairs(), &[(0, 1), (1, 0)]);
    }

    #[test]
    fn hungarian_breaks_uniform_ties_to_the_identity() {
        let x = Array2::from_elem((3, 3), 1.0);
        let m = hungarian(&x).unwrap();
        assert_eq!(m.pairs(), &[(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn hungarian_handles_rectangular_profit() {
        let x = array![[5.0, 1.0], [2.0, 2.0], [0.0, 4.0]];
        let m = hungarian(&x).unwrap();
        assert_eq!(m.pairs(), &[(0, 0), (2, 1)]);
    }

    #[test]
    fn greedy_takes_the_largest_entry_first() {
        let x = array![[4.0, 3.0], [3.0, 1.0]];
        let m = greedy_assign(&x).unwrap();
        assert_eq!(m.pairs(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_ties_resolve_to_smallest_indices() {
        let x = Array2::from_elem((3, 3), 2.0);
        let m = greedy_assign(&x).unwrap();
        assert_eq!(m.pairs(), &[(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn spectral_normalize_rescales_and_clamps() {
        let r = spectral_normalize(&Array2::eye(2)).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        assert!(crate::util::max_abs_diff(&r.matrix, &array![[s, 0.0], [0.0, s]]) < 1e-15);

        let r = spectral_normalize(&array![[-1.0, 3.0], [4.0, 0.0]]).unwrap();
        assert_eq!(r.matrix, array![[0.0, 0.6], [0.8, 0.0]]);
    }

    #[test]
    fn spectral_normalize_rejects_nonpositive_input() {
        let x = Array2::from_elem((2, 2), -1.0);
        assert!(spectral_normalize(&x).is_err());
    }

    #[test]
    fn offset_input_shifts_every_entry() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(offset_input(&x, 1.5), array![[-0.5, 0.5], [1.5, 2.5]]);
    }

    #[test]
    fn permutation_matrix_embeds_rectangular_matchings() {
        let p = PermutationMatching::new(vec![(0, 0), (2, 1)], 3, 2).unwrap();
        assert_eq!(
            permutation_to_matrix(&p),
            array![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn softassign_marginals_hold_for_any_nonnegative_input(seed in 0u64..1000, cols in 2usize..7, extra in 0usize..3) {
            let rows = cols + extra;
            let x = random_matrix(rows, cols, seed);
            let res = dynamic_softassign(&x, 5.0, 1e-10, 2000).unwrap();
            prop_assert!(res.converged);
            for col in res.matrix.columns() {
                prop_assert!((col.sum() - 1.0).abs() < 1e-8);
            }
            if res.matrix.nrows() == res.matrix.ncols() {
                for row in res.matrix.rows() {
                    prop_assert!((row.sum() - 1.0).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn hungarian_matches_exhaustive_search(seed in 0u64..1000, n in 2usize..6) {
            let x = random_matrix(n, n, seed);
            let fast = hungarian(&x).unwrap();
            let (_, best) = oracles::brute_force_lap(&x).unwrap();
            let score: f64 = fast.pairs().iter().map(|&(i, j)| x[[i, j]]).sum();
            prop_assert!((score - best).abs() < 1e-9, "JV found {score}, exhaustive {best}");
        }

        #[test]
        fn hungarian_dominates_greedy(seed in 0u64..1000, n in 2usize..8) {
            let x = random_matrix(n, n, seed);
            let h: f64 = hungarian(&x).unwrap().pairs().iter().map(|&(i, j)| x[[i, j]]).sum();
            let g: f64 = greedy_assign(&x).unwrap().pairs().iter().map(|&(i, j)| x[[i, j]]).sum();
            prop_assert!(h >= g - 1e-9);
        }

        #[test]
        fn alternating_projection_output_is_nonnegative(seed in 0u64..1000, n in 2usize..8) {
            let x = random_matrix(n, n, seed).mapv(|v| v * 4.0 - 2.0);
            let r = alternating_projection(&x, 50, 1e-9).unwrap();
            prop_assert!(r.matrix.iter().all(|&v| v >= 0.0));
        }
    }
}
