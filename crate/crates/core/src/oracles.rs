//! Slow, independent reference computations.
//!
//! Everything here trades speed for obviousness: exhaustive enumeration,
//! explicit Kronecker products, dense grid scans. The test suite and the
//! `selftest` command check the fast paths against these.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::graph::{self, AttributedGraph, PermutationMatching, SolverConfig};
use crate::ops;
use crate::solver;
use crate::stepsize;
use crate::synth::{self, Connectivity};
use crate::util;
use crate::{Error, Result};

/// Largest side for exhaustive permutation enumeration (8! = 40320).
pub const MAX_EXHAUSTIVE: usize = 8;

/// Calls `f` with every permutation of `0..n` in lexicographic order.
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        f(&p);
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            break;
        };
        let j = ((i + 1)..n).rev().find(|&j| p[j] > p[i]).expect("successor");
        p.swap(i, j);
        p[(i + 1)..].reverse();
    }
}

fn check_exhaustive_size(n: usize) -> Result<()> {
    if n > MAX_EXHAUSTIVE {
        return Err(Error::TooLarge {
            n,
            max: MAX_EXHAUSTIVE,
        });
    }
    Ok(())
}

/// Maximum-profit assignment by trying every permutation. Ties resolve to
/// the lexicographically first maximizer.
pub fn brute_force_lap(x: &Array2<f64>) -> Result<(PermutationMatching, f64)> {
    util::check_finite(x)?;
    let (r, c) = x.dim();
    if r == 0 || c == 0 {
        return Err(Error::Shape("empty profit matrix".into()));
    }
    let dim = r.max(c);
    check_exhaustive_size(dim)?;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_perm: Vec<usize> = Vec::new();
    for_each_permutation(dim, |p| {
        let score: f64 = (0..r)
            .filter(|&i| p[i] < c)
            .map(|i| x[[i, p[i]]])
            .sum();
        if score > best_score {
            best_score = score;
            best_perm = p.to_vec();
        }
    });
    let pairs: Vec<(usize, usize)> = (0..r)
        .filter(|&i| best_perm[i] < c)
        .map(|i| (i, best_perm[i]))
        .collect();
    Ok((PermutationMatching::new(pairs, r, c)?, best_score))
}

fn qap_profit(
    a: &Array2<f64>,
    b: &Array2<f64>,
    k: Option<&Array2<f64>>,
    lambda: f64,
    p: &[usize],
) -> f64 {
    let n = p.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[[i, j]] * b[[p[i], p[j]]];
        }
    }
    let mut z = 0.5 * quad;
    if let Some(k) = k {
        for i in 0..n {
            z += lambda * k[[i, p[i]]];
        }
    }
    z
}

/// Profit of every permutation, in lexicographic order. Works on raw square
/// matrices (any sign), so transformed affinities can be compared too.
pub fn qap_scores_raw(
    a: &Array2<f64>,
    b: &Array2<f64>,
    k: Option<&Array2<f64>>,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "need same-size square matrices, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(k) = k {
        if k.dim() != (n, n) {
            return Err(Error::Shape(format!(
                "feature kernel is {}x{}, expected {n}x{n}",
                k.nrows(),
                k.ncols()
            )));
        }
    }
    util::check_finite(a)?;
    util::check_finite(b)?;
    check_exhaustive_size(n)?;
    let mut scores = Vec::new();
    for_each_permutation(n, |p| scores.push(qap_profit(a, b, k, lambda, p)));
    Ok(scores)
}

/// Indices (in lexicographic permutation order) whose score is within
/// `rel_tol` of the maximum. Useful for comparing maximizer sets.
pub fn argmax_set(scores: &[f64], rel_tol: f64) -> Vec<usize> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = rel_tol * best.abs().max(1.0);
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= best - slack)
        .map(|(i, _)| i)
        .collect()
}

/// Exhaustive maximizer of the matching profit over all permutations.
pub fn brute_force_qap(
    ga: &AttributedGraph,
    gb: &AttributedGraph,
    lambda: f64,
) -> Result<(PermutationMatching, f64)> {
    let n = ga.n();
    if gb.n() != n {
        return Err(Error::Shape(format!(
            "exhaustive matching needs equal sizes, got {} and {}",
            n,
            gb.n()
        )));
    }
    check_exhaustive_size(n)?;
    let k = graph::feature_kernel(ga, gb)?;
    let a = ga.affinity();
    let b = gb.affinity();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_perm: Vec<usize> = Vec::new();
    for_each_permutation(n, |p| {
        let z = qap_profit(a, b, k.as_ref(), lambda, p);
        if z > best_score {
            best_score = z;
            best_perm = p.to_vec();
        }
    });
    let pairs = best_perm.iter().copied().enumerate().collect();
    Ok((PermutationMatching::new(pairs, n, n)?, best_score))
}

/// Dense Kronecker product `a (x) b`.
pub fn kronecker(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            for p in 0..rb {
                for q in 0..cb {
                    out[[i * rb + p, j * cb + q]] = a[[i, j]] * b[[p, q]];
                }
            }
        }
    }
    out
}

/// Row-major flattening of a matrix.
pub fn vec_row(m: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(m.iter().copied())
}

/// Largest entry of `(A (x) B) vec(M) - vec(A M B)` under row-major `vec`.
///
/// For symmetric `b` this is pure floating-point noise; a transposed
/// convention makes it order one, which is exactly what the check exists to
/// catch.
pub fn kron_vec_check(a: &Array2<f64>, b: &Array2<f64>, m: &Array2<f64>) -> Result<f64> {
    let (n, nn) = a.dim();
    let (mm, mm2) = b.dim();
    if n != nn || mm != mm2 || m.dim() != (n, mm) {
        return Err(Error::Shape(format!(
            "need square A ({n}x{nn}), square B ({mm}x{mm2}), and {n}x{mm} M"
        )));
    }
    check_exhaustive_size(n)?;
    check_exhaustive_size(mm)?;
    let w = kronecker(a, b);
    let lhs = w.dot(&vec_row(m));
    let rhs = vec_row(&a.dot(m).dot(b));
    Ok(lhs
        .iter()
        .zip(rhs.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Step-size coefficients computed the long way, through the explicit
/// Kronecker matrix: `a = 1/2 e' W e`, `b = m' W e + lambda k' e` with
/// `e = vec(D) - vec(M)` and `W = A (x) B`.
pub fn alpha_coeffs_vector(
    a: &Array2<f64>,
    b: &Array2<f64>,
    k: Option<&Array2<f64>>,
    m: &Array2<f64>,
    d: &Array2<f64>,
    lambda: f64,
) -> Result<(f64, f64)> {
    if m.dim() != (a.nrows(), b.nrows()) || d.dim() != m.dim() {
        return Err(Error::Shape(format!(
            "iterate/direction must be {}x{}",
            a.nrows(),
            b.nrows()
        )));
    }
    check_exhaustive_size(a.nrows())?;
    check_exhaustive_size(b.nrows())?;
    let w = kronecker(a, b);
    let mv = vec_row(m);
    let e = &vec_row(d) - &mv;
    let we = w.dot(&e);
    let a_coeff = 0.5 * e.dot(&we);
    let mut b_coeff = mv.dot(&we);
    if let Some(k) = k {
        b_coeff += lambda * vec_row(k).dot(&e);
    }
    Ok((a_coeff, b_coeff))
}

/// Inertia of a symmetric matrix: eigenvalue counts by sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EigenSignature {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl EigenSignature {
    /// Signature of the Kronecker product (eigenvalues multiply pairwise).
    pub fn kron_with(self, other: Self) -> Self {
        let positive = self.positive * other.positive + self.negative * other.negative;
        let negative = self.positive * other.negative + self.negative * other.positive;
        let total = (self.positive + self.negative + self.zero)
            * (other.positive + other.negative + other.zero);
        EigenSignature {
            positive,
            negative,
            zero: total - positive - negative,
        }
    }
}

/// Counts eigenvalues of a symmetric matrix above/below `1e-8 ||X||_F`.
///
/// Distance matrices of non-degenerate point sets come out as one positive
/// and `n - 1` negative eigenvalues.
pub fn eigen_signature(x: &Array2<f64>) -> Result<EigenSignature> {
    let n = x.nrows();
    if x.ncols() != n || n == 0 {
        return Err(Error::Shape(format!(
            "eigen signature needs a nonempty square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    util::check_finite(x)?;
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (x[[i, j]] - x[[j, i]]).abs();
            if delta > 1e-9 {
                return Err(Error::Asymmetric { i, j, delta });
            }
        }
    }
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (x[[i, j]] + x[[j, i]]));
    let eigenvalues = dm.symmetric_eigen().eigenvalues;
    let tau = 1e-8 * util::frobenius(x).max(1.0);
    let mut sig = EigenSignature {
        positive: 0,
        negative: 0,
        zero: 0,
    };
    for &ev in eigenvalues.iter() {
        if ev > tau {
            sig.positive += 1;
        } else if ev < -tau {
            sig.negative += 1;
        } else {
            sig.zero += 1;
        }
    }
    Ok(sig)
}

/// Best step over a dense grid on [0, 1], by direct profit evaluation.
/// Returns `(alpha, profit)`; ties go to the smallest alpha.
pub fn grid_alpha_max(
    m: &Array2<f64>,
    d: &Array2<f64>,
    a: &Array2<f64>,
    b: &Array2<f64>,
    k: Option<&Array2<f64>>,
    lambda: f64,
    points: usize,
) -> Result<(f64, f64)> {
    if points < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    if m.dim() != d.dim() {
        return Err(Error::Shape("iterate and direction differ in shape".into()));
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..points {
        let alpha = i as f64 / (points - 1) as f64;
        let combo = stepsize::apply_step(m, d, alpha.min(1.0))?;
        let z = graph::objective_given(&combo, a, b, k, lambda);
        if z > best.1 {
            best = (alpha, z);
        }
    }
    Ok(best)
}

/// How often the adaptive step lands exactly on 1 for random full distance
/// pairs, against the `(1 - 1/n)^2` positivity heuristic for `a`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaOneStats {
    pub observed: f64,
    pub estimate: f64,
    pub full_steps: usize,
    pub total_steps: usize,
}

pub fn alpha_one_frequency(trials: usize, n: usize, seed: u64) -> Result<AlphaOneStats> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    let config = SolverConfig::default();
    let mut full_steps = 0;
    let mut total_steps = 0;
    for t in 0..trials as u64 {
        let ga = synth::random_geometric_graph(n, seed.wrapping_add(2 * t), Connectivity::Full)?;
        let gb =
            synth::random_geometric_graph(n, seed.wrapping_add(2 * t + 1), Connectivity::Full)?;
        let r = solver::scg_solve(&ga, &gb, &config)?;
        total_steps += r.alpha_trace.len();
        full_steps += r.alpha_trace.iter().filter(|&&a| a == 1.0).count();
    }
    let nf = n as f64;
    Ok(AlphaOneStats {
        observed: full_steps as f64 / total_steps as f64,
        estimate: (1.0 - 1.0 / nf) * (1.0 - 1.0 / nf),
        full_steps,
        total_steps,
    })
}

/// True when the sequence never drops by more than `slack`.
pub fn is_nondecreasing(trace: &[f64], slack: f64) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - slack)
}

/// Outcome of one selftest check.
#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the oracle suite, optionally restricted to checks whose name
/// contains `filter`.
pub fn run_selftest(filter: Option<&str>) -> Vec<SelftestReport> {
    let checks: [(&'static str, fn() -> (bool, String)); 6] = [
        ("kron-vec-identity", check_kron_identity),
        ("eigen-signature", check_eigen_signatures),
        ("qap-brute-force", check_qap_agreement),
        ("softassign-profit-bound", check_profit_bound),
        ("softassign-offset-invariance", check_offset_invariance),
        ("monotone-ascent", check_monotone_ascent),
    ];
    checks
        .into_iter()
        .filter(|(name, _)| filter.map_or(true, |f| name.contains(f)))
        .map(|(name, check)| {
            let (passed, detail) = check();
            SelftestReport {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

fn symmetric_random(n: usize, seed: u64) -> Array2<f64> {
    let raw = synth::random_profit(n, 1.0, seed).expect("valid profit spec");
    let mut out = raw;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[[i, j]] + out[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

fn check_kron_identity() -> (bool, String) {
    let mut worst_identity = 0.0f64;
    let mut worst_coeff = 0.0f64;
    for seed in 0..20u64 {
        let n = 2 + (seed % 4) as usize;
        let a = symmetric_random(n, 3 * seed);
        let b = symmetric_random(n, 3 * seed + 1);
        let m = ops::dynamic_softassign(
            &synth::random_profit(n, 1.0, 3 * seed + 2).unwrap(),
            5.0,
            1e-10,
            1000,
        )
        .unwrap()
        .matrix;
        let d = ops::hungarian(&m).unwrap().to_matrix();
        match kron_vec_check(&a, &b, &m) {
            Ok(res) => worst_identity = worst_identity.max(res),
            Err(e) => return (false, format!("seed {seed}: {e}")),
        }
        let ga = AttributedGraph::new(a.clone(), None).unwrap();
        let gb = AttributedGraph::new(b.clone(), None).unwrap();
        let dec = stepsize::adaptive_alpha(&m, &d, &ga, &gb, 0.0).unwrap();
        let (av, bv) = alpha_coeffs_vector(&a, &b, None, &m, &d, 0.0).unwrap();
        worst_coeff = worst_coeff.max((dec.a - av).abs()).max((dec.b - bv).abs());
    }
    (
        worst_identity <= 1e-8 && worst_coeff <= 1e-8,
        format!("max identity residual {worst_identity:.3e}, max coefficient gap {worst_coeff:.3e}"),
    )
}

fn check_eigen_signatures() -> (bool, String) {
    for seed in 0..25u64 {
        let n = if seed % 2 == 0 { 5 } else { 20 };
        let g = synth::random_geometric_graph(n, 100 + seed, Connectivity::Full).unwrap();
        let sig = match eigen_signature(g.affinity()) {
            Ok(s) => s,
            Err(e) => return (false, format!("seed {seed}: {e}")),
        };
        let want = EigenSignature {
            positive: 1,
            negative: n - 1,
            zero: 0,
        };
        if sig != want {
            return (false, format!("seed {seed}, n {n}: signature {sig:?}"));
        }
    }
    (true, "25 distance matrices, all (1, n-1)".into())
}

fn check_qap_agreement() -> (bool, String) {
    let mut hits = 0;
    let total = 12;
    for seed in 0..total as u64 {
        let n = 4 + (seed % 3) as usize;
        let g = synth::random_geometric_graph(n, 200 + seed, Connectivity::Full).unwrap();
        let (h, _) = synth::plant_permutation(&g, 300 + seed).unwrap();
        let r = solver::scg_solve(&g, &h, &SolverConfig::default()).unwrap();
        let (_, best) = brute_force_qap(&g, &h, 1.0).unwrap();
        if (r.objective - best).abs() <= 1e-9 {
            hits += 1;
        }
    }
    (hits * 10 >= total * 9, format!("{hits}/{total} exhaustive optima reached"))
}

fn check_profit_bound() -> (bool, String) {
    let n = 40;
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10u64 {
        let x = synth::random_profit(n, 1.0, 400 + seed).unwrap();
        let gamma = if seed % 2 == 0 { 3.0 } else { 10.0 };
        let s = ops::dynamic_softassign(&x, gamma, 1e-9, 5000).unwrap();
        if !s.converged {
            return (false, format!("seed {seed}: softassign did not converge"));
        }
        let (_, opt) = match ops::hungarian(&x) {
            Ok(p) => {
                let score: f64 = p.pairs().iter().map(|&(i, j)| x[[i, j]]).sum();
                (p, score)
            }
            Err(e) => return (false, format!("seed {seed}: {e}")),
        };
        let margin = (opt - util::inner(&s.matrix, &x)) / n as f64 - 1.0 / gamma;
        worst = worst.max(margin);
        if margin > 1e-6 {
            return (
                false,
                format!("seed {seed}: bound violated by {margin:.3e}"),
            );
        }
    }
    (true, format!("worst bound margin {worst:.3e}"))
}

fn check_offset_invariance() -> (bool, String) {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let x = synth::random_profit(12, 1.0, 500 + seed).unwrap();
        let beta = 5.0 * 12.0f64.ln();
        let plain = ops::softassign(&x, beta, 1e-13, 5000).unwrap();
        for b in [-5.0, 0.3, 100.0] {
            let off = ops::softassign(&ops::offset_input(&x, b), beta, 1e-13, 5000).unwrap();
            worst = worst.max(util::max_abs_diff(&plain.matrix, &off.matrix));
        }
    }
    (worst <= 1e-10, format!("max offset-induced change {worst:.3e}"))
}

fn check_monotone_ascent() -> (bool, String) {
    for seed in 0..4u64 {
        let g = synth::random_geometric_graph(12, 600 + seed, Connectivity::Full).unwrap();
        let (h, _) = synth::plant_permutation(&g, 700 + seed).unwrap();
        for op in ops::OperatorKind::ALL {
            let config = SolverConfig {
                operator: op,
                ..SolverConfig::default()
            };
            let r = solver::scg_solve(&g, &h, &config).unwrap();
            if !is_nondecreasing(&r.objective_trace, 1e-9) {
                return (
                    false,
                    format!("seed {seed}, operator {op}: profit decreased"),
                );
            }
        }
    }
    (true, "20 adaptive solves, all profit traces nondecreasing".into())
}
