//! Seeded generators for synthetic benchmark instances.
//!
//! All randomness comes from `ChaCha8Rng`, a counter-based generator that
//! produces identical streams on every platform, so a `(spec, seed)` pair
//! pins an instance exactly.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::delaunay;
use crate::graph::{graph_from_points, AttributedGraph, PermutationMatching};
use crate::{Error, Result};

/// Which edges a generated geometric graph keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    /// Every pairwise distance.
    Full,
    /// Only Delaunay edges of the point set.
    Delaunay,
}

impl Connectivity {
    pub fn name(self) -> &'static str {
        match self {
            Connectivity::Full => "full",
            Connectivity::Delaunay => "delaunay",
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Connectivity::Full),
            "delaunay" => Ok(Connectivity::Delaunay),
            _ => Err(Error::InvalidArgument(format!(
                "unknown connectivity '{s}' (use 'full' or 'delaunay')"
            ))),
        }
    }
}

/// Parameters of one synthetic matching instance.
///
/// `generate_pair` derives its three random streams from `seed`, `seed + 1`,
/// and `seed + 2` (points, planted permutation, deletions), so distinct base
/// seeds should be spaced accordingly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GenSpec {
    pub n: usize,
    pub seed: u64,
    /// Affinities are scaled by this magnitude (1.0 leaves distances as-is).
    pub phi: f64,
    /// Percentage of nodes deleted from the second graph.
    pub deletion_pct: f64,
    pub connectivity: Connectivity,
}

impl GenSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            phi: 1.0,
            deletion_pct: 0.0,
            connectivity: Connectivity::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "instance size must be at least 2, got {}",
                self.n
            )));
        }
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "phi must be positive, got {}",
                self.phi
            )));
        }
        if !(self.deletion_pct.is_finite() && (0.0..=100.0).contains(&self.deletion_pct)) {
            return Err(Error::InvalidArgument(format!(
                "deletion percentage must lie in [0, 100], got {}",
                self.deletion_pct
            )));
        }
        Ok(())
    }

    /// Builds a base graph, a relabeled (and optionally thinned) twin, and
    /// the ground-truth correspondence between them.
    pub fn generate_pair(&self) -> Result<InstancePair> {
        self.validate()?;
        let base = random_geometric_graph(self.n, self.seed, self.connectivity)?;
        let base = if self.phi == 1.0 {
            base
        } else {
            // scaled affinities are no longer the distances of any point set,
            // so the coordinates are dropped
            AttributedGraph::new(base.affinity() * self.phi, None)?
        };
        let (twin, truth) = plant_permutation(&base, self.seed + 1)?;
        if self.deletion_pct == 0.0 {
            return Ok(InstancePair {
                a: base,
                b: twin,
                truth,
            });
        }
        let (thinned, survivors) = delete_nodes(&twin, self.deletion_pct, self.seed + 2)?;
        let mut new_index = vec![None; twin.n()];
        for (rank, &orig) in survivors.iter().enumerate() {
            new_index[orig] = Some(rank);
        }
        let pairs: Vec<(usize, usize)> = truth
            .pairs()
            .iter()
            .filter_map(|&(i, j)| new_index[j].map(|r| (i, r)))
            .collect();
        let truth = PermutationMatching::new(pairs, self.n, thinned.n())?;
        Ok(InstancePair {
            a: base,
            b: thinned,
            truth,
        })
    }
}

/// A ready-to-solve instance with its ground truth.
#[derive(Debug, Clone)]
pub struct InstancePair {
    pub a: AttributedGraph,
    pub b: AttributedGraph,
    pub truth: PermutationMatching,
}

/// An n x n profit matrix with i.i.d. uniform entries in `[0, phi)`,
/// generated row-major.
pub fn random_profit(n: usize, phi: f64, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("profit matrix needs n >= 1".into()));
    }
    if !(phi.is_finite() && phi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "phi must be positive, got {phi}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        values.push(rng.random::<f64>() * phi);
    }
    Ok(Array2::from_shape_vec((n, n), values).expect("n*n values"))
}

/// A distance graph on n points drawn uniformly from the unit square
/// (coordinates drawn x-then-y per point, in index order).
///
/// With Delaunay connectivity, non-edges get affinity zero. Degenerate point
/// sets are retried with a tiny jitter a few times before giving up.
pub fn random_geometric_graph(
    n: usize,
    seed: u64,
    connectivity: Connectivity,
) -> Result<AttributedGraph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "geometric graph needs n >= 2, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    match connectivity {
        Connectivity::Full => graph_from_points(&points, None),
        Connectivity::Delaunay => {
            if n < 3 {
                return Err(Error::InvalidArgument(
                    "Delaunay connectivity needs n >= 3".into(),
                ));
            }
            let mut last_err = None;
            for attempt in 0..5 {
                match delaunay::delaunay_edges(&points) {
                    Ok(edges) => {
                        let mut affinity = Array2::zeros((n, n));
                        for (i, j) in edges {
                            let d = (points[i][0] - points[j][0])
                                .hypot(points[i][1] - points[j][1]);
                            affinity[[i, j]] = d;
                            affinity[[j, i]] = d;
                        }
                        return AttributedGraph::new(affinity, None)?.with_coords(points);
                    }
                    Err(e @ Error::Degenerate(_)) => {
                        last_err = Some(e);
                        let scale = 1e-9 * (attempt + 1) as f64;
                        for p in &mut points {
                            p[0] += (rng.random::<f64>() - 0.5) * scale;
                            p[1] += (rng.random::<f64>() - 0.5) * scale;
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(last_err.expect("retries happen only after a degeneracy"))
        }
    }
}

/// Relabels the nodes of `g` by a random permutation `pi`, returning the
/// relabeled graph and the ground truth pairs `(i, pi(i))`.
///
/// The twin satisfies `twin[pi(i)][pi(j)] = g[i][j]` exactly, so the planted
/// matching has zero matching error.
pub fn plant_permutation(
    g: &AttributedGraph,
    seed: u64,
) -> Result<(AttributedGraph, PermutationMatching)> {
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pi: Vec<usize> = (0..n).collect();
    pi.shuffle(&mut rng);

    let src = g.affinity();
    let mut affinity = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            affinity[[pi[i], pi[j]]] = src[[i, j]];
        }
    }
    let features = g.features().map(|f| {
        let mut out = Array2::zeros(f.dim());
        for i in 0..n {
            out.row_mut(pi[i]).assign(&f.row(i));
        }
        out
    });
    let mut twin = AttributedGraph::new(affinity, features)?;
    if let Some(coords) = g.coords() {
        let mut moved = vec![[0.0; 2]; n];
        for i in 0..n {
            moved[pi[i]] = coords[i];
        }
        twin = twin.with_coords(moved)?;
    }
    let truth = PermutationMatching::new((0..n).map(|i| (i, pi[i])).collect(), n, n)?;
    Ok((twin, truth))
}

/// Deletes `round(n q / 100)` uniformly chosen nodes, returning the reduced
/// graph and the sorted original indices of the survivors.
pub fn delete_nodes(
    g: &AttributedGraph,
    q_pct: f64,
    seed: u64,
) -> Result<(AttributedGraph, Vec<usize>)> {
    if !(q_pct.is_finite() && (0.0..=100.0).contains(&q_pct)) {
        return Err(Error::InvalidArgument(format!(
            "deletion percentage must lie in [0, 100], got {q_pct}"
        )));
    }
    let n = g.n();
    let k = (n as f64 * q_pct / 100.0).round() as usize;
    if k == 0 {
        return Ok((g.clone(), (0..n).collect()));
    }
    if n - k < 2 {
        return Err(Error::InvalidArgument(format!(
            "deleting {k} of {n} nodes leaves fewer than 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deleted = vec![false; n];
    for idx in rand::seq::index::sample(&mut rng, n, k) {
        deleted[idx] = true;
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| !deleted[i]).collect();
    let affinity = g
        .affinity()
        .select(Axis(0), &survivors)
        .select(Axis(1), &survivors);
    let features = g.features().map(|f| f.select(Axis(0), &survivors));
    let mut out = AttributedGraph::new(affinity, features)?;
    if let Some(coords) = g.coords() {
        out = out.with_coords(survivors.iter().map(|&i| coords[i]).collect())?;
    }
    Ok((out, survivors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use proptest::prelude::*;

    #[test]
    fn profit_entries_stay_in_range() {
        let m = random_profit(20, 3.0, 9).unwrap();
        assert!(m.iter().all(|&v| (0.0..3.0).contains(&v)));
    }

    #[test]
    fn profit_scales_exactly_with_phi() {
        let base = random_profit(10, 1.0, 42).unwrap();
        let scaled = random_profit(10, 10.0, 42).unwrap();
        for (a, b) in base.iter().zip(scaled.iter()) {
            assert_eq!(*b, 10.0 * *a);
        }
    }

    #[test]
    fn generators_are_deterministic_in_the_seed() {
        let a = random_profit(6, 1.0, 3).unwrap();
        let b = random_profit(6, 1.0, 3).unwrap();
        assert_eq!(a, b);
        let g = random_geometric_graph(12, 8, Connectivity::Delaunay).unwrap();
        let h = random_geometric_graph(12, 8, Connectivity::Delaunay).unwrap();
        assert_eq!(g.affinity(), h.affinity());
        assert!(random_profit(6, 1.0, 4).unwrap() != a);
    }

    #[test]
    fn full_geometric_graph_matches_its_coordinates() {
        let g = random_geometric_graph(5, 1, Connectivity::Full).unwrap();
        let pts = g.coords().unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                assert_eq!(g.affinity()[[i, j]], d);
            }
        }
    }

    #[test]
    fn delaunay_graph_is_a_sparse_subgraph_of_the_full_one() {
        let sparse = random_geometric_graph(30, 2, Connectivity::Delaunay).unwrap();
        let full = random_geometric_graph(30, 2, Connectivity::Full).unwrap();
        let mut edges = 0;
        for i in 0..30 {
            for j in (i + 1)..30 {
                let s = sparse.affinity()[[i, j]];
                if s != 0.0 {
                    edges += 1;
                    assert_eq!(s, full.affinity()[[i, j]]);
                }
            }
        }
        assert!(edges <= 3 * 30 - 6);
        assert!(edges >= 30 - 1);
    }

    #[test]
    fn planted_twin_is_an_exact_relabeling() {
        let g = random_geometric_graph(9, 5, Connectivity::Full).unwrap();
        let (twin, truth) = plant_permutation(&g, 6).unwrap();
        let pi: Vec<usize> = truth.pairs().iter().map(|&(_, j)| j).collect();
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(twin.affinity()[[pi[i], pi[j]]], g.affinity()[[i, j]]);
            }
        }
        assert_eq!(metrics::matching_error(&truth, &g, &twin, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn deletion_strikes_rows_and_columns_together() {
        let g = random_geometric_graph(10, 3, Connectivity::Full).unwrap();
        let (small, survivors) = delete_nodes(&g, 30.0, 7).unwrap();
        assert_eq!(small.n(), 7);
        assert_eq!(survivors.len(), 7);
        for (u, &su) in survivors.iter().enumerate() {
            for (v, &sv) in survivors.iter().enumerate() {
                assert_eq!(small.affinity()[[u, v]], g.affinity()[[su, sv]]);
            }
        }
    }

    #[test]
    fn zero_deletion_is_the_identity() {
        let g = random_geometric_graph(10, 3, Connectivity::Full).unwrap();
        let (same, survivors) = delete_nodes(&g, 0.0, 7).unwrap();
        assert_eq!(same.affinity(), g.affinity());
        assert_eq!(survivors, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn deletion_that_empties_the_graph_is_rejected() {
        let g = random_geometric_graph(3, 3, Connectivity::Full).unwrap();
        assert!(delete_nodes(&g, 50.0, 1).is_err());
        assert!(delete_nodes(&g, 120.0, 1).is_err());
    }

    #[test]
    fn generated_pairs_carry_a_consistent_truth() {
        let spec = GenSpec {
            n: 20,
            seed: 77,
            phi: 1.0,
            deletion_pct: 10.0,
            connectivity: Connectivity::Delaunay,
        };
        let pair = spec.generate_pair().unwrap();
        assert_eq!(pair.a.n(), 20);
        assert_eq!(pair.b.n(), 18);
        assert_eq!(pair.truth.pairs().len(), 18);
        let targets: std::collections::BTreeSet<usize> =
            pair.truth.pairs().iter().map(|&(_, j)| j).collect();
        assert_eq!(targets.len(), 18);
    }

    #[test]
    fn phi_rescales_generated_affinities() {
        let unit = GenSpec::new(8, 4).generate_pair().unwrap();
        let big = GenSpec {
            phi: 100.0,
            ..GenSpec::new(8, 4)
        }
        .generate_pair()
        .unwrap();
        for (x, y) in unit.a.affinity().iter().zip(big.a.affinity().iter()) {
            assert_eq!(*y, 100.0 * *x);
        }
        assert_eq!(unit.truth, big.truth);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn planted_truth_always_scores_perfectly(n in 4usize..12, seed in 0u64..500) {
            let g = random_geometric_graph(n, seed, Connectivity::Full).unwrap();
            let (twin, truth) = plant_permutation(&g, seed + 1).unwrap();
            let err = metrics::matching_error(&truth, &g, &twin, 0.0).unwrap();
            prop_assert_eq!(err, 0.0);
        }

        #[test]
        fn full_affinities_satisfy_the_triangle_inequality(n in 3usize..12, seed in 0u64..500) {
            let g = random_geometric_graph(n, seed, Connectivity::Full).unwrap();
            let a = g.affinity();
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        prop_assert!(a[[i, j]] <= a[[i, l]] + a[[l, j]] + 1e-12);
                    }
                }
            }
        }
    }
}
