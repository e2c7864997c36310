//! Attributed graphs, matching types, JSON I/O, and the matching profit.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ops::OperatorKind;
use crate::stepsize::AlphaMode;
use crate::util;
use crate::{Error, Result};

/// Largest asymmetry the loader repairs by averaging; anything above is an error.
const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// An undirected weighted graph with optional node features and coordinates.
///
/// The affinity matrix is symmetric with nonnegative entries; zero means "no
/// edge". Features are one row per node. Construction validates everything,
/// so downstream code can rely on a well-formed instance.
#[derive(Debug, Clone)]
pub struct AttributedGraph {
    affinity: Array2<f64>,
    features: Option<Array2<f64>>,
    coords: Option<Vec<[f64; 2]>>,
}

impl AttributedGraph {
    /// Builds a graph from an exactly symmetric, nonnegative affinity matrix.
    pub fn new(affinity: Array2<f64>, features: Option<Array2<f64>>) -> Result<Self> {
        let (r, c) = affinity.dim();
        if r != c {
            return Err(Error::Shape(format!("affinity must be square, got {r}x{c}")));
        }
        if r < 2 {
            return Err(Error::InvalidArgument(
                "a graph needs at least 2 nodes".into(),
            ));
        }
        util::check_finite(&affinity)?;
        for ((i, j), &v) in affinity.indexed_iter() {
            if v < 0.0 {
                return Err(Error::NegativeAffinity { i, j, value: v });
            }
            if i < j {
                let delta = (v - affinity[[j, i]]).abs();
                if delta > 0.0 {
                    return Err(Error::Asymmetric { i, j, delta });
                }
            }
        }
        if let Some(f) = &features {
            if f.nrows() != r {
                return Err(Error::Shape(format!(
                    "features have {} rows but the graph has {} nodes",
                    f.nrows(),
                    r
                )));
            }
            if f.ncols() == 0 {
                return Err(Error::Shape("features must have at least one column".into()));
            }
            util::check_finite(f)?;
        }
        Ok(Self {
            affinity,
            features,
            coords: None,
        })
    }

    /// Attaches the planar coordinates the affinities were derived from.
    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.n() {
            return Err(Error::Shape(format!(
                "{} coordinates for {} nodes",
                coords.len(),
                self.n()
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.affinity.nrows()
    }

    pub fn affinity(&self) -> &Array2<f64> {
        &self.affinity
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }
}

/// A nonnegative matrix with (approximately) unit row and column sums.
///
/// Square matrices must satisfy both marginals within `tolerance`. For a
/// rectangular n x m matrix with n > m (more rows than columns) only the
/// column sums are held exactly; row sums may fall below one.
#[derive(Debug, Clone)]
pub struct DoublyStochasticMatrix {
    values: Array2<f64>,
    tolerance: f64,
}

impl DoublyStochasticMatrix {
    pub fn new(values: Array2<f64>, tolerance: f64) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        let (r, c) = values.dim();
        if r < c {
            return Err(Error::Shape(format!(
                "expected at least as many rows as columns, got {r}x{c}"
            )));
        }
        util::check_finite(&values)?;
        if let Some(((i, j), &v)) = values.indexed_iter().find(|(_, &v)| v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "negative entry {v} at [{i}][{j}]"
            )));
        }
        for (j, col) in values.columns().into_iter().enumerate() {
            let s = col.sum();
            if (s - 1.0).abs() > tolerance {
                return Err(Error::InvalidArgument(format!(
                    "column {j} sums to {s}, outside tolerance {tolerance}"
                )));
            }
        }
        for (i, row) in values.rows().into_iter().enumerate() {
            let s = row.sum();
            let bad = if r == c {
                (s - 1.0).abs() > tolerance
            } else {
                s > 1.0 + tolerance
            };
            if bad {
                return Err(Error::InvalidArgument(format!(
                    "row {i} sums to {s}, outside tolerance {tolerance}"
                )));
            }
        }
        Ok(Self { values, tolerance })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// A (possibly partial) one-to-one assignment between two node sets.
///
/// Holds `min(n, m)` pairs `(i, j)` matching node `i` of the first graph to
/// node `j` of the second, sorted by `i`. Sources and targets are distinct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMatching {
    pairs: Vec<(usize, usize)>,
    n: usize,
    m: usize,
}

impl PermutationMatching {
    pub fn new(mut pairs: Vec<(usize, usize)>, n: usize, m: usize) -> Result<Self> {
        if pairs.len() != n.min(m) {
            return Err(Error::Shape(format!(
                "expected {} pairs for a {}-to-{} matching, got {}",
                n.min(m),
                n,
                m,
                pairs.len()
            )));
        }
        let mut seen_src = vec![false; n];
        let mut seen_dst = vec![false; m];
        for &(i, j) in &pairs {
            if i >= n || j >= m {
                return Err(Error::Shape(format!(
                    "pair ({i}, {j}) out of range for {n}x{m}"
                )));
            }
            if std::mem::replace(&mut seen_src[i], true) {
                return Err(Error::InvalidArgument(format!("source {i} matched twice")));
            }
            if std::mem::replace(&mut seen_dst[j], true) {
                return Err(Error::InvalidArgument(format!("target {j} matched twice")));
            }
        }
        pairs.sort_unstable();
        Ok(Self { pairs, n, m })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
            n,
            m: n,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// The matched target for source `i`, if any.
    pub fn target_of(&self, i: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&i, |&(s, _)| s)
            .ok()
            .map(|k| self.pairs[k].1)
    }

    /// The 0/1 matrix with a one at every matched pair.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut p = Array2::zeros((self.n, self.m));
        for &(i, j) in &self.pairs {
            p[[i, j]] = 1.0;
        }
        p
    }

    /// The same matching read in the opposite direction.
    pub fn inverse(&self) -> Self {
        let mut pairs: Vec<(usize, usize)> = self.pairs.iter().map(|&(i, j)| (j, i)).collect();
        pairs.sort_unstable();
        Self {
            pairs,
            n: self.m,
            m: self.n,
        }
    }
}

/// Everything the solver needs beyond the two graphs.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// Sharpness factor of the softassign operator; the inverse temperature
    /// grows as `gamma ln n`.
    pub gamma: f64,
    /// Weight of the node-feature term in the profit.
    pub lambda: f64,
    /// Step-size rule for the outer iteration.
    pub alpha: AlphaMode,
    /// Constraining operator applied to the gradient.
    pub operator: OperatorKind,
    /// Outer stop: largest entrywise change between consecutive iterates.
    pub eps_outer: f64,
    /// Inner stop: L1 change between consecutive normalization sweeps.
    pub eps_sinkhorn: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 5.0,
            lambda: 1.0,
            alpha: AlphaMode::Adaptive,
            operator: OperatorKind::Softassign,
            eps_outer: 1e-4,
            eps_sinkhorn: 1e-6,
            max_outer: 30,
            max_inner: 100,
        }
    }
}

impl SolverConfig {
    /// Defaults tuned to the instance: `gamma` drops to 3 when both graphs
    /// carry features, since the linear term already disambiguates nodes.
    pub fn defaults_for(a: &AttributedGraph, b: &AttributedGraph) -> Self {
        let gamma = if a.features().is_some() && b.features().is_some() {
            3.0
        } else {
            5.0
        };
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if let AlphaMode::Fixed(a) = self.alpha {
            if !(a.is_finite() && (0.0..=1.0).contains(&a)) {
                return Err(Error::InvalidArgument(format!(
                    "fixed alpha must lie in [0, 1], got {a}"
                )));
            }
        }
        for (name, eps) in [("eps_outer", self.eps_outer), ("eps_sinkhorn", self.eps_sinkhorn)] {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {eps}"
                )));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidArgument(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    affinity: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coords: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<f64>>>,
}

fn file_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::GraphFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn rows_to_matrix(path: &Path, rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if c == 0 {
        return Err(file_error(path, format!("{what} rows must be non-empty")));
    }
    let mut m = Array2::zeros((r, c));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(file_error(
                path,
                format!("{what} row {i} has length {}, expected {c}", row.len()),
            ));
        }
        for (j, &v) in row.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// Reads a graph from the JSON interchange format.
///
/// The file carries `n` plus exactly one of `affinity` (dense n x n, at most
/// 1e-9 from symmetric, repaired by averaging) or `coords` (n planar points
/// whose pairwise distances become the affinities), and optionally `features`.
pub fn load_graph(path: impl AsRef<Path>) -> Result<AttributedGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: GraphFile =
        serde_json::from_str(&text).map_err(|e| file_error(path, e.to_string()))?;
    if file.n < 2 {
        return Err(file_error(path, format!("n must be at least 2, got {}", file.n)));
    }
    let features = match &file.features {
        Some(rows) => {
            if rows.len() != file.n {
                return Err(file_error(
                    path,
                    format!("{} feature rows for n = {}", rows.len(), file.n),
                ));
            }
            Some(rows_to_matrix(path, rows, "features")?)
        }
        None => None,
    };
    match (&file.affinity, &file.coords) {
        (Some(rows), None) => {
            if rows.len() != file.n {
                return Err(file_error(
                    path,
                    format!("{} affinity rows for n = {}", rows.len(), file.n),
                ));
            }
            let raw = rows_to_matrix(path, rows, "affinity")?;
            if raw.ncols() != file.n {
                return Err(file_error(
                    path,
                    format!("affinity is {}x{}, expected square", raw.nrows(), raw.ncols()),
                ));
            }
            let affinity = symmetrized(raw)?;
            AttributedGraph::new(affinity, features)
        }
        (None, Some(points)) => {
            if points.len() != file.n {
                return Err(file_error(
                    path,
                    format!("{} coordinates for n = {}", points.len(), file.n),
                ));
            }
            graph_from_points(points, features)
        }
        (Some(_), Some(_)) => Err(file_error(path, "give either affinity or coords, not both")),
        (None, None) => Err(file_error(path, "missing both affinity and coords")),
    }
}

/// Averages away asymmetries up to the loader tolerance; rejects anything larger.
fn symmetrized(raw: Array2<f64>) -> Result<Array2<f64>> {
    util::check_finite(&raw)?;
    let n = raw.nrows();
    let mut out = raw;
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (out[[i, j]] - out[[j, i]]).abs();
            if delta > SYMMETRY_TOLERANCE {
                return Err(Error::Asymmetric { i, j, delta });
            }
            let v = 0.5 * (out[[i, j]] + out[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// Writes a graph in the JSON interchange format (always as dense affinities).
pub fn save_graph(path: impl AsRef<Path>, g: &AttributedGraph) -> Result<()> {
    let path = path.as_ref();
    let file = GraphFile {
        n: g.n(),
        affinity: Some(
            g.affinity()
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        ),
        coords: None,
        features: g.features().map(|f| {
            f.rows().into_iter().map(|r| r.to_vec()).collect()
        }),
    };
    let text = serde_json::to_string_pretty(&file).expect("graph serializes");
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Builds the complete distance graph of a planar point set.
pub fn graph_from_points(
    points: &[[f64; 2]],
    features: Option<Array2<f64>>,
) -> Result<AttributedGraph> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "a graph needs at least 2 points".into(),
        ));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::NonFinite { i, j: 0 });
        }
    }
    let mut affinity = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            affinity[[i, j]] = d;
            affinity[[j, i]] = d;
        }
    }
    AttributedGraph::new(affinity, features)?.with_coords(points.to_vec())
}

/// The matching profit `Z(M) = 1/2 tr(M' A M B) + lambda tr(M' K)`.
///
/// `M` may be any n x m matrix (relaxed or 0/1); `K = F Fb'` is the feature
/// affinity, present only when both graphs carry features.
pub fn objective(
    m: &Array2<f64>,
    a: &AttributedGraph,
    b: &AttributedGraph,
    lambda: f64,
) -> Result<f64> {
    if m.dim() != (a.n(), b.n()) {
        return Err(Error::Shape(format!(
            "matching is {}x{}, graphs need {}x{}",
            m.nrows(),
            m.ncols(),
            a.n(),
            b.n()
        )));
    }
    util::check_finite(m)?;
    let k = feature_kernel(a, b)?;
    Ok(objective_given(m, a.affinity(), b.affinity(), k.as_ref(), lambda))
}

/// `K = F Fb'`, or `None` for featureless pairs. Errors when only one side
/// has features or the dimensions disagree.
pub(crate) fn feature_kernel(
    a: &AttributedGraph,
    b: &AttributedGraph,
) -> Result<Option<Array2<f64>>> {
    match (a.features(), b.features()) {
        (Some(f), Some(g)) => {
            if f.ncols() != g.ncols() {
                return Err(Error::Shape(format!(
                    "feature dimensions disagree: {} vs {}",
                    f.ncols(),
                    g.ncols()
                )));
            }
            Ok(Some(f.dot(&g.t())))
        }
        (None, None) => Ok(None),
        _ => Err(Error::Shape(
            "features must be present on both graphs or neither".into(),
        )),
    }
}

pub(crate) fn objective_given(
    m: &Array2<f64>,
    a: &Array2<f64>,
    b: &Array2<f64>,
    k: Option<&Array2<f64>>,
    lambda: f64,
) -> f64 {
    let quad = 0.5 * util::inner(m, &a.dot(m).dot(b));
    match k {
        Some(k) => quad + lambda * util::inner(m, k),
        None => quad,
    }
}
