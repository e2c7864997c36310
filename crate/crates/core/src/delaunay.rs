//! Incremental Delaunay triangulation of small planar point sets.
//!
//! Plain Bowyer-Watson with a super-triangle and floating-point predicates.
//! Fine for randomly perturbed inputs; near-cocircular ties are resolved by
//! the sign of an unguarded determinant, and exactly degenerate inputs
//! (duplicates, all collinear) are rejected so callers can jitter and retry.

use std::collections::{BTreeSet, HashSet};

use crate::{Error, Result};

type Point = [f64; 2];

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Strictly inside the circumcircle of (a, b, c), any orientation.
fn in_circumcircle(a: Point, b: Point, c: Point, p: Point) -> bool {
    let ax = a[0] - p[0];
    let ay = a[1] - p[1];
    let bx = b[0] - p[0];
    let by = b[1] - p[1];
    let cx = c[0] - p[0];
    let cy = c[1] - p[1];
    let det = (ax * ax + ay * ay) * (bx * cy - by * cx)
        - (bx * bx + by * by) * (ax * cy - ay * cx)
        + (cx * cx + cy * cy) * (ax * by - ay * bx);
    if orient(a, b, c) >= 0.0 {
        det > 0.0
    } else {
        det < 0.0
    }
}

/// Delaunay triangles of the point set, as index triples.
pub fn triangulate(points: &[Point]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "triangulation needs at least 3 points".into(),
        ));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::NonFinite { i, j: 0 });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if points[i] == points[j] {
                return Err(Error::Degenerate(format!("points {i} and {j} coincide")));
            }
        }
    }

    let (mut lo_x, mut lo_y) = (f64::INFINITY, f64::INFINITY);
    let (mut hi_x, mut hi_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo_x = lo_x.min(p[0]);
        hi_x = hi_x.max(p[0]);
        lo_y = lo_y.min(p[1]);
        hi_y = hi_y.max(p[1]);
    }
    let span = (hi_x - lo_x).max(hi_y - lo_y).max(f64::MIN_POSITIVE);
    let cx = 0.5 * (lo_x + hi_x);
    let cy = 0.5 * (lo_y + hi_y);
    let mut verts: Vec<Point> = points.to_vec();
    verts.push([cx - 64.0 * span, cy - 64.0 * span]);
    verts.push([cx + 64.0 * span, cy - 64.0 * span]);
    verts.push([cx, cy + 64.0 * span]);

    let mut triangles: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for p_idx in 0..n {
        let p = verts[p_idx];
        let mut bad: Vec<[usize; 3]> = Vec::new();
        triangles.retain(|&t| {
            if in_circumcircle(verts[t[0]], verts[t[1]], verts[t[2]], p) {
                bad.push(t);
                false
            } else {
                true
            }
        });
        if bad.is_empty() {
            return Err(Error::Degenerate(format!(
                "point {p_idx} fell outside every circumcircle"
            )));
        }
        let directed: HashSet<(usize, usize)> = bad
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .collect();
        for &(a, b) in &directed {
            if !directed.contains(&(b, a)) {
                triangles.push([a, b, p_idx]);
            }
        }
    }

    triangles.retain(|t| t.iter().all(|&v| v < n));
    if triangles.is_empty() {
        return Err(Error::Degenerate("collinear point set".into()));
    }
    Ok(triangles)
}

/// Undirected Delaunay edges, deduplicated and sorted.
pub fn delaunay_edges(points: &[Point]) -> Result<Vec<(usize, usize)>> {
    let triangles = triangulate(points)?;
    let edges: BTreeSet<(usize, usize)> = triangles
        .iter()
        .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    Ok(edges.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.random(), rng.random()]).collect()
    }

    /// O(n^4) reference: a triangle belongs to the Delaunay triangulation
    /// exactly when its circumcircle strictly contains no other point.
    fn brute_force_edges(points: &[Point]) -> Vec<(usize, usize)> {
        let n = points.len();
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    if orient(points[i], points[j], points[k]) == 0.0 {
                        continue;
                    }
                    let empty = (0..n).all(|l| {
                        l == i
                            || l == j
                            || l == k
                            || !in_circumcircle(points[i], points[j], points[k], points[l])
                    });
                    if empty {
                        edges.insert((i, j));
                        edges.insert((i, k));
                        edges.insert((j, k));
                    }
                }
            }
        }
        edges.into_iter().collect()
    }

    #[test]
    fn triangle_triangulates_to_itself() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.2, 0.8]];
        let tris = triangulate(&pts).unwrap();
        assert_eq!(tris.len(), 1);
        let edges = delaunay_edges(&pts).unwrap();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn square_picks_one_diagonal() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.1], [0.0, 1.0]];
        let edges = delaunay_edges(&pts).unwrap();
        assert_eq!(edges.len(), 5);
        let diagonals: Vec<_> = edges
            .iter()
            .filter(|e| **e == (0, 2) || **e == (1, 3))
            .collect();
        assert_eq!(diagonals.len(), 1);
    }

    #[test]
    fn matches_the_exhaustive_circumcircle_test() {
        for seed in [11, 23] {
            let pts = random_points(20, seed);
            let fast = delaunay_edges(&pts).unwrap();
            let slow = brute_force_edges(&pts);
            assert_eq!(fast, slow, "seed {seed}");
        }
    }

    #[test]
    fn edge_count_respects_the_planar_bound() {
        for n in [4, 10, 40] {
            let pts = random_points(n, 5);
            let edges = delaunay_edges(&pts).unwrap();
            assert!(edges.len() <= 3 * n - 6, "n = {n}: {} edges", edges.len());
            assert!(edges.len() >= n - 1);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            triangulate(&[[0.0, 0.0], [1.0, 1.0]]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            triangulate(&[[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            triangulate(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]),
            Err(Error::Degenerate(_))
        ));
    }
}
