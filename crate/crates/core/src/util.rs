//! Shared dense-matrix helpers.

use ndarray::{ArrayBase, Data, Ix2, Zip};

use crate::{Error, Result};

pub(crate) fn check_finite<S: Data<Elem = f64>>(x: &ArrayBase<S, Ix2>) -> Result<()> {
    for ((i, j), v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { i, j });
        }
    }
    Ok(())
}

/// Frobenius inner product `sum_ij a_ij b_ij`.
pub(crate) fn inner<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> f64
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

/// Entrywise L1 distance `sum_ij |a_ij - b_ij|`.
pub(crate) fn l1_diff<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> f64
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y).abs())
}

/// Frobenius norm of the difference `||a - b||_F`.
pub(crate) fn l2_diff<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> f64
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    Zip::from(a)
        .and(b)
        .fold(0.0, |acc, x, y| acc + (x - y) * (x - y))
        .sqrt()
}

/// Entrywise Chebyshev distance `max_ij |a_ij - b_ij|`.
pub(crate) fn max_abs_diff<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> f64
where
    S1: Data<Elem = f64>,
    S2: Data<Elem = f64>,
{
    Zip::from(a).and(b).fold(0.0, |acc: f64, x, y| acc.max((x - y).abs()))
}

pub(crate) fn frobenius<S: Data<Elem = f64>>(a: &ArrayBase<S, Ix2>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn max_entry<S: Data<Elem = f64>>(a: &ArrayBase<S, Ix2>) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn min_entry<S: Data<Elem = f64>>(a: &ArrayBase<S, Ix2>) -> f64 {
    a.iter().copied().fold(f64::INFINITY, f64::min)
}
