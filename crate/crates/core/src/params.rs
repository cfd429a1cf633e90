//! Flat parameter vectors and the per-round worker updates built from them.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flat, ordered list of the `d` model parameters of one worker or of the server.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector<T>(Vec<T>);

impl<T: Scalar> ParameterVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        ParameterVector(values)
    }

    pub fn zeros(d: usize) -> Self {
        ParameterVector(vec![T::zero(); d])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    /// Euclidean norm.
    pub fn norm(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
    }

    /// Squared Euclidean distance, accumulated in index order.
    pub fn squared_distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
    }
}

impl<T> Deref for ParameterVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for ParameterVector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for ParameterVector<T> {
    fn from(v: Vec<T>) -> Self {
        ParameterVector(v)
    }
}

impl<T> FromIterator<T> for ParameterVector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        ParameterVector(iter.into_iter().collect())
    }
}

/// One worker's reported parameters for a single round.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerUpdate<T> {
    pub worker_id: usize,
    pub params: ParameterVector<T>,
}

impl<T: Scalar> WorkerUpdate<T> {
    pub fn new(worker_id: usize, params: impl Into<ParameterVector<T>>) -> Self {
        WorkerUpdate {
            worker_id,
            params: params.into(),
        }
    }
}

/// Builds updates with ids `0..values.len()`.
pub fn updates_from_rows<T: Scalar>(rows: Vec<Vec<T>>) -> Vec<WorkerUpdate<T>> {
    rows.into_iter()
        .enumerate()
        .map(|(i, v)| WorkerUpdate::new(i, v))
        .collect()
}

/// Checks that `updates` is non-empty with at least `min` entries, that all share one
/// dimension and that worker ids are unique. Returns `d`.
pub(crate) fn check_updates<T: Scalar>(updates: &[WorkerUpdate<T>], min: usize) -> Result<usize> {
    if updates.len() < min.max(1) {
        return Err(Error::InsufficientData(format!(
            "need at least {} updates, got {}",
            min.max(1),
            updates.len()
        )));
    }
    let d = updates[0].params.len();
    if d == 0 {
        return Err(Error::Shape("parameter vectors are empty".into()));
    }
    for u in updates {
        if u.params.len() != d {
            return Err(Error::Shape(format!(
                "worker {} reports {} parameters, expected {}",
                u.worker_id,
                u.params.len(),
                d
            )));
        }
    }
    let mut ids: Vec<usize> = updates.iter().map(|u| u.worker_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("duplicate worker ids in one round".into()));
    }
    Ok(d)
}
