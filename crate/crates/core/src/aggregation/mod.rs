//! Server-side aggregation rules. Each rule maps one round's worker updates
//! to a single parameter vector.

mod kmeans;
mod krum;
mod trimmed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{check_updates, ParameterVector, WorkerUpdate};
use crate::scalar::{cmp_scalar, Scalar};

pub use kmeans::{kmeans_cluster_defense, two_means_1d, TwoMeans};
pub use krum::{bulyan, bulyan_selection, krum, KrumOutcome};
pub use trimmed::{trimmed_mean, TrimmedVariant};

/// Coordinate-wise arithmetic mean.
pub fn mean_aggregate<T: Scalar>(updates: &[WorkerUpdate<T>]) -> Result<ParameterVector<T>> {
    let d = check_updates(updates, 1)?;
    let mut acc = vec![T::zero(); d];
    for u in updates {
        for (a, &x) in acc.iter_mut().zip(u.params.iter()) {
            *a = *a + x;
        }
    }
    let count = T::of_usize(updates.len());
    Ok(acc.into_iter().map(|a| a / count).collect())
}

/// Lower median: element `ceil(k/2) - 1` of the sorted values.
pub fn median_of<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(Error::InsufficientData("median of an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(cmp_scalar);
    Ok(sorted[values.len().div_ceil(2) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseKind {
    NoDefense,
    TrimmedMeanV1,
    TrimmedMeanV2,
    TrimmedMeanV3,
    KMeansCluster,
    Krum,
    Bulyan,
}

impl DefenseKind {
    pub const ALL: [DefenseKind; 7] = [
        DefenseKind::NoDefense,
        DefenseKind::TrimmedMeanV1,
        DefenseKind::TrimmedMeanV2,
        DefenseKind::TrimmedMeanV3,
        DefenseKind::KMeansCluster,
        DefenseKind::Krum,
        DefenseKind::Bulyan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::NoDefense => "no_defense",
            DefenseKind::TrimmedMeanV1 => "trimmed_mean_v1",
            DefenseKind::TrimmedMeanV2 => "trimmed_mean_v2",
            DefenseKind::TrimmedMeanV3 => "trimmed_mean_v3",
            DefenseKind::KMeansCluster => "kmeans_cluster",
            DefenseKind::Krum => "krum",
            DefenseKind::Bulyan => "bulyan",
        }
    }
}

impl fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DefenseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let kind = match key.as_str() {
            "no_defense" | "none" | "mean" => DefenseKind::NoDefense,
            "trimmed_mean_v1" | "tm1" => DefenseKind::TrimmedMeanV1,
            "trimmed_mean_v2" | "tm2" | "trimmed_mean" => DefenseKind::TrimmedMeanV2,
            "trimmed_mean_v3" | "tm3" => DefenseKind::TrimmedMeanV3,
            "kmeans_cluster" | "kmeans" => DefenseKind::KMeansCluster,
            "krum" => DefenseKind::Krum,
            "bulyan" => DefenseKind::Bulyan,
            _ => return Err(Error::Config(format!("unknown defense '{s}'"))),
        };
        Ok(kind)
    }
}

/// A defense and the parameters it is configured with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefenseChoice {
    pub kind: DefenseKind,
    /// Number of Byzantine workers the rule is parameterized for.
    pub m_assumed: usize,
    /// Center distance above which the smaller k-means cluster is dropped.
    pub cluster_threshold: f64,
}

impl DefenseChoice {
    pub fn new(kind: DefenseKind, m_assumed: usize) -> Self {
        DefenseChoice {
            kind,
            m_assumed,
            cluster_threshold: 1.0,
        }
    }

    /// Checks that the rule is defined for `n` updates.
    pub fn validate(&self, n: usize) -> Result<()> {
        let m = self.m_assumed;
        let ok = match self.kind {
            DefenseKind::NoDefense => n >= 1,
            DefenseKind::TrimmedMeanV1 => n > m,
            DefenseKind::TrimmedMeanV2 | DefenseKind::TrimmedMeanV3 => n > 2 * m,
            DefenseKind::KMeansCluster => n >= 2,
            DefenseKind::Krum => n >= m + 3,
            DefenseKind::Bulyan => n >= 4 * m + 3,
        };
        if !ok {
            return Err(Error::Config(format!(
                "{} is not defined for n={n}, m={m}",
                self.kind
            )));
        }
        if self.kind == DefenseKind::KMeansCluster
            && (self.cluster_threshold.is_nan() || self.cluster_threshold < 0.0)
        {
            return Err(Error::Config(format!(
                "cluster threshold must be non-negative, got {}",
                self.cluster_threshold
            )));
        }
        Ok(())
    }

    pub fn aggregate<T: Scalar>(&self, updates: &[WorkerUpdate<T>]) -> Result<Aggregate<T>> {
        self.validate(updates.len())?;
        let m = self.m_assumed;
        let (params, selected) = match self.kind {
            DefenseKind::NoDefense => (mean_aggregate(updates)?, None),
            DefenseKind::TrimmedMeanV1 => (trimmed_mean(updates, m, TrimmedVariant::V1)?, None),
            DefenseKind::TrimmedMeanV2 => (trimmed_mean(updates, m, TrimmedVariant::V2)?, None),
            DefenseKind::TrimmedMeanV3 => (trimmed_mean(updates, m, TrimmedVariant::V3)?, None),
            DefenseKind::KMeansCluster => (
                kmeans_cluster_defense(updates, T::of(self.cluster_threshold))?,
                None,
            ),
            DefenseKind::Krum => {
                let out = krum(updates, m)?;
                (out.params, Some(out.worker_id))
            }
            DefenseKind::Bulyan => (bulyan(updates, m)?, None),
        };
        Ok(Aggregate { params, selected })
    }
}

/// Result of one aggregation; `selected` is set by selection rules (Krum).
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate<T> {
    pub params: ParameterVector<T>,
    pub selected: Option<usize>,
}

/// Values of coordinate `j` paired with worker ids, in input order.
pub(crate) fn column<T: Scalar>(updates: &[WorkerUpdate<T>], j: usize) -> Vec<(T, usize)> {
    updates.iter().map(|u| (u.params[j], u.worker_id)).collect()
}

pub(crate) fn mean_of<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut count = 0usize;
    for v in values {
        sum = sum + v;
        count += 1;
    }
    sum / T::of_usize(count)
}
