use super::{column, mean_of, median_of};
use crate::error::Result;
use crate::params::{check_updates, ParameterVector, WorkerUpdate};
use crate::scalar::Scalar;

const MAX_LLOYD_ITERATIONS: usize = 10_000;

/// Converged 1-D two-means clustering; `low` marks membership in the cluster
/// whose center is the smaller one.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoMeans<T> {
    pub low_center: T,
    pub high_center: T,
    pub low: Vec<bool>,
}

/// Lloyd iterations for k = 2 started from the minimum and maximum value.
/// A value equidistant from both centers joins the low cluster.
pub fn two_means_1d<T: Scalar>(values: &[T]) -> TwoMeans<T> {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let (mut c_lo, mut c_hi) = (lo, hi);
    let mut low: Vec<bool> = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let next: Vec<bool> = values
            .iter()
            .map(|&v| (v - c_lo).abs() <= (v - c_hi).abs())
            .collect();
        if next == low {
            break;
        }
        low = next;
        let members = |want: bool| {
            values
                .iter()
                .zip(&low)
                .filter(move |(_, &l)| l == want)
                .map(|(&v, _)| v)
        };
        if low.iter().any(|&l| l) {
            c_lo = mean_of(members(true));
        }
        if low.iter().any(|&l| !l) {
            c_hi = mean_of(members(false));
        }
    }
    TwoMeans {
        low_center: c_lo,
        high_center: c_hi,
        low,
    }
}

/// Per coordinate, clusters the reported values into two groups; when the
/// centers are farther apart than `threshold` only the larger cluster is
/// averaged (equal sizes: the cluster holding the median), otherwise all
/// values are.
pub fn kmeans_cluster_defense<T: Scalar>(
    updates: &[WorkerUpdate<T>],
    threshold: T,
) -> Result<ParameterVector<T>> {
    let d = check_updates(updates, 2)?;
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let values: Vec<T> = column(updates, j).into_iter().map(|p| p.0).collect();
        let fit = two_means_1d(&values);
        if (fit.high_center - fit.low_center).abs() > threshold {
            let low_size = fit.low.iter().filter(|&&l| l).count();
            let high_size = values.len() - low_size;
            let keep_low = if low_size != high_size {
                low_size > high_size
            } else {
                let med = median_of(&values)?;
                values.iter().zip(&fit.low).any(|(&v, &l)| l && v == med)
            };
            out.push(mean_of(
                values
                    .iter()
                    .zip(&fit.low)
                    .filter(|(_, &l)| l == keep_low)
                    .map(|(&v, _)| v),
            ));
        } else {
            out.push(mean_of(values.iter().copied()));
        }
    }
    Ok(ParameterVector::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::params::updates_from_rows;

    fn column_updates(vals: &[f64]) -> Vec<WorkerUpdate<f64>> {
        updates_from_rows(vals.iter().map(|&v| vec![v]).collect())
    }

    #[test]
    fn drops_far_small_cluster() {
        let out = kmeans_cluster_defense(&column_updates(&[0.0, 0.1, 0.2, 5.0, 5.1]), 1.0).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn close_clusters_average_everything() {
        let out = kmeans_cluster_defense(&column_updates(&[0.0, 0.1, 0.2, 0.3]), 10.0).unwrap();
        assert!((out[0] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn identical_values() {
        let out = kmeans_cluster_defense(&column_updates(&[2.5; 6]), 0.0).unwrap();
        assert_eq!(out.as_slice(), &[2.5]);
    }

    #[test]
    fn equal_sizes_keep_median_cluster() {
        // lower median is 1.0, which sits in the low cluster
        let out = kmeans_cluster_defense(&column_updates(&[0.0, 1.0, 9.0, 10.0]), 1.0).unwrap();
        assert_eq!(out.as_slice(), &[0.5]);
    }

    #[test]
    fn needs_two_updates() {
        assert!(matches!(
            kmeans_cluster_defense(&column_updates(&[1.0]), 1.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn lloyd_moves_boundary() {
        // from centers (0, 10) the value 6 first joins the high cluster, then
        // the high center drops to 8, and 4 stays low
        let fit = two_means_1d(&[0.0_f64, 1.0, 4.0, 6.0, 10.0]);
        assert_eq!(fit.low, vec![true, true, true, false, false]);
        assert!((fit.low_center - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(fit.high_center, 8.0);
    }
}
