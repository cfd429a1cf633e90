use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{column, mean_of, median_of};
use crate::error::{Error, Result};
use crate::params::{check_updates, ParameterVector, WorkerUpdate};
use crate::scalar::{cmp_scalar, Scalar};

/// Which values of each coordinate survive trimming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrimmedVariant {
    /// The n - m values nearest the median.
    V1,
    /// The n - 2m values nearest the median.
    V2,
    /// Everything except the m largest and m smallest values.
    V3,
}

/// Coordinate-wise trimmed mean.
///
/// Distance-to-median ties are broken by smaller absolute value, then by
/// smaller worker id; equal values in variant 3 are ordered by worker id.
pub fn trimmed_mean<T: Scalar>(
    updates: &[WorkerUpdate<T>],
    m: usize,
    variant: TrimmedVariant,
) -> Result<ParameterVector<T>> {
    let d = check_updates(updates, 1)?;
    let n = updates.len();
    let keep = match variant {
        TrimmedVariant::V1 if n > m => n - m,
        TrimmedVariant::V2 | TrimmedVariant::V3 if n > 2 * m => n - 2 * m,
        _ => {
            return Err(Error::Config(format!(
                "trimmed mean {variant:?} undefined for n={n}, m={m}"
            )))
        }
    };

    let mut out = Vec::with_capacity(d);
    let mut kept = vec![false; n];
    for j in 0..d {
        let col = column(updates, j);
        let mut order: Vec<usize> = (0..n).collect();
        let range = match variant {
            TrimmedVariant::V3 => {
                order.sort_by(|&a, &b| {
                    cmp_scalar(&col[a].0, &col[b].0).then(col[a].1.cmp(&col[b].1))
                });
                m..n - m
            }
            TrimmedVariant::V1 | TrimmedVariant::V2 => {
                let values: Vec<T> = col.iter().map(|p| p.0).collect();
                let med = median_of(&values)?;
                order.sort_by(|&a, &b| nearest_to(med, &col[a], &col[b]));
                0..keep
            }
        };
        kept.fill(false);
        for &i in &order[range] {
            kept[i] = true;
        }
        // summed in input order, so m = 0 reproduces the plain mean bit for bit
        out.push(mean_of(
            col.iter().zip(&kept).filter(|(_, &k)| k).map(|(p, _)| p.0),
        ));
    }
    Ok(ParameterVector::new(out))
}

fn nearest_to<T: Scalar>(med: T, a: &(T, usize), b: &(T, usize)) -> Ordering {
    cmp_scalar(&(a.0 - med).abs(), &(b.0 - med).abs())
        .then_with(|| cmp_scalar(&a.0.abs(), &b.0.abs()))
        .then(a.1.cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::mean_aggregate;
    use crate::params::updates_from_rows;

    fn five() -> Vec<WorkerUpdate<f64>> {
        updates_from_rows(vec![
            vec![1.0],
            vec![2.0],
            vec![3.0],
            vec![4.0],
            vec![100.0],
        ])
    }

    #[test]
    fn variant_three_drops_extremes() {
        assert_eq!(
            trimmed_mean(&five(), 1, TrimmedVariant::V3)
                .unwrap()
                .as_slice(),
            &[3.0]
        );
    }

    #[test]
    fn variant_one_keeps_four_nearest() {
        // distances to 3: {2,1,0,1,97}; ties 2/4 both kept, then 1 beats 100
        assert_eq!(
            trimmed_mean(&five(), 1, TrimmedVariant::V1)
                .unwrap()
                .as_slice(),
            &[2.5]
        );
    }

    #[test]
    fn variant_two_keeps_three_nearest() {
        assert_eq!(
            trimmed_mean(&five(), 1, TrimmedVariant::V2)
                .unwrap()
                .as_slice(),
            &[3.0]
        );
    }

    #[test]
    fn distance_ties_prefer_smaller_magnitude() {
        // median 1; 0 and 2 tie on distance, 0 has the smaller magnitude
        let ups = updates_from_rows(vec![
            vec![2.0_f64],
            vec![10.0],
            vec![1.0],
            vec![0.0],
            vec![-5.0],
        ]);
        let v = trimmed_mean(&ups, 3, TrimmedVariant::V1).unwrap();
        assert_eq!(v.as_slice(), &[0.5]);
        // median 0; 1 and -1 tie on distance and magnitude, worker 1 wins on id
        let ups = updates_from_rows(vec![
            vec![-3.0_f64],
            vec![1.0],
            vec![0.0],
            vec![-1.0],
            vec![5.0],
        ]);
        let v = trimmed_mean(&ups, 3, TrimmedVariant::V1).unwrap();
        assert_eq!(v.as_slice(), &[0.5]);
        let ups = updates_from_rows(vec![
            vec![-3.0_f64],
            vec![-1.0],
            vec![0.0],
            vec![1.0],
            vec![5.0],
        ]);
        let v = trimmed_mean(&ups, 3, TrimmedVariant::V1).unwrap();
        assert_eq!(v.as_slice(), &[-0.5]);
    }

    #[test]
    fn zero_trim_is_mean() {
        let ups = updates_from_rows(vec![vec![0.25_f64, 3.0], vec![-1.0, 8.0], vec![2.0, 1.0]]);
        let mean = mean_aggregate(&ups).unwrap();
        for v in [TrimmedVariant::V1, TrimmedVariant::V2, TrimmedVariant::V3] {
            let t = trimmed_mean(&ups, 0, v).unwrap();
            for (a, b) in t.iter().zip(mean.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            trimmed_mean(&five(), 5, TrimmedVariant::V1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            trimmed_mean(&five(), 3, TrimmedVariant::V2),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            trimmed_mean(&five(), 3, TrimmedVariant::V3),
            Err(Error::Config(_))
        ));
        assert!(trimmed_mean(&five(), 2, TrimmedVariant::V3).is_ok());
    }
}
