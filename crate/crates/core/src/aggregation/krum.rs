use super::trimmed::{trimmed_mean, TrimmedVariant};
use crate::error::{Error, Result};
use crate::params::{check_updates, ParameterVector, WorkerUpdate};
use crate::scalar::{cmp_scalar, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct KrumOutcome<T> {
    pub params: ParameterVector<T>,
    pub worker_id: usize,
    /// Score of every update, in input order.
    pub scores: Vec<T>,
}

fn distance_matrix<T: Scalar>(updates: &[WorkerUpdate<T>]) -> Vec<Vec<T>> {
    let n = updates.len();
    let mut dist = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = updates[i].params.squared_distance(&updates[j].params);
            dist[i][j] = v;
            dist[j][i] = v;
        }
    }
    dist
}

/// Scores the `active` candidates against each other and returns the position
/// (within `active`) of the lowest score together with all scores.
fn select<T: Scalar>(
    dist: &[Vec<T>],
    ids: &[usize],
    active: &[usize],
    neighbors: usize,
) -> (usize, Vec<T>) {
    let scores: Vec<T> = active
        .iter()
        .map(|&i| {
            let mut row: Vec<T> = active
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist[i][j])
                .collect();
            row.sort_by(cmp_scalar);
            row.into_iter().take(neighbors).sum()
        })
        .collect();
    let mut best = 0;
    for pos in 1..active.len() {
        let ord = cmp_scalar(&scores[pos], &scores[best]);
        if ord == std::cmp::Ordering::Less
            || (ord == std::cmp::Ordering::Equal && ids[active[pos]] < ids[active[best]])
        {
            best = pos;
        }
    }
    (best, scores)
}

/// Selects the update with the smallest summed squared distance to its
/// `n - m - 2` nearest other updates; ties go to the smallest worker id.
pub fn krum<T: Scalar>(updates: &[WorkerUpdate<T>], m: usize) -> Result<KrumOutcome<T>> {
    check_updates(updates, 1)?;
    let n = updates.len();
    if n < m + 3 {
        return Err(Error::Config(format!(
            "krum needs n >= m + 3, got n={n}, m={m}"
        )));
    }
    let dist = distance_matrix(updates);
    let ids: Vec<usize> = updates.iter().map(|u| u.worker_id).collect();
    let active: Vec<usize> = (0..n).collect();
    let (best, scores) = select(&dist, &ids, &active, n - m - 2);
    Ok(KrumOutcome {
        params: updates[best].params.clone(),
        worker_id: ids[best],
        scores,
    })
}

/// Indices (into `updates`) chosen by the repeated-Krum phase of Bulyan, in
/// selection order. Each round scores the remaining `r` updates with
/// `max(r - m - 2, 1)` neighbors, capped at `r - 1`.
pub fn bulyan_selection<T: Scalar>(updates: &[WorkerUpdate<T>], m: usize) -> Result<Vec<usize>> {
    check_updates(updates, 1)?;
    let n = updates.len();
    if n < 4 * m + 3 {
        return Err(Error::Config(format!(
            "bulyan needs n >= 4m + 3, got n={n}, m={m}"
        )));
    }
    let dist = distance_matrix(updates);
    let ids: Vec<usize> = updates.iter().map(|u| u.worker_id).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut selection = Vec::with_capacity(n - 2 * m);
    while selection.len() < n - 2 * m {
        let r = remaining.len();
        let neighbors = r.saturating_sub(m + 2).max(1).min(r - 1);
        let (best, _) = select(&dist, &ids, &remaining, neighbors);
        selection.push(remaining.remove(best));
    }
    Ok(selection)
}

/// Bulyan with Krum as the inner rule: build a selection set of n - 2m
/// updates by repeated Krum, then take the variant-2 trimmed mean of it with
/// the same m, which averages n - 4m values per coordinate.
pub fn bulyan<T: Scalar>(updates: &[WorkerUpdate<T>], m: usize) -> Result<ParameterVector<T>> {
    let selected: Vec<WorkerUpdate<T>> = bulyan_selection(updates, m)?
        .into_iter()
        .map(|i| updates[i].clone())
        .collect();
    trimmed_mean(&selected, m, TrimmedVariant::V2)
}
