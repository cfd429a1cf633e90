//! Reference implementations shared by the integration tests, written
//! without the library's code paths: subset enumeration for the trimmed means
//! and Krum, split sizes over sorted values for two-means.
#![allow(dead_code)]

use byzsim_core::params::updates_from_rows;
use byzsim_core::WorkerUpdate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_updates(rows: &[Vec<f64>]) -> Vec<WorkerUpdate> {
    updates_from_rows(rows.to_vec())
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect()
}

/// Rows drawn from two well separated groups, so clustering has something to find.
pub fn two_group_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let split = rng.random_range(1..n);
    (0..n)
        .map(|i| {
            let base = if i < split { 0.0 } else { 4.0 };
            (0..d).map(|_| base + rng.random_range(-1.0..1.0)).collect()
        })
        .collect()
}

fn col(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn masks(n: usize, size: usize) -> impl Iterator<Item = u32> {
    (0u32..1 << n).filter(move |m| m.count_ones() as usize == size)
}

fn members(vals: &[f64], mask: u32) -> impl Iterator<Item = f64> + '_ {
    vals.iter()
        .enumerate()
        .filter(move |(i, _)| mask >> i & 1 == 1)
        .map(|(_, &v)| v)
}

/// Element whose rank (ties by position) is `(n - 1) / 2`.
pub fn lower_median(vals: &[f64]) -> f64 {
    let target = (vals.len() - 1) / 2;
    for (i, &v) in vals.iter().enumerate() {
        let rank = vals
            .iter()
            .enumerate()
            .filter(|&(j, &w)| w < v || (w == v && j < i))
            .count();
        if rank == target {
            return v;
        }
    }
    unreachable!("some element has every rank")
}

fn nearest_mean(vals: &[f64], keep: usize) -> f64 {
    let med = lower_median(vals);
    let best = masks(vals.len(), keep)
        .min_by(|&a, &b| {
            let da: f64 = members(vals, a).map(|v| (v - med).abs()).sum();
            let db: f64 = members(vals, b).map(|v| (v - med).abs()).sum();
            da.total_cmp(&db)
        })
        .expect("keep <= n");
    members(vals, best).sum::<f64>() / keep as f64
}

/// Mean of the `n - m` values closest to the lower median.
pub fn trimmed_v1(rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let n = rows.len();
    (0..rows[0].len())
        .map(|j| nearest_mean(&col(rows, j), n - m))
        .collect()
}

/// Mean of the `n - 2m` values closest to the lower median.
pub fn trimmed_v2(rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let n = rows.len();
    (0..rows[0].len())
        .map(|j| nearest_mean(&col(rows, j), n - 2 * m))
        .collect()
}

/// Total minus the smallest-sum and largest-sum m-subsets.
pub fn trimmed_v3(rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let n = rows.len();
    (0..rows[0].len())
        .map(|j| {
            let vals = col(rows, j);
            let total: f64 = vals.iter().sum();
            let sums = || masks(n, m).map(|k| members(&vals, k).sum::<f64>());
            let low = sums().fold(f64::INFINITY, f64::min);
            let high = sums().fold(f64::NEG_INFINITY, f64::max);
            let low = if m == 0 { 0.0 } else { low };
            let high = if m == 0 { 0.0 } else { high };
            (total - low - high) / (n - 2 * m) as f64
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Smallest sum of `k` squared distances from `rows[i]` to other members of
/// `candidates`, by enumeration.
fn krum_score(rows: &[Vec<f64>], candidates: &[usize], i: usize, k: usize) -> f64 {
    let others: Vec<usize> = candidates.iter().copied().filter(|&c| c != i).collect();
    masks(others.len(), k)
        .map(|mask| {
            others
                .iter()
                .enumerate()
                .filter(|(p, _)| mask >> p & 1 == 1)
                .map(|(_, &o)| sq_dist(&rows[i], &rows[o]))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Position in `candidates` of the lowest score; ties to the smaller row index.
fn krum_pick(rows: &[Vec<f64>], candidates: &[usize], k: usize) -> (usize, Vec<f64>) {
    let scores: Vec<f64> = candidates
        .iter()
        .map(|&i| krum_score(rows, candidates, i, k))
        .collect();
    let mut best = 0;
    for p in 1..candidates.len() {
        if scores[p] < scores[best] {
            best = p;
        }
    }
    (best, scores)
}

/// Selected row index and the score of every row.
pub fn krum(rows: &[Vec<f64>], m: usize) -> (usize, Vec<f64>) {
    let all: Vec<usize> = (0..rows.len()).collect();
    krum_pick(rows, &all, rows.len() - m - 2)
}

/// Repeated Krum down to `n - 2m` rows, then variant-2 trimming of those.
pub fn bulyan(rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let n = rows.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::new();
    while chosen.len() < n - 2 * m {
        let r = remaining.len();
        let k = (r.saturating_sub(m + 2)).max(1).min(r - 1);
        let (p, _) = krum_pick(rows, &remaining, k);
        chosen.push(remaining.remove(p));
    }
    let picked: Vec<Vec<f64>> = chosen.iter().map(|&i| rows[i].clone()).collect();
    trimmed_v2(&picked, m)
}

/// Lloyd's k = 2 fixed point from the extreme values, iterated over split
/// sizes of the sorted values instead of per-element memberships.
pub fn two_means_split(vals: &[f64]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let n = sorted.len();
    let mut low = vec![false; n];
    if sorted[0] == sorted[n - 1] {
        return vec![true; n];
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let assign = |c_lo: f64, c_hi: f64| -> usize {
        sorted
            .iter()
            .filter(|&&v| (v - c_lo).abs() <= (v - c_hi).abs())
            .count()
    };
    let mut t = assign(sorted[0], sorted[n - 1]);
    loop {
        let next = assign(mean(&sorted[..t]), mean(&sorted[t..]));
        if next == t {
            break;
        }
        t = next;
    }
    for &i in &order[..t] {
        low[i] = true;
    }
    low
}

/// Exhaustive optimum of the within-cluster squared error over split points.
pub fn optimal_split_size(vals: &[f64]) -> usize {
    let mut sorted = vals.to_vec();
    sorted.sort_by(f64::total_cmp);
    (1..sorted.len())
        .min_by(|&a, &b| {
            (sse(&sorted[..a]) + sse(&sorted[a..]))
                .total_cmp(&(sse(&sorted[..b]) + sse(&sorted[b..])))
        })
        .unwrap_or(sorted.len())
}

fn sse(s: &[f64]) -> f64 {
    let mu = s.iter().sum::<f64>() / s.len() as f64;
    s.iter().map(|v| (v - mu) * (v - mu)).sum()
}

/// Within-cluster squared error of a membership split.
pub fn split_sse(vals: &[f64], low: &[bool]) -> f64 {
    let a: Vec<f64> = vals
        .iter()
        .zip(low)
        .filter(|(_, &l)| l)
        .map(|(&v, _)| v)
        .collect();
    let b: Vec<f64> = vals
        .iter()
        .zip(low)
        .filter(|(_, &l)| !l)
        .map(|(&v, _)| v)
        .collect();
    [a, b]
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| sse(c))
        .sum()
}

/// Cluster defense computed from [`two_means_split`].
pub fn kmeans_defense(rows: &[Vec<f64>], threshold: f64) -> Vec<f64> {
    (0..rows[0].len())
        .map(|j| {
            let vals = col(rows, j);
            let low = two_means_split(&vals);
            let pick = |want: bool| -> Vec<f64> {
                vals.iter()
                    .zip(&low)
                    .filter(|(_, &l)| l == want)
                    .map(|(&v, _)| v)
                    .collect()
            };
            let (lo, hi) = (pick(true), pick(false));
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            if hi.is_empty() || (mean(&hi) - mean(&lo)).abs() <= threshold {
                return mean(&vals);
            }
            let keep = match lo.len().cmp(&hi.len()) {
                std::cmp::Ordering::Greater => &lo,
                std::cmp::Ordering::Less => &hi,
                std::cmp::Ordering::Equal => {
                    if lo.contains(&lower_median(&vals)) {
                        &lo
                    } else {
                        &hi
                    }
                }
            };
            mean(keep)
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Worst disagreement between one rule and its oracle over the instances.
#[derive(Debug)]
pub struct OracleReport {
    pub rule: &'static str,
    pub instances: usize,
    /// Largest absolute coordinate error (Krum: also score error).
    pub max_error: f64,
    /// Krum instances where a different worker was selected.
    pub selection_mismatches: usize,
}

/// Compares every aggregation rule with its oracle on `instances` random
/// inputs with n <= 12 and d <= 8.
pub fn aggregation_oracle_reports(seed: u64, instances: usize) -> Vec<OracleReport> {
    use byzsim_core::{
        bulyan as lib_bulyan, kmeans_cluster_defense, krum as lib_krum, trimmed_mean,
        TrimmedVariant,
    };

    let mut r = rng(seed);
    let mut reports: Vec<OracleReport> = [
        "trimmed_mean_v1",
        "trimmed_mean_v2",
        "trimmed_mean_v3",
        "krum",
        "kmeans_cluster",
        "bulyan",
    ]
    .into_iter()
    .map(|rule| OracleReport {
        rule,
        instances,
        max_error: 0.0,
        selection_mismatches: 0,
    })
    .collect();
    let mut note = |k: usize, err: f64| reports[k].max_error = reports[k].max_error.max(err);
    let mut krum_mismatch = 0;
    for t in 0..instances {
        let n = r.random_range(3..=12);
        let d = r.random_range(1..=8);
        let rows = if t % 2 == 0 {
            random_rows(&mut r, n, d)
        } else {
            two_group_rows(&mut r, n, d)
        };
        let ups = to_updates(&rows);

        let m = r.random_range(0..n);
        let got = trimmed_mean(&ups, m, TrimmedVariant::V1).unwrap();
        note(0, max_abs_diff(&got, &trimmed_v1(&rows, m)));
        let m = r.random_range(0..=(n - 1) / 2);
        let got = trimmed_mean(&ups, m, TrimmedVariant::V2).unwrap();
        note(1, max_abs_diff(&got, &trimmed_v2(&rows, m)));
        let got = trimmed_mean(&ups, m, TrimmedVariant::V3).unwrap();
        note(2, max_abs_diff(&got, &trimmed_v3(&rows, m)));

        let m = r.random_range(0..=n - 3);
        let got = lib_krum(&ups, m).unwrap();
        let (want, scores) = krum(&rows, m);
        if got.worker_id != want {
            krum_mismatch += 1;
        }
        note(
            3,
            max_abs_diff(&got.scores, &scores).max(max_abs_diff(&got.params, &rows[want])),
        );

        let threshold = r.random_range(0.0..3.0);
        let got = kmeans_cluster_defense(&ups, threshold).unwrap();
        note(4, max_abs_diff(&got, &kmeans_defense(&rows, threshold)));

        let m = r.random_range(0..=(n - 3) / 4);
        let got = lib_bulyan(&ups, m).unwrap();
        note(5, max_abs_diff(&got, &bulyan(&rows, m)));
    }
    reports[3].selection_mismatches = krum_mismatch;
    reports
}

fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn simpson(a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut acc = normal_pdf(a) + normal_pdf(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * normal_pdf(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Φ at ascending `points`, by composite Simpson integration of the density
/// from -12 (where the remaining mass is below 1e-32).
pub fn normal_cdf_by_integration(points: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut at = -12.0;
    let mut acc = 0.0;
    for &z in points {
        assert!(z >= at, "points must ascend");
        let span = z - at;
        let intervals = 2 * ((span / 1e-3).ceil() as usize).max(1);
        acc += simpson(at, z, intervals);
        at = z;
        out.push(acc);
    }
    out
}

/// Largest relative error between `backward` and central differences of
/// `loss` over every parameter of a random small MLP.
pub fn gradient_check(seed: u64) -> f64 {
    use byzsim_core::{Matrix, MlpModel};

    let mut r = rng(seed);
    let mut sizes = vec![r.random_range(2..=6)];
    for _ in 0..r.random_range(0..=2) {
        sizes.push(r.random_range(2..=6));
    }
    let classes = r.random_range(2..=4);
    sizes.push(classes);
    // random nonzero biases keep pre-activations off the ReLU kink at 0
    let count = byzsim_core::nn::parameter_count(&sizes);
    let flat: Vec<f64> = (0..count).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut model = MlpModel::unflatten(&flat, &sizes).unwrap();
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..sizes[0]).map(|_| r.random_range(0.0..1.0)).collect())
        .collect();
    let batch = Matrix::from_rows(&rows).unwrap();
    let targets: Vec<usize> = (0..6).map(|_| r.random_range(0..classes)).collect();
    let l2 = 1e-3;

    let (grad, _) = model.backward(&batch, &targets, l2).unwrap();
    let base = model.flatten();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..base.len() {
        let mut p = base.clone();
        p[j] = base[j] + h;
        model.load(&p).unwrap();
        let up = model.loss(&batch, &targets, l2).unwrap();
        p[j] = base[j] - h;
        model.load(&p).unwrap();
        let down = model.loss(&batch, &targets, l2).unwrap();
        let fd = (up - down) / (2.0 * h);
        let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    worst
}

/// Standard-normal rows; the first `m` play the corrupted workers.
fn normal_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Replaces the first `m` rows by the convergence-attack vector, crafted from
/// those rows or, when `omniscient`, from all of them.
fn attacked(rows: &[Vec<f64>], m: usize, z: f64, omniscient: bool) -> Vec<WorkerUpdate> {
    use byzsim_core::{craft_prevent_convergence, PerturbationSign};
    let ups = to_updates(rows);
    let seen = if omniscient { &ups[..] } else { &ups[..m] };
    let mal = craft_prevent_convergence(seen, z, PerturbationSign::Positive, None).unwrap();
    let mut out: Vec<Vec<f64>> = vec![mal.to_vec(); m];
    out.extend_from_slice(&rows[m..]);
    to_updates(&out)
}

#[derive(Debug, Clone, Copy)]
pub struct StealthRates {
    /// Malicious value strictly inside the benign [min, max].
    pub inside: f64,
    /// Trimmed mean (variant 2) above the true mean 0.
    pub shifted: f64,
}

/// One-dimensional trimmed-mean circumvention trials at n = 51, m = 12.
pub fn stealth_rates(trials: usize, seed: u64, omniscient: bool) -> StealthRates {
    use byzsim_core::{compute_z_max, trimmed_mean, TrimmedVariant};
    let (n, m) = (51, 12);
    let z = compute_z_max(n, m).unwrap().z_max;
    let (mut inside, mut shifted) = (0, 0);
    for t in 0..trials {
        let rows = normal_rows(&mut rng(seed.wrapping_add(t as u64)), n, 1);
        let ups = attacked(&rows, m, z, omniscient);
        let mal = ups[0].params[0];
        let lo = rows[m..].iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
        let hi = rows[m..]
            .iter()
            .map(|r| r[0])
            .fold(f64::NEG_INFINITY, f64::max);
        if lo < mal && mal < hi {
            inside += 1;
        }
        if trimmed_mean(&ups, m, TrimmedVariant::V2).unwrap()[0] > 0.0 {
            shifted += 1;
        }
    }
    StealthRates {
        inside: inside as f64 / trials as f64,
        shifted: shifted as f64 / trials as f64,
    }
}

/// Fraction of trials in which Krum picks a corrupted worker, n = 51, m = 12.
pub fn krum_capture_rate(trials: usize, d: usize, z: f64, seed: u64) -> f64 {
    let (n, m) = (51, 12);
    let mut hits = 0;
    for t in 0..trials {
        let rows = normal_rows(&mut rng(seed.wrapping_add(t as u64)), n, d);
        if byzsim_core::krum(&attacked(&rows, m, z, false), m)
            .unwrap()
            .worker_id
            < m
        {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}
