//! Standard-normal machinery and per-dimension statistics used by the
//! perturbation-range attacks.

use crate::error::{Error, Result};
use crate::params::{check_updates, WorkerUpdate};
use crate::scalar::Scalar;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const SERIES_CUTOFF: f64 = 2.5;

/// Grid spacing of the emulated z-table.
pub const Z_TABLE_STEP: f64 = 0.01;

/// erf(x) for |x| < `SERIES_CUTOFF` via the all-positive-terms series
/// erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (1*3*...*(2n+1)).
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    while term.abs() > 1e-17 * sum.abs() {
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        k += 1.0;
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// erfc(x) for x >= `SERIES_CUTOFF` via the Laplace continued fraction,
/// evaluated bottom-up.
fn erfc_continued_fraction(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=120).rev() {
        t = x + (k as f64 * 0.5) / t;
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * t)
}

/// Complementary error function for x >= 0.
fn erfc_nonneg(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let v = if a < SERIES_CUTOFF {
        erf_series(a)
    } else {
        1.0 - erfc_continued_fraction(a)
    };
    v.copysign(x)
}

fn phi_f64(z: f64) -> f64 {
    let x = z.abs() * std::f64::consts::FRAC_1_SQRT_2;
    let lower_tail = 0.5 * erfc_nonneg(x);
    if z < 0.0 {
        lower_tail
    } else {
        1.0 - lower_tail
    }
}

/// Cumulative standard normal distribution Φ(z).
pub fn standard_normal_cdf<T: Scalar>(z: T) -> Result<T> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("normal cdf of non-finite value {z}")));
    }
    Ok(T::of(phi_f64(z.as_f64())))
}

/// Inverse of Φ on (0, 1), by bisection to full double precision.
pub fn inverse_standard_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "inverse normal cdf needs p in (0,1), got {p}"
        )));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if phi_f64(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// How far corrupted workers may deviate from the estimated mean while the
/// majority they form with `s` seduced benign workers still sets the median.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackBudget {
    pub n: usize,
    pub m: usize,
    /// Benign workers that must lie beyond the malicious value.
    pub s: usize,
    /// (n - s) / n.
    pub threshold: f64,
    /// Largest z on the 0.01 grid with Φ(z) < threshold.
    pub z_max: f64,
    /// Φ⁻¹(threshold) - 1e-9, the continuous supremum.
    pub z_max_continuous: f64,
}

/// Computes s, the majority threshold and z_max for `n` workers of which `m`
/// are corrupted, emulating a two-decimal z-table lookup.
pub fn compute_z_max(n: usize, m: usize) -> Result<AttackBudget> {
    if m < 1 || m >= n {
        return Err(Error::Config(format!("need 1 <= m < n, got n={n}, m={m}")));
    }
    let s = (n / 2 + 1) as i64 - m as i64;
    if s <= 0 {
        return Err(Error::MajorityHeld { n, m, s });
    }
    let s = s as usize;
    let threshold = (n - s) as f64 / n as f64;

    // integer grid index keeps the reported value exactly k/100
    let grid = |k: i64| k as f64 / 100.0;
    let mut k: i64 = 0;
    if phi_f64(grid(k)) < threshold {
        while phi_f64(grid(k + 1)) < threshold {
            k += 1;
        }
    } else {
        while phi_f64(grid(k)) >= threshold {
            k -= 1;
        }
    }

    Ok(AttackBudget {
        n,
        m,
        s,
        threshold,
        z_max: grid(k),
        z_max_continuous: inverse_standard_normal_cdf(threshold)? - 1e-9,
    })
}

/// Per-dimension mean μ_j and population standard deviation σ_j.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionStats<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Scalar> DimensionStats<T> {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Mean and population standard deviation of every coordinate across `updates`.
pub fn per_dimension_stats<T: Scalar>(updates: &[WorkerUpdate<T>]) -> Result<DimensionStats<T>> {
    if updates.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "per-dimension statistics need at least 2 updates, got {}",
            updates.len()
        )));
    }
    let d = check_updates(updates, 2)?;
    let count = T::of_usize(updates.len());

    let mut mu = vec![T::zero(); d];
    for u in updates {
        for (acc, &x) in mu.iter_mut().zip(u.params.iter()) {
            *acc = *acc + x;
        }
    }
    for v in &mut mu {
        *v = *v / count;
    }

    let mut sigma = vec![T::zero(); d];
    for u in updates {
        for ((acc, &x), &m) in sigma.iter_mut().zip(u.params.iter()).zip(&mu) {
            let dev = x - m;
            *acc = *acc + dev * dev;
        }
    }
    for v in &mut sigma {
        *v = (*v / count).sqrt();
    }
    Ok(DimensionStats { mu, sigma })
}
