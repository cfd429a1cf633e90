//! Malicious replacements for the corrupted workers' updates: the
//! perturbation-range convergence attack and the clamped backdoor attack.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{sgd_step, MlpModel, TrainingConfig};
use crate::numstats::{per_dimension_stats, DimensionStats};
use crate::params::{ParameterVector, WorkerUpdate};
use crate::scalar::Scalar;

/// Floor of the per-coordinate scale in the distance penalty.
pub const DELTA_SCALE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    PreventConvergence,
    Backdoor,
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "none" | "no_attack" => Ok(AttackKind::None),
            "prevent_convergence" | "convergence" => Ok(AttackKind::PreventConvergence),
            "backdoor" => Ok(AttackKind::Backdoor),
            _ => Err(Error::Config(format!("unknown attack '{s}'"))),
        }
    }
}

/// Direction of the per-coordinate shift applied by the convergence attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationSign {
    /// μ + zσ.
    #[default]
    Positive,
    /// μ - zσ.
    Negative,
    /// μ + sign(μ - P)·zσ, with P the parameters broadcast this round.
    AlongUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackdoorKind {
    Sample,
    Pattern,
}

/// Square of `size` x `size` pixels in the top-left corner set to `intensity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternSpec {
    pub size: usize,
    pub intensity: f64,
    pub target: usize,
    /// Fresh patched samples the attacker trains on every round.
    pub samples_per_round: usize,
}

impl Default for PatternSpec {
    fn default() -> Self {
        PatternSpec {
            size: 5,
            intensity: 1.0,
            target: 0,
            samples_per_round: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackdoorSpec {
    pub kind: BackdoorKind,
    /// Training-set indices of the backdoor samples; their malicious target is
    /// `(y + 1) mod |Y|`.
    pub sample_indices: Vec<usize>,
    pub pattern: PatternSpec,
}

impl Default for BackdoorSpec {
    fn default() -> Self {
        BackdoorSpec {
            kind: BackdoorKind::Pattern,
            sample_indices: vec![0],
            pattern: PatternSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Deviation in units of σ; `None` uses the z-table bound for (n, m).
    pub z: Option<f64>,
    /// Estimate statistics from all n updates instead of the corrupted ones.
    pub omniscient: bool,
    pub alpha: f64,
    pub backdoor: BackdoorSpec,
    /// Attacker training epochs over the backdoor set per round.
    pub local_epochs: usize,
    pub sign: PerturbationSign,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackKind::None,
            z: None,
            omniscient: false,
            alpha: 0.2,
            backdoor: BackdoorSpec::default(),
            local_epochs: 5,
            sign: PerturbationSign::Positive,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(z) = self.z {
            check_z(z)?;
        }
        check_alpha(self.alpha)?;
        let p = &self.backdoor.pattern;
        if !(0.0..=1.0).contains(&p.intensity) {
            return Err(Error::Config(format!(
                "pattern intensity must lie in [0, 1], got {}",
                p.intensity
            )));
        }
        if self.kind == AttackKind::Backdoor {
            match self.backdoor.kind {
                BackdoorKind::Pattern if p.size == 0 || p.samples_per_round == 0 => {
                    return Err(Error::Config(
                        "pattern backdoor needs a positive size and sample count".into(),
                    ))
                }
                BackdoorKind::Sample if self.backdoor.sample_indices.is_empty() => {
                    return Err(Error::Config(
                        "sample backdoor needs at least one sample".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn check_z(z: f64) -> Result<()> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::Config(format!(
            "z must be a finite non-negative number, got {z}"
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// μ + z·σ per coordinate (sign per `sign`), with μ and σ estimated from
/// `observed`. Every corrupted worker reports the returned vector.
///
/// `broadcast` is required for [`PerturbationSign::AlongUpdate`] only.
pub fn craft_prevent_convergence<T: Scalar>(
    observed: &[WorkerUpdate<T>],
    z: f64,
    sign: PerturbationSign,
    broadcast: Option<&[T]>,
) -> Result<ParameterVector<T>> {
    check_z(z)?;
    let DimensionStats { mu, sigma } = per_dimension_stats(observed)?;
    let z = T::of(z);
    let out = match sign {
        PerturbationSign::Positive => mu.iter().zip(&sigma).map(|(&m, &s)| m + z * s).collect(),
        PerturbationSign::Negative => mu.iter().zip(&sigma).map(|(&m, &s)| m - z * s).collect(),
        PerturbationSign::AlongUpdate => {
            let p = broadcast.ok_or_else(|| {
                Error::Config("along-update perturbation needs the broadcast parameters".into())
            })?;
            if p.len() != mu.len() {
                return Err(Error::Shape(format!(
                    "broadcast has {} parameters, updates have {}",
                    p.len(),
                    mu.len()
                )));
            }
            mu.iter()
                .zip(&sigma)
                .zip(p)
                .map(|((&m, &s), &g)| {
                    let dir = if m >= g { T::one() } else { -T::one() };
                    m + dir * z * s
                })
                .collect()
        }
    };
    Ok(out)
}

/// Σ_j ((new_j - old_j) / max(z·σ_j, 1e-5))² and its gradient in `new`.
pub fn delta_loss<T: Scalar>(
    new_params: &[T],
    old_params: &[T],
    sigma: &[T],
    z: T,
) -> Result<(T, Vec<T>)> {
    if new_params.len() != old_params.len() || sigma.len() != old_params.len() {
        return Err(Error::Shape(format!(
            "distance penalty over {} / {} / {} values",
            new_params.len(),
            old_params.len(),
            sigma.len()
        )));
    }
    let floor = T::of(DELTA_SCALE_FLOOR);
    let two = T::of(2.0);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(new_params.len());
    for ((&a, &b), &s) in new_params.iter().zip(old_params).zip(sigma) {
        let scale = (z * s).max(floor);
        let r = (a - b) / scale;
        loss = loss + r * r;
        grad.push(two * r / scale);
    }
    Ok((loss, grad))
}

/// Clamps each coordinate to [μ_j - zσ_j, μ_j + zσ_j].
pub fn clamp_to_range<T: Scalar>(values: &mut [T], mu: &[T], sigma: &[T], z: T) {
    for ((v, &m), &s) in values.iter_mut().zip(mu).zip(sigma) {
        let lo = m - z * s;
        let hi = m + z * s;
        *v = lo.max(v.min(hi));
    }
}

/// Output of [`craft_backdoor`].
#[derive(Debug, Clone, PartialEq)]
pub struct BackdoorOutcome<T> {
    pub params: ParameterVector<T>,
    pub stats: DimensionStats<T>,
    /// ℓ_backdoor after each attacker epoch.
    pub backdoor_losses: Vec<T>,
}

/// Trains from μ on `backdoor_set` (inputs already carrying the backdoor,
/// labels already the malicious targets) with loss
/// `alpha * ℓ_backdoor + (1 - alpha) * ℓ_Δ`, then clamps the result to μ ± zσ.
///
/// Each epoch is one full-batch step of the engine optimizer taken in the
/// coordinates `u_j = (v_j - μ_j) / max(z·σ_j, 1e-5)`, where ℓ_Δ is `|u|²`.
/// In raw coordinates ℓ_Δ has curvature up to 1e10 and the engine learning
/// rate diverges on it.
pub fn craft_backdoor<T: Scalar>(
    observed: &[WorkerUpdate<T>],
    z: f64,
    alpha: f64,
    backdoor_set: &Dataset<T>,
    layer_sizes: &[usize],
    training: &TrainingConfig,
    local_epochs: usize,
) -> Result<BackdoorOutcome<T>> {
    check_z(z)?;
    check_alpha(alpha)?;
    training.validate()?;
    if backdoor_set.is_empty() {
        return Err(Error::InsufficientData("empty backdoor set".into()));
    }
    let stats = per_dimension_stats(observed)?;
    let mut model = MlpModel::unflatten(&stats.mu, layer_sizes)?;
    let z = T::of(z);
    let a = T::of(alpha);
    let l2 = T::of(training.l2_weight);
    let floor = T::of(DELTA_SCALE_FLOOR);
    let scale: Vec<T> = stats.sigma.iter().map(|&s| (z * s).max(floor)).collect();
    let d = scale.len();
    let mut u = vec![T::zero(); d];
    let mut velocity = vec![T::zero(); d];
    let mut params = stats.mu.clone();
    let mut losses = Vec::with_capacity(local_epochs);
    for _ in 0..local_epochs {
        let (grad_bd, _) = model.backward(backdoor_set.inputs(), backdoor_set.labels(), l2)?;
        let (_, grad_delta) = delta_loss(&params, &stats.mu, &stats.sigma, z)?;
        // chain rule through v = μ + scale ∘ u
        let grad_u: Vec<T> = (0..d)
            .map(|j| scale[j] * (a * grad_bd[j] + (T::one() - a) * grad_delta[j]))
            .collect();
        sgd_step(&mut u, &grad_u, &mut velocity, training)?;
        for j in 0..d {
            params[j] = stats.mu[j] + scale[j] * u[j];
        }
        model.load(&params)?;
        losses.push(model.loss(backdoor_set.inputs(), backdoor_set.labels(), l2)?);
    }
    let mut out = params;
    clamp_to_range(&mut out, &stats.mu, &stats.sigma, z);
    Ok(BackdoorOutcome {
        params: ParameterVector::new(out),
        stats,
        backdoor_losses: losses,
    })
}

/// Sets the top-left `size` x `size` block of every image to `intensity` and
/// relabels every sample with the pattern's target class.
pub fn apply_backdoor_pattern<T: Scalar>(
    images: &Dataset<T>,
    pattern: &PatternSpec,
) -> Result<Dataset<T>> {
    let width = images.width();
    let height = images.feature_count() / width;
    if pattern.size > width || pattern.size > height {
        return Err(Error::Shape(format!(
            "{0}x{0} pattern does not fit {width}x{height} images",
            pattern.size
        )));
    }
    if pattern.target >= images.class_count() {
        return Err(Error::Config(format!(
            "pattern target {} outside [0, {})",
            pattern.target,
            images.class_count()
        )));
    }
    let value = T::of(pattern.intensity);
    let mut inputs = Matrix::zeros(images.len(), images.feature_count());
    for (r, src) in images.inputs().iter_rows().enumerate() {
        let dst = inputs.row_mut(r);
        dst.copy_from_slice(src);
        for y in 0..pattern.size {
            for x in 0..pattern.size {
                dst[y * width + x] = value;
            }
        }
    }
    Dataset::new(
        inputs,
        vec![pattern.target; images.len()],
        images.class_count(),
        width,
    )
}
