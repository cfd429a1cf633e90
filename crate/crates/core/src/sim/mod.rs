//! Synchronous parameter-server SGD with an attacker intercepting the
//! corrupted workers' reports before aggregation.

mod config;
mod output;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DatasetSource, ExperimentConfig, FlatConfig, SynthSpec};
pub use output::{records_csv, summary_json, write_results};

use crate::attacks::{
    apply_backdoor_pattern, craft_backdoor, craft_prevent_convergence, AttackKind, BackdoorKind,
};
use crate::data::{load_idx, split_iid, synth_blobs, DataSplit, Dataset};
use crate::error::{Error, Result};
use crate::nn::{train_local, MlpModel};
use crate::numstats::compute_z_max;
use crate::params::{ParameterVector, WorkerUpdate};
use crate::rng::{stream_seed, Stream};
use crate::scalar::Scalar;

/// Metrics of the aggregate produced in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based; record `t` evaluates the parameters produced by round `t`.
    pub round: usize,
    pub accuracy: f64,
    pub backdoor_rate: Option<f64>,
    pub param_norm: f64,
    pub krum_selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    /// Round with the highest test accuracy (earliest on ties).
    pub best_round: usize,
    pub best_accuracy: f64,
    pub backdoor_rate_at_best: Option<f64>,
    pub final_accuracy: f64,
    /// Stealth bound for (n, m), when defined.
    pub z_max: Option<f64>,
    /// z actually used by the attack.
    pub z_used: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome<T> {
    pub records: Vec<RoundRecord>,
    pub summary: ExperimentSummary,
    /// Parameters that maximized test accuracy.
    pub best_params: ParameterVector<T>,
}

/// Train and test sets for a configuration.
pub fn load_datasets<T: Scalar>(config: &ExperimentConfig) -> Result<(Dataset<T>, Dataset<T>)> {
    match &config.dataset {
        DatasetSource::Synthetic(s) => {
            let train = synth_blobs(
                s.classes,
                s.dim,
                s.train_per_class,
                s.spread,
                stream_seed(config.seed, Stream::TrainData, 0, 0),
            )?;
            let test = synth_blobs(
                s.classes,
                s.dim,
                s.test_per_class,
                s.spread,
                stream_seed(config.seed, Stream::TestData, 0, 0),
            )?;
            Ok((train, test))
        }
        DatasetSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train: Dataset<T> = load_idx(train_images, train_labels)?;
            let test: Dataset<T> = load_idx(test_images, test_labels)?;
            let classes = train.class_count().max(test.class_count());
            Ok((
                train.with_class_count(classes)?,
                test.with_class_count(classes)?,
            ))
        }
    }
}

/// Benign accuracy on `test`, and the fraction of `backdoor` inputs
/// classified as their (malicious) label when a backdoor set is given.
pub fn evaluate<T: Scalar>(
    model: &MlpModel<T>,
    test: &Dataset<T>,
    backdoor: Option<&Dataset<T>>,
) -> Result<(f64, Option<f64>)> {
    if test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    let hit_rate = |d: &Dataset<T>| -> Result<f64> {
        let pred = model.predict(d.inputs())?;
        let hits = pred.iter().zip(d.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / d.len() as f64)
    };
    let acc = hit_rate(test)?;
    let bd = match backdoor {
        Some(b) if !b.is_empty() => Some(hit_rate(b)?),
        Some(_) => {
            return Err(Error::InsufficientData(
                "empty backdoor evaluation set".into(),
            ))
        }
        None => None,
    };
    Ok((acc, bd))
}

/// What the attacker trains on and how success is measured.
struct BackdoorPlan<T> {
    /// Fixed training set (sample backdoor), or `None` for the per-round pattern draw.
    fixed: Option<Dataset<T>>,
    evaluation: Dataset<T>,
}

fn plan_backdoor<T: Scalar>(
    config: &ExperimentConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<Option<BackdoorPlan<T>>> {
    if config.attack.kind != AttackKind::Backdoor || config.m == 0 {
        return Ok(None);
    }
    let spec = &config.attack.backdoor;
    match spec.kind {
        BackdoorKind::Pattern => Ok(Some(BackdoorPlan {
            fixed: None,
            evaluation: apply_backdoor_pattern(test, &spec.pattern)?,
        })),
        BackdoorKind::Sample => {
            if let Some(&bad) = spec.sample_indices.iter().find(|&&i| i >= train.len()) {
                return Err(Error::Config(format!(
                    "backdoor sample {bad} outside the {}-sample training set",
                    train.len()
                )));
            }
            let base = train.subset(&spec.sample_indices);
            let classes = train.class_count();
            let targets: Vec<usize> = base.labels().iter().map(|&y| (y + 1) % classes).collect();
            let set = Dataset::new(base.inputs().clone(), targets, classes, base.width())?;
            Ok(Some(BackdoorPlan {
                fixed: Some(set.clone()),
                evaluation: set,
            }))
        }
    }
}

/// Fresh patched samples for one round, drawn with replacement from the
/// corrupted workers' chunks.
fn pattern_round_set<T: Scalar>(
    config: &ExperimentConfig,
    train: &Dataset<T>,
    split: &DataSplit,
    round: usize,
) -> Result<Dataset<T>> {
    let pool: Vec<usize> = (0..config.m)
        .flat_map(|w| split.chunk(w).iter().copied())
        .collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(stream_seed(config.seed, Stream::Backdoor, round as u64, 0));
    let pattern = &config.attack.backdoor.pattern;
    let picks: Vec<usize> = (0..pattern.samples_per_round)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect();
    apply_backdoor_pattern(&train.subset(&picks), pattern)
}

/// Runs the synchronous SGD loop of `config` and evaluates every round's
/// aggregate. Workers `0..m` are the corrupted ones.
pub fn run_experiment<T: Scalar>(config: &ExperimentConfig) -> Result<ExperimentOutcome<T>> {
    let started = Instant::now();
    config.validate()?;
    let (train, test) = load_datasets::<T>(config)?;
    run_with_data(config, &train, &test, started)
}

/// [`run_experiment`] on already loaded data.
pub fn run_experiment_on<T: Scalar>(
    config: &ExperimentConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<ExperimentOutcome<T>> {
    config.validate()?;
    run_with_data(config, train, test, Instant::now())
}

fn run_with_data<T: Scalar>(
    config: &ExperimentConfig,
    train: &Dataset<T>,
    test: &Dataset<T>,
    started: Instant,
) -> Result<ExperimentOutcome<T>> {
    let (n, m) = (config.n, config.m);
    let sizes = &config.layer_sizes;
    if sizes[0] != train.feature_count() || sizes[0] != test.feature_count() {
        return Err(Error::Config(format!(
            "model input size {} does not match {} dataset features",
            sizes[0],
            train.feature_count()
        )));
    }
    if *sizes.last().expect("validated") != train.class_count() {
        return Err(Error::Config(format!(
            "model output size {} does not match {} classes",
            sizes.last().expect("validated"),
            train.class_count()
        )));
    }

    let split = split_iid(
        train.len(),
        n,
        stream_seed(config.seed, Stream::Split, 0, 0),
    )?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, Stream::Init, 0, 0));
    let mut model: MlpModel<T> = MlpModel::init_uniform(sizes, &mut init_rng)?;

    let attacking = config.attack.kind != AttackKind::None && m > 0;
    let z_max = compute_z_max(n, m).ok().map(|b| b.z_max);
    let z_used = if attacking {
        Some(match config.attack.z {
            Some(z) => z,
            None => compute_z_max(n, m)?.z_max.max(0.0),
        })
    } else {
        None
    };
    let backdoor = plan_backdoor(config, train, test)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut records = Vec::with_capacity(config.rounds);
    let mut best: Option<(usize, f64, ParameterVector<T>)> = None;
    for round in 1..=config.rounds {
        let mut step = || -> Result<(RoundRecord, ParameterVector<T>)> {
            let broadcast = model.flatten();
            let trained: Vec<Result<ParameterVector<T>>> = pool.install(|| {
                (0..n)
                    .into_par_iter()
                    .map(|w| {
                        let seed = stream_seed(config.seed, Stream::Worker, round as u64, w as u64);
                        train_local(&model, train, split.chunk(w), &config.training, seed)
                    })
                    .collect()
            });
            let mut updates = Vec::with_capacity(n);
            for (w, p) in trained.into_iter().enumerate() {
                updates.push(WorkerUpdate {
                    worker_id: w,
                    params: p?,
                });
            }

            if let Some(z) = z_used {
                let observed: &[WorkerUpdate<T>] = if config.attack.omniscient {
                    &updates
                } else {
                    &updates[..m]
                };
                let malicious = match config.attack.kind {
                    AttackKind::PreventConvergence => craft_prevent_convergence(
                        observed,
                        z,
                        config.attack.sign,
                        Some(&broadcast),
                    )?,
                    AttackKind::Backdoor => {
                        let plan = backdoor.as_ref().expect("planned for backdoor runs");
                        let drawn;
                        let set = match &plan.fixed {
                            Some(s) => s,
                            None => {
                                drawn = pattern_round_set(config, train, &split, round)?;
                                &drawn
                            }
                        };
                        craft_backdoor(
                            observed,
                            z,
                            config.attack.alpha,
                            set,
                            sizes,
                            &config.training,
                            config.attack.local_epochs,
                        )?
                        .params
                    }
                    AttackKind::None => unreachable!("attacking implies an attack kind"),
                };
                for u in updates.iter_mut().take(m) {
                    u.params = malicious.clone();
                }
            }

            let agg = config.defense.aggregate(&updates)?;
            model.load(&agg.params)?;
            let (accuracy, backdoor_rate) =
                evaluate(&model, test, backdoor.as_ref().map(|b| &b.evaluation))?;
            let record = RoundRecord {
                round,
                accuracy,
                backdoor_rate,
                param_norm: agg.params.norm().as_f64(),
                krum_selected: agg.selected,
            };
            Ok((record, agg.params))
        };
        let (record, params) = step().map_err(|e| e.at_round(round))?;
        if best.as_ref().is_none_or(|b| record.accuracy > b.1) {
            best = Some((records.len(), record.accuracy, params));
        }
        records.push(record);
    }

    let (best_idx, _, best_params) = best.expect("at least one round");
    let summary = ExperimentSummary {
        best_round: records[best_idx].round,
        best_accuracy: records[best_idx].accuracy,
        backdoor_rate_at_best: records[best_idx].backdoor_rate,
        final_accuracy: records.last().expect("at least one round").accuracy,
        z_max,
        z_used,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutcome {
        records,
        summary,
        best_params,
    })
}
