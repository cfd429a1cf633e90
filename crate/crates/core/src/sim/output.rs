use std::fs;
use std::path::Path;

use serde_json::json;

use super::{ExperimentConfig, ExperimentSummary, RoundRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = [
    "round",
    "accuracy",
    "backdoor_rate",
    "param_norm",
    "krum_selected",
];

/// Per-round CSV; absent values are empty fields.
pub fn records_csv(records: &[RoundRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.accuracy.to_string(),
            r.backdoor_rate.map(|v| v.to_string()).unwrap_or_default(),
            r.param_norm.to_string(),
            r.krum_selected.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn summary_json(config: &ExperimentConfig, summary: &ExperimentSummary) -> serde_json::Value {
    json!({
        "config": config,
        "best_round": summary.best_round,
        "best_accuracy": summary.best_accuracy,
        "backdoor_rate_at_best": summary.backdoor_rate_at_best,
        "final_accuracy": summary.final_accuracy,
        "z_max": summary.z_max,
        "z_used": summary.z_used,
        "wall_time_secs": summary.wall_time_secs,
    })
}

/// Writes the CSV and/or JSON summary to the given paths.
pub fn write_results(
    records: &[RoundRecord],
    config: &ExperimentConfig,
    summary: &ExperimentSummary,
    csv_path: Option<&Path>,
    json_path: Option<&Path>,
) -> Result<()> {
    if let Some(p) = csv_path {
        fs::write(p, records_csv(records)).map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = json_path {
        let text = serde_json::to_string_pretty(&summary_json(config, summary))
            .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
        fs::write(p, text + "\n").map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}
