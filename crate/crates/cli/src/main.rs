use std::path::PathBuf;
use std::process::ExitCode;

use byzsim_core::{
    run_experiment, write_results, AttackKind, DatasetSource, DefenseKind, Error, ExperimentConfig,
    ExperimentOutcome, SynthSpec,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "byzsim",
    version,
    about = "Byzantine distributed-SGD attack/defense simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a TOML config.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    defense: Option<String>,
    #[arg(long)]
    attack: Option<String>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `synth` or `mnist:<dir>`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

fn apply_overrides(mut c: ExperimentConfig, a: &RunArgs) -> Result<ExperimentConfig, Error> {
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(m) = a.m {
        // m_assumed follows m unless the file set it apart
        if c.defense.m_assumed == c.m {
            c.defense.m_assumed = m;
        }
        c.m = m;
    }
    if let Some(r) = a.rounds {
        c.rounds = r;
    }
    if let Some(d) = &a.defense {
        c.defense.kind = d.parse::<DefenseKind>()?;
    }
    if let Some(k) = &a.attack {
        c.attack.kind = k.parse::<AttackKind>()?;
    }
    if let Some(z) = a.z {
        c.attack.z = Some(z);
    }
    if let Some(alpha) = a.alpha {
        c.attack.alpha = alpha;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(d) = &a.dataset {
        c.dataset = match d.trim() {
            "synth" | "synthetic" => match c.dataset {
                DatasetSource::Synthetic(s) => DatasetSource::Synthetic(s),
                _ => DatasetSource::Synthetic(SynthSpec::default()),
            },
            other => match other.strip_prefix("mnist:") {
                Some(dir) => DatasetSource::mnist_dir(dir),
                None => return Err(Error::Config(format!("unknown dataset '{other}'"))),
            },
        };
    }
    if a.out_csv.is_some() {
        c.out_csv = a.out_csv.clone();
    }
    if a.out_json.is_some() {
        c.out_json = a.out_json.clone();
    }
    c.validate()?;
    Ok(c)
}

fn run(a: &RunArgs) -> Result<(), Error> {
    let config = apply_overrides(ExperimentConfig::from_file(&a.config)?, a)?;
    let ExperimentOutcome {
        records, summary, ..
    } = run_experiment::<f64>(&config)?;
    write_results(
        &records,
        &config,
        &summary,
        config.out_csv.as_deref(),
        config.out_json.as_deref(),
    )?;
    let backdoor = summary
        .backdoor_rate_at_best
        .map(|b| format!(", backdoor rate {b:.4}"))
        .unwrap_or_default();
    println!(
        "best accuracy {:.4} at round {}{backdoor} ({:.2}s)",
        summary.best_accuracy, summary.best_round, summary.wall_time_secs
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
