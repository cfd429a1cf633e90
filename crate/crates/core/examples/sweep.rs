//! Paired attack/no-attack runs over several seeds for one defense.
//!
//! Usage: sweep <config.toml> [seeds]

use byzsim_core::{run_experiment, AttackKind, ExperimentConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base = ExperimentConfig::from_file(&args[1]).expect("config");
    let seeds: u64 = args.get(2).map_or(5, |s| s.parse().expect("seed count"));
    let (mut clean, mut attacked, mut drops) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..seeds {
        let mut a_cfg = base.clone();
        a_cfg.seed = seed;
        let mut c_cfg = a_cfg.clone();
        c_cfg.attack.kind = AttackKind::None;
        let a = run_experiment::<f64>(&a_cfg).expect("attacked run");
        let c = run_experiment::<f64>(&c_cfg).expect("clean run");
        clean.push(c.summary.best_accuracy);
        attacked.push(a.summary.best_accuracy);
        drops.push(c.summary.best_accuracy - a.summary.best_accuracy);
        if let Some(b) = a.summary.backdoor_rate_at_best {
            println!(
                "seed {seed}: clean {:.4} attacked {:.4} backdoor {b:.4}",
                c.summary.best_accuracy, a.summary.best_accuracy
            );
        }
    }
    println!(
        "median clean {:.4} attacked {:.4} | median paired drop {:.4}",
        median(clean),
        median(attacked),
        median(drops)
    );
}
