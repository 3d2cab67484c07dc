//! Train SDMVC and the per-view baseline on the noisy-view preset from one
//! shared pretraining and compare per-view accuracy.
//!
//! `cargo run --release -p mvdec --example noisy_view`

use mvdec::dataio::{generate_synthetic, SyntheticSpec};
use mvdec::parallel::Parallelism;
use mvdec::trainer::{pretrain, train, Mode, TrainingConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(&SyntheticSpec::noisy_view())?;
    let config = TrainingConfig {
        seed: 7,
        ..TrainingConfig::desk(4)
    };
    let policy = Parallelism::from_env();
    let pre = pretrain(&data, &config, policy)?;

    for mode in [Mode::Sdmvc, Mode::IdecPerView] {
        let run = TrainingConfig { mode, ..config.clone() };
        let outcome = train(&data, &run, Some(&pre), policy)?;
        let result = outcome.report.final_result.expect("finished run");
        let views: Vec<String> = result
            .per_view_scores
            .unwrap_or_default()
            .iter()
            .map(|s| format!("{:.3}", s.acc))
            .collect();
        let consensus = result.consensus_scores.map_or(f64::NAN, |s| s.acc);
        println!(
            "{mode:>13}: {} rounds, per-view ACC [{}], consensus ACC {consensus:.3}",
            outcome.report.rounds.len(),
            views.join(", ")
        );
    }
    Ok(())
}
