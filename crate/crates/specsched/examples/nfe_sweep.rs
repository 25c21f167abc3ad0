//! Sweep the number of sampling steps and watch the spectral distance of
//! the generated batch shrink, averaged over seeds.
//!
//! Run with: cargo run --release --example nfe_sweep

use specsched::diffusion::SamplerConfig;
use specsched::harness::{nfe_sweep, DatasetSpec, ExperimentConfig, SpectrumSource};
use specsched::schedule::{KappaBounds, ScheduleKind};
use specsched::spectral::PowerLawFit;

fn main() {
    let side = 32;
    let target = PowerLawFit::new(-2.0, 100.0, side / 2).unwrap();
    let config = ExperimentConfig {
        id: "nfe-sweep".into(),
        dataset: DatasetSpec::Synthetic { side, count: 0, alpha: -2.0, beta: 100.0 },
        kind: ScheduleKind::Mixed,
        bounds: KappaBounds::default(),
        sampler: SamplerConfig::default(),
        out_dir: std::env::temp_dir().join("specsched-nfe"),
        seed: 0,
        epochs: 0,
        lr: 0.0,
    };

    let rows = nfe_sweep(
        &config,
        &SpectrumSource::Oracle(target),
        &target,
        32,
        side,
        &[1, 4, 16, 64, 256],
        3,
    )
    .unwrap();

    println!("steps   spectral distance (3-seed mean)");
    for (n, d) in &rows {
        println!("{n:5}   {d:.4}");
    }
    println!();
    println!("csv written under {}", config.out_dir.join(&config.id).display());
}
