//! Run the toy training loop: per-image spectra -> per-image schedules ->
//! noise-and-denoise steps on the trainable spectral denoiser. The learned
//! log-spectrum should converge to the ground truth.
//!
//! Run with: cargo run --release --example train_denoiser

use specsched::diffusion::SamplerConfig;
use specsched::harness::{run_training, DatasetSpec, ExperimentConfig};
use specsched::schedule::{KappaBounds, ScheduleKind};
use specsched::spectral::PowerLawFit;

fn main() {
    let side = 32;
    let truth = PowerLawFit::new(-2.0, 100.0, side / 2).unwrap();
    let config = ExperimentConfig {
        id: "train-denoiser".into(),
        dataset: DatasetSpec::Synthetic { side, count: 256, alpha: -2.0, beta: 100.0 },
        kind: ScheduleKind::Mixed,
        bounds: KappaBounds::default(),
        sampler: SamplerConfig::default(),
        out_dir: std::env::temp_dir().join("specsched-training"),
        seed: 0,
        epochs: 10,
        lr: 0.02,
    };

    let outcome = run_training(&config).unwrap();
    let n = outcome.trace.len();
    println!("{n} training steps");
    println!("mean loss, first 100 steps: {:.4}", outcome.trace[..100].iter().sum::<f64>() / 100.0);
    println!("mean loss, last 100 steps:  {:.4}", outcome.trace[n - 100..].iter().sum::<f64>() / 100.0);
    println!();
    println!("  k   learned log power   true log power");
    for k in [1, 2, 4, 8, 16] {
        println!(
            "{k:3}   {:17.3}   {:14.3}",
            outcome.denoiser.log_power[k],
            truth.eval(k as f64).ln()
        );
    }
    println!();
    println!("artifacts under {}", config.out_dir.join(&config.id).display());
}
