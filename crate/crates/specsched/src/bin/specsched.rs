//! Command-line front end: every pipeline stage as a thin subcommand over
//! the library, with explicit seeds so outputs are reproducible.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 check failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use specsched::diffusion::forward_noise;
use specsched::error::{Error, Result};
use specsched::harness::{
    load_dataset, nfe_sweep, noised_grid, resolution_trend, run_sampling, run_training,
    trend_csv, DatasetSpec, ExperimentConfig, SpectrumSource,
};
use specsched::schedule::{discretize, schedule_csv, KappaBounds, Schedule, ScheduleKind};
use specsched::spectral::{fit_power_law, rapsd, PowerLawFit, SpectrumCurve};
use specsched::specsampler::{
    fit_gmm, manipulate_spectrum, sample_spectrum, GmmFitConfig, GmmParams, SpectrumFeature,
    DEFAULT_COMPONENTS,
};
use specsched::tensorio::{load_image, save_image};

const EXIT_DATA: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "specsched", version, about = "Spectrum-derived diffusion noise schedules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BoundsArgs {
    /// SNR lower bound kappa_min
    #[arg(long, default_value_t = specsched::schedule::DEFAULT_KAPPA_MIN)]
    kmin: f64,
    /// SNR upper bound kappa_max
    #[arg(long, default_value_t = specsched::schedule::DEFAULT_KAPPA_MAX)]
    kmax: f64,
}

impl BoundsArgs {
    fn bounds(&self) -> Result<KappaBounds> {
        KappaBounds::new(self.kmin, self.kmax)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Radially-averaged power spectral density of an image, as CSV
    Rapsd {
        image: PathBuf,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a two-parameter power law to a RAPSD CSV; prints JSON
    Fit { curve: PathBuf },
    /// Tabulate a noise schedule for given power-law parameters
    Schedule {
        #[arg(long, default_value = "mixed")]
        kind: ScheduleKind,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        /// Nyquist bin (side / 2)
        #[arg(long)]
        nf: usize,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        /// Emit the schedule description as JSON instead of the CSV table
        #[arg(long)]
        json: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Noise an image to time t under its own fitted schedule
    Noise {
        image: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "mixed")]
        kind: ScheduleKind,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw power-law parameters from a fitted mixture; prints JSON
    SampleSpectrum {
        /// GMM parameter file (JSON)
        params: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a per-label Gaussian mixture to (label, alpha, beta) CSV rows
    FitGmm {
        /// CSV with header label,alpha,beta
        fits: PathBuf,
        /// Nyquist bin the fits refer to
        #[arg(long)]
        nf: usize,
        #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the toy training loop from an experiment config (JSON)
    TrainToy {
        config: PathBuf,
    },
    /// Run ancestral sampling chains and report the spectral distance
    Sample {
        config: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        /// GMM parameter file; omit to use the ground-truth oracle
        #[arg(long)]
        gmm: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        /// Scale the target spectrum's power at the Nyquist bin
        #[arg(long)]
        manipulate_factor: Option<f64>,
        /// Transition-noise exponent gamma in [0, 1]
        #[arg(long)]
        gamma: Option<f64>,
        /// Loss/weighting bias b
        #[arg(long, allow_hyphen_values = true)]
        bias: Option<f64>,
        #[arg(long)]
        guidance_lo: Option<f64>,
        #[arg(long)]
        guidance_hi: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Exit 4 unless the spectral distance is at most this value
        #[arg(long)]
        check: Option<f64>,
    },
    /// Spectral distance across step counts (NFE sweep), as CSV
    Sweep {
        config: PathBuf,
        /// Comma-separated step counts
        #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
        steps: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Noised-image grid across schedule kinds and times
    Grid {
        image: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "mixed,cosine")]
        kinds: Vec<ScheduleKind>,
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.25,0.5,0.75,1.0")]
        ts: Vec<f64>,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Median schedule curves across resolutions for a synthetic scene set
    Trend {
        #[arg(long, default_value_t = 128)]
        side: usize,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 200.0)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        sides: Vec<usize>,
        #[command(flatten)]
        bounds: BoundsArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_to_string(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&read_to_string(path)?)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_fit_rows(text: &str, nf: usize) -> Result<Vec<(String, SpectrumFeature)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("label")) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::parse("fits csv", format!("line {}: need label,alpha,beta", lineno + 1)));
        }
        let alpha: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse("fits csv", format!("line {}: bad alpha", lineno + 1)))?;
        let beta: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse("fits csv", format!("line {}: bad beta", lineno + 1)))?;
        let fit = PowerLawFit::new(alpha, beta, nf)?;
        rows.push((parts[0].trim().to_string(), specsched::specsampler::feature_from_fit(&fit)));
    }
    Ok(rows)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Rapsd { image, out } => {
            let curve = rapsd(&load_image(&image)?);
            emit(&curve.to_csv(), out.as_ref())?;
        }
        Command::Fit { curve } => {
            let parsed = SpectrumCurve::from_csv(&read_to_string(&curve)?)?;
            let fit = fit_power_law(&parsed)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
        }
        Command::Schedule { kind, alpha, beta, nf, bounds, steps, json, out } => {
            let fit = PowerLawFit::new(alpha, beta, nf)?;
            let schedule = Schedule::from_kind(kind, fit, bounds.bounds()?)?;
            let text = if json {
                format!("{}\n", serde_json::to_string_pretty(&schedule.to_json())?)
            } else {
                schedule_csv(&discretize(&schedule, steps)?)
            };
            emit(&text, out.as_ref())?;
        }
        Command::Noise { image, t, kind, bounds, seed, out } => {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidArgument(format!("t must be in [0, 1], got {t}")));
            }
            let img = load_image(&image)?;
            let fit = fit_power_law(&rapsd(&img))?;
            let schedule = Schedule::from_kind(kind, fit, bounds.bounds()?)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (noised, _) = forward_noise(&img, t, &schedule, &mut rng);
            save_image(&noised, &out)?;
        }
        Command::SampleSpectrum { params, label, count, seed } => {
            let gmm: GmmParams = serde_json::from_str(&read_to_string(&params)?)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fits: Vec<PowerLawFit> = (0..count)
                .map(|_| sample_spectrum(&gmm, &label, &mut rng))
                .collect::<Result<_>>()?;
            println!("{}", serde_json::to_string_pretty(&fits)?);
        }
        Command::FitGmm { fits, nf, components, seed, out } => {
            let rows = parse_fit_rows(&read_to_string(&fits)?, nf)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fitted = fit_gmm(&rows, nf, components, &GmmFitConfig::default(), &mut rng)?;
            let text = format!("{}\n", serde_json::to_string_pretty(&fitted.params)?);
            emit(&text, out.as_ref())?;
        }
        Command::TrainToy { config } => {
            let cfg = load_config(&config)?;
            let outcome = run_training(&cfg)?;
            let summary = serde_json::json!({
                "id": cfg.id,
                "steps": outcome.trace.len(),
                "first_loss": outcome.trace.first(),
                "last_loss": outcome.trace.last(),
                "out_dir": cfg.out_dir.join(&cfg.id),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Sample {
            config,
            count,
            gmm,
            label,
            manipulate_factor,
            gamma,
            bias,
            guidance_lo,
            guidance_hi,
            seed,
            check,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(g) = gamma {
                cfg.sampler.churn = g;
            }
            if let Some(b) = bias {
                cfg.sampler.bias = b;
            }
            if let Some(lo) = guidance_lo {
                cfg.sampler.guidance_interval.0 = lo;
            }
            if let Some(hi) = guidance_hi {
                cfg.sampler.guidance_interval.1 = hi;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (side, mut target) = match &cfg.dataset {
                DatasetSpec::Synthetic { side, alpha, beta, .. } => {
                    (*side, PowerLawFit::new(*alpha, *beta, side / 2)?)
                }
                DatasetSpec::ImageDir { .. } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    let data = load_dataset(&cfg.dataset, &mut rng)?;
                    (data[0].side(), fit_power_law(&rapsd(&data[0]))?)
                }
            };
            if let Some(factor) = manipulate_factor {
                target = manipulate_spectrum(&target, factor)?;
            }
            let source = match gmm {
                Some(path) => {
                    let params: GmmParams = serde_json::from_str(&read_to_string(&path)?)?;
                    let label = label.ok_or_else(|| {
                        Error::InvalidArgument("--label is required with --gmm".into())
                    })?;
                    SpectrumSource::Gmm { params, label }
                }
                None => SpectrumSource::Oracle(target),
            };
            let outcome = run_sampling(&cfg, &source, &target, count, side)?;
            let summary = serde_json::json!({
                "count": count,
                "steps": cfg.sampler.steps,
                "spectral_distance": outcome.distance.summary,
                "log_ratios": outcome.distance.log_ratios,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(limit) = check {
                if outcome.distance.summary > limit {
                    eprintln!(
                        "check failed: spectral distance {} exceeds {limit}",
                        outcome.distance.summary
                    );
                    return Ok(EXIT_CHECK);
                }
            }
        }
        Command::Sweep { config, steps, seeds, count } => {
            let cfg = load_config(&config)?;
            let (side, target) = match &cfg.dataset {
                DatasetSpec::Synthetic { side, alpha, beta, .. } => {
                    (*side, PowerLawFit::new(*alpha, *beta, side / 2)?)
                }
                DatasetSpec::ImageDir { .. } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    let data = load_dataset(&cfg.dataset, &mut rng)?;
                    (data[0].side(), fit_power_law(&rapsd(&data[0]))?)
                }
            };
            let rows = nfe_sweep(
                &cfg,
                &SpectrumSource::Oracle(target),
                &target,
                count,
                side,
                &steps,
                seeds,
            )?;
            print!("steps,distance\n");
            for (n, d) in rows {
                println!("{n},{d:.17e}");
            }
        }
        Command::Grid { image, kinds, ts, bounds, seed, out } => {
            let img = load_image(&image)?;
            let entries = noised_grid(&img, &kinds, &ts, &out, &bounds.bounds()?, seed)?;
            for e in &entries {
                println!("{} t={:.3} lambda={:.6}", e.kind, e.t, e.lambda);
            }
        }
        Command::Trend { side, count, alpha, beta, sides, bounds, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = DatasetSpec::Synthetic { side, count, alpha, beta };
            let scenes = load_dataset(&spec, &mut rng)?;
            let curves = resolution_trend(&scenes, &sides, &bounds.bounds()?)?;
            print!("{}", trend_csv(&curves));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
