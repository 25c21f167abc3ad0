//! Desk-scale experiment harness: end-to-end training and sampling loops,
//! noised-image grids, NFE sweeps, and resolution-trend curves, all pure
//! functions of (config, seed) with artifacts written as CSV/JSON/NetPBM.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    forward_noise, train_spectral_denoiser, Denoiser, SamplerConfig, SpectralDenoiser,
    WienerDenoiser,
};
use crate::error::{Error, Result};
use crate::schedule::{
    discretize, median_schedule, schedule_csv, KappaBounds, Schedule, ScheduleKind,
    MEDIAN_GRID_POINTS,
};
use crate::spectral::{
    fit_power_law, rapsd, PowerLawFit, SpectrumCurve, SpectrumModel,
};
use crate::specsampler::{sample_spectrum, GmmParams};
use crate::tensorio::{load_image, mean_pool, save_image, ImageTensor};

/// Where training/sampling data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Stationary Gaussian power-law fields synthesized on the fly.
    Synthetic { side: usize, count: usize, alpha: f64, beta: f64 },
    /// A directory of NetPBM images, loaded in sorted filename order.
    ImageDir { path: PathBuf },
}

fn default_epochs() -> usize {
    8
}

fn default_lr() -> f64 {
    0.05
}

/// Everything an experiment needs; reruns with the same config are
/// bit-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub dataset: DatasetSpec,
    pub kind: ScheduleKind,
    #[serde(default)]
    pub bounds: KappaBounds,
    #[serde(default)]
    pub sampler: SamplerConfig,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-bin log ratio of two spectra and its summary statistic, the median
/// of |log(psi_gen(k) / psi_ref(k))| over k = 1..=nyquist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDistance {
    pub log_ratios: Vec<f64>,
    pub summary: f64,
}

impl SpectralDistance {
    pub fn between(generated: &SpectrumCurve, reference: &SpectrumCurve) -> Result<Self> {
        if generated.nyquist != reference.nyquist {
            return Err(Error::ShapeMismatch(format!(
                "spectra have different Nyquist bins: {} vs {}",
                generated.nyquist, reference.nyquist
            )));
        }
        let mut log_ratios = Vec::with_capacity(generated.nyquist);
        for k in 1..=generated.nyquist {
            let (g, r) = (generated.power[k], reference.power[k]);
            if !(g > 0.0 && r > 0.0) {
                return Err(Error::DegenerateSpectrum(format!(
                    "non-positive power in bin {k}: {g} vs {r}"
                )));
            }
            log_ratios.push((g / r).ln());
        }
        let mut abs: Vec<f64> = log_ratios.iter().map(|v| v.abs()).collect();
        let summary = crate::schedule::median_in_place(&mut abs);
        Ok(SpectralDistance { log_ratios, summary })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Materialize the dataset. Synthetic data is drawn from the provided rng;
/// image directories are read in sorted order for determinism.
pub fn load_dataset(spec: &DatasetSpec, rng: &mut impl Rng) -> Result<Vec<ImageTensor>> {
    match spec {
        DatasetSpec::Synthetic { side, count, alpha, beta } => {
            let fit = PowerLawFit::new(*alpha, *beta, side / 2)?;
            let model = SpectrumModel::PowerLaw(fit);
            Ok((0..*count)
                .map(|_| crate::spectral::gaussian_field(&model, *side, rng))
                .collect())
        }
        DatasetSpec::ImageDir { path } => {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|s| s.to_str()),
                        Some("pgm") | Some("ppm")
                    )
                })
                .collect();
            entries.sort();
            if entries.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no .pgm/.ppm images in {}",
                    path.display()
                )));
            }
            entries.iter().map(load_image).collect()
        }
    }
}

/// Fit one power law per sample and build the configured schedule kind.
/// The fixed-median kind shares one tabulated schedule across samples.
pub fn build_schedules(
    dataset: &[ImageTensor],
    kind: ScheduleKind,
    bounds: &KappaBounds,
) -> Result<(Vec<PowerLawFit>, Vec<Schedule>)> {
    let fits: Vec<PowerLawFit> = dataset
        .iter()
        .map(|x| fit_power_law(&rapsd(x)))
        .collect::<Result<_>>()?;
    let schedules = match kind {
        ScheduleKind::FixedMedian => vec![median_schedule(&fits, bounds)?],
        _ => fits
            .iter()
            .map(|f| Schedule::from_kind(kind, *f, bounds.clone()))
            .collect::<Result<_>>()?,
    };
    Ok((fits, schedules))
}

/// Artifacts produced by a training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub denoiser: SpectralDenoiser,
    pub trace: Vec<f64>,
    pub fits: Vec<PowerLawFit>,
    pub schedules: Vec<Schedule>,
}

pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{},{:.17e}\n", i, l));
    }
    out
}

/// The training loop: per sample, RAPSD -> power-law fit -> schedule, then
/// noise-and-denoise steps on the toy spectral denoiser. Persists the
/// denoiser (JSON) and the loss trace (CSV) under the output directory.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainingOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dataset = load_dataset(&config.dataset, &mut rng)?;
    let (fits, schedules) = build_schedules(&dataset, config.kind, &config.bounds)?;
    let side = dataset[0].side();
    let init = SpectralDenoiser::flat(side / 2);
    let (denoiser, trace) = train_spectral_denoiser(
        &dataset,
        &schedules,
        init,
        config.epochs,
        config.lr,
        config.sampler.bias,
        &mut rng,
    )?;
    let dir = config.out_dir.join(&config.id);
    write_text(&dir.join("denoiser.json"), &serde_json::to_string_pretty(&denoiser)?)?;
    write_text(&dir.join("loss_trace.csv"), &loss_trace_csv(&trace))?;
    let fits_json = serde_json::to_string_pretty(&fits)?;
    write_text(&dir.join("fits.json"), &fits_json)?;
    Ok(TrainingOutcome { denoiser, trace, fits, schedules })
}

/// Deterministic evaluation of the mean training loss on a fixed grid of
/// times with a fixed noise seed, for before/after comparisons.
pub fn eval_mean_loss(
    dataset: &[ImageTensor],
    schedules: &[Schedule],
    denoiser: &dyn Denoiser,
    bias: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut total = 0.0;
    let mut n = 0usize;
    for (i, x0) in dataset.iter().enumerate() {
        let schedule = &schedules[i % schedules.len()];
        for &t in &ts {
            let cond =
                crate::diffusion::ConditioningTuple::from_schedule(None, schedule, t);
            total += crate::diffusion::loss_term(x0, t, schedule, denoiser, &cond, bias, &mut rng);
            n += 1;
        }
    }
    total / n as f64
}

/// Where sampled spectra come from: the ground-truth oracle or a fitted
/// GMM conditioned on a label.
#[derive(Debug, Clone)]
pub enum SpectrumSource {
    Oracle(PowerLawFit),
    Gmm { params: GmmParams, label: String },
}

impl SpectrumSource {
    fn draw(&self, rng: &mut impl Rng) -> Result<PowerLawFit> {
        match self {
            SpectrumSource::Oracle(fit) => Ok(*fit),
            SpectrumSource::Gmm { params, label } => sample_spectrum(params, label, rng),
        }
    }
}

/// Samples and their aggregate spectral match against the target.
#[derive(Debug, Clone)]
pub struct SamplingOutcome {
    pub samples: Vec<ImageTensor>,
    pub mean_curve: SpectrumCurve,
    pub distance: SpectralDistance,
}

/// The sampling loop: draw a spectrum per sample, build its schedule and
/// Wiener denoiser, run the ancestral chain, then compare the mean RAPSD of
/// the batch against the target spectrum. Chains use per-sample seeds so
/// the noise stream is independent of how many rng draws the spectrum
/// source consumes.
pub fn run_sampling(
    config: &ExperimentConfig,
    source: &SpectrumSource,
    target: &PowerLawFit,
    count: usize,
    side: usize,
) -> Result<SamplingOutcome> {
    let mut spectrum_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let nyquist = side / 2;
    let mut samples = Vec::with_capacity(count);
    let mut mean_power = vec![0.0; nyquist + 1];
    let mut counts = Vec::new();
    for index in 0..count {
        let fit = source.draw(&mut spectrum_rng)?;
        let schedule = Schedule::from_kind(config.kind, fit, config.bounds.clone())?;
        let denoiser = WienerDenoiser { spectrum: SpectrumModel::PowerLaw(fit) };
        let mut chain_rng =
            ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9).wrapping_add(index as u64));
        let sample = crate::diffusion::sample_chain(
            &config.sampler,
            &schedule,
            &denoiser,
            None,
            None,
            side,
            1,
            &mut chain_rng,
        )?;
        let curve = rapsd(&sample);
        for k in 0..=nyquist {
            mean_power[k] += curve.power[k] / count as f64;
        }
        counts = curve.counts;
        samples.push(sample);
    }
    let mean_curve = SpectrumCurve { nyquist, power: mean_power, counts };
    let target_curve = SpectrumCurve::from_fn(side, |k| {
        if k == 0 {
            0.0
        } else {
            target.eval(k as f64)
        }
    });
    let distance = SpectralDistance::between(&mean_curve, &target_curve)?;
    Ok(SamplingOutcome { samples, mean_curve, distance })
}

/// One cell of a noised-image grid.
#[derive(Debug, Clone)]
pub struct NoisedGridEntry {
    pub kind: ScheduleKind,
    pub t: f64,
    pub lambda: f64,
    pub image: ImageTensor,
    pub curve: SpectrumCurve,
}

/// Noise one image under several schedule kinds at several times; write
/// each noised image and its RAPSD curve under `out_dir`.
pub fn noised_grid(
    image: &ImageTensor,
    kinds: &[ScheduleKind],
    ts: &[f64],
    out_dir: &Path,
    bounds: &KappaBounds,
    seed: u64,
) -> Result<Vec<NoisedGridEntry>> {
    let fit = fit_power_law(&rapsd(image))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for &kind in kinds {
        let schedule = Schedule::from_kind(kind, fit, bounds.clone())?;
        for &t in ts {
            let (noised, _) = forward_noise(image, t, &schedule, &mut rng);
            let curve = rapsd(&noised);
            let stem = format!("{kind}_t{:.3}", t);
            let ext = if image.channels() == 3 { "ppm" } else { "pgm" };
            fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            save_image(&noised, out_dir.join(format!("{stem}.{ext}")))?;
            write_text(&out_dir.join(format!("{stem}.csv")), &curve.to_csv())?;
            entries.push(NoisedGridEntry { kind, t, lambda: schedule.lambda(t), image: noised, curve });
        }
    }
    Ok(entries)
}

/// Run the sampling loop at several step counts, averaging the spectral
/// distance over `seeds` seeds per count. Returns (steps, mean distance).
pub fn nfe_sweep(
    config: &ExperimentConfig,
    source: &SpectrumSource,
    target: &PowerLawFit,
    count: usize,
    side: usize,
    step_counts: &[usize],
    seeds: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(step_counts.len());
    for &n in step_counts {
        let mut total = 0.0;
        for s in 0..seeds {
            let mut cfg = config.clone();
            cfg.seed = config.seed + s as u64;
            cfg.sampler.steps = n;
            total += run_sampling(&cfg, source, target, count, side)?.distance.summary;
        }
        rows.push((n, total / seeds as f64));
    }
    let mut csv = String::from("steps,distance\n");
    for (n, d) in &rows {
        csv.push_str(&format!("{},{:.17e}\n", n, d));
    }
    write_text(&config.out_dir.join(&config.id).join("nfe_sweep.csv"), &csv)?;
    Ok(rows)
}

/// Median mixed-schedule lambda curve at one resolution.
#[derive(Debug, Clone)]
pub struct TrendCurve {
    pub side: usize,
    pub grid: Vec<f64>,
}

impl TrendCurve {
    /// lambda at t by linear interpolation on the tabulated grid.
    pub fn lambda(&self, t: f64) -> f64 {
        let n = self.grid.len();
        let pos = t.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        if lo + 1 >= n {
            return self.grid[n - 1];
        }
        let frac = pos - lo as f64;
        self.grid[lo] * (1.0 - frac) + self.grid[lo + 1] * frac
    }
}

/// Synthesize scenes at the largest side, mean-pool down to each smaller
/// side, and compute the median mixed-schedule lambda curve per resolution.
pub fn resolution_trend(
    scenes: &[ImageTensor],
    sides: &[usize],
    bounds: &KappaBounds,
) -> Result<Vec<TrendCurve>> {
    let full = scenes
        .first()
        .ok_or_else(|| Error::InvalidArgument("no scenes".into()))?
        .side();
    let mut curves = Vec::with_capacity(sides.len());
    for &side in sides {
        if full % side != 0 {
            return Err(Error::InvalidArgument(format!(
                "side {side} does not divide the source side {full}"
            )));
        }
        let factor = full / side;
        let fits: Vec<PowerLawFit> = scenes
            .iter()
            .map(|s| {
                let pooled = if factor == 1 { s.clone() } else { mean_pool(s, factor)? };
                fit_power_law(&rapsd(&pooled))
            })
            .collect::<Result<_>>()?;
        let median = median_schedule(&fits, bounds)?;
        let grid = match median {
            Schedule::FixedMedian { grid } => grid,
            _ => unreachable!("median_schedule returns the tabulated kind"),
        };
        curves.push(TrendCurve { side, grid });
    }
    Ok(curves)
}

pub fn trend_csv(curves: &[TrendCurve]) -> String {
    let mut out = String::from("t");
    for c in curves {
        out.push_str(&format!(",lambda_side{}", c.side));
    }
    out.push('\n');
    for i in 0..MEDIAN_GRID_POINTS {
        let t = i as f64 / (MEDIAN_GRID_POINTS - 1) as f64;
        out.push_str(&format!("{:.17e}", t));
        for c in curves {
            out.push_str(&format!(",{:.17e}", c.grid[i]));
        }
        out.push('\n');
    }
    out
}

/// Convenience: discretize a schedule and render the CSV table.
pub fn schedule_table(schedule: &Schedule, steps: usize) -> Result<String> {
    Ok(schedule_csv(&discretize(schedule, steps)?))
}
