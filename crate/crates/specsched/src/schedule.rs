//! Per-instance noise schedules built from a power-law spectrum fit.
//!
//! A schedule maps diffusion time t in [0, 1] to the logSNR lambda(t)
//! (natural log of alpha_t^2 / sigma_t^2). t = 0 is clean, t = 1 is pure
//! noise, and lambda is strictly decreasing for every kind. The frequency-
//! and power-focused kinds follow closed forms obtained by composing the
//! kappa interpolation with the fitted spectrum; the mixed kind is their
//! arithmetic mean. Cosine, cosine-minmax, and the tabulated median are
//! baseline / ablation variants.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::PowerLawFit;

/// Default tolerance multiplier at t = 0 (signal preservation).
pub const DEFAULT_KAPPA_MIN: f64 = 0.2;
/// Default tolerance multiplier at t = 1 (signal destruction).
pub const DEFAULT_KAPPA_MAX: f64 = 200.0;
/// Clipping for the cosine baseline so lambda stays finite at the endpoints.
pub const T_EPS: f64 = 1e-4;
/// Width of the analytic branch around the alpha = -1 pole of the
/// power-focused closed form.
pub const EPS_POLE: f64 = 1e-6;
/// Grid size of the tabulated median schedule.
pub const MEDIAN_GRID_POINTS: usize = 1024;

/// Noise tolerance multipliers: kappa_min at t = 0, kappa_max at t = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaBounds {
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl KappaBounds {
    pub fn new(kappa_min: f64, kappa_max: f64) -> Result<Self> {
        if !(0.0 < kappa_min && kappa_min < kappa_max) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < kappa_min < kappa_max, got ({kappa_min}, {kappa_max})"
            )));
        }
        Ok(KappaBounds { kappa_min, kappa_max })
    }
}

impl Default for KappaBounds {
    fn default() -> Self {
        KappaBounds {
            kappa_min: DEFAULT_KAPPA_MIN,
            kappa_max: DEFAULT_KAPPA_MAX,
        }
    }
}

/// Log-space interpolation of the tolerance multiplier:
/// kappa_max^t * kappa_min^(1-t).
pub fn kappa_at(t: f64, b: &KappaBounds) -> f64 {
    (t * b.kappa_max.ln() + (1.0 - t) * b.kappa_min.ln()).exp()
}

fn log_kappa_slope(b: &KappaBounds) -> f64 {
    (b.kappa_max / b.kappa_min).ln()
}

/// Frequency sweep of the frequency-focused schedule: linear from the
/// Nyquist bin at t = 0 down to 1 at t = 1.
pub fn mu_freq(t: f64, nf: f64) -> f64 {
    nf + (1.0 - nf) * t
}

/// Inverse-CDF frequency sweep of the power-focused schedule, treating the
/// fitted spectrum as a density on [1, nf].
pub fn mu_power(t: f64, alpha: f64, nf: f64) -> f64 {
    if (alpha + 1.0).abs() < EPS_POLE {
        // analytic alpha = -1 limit
        nf.powf(1.0 - t)
    } else {
        let a1 = alpha + 1.0;
        (1.0 + (1.0 - t) * (nf.powf(a1) - 1.0)).powf(1.0 / a1)
    }
}

/// Frequency-focused logSNR schedule (closed form).
pub fn lambda_freq(t: f64, fit: &PowerLawFit, b: &KappaBounds) -> f64 {
    let nf = fit.nyquist as f64;
    -kappa_at(t, b).ln() - fit.beta.ln() - fit.alpha * mu_freq(t, nf).ln()
}

/// Power-focused logSNR schedule (closed form, with the alpha = -1 branch).
pub fn lambda_power(t: f64, fit: &PowerLawFit, b: &KappaBounds) -> f64 {
    let nf = fit.nyquist as f64;
    let base = -kappa_at(t, b).ln() - fit.beta.ln();
    if (fit.alpha + 1.0).abs() < EPS_POLE {
        base + (1.0 - t) * nf.ln()
    } else {
        let a1 = fit.alpha + 1.0;
        base - fit.alpha / a1 * (1.0 + (1.0 - t) * (nf.powf(a1) - 1.0)).ln()
    }
}

/// Mixed schedule: arithmetic mean of the frequency- and power-focused ones.
pub fn lambda_mixed(t: f64, fit: &PowerLawFit, b: &KappaBounds) -> f64 {
    0.5 * (lambda_freq(t, fit, b) + lambda_power(t, fit, b))
}

fn lambda_freq_prime(t: f64, fit: &PowerLawFit, b: &KappaBounds) -> f64 {
    let nf = fit.nyquist as f64;
    -log_kappa_slope(b) - fit.alpha * (1.0 - nf) / mu_freq(t, nf)
}

fn lambda_power_prime(t: f64, fit: &PowerLawFit, b: &KappaBounds) -> f64 {
    let nf = fit.nyquist as f64;
    if (fit.alpha + 1.0).abs() < EPS_POLE {
        -log_kappa_slope(b) - nf.ln()
    } else {
        let a1 = fit.alpha + 1.0;
        let a = nf.powf(a1) - 1.0;
        -log_kappa_slope(b) + fit.alpha * a / (a1 * (1.0 + (1.0 - t) * a))
    }
}

/// Cosine baseline: lambda = 2 ln cot(pi t / 2), with t clipped to
/// [T_EPS, 1 - T_EPS] to keep lambda finite.
pub fn lambda_cosine(t: f64) -> f64 {
    let t = t.clamp(T_EPS, 1.0 - T_EPS);
    let half = PI * t / 2.0;
    2.0 * (half.cos() / half.sin()).ln()
}

fn lambda_cosine_prime(t: f64) -> f64 {
    if !(T_EPS..=1.0 - T_EPS).contains(&t) {
        return 0.0;
    }
    -2.0 * PI / (PI * t).sin()
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Variance-preserving realization of a logSNR value:
/// alpha_t = sqrt(sigmoid(lambda)), sigma_t = sqrt(sigmoid(-lambda)).
pub fn alpha_sigma(lambda: f64) -> (f64, f64) {
    (sigmoid(lambda).sqrt(), sigmoid(-lambda).sqrt())
}

/// Schedule kinds exposed on the command line and in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Frequency,
    Power,
    Mixed,
    Cosine,
    CosineMinmax,
    FixedMedian,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(Self::Frequency),
            "power" => Ok(Self::Power),
            "mixed" => Ok(Self::Mixed),
            "cosine" => Ok(Self::Cosine),
            "cosine_minmax" | "cosine-minmax" => Ok(Self::CosineMinmax),
            "fixed_median" | "fixed-median" => Ok(Self::FixedMedian),
            other => Err(Error::InvalidArgument(format!("unknown schedule kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Frequency => "frequency",
            Self::Power => "power",
            Self::Mixed => "mixed",
            Self::Cosine => "cosine",
            Self::CosineMinmax => "cosine_minmax",
            Self::FixedMedian => "fixed_median",
        };
        f.write_str(name)
    }
}

/// A constructed noise schedule. Immutable; all evaluations are pure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Frequency { fit: PowerLawFit, bounds: KappaBounds },
    Power { fit: PowerLawFit, bounds: KappaBounds },
    Mixed { fit: PowerLawFit, bounds: KappaBounds },
    Cosine,
    /// Raised-cosine interpolation in lambda between the mixed schedule's
    /// endpoints for the same fit.
    CosineMinmax { fit: PowerLawFit, bounds: KappaBounds },
    /// Pointwise median of mixed schedules, tabulated on a uniform grid
    /// with linear interpolation.
    FixedMedian { grid: Vec<f64> },
}

impl Schedule {
    pub fn from_kind(kind: ScheduleKind, fit: PowerLawFit, bounds: KappaBounds) -> Result<Self> {
        Ok(match kind {
            ScheduleKind::Frequency => Schedule::Frequency { fit, bounds },
            ScheduleKind::Power => Schedule::Power { fit, bounds },
            ScheduleKind::Mixed => Schedule::Mixed { fit, bounds },
            ScheduleKind::Cosine => Schedule::Cosine,
            ScheduleKind::CosineMinmax => Schedule::CosineMinmax { fit, bounds },
            ScheduleKind::FixedMedian => {
                return Err(Error::InvalidArgument(
                    "fixed_median is built with median_schedule over a fit set".into(),
                ))
            }
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        match self {
            Schedule::Frequency { .. } => ScheduleKind::Frequency,
            Schedule::Power { .. } => ScheduleKind::Power,
            Schedule::Mixed { .. } => ScheduleKind::Mixed,
            Schedule::Cosine => ScheduleKind::Cosine,
            Schedule::CosineMinmax { .. } => ScheduleKind::CosineMinmax,
            Schedule::FixedMedian { .. } => ScheduleKind::FixedMedian,
        }
    }

    /// logSNR at time t.
    pub fn lambda(&self, t: f64) -> f64 {
        match self {
            Schedule::Frequency { fit, bounds } => lambda_freq(t, fit, bounds),
            Schedule::Power { fit, bounds } => lambda_power(t, fit, bounds),
            Schedule::Mixed { fit, bounds } => lambda_mixed(t, fit, bounds),
            Schedule::Cosine => lambda_cosine(t),
            Schedule::CosineMinmax { fit, bounds } => {
                let l0 = lambda_mixed(0.0, fit, bounds);
                let l1 = lambda_mixed(1.0, fit, bounds);
                l1 + (l0 - l1) * (1.0 + (PI * t).cos()) / 2.0
            }
            Schedule::FixedMedian { grid } => {
                let (i, frac) = median_grid_pos(t, grid.len());
                grid[i] + frac * (grid[i + 1] - grid[i])
            }
        }
    }

    /// d lambda / dt, analytic per kind (segment slope for the tabulated
    /// median).
    pub fn lambda_prime(&self, t: f64) -> f64 {
        match self {
            Schedule::Frequency { fit, bounds } => lambda_freq_prime(t, fit, bounds),
            Schedule::Power { fit, bounds } => lambda_power_prime(t, fit, bounds),
            Schedule::Mixed { fit, bounds } => {
                0.5 * (lambda_freq_prime(t, fit, bounds) + lambda_power_prime(t, fit, bounds))
            }
            Schedule::Cosine => lambda_cosine_prime(t),
            Schedule::CosineMinmax { fit, bounds } => {
                let l0 = lambda_mixed(0.0, fit, bounds);
                let l1 = lambda_mixed(1.0, fit, bounds);
                -(l0 - l1) * PI * (PI * t).sin() / 2.0
            }
            Schedule::FixedMedian { grid } => {
                let (i, _) = median_grid_pos(t, grid.len());
                (grid[i + 1] - grid[i]) * (grid.len() - 1) as f64
            }
        }
    }

    /// (lambda(0), lambda(1)).
    pub fn endpoints(&self) -> (f64, f64) {
        (self.lambda(0.0), self.lambda(1.0))
    }

    /// (alpha_t, sigma_t) at time t.
    pub fn alpha_sigma_at(&self, t: f64) -> (f64, f64) {
        alpha_sigma(self.lambda(t))
    }

    /// JSON representation including kind, fit, bounds, and cached
    /// endpoints.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("schedule serializes");
        let (l0, l1) = self.endpoints();
        let obj = v.as_object_mut().expect("tagged enum is an object");
        obj.insert("lambda0".into(), serde_json::json!(l0));
        obj.insert("lambda1".into(), serde_json::json!(l1));
        v
    }
}

fn median_grid_pos(t: f64, len: usize) -> (usize, f64) {
    let u = t.clamp(0.0, 1.0) * (len - 1) as f64;
    let i = (u.floor() as usize).min(len - 2);
    (i, u - i as f64)
}

/// Pointwise median of the mixed schedules of a fit set, tabulated on a
/// uniform 1024-point grid.
pub fn median_schedule(fits: &[PowerLawFit], bounds: &KappaBounds) -> Result<Schedule> {
    if fits.is_empty() {
        return Err(Error::InvalidArgument("median_schedule: empty fit set".into()));
    }
    let n = MEDIAN_GRID_POINTS;
    let mut grid = Vec::with_capacity(n);
    let mut values = vec![0.0; fits.len()];
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        for (v, fit) in values.iter_mut().zip(fits) {
            *v = lambda_mixed(t, fit, bounds);
        }
        grid.push(median_in_place(&mut values));
    }
    Ok(Schedule::FixedMedian { grid })
}

/// Median of a scratch slice (mean of the two central order statistics for
/// even length).
pub fn median_in_place(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One row of a discretized schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub i: usize,
    pub t: f64,
    pub lambda: f64,
    pub alpha_t: f64,
    pub sigma_t: f64,
}

/// Tabulate the schedule at t_i = i / steps for i = 0..=steps.
pub fn discretize(schedule: &Schedule, steps: usize) -> Result<Vec<ScheduleRow>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    Ok((0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            let lambda = schedule.lambda(t);
            let (alpha_t, sigma_t) = alpha_sigma(lambda);
            ScheduleRow { i, t, lambda, alpha_t, sigma_t }
        })
        .collect())
}

pub fn schedule_csv(rows: &[ScheduleRow]) -> String {
    let mut out = String::from("i,t,lambda,alpha_t,sigma_t\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.i, r.t, r.lambda, r.alpha_t, r.sigma_t
        ));
    }
    out
}
