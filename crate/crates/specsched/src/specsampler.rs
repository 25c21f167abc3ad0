//! Conditional spectrum sampler: per-label Gaussian mixtures over the
//! feature pair (log psi(1), log psi(Nf)), plus spectrum manipulation.
//!
//! Fitting uses EM with k-means++ initialization by default (deterministic
//! given a seed); an Adam-based gradient backend on the same negative
//! log-likelihood is available and shares the analytic gradient used in the
//! finite-difference checks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::PowerLawFit;

/// Lower bound on component standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-3;
/// Default number of mixture components.
pub const DEFAULT_COMPONENTS: usize = 3;

/// The 2D feature of a power-law fit: v1 = log psi(1), v2 = log psi(Nf).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFeature {
    pub v1: f64,
    pub v2: f64,
}

/// v1 = log beta, v2 = log beta + alpha * log Nf.
pub fn feature_from_fit(fit: &PowerLawFit) -> SpectrumFeature {
    let log_beta = fit.beta.ln();
    SpectrumFeature {
        v1: log_beta,
        v2: log_beta + fit.alpha * (fit.nyquist as f64).ln(),
    }
}

/// Exact inverse of [`feature_from_fit`]: beta = exp(v1),
/// alpha = (v2 - v1) / log Nf.
pub fn fit_from_feature(v: &SpectrumFeature, nyquist: usize) -> Result<PowerLawFit> {
    if nyquist < 2 {
        return Err(Error::InvalidArgument("nyquist must be >= 2".into()));
    }
    PowerLawFit::new((v.v2 - v.v1) / (nyquist as f64).ln(), v.v1.exp(), nyquist)
}

/// Shift the exponent so the power at the Nyquist bin scales by `factor`
/// while the power at k = 1 stays fixed.
pub fn manipulate_spectrum(fit: &PowerLawFit, factor: f64) -> Result<PowerLawFit> {
    if !(factor > 0.0) {
        return Err(Error::InvalidArgument(format!("factor must be positive, got {factor}")));
    }
    PowerLawFit::new(
        fit.alpha + factor.ln() / (fit.nyquist as f64).ln(),
        fit.beta,
        fit.nyquist,
    )
}

/// One diagonal-Gaussian mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub stddev: [f64; 2],
}

/// A mixture for one condition label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub components: Vec<GmmComponent>,
}

impl Gmm {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        for c in &self.components {
            if c.stddev[0] < SIGMA_FLOOR || c.stddev[1] < SIGMA_FLOOR {
                return Err(Error::InvalidArgument("stddev below floor".into()));
            }
        }
        Ok(())
    }
}

/// Per-label mixtures, one sampler per resolution (nyquist).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub nyquist: usize,
    pub models: BTreeMap<String, Gmm>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn component_log_density(c: &GmmComponent, v: &SpectrumFeature) -> f64 {
    let z1 = (v.v1 - c.mean[0]) / c.stddev[0];
    let z2 = (v.v2 - c.mean[1]) / c.stddev[1];
    -(2.0 * PI).ln() - c.stddev[0].ln() - c.stddev[1].ln() - 0.5 * (z1 * z1 + z2 * z2)
}

/// Negative log-likelihood of a feature under the mixture, computed in log
/// space (log-sum-exp).
pub fn gmm_nll(gmm: &Gmm, v: &SpectrumFeature) -> f64 {
    let logs: Vec<f64> = gmm
        .components
        .iter()
        .map(|c| c.weight.ln() + component_log_density(c, v))
        .collect();
    -log_sum_exp(&logs)
}

/// Mean NLL over a point set.
pub fn gmm_mean_nll(gmm: &Gmm, points: &[SpectrumFeature]) -> f64 {
    points.iter().map(|v| gmm_nll(gmm, v)).sum::<f64>() / points.len() as f64
}

/// Configuration for mixture fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmFitConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        GmmFitConfig { max_iters: 200, tol: 1e-10 }
    }
}

/// Result of fitting: parameters plus the per-label NLL trace (monotone
/// non-increasing for the EM backend).
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub params: GmmParams,
    pub nll_traces: BTreeMap<String, Vec<f64>>,
}

fn kmeans_pp_init(points: &[SpectrumFeature], c: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(c);
    let first = &points[rng.random_range(0..points.len())];
    centers.push([first.v1, first.v2]);
    let dist2 = |p: &SpectrumFeature, c: &[f64; 2]| {
        let d1 = p.v1 - c[0];
        let d2 = p.v2 - c[1];
        d1 * d1 + d2 * d2
    };
    while centers.len() < c {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = 0;
            for (i, &w) in d.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centers.push([points[pick].v1, points[pick].v2]);
    }
    centers
}

fn initial_gmm(points: &[SpectrumFeature], c: usize, rng: &mut impl Rng) -> Gmm {
    let centers = kmeans_pp_init(points, c, rng);
    // global spread as the starting stddev
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p.v1).sum::<f64>() / n,
        points.iter().map(|p| p.v2).sum::<f64>() / n,
    ];
    let var = [
        points.iter().map(|p| (p.v1 - mean[0]).powi(2)).sum::<f64>() / n,
        points.iter().map(|p| (p.v2 - mean[1]).powi(2)).sum::<f64>() / n,
    ];
    let stddev = [
        var[0].sqrt().max(SIGMA_FLOOR),
        var[1].sqrt().max(SIGMA_FLOOR),
    ];
    Gmm {
        components: centers
            .into_iter()
            .map(|mean| GmmComponent { weight: 1.0 / c as f64, mean, stddev })
            .collect(),
    }
}

fn em_fit_one(
    points: &[SpectrumFeature],
    c: usize,
    config: &GmmFitConfig,
    rng: &mut impl Rng,
) -> (Gmm, Vec<f64>) {
    let mut gmm = initial_gmm(points, c, rng);
    let mut trace = vec![gmm_mean_nll(&gmm, points)];
    let n = points.len();
    let mut resp = vec![0.0; n * c];
    for _ in 0..config.max_iters {
        // E step
        for (i, p) in points.iter().enumerate() {
            let logs: Vec<f64> = gmm
                .components
                .iter()
                .map(|comp| comp.weight.ln() + component_log_density(comp, p))
                .collect();
            let lse = log_sum_exp(&logs);
            for (j, l) in logs.iter().enumerate() {
                resp[i * c + j] = (l - lse).exp();
            }
        }
        // M step
        for j in 0..c {
            let nj: f64 = (0..n).map(|i| resp[i * c + j]).sum();
            if nj <= 0.0 {
                continue;
            }
            let m1 = (0..n).map(|i| resp[i * c + j] * points[i].v1).sum::<f64>() / nj;
            let m2 = (0..n).map(|i| resp[i * c + j] * points[i].v2).sum::<f64>() / nj;
            let v1 = (0..n).map(|i| resp[i * c + j] * (points[i].v1 - m1).powi(2)).sum::<f64>() / nj;
            let v2 = (0..n).map(|i| resp[i * c + j] * (points[i].v2 - m2).powi(2)).sum::<f64>() / nj;
            gmm.components[j] = GmmComponent {
                weight: nj / n as f64,
                mean: [m1, m2],
                stddev: [v1.sqrt().max(SIGMA_FLOOR), v2.sqrt().max(SIGMA_FLOOR)],
            };
        }
        let nll = gmm_mean_nll(&gmm, points);
        let prev = *trace.last().unwrap();
        trace.push(nll);
        if (prev - nll).abs() < config.tol {
            break;
        }
    }
    (gmm, trace)
}

/// Fit one mixture per label by EM with k-means++ initialization.
pub fn fit_gmm(
    features: &[(String, SpectrumFeature)],
    nyquist: usize,
    c: usize,
    config: &GmmFitConfig,
    rng: &mut impl Rng,
) -> Result<GmmFit> {
    if c == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    let mut by_label: BTreeMap<String, Vec<SpectrumFeature>> = BTreeMap::new();
    for (label, v) in features {
        by_label.entry(label.clone()).or_default().push(*v);
    }
    if by_label.is_empty() {
        return Err(Error::InvalidArgument("no features".into()));
    }
    let mut models = BTreeMap::new();
    let mut nll_traces = BTreeMap::new();
    for (label, points) in by_label {
        if points.len() < c {
            return Err(Error::InvalidArgument(format!(
                "label '{label}' has {} points, fewer than {c} components",
                points.len()
            )));
        }
        let (gmm, trace) = em_fit_one(&points, c, config, rng);
        models.insert(label.clone(), gmm);
        nll_traces.insert(label, trace);
    }
    Ok(GmmFit { params: GmmParams { nyquist, models }, nll_traces })
}

/// Sample a spectrum for a label: categorical component draw, then a
/// diagonal-Gaussian feature draw, then the exact feature-to-fit inverse.
pub fn sample_spectrum(
    params: &GmmParams,
    label: &str,
    rng: &mut impl Rng,
) -> Result<PowerLawFit> {
    let gmm = params
        .models
        .get(label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let mut pick = rng.random::<f64>();
    let mut comp = &gmm.components[gmm.components.len() - 1];
    for c in &gmm.components {
        pick -= c.weight;
        if pick <= 0.0 {
            comp = c;
            break;
        }
    }
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let v = SpectrumFeature {
        v1: comp.mean[0] + comp.stddev[0] * z1,
        v2: comp.mean[1] + comp.stddev[1] * z2,
    };
    fit_from_feature(&v, params.nyquist)
}

// ---------------------------------------------------------------------------
// Gradient backend: NLL and its analytic gradient in an unconstrained
// parametrization (weight logits, means, log-stddevs), 5 numbers/component.

/// Pack a mixture into the unconstrained vector
/// [logit_c, mu1_c, mu2_c, log_sigma1_c, log_sigma2_c] per component.
pub fn pack_params(gmm: &Gmm) -> Vec<f64> {
    let mut out = Vec::with_capacity(gmm.components.len() * 5);
    for c in &gmm.components {
        out.push(c.weight.ln());
        out.push(c.mean[0]);
        out.push(c.mean[1]);
        out.push(c.stddev[0].ln());
        out.push(c.stddev[1].ln());
    }
    out
}

/// Inverse of [`pack_params`]; weights via softmax, stddevs floored.
pub fn unpack_params(theta: &[f64]) -> Gmm {
    assert!(theta.len() % 5 == 0 && !theta.is_empty());
    let c = theta.len() / 5;
    let logits: Vec<f64> = (0..c).map(|j| theta[5 * j]).collect();
    let lse = log_sum_exp(&logits);
    Gmm {
        components: (0..c)
            .map(|j| GmmComponent {
                weight: (logits[j] - lse).exp(),
                mean: [theta[5 * j + 1], theta[5 * j + 2]],
                stddev: [
                    theta[5 * j + 3].exp().max(SIGMA_FLOOR),
                    theta[5 * j + 4].exp().max(SIGMA_FLOOR),
                ],
            })
            .collect(),
    }
}

/// Mean NLL over `points` and its gradient with respect to the packed
/// unconstrained parameters.
pub fn gmm_nll_grad(theta: &[f64], points: &[SpectrumFeature]) -> (f64, Vec<f64>) {
    let c = theta.len() / 5;
    let gmm = unpack_params(theta);
    let n = points.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut total = 0.0;
    for p in points {
        let logs: Vec<f64> = gmm
            .components
            .iter()
            .map(|comp| comp.weight.ln() + component_log_density(comp, p))
            .collect();
        let lse = log_sum_exp(&logs);
        total -= lse;
        for j in 0..c {
            let r = (logs[j] - lse).exp(); // responsibility
            let comp = &gmm.components[j];
            // d(-lse)/dlogit_j = w_j - r_j (softmax through the weight term)
            grad[5 * j] += (comp.weight - r) / n;
            let z1 = (p.v1 - comp.mean[0]) / comp.stddev[0];
            let z2 = (p.v2 - comp.mean[1]) / comp.stddev[1];
            grad[5 * j + 1] += -r * z1 / comp.stddev[0] / n;
            grad[5 * j + 2] += -r * z2 / comp.stddev[1] / n;
            grad[5 * j + 3] += -r * (z1 * z1 - 1.0) / n;
            grad[5 * j + 4] += -r * (z2 * z2 - 1.0) / n;
        }
    }
    (total / n, grad)
}

/// Fit one mixture by Adam on the NLL (the stochastic-gradient backend).
pub fn fit_gmm_gradient(
    points: &[SpectrumFeature],
    c: usize,
    steps: usize,
    lr: f64,
    rng: &mut impl Rng,
) -> (Gmm, Vec<f64>) {
    let init = initial_gmm(points, c, rng);
    let mut theta = pack_params(&init);
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(gmm_mean_nll(&init, points));
    for step in 1..=steps {
        let (nll, grad) = gmm_nll_grad(&theta, points);
        trace.push(nll);
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = m[i] / (1.0 - b1.powi(step as i32));
            let vh = v[i] / (1.0 - b2.powi(step as i32));
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    (unpack_params(&theta), trace)
}
