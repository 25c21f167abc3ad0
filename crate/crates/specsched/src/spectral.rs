//! Fourier power spectra, radial averaging, power-law fits, and the
//! predicted spectrum of noised signals.
//!
//! The DFT uses the unitary-per-sample normalization 1/N^(d/2) with d = 2,
//! so i.i.d. unit-variance noise has expected power 1 in every bin and the
//! radially-averaged spectrum of white noise is 1 everywhere.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::ImageTensor;

/// Minimal negative slope enforced on power-law fits so the fitted spectrum
/// is always strictly decreasing.
pub const EPS_MONO: f64 = 1e-3;

/// Radially-averaged power spectral density: power per scalar frequency
/// k = 0..nyquist, with the number of grid cells contributing to each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub nyquist: usize,
    pub power: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SpectrumCurve {
    /// Tabulate an analytic spectrum on the bins of a given image side.
    pub fn from_fn(side: usize, f: impl Fn(usize) -> f64) -> Self {
        let nyquist = side / 2;
        let mut counts = vec![0usize; nyquist + 1];
        for_each_bin(side, |_idx, k| {
            if k <= nyquist {
                counts[k] += 1;
            }
        });
        SpectrumCurve {
            nyquist,
            power: (0..=nyquist).map(f).collect(),
            counts,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,power,count\n");
        for k in 0..=self.nyquist {
            out.push_str(&format!("{},{:.17e},{}\n", k, self.power[k], self.counts[k]));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("spectrum csv", "empty file"))?;
        if header.trim() != "k,power,count" {
            return Err(Error::parse("spectrum csv", "expected header 'k,power,count'"));
        }
        let mut power = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse("spectrum csv", format!("row {}: expected 3 fields", n + 2)));
            }
            let k: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse("spectrum csv", format!("row {}: bad k", n + 2)))?;
            if k != power.len() {
                return Err(Error::parse("spectrum csv", format!("row {}: non-contiguous k", n + 2)));
            }
            power.push(
                fields[1]
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse("spectrum csv", format!("row {}: bad power", n + 2)))?,
            );
            counts.push(
                fields[2]
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse("spectrum csv", format!("row {}: bad count", n + 2)))?,
            );
        }
        if power.len() < 2 {
            return Err(Error::parse("spectrum csv", "needs at least bins 0 and 1"));
        }
        Ok(SpectrumCurve {
            nyquist: power.len() - 1,
            power,
            counts,
        })
    }
}

/// Two-parameter power-law model of a spectrum: psi(k) = beta * k^alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub beta: f64,
    pub nyquist: usize,
}

impl PowerLawFit {
    pub fn new(alpha: f64, beta: f64, nyquist: usize) -> Result<Self> {
        if !(beta > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid power law (alpha={alpha}, beta={beta})"
            )));
        }
        Ok(PowerLawFit { alpha, beta, nyquist })
    }

    /// Evaluate psi(k) = beta * k^alpha; defined for any k >= 1, also used
    /// beyond the Nyquist bin for grid corners.
    pub fn eval(&self, k: f64) -> f64 {
        self.beta * k.powf(self.alpha)
    }

    /// Tabulate onto the radial bins of an image of the matching side.
    pub fn to_curve(&self) -> SpectrumCurve {
        let fit = *self;
        SpectrumCurve::from_fn(self.nyquist * 2, move |k| {
            if k == 0 {
                0.0
            } else {
                fit.eval(k as f64)
            }
        })
    }
}

/// Signed frequency of a grid index, in [-N/2, N/2).
#[inline]
pub fn signed_freq(index: usize, side: usize) -> i64 {
    if index < side.div_ceil(2) {
        index as i64
    } else {
        index as i64 - side as i64
    }
}

/// Radial bin of grid cell (i, j): round-half-to-even of the frequency norm.
/// May exceed the Nyquist frequency at grid corners.
#[inline]
pub fn radial_bin(side: usize, i: usize, j: usize) -> usize {
    let fi = signed_freq(i, side) as f64;
    let fj = signed_freq(j, side) as f64;
    (fi * fi + fj * fj).sqrt().round_ties_even() as usize
}

fn for_each_bin(side: usize, mut f: impl FnMut(usize, usize)) {
    for i in 0..side {
        for j in 0..side {
            f(i * side + j, radial_bin(side, i, j));
        }
    }
}

fn fft2_inner(grid: &mut [Complex64], side: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(side)
    } else {
        planner.plan_fft_forward(side)
    };
    // rows
    for row in grid.chunks_exact_mut(side) {
        fft.process(row);
    }
    // columns, via transpose
    let mut col = vec![Complex64::default(); side];
    for j in 0..side {
        for i in 0..side {
            col[i] = grid[i * side + j];
        }
        fft.process(&mut col);
        for i in 0..side {
            grid[i * side + j] = col[i];
        }
    }
    let scale = 1.0 / side as f64;
    for v in grid.iter_mut() {
        *v *= scale;
    }
}

/// Unitary 2D DFT of one channel. Output is row-major over grid indices;
/// index (i, j) carries the signed frequency ([`signed_freq`]) pair.
pub fn dft2(img: &ImageTensor, channel: usize) -> Vec<Complex64> {
    assert!(channel < img.channels(), "channel out of range");
    let side = img.side();
    let mut grid: Vec<Complex64> = img
        .channel_plane(channel)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    fft2_inner(&mut grid, side, false);
    grid
}

/// Inverse of [`dft2`]; returns the real part (imaginary residue is
/// floating-point noise for Hermitian input).
pub fn idft2_real(grid: &[Complex64], side: usize) -> Vec<f64> {
    assert_eq!(grid.len(), side * side);
    let mut g = grid.to_vec();
    fft2_inner(&mut g, side, true);
    g.into_iter().map(|v| v.re).collect()
}

/// Radially-averaged power spectral density of an image; RGB channels are
/// averaged. Bins beyond the Nyquist frequency (grid corners) are discarded.
pub fn rapsd(img: &ImageTensor) -> SpectrumCurve {
    let side = img.side();
    let nyquist = side / 2;
    let mut power = vec![0.0; nyquist + 1];
    let mut counts = vec![0usize; nyquist + 1];
    for c in 0..img.channels() {
        let grid = dft2(img, c);
        let mut acc = vec![0.0; nyquist + 1];
        for_each_bin(side, |idx, k| {
            if k <= nyquist {
                acc[k] += grid[idx].norm_sqr();
                if c == 0 {
                    counts[k] += 1;
                }
            }
        });
        for k in 0..=nyquist {
            power[k] += acc[k];
        }
    }
    let channel_norm = 1.0 / img.channels() as f64;
    for k in 0..=nyquist {
        power[k] *= channel_norm / counts[k] as f64;
    }
    SpectrumCurve { nyquist, power, counts }
}

/// Unweighted least squares of log power against log k over bins
/// 1..=nyquist; the slope is clamped to at most -[`EPS_MONO`].
pub fn fit_power_law(curve: &SpectrumCurve) -> Result<PowerLawFit> {
    let mut xs = Vec::with_capacity(curve.nyquist);
    let mut ys = Vec::with_capacity(curve.nyquist);
    for k in 1..=curve.nyquist {
        let p = curve.power[k];
        if p > 0.0 {
            xs.push((k as f64).ln());
            ys.push(p.ln());
        } else {
            log::warn!("fit_power_law: excluding zero-power bin k={k}");
        }
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateSpectrum(format!(
            "only {} positive bins (need at least 2)",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let mut alpha = sxy / sxx;
    if alpha > -EPS_MONO {
        alpha = -EPS_MONO;
    }
    let beta = (my - alpha * mx).exp();
    PowerLawFit::new(alpha, beta, curve.nyquist)
}

/// Spectrum of the noised signal scale*x + noise*eps:
/// scale^2 * psi(k) + noise^2 per bin.
pub fn predicted_noised_rapsd(curve: &SpectrumCurve, scale: f64, noise: f64) -> SpectrumCurve {
    assert!(scale >= 0.0 && noise >= 0.0);
    SpectrumCurve {
        nyquist: curve.nyquist,
        power: curve
            .power
            .iter()
            .map(|&p| scale * scale * p + noise * noise)
            .collect(),
        counts: curve.counts.clone(),
    }
}

/// A spectrum usable at any radial bin, including grid corners.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SpectrumModel {
    PowerLaw(PowerLawFit),
    Curve(SpectrumCurve),
}

impl SpectrumModel {
    /// Signal power at integer radial bin k; 0 at DC. Curve-backed spectra
    /// clamp corner bins to the Nyquist value.
    pub fn power_at(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            SpectrumModel::PowerLaw(fit) => fit.eval(k as f64),
            SpectrumModel::Curve(c) => c.power[k.min(c.nyquist)],
        }
    }
}

/// Draw a zero-mean stationary Gaussian field with per-bin power given by
/// the spectrum model (exact ground truth: white noise is shaped per bin in
/// the frequency domain, which preserves Hermitian symmetry).
pub fn gaussian_field(spectrum: &SpectrumModel, side: usize, rng: &mut impl Rng) -> ImageTensor {
    let mut white: Vec<Complex64> = (0..side * side)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    fft2_inner(&mut white, side, false);
    for i in 0..side {
        for j in 0..side {
            let k = radial_bin(side, i, j);
            white[i * side + j] *= spectrum.power_at(k).sqrt();
        }
    }
    let plane = idft2_real(&white, side);
    ImageTensor::from_planes(side, &[plane]).expect("square plane")
}

/// White Gaussian noise tensor, unit variance per element.
pub fn white_noise(side: usize, channels: usize, rng: &mut impl Rng) -> ImageTensor {
    let data = (0..side * side * channels)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    ImageTensor::new(side, side, channels, data).expect("valid shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn constant_image(side: usize, c: f64) -> ImageTensor {
        ImageTensor::new(side, side, 1, vec![c; side * side]).unwrap()
    }

    /// Direct O(N^4) evaluation of the transform definition.
    fn dft2_brute(img: &ImageTensor, channel: usize) -> Vec<Complex64> {
        let side = img.side();
        let plane = img.channel_plane(channel);
        let mut out = vec![Complex64::default(); side * side];
        for u0 in 0..side {
            for u1 in 0..side {
                let mut acc = Complex64::default();
                for n0 in 0..side {
                    for n1 in 0..side {
                        let phase = -2.0 * PI * (u0 * n0 + u1 * n1) as f64 / side as f64;
                        acc += plane[n0 * side + n1] * Complex64::new(phase.cos(), phase.sin());
                    }
                }
                out[u0 * side + u1] = acc / side as f64;
            }
        }
        out
    }

    #[test]
    fn dft2_constant_is_dc_only() {
        let img = constant_image(4, 0.7);
        let grid = dft2(&img, 0);
        assert_abs_diff_eq!(grid[0].re, 4.0 * 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(grid[0].im, 0.0, epsilon = 1e-12);
        for v in &grid[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn dft2_impulse_is_flat() {
        let mut img = constant_image(4, 0.0);
        img.data_mut()[0] = 0.9;
        let grid = dft2(&img, 0);
        for v in &grid {
            assert_abs_diff_eq!(v.re, 0.9 / 4.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dft2_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = white_noise(8, 1, &mut rng);
        let fast = dft2(&img, 0);
        let slow = dft2_brute(&img, 0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = white_noise(16, 1, &mut rng);
        let spatial: f64 = img.data().iter().map(|v| v * v).sum();
        let freq: f64 = dft2(&img, 0).iter().map(|v| v.norm_sqr()).sum();
        assert!((spatial - freq).abs() / spatial < 1e-8);
    }

    #[test]
    fn rapsd_constant_image_zero_beyond_dc() {
        let curve = rapsd(&constant_image(8, 0.3));
        assert_eq!(curve.nyquist, 4);
        for k in 1..=curve.nyquist {
            assert!(curve.power[k].abs() < 1e-14);
        }
    }

    #[test]
    fn rapsd_white_noise_is_one() {
        // average over draws; each bin within 5 standard errors of 1
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let side = 64;
        let draws = 256;
        let nyquist = side / 2;
        let mut sum = vec![0.0; nyquist + 1];
        let mut sumsq = vec![0.0; nyquist + 1];
        for _ in 0..draws {
            let c = rapsd(&white_noise(side, 1, &mut rng));
            for k in 1..=nyquist {
                sum[k] += c.power[k];
                sumsq[k] += c.power[k] * c.power[k];
            }
        }
        for k in 1..=nyquist {
            let mean = sum[k] / draws as f64;
            let var = (sumsq[k] / draws as f64 - mean * mean).max(0.0);
            let se = (var / draws as f64).sqrt().max(1e-12);
            assert!(
                (mean - 1.0).abs() <= 5.0 * se,
                "bin {k}: mean {mean}, se {se}"
            );
        }
    }

    #[test]
    fn rapsd_impulse_is_flat() {
        let side = 64;
        let c = 0.8;
        let mut img = constant_image(side, 0.0);
        img.data_mut()[0] = c;
        let curve = rapsd(&img);
        let expected = c * c / (side * side) as f64;
        for k in 0..=curve.nyquist {
            assert_abs_diff_eq!(curve.power[k], expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn rapsd_invariant_under_rotation() {
        // a radially symmetric field rotated 90 degrees has identical bins
        let side = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fit = PowerLawFit::new(-2.0, 10.0, side / 2).unwrap();
        let img = gaussian_field(&SpectrumModel::PowerLaw(fit), side, &mut rng);
        let mut rot = vec![0.0; side * side];
        for i in 0..side {
            for j in 0..side {
                rot[j * side + (side - 1 - i)] = img.get(i, j, 0);
            }
        }
        let rot = ImageTensor::new(side, side, 1, rot).unwrap();
        let a = rapsd(&img);
        let b = rapsd(&rot);
        for k in 0..=a.nyquist {
            assert!((a.power[k] - b.power[k]).abs() <= 1e-12 * a.power[k].max(1.0));
        }
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let curve = SpectrumCurve::from_fn(64, |k| if k == 0 { 0.0 } else { 5.0 * (k as f64).powi(-2) });
        let fit = fit_power_law(&curve).unwrap();
        assert_abs_diff_eq!(fit.alpha, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.beta, 5.0, epsilon = 1e-10);
    }

    #[test]
    fn fit_clamps_flat_spectrum() {
        let curve = SpectrumCurve::from_fn(64, |k| if k == 0 { 0.0 } else { 1.0 });
        let fit = fit_power_law(&curve).unwrap();
        assert_eq!(fit.alpha, -EPS_MONO);
        assert!((fit.beta - 1.0).abs() < 0.01);
    }

    #[test]
    fn fit_matches_normal_equations_oracle() {
        // closed-form 2-parameter least squares on a noisy synthetic curve
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nyquist = 32;
        let curve = SpectrumCurve {
            nyquist,
            power: (0..=nyquist)
                .map(|k| {
                    if k == 0 {
                        0.0
                    } else {
                        7.0 * (k as f64).powf(-1.7) * (1.0 + 0.2 * rng.random::<f64>())
                    }
                })
                .collect(),
            counts: vec![1; nyquist + 1],
        };
        let fit = fit_power_law(&curve).unwrap();
        // normal equations for y = a*x + b
        let (mut s1, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 1..=nyquist {
            let x = (k as f64).ln();
            let y = curve.power[k].ln();
            s1 += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let det = s1 * sxx - sx * sx;
        let a = (s1 * sxy - sx * sy) / det;
        let b = (sxx * sy - sx * sxy) / det;
        assert_abs_diff_eq!(fit.alpha, a, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.beta.ln(), b, epsilon = 1e-9);
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let curve = SpectrumCurve::from_fn(64, |k| {
            if k == 0 { 0.0 } else { 3.0 * (k as f64).powf(-1.3) }
        });
        let scaled = SpectrumCurve {
            nyquist: curve.nyquist,
            power: curve.power.iter().map(|p| p * 42.0).collect(),
            counts: curve.counts.clone(),
        };
        let f1 = fit_power_law(&curve).unwrap();
        let f2 = fit_power_law(&scaled).unwrap();
        assert_abs_diff_eq!(f1.alpha, f2.alpha, epsilon = 1e-12);
        assert_abs_diff_eq!(f2.beta / f1.beta, 42.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_spectrum() {
        let curve = SpectrumCurve::from_fn(8, |_| 0.0);
        assert!(matches!(
            fit_power_law(&curve),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn predicted_noised_identity_and_white_limits() {
        let curve = SpectrumCurve::from_fn(32, |k| if k == 0 { 0.0 } else { 9.0 / k as f64 });
        let same = predicted_noised_rapsd(&curve, 1.0, 0.0);
        assert_eq!(same, curve);
        let white = predicted_noised_rapsd(&curve, 0.0, 1.0);
        assert!(white.power.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn predicted_noised_matches_monte_carlo() {
        // Monte-Carlo check of scale^2*psi + noise^2 on a power-law field
        let side = 32;
        let (aq, sq) = (0.8, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let fit = PowerLawFit::new(-2.0, 50.0, side / 2).unwrap();
        let model = SpectrumModel::PowerLaw(fit);
        let x0 = gaussian_field(&model, side, &mut rng);
        let base = rapsd(&x0);
        let predicted = predicted_noised_rapsd(&base, aq, sq);
        let draws = 512;
        let nyq = side / 2;
        let mut sum = vec![0.0; nyq + 1];
        let mut sumsq = vec![0.0; nyq + 1];
        for _ in 0..draws {
            let eps = white_noise(side, 1, &mut rng);
            let noised: Vec<f64> = x0
                .data()
                .iter()
                .zip(eps.data())
                .map(|(x, e)| aq * x + sq * e)
                .collect();
            let z = ImageTensor::new(side, side, 1, noised).unwrap();
            let c = rapsd(&z);
            for k in 1..=nyq {
                sum[k] += c.power[k];
                sumsq[k] += c.power[k] * c.power[k];
            }
        }
        for k in 1..=nyq {
            let mean = sum[k] / draws as f64;
            let var = (sumsq[k] / draws as f64 - mean * mean).max(0.0);
            let se = (var / draws as f64).sqrt().max(1e-12);
            assert!(
                (mean - predicted.power[k]).abs() <= 3.0 * se,
                "bin {k}: mean {mean} vs predicted {}",
                predicted.power[k]
            );
        }
    }

    #[test]
    fn gaussian_field_has_target_spectrum() {
        let side = 32;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let fit = PowerLawFit::new(-2.0, 100.0, side / 2).unwrap();
        let model = SpectrumModel::PowerLaw(fit);
        let draws = 256;
        let nyq = side / 2;
        let mut sum = vec![0.0; nyq + 1];
        for _ in 0..draws {
            let f = gaussian_field(&model, side, &mut rng);
            let c = rapsd(&f);
            for k in 1..=nyq {
                sum[k] += c.power[k];
            }
        }
        for k in 1..=nyq {
            let mean = sum[k] / draws as f64;
            let target = model.power_at(k);
            assert!(
                (mean / target - 1.0).abs() < 0.2,
                "bin {k}: {mean} vs {target}"
            );
        }
    }

    #[test]
    fn spectrum_csv_round_trip() {
        let curve = SpectrumCurve::from_fn(16, |k| if k == 0 { 0.0 } else { 2.5 / (k * k) as f64 });
        let parsed = SpectrumCurve::from_csv(&curve.to_csv()).unwrap();
        assert_eq!(parsed, curve);
    }
}
