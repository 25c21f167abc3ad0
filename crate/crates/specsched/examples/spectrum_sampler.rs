//! Fit a per-label Gaussian mixture over spectrum parameters, draw new
//! spectra from it, and manipulate a spectrum's high-frequency content.
//!
//! Run with: cargo run --example spectrum_sampler

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specsched::spectral::PowerLawFit;
use specsched::specsampler::{
    feature_from_fit, fit_gmm, manipulate_spectrum, sample_spectrum, GmmFitConfig,
};

fn main() {
    let nyquist = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // two labels with distinct spectral statistics
    let mut features = Vec::new();
    for i in 0..64 {
        let jitter = (i % 8) as f64 * 0.01;
        let smooth = PowerLawFit::new(-2.4 + jitter, 120.0 + i as f64, nyquist).unwrap();
        let rough = PowerLawFit::new(-1.2 + jitter, 15.0 + i as f64, nyquist).unwrap();
        features.push(("landscape".to_string(), feature_from_fit(&smooth)));
        features.push(("texture".to_string(), feature_from_fit(&rough)));
    }
    let fitted = fit_gmm(&features, nyquist, 2, &GmmFitConfig::default(), &mut rng).unwrap();

    for label in ["landscape", "texture"] {
        println!("{label}: draws from the fitted mixture");
        for _ in 0..3 {
            let fit = sample_spectrum(&fitted.params, label, &mut rng).unwrap();
            println!("  alpha = {:7.3}, beta = {:9.3}", fit.alpha, fit.beta);
        }
    }

    println!();
    let base = sample_spectrum(&fitted.params, "landscape", &mut rng).unwrap();
    println!("high-frequency manipulation of one draw (power at k=1 stays fixed):");
    for factor in [0.1, 1.0, 10.0] {
        let m = manipulate_spectrum(&base, factor).unwrap();
        println!(
            "  factor {factor:5.1}: alpha {:7.3} -> {:7.3}, power@Nyquist x{:.3}",
            base.alpha,
            m.alpha,
            m.eval(nyquist as f64) / base.eval(nyquist as f64)
        );
    }
}
