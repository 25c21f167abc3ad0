//! Measure the radially-averaged power spectral density of an image and
//! fit the two-parameter power law that drives every schedule.
//!
//! Run with: cargo run --example rapsd_and_fit

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specsched::spectral::{fit_power_law, gaussian_field, rapsd, PowerLawFit, SpectrumModel};

fn main() {
    let side = 64;
    let true_fit = PowerLawFit::new(-2.0, 100.0, side / 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let image = gaussian_field(&SpectrumModel::PowerLaw(true_fit), side, &mut rng);

    let curve = rapsd(&image);
    println!("  k   measured power   true power");
    for k in [1, 2, 4, 8, 16, 32] {
        println!(
            "{k:3}   {:14.4}   {:10.4}",
            curve.power[k],
            true_fit.eval(k as f64)
        );
    }

    let fit = fit_power_law(&curve).unwrap();
    println!();
    println!("fitted alpha = {:8.4}   (true {:.1})", fit.alpha, true_fit.alpha);
    println!("fitted beta  = {:8.4}   (true {:.1})", fit.beta, true_fit.beta);
}
