//! Show how the median mixed schedule shifts with image resolution: the
//! same scenes rendered at larger sides need more noise (lower logSNR) to
//! be destroyed on the same t grid.
//!
//! Run with: cargo run --release --example resolution_trend

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specsched::harness::resolution_trend;
use specsched::schedule::KappaBounds;
use specsched::spectral::{gaussian_field, PowerLawFit, SpectrumModel};
use specsched::tensorio::ImageTensor;

fn main() {
    let model = SpectrumModel::PowerLaw(PowerLawFit::new(-2.0, 200.0, 64).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scenes: Vec<ImageTensor> = (0..16).map(|_| gaussian_field(&model, 128, &mut rng)).collect();

    let curves = resolution_trend(&scenes, &[32, 64, 128], &KappaBounds::default()).unwrap();

    print!("   t ");
    for c in &curves {
        print!("   side {:4}", c.side);
    }
    println!();
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        print!("{t:4.1} ");
        for c in &curves {
            print!("{:11.3}", c.lambda(t));
        }
        println!();
    }
    println!();
    println!("median lambda(0.5) falls as the side doubles: high-resolution images carry");
    println!("more total spectral power, so the same t needs a lower logSNR to corrupt it.");
}
