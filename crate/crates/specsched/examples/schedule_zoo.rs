//! Build every schedule kind for one image spectrum and print the logSNR
//! curves side by side. The frequency/power/mixed kinds adapt to the
//! spectrum; cosine is the fixed baseline.
//!
//! Run with: cargo run --example schedule_zoo

use specsched::schedule::{KappaBounds, Schedule, ScheduleKind};
use specsched::spectral::PowerLawFit;

fn main() {
    let fit = PowerLawFit::new(-2.0, 100.0, 32).unwrap();
    let bounds = KappaBounds::default();
    let kinds = [
        ScheduleKind::Frequency,
        ScheduleKind::Power,
        ScheduleKind::Mixed,
        ScheduleKind::CosineMinmax,
        ScheduleKind::Cosine,
    ];
    let schedules: Vec<Schedule> = kinds
        .iter()
        .map(|&k| Schedule::from_kind(k, fit, bounds.clone()).unwrap())
        .collect();

    print!("   t ");
    for k in &kinds {
        print!("{:>14}", k.to_string());
    }
    println!();
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        print!("{t:4.1} ");
        for s in &schedules {
            print!("{:14.3}", s.lambda(t));
        }
        println!();
    }

    println!();
    for s in &schedules[..3] {
        let (l0, l1) = s.endpoints();
        println!(
            "{:>12}: lambda(0) = {l0:7.3}, lambda(1) = {l1:7.3}",
            s.kind().to_string()
        );
    }
    println!("(adaptive endpoints are -ln(kappa) - ln(power) at the preserved/destroyed frequency)");
}
