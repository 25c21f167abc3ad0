//! Per-instance diffusion noise schedules derived from image spectra.
//!
//! The pipeline: measure an image's radially-averaged power spectral
//! density ([`spectral::rapsd`]), fit a two-parameter power law
//! ([`spectral::fit_power_law`]), and turn the fit into a logSNR noise
//! schedule in closed form ([`schedule::Schedule`]). The schedule keeps the
//! per-frequency signal-to-noise ratio inside chosen bounds along the whole
//! diffusion, instead of letting a one-size-fits-all schedule destroy
//! low-resolution signal too early or high-resolution signal too late.
//!
//! Supporting pieces: a diagonal Gaussian mixture over the two spectrum
//! parameters for sampling schedules of unseen images
//! ([`specsampler`]), forward noising / loss weighting / ancestral
//! sampling with analytic denoisers ([`diffusion`]), and a reproducible
//! experiment harness ([`harness`]). See the `examples/` directory for a
//! runnable tour of each capability.

pub mod diffusion;
pub mod error;
pub mod harness;
pub mod schedule;
pub mod spectral;
pub mod specsampler;
pub mod tensorio;

pub use error::{Error, Result};
pub use schedule::{KappaBounds, Schedule, ScheduleKind};
pub use spectral::{fit_power_law, rapsd, PowerLawFit, SpectrumCurve, SpectrumModel};
pub use tensorio::ImageTensor;
