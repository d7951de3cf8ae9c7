//! Simulation of an electromagnetically-induced-transparency (EIT) medium
//! as a frequency-dependent Gaussian quantum channel for optical sidebands.
//!
//! The medium's Λ-system susceptibility fixes a complex linear response
//! (loss, phase, group delay) at every sideband frequency. Gaussian
//! quadrature states propagate through it as passive loss with vacuum
//! coupling plus configurable excess-noise injections, and the channel is
//! characterized by the continuous-variable figures of merit: conditional
//! variance, signal transfer coefficient, and the passive beamsplitter
//! benchmark limits `1 − η(ω)` and `η(ω)`.
//!
//! ```
//! use eitline::EitParameters;
//!
//! let tau = std::f64::consts::TAU;
//! let medium = EitParameters::new(1e17, tau * 3e6, tau * 4e3, tau * 1e6,
//!                                 7.9e6, 0.075, 3e8)?;
//! let response = medium.response(tau * 100e3)?;
//! assert!(response.intensity_transmissivity < 1.0);
//! assert!(response.group_delay > 0.0);
//! # Ok::<(), eitline::Error>(())
//! ```
//!
//! The `eitline` binary runs bundled or user-written scenario files; see
//! the guide in `book/` for a narrative walk-through.

pub mod channel;
pub mod error;
pub mod fit;
pub mod medium;
pub mod metrics;
pub mod scenario;
pub mod synth;

pub use channel::{
    apply_injection, apply_passive, end_to_end, from_qnl_db, qnl_db, GaussianSidebandState,
    NoiseInjection, Quadrature,
};
pub use error::{Error, Result};
pub use fit::{fit, FitModel, FitParameterKind, FitPoint, FitProblem, FitResult, FreeParameter};
pub use medium::{ChannelResponse, EitParameters, SPEED_OF_LIGHT};
pub use metrics::{
    benchmark_beamsplitter, conditional_variance_analytic, conditional_variance_empirical,
    conditional_variance_grid_search, signal_transfer, signal_transfer_model, snr_from_spectrum,
    MetricCurve, MetricKind,
};
pub use scenario::{
    bundled_scenario, run_scenario, AnalysisKind, Scenario, ScenarioReport, BUNDLED_SCENARIOS,
};
pub use synth::{
    correlation_fwhm, cross_correlate, estimate_cross_psd, estimate_delay, estimate_psd,
    filter_through_channel, synth_bandlimited_noise, synth_vacuum, CrossSpectrumEstimate,
    SpectrumEstimate, TimeSeries,
};

// The guide chapters double as doctests so the book stays in sync with the
// library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(transparency_window, "../book/src/transparency-window.md");
    chapter!(loss_and_noise, "../book/src/loss-and-noise.md");
    chapter!(time_domain, "../book/src/time-domain.md");
    chapter!(figures_of_merit, "../book/src/figures-of-merit.md");
    chapter!(fitting, "../book/src/fitting.md");
}
