//! Gaussian sideband states and their propagation through the medium.
//!
//! A sideband state is carried as quadrature means and variances for the
//! amplitude (X⁺) and phase (X⁻) quadratures, normalized so that the quantum
//! noise limit (vacuum variance) is 1. Passive loss with transmissivity η
//! scales means by the complex amplitude transfer and maps each variance as
//! `V → ηV + (1 − η)`, the `1 − η` term being the vacuum noise coupled in by
//! the loss. Pump coupling and other excess noise enter as a lumped additive
//! term after the passive map.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::ChannelResponse;

/// Which quadrature a record or metric refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    Amplitude,
    Phase,
}

impl std::fmt::Display for Quadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quadrature::Amplitude => write!(f, "amplitude"),
            Quadrature::Phase => write!(f, "phase"),
        }
    }
}

/// Per-frequency Gaussian moments of the probe sidebands, QNL = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSidebandState {
    /// Sideband frequency ω (rad/s).
    pub frequency: f64,
    /// Mean amplitude-quadrature signal ⟨X⁺⟩.
    pub mean_amp: Complex64,
    /// Mean phase-quadrature signal ⟨X⁻⟩.
    pub mean_phase: Complex64,
    /// Amplitude-quadrature variance V⁺ (≥ 1, no squeezing in scope).
    pub var_amp: f64,
    /// Phase-quadrature variance V⁻ (≥ 1).
    pub var_phase: f64,
}

impl GaussianSidebandState {
    pub fn new(
        frequency: f64,
        mean_amp: Complex64,
        mean_phase: Complex64,
        var_amp: f64,
        var_phase: f64,
    ) -> Result<Self> {
        if !(var_amp >= 1.0 && var_phase >= 1.0) {
            return Err(Error::InvalidParameter(
                "quadrature variances must be >= 1 (QNL units, no squeezing)".into(),
            ));
        }
        Ok(GaussianSidebandState { frequency, mean_amp, mean_phase, var_amp, var_phase })
    }

    /// Coherent state: unit variances, given quadrature means.
    pub fn coherent(frequency: f64, mean_amp: Complex64, mean_phase: Complex64) -> Self {
        GaussianSidebandState { frequency, mean_amp, mean_phase, var_amp: 1.0, var_phase: 1.0 }
    }

    /// Vacuum at the given sideband frequency.
    pub fn vacuum(frequency: f64) -> Self {
        Self::coherent(frequency, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn variance(&self, quadrature: Quadrature) -> f64 {
        match quadrature {
            Quadrature::Amplitude => self.var_amp,
            Quadrature::Phase => self.var_phase,
        }
    }
}

/// Excess-noise injection: pump-probe coupling plus free additive terms.
///
/// The coupling fractions are the measured transfer of classical pump
/// modulation into the probe; each quadrature picks up
/// `κ·(pump_var − 1) + extra_var` on top of the passive-loss output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseInjection {
    /// Pump-to-probe coupling fraction for the amplitude quadrature.
    pub coupling_amp: f64,
    /// Pump-to-probe coupling fraction for the phase quadrature.
    pub coupling_phase: f64,
    /// Pump amplitude-quadrature variance (QNL units, ≥ 1).
    pub pump_var_amp: f64,
    /// Pump phase-quadrature variance (QNL units, ≥ 1).
    pub pump_var_phase: f64,
    /// Additional additive amplitude-quadrature noise (QNL units).
    #[serde(default)]
    pub extra_var_amp: f64,
    /// Additional additive phase-quadrature noise (QNL units).
    #[serde(default)]
    pub extra_var_phase: f64,
}

impl NoiseInjection {
    pub fn new(
        coupling_amp: f64,
        coupling_phase: f64,
        pump_var_amp: f64,
        pump_var_phase: f64,
    ) -> Result<Self> {
        let inj = NoiseInjection {
            coupling_amp,
            coupling_phase,
            pump_var_amp,
            pump_var_phase,
            extra_var_amp: 0.0,
            extra_var_phase: 0.0,
        };
        inj.validate()?;
        Ok(inj)
    }

    /// No injected noise at all.
    pub fn none() -> Self {
        NoiseInjection {
            coupling_amp: 0.0,
            coupling_phase: 0.0,
            pump_var_amp: 1.0,
            pump_var_phase: 1.0,
            extra_var_amp: 0.0,
            extra_var_phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coupling_amp) || !(0.0..=1.0).contains(&self.coupling_phase)
        {
            return Err(Error::InvalidParameter(
                "coupling fractions must lie in [0, 1]".into(),
            ));
        }
        if !(self.pump_var_amp >= 1.0 && self.pump_var_phase >= 1.0) {
            return Err(Error::InvalidParameter("pump variances must be >= 1".into()));
        }
        if !(self.extra_var_amp >= 0.0 && self.extra_var_phase >= 0.0) {
            return Err(Error::InvalidParameter("extra variances must be >= 0".into()));
        }
        Ok(())
    }

    /// Added variance for one quadrature: κ·(pump_var − 1) + extra_var.
    pub fn added_variance(&self, quadrature: Quadrature) -> f64 {
        match quadrature {
            Quadrature::Amplitude => {
                self.coupling_amp * (self.pump_var_amp - 1.0) + self.extra_var_amp
            }
            Quadrature::Phase => {
                self.coupling_phase * (self.pump_var_phase - 1.0) + self.extra_var_phase
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.added_variance(Quadrature::Amplitude) == 0.0
            && self.added_variance(Quadrature::Phase) == 0.0
    }
}

/// Variance in decibels relative to the QNL: 10·log₁₀(V).
pub fn qnl_db(variance: f64) -> f64 {
    10.0 * variance.log10()
}

/// Inverse of [`qnl_db`].
pub fn from_qnl_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Passive beamsplitter-like loss: means scale by t(ω), variances map as
/// `V → ηV + (1 − η)` independently per quadrature.
pub fn apply_passive(
    state: &GaussianSidebandState,
    response: &ChannelResponse,
) -> Result<GaussianSidebandState> {
    if state.frequency != response.frequency {
        return Err(Error::FrequencyMismatch {
            state_hz: state.frequency / std::f64::consts::TAU,
            response_hz: response.frequency / std::f64::consts::TAU,
        });
    }
    let eta = response.intensity_transmissivity;
    let t = response.amplitude_transfer;
    Ok(GaussianSidebandState {
        frequency: state.frequency,
        mean_amp: t * state.mean_amp,
        mean_phase: t * state.mean_phase,
        var_amp: eta * state.var_amp + (1.0 - eta),
        var_phase: eta * state.var_phase + (1.0 - eta),
    })
}

/// Lumped excess-noise addition; means are unchanged.
pub fn apply_injection(
    state: &GaussianSidebandState,
    injection: &NoiseInjection,
) -> Result<GaussianSidebandState> {
    injection.validate()?;
    Ok(GaussianSidebandState {
        var_amp: state.var_amp + injection.added_variance(Quadrature::Amplitude),
        var_phase: state.var_phase + injection.added_variance(Quadrature::Phase),
        ..state.clone()
    })
}

/// Passive loss followed by excess-noise injection.
pub fn end_to_end(
    state: &GaussianSidebandState,
    response: &ChannelResponse,
    injection: &NoiseInjection,
) -> Result<GaussianSidebandState> {
    apply_injection(&apply_passive(state, response)?, injection)
}
