//! Linear response of a 3-level Λ medium under a strong pump.
//!
//! The probe susceptibility of the Λ system is
//!
//! ```text
//! χ(ω) = i·2N|g|²(γ₀ − iω) / (ck·[(γ₀ − iω)(γ − iω) + |gE_c|²])
//! ```
//!
//! with `N|g|²` the optical-depth rate (atomic density times coupling
//! squared), `γ` the spontaneous emission rate, `γ₀` the ground-state
//! dephasing rate, and `|gE_c|` the pump Rabi frequency. The imaginary part
//! sets the loss, the real part the dispersion. All frequencies and rates
//! are angular (rad/s).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Physical constants of the Λ medium.
///
/// `N` and `g` never enter any observable separately, so the composite
/// `N|g|²` is the configurable quantity; use [`EitParameters::with_density`]
/// to build it from a separate density and coupling constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EitParameters {
    /// Composite N|g|² (m⁻³·rad²·s⁻²).
    pub optical_depth_rate: f64,
    /// Spontaneous emission rate γ (rad/s). Must be positive.
    pub spontaneous_rate: f64,
    /// Ground-state dephasing rate γ₀ (rad/s). Non-negative.
    pub dephasing_rate: f64,
    /// Pump Rabi frequency |gE_c| (rad/s). Must be positive.
    pub pump_rabi: f64,
    /// Probe wavenumber k (m⁻¹).
    pub wavenumber: f64,
    /// Medium length L (m).
    pub medium_length: f64,
    /// Speed of light c (m/s).
    pub light_speed: f64,
}

impl EitParameters {
    pub fn new(
        optical_depth_rate: f64,
        spontaneous_rate: f64,
        dephasing_rate: f64,
        pump_rabi: f64,
        wavenumber: f64,
        medium_length: f64,
        light_speed: f64,
    ) -> Result<Self> {
        let p = EitParameters {
            optical_depth_rate,
            spontaneous_rate,
            dephasing_rate,
            pump_rabi,
            wavenumber,
            medium_length,
            light_speed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same as [`EitParameters::new`] but with `N` and `g` given separately;
    /// they multiply into the composite `N|g|²`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_density(
        atomic_density: f64,
        coupling_constant: f64,
        spontaneous_rate: f64,
        dephasing_rate: f64,
        pump_rabi: f64,
        wavenumber: f64,
        medium_length: f64,
        light_speed: f64,
    ) -> Result<Self> {
        if atomic_density < 0.0 {
            return Err(Error::InvalidParameter("atomic density must be >= 0".into()));
        }
        Self::new(
            atomic_density * coupling_constant * coupling_constant,
            spontaneous_rate,
            dephasing_rate,
            pump_rabi,
            wavenumber,
            medium_length,
            light_speed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.spontaneous_rate > 0.0) {
            return bad("spontaneous rate gamma must be > 0");
        }
        if !(self.dephasing_rate >= 0.0) {
            return bad("dephasing rate gamma_0 must be >= 0");
        }
        if !(self.pump_rabi > 0.0) {
            return bad("pump Rabi frequency must be > 0");
        }
        if !(self.wavenumber > 0.0) {
            return bad("wavenumber must be > 0");
        }
        if !(self.medium_length > 0.0) {
            return bad("medium length must be > 0");
        }
        if !(self.light_speed > 0.0) {
            return bad("light speed must be > 0");
        }
        if !(self.optical_depth_rate >= 0.0) {
            return bad("optical depth rate N|g|^2 must be >= 0");
        }
        Ok(())
    }

    /// Probe susceptibility χ(ω) at sideband frequency ω (rad/s).
    ///
    /// `Im χ ≥ 0` for all ω, and `χ(−ω) = −conj(χ(ω))`.
    pub fn susceptibility(&self, omega: f64) -> Result<Complex64> {
        let ground = Complex64::new(self.dephasing_rate, -omega);
        let excited = Complex64::new(self.spontaneous_rate, -omega);
        let denom = self.light_speed
            * self.wavenumber
            * (ground * excited + self.pump_rabi * self.pump_rabi);
        if denom.norm() < f64::EPSILON {
            return Err(Error::DegenerateParameters(format!(
                "susceptibility denominator vanishes at omega = {omega} rad/s"
            )));
        }
        Ok(Complex64::i() * 2.0 * self.optical_depth_rate * ground / denom)
    }

    /// Full linear response at ω: susceptibility, amplitude transfer,
    /// intensity transmissivity, phase, and group delay.
    pub fn response(&self, omega: f64) -> Result<ChannelResponse> {
        let chi = self.susceptibility(omega)?;
        let kl = self.wavenumber * self.medium_length;
        let eta = (-kl * chi.im).exp();
        let phase = 0.5 * kl * chi.re;
        let transfer = Complex64::from_polar(eta.sqrt(), phase);
        Ok(ChannelResponse {
            frequency: omega,
            chi,
            amplitude_transfer: transfer,
            intensity_transmissivity: eta,
            phase,
            group_delay: self.group_delay(omega)?,
        })
    }

    /// Group delay τ_g(ω) = dφ/dω from the closed-form derivative of χ.
    ///
    /// For γ₀ = 0 the small-ω limit is `N|g|²L / (c|gE_c|²)`.
    pub fn group_delay(&self, omega: f64) -> Result<f64> {
        let ground = Complex64::new(self.dephasing_rate, -omega);
        let excited = Complex64::new(self.spontaneous_rate, -omega);
        let denom = ground * excited + self.pump_rabi * self.pump_rabi;
        if (self.light_speed * self.wavenumber * denom).norm() < f64::EPSILON {
            return Err(Error::DegenerateParameters(format!(
                "response denominator vanishes at omega = {omega} rad/s"
            )));
        }
        // chi = (2iA/ck) n/D with n = gamma_0 - i w, D = n(gamma - i w) + Omega^2.
        let n_prime = Complex64::new(0.0, -1.0);
        let d_prime = Complex64::new(0.0, -1.0) * (excited + ground);
        let dchi = Complex64::i() * 2.0 * self.optical_depth_rate
            / (self.light_speed * self.wavenumber)
            * (n_prime * denom - ground * d_prime)
            / (denom * denom);
        Ok(0.5 * self.wavenumber * self.medium_length * dchi.re)
    }
}

/// Linear response of the medium at one sideband frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    /// Sideband frequency ω (rad/s).
    pub frequency: f64,
    /// Susceptibility χ(ω), dimensionless.
    pub chi: Complex64,
    /// Complex amplitude transfer t(ω) = √η·e^{iφ}.
    pub amplitude_transfer: Complex64,
    /// Intensity transmissivity η(ω) = exp(−kL·Im χ) ∈ (0, 1].
    pub intensity_transmissivity: f64,
    /// Phase φ(ω) = (kL/2)·Re χ (rad).
    pub phase: f64,
    /// Group delay τ_g(ω) = dφ/dω (s).
    pub group_delay: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn spec_example_params(gamma0: f64) -> EitParameters {
        EitParameters::new(
            1e14,
            2.0 * std::f64::consts::PI * 3e6,
            gamma0,
            2.0 * std::f64::consts::PI * 1e6,
            7.9e6,
            0.075,
            3e8,
        )
        .unwrap()
    }

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn susceptibility_vanishes_at_line_center_without_dephasing() {
        let p = spec_example_params(0.0);
        let chi = p.susceptibility(0.0).unwrap();
        assert_eq!(chi, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn susceptibility_purely_imaginary_at_line_center() {
        let p = spec_example_params(TAU * 4e3);
        let chi = p.susceptibility(0.0).unwrap();
        assert_eq!(chi.re, 0.0);
        // Frozen arbitrary-precision evaluation of the closed form.
        assert_relative_eq!(chi.im, 5.3086153697201626e-11, max_relative = 1e-14);
    }

    #[test]
    fn susceptibility_matches_frozen_oracle_at_100khz() {
        // Arbitrary-precision (40-digit) evaluation of the closed form at
        // N|g|^2 = 1e14, gamma = 2pi*3e6, gamma_0 = 2pi*4e3,
        // |gEc| = 2pi*1e6, k = 7.9e6, c = 3e8, omega = 2pi*100e3.
        let p = spec_example_params(TAU * 4e3);
        let chi = p.susceptibility(TAU * 100e3).unwrap();
        assert_relative_eq!(chi.re, 1.2151103482963003e-9, max_relative = 1e-13);
        assert_relative_eq!(chi.im, 4.1790652312352958e-10, max_relative = 1e-13);
    }

    #[test]
    fn perfect_transmission_without_dephasing() {
        let p = spec_example_params(0.0);
        let r = p.response(0.0).unwrap();
        assert_eq!(r.intensity_transmissivity, 1.0);
        assert_eq!(r.phase, 0.0);
    }

    #[test]
    fn transmission_below_one_with_dephasing() {
        let p = spec_example_params(TAU * 4e3);
        let r = p.response(0.0).unwrap();
        assert!(r.intensity_transmissivity < 1.0);
    }

    #[test]
    fn loss_grows_with_frequency_inside_window() {
        // Numeric sweep of the closed form with the frozen example params.
        let p = spec_example_params(TAU * 4e3);
        let eta_lo = p.response(TAU * 50e3).unwrap().intensity_transmissivity;
        let eta_hi = p.response(TAU * 500e3).unwrap().intensity_transmissivity;
        assert!(eta_hi < eta_lo);
        assert_relative_eq!(eta_lo, 0.999911782283, max_relative = 1e-9);
        assert_relative_eq!(eta_hi, 0.997886878748, max_relative = 1e-9);
    }

    #[test]
    fn zero_density_is_identity_channel() {
        let p = EitParameters::new(0.0, TAU * 3e6, TAU * 4e3, TAU * 1e6, 7.9e6, 0.075, 3e8)
            .unwrap();
        for &f in &[0.0, 1e4, 1e5, 1e6] {
            let r = p.response(TAU * f).unwrap();
            assert_eq!(r.intensity_transmissivity, 1.0);
            assert_eq!(r.phase, 0.0);
            assert_eq!(r.group_delay, 0.0);
        }
    }

    #[test]
    fn group_delay_small_omega_limit() {
        let p = spec_example_params(0.0);
        let expect = p.optical_depth_rate * p.medium_length
            / (p.light_speed * p.pump_rabi * p.pump_rabi);
        assert_relative_eq!(expect, 6.3325739776461107e-10, max_relative = 1e-14);
        assert_relative_eq!(p.group_delay(0.0).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn group_delay_matches_finite_difference() {
        let p = spec_example_params(TAU * 4e3);
        for i in 0..20 {
            let w = TAU * 1e3 * (1.0 + i as f64 * 40.0);
            let h = 1.0;
            let fd = (p.response(w + h).unwrap().phase - p.response(w - h).unwrap().phase)
                / (2.0 * h);
            assert_relative_eq!(p.group_delay(w).unwrap(), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn delay_tuning_implies_slow_group_velocity() {
        // Parameters tuned so tau_g(0) = 7.5 us with L = 0.075 m give
        // group velocity c/30000.
        let omega_c = TAU * 1e6;
        let l = 0.075;
        let c = 3e8;
        let target = 7.5e-6;
        let a = target * c * omega_c * omega_c / l;
        let p = EitParameters::new(a, TAU * 1e6, 0.0, omega_c, 7.9e6, l, c).unwrap();
        let tau = p.group_delay(0.0).unwrap();
        assert_relative_eq!(tau, target, max_relative = 1e-12);
        assert_relative_eq!(l / tau, c / 30000.0, max_relative = 1e-12);
    }

    #[test]
    fn gamma_zero_rejected() {
        assert!(EitParameters::new(1e14, 0.0, 0.0, 1e6, 7.9e6, 0.075, 3e8).is_err());
    }

    proptest! {
        #[test]
        fn conjugation_symmetry(
            a in 1e10f64..1e18,
            gamma in 1e5f64..1e8,
            gamma0 in 0.0f64..1e6,
            rabi in 1e4f64..1e8,
            f in 1.0f64..1e7,
        ) {
            let p = EitParameters::new(a, gamma, gamma0, rabi, 7.9e6, 0.075, 3e8).unwrap();
            let w = TAU * f;
            let pos = p.susceptibility(w).unwrap();
            let neg = p.susceptibility(-w).unwrap();
            prop_assert!((neg + pos.conj()).norm() <= 1e-12 * pos.norm().max(1e-300));
        }

        #[test]
        fn medium_is_absorptive(
            a in 1e10f64..1e18,
            gamma in 1e5f64..1e8,
            gamma0 in 0.0f64..1e6,
            rabi in 1e4f64..1e8,
            f in -1e7f64..1e7,
        ) {
            let p = EitParameters::new(a, gamma, gamma0, rabi, 7.9e6, 0.075, 3e8).unwrap();
            let r = p.response(TAU * f).unwrap();
            prop_assert!(r.chi.im >= 0.0);
            prop_assert!(r.intensity_transmissivity <= 1.0);
            prop_assert!(r.intensity_transmissivity > 0.0);
        }

        #[test]
        fn line_center_transparent_iff_no_dephasing(
            a in 1e10f64..1e18,
            gamma in 1e5f64..1e8,
            rabi in 1e4f64..1e8,
        ) {
            let ideal = EitParameters::new(a, gamma, 0.0, rabi, 7.9e6, 0.075, 3e8).unwrap();
            prop_assert!((ideal.response(0.0).unwrap().intensity_transmissivity - 1.0).abs() < 1e-15);
            let dephased = EitParameters::new(a.max(1e12), gamma, 1e3, rabi, 7.9e6, 0.075, 3e8).unwrap();
            prop_assert!(dephased.response(0.0).unwrap().intensity_transmissivity < 1.0);
        }
    }
}
