//! Figures of merit for the channel: conditional variance with optimized
//! gain and delay, signal transfer coefficient, and the passive
//! beamsplitter benchmark limits.
//!
//! The conditional variance at a sideband frequency is the residual power
//! after subtracting a gain-and-delay-adjusted copy of the input,
//!
//! ```text
//! V_in|out(ω) = min over (G, τ) of ⟨|X_out(ω) − G·e^{iωτ}·X_in(ω)|²⟩
//! ```
//!
//! whose minimizer has the closed form `V = S_oo − |S_io|²/S_ii` with
//! `G_opt = |S_io|/S_ii` and the delay read off the cross-spectrum phase.
//! For a passive channel with coherent input this reduces to `1 − η(ω)`;
//! the ideal lossless delay line gives 0. The matching benchmark for signal
//! transfer is `η(ω)`.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{NoiseInjection, Quadrature};
use crate::error::{Error, Result};
use crate::medium::ChannelResponse;
use crate::synth::{CrossSpectrumEstimate, SpectrumEstimate};

/// Half-width of the bin exclusion zone around a modulation tone when
/// reading the noise floor off a spectrum.
pub const SNR_EXCLUSION_BINS: usize = 3;

/// Number of bins on each side (past the exclusion zone) averaged for the
/// noise floor.
pub const SNR_FLOOR_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ConditionalVariance,
    SignalTransfer,
    BenchmarkConditionalVariance,
    BenchmarkSignalTransfer,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MetricKind::ConditionalVariance => "conditional_variance",
            MetricKind::SignalTransfer => "signal_transfer",
            MetricKind::BenchmarkConditionalVariance => "benchmark_cv",
            MetricKind::BenchmarkSignalTransfer => "benchmark_ts",
        };
        write!(f, "{s}")
    }
}

/// Frequency-indexed metric values, ready for CSV emission.
///
/// Invalid bins (for example zero input power in an empirical estimate) are
/// carried as NaN and written as gaps, never interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub frequencies_hz: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: MetricKind,
    pub quadrature: Quadrature,
    /// Per-frequency optimal gain, when `kind` is a conditional variance.
    pub gain: Option<Vec<f64>>,
    /// Per-frequency optimal delay in seconds, when `kind` is a conditional
    /// variance. Positive when the output lags the input.
    pub delay_s: Option<Vec<f64>>,
}

impl MetricCurve {
    pub fn new(
        frequencies_hz: Vec<f64>,
        values: Vec<f64>,
        kind: MetricKind,
        quadrature: Quadrature,
    ) -> Self {
        MetricCurve { frequencies_hz, values, kind, quadrature, gain: None, delay_s: None }
    }

    /// Export as CSV with columns `freq_hz,value,g_opt,tau_opt_s,kind,quadrature`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "freq_hz,value,g_opt,tau_opt_s,kind,quadrature")?;
        for (i, (&f, &v)) in self.frequencies_hz.iter().zip(&self.values).enumerate() {
            if v.is_nan() {
                continue; // invalid bin: reported as a gap
            }
            let g = self.gain.as_ref().map_or(String::new(), |g| g[i].to_string());
            let tau = self.delay_s.as_ref().map_or(String::new(), |t| t[i].to_string());
            writeln!(w, "{f},{v},{g},{tau},{},{}", self.kind, self.quadrature)?;
        }
        Ok(())
    }
}

/// Closed-form conditional variance of the Gaussian channel model.
///
/// Zero injection reduces to `1 − η` for any input variance; injections add
/// on top.
pub fn conditional_variance_analytic(
    response: &ChannelResponse,
    injection: &NoiseInjection,
    quadrature: Quadrature,
    v_in: f64,
) -> Result<f64> {
    if !(v_in >= 1.0) {
        return Err(Error::InvalidParameter("input variance must be >= 1 (QNL units)".into()));
    }
    injection.validate()?;
    let eta = response.intensity_transmissivity;
    let v_out = eta * v_in + (1.0 - eta) + injection.added_variance(quadrature);
    let cross = eta.sqrt() * v_in;
    Ok(v_out - cross * cross / v_in)
}

/// Per-bin empirical conditional variance from measured spectra:
/// `V = S_oo − |S_io|²/S_ii`, with the optimal gain and delay recorded.
pub fn conditional_variance_empirical(
    s_in: &SpectrumEstimate,
    s_out: &SpectrumEstimate,
    s_cross: &CrossSpectrumEstimate,
    quadrature: Quadrature,
) -> Result<MetricCurve> {
    let aligned = s_in.frequencies.len() == s_out.frequencies.len()
        && s_in.frequencies.len() == s_cross.frequencies.len()
        && s_in
            .frequencies
            .iter()
            .zip(&s_out.frequencies)
            .zip(&s_cross.frequencies)
            .all(|((a, b), c)| a == b && b == c);
    if !aligned {
        return Err(Error::GridMismatch);
    }
    let n = s_in.frequencies.len();
    let mut values = Vec::with_capacity(n);
    let mut gain = Vec::with_capacity(n);
    let mut delay = Vec::with_capacity(n);
    for k in 0..n {
        let sii = s_in.psd[k];
        let soo = s_out.psd[k];
        let sio = s_cross.values[k];
        if !(sii > 0.0) {
            values.push(f64::NAN);
            gain.push(f64::NAN);
            delay.push(f64::NAN);
            continue;
        }
        values.push(soo - sio.norm_sqr() / sii);
        gain.push(sio.norm() / sii);
        let omega = std::f64::consts::TAU * s_in.frequencies[k];
        delay.push(if omega == 0.0 { 0.0 } else { -sio.arg() / omega });
    }
    Ok(MetricCurve {
        frequencies_hz: s_in.frequencies.clone(),
        values,
        kind: MetricKind::ConditionalVariance,
        quadrature,
        gain: Some(gain),
        delay_s: Some(delay),
    })
}

/// Brute-force minimizer of the conditional variance over a (gain, phase)
/// grid with two refinement passes. Validation path for the closed form.
pub fn conditional_variance_grid_search(
    s_ii: f64,
    s_oo: f64,
    s_io: num_complex::Complex64,
    steps: usize,
) -> f64 {
    let objective = |g: f64, theta: f64| {
        s_oo - 2.0 * g * (s_io.norm() * (s_io.arg() - theta).cos()) + g * g * s_ii
    };
    let mut g_lo = 0.0;
    let mut g_hi = if s_ii > 0.0 { 2.0 * s_io.norm() / s_ii + 1e-12 } else { 1.0 };
    let mut t_lo = -std::f64::consts::PI;
    let mut t_hi = std::f64::consts::PI;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _pass in 0..3 {
        for i in 0..=steps {
            let g = g_lo + (g_hi - g_lo) * i as f64 / steps as f64;
            for j in 0..=steps {
                let t = t_lo + (t_hi - t_lo) * j as f64 / steps as f64;
                let v = objective(g, t);
                if v < best.0 {
                    best = (v, g, t);
                }
            }
        }
        let dg = (g_hi - g_lo) / steps as f64;
        let dt = (t_hi - t_lo) / steps as f64;
        g_lo = (best.1 - 2.0 * dg).max(0.0);
        g_hi = best.1 + 2.0 * dg;
        t_lo = best.2 - 2.0 * dt;
        t_hi = best.2 + 2.0 * dt;
    }
    best.0
}

/// Signal transfer coefficient T_s = SNR_out / SNR_in.
pub fn signal_transfer(snr_in: f64, snr_out: f64) -> Result<f64> {
    if !(snr_in > 0.0) {
        return Err(Error::InvalidParameter("input SNR must be > 0".into()));
    }
    if !(snr_out >= 0.0) {
        return Err(Error::InvalidParameter("output SNR must be >= 0".into()));
    }
    Ok(snr_out / snr_in)
}

/// Model signal transfer of the Gaussian channel:
/// `T = η·v_in / (η·v_in + 1 − η + added)`, which is `η` for a coherent
/// input through pure passive loss.
pub fn signal_transfer_model(
    response: &ChannelResponse,
    injection: &NoiseInjection,
    quadrature: Quadrature,
    v_in: f64,
) -> Result<f64> {
    if !(v_in >= 1.0) {
        return Err(Error::InvalidParameter("input variance must be >= 1 (QNL units)".into()));
    }
    injection.validate()?;
    let eta = response.intensity_transmissivity;
    let v_out = eta * v_in + (1.0 - eta) + injection.added_variance(quadrature);
    Ok(eta * v_in / v_out)
}

/// Quantum limits of an equal-transmissivity beamsplitter:
/// `(V_limit, T_limit) = (1 − η(ω), η(ω))`.
pub fn benchmark_beamsplitter(response: &ChannelResponse) -> (f64, f64) {
    let eta = response.intensity_transmissivity;
    (1.0 - eta, eta)
}

/// SNR of a modulation tone read off a spectrum: power in the tone bin above
/// the local noise floor, divided by that floor. The floor is the mean of
/// nearby bins outside a ±[`SNR_EXCLUSION_BINS`] exclusion zone.
pub fn snr_from_spectrum(spectrum: &SpectrumEstimate, tone_hz: f64) -> Result<f64> {
    let k0 = spectrum
        .frequencies
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - tone_hz).abs().partial_cmp(&(b.1 - tone_hz).abs()).unwrap()
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidParameter("empty spectrum".into()))?;
    let n = spectrum.psd.len();
    let mut floor_bins = Vec::new();
    for d in (SNR_EXCLUSION_BINS + 1)..=(SNR_EXCLUSION_BINS + SNR_FLOOR_BINS) {
        if k0 >= d {
            floor_bins.push(spectrum.psd[k0 - d]);
        }
        if k0 + d < n {
            floor_bins.push(spectrum.psd[k0 + d]);
        }
    }
    if floor_bins.is_empty() {
        return Err(Error::InvalidParameter("tone too close to spectrum edge".into()));
    }
    let floor = floor_bins.iter().sum::<f64>() / floor_bins.len() as f64;
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter("zero noise floor".into()));
    }
    Ok(((spectrum.psd[k0] - floor) / floor).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::from_qnl_db;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn response_with_eta(eta: f64) -> ChannelResponse {
        ChannelResponse {
            frequency: 0.0,
            chi: Complex64::new(0.0, 0.0),
            amplitude_transfer: Complex64::new(eta.sqrt(), 0.0),
            intensity_transmissivity: eta,
            phase: 0.0,
            group_delay: 0.0,
        }
    }

    #[test]
    fn lossless_delay_line_has_zero_conditional_variance() {
        let v = conditional_variance_analytic(
            &response_with_eta(1.0),
            &NoiseInjection::none(),
            Quadrature::Amplitude,
            1.0,
        )
        .unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn passive_loss_conditional_variance_is_one_minus_eta() {
        for &v_in in &[1.0, 2.5, 10.0] {
            let v = conditional_variance_analytic(
                &response_with_eta(0.7),
                &NoiseInjection::none(),
                Quadrature::Amplitude,
                v_in,
            )
            .unwrap();
            assert_relative_eq!(v, 0.3, max_relative = 1e-12);
        }
    }

    #[test]
    fn injection_adds_on_top_of_loss_limit() {
        let inj = NoiseInjection::new(0.08, 0.0, from_qnl_db(7.0), 1.0).unwrap();
        let v = conditional_variance_analytic(
            &response_with_eta(0.7),
            &inj,
            Quadrature::Amplitude,
            1.0,
        )
        .unwrap();
        assert_relative_eq!(v, 0.3 + 0.3209497869018178, max_relative = 1e-12);
    }

    #[test]
    fn scaled_noiseless_copy_has_zero_conditional_variance() {
        // s_out = G^2 * s_in with perfect correlation.
        let sii = 2.0;
        let g = 3.0;
        let soo = g * g * sii;
        let sio = Complex64::new(g * sii, 0.0);
        let v = soo - sio.norm_sqr() / sii;
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn independent_records_keep_full_output_power() {
        let soo = 1.7;
        let v = soo - Complex64::new(0.0, 0.0).norm_sqr() / 2.0;
        assert_eq!(v, soo);
    }

    #[test]
    fn grid_search_matches_closed_form() {
        let cases = [
            (1.0, 0.8, Complex64::from_polar(0.6, 0.4)),
            (2.0, 3.0, Complex64::from_polar(1.2, -1.9)),
            (0.5, 0.5, Complex64::from_polar(0.45, 2.8)),
        ];
        for (sii, soo, sio) in cases {
            let closed = soo - sio.norm_sqr() / sii;
            let brute = conditional_variance_grid_search(sii, soo, sio, 200);
            assert_relative_eq!(brute, closed, max_relative = 1e-3, epsilon = 1e-9);
        }
    }

    #[test]
    fn rescaling_input_by_power_of_two_is_exact() {
        // G absorbs any positive rescaling; powers of two keep the float
        // arithmetic bit-identical.
        let sii = 1.37;
        let soo = 0.91;
        let sio = Complex64::from_polar(0.55, 0.7);
        let v = soo - sio.norm_sqr() / sii;
        let scale = 4.0;
        let v_scaled = soo - (sio * scale).norm_sqr() / (sii * scale * scale);
        assert_eq!(v, v_scaled);
    }

    #[test]
    fn time_shift_leaves_conditional_variance_unchanged() {
        // A pure shift only rotates the cross-spectrum phase.
        let sii = 1.37;
        let soo = 0.91;
        let sio = Complex64::from_polar(0.55, 0.7);
        let v = soo - sio.norm_sqr() / sii;
        let shifted = sio * Complex64::from_polar(1.0, -1.234);
        let v_shifted = soo - shifted.norm_sqr() / sii;
        assert_relative_eq!(v, v_shifted, max_relative = 1e-15);
    }

    #[test]
    fn signal_transfer_limits() {
        assert_relative_eq!(
            signal_transfer_model(
                &response_with_eta(1.0),
                &NoiseInjection::none(),
                Quadrature::Amplitude,
                1.0
            )
            .unwrap(),
            1.0
        );
        assert_relative_eq!(
            signal_transfer_model(
                &response_with_eta(0.4),
                &NoiseInjection::none(),
                Quadrature::Amplitude,
                1.0
            )
            .unwrap(),
            0.4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn signal_transfer_with_amplitude_injection() {
        let inj = NoiseInjection::new(0.08, 0.0, from_qnl_db(7.0), 1.0).unwrap();
        let t = signal_transfer_model(&response_with_eta(0.4), &inj, Quadrature::Amplitude, 1.0)
            .unwrap();
        assert_relative_eq!(t, 0.30281241873558876, max_relative = 1e-12);
    }

    #[test]
    fn zero_input_snr_rejected() {
        assert!(signal_transfer(0.0, 1.0).is_err());
    }

    #[test]
    fn beamsplitter_limits() {
        assert_eq!(benchmark_beamsplitter(&response_with_eta(1.0)), (0.0, 1.0));
        assert_eq!(benchmark_beamsplitter(&response_with_eta(0.0)), (1.0, 0.0));
        let (v, t) = benchmark_beamsplitter(&response_with_eta(0.37));
        assert_relative_eq!(v + t, 1.0);
    }

    #[test]
    fn benchmark_rises_toward_unity_across_the_window() {
        use crate::medium::EitParameters;
        let tau = std::f64::consts::TAU;
        let p =
            EitParameters::new(1e17, tau * 3e6, tau * 4e3, tau * 1e6, 7.9e6, 0.075, 3e8).unwrap();
        let mut last = -1.0;
        let mut rose = true;
        for i in 1..=40 {
            let w = tau * 1e3 * (i as f64 / 40.0 * 900.0);
            let (v, _) = benchmark_beamsplitter(&p.response(w).unwrap());
            if v < last {
                rose = false;
            }
            last = v;
        }
        assert!(rose, "benchmark CV not monotone inside the window");
        assert!(last > 0.9, "benchmark CV should approach 1 at the window edge, got {last}");
    }

    #[test]
    fn snr_reads_tone_above_floor() {
        use crate::synth::{estimate_psd, synth_vacuum};
        let mut ts = synth_vacuum(1e6, 0.2, 5).unwrap();
        ts.add_tone(100e3, 1.0, 0.0);
        let spec = estimate_psd(&ts, 1e3, 100).unwrap();
        let snr = snr_from_spectrum(&spec, 100e3).unwrap();
        // Tone power a^2/2 concentrated in one rbw bin of unit-variance
        // noise; the Hann coherent/noise gain ratio is 2/3 here.
        assert!(snr > 50.0, "tone SNR too low: {snr}");
    }

    #[test]
    fn curve_csv_skips_invalid_bins() {
        let mut curve = MetricCurve::new(
            vec![1.0, 2.0, 3.0],
            vec![0.1, f64::NAN, 0.3],
            MetricKind::ConditionalVariance,
            Quadrature::Amplitude,
        );
        curve.gain = Some(vec![1.0, f64::NAN, 0.9]);
        curve.delay_s = Some(vec![0.0, f64::NAN, 1e-6]);
        let mut buf = Vec::new();
        curve.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3); // header + 2 valid bins
        assert!(text.contains("conditional_variance"));
    }
}
