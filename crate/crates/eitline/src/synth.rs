//! Time-domain engine: band-limited noise synthesis, channel filtering with
//! stochastic vacuum/excess noise, correlation, delay estimation, and
//! spectral estimation.
//!
//! All randomness flows from explicit `u64` seeds through a counter-based
//! generator, so every record is a pure function of its inputs. PSD values
//! are QNL-relative: white noise of time-domain variance `V` reads `V` at
//! every bin, and the vacuum floor reads 1.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::channel::{NoiseInjection, Quadrature};
use crate::error::{Error, Result};
use crate::medium::EitParameters;

/// Magic bytes of the compact binary record format.
pub const BINARY_MAGIC: &[u8; 8] = b"EITSER01";

/// Normalized-correlation threshold below which no delay is reported.
pub const DELAY_SIGNIFICANCE: f64 = 0.1;

/// Uniformly sampled real-valued quadrature record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// QNL-normalized quadrature samples.
    pub samples: Vec<f64>,
    /// Sample rate in Hz.
    pub sample_rate: f64,
    /// Seed that produced all randomness in this record.
    pub seed: u64,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len().max(1) as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            / self.samples.len().max(1) as f64
    }

    /// Add a sinusoid in place (used for modulation tones).
    pub fn add_tone(&mut self, freq_hz: f64, amplitude: f64, phase: f64) {
        let w = std::f64::consts::TAU * freq_hz / self.sample_rate;
        for (i, s) in self.samples.iter_mut().enumerate() {
            *s += amplitude * (w * i as f64 + phase).cos();
        }
    }

    /// Complex amplitude of the component at `freq_hz` (single-bin DFT).
    pub fn tone_phasor(&self, freq_hz: f64) -> Complex64 {
        let w = std::f64::consts::TAU * freq_hz / self.sample_rate;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &s) in self.samples.iter().enumerate() {
            acc += s * Complex64::from_polar(1.0, -w * i as f64);
        }
        acc * 2.0 / self.samples.len() as f64
    }

    /// Export as CSV with columns `time_s,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "time_s,value")?;
        let dt = 1.0 / self.sample_rate;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", i as f64 * dt, s)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Import from the CSV form written by [`TimeSeries::write_csv`].
    ///
    /// The seed is not carried by CSV and is set to 0.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let t: f64 = parts
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad time at line {}", lineno + 1)))?;
            let v: f64 = parts
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad value at line {}", lineno + 1)))?;
            times.push(t);
            samples.push(v);
        }
        if times.len() < 2 {
            return Err(Error::Format("need at least two samples".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if dt <= 0.0 {
            return Err(Error::Format("non-increasing time column".into()));
        }
        Ok(TimeSeries { samples, sample_rate: 1.0 / dt, seed: 0 })
    }

    /// Export in the compact binary form: magic, sample_rate (f64 LE),
    /// length (u64 LE), seed (u64 LE), then the samples as f64 LE.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&self.sample_rate.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("bad magic in binary record".into()));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let sample_rate = f64::from_le_bytes(buf8);
        r.read_exact(&mut buf8)?;
        let len = u64::from_le_bytes(buf8) as usize;
        r.read_exact(&mut buf8)?;
        let seed = u64::from_le_bytes(buf8);
        let mut samples = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut buf8)?;
            samples.push(f64::from_le_bytes(buf8));
        }
        Ok(TimeSeries { samples, sample_rate, seed })
    }
}

/// Averaged-periodogram PSD estimate (QNL-relative power).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    /// Bin centers in Hz (uniform grid from DC to Nyquist).
    pub frequencies: Vec<f64>,
    /// QNL-relative power at each bin.
    pub psd: Vec<f64>,
    /// Resolution bandwidth in Hz (bin spacing).
    pub rbw: f64,
    /// Number of averaged segments.
    pub averages: usize,
}

/// Complex input-output cross-spectrum on the same grid as
/// [`SpectrumEstimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectrumEstimate {
    pub frequencies: Vec<f64>,
    pub values: Vec<Complex64>,
    pub rbw: f64,
    pub averages: usize,
}

fn fft_in_place(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    fft.process(data);
}

fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Band-limited Gaussian noise, flat at `psd_level` (QNL-relative) over
/// `[0, bandwidth]` with a raised-cosine edge of width 5% of the bandwidth.
pub fn synth_bandlimited_noise(
    bandwidth_hz: f64,
    psd_level: f64,
    sample_rate: f64,
    duration: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if !(bandwidth_hz > 0.0 && bandwidth_hz < sample_rate / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth {bandwidth_hz} Hz must lie in (0, Nyquist = {} Hz)",
            sample_rate / 2.0
        )));
    }
    if !(psd_level > 0.0) {
        return Err(Error::InvalidParameter("psd level must be > 0".into()));
    }
    if !(duration > 0.0 && sample_rate > 0.0) {
        return Err(Error::InvalidParameter("duration and sample rate must be > 0".into()));
    }
    let n = ((duration * sample_rate).round() as usize).max(16).next_power_of_two();
    let mut spec: Vec<Complex64> = white_noise(n, seed)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    fft_in_place(&mut spec, false);
    let amp = psd_level.sqrt();
    let edge_lo = 0.95 * bandwidth_hz;
    for (k, v) in spec.iter_mut().enumerate() {
        let f = bin_frequency(k, n, sample_rate).abs();
        let gain = if f <= edge_lo {
            amp
        } else if f < bandwidth_hz {
            let x = (f - edge_lo) / (bandwidth_hz - edge_lo);
            amp * (0.5 * (1.0 + (std::f64::consts::PI * x).cos()))
        } else {
            0.0
        };
        *v *= gain;
    }
    fft_in_place(&mut spec, true);
    let scale = 1.0 / n as f64;
    Ok(TimeSeries {
        samples: spec.into_iter().map(|v| v.re * scale).collect(),
        sample_rate,
        seed,
    })
}

/// Unit-variance white Gaussian noise record (the vacuum floor, QNL = 1).
pub fn synth_vacuum(sample_rate: f64, duration: f64, seed: u64) -> Result<TimeSeries> {
    if !(duration > 0.0 && sample_rate > 0.0) {
        return Err(Error::InvalidParameter("duration and sample rate must be > 0".into()));
    }
    let n = ((duration * sample_rate).round() as usize).max(16).next_power_of_two();
    Ok(TimeSeries { samples: white_noise(n, seed), sample_rate, seed })
}

/// Signed frequency of FFT bin `k` for an `n`-point transform.
fn bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = k as i64;
    let n = n as i64;
    let signed = if k <= n / 2 { k } else { k - n };
    signed as f64 * sample_rate / n as f64
}

/// Push a quadrature record through the EIT channel.
///
/// The input spectrum is multiplied by the complex amplitude transfer t(ω)
/// (conjugate-symmetric, so the output stays real), an independent vacuum
/// realization shaped by √(1 − η(ω)) is added, and the excess-noise
/// injection for the chosen quadrature enters as white noise of the matching
/// variance. Ensemble statistics converge to the analytic maps in
/// [`crate::channel`].
pub fn filter_through_channel(
    series: &TimeSeries,
    params: &EitParameters,
    injection: &NoiseInjection,
    quadrature: Quadrature,
    seed: u64,
) -> Result<TimeSeries> {
    params.validate()?;
    injection.validate()?;
    let n = series.samples.len();
    if n < 2 {
        return Err(Error::RecordTooShort { needed: 2, have: n });
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let vacuum_seed = master.next_u64();
    let injection_seed = master.next_u64();

    // Transfer and loss on the non-negative half; mirrored by conjugation.
    let half = n / 2;
    let mut transfer = vec![Complex64::new(0.0, 0.0); half + 1];
    let mut vacuum_gain = vec![0.0f64; half + 1];
    for k in 0..=half {
        let omega = std::f64::consts::TAU * bin_frequency(k, n, series.sample_rate);
        let r = params.response(omega)?;
        let t = if k == 0 || (k == half && n % 2 == 0) {
            // DC and Nyquist bins must stay real.
            Complex64::new(r.intensity_transmissivity.sqrt(), 0.0)
        } else {
            // The synthesis convention here expands x[n] over e^{+i w t},
            // so a physical phase lag phi(w) (group delay +dphi/dw) acts as
            // multiplication by conj(t) on the positive-frequency half.
            r.amplitude_transfer.conj()
        };
        transfer[k] = t;
        vacuum_gain[k] = (1.0 - r.intensity_transmissivity).max(0.0).sqrt();
    }

    let mut spec: Vec<Complex64> =
        series.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut spec, false);
    let mut vac: Vec<Complex64> = white_noise(n, vacuum_seed)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    fft_in_place(&mut vac, false);
    for k in 0..n {
        let (t, g) = if k <= half {
            (transfer[k], vacuum_gain[k])
        } else {
            (transfer[n - k].conj(), vacuum_gain[n - k])
        };
        spec[k] = spec[k] * t + vac[k] * g;
    }
    fft_in_place(&mut spec, true);
    let scale = 1.0 / n as f64;
    let rms = (spec.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64).sqrt() * scale;
    let max_imag = spec.iter().map(|v| v.im.abs()).fold(0.0, f64::max) * scale;
    debug_assert!(max_imag <= 1e-10 * rms.max(1e-300), "filter output not real: {max_imag:e}");

    let mut samples: Vec<f64> = spec.into_iter().map(|v| v.re * scale).collect();
    let extra = injection.added_variance(quadrature);
    if extra > 0.0 {
        let sigma = extra.sqrt();
        for (s, w) in samples.iter_mut().zip(white_noise(n, injection_seed)) {
            *s += sigma * w;
        }
    }
    Ok(TimeSeries { samples, sample_rate: series.sample_rate, seed })
}

/// Normalized circular cross-correlation (zero-padded to avoid wrap-around).
///
/// Returns `(lags_s, correlation)` with lags ascending through zero. A peak
/// at positive lag means `b` lags `a`. For `a = b` the peak is 1 at lag 0.
pub fn cross_correlate(a: &TimeSeries, b: &TimeSeries) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::SampleRateMismatch { a: a.sample_rate, b: b.sample_rate });
    }
    let n = a.samples.len().max(b.samples.len());
    if n < 2 {
        return Err(Error::RecordTooShort { needed: 2, have: n });
    }
    let m = (2 * n).next_power_of_two();
    let mut fa = vec![Complex64::new(0.0, 0.0); m];
    let mut fb = vec![Complex64::new(0.0, 0.0); m];
    for (i, &x) in a.samples.iter().enumerate() {
        fa[i] = Complex64::new(x, 0.0);
    }
    for (i, &x) in b.samples.iter().enumerate() {
        fb[i] = Complex64::new(x, 0.0);
    }
    fft_in_place(&mut fa, false);
    fft_in_place(&mut fb, false);
    for k in 0..m {
        fa[k] = fa[k].conj() * fb[k];
    }
    fft_in_place(&mut fa, true);
    let energy_a: f64 = a.samples.iter().map(|x| x * x).sum();
    let energy_b: f64 = b.samples.iter().map(|x| x * x).sum();
    let norm = (energy_a * energy_b).sqrt().max(1e-300) * m as f64;

    let dt = 1.0 / a.sample_rate;
    let max_lag = n - 1;
    let mut lags = Vec::with_capacity(2 * max_lag + 1);
    let mut corr = Vec::with_capacity(2 * max_lag + 1);
    for s in -(max_lag as i64)..=(max_lag as i64) {
        let idx = if s >= 0 { s as usize } else { (m as i64 + s) as usize };
        lags.push(s as f64 * dt);
        corr.push(fa[idx].re / norm);
    }
    Ok((lags, corr))
}

/// Delay of `b` relative to `a`: correlation argmax refined by three-point
/// parabolic interpolation.
pub fn estimate_delay(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    let (lags, corr) = cross_correlate(a, b)?;
    let (i, &peak) = corr
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .expect("non-empty correlation");
    if peak < DELAY_SIGNIFICANCE {
        return Err(Error::NoDelayFound { peak, threshold: DELAY_SIGNIFICANCE });
    }
    let dt = 1.0 / a.sample_rate;
    if i == 0 || i + 1 == corr.len() {
        return Ok(lags[i]);
    }
    let (ym, y0, yp) = (corr[i - 1], corr[i], corr[i + 1]);
    let denom = ym - 2.0 * y0 + yp;
    let frac = if denom.abs() < 1e-300 { 0.0 } else { 0.5 * (ym - yp) / denom };
    Ok(lags[i] + frac.clamp(-0.5, 0.5) * dt)
}

/// Full width at half maximum of the correlation peak, in seconds.
pub fn correlation_fwhm(lags: &[f64], corr: &[f64]) -> Option<f64> {
    let (i, &peak) = corr
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())?;
    let half = peak / 2.0;
    let mut left = lags[0];
    for j in (1..=i).rev() {
        if corr[j - 1] < half {
            let t = (half - corr[j - 1]) / (corr[j] - corr[j - 1]);
            left = lags[j - 1] + t * (lags[j] - lags[j - 1]);
            break;
        }
    }
    let mut right = lags[lags.len() - 1];
    for j in i..corr.len() - 1 {
        if corr[j + 1] < half {
            let t = (corr[j] - half) / (corr[j] - corr[j + 1]);
            right = lags[j] + t * (lags[j + 1] - lags[j]);
            break;
        }
    }
    Some(right - left)
}

fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
        .collect()
}

fn segment_len(sample_rate: f64, rbw: f64) -> Result<usize> {
    if !(rbw > 0.0 && rbw < sample_rate / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "rbw {rbw} Hz must lie in (0, Nyquist)"
        )));
    }
    let n = ((sample_rate / rbw).round() as usize).max(16);
    Ok(n + n % 2)
}

fn windowed_segments(
    series: &TimeSeries,
    n: usize,
    averages: usize,
    window: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    if averages == 0 {
        return Err(Error::InvalidParameter("averages must be >= 1".into()));
    }
    let hop = n / 2; // 50% overlap
    let needed = n + (averages - 1) * hop;
    if series.samples.len() < needed {
        return Err(Error::RecordTooShort { needed, have: series.samples.len() });
    }
    let mut out = Vec::with_capacity(averages);
    for s in 0..averages {
        let start = s * hop;
        let mut seg: Vec<Complex64> = series.samples[start..start + n]
            .iter()
            .zip(window)
            .map(|(&x, &w)| Complex64::new(x * w, 0.0))
            .collect();
        fft_in_place(&mut seg, false);
        out.push(seg);
    }
    Ok(out)
}

/// Averaged Hann-windowed periodogram with 50% segment overlap.
///
/// `rbw` maps to the segment length (`n ≈ fs/rbw`) and `averages` to the
/// number of segments. Normalization is QNL-relative: white noise of
/// variance `V` reads `V` at every bin.
pub fn estimate_psd(series: &TimeSeries, rbw: f64, averages: usize) -> Result<SpectrumEstimate> {
    let n = segment_len(series.sample_rate, rbw)?;
    let window = hann_window(n);
    let sumw2: f64 = window.iter().map(|w| w * w).sum();
    let segs = windowed_segments(series, n, averages, &window)?;
    let half = n / 2;
    let mut psd = vec![0.0f64; half + 1];
    for seg in &segs {
        for k in 0..=half {
            psd[k] += seg[k].norm_sqr();
        }
    }
    for v in psd.iter_mut() {
        *v /= sumw2 * averages as f64;
    }
    let frequencies = (0..=half).map(|k| k as f64 * series.sample_rate / n as f64).collect();
    Ok(SpectrumEstimate { frequencies, psd, rbw: series.sample_rate / n as f64, averages })
}

/// Cross-spectrum S_io(ω) = ⟨conj(In(ω))·Out(ω)⟩ on the same grid and with
/// the same normalization as [`estimate_psd`].
pub fn estimate_cross_psd(
    input: &TimeSeries,
    output: &TimeSeries,
    rbw: f64,
    averages: usize,
) -> Result<CrossSpectrumEstimate> {
    if input.sample_rate != output.sample_rate {
        return Err(Error::SampleRateMismatch { a: input.sample_rate, b: output.sample_rate });
    }
    let n = segment_len(input.sample_rate, rbw)?;
    let window = hann_window(n);
    let sumw2: f64 = window.iter().map(|w| w * w).sum();
    let in_segs = windowed_segments(input, n, averages, &window)?;
    let out_segs = windowed_segments(output, n, averages, &window)?;
    let half = n / 2;
    let mut values = vec![Complex64::new(0.0, 0.0); half + 1];
    for (i_seg, o_seg) in in_segs.iter().zip(&out_segs) {
        for k in 0..=half {
            values[k] += i_seg[k].conj() * o_seg[k];
        }
    }
    for v in values.iter_mut() {
        *v /= sumw2 * averages as f64;
    }
    let frequencies = (0..=half).map(|k| k as f64 * input.sample_rate / n as f64).collect();
    Ok(CrossSpectrumEstimate {
        frequencies,
        values,
        rbw: input.sample_rate / n as f64,
        averages,
    })
}
