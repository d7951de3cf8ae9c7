//! Scenario configuration, execution, and table emission.
//!
//! A scenario is a TOML file naming a medium (or several, for side-by-side
//! sweeps), an excess-noise injection, a frequency grid, and an analysis
//! kind. Running one writes plot-ready CSV curves plus a manifest that
//! echoes the fully resolved configuration; the manifest re-parses as a
//! scenario, and identical seeds give byte-identical outputs.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::channel::{qnl_db, NoiseInjection, Quadrature};
use crate::error::{Error, Result};
use crate::fit::{self, FitModel, FitParameterKind, FitPoint, FitProblem, FreeParameter};
use crate::medium::EitParameters;
use crate::metrics::{
    benchmark_beamsplitter, conditional_variance_analytic, conditional_variance_empirical,
    signal_transfer, signal_transfer_model, snr_from_spectrum, MetricCurve, MetricKind,
};
use crate::synth::{
    correlation_fwhm, cross_correlate, estimate_cross_psd, estimate_delay, estimate_psd,
    filter_through_channel, synth_bandlimited_noise, synth_vacuum, CrossSpectrumEstimate,
    SpectrumEstimate,
};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    SweepCv,
    SweepTs,
    DelayExperiment,
    Fit,
    Correlation,
}

/// One medium block with a display label (for example a cell temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    #[serde(default = "default_label")]
    pub label: String,
    pub optical_depth_rate: f64,
    /// Spontaneous emission rate γ/2π in Hz.
    pub spontaneous_rate_hz: f64,
    /// Ground-state dephasing γ₀/2π in Hz.
    pub dephasing_rate_hz: f64,
    /// Pump Rabi frequency |gE_c|/2π in Hz.
    pub pump_rabi_hz: f64,
    pub wavenumber_per_m: f64,
    pub length_m: f64,
    #[serde(default = "default_light_speed")]
    pub light_speed_m_per_s: f64,
}

fn default_label() -> String {
    "medium".into()
}

fn default_light_speed() -> f64 {
    crate::medium::SPEED_OF_LIGHT
}

impl MediumConfig {
    pub fn to_parameters(&self) -> Result<EitParameters> {
        EitParameters::new(
            self.optical_depth_rate,
            TAU * self.spontaneous_rate_hz,
            TAU * self.dephasing_rate_hz,
            TAU * self.pump_rabi_hz,
            self.wavenumber_per_m,
            self.length_m,
            self.light_speed_m_per_s,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn frequencies_hz(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start_hz];
        }
        (0..self.points)
            .map(|i| {
                self.start_hz
                    + (self.stop_hz - self.start_hz) * i as f64 / (self.points - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rbw")]
    pub rbw_hz: f64,
    #[serde(default = "default_averages")]
    pub averages: usize,
    /// Run the time-domain Monte Carlo alongside the analytic sweep.
    #[serde(default)]
    pub empirical: bool,
}

fn default_trials() -> u64 {
    1
}
fn default_seed() -> u64 {
    1
}
fn default_sample_rate() -> f64 {
    4e6
}
fn default_duration() -> f64 {
    1.0
}
fn default_rbw() -> f64 {
    1e3
}
fn default_averages() -> usize {
    10
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            trials: default_trials(),
            seed: default_seed(),
            sample_rate_hz: default_sample_rate(),
            duration_s: default_duration(),
            rbw_hz: default_rbw(),
            averages: default_averages(),
            empirical: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationConfig {
    /// Band-limited noise modulation bandwidth in Hz.
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    /// Flat-band PSD of the noise modulation, QNL-relative.
    #[serde(default = "default_psd_level")]
    pub psd_level: f64,
    /// Modulation tone frequencies in Hz (for signal-transfer sweeps, and
    /// for reproducing injected laser-locking tones).
    #[serde(default)]
    pub tones_hz: Vec<f64>,
    #[serde(default = "default_tone_amplitude")]
    pub tone_amplitude: f64,
    /// Half-window of the emitted correlation curve in seconds.
    #[serde(default = "default_correlation_window")]
    pub correlation_window_s: f64,
}

fn default_bandwidth() -> f64 {
    60e3
}
fn default_psd_level() -> f64 {
    100.0
}
fn default_tone_amplitude() -> f64 {
    1.0
}
fn default_correlation_window() -> f64 {
    5e-5
}

impl Default for ModulationConfig {
    fn default() -> Self {
        ModulationConfig {
            bandwidth_hz: default_bandwidth(),
            psd_level: default_psd_level(),
            tones_hz: Vec::new(),
            tone_amplitude: default_tone_amplitude(),
            correlation_window_s: default_correlation_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParameterConfig {
    pub kind: FitParameterKind,
    /// Initial guess, lower and upper bound. Rates are in Hz; the
    /// composite optical depth rate is taken as-is.
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFitData {
    /// True dephasing rate in Hz used to generate the data.
    pub dephasing_rate_hz: f64,
    /// Relative Gaussian measurement noise (0 for noiseless).
    #[serde(default)]
    pub noise_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_fit_model")]
    pub model: FitModel,
    /// CSV file with columns freq_hz,value[,sigma]; mutually exclusive with
    /// `synthetic`.
    #[serde(default)]
    pub data_csv: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticFitData>,
    pub free: Vec<FreeParameterConfig>,
}

fn default_fit_model() -> FitModel {
    FitModel::BenchmarkConditionalVariance
}

fn default_quadrature() -> Quadrature {
    Quadrature::Amplitude
}

fn injection_none() -> NoiseInjection {
    NoiseInjection::none()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kind: AnalysisKind,
    #[serde(default = "default_quadrature")]
    pub quadrature: Quadrature,
    #[serde(rename = "medium")]
    pub media: Vec<MediumConfig>,
    #[serde(default = "injection_none")]
    pub injection: NoiseInjection,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub modulation: ModulationConfig,
    #[serde(default)]
    pub fit: Option<FitConfig>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("scenario name must not be empty".into()));
        }
        if self.media.is_empty() {
            return Err(Error::Config("at least one [[medium]] block is required".into()));
        }
        for m in &self.media {
            m.to_parameters().map_err(|e| Error::Config(format!("medium `{}`: {e}", m.label)))?;
        }
        self.injection.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(grid) = &self.grid {
            if grid.points == 0 {
                return Err(Error::Config("frequency grid must not be empty".into()));
            }
            if grid.points > 1 && !(grid.stop_hz > grid.start_hz) {
                return Err(Error::Config("frequency grid must be monotone increasing".into()));
            }
            if !(grid.start_hz >= 0.0) {
                return Err(Error::Config("grid start must be >= 0".into()));
            }
        }
        if self.monte_carlo.trials == 0 {
            return Err(Error::Config("monte_carlo.trials must be >= 1".into()));
        }
        match self.kind {
            AnalysisKind::SweepCv | AnalysisKind::SweepTs => {
                if self.grid.is_none() {
                    return Err(Error::Config("sweep scenarios require a [grid] block".into()));
                }
            }
            AnalysisKind::Fit => {
                let f = self
                    .fit
                    .as_ref()
                    .ok_or_else(|| Error::Config("fit scenarios require a [fit] block".into()))?;
                if f.free.is_empty() {
                    return Err(Error::Config("fit requires at least one free parameter".into()));
                }
                if f.data_csv.is_none() && f.synthetic.is_none() {
                    return Err(Error::Config(
                        "fit requires either data_csv or a [fit.synthetic] block".into(),
                    ));
                }
                if f.synthetic.is_some() && self.grid.is_none() {
                    return Err(Error::Config("synthetic fit data requires a [grid] block".into()));
                }
            }
            AnalysisKind::DelayExperiment | AnalysisKind::Correlation => {
                if !(self.modulation.bandwidth_hz > 0.0
                    && self.modulation.bandwidth_hz < self.monte_carlo.sample_rate_hz / 2.0)
                {
                    return Err(Error::Config(
                        "modulation bandwidth must lie below the Monte-Carlo Nyquist".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Everything a scenario run produced, alongside the files written.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub curves: Vec<MetricCurve>,
    /// Scalar results echoed into the manifest.
    pub results: BTreeMap<String, f64>,
    /// File names written inside the output directory.
    pub files: Vec<String>,
    pub manifest_path: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn derived_seed(base: u64, stream: u64) -> u64 {
    base.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(stream)
}

/// Coherent-probe Monte Carlo through one medium: returns input, output and
/// cross spectra with `averages × trials` effective averages.
pub fn monte_carlo_spectra(
    params: &EitParameters,
    injection: &NoiseInjection,
    quadrature: Quadrature,
    mc: &MonteCarloConfig,
    tones_hz: &[f64],
    tone_amplitude: f64,
) -> Result<(SpectrumEstimate, SpectrumEstimate, CrossSpectrumEstimate)> {
    let mut s_in: Option<SpectrumEstimate> = None;
    let mut s_out: Option<SpectrumEstimate> = None;
    let mut s_cross: Option<CrossSpectrumEstimate> = None;
    for trial in 0..mc.trials {
        let seed_in = derived_seed(mc.seed, 2 * trial);
        let seed_ch = derived_seed(mc.seed, 2 * trial + 1);
        let mut input = synth_vacuum(mc.sample_rate_hz, mc.duration_s, seed_in)?;
        for &f in tones_hz {
            input.add_tone(f, tone_amplitude, 0.0);
        }
        let output = filter_through_channel(&input, params, injection, quadrature, seed_ch)?;
        let si = estimate_psd(&input, mc.rbw_hz, mc.averages)?;
        let so = estimate_psd(&output, mc.rbw_hz, mc.averages)?;
        let sc = estimate_cross_psd(&input, &output, mc.rbw_hz, mc.averages)?;
        match (&mut s_in, &mut s_out, &mut s_cross) {
            (Some(a), Some(b), Some(c)) => {
                for (acc, v) in a.psd.iter_mut().zip(&si.psd) {
                    *acc += v;
                }
                for (acc, v) in b.psd.iter_mut().zip(&so.psd) {
                    *acc += v;
                }
                for (acc, v) in c.values.iter_mut().zip(&sc.values) {
                    *acc += v;
                }
            }
            _ => {
                s_in = Some(si);
                s_out = Some(so);
                s_cross = Some(sc);
            }
        }
    }
    let scale = 1.0 / mc.trials as f64;
    let mut s_in = s_in.expect("trials >= 1");
    let mut s_out = s_out.expect("trials >= 1");
    let mut s_cross = s_cross.expect("trials >= 1");
    for v in s_in.psd.iter_mut() {
        *v *= scale;
    }
    for v in s_out.psd.iter_mut() {
        *v *= scale;
    }
    for v in s_cross.values.iter_mut() {
        *v *= scale;
    }
    let eff = mc.averages * mc.trials as usize;
    s_in.averages = eff;
    s_out.averages = eff;
    s_cross.averages = eff;
    Ok((s_in, s_out, s_cross))
}

fn sweep_curves(
    scenario: &Scenario,
    medium: &MediumConfig,
    results: &mut BTreeMap<String, f64>,
) -> Result<Vec<(String, MetricCurve)>> {
    let params = medium.to_parameters()?;
    let grid = scenario.grid.as_ref().expect("validated");
    let freqs = grid.frequencies_hz();
    let quad = scenario.quadrature;
    let inj = &scenario.injection;
    let mut out = Vec::new();

    let mut bench = Vec::with_capacity(freqs.len());
    let mut model = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let r = params.response(TAU * f)?;
        let (v_limit, t_limit) = benchmark_beamsplitter(&r);
        match scenario.kind {
            AnalysisKind::SweepCv => {
                bench.push(v_limit);
                model.push(conditional_variance_analytic(&r, inj, quad, 1.0)?);
            }
            AnalysisKind::SweepTs => {
                bench.push(t_limit);
                model.push(signal_transfer_model(&r, inj, quad, 1.0)?);
            }
            _ => unreachable!("sweep_curves only runs for sweeps"),
        }
    }
    let (bench_kind, model_kind) = match scenario.kind {
        AnalysisKind::SweepCv => {
            (MetricKind::BenchmarkConditionalVariance, MetricKind::ConditionalVariance)
        }
        _ => (MetricKind::BenchmarkSignalTransfer, MetricKind::SignalTransfer),
    };
    out.push((
        format!("{}.benchmark", medium.label),
        MetricCurve::new(freqs.clone(), bench, bench_kind, quad),
    ));
    out.push((
        format!("{}.analytic", medium.label),
        MetricCurve::new(freqs.clone(), model, model_kind, quad),
    ));

    if scenario.monte_carlo.empirical {
        match scenario.kind {
            AnalysisKind::SweepCv => {
                let (s_in, s_out, s_cross) = monte_carlo_spectra(
                    &params,
                    inj,
                    quad,
                    &scenario.monte_carlo,
                    &[],
                    0.0,
                )?;
                let mut curve = conditional_variance_empirical(&s_in, &s_out, &s_cross, quad)?;
                // Restrict the empirical curve to the configured sweep range.
                let keep: Vec<usize> = curve
                    .frequencies_hz
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| **f >= freqs[0] && **f <= freqs[freqs.len() - 1])
                    .map(|(i, _)| i)
                    .collect();
                curve = MetricCurve {
                    frequencies_hz: keep.iter().map(|&i| curve.frequencies_hz[i]).collect(),
                    values: keep.iter().map(|&i| curve.values[i]).collect(),
                    gain: curve.gain.map(|g| keep.iter().map(|&i| g[i]).collect()),
                    delay_s: curve.delay_s.map(|d| keep.iter().map(|&i| d[i]).collect()),
                    ..curve
                };
                out.push((format!("{}.empirical", medium.label), curve));
            }
            AnalysisKind::SweepTs => {
                let tones = if scenario.modulation.tones_hz.is_empty() {
                    // Default comb: 10 tones spread across the sweep range.
                    (1..=10)
                        .map(|i| {
                            freqs[0] + (freqs[freqs.len() - 1] - freqs[0]) * i as f64 / 11.0
                        })
                        .collect()
                } else {
                    scenario.modulation.tones_hz.clone()
                };
                let (s_in, s_out, _) = monte_carlo_spectra(
                    &params,
                    inj,
                    quad,
                    &scenario.monte_carlo,
                    &tones,
                    scenario.modulation.tone_amplitude,
                )?;
                let mut values = Vec::with_capacity(tones.len());
                for &f in &tones {
                    let snr_in = snr_from_spectrum(&s_in, f)?;
                    let snr_out = snr_from_spectrum(&s_out, f)?;
                    values.push(signal_transfer(snr_in, snr_out)?);
                }
                out.push((
                    format!("{}.empirical", medium.label),
                    MetricCurve::new(tones, values, MetricKind::SignalTransfer, quad),
                ));
            }
            _ => {}
        }
    }

    results.insert(
        format!("{}.eta_at_grid_start", medium.label),
        params
            .response(TAU * freqs[0])?
            .intensity_transmissivity,
    );
    results.insert(
        format!("{}.group_delay_dc_s", medium.label),
        params.group_delay(0.0)?,
    );
    Ok(out)
}

fn run_correlation(
    scenario: &Scenario,
    out_dir: &Path,
    results: &mut BTreeMap<String, f64>,
    files: &mut Vec<String>,
) -> Result<()> {
    let medium = &scenario.media[0];
    let params = medium.to_parameters()?;
    let mc = &scenario.monte_carlo;
    let m = &scenario.modulation;
    let reference = synth_bandlimited_noise(
        m.bandwidth_hz,
        m.psd_level,
        mc.sample_rate_hz,
        mc.duration_s,
        derived_seed(mc.seed, 0),
    )?;
    let output = filter_through_channel(
        &reference,
        &params,
        &scenario.injection,
        scenario.quadrature,
        derived_seed(mc.seed, 1),
    )?;
    let (lags, auto) = cross_correlate(&reference, &reference)?;
    let (_, cross) = cross_correlate(&reference, &output)?;
    let delay = estimate_delay(&reference, &output)?;

    results.insert("delay_estimate_s".into(), delay);
    results.insert("predicted_group_delay_dc_s".into(), params.group_delay(0.0)?);
    results.insert("sample_period_s".into(), 1.0 / mc.sample_rate_hz);
    if let Some(w) = correlation_fwhm(&lags, &auto) {
        results.insert("auto_fwhm_s".into(), w);
    }
    if let Some(w) = correlation_fwhm(&lags, &cross) {
        results.insert("cross_fwhm_s".into(), w);
    }

    // Emit only the window around zero lag; full records are huge.
    let mut csv = String::from("lag_s,autocorr,crosscorr\n");
    for ((&lag, &a), &c) in lags.iter().zip(&auto).zip(&cross) {
        if lag.abs() <= m.correlation_window_s {
            csv.push_str(&format!("{lag},{a},{c}\n"));
        }
    }
    let name = format!("{}.correlation.csv", scenario.name);
    write_atomic(&out_dir.join(&name), csv.as_bytes())?;
    files.push(name);
    Ok(())
}

fn run_fit(
    scenario: &Scenario,
    out_dir: &Path,
    results: &mut BTreeMap<String, f64>,
    files: &mut Vec<String>,
) -> Result<()> {
    let cfg = scenario.fit.as_ref().expect("validated");
    let medium = &scenario.media[0];
    let base = medium.to_parameters()?;

    let data: Vec<FitPoint> = if let Some(path) = &cfg.data_csv {
        fit::read_data_csv(Path::new(path))?
    } else {
        let synth = cfg.synthetic.as_ref().expect("validated");
        let truth = MediumConfig {
            dephasing_rate_hz: synth.dephasing_rate_hz,
            ..medium.clone()
        }
        .to_parameters()?;
        let freqs = scenario.grid.as_ref().expect("validated").frequencies_hz();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.monte_carlo.seed);
        freqs
            .iter()
            .map(|&f| {
                let omega = TAU * f;
                let clean = match cfg.model {
                    FitModel::BenchmarkConditionalVariance => {
                        1.0 - truth.response(omega)?.intensity_transmissivity
                    }
                    FitModel::Transmissivity => truth.response(omega)?.intensity_transmissivity,
                };
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                let value = clean * (1.0 + synth.noise_fraction * noise);
                let sigma = if synth.noise_fraction > 0.0 {
                    (synth.noise_fraction * clean.abs()).max(1e-9)
                } else {
                    1.0
                };
                Ok(FitPoint { omega, value, sigma })
            })
            .collect::<Result<_>>()?
    };

    let free: Vec<FreeParameter> = cfg
        .free
        .iter()
        .map(|p| {
            let scale = match p.kind {
                FitParameterKind::DephasingRate | FitParameterKind::PumpRabi => TAU,
                FitParameterKind::OpticalDepthRate => 1.0,
            };
            FreeParameter {
                kind: p.kind,
                initial: scale * p.initial,
                lower: scale * p.lower,
                upper: scale * p.upper,
            }
        })
        .collect();

    let problem = FitProblem { data: data.clone(), model: cfg.model, base, free };
    let result = fit::fit(&problem)?;

    for ((p, &v), &u) in cfg.free.iter().zip(&result.values).zip(&result.uncertainties) {
        let scale = match p.kind {
            FitParameterKind::DephasingRate | FitParameterKind::PumpRabi => TAU,
            FitParameterKind::OpticalDepthRate => 1.0,
        };
        results.insert(format!("fitted.{}", p.kind), v / scale);
        results.insert(format!("fitted.{}.sigma", p.kind), u / scale);
    }
    results.insert("fit.residual_norm".into(), result.residual_norm);
    results.insert("fit.iterations".into(), result.iterations as f64);

    let mut csv = String::from("freq_hz,value,sigma,model\n");
    for d in &data {
        let m = problem.model_value(&result.values, d.omega)?;
        csv.push_str(&format!("{},{},{},{m}\n", d.omega / TAU, d.value, d.sigma));
    }
    let name = format!("{}.fit.csv", scenario.name);
    write_atomic(&out_dir.join(&name), csv.as_bytes())?;
    files.push(name);
    Ok(())
}

/// Execute a scenario and write its outputs (curves plus manifest) into
/// `out_dir`. Deterministic for a fixed seed.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<ScenarioReport> {
    scenario.validate()?;
    std::fs::create_dir_all(out_dir)?;
    // Probe writability before doing any computation.
    let probe = out_dir.join(format!(".{}.probe", scenario.name));
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;
    if let Some(fit_cfg) = &scenario.fit {
        if let Some(csv) = &fit_cfg.data_csv {
            if !Path::new(csv).exists() {
                return Err(Error::Config(format!("fit data file not found: {csv}")));
            }
        }
    }

    let mut results = BTreeMap::new();
    let mut curves = Vec::new();
    let mut files = Vec::new();
    results.insert("seed".into(), scenario.monte_carlo.seed as f64);

    match scenario.kind {
        AnalysisKind::SweepCv | AnalysisKind::SweepTs => {
            results.insert(
                "injection.excess_amp_db".into(),
                qnl_db(1.0 + scenario.injection.added_variance(Quadrature::Amplitude)),
            );
            results.insert(
                "injection.excess_phase_db".into(),
                qnl_db(1.0 + scenario.injection.added_variance(Quadrature::Phase)),
            );
            for medium in &scenario.media {
                for (tag, curve) in sweep_curves(scenario, medium, &mut results)? {
                    let name = format!("{}.{tag}.csv", scenario.name);
                    let mut buf = Vec::new();
                    curve.write_csv_to(&mut buf)?;
                    write_atomic(&out_dir.join(&name), &buf)?;
                    files.push(name);
                    curves.push(curve);
                }
            }
        }
        AnalysisKind::DelayExperiment | AnalysisKind::Correlation => {
            run_correlation(scenario, out_dir, &mut results, &mut files)?;
        }
        AnalysisKind::Fit => {
            run_fit(scenario, out_dir, &mut results, &mut files)?;
        }
    }

    let manifest_name = format!("{}.manifest.toml", scenario.name);
    let manifest_path = out_dir.join(&manifest_name);
    let manifest = render_manifest(scenario, &results, &files)?;
    write_atomic(&manifest_path, manifest.as_bytes())?;
    files.push(manifest_name);

    Ok(ScenarioReport { scenario: scenario.clone(), curves, results, files, manifest_path })
}

/// The manifest is the fully resolved scenario plus a `[results]` table; it
/// re-parses as a scenario (unknown tables are ignored by the parser).
pub fn render_manifest(
    scenario: &Scenario,
    results: &BTreeMap<String, f64>,
    files: &[String],
) -> Result<String> {
    let mut table = toml::Table::try_from(scenario).map_err(|e| Error::Config(e.to_string()))?;
    let mut results_table = toml::Table::new();
    for (k, v) in results {
        results_table.insert(k.clone(), toml::Value::Float(*v));
    }
    table.insert("results".into(), toml::Value::Table(results_table));
    table.insert(
        "outputs".into(),
        toml::Value::Array(files.iter().map(|f| toml::Value::String(f.clone())).collect()),
    );
    toml::to_string_pretty(&table).map_err(|e| Error::Config(e.to_string()))
}

macro_rules! bundled {
    ($($name:literal => $file:literal),* $(,)?) => {
        /// Names and TOML sources of the bundled scenarios.
        pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../scenarios/", $file)))),*
        ];
    };
}

bundled! {
    "fig1c_correlation" => "fig1c_correlation.toml",
    "fig2_cv_vs_freq" => "fig2_cv_vs_freq.toml",
    "fig3_cv_sweep" => "fig3_cv_sweep.toml",
    "fig4_signal_transfer" => "fig4_signal_transfer.toml",
    "pump_coupling_budget" => "pump_coupling_budget.toml",
    "fit_gamma0" => "fit_gamma0.toml",
}

/// Look up a bundled scenario by name.
pub fn bundled_scenario(name: &str) -> Option<Result<Scenario>> {
    BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml(text))
}
