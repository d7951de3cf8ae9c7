//! Recovery of medium parameters (principally the ground-state dephasing
//! rate γ₀) by weighted nonlinear least squares against benchmark curves.
//!
//! The optimizer is a Levenberg-Marquardt damped Gauss-Newton with a
//! central-difference numeric Jacobian; the problem is smooth and at most a
//! few parameters wide, so nothing heavier is warranted.

use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::medium::EitParameters;

/// Relative step for the central-difference Jacobian.
const JACOBIAN_REL_STEP: f64 = 1e-6;
/// Both the relative step and the relative cost change must drop below this
/// for convergence.
const CONVERGENCE_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;

/// Which medium parameter a free fit variable maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameterKind {
    /// Ground-state dephasing γ₀ (rad/s).
    DephasingRate,
    /// Composite N|g|².
    OpticalDepthRate,
    /// Pump Rabi frequency |gE_c| (rad/s).
    PumpRabi,
}

impl std::fmt::Display for FitParameterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitParameterKind::DephasingRate => write!(f, "dephasing_rate"),
            FitParameterKind::OpticalDepthRate => write!(f, "optical_depth_rate"),
            FitParameterKind::PumpRabi => write!(f, "pump_rabi"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParameter {
    pub kind: FitParameterKind,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
}

/// One measured point: sideband frequency, metric value, and uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitPoint {
    /// Sideband frequency ω (rad/s).
    pub omega: f64,
    pub value: f64,
    /// 1-sigma uncertainty; defaults to 1 (unweighted) when not supplied.
    pub sigma: f64,
}

/// Which model curve the data follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// Passive-loss conditional variance limit, 1 − η(ω).
    BenchmarkConditionalVariance,
    /// Transmissivity η(ω).
    Transmissivity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub data: Vec<FitPoint>,
    pub model: FitModel,
    /// Fixed parameter values; free entries are overwritten during the fit.
    pub base: EitParameters,
    pub free: Vec<FreeParameter>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Medium parameters at the optimum.
    pub params: EitParameters,
    /// Optimal values of the free parameters, in `free` order.
    pub values: Vec<f64>,
    /// 1-sigma uncertainties from the Jacobian at the optimum.
    pub uncertainties: Vec<f64>,
    /// Weighted residual norm sqrt(sum r^2) at the optimum.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::InvalidParameter("no free parameters".into()));
        }
        if self.data.len() < 2 * self.free.len() {
            return Err(Error::InvalidParameter(format!(
                "need at least {} data points for {} free parameters, have {}",
                2 * self.free.len(),
                self.free.len(),
                self.data.len()
            )));
        }
        for p in &self.free {
            if !(p.lower <= p.initial && p.initial <= p.upper) {
                return Err(Error::InvalidParameter(format!(
                    "initial guess for {} outside bounds",
                    p.kind
                )));
            }
            let must_be_positive = matches!(p.kind, FitParameterKind::PumpRabi);
            if p.lower < 0.0 || (must_be_positive && p.lower <= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "bounds for {} violate medium invariants",
                    p.kind
                )));
            }
        }
        for d in &self.data {
            if !(d.sigma > 0.0) {
                return Err(Error::InvalidParameter("data sigmas must be > 0".into()));
            }
        }
        self.base.validate()
    }

    fn with_values(&self, values: &[f64]) -> EitParameters {
        let mut p = self.base.clone();
        for (fp, &v) in self.free.iter().zip(values) {
            match fp.kind {
                FitParameterKind::DephasingRate => p.dephasing_rate = v,
                FitParameterKind::OpticalDepthRate => p.optical_depth_rate = v,
                FitParameterKind::PumpRabi => p.pump_rabi = v,
            }
        }
        p
    }

    /// Model value at ω for the given free-parameter values.
    pub fn model_value(&self, values: &[f64], omega: f64) -> Result<f64> {
        let p = self.with_values(values);
        let eta = p.response(omega)?.intensity_transmissivity;
        Ok(match self.model {
            FitModel::BenchmarkConditionalVariance => 1.0 - eta,
            FitModel::Transmissivity => eta,
        })
    }

    fn residuals(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.data
            .iter()
            .map(|d| Ok((self.model_value(values, d.omega)? - d.value) / d.sigma))
            .collect()
    }
}

fn cost(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum()
}

/// Solve `a x = b` for a small symmetric system by Gaussian elimination with
/// partial pivoting. Returns None when the matrix is numerically singular.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

fn jacobian(problem: &FitProblem, values: &[f64], scales: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = problem.data.len();
    let n = values.len();
    let mut jac = vec![vec![0.0; n]; m];
    for j in 0..n {
        let h = JACOBIAN_REL_STEP * values[j].abs().max(scales[j]);
        let mut lo = values.to_vec();
        let mut hi = values.to_vec();
        lo[j] = (values[j] - h).max(problem.free[j].lower);
        hi[j] = (values[j] + h).min(problem.free[j].upper);
        let spread = hi[j] - lo[j];
        if spread <= 0.0 {
            continue;
        }
        let r_lo = problem.residuals(&lo)?;
        let r_hi = problem.residuals(&hi)?;
        for i in 0..m {
            jac[i][j] = (r_hi[i] - r_lo[i]) / spread;
        }
    }
    Ok(jac)
}

fn normal_matrix(jac: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = jac.first().map_or(0, |r| r.len());
    let mut jtj = vec![vec![0.0; n]; n];
    for row in jac {
        for a in 0..n {
            for b in 0..n {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    jtj
}

/// Weighted nonlinear least squares over the free parameters.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    let n = problem.free.len();
    let scales: Vec<f64> = problem
        .free
        .iter()
        .map(|p| p.initial.abs().max((p.upper - p.lower).abs() * 1e-3).max(1e-30))
        .collect();
    let mut values: Vec<f64> = problem.free.iter().map(|p| p.initial).collect();
    let mut res = problem.residuals(&values)?;
    let mut current_cost = cost(&res);
    let mut lambda = 1e-3;
    let mut trace = vec![(0usize, current_cost)];

    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        if current_cost == 0.0 {
            converged = true;
            break;
        }
        let jac = jacobian(problem, &values, &scales)?;
        let jtj = normal_matrix(&jac);
        let mut grad = vec![0.0; n];
        for (row, &r) in jac.iter().zip(&res) {
            for j in 0..n {
                grad[j] -= row[j] * r;
            }
        }
        let diag_max = (0..n).map(|j| jtj[j][j]).fold(0.0f64, f64::max);
        if diag_max <= 0.0 {
            let worst = problem.free[0].kind;
            return Err(Error::DegenerateFit { parameter: worst.to_string() });
        }
        if let Some(j_dead) = (0..n).find(|&j| jtj[j][j] < 1e-28 * diag_max) {
            return Err(Error::DegenerateFit {
                parameter: problem.free[j_dead].kind.to_string(),
            });
        }

        let mut improved = false;
        let mut step_rel = 0.0;
        let mut cost_change_rel = 0.0;
        for _ in 0..20 {
            let mut damped = jtj.clone();
            for j in 0..n {
                damped[j][j] += lambda * jtj[j][j];
            }
            let Some(delta) = solve_small(damped, grad.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = values
                .iter()
                .zip(&delta)
                .zip(&problem.free)
                .map(|((&v, &d), p)| (v + d).clamp(p.lower, p.upper))
                .collect();
            let trial_res = problem.residuals(&trial)?;
            let trial_cost = cost(&trial_res);
            if trial_cost <= current_cost {
                step_rel = values
                    .iter()
                    .zip(&trial)
                    .zip(&scales)
                    .map(|((&a, &b), &s)| (b - a).abs() / a.abs().max(s))
                    .fold(0.0f64, f64::max);
                cost_change_rel = (current_cost - trial_cost) / current_cost.max(1e-300);
                values = trial;
                res = trial_res;
                current_cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        trace.push((iter, current_cost));
        if improved && step_rel < CONVERGENCE_TOL && cost_change_rel < CONVERGENCE_TOL {
            converged = true;
            break;
        }
        if !improved {
            // Damping exhausted without progress: treat as a stationary point.
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            final_cost: current_cost,
            trace,
        });
    }

    // Covariance from the (undamped) normal matrix at the optimum.
    let jac = jacobian(problem, &values, &scales)?;
    let jtj = normal_matrix(&jac);
    let mut uncertainties = vec![f64::INFINITY; n];
    for j in 0..n {
        let mut unit = vec![0.0; n];
        unit[j] = 1.0;
        if let Some(col) = solve_small(jtj.clone(), unit) {
            if col[j] >= 0.0 {
                uncertainties[j] = col[j].sqrt();
            }
        }
    }

    Ok(FitResult {
        params: problem.with_values(&values),
        values,
        uncertainties,
        residual_norm: current_cost.sqrt(),
        iterations,
    })
}

/// Read fit data from CSV with columns `freq_hz,value[,sigma]`; frequencies
/// are converted to rad/s and a missing sigma column defaults to 1.
pub fn read_data_csv(path: &Path) -> Result<Vec<FitPoint>> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut points = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Format(format!("line {}: need freq_hz,value", lineno + 1)));
        }
        let freq_hz: f64 = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad freq_hz", lineno + 1)))?;
        let value: f64 = fields[1]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad value", lineno + 1)))?;
        let sigma: f64 = match fields.get(2) {
            Some(s) if !s.is_empty() => s
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad sigma", lineno + 1)))?,
            _ => 1.0,
        };
        points.push(FitPoint { omega: std::f64::consts::TAU * freq_hz, value, sigma });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const TAU: f64 = std::f64::consts::TAU;

    fn base_params(gamma0: f64) -> EitParameters {
        EitParameters::new(5e15, TAU * 3e6, gamma0, TAU * 1e6, 7.9e6, 0.075, 3e8).unwrap()
    }

    fn benchmark_points(truth: &EitParameters, sigma: f64) -> Vec<FitPoint> {
        (1..=60)
            .map(|i| {
                let omega = TAU * 10e3 * i as f64;
                FitPoint {
                    omega,
                    value: 1.0 - truth.response(omega).unwrap().intensity_transmissivity,
                    sigma,
                }
            })
            .collect()
    }

    fn gamma0_problem(truth_gamma0: f64, init: f64, sigma: f64) -> FitProblem {
        FitProblem {
            data: benchmark_points(&base_params(truth_gamma0), sigma),
            model: FitModel::BenchmarkConditionalVariance,
            base: base_params(0.0),
            free: vec![FreeParameter {
                kind: FitParameterKind::DephasingRate,
                initial: init,
                lower: 0.0,
                upper: TAU * 100e3,
            }],
        }
    }

    #[test]
    fn noiseless_gamma0_recovery() {
        let truth = TAU * 4e3;
        let result = fit(&gamma0_problem(truth, TAU * 1e3, 1.0)).unwrap();
        assert_relative_eq!(result.values[0], truth, max_relative = 1e-3);
        assert!(result.residual_norm < 1e-8);
    }

    #[test]
    fn noisy_gamma0_recovery() {
        let truth = TAU * 3.5e3;
        let mut problem = gamma0_problem(truth, TAU * 1e3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for p in problem.data.iter_mut() {
            let noise: f64 = rng.sample(StandardNormal);
            p.value *= 1.0 + 0.02 * noise;
            p.sigma = 0.02 * p.value.abs().max(1e-6);
        }
        let result = fit(&problem).unwrap();
        assert_relative_eq!(result.values[0], truth, max_relative = 0.10);
    }

    #[test]
    fn exact_zero_dephasing_lands_on_bound() {
        let result = fit(&gamma0_problem(0.0, TAU * 2e3, 1.0)).unwrap();
        assert!(result.values[0].abs() < 1e-6 * TAU * 1e3);
        assert!(result.residual_norm < 1e-10);
    }

    #[test]
    fn generate_then_fit_closure_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let truth = TAU * rng.gen_range(500.0..20e3);
            let init = TAU * rng.gen_range(100.0..50e3);
            let result = fit(&gamma0_problem(truth, init, 1.0)).unwrap();
            assert_relative_eq!(result.values[0], truth, max_relative = 5e-3);
        }
    }

    #[test]
    fn result_invariant_under_data_reordering() {
        let mut problem = gamma0_problem(TAU * 4e3, TAU * 1e3, 1.0);
        let a = fit(&problem).unwrap();
        problem.data.reverse();
        let b = fit(&problem).unwrap();
        assert_relative_eq!(a.values[0], b.values[0], max_relative = 1e-9);
    }

    #[test]
    fn residual_never_worse_than_initial_guess() {
        let problem = gamma0_problem(TAU * 4e3, TAU * 30e3, 1.0);
        let init_res: f64 = problem
            .residuals(&[TAU * 30e3])
            .unwrap()
            .iter()
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt();
        let result = fit(&problem).unwrap();
        assert!(result.residual_norm <= init_res);
    }

    #[test]
    fn too_few_points_rejected() {
        let mut problem = gamma0_problem(TAU * 4e3, TAU * 1e3, 1.0);
        problem.data.truncate(1);
        assert!(fit(&problem).is_err());
    }

    #[test]
    fn uncertainty_scales_with_noise() {
        let clean = fit(&gamma0_problem(TAU * 4e3, TAU * 1e3, 1e-4)).unwrap();
        let noisy = fit(&gamma0_problem(TAU * 4e3, TAU * 1e3, 1e-2)).unwrap();
        assert!(noisy.uncertainties[0] > 10.0 * clean.uncertainties[0]);
    }

    #[test]
    fn csv_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "freq_hz,value,sigma\n1000,0.5,0.01\n2000,0.6\n").unwrap();
        let pts = read_data_csv(&path).unwrap();
        assert_eq!(pts.len(), 2);
        assert_relative_eq!(pts[0].omega, TAU * 1000.0);
        assert_eq!(pts[1].sigma, 1.0);
    }
}
