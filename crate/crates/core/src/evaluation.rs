//! Effective prediction time: how long a recovered system shadows the
//! true one.
//!
//! Both systems are rolled out side by side with RK4 from a shared state
//! (reached by integrating the true system through a warmup), and the
//! per-step complex mean squared error E(t) is compared against a
//! threshold derived from the true future series. Crucially, the true
//! system is evaluated through the same product-unit path as the model:
//! a perfectly recovered system is then bit-identical in every step and
//! the prediction time is genuinely infinite, not limited by float noise.

use crate::complex::{clamp_nonzero, ComplexScalar, DEFAULT_CLAMP_EPS};
use crate::discovery::round_to;
use crate::dynamics::{rk4_step_complex, subseed, System};
use crate::network::{NetworkError, ProductUnitModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("true system diverged during warmup at step {0} (bad initial point)")]
    WarmupDiverged(usize),
    #[error("model must have 3 inputs and 3 outputs, got {0}x{1}")]
    NotThreeDimensional(usize, usize),
    #[error("non-finite value while evaluating a term system")]
    NonFiniteEval,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Configuration of one prediction-time trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EptConfig {
    pub dt: f64,
    pub warmup_steps: usize,
    pub horizon_steps: usize,
    pub init_box: [[f64; 2]; 3],
    pub lambda_max: f64,
    pub seed: u64,
    /// When false, imaginary parts of the model state are dropped after
    /// every step instead of being carried along.
    pub keep_imaginary: bool,
    /// Decimal places applied to model parameters before evaluation.
    pub rounding_decimals: u32,
}

impl EptConfig {
    pub fn for_system(system: System, seed: u64) -> Self {
        Self {
            dt: system.default_dt(),
            warmup_steps: 50_000,
            horizon_steps: 50_000,
            init_box: system.ept_init_box(),
            lambda_max: system.lambda_max(),
            seed,
            keep_imaginary: true,
            rounding_decimals: 3,
        }
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone)]
pub struct EptResult {
    /// First step index (minus one) at which E(t) exceeded the threshold;
    /// None when the error never crossed within the horizon.
    pub ept_steps: Option<usize>,
    /// `ept_steps · dt · lambda_max`, infinite when no crossing occurred.
    pub ept_normalized: f64,
    pub threshold_theta: f64,
    pub error_series: Vec<f64>,
    /// Total imaginary magnitude of the model state per step; growth here
    /// tends to precede the threshold crossing.
    pub imag_series: Vec<f64>,
    pub diverged: bool,
}

impl EptResult {
    pub fn is_finite(&self) -> bool {
        self.ept_steps.is_some()
    }
}

/// Complex mean squared error between two state vectors.
pub fn trajectory_error(a: &[ComplexScalar], b: &[ComplexScalar]) -> Result<f64, EvaluationError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EvaluationError::DimensionMismatch(a.len(), b.len()));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    Ok(sum / a.len() as f64)
}

/// Round every parameter component half away from zero.
pub fn round_model(model: &ProductUnitModel, decimals: u32) -> ProductUnitModel {
    let mut out = model.clone();
    for p in out
        .exponents
        .iter_mut()
        .chain(out.log_biases.iter_mut())
        .chain(out.coefficients.iter_mut())
    {
        *p = ComplexScalar::new(round_to(p.re, decimals), round_to(p.im, decimals));
    }
    out
}

/// Put a model into rounded canonical term form: log-biases folded into
/// the coefficients, every component rounded, units with identical rounded
/// exponent rows consolidated, dead units dropped, and the remaining units
/// sorted by exponent row.
///
/// Two models describing the same system of equations normalize to
/// bit-identical parameter arrays, so their rollouts coincide exactly.
/// This is the object the prediction-time comparison evaluates, for both
/// the recovered and the true system.
pub fn normalize_to_terms(model: &ProductUnitModel, decimals: u32) -> ProductUnitModel {
    let n_in = model.n_inputs();
    let n_out = model.n_outputs();
    let r = |z: ComplexScalar| ComplexScalar::new(round_to(z.re, decimals), round_to(z.im, decimals));

    // fold the bias into each output coefficient, then round
    let mut units: Vec<(Vec<ComplexScalar>, Vec<ComplexScalar>)> = (0..model.n_units())
        .map(|k| {
            let bias = model.log_bias(k).exp();
            let row: Vec<ComplexScalar> = model.exponent_row(k).iter().map(|&w| r(w)).collect();
            let coefs: Vec<ComplexScalar> = (0..n_out)
                .map(|v| r(model.coefficient(v, k) * bias))
                .collect();
            (row, coefs)
        })
        .collect();

    let key = |row: &[ComplexScalar]| -> Vec<(u64, u64)> {
        row.iter()
            .map(|w| (w.re.to_bits(), w.im.to_bits()))
            .collect()
    };
    units.sort_by(|a, b| key(&a.0).cmp(&key(&b.0)));

    // consolidate identical rounded rows, drop units no output uses
    let mut merged: Vec<(Vec<ComplexScalar>, Vec<ComplexScalar>)> = Vec::new();
    for (row, coefs) in units {
        match merged.last_mut() {
            Some((last_row, last_coefs)) if key(last_row) == key(&row) => {
                for (a, b) in last_coefs.iter_mut().zip(&coefs) {
                    *a = r(*a + b);
                }
            }
            _ => merged.push((row, coefs)),
        }
    }
    merged.retain(|(_, coefs)| coefs.iter().any(|c| c.re != 0.0 || c.im != 0.0));

    if merged.is_empty() {
        // degenerate but valid: a single dead unit keeps shapes legal
        return ProductUnitModel::from_parts(
            n_in,
            1,
            n_out,
            vec![ComplexScalar::new(0.0, 0.0); n_in],
            vec![ComplexScalar::new(0.0, 0.0)],
            vec![ComplexScalar::new(0.0, 0.0); n_out],
        )
        .expect("degenerate model is well-formed");
    }

    let n_units = merged.len();
    let exponents = merged.iter().flat_map(|(row, _)| row.clone()).collect();
    let log_biases = vec![ComplexScalar::new(0.0, 0.0); n_units];
    let mut coefficients = vec![ComplexScalar::new(0.0, 0.0); n_out * n_units];
    for (k, (_, coefs)) in merged.iter().enumerate() {
        for v in 0..n_out {
            coefficients[v * n_units + k] = coefs[v];
        }
    }
    ProductUnitModel::from_parts(n_in, n_units, n_out, exponents, log_biases, coefficients)
        .expect("normalized model is well-formed")
}

/// A model as a right-hand side: inputs clamped away from zero, then one
/// forward pass.
pub fn model_rhs(
    model: &ProductUnitModel,
) -> impl Fn(&[ComplexScalar]) -> Result<Vec<ComplexScalar>, NetworkError> + '_ {
    move |state: &[ComplexScalar]| {
        let clamped: Vec<ComplexScalar> = state
            .iter()
            .map(|&z| clamp_nonzero(z, DEFAULT_CLAMP_EPS))
            .collect();
        model.forward(&clamped)
    }
}

/// How one input enters a monomial.
#[derive(Debug, Clone, Copy)]
enum Factor {
    /// Exponent zero: the input does not appear.
    Skip,
    /// Small integer exponent: evaluated by repeated multiplication, so
    /// real states raised to integer powers stay exactly real.
    Int(i32),
    /// Anything else: principal-branch power of the clamped input.
    General(ComplexScalar),
}

/// A system of equations in term form, compiled for direct evaluation.
///
/// The product-unit forward pass computes every power through `exp(log)`,
/// which plants O(1e-16) imaginary seeds whenever a real state is
/// negative; over a chaotic rollout those seeds grow at the Lyapunov rate
/// and eventually overwhelm the trajectory. Equations written on paper
/// don't do that: `x²` is `x·x`. This evaluator reproduces the on-paper
/// semantics, keeping real systems exactly real while still handling
/// fractional powers of negative values and complex coefficients.
pub struct TermSystem {
    n_inputs: usize,
    n_outputs: usize,
    n_units: usize,
    factors: Vec<Factor>,
    coefficients: Vec<ComplexScalar>,
}

impl TermSystem {
    /// Compile a model (normally one already in canonical term form; the
    /// log-biases are folded in regardless).
    pub fn compile(model: &ProductUnitModel) -> Self {
        let n_units = model.n_units();
        let n_inputs = model.n_inputs();
        let n_outputs = model.n_outputs();
        let mut factors = Vec::with_capacity(n_units * n_inputs);
        for k in 0..n_units {
            for &w in model.exponent_row(k) {
                let f = if w.im == 0.0 && w.re == w.re.trunc() && w.re.abs() <= 16.0 {
                    if w.re == 0.0 {
                        Factor::Skip
                    } else {
                        Factor::Int(w.re as i32)
                    }
                } else {
                    Factor::General(w)
                };
                factors.push(f);
            }
        }
        let mut coefficients = Vec::with_capacity(n_outputs * n_units);
        for v in 0..n_outputs {
            for k in 0..n_units {
                coefficients.push(model.coefficient(v, k) * model.log_bias(k).exp());
            }
        }
        Self {
            n_inputs,
            n_outputs,
            n_units,
            factors,
            coefficients,
        }
    }

    /// Evaluate the system at a state.
    pub fn eval(&self, state: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, EvaluationError> {
        if state.len() != self.n_inputs {
            return Err(EvaluationError::DimensionMismatch(
                state.len(),
                self.n_inputs,
            ));
        }
        let mut units = Vec::with_capacity(self.n_units);
        for k in 0..self.n_units {
            let mut u = ComplexScalar::new(1.0, 0.0);
            for (i, &x) in state.iter().enumerate() {
                match self.factors[k * self.n_inputs + i] {
                    Factor::Skip => {}
                    Factor::Int(n) => {
                        let base = if n < 0 {
                            let c = clamp_nonzero(x, DEFAULT_CLAMP_EPS);
                            c.inv()
                        } else {
                            x
                        };
                        for _ in 0..n.unsigned_abs() {
                            u *= base;
                        }
                    }
                    Factor::General(w) => {
                        let c = clamp_nonzero(x, DEFAULT_CLAMP_EPS);
                        u *= crate::complex::complex_pow(c, w)
                            .map_err(|_| EvaluationError::NonFiniteEval)?;
                    }
                }
            }
            units.push(u);
        }
        let mut out = Vec::with_capacity(self.n_outputs);
        for v in 0..self.n_outputs {
            let mut y = ComplexScalar::new(0.0, 0.0);
            for (k, &u) in units.iter().enumerate() {
                y += self.coefficients[v * self.n_units + k] * u;
            }
            if !y.re.is_finite() || !y.im.is_finite() {
                return Err(EvaluationError::NonFiniteEval);
            }
            out.push(y);
        }
        Ok(out)
    }

    /// The evaluator as a right-hand side for rollouts.
    pub fn rhs(&self) -> impl Fn(&[ComplexScalar]) -> Result<Vec<ComplexScalar>, EvaluationError> + '_ {
        move |state: &[ComplexScalar]| self.eval(state)
    }
}

/// First t (1-based) with `series[t-1] > theta`, expressed as EPT = t - 1.
/// The position in the series is exactly that t - 1.
pub fn ept_from_error_series(series: &[f64], theta: f64) -> Option<usize> {
    series.iter().position(|&e| e > theta || e.is_nan())
}

/// Population standard deviation of the smallest-spread coordinate of the
/// true future series (real parts).
fn min_coordinate_std(series: &[Vec<ComplexScalar>]) -> f64 {
    let n = series.len() as f64;
    let dim = series.first().map_or(0, Vec::len);
    let mut theta = f64::INFINITY;
    for i in 0..dim {
        let mean: f64 = series.iter().map(|s| s[i].re).sum::<f64>() / n;
        let var: f64 = series.iter().map(|s| (s[i].re - mean).powi(2)).sum::<f64>() / n;
        theta = theta.min(var.sqrt());
    }
    theta
}

/// Run one effective-prediction-time trial of `model` against the named
/// true system.
///
/// Both systems are normalized to rounded canonical term form and share
/// one evaluation path, so a recovered system whose rounded terms equal
/// the truth is bit-indistinguishable from it. The initial point is drawn
/// from the configured box, the true system alone runs through the
/// warmup, and from the warmup endpoint the two systems are co-evolved
/// for the horizon.
pub fn compute_ept(
    system: System,
    model: &ProductUnitModel,
    config: &EptConfig,
) -> Result<EptResult, EvaluationError> {
    if model.n_inputs() != 3 || model.n_outputs() != 3 {
        return Err(EvaluationError::NotThreeDimensional(
            model.n_inputs(),
            model.n_outputs(),
        ));
    }
    let model = TermSystem::compile(&normalize_to_terms(model, config.rounding_decimals));
    let truth = TermSystem::compile(&normalize_to_terms(
        &system.truth_model(),
        config.rounding_decimals,
    ));
    let truth_rhs = truth.rhs();
    let rhs = model.rhs();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state: Vec<ComplexScalar> = (0..3)
        .map(|i| {
            let [lo, hi] = config.init_box[i];
            ComplexScalar::new(rng.random_range(lo..=hi), 0.0)
        })
        .collect();

    for step in 0..config.warmup_steps {
        state = rk4_step_complex(&truth_rhs, &state, config.dt)
            .map_err(|_| EvaluationError::WarmupDiverged(step))?;
        if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(EvaluationError::WarmupDiverged(step));
        }
    }

    // True future series over the horizon, from the shared start.
    let mut true_series = Vec::with_capacity(config.horizon_steps);
    let mut ts = state.clone();
    for step in 0..config.horizon_steps {
        ts = rk4_step_complex(&truth_rhs, &ts, config.dt)
            .map_err(|_| EvaluationError::WarmupDiverged(config.warmup_steps + step))?;
        if ts.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(EvaluationError::WarmupDiverged(config.warmup_steps + step));
        }
        true_series.push(ts.clone());
    }
    let theta = min_coordinate_std(&true_series);

    // Model side, from the same start.
    let mut error_series = Vec::with_capacity(config.horizon_steps);
    let mut imag_series = Vec::with_capacity(config.horizon_steps);
    let mut diverged = false;
    let mut ms = state.clone();
    for t in 0..config.horizon_steps {
        let next = match rk4_step_complex(&rhs, &ms, config.dt) {
            Ok(next) => next,
            Err(_) => {
                diverged = true;
                break;
            }
        };
        ms = next;
        if !config.keep_imaginary {
            for z in ms.iter_mut() {
                z.im = 0.0;
            }
        }
        if ms.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            diverged = true;
            break;
        }
        error_series.push(trajectory_error(&true_series[t], &ms)?);
        imag_series.push(ms.iter().map(|z| z.im.abs()).sum());
    }
    if diverged {
        // Divergence counts as an immediate threshold crossing.
        error_series.push(f64::INFINITY);
        imag_series.push(f64::INFINITY);
    }

    let ept_steps = ept_from_error_series(&error_series, theta);
    let ept_normalized = match ept_steps {
        Some(steps) => steps as f64 * config.dt * config.lambda_max,
        None => f64::INFINITY,
    };
    Ok(EptResult {
        ept_steps,
        ept_normalized,
        threshold_theta: theta,
        error_series,
        imag_series,
        diverged,
    })
}

/// The corrupted three-equation benchmark used as a known-finite fixture:
/// the first equation's y-coefficient is perturbed to `10.001 + 0.001i`.
pub fn corrupted_lorenz63() -> ProductUnitModel {
    let mut model = System::Lorenz63.truth_model();
    // unit order: x, y, xz, xy, z; first row is the x-equation
    model.coefficients[1] = ComplexScalar::new(10.001, 0.001);
    model
}

/// One row of the EPT report CSV.
#[derive(Debug, Clone, Serialize)]
pub struct EptReportRow {
    pub system: String,
    pub seed: u64,
    pub trial: usize,
    pub theta: f64,
    pub ept_steps: String,
    pub ept_normalized: String,
    pub finite: bool,
    pub diverged: bool,
}

impl EptReportRow {
    pub fn new(system: System, seed: u64, trial: usize, result: &EptResult) -> Self {
        Self {
            system: system.name().to_string(),
            seed,
            trial,
            theta: result.threshold_theta,
            ept_steps: result
                .ept_steps
                .map_or_else(|| "inf".to_string(), |s| s.to_string()),
            ept_normalized: if result.ept_normalized.is_finite() {
                result.ept_normalized.to_string()
            } else {
                "inf".to_string()
            },
            finite: result.is_finite(),
            diverged: result.diverged,
        }
    }
}

/// Write EPT rows: `system,seed,trial,theta,ept_steps,ept_normalized,finite,diverged`.
pub fn write_ept_csv<W: Write>(rows: &[EptReportRow], out: W) -> Result<(), EvaluationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "system",
        "seed",
        "trial",
        "theta",
        "ept_steps",
        "ept_normalized",
        "finite",
        "diverged",
    ])
    .map_err(|e| EvaluationError::Csv(e.to_string()))?;
    for r in rows {
        w.write_record(&[
            r.system.clone(),
            r.seed.to_string(),
            r.trial.to_string(),
            r.theta.to_string(),
            r.ept_steps.clone(),
            r.ept_normalized.clone(),
            r.finite.to_string(),
            r.diverged.to_string(),
        ])
        .map_err(|e| EvaluationError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| EvaluationError::Csv(e.to_string()))?;
    Ok(())
}

/// Per-step error dump: `t,E,imag_norm`, where imag_norm tracks the total
/// imaginary magnitude of the model state (an early-warning signal that
/// tends to grow before the crossing).
pub fn write_error_dump<W: Write>(
    errors: &[f64],
    imag_norms: &[f64],
    out: W,
) -> Result<(), EvaluationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "E", "imag_norm"])
        .map_err(|e| EvaluationError::Csv(e.to_string()))?;
    for (t, e) in errors.iter().enumerate() {
        let imag = imag_norms.get(t).copied().unwrap_or(0.0);
        w.write_record(&[(t + 1).to_string(), e.to_string(), imag.to_string()])
            .map_err(|e| EvaluationError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| EvaluationError::Csv(e.to_string()))?;
    Ok(())
}

/// Trial seeds derived from a base seed, one per trial.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    subseed(seed, 0x4550_5400 + trial as u64)
}
