//! The complex-valued product-unit network.
//!
//! One layer of product units followed by one complex linear layer. Unit k
//! computes `exp(b_k + Σ_i w_{k,i} log x_i)`, i.e. a generalized monomial
//! `e^{b_k} Π_i x_i^{w_{k,i}}` with a bias in the logarithmic domain, and
//! output v is `Σ_k c_{v,k} u_k`. The unit values are shared across all
//! outputs, which lets equations of a system reuse the same monomial with
//! different coefficients.
//!
//! Training treats every complex parameter as an independent (Re, Im) pair
//! of reals. The loss is real-valued, so this is exactly Wirtinger gradient
//! descent; [`ProductUnitModel::backward`] returns, for each parameter, the
//! pair (∂L/∂Re, ∂L/∂Im) packed into a [`ComplexScalar`].

use crate::complex::{clamp_nonzero, principal_log, ComplexError, ComplexScalar};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Log-domain real parts above this would push `exp` toward the edge of
/// the f64 range once squared inside the loss; the forward pass refuses
/// the sample instead and the trainer skips the batch.
pub const LOG_PREACTIVATION_LIMIT: f64 = 300.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("input has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input")]
    Empty,
    #[error("product unit {unit} overflowed (log-domain real part {preactivation:.3})")]
    UnitOverflow { unit: usize, preactivation: f64 },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("model document is malformed: {0}")]
    Document(String),
    #[error("model document parse error: {0}")]
    Parse(String),
}

/// Initialization scales for [`ProductUnitModel::random`].
///
/// Per-component standard deviations are divided by the square root of
/// the fan-in (the input count for exponents and log-biases, the unit
/// count for coefficients), so the log-domain sums and the output sums
/// start at O(1) regardless of width. Every unit then begins near a
/// constant and the exponential cannot overflow on the first batches;
/// a 150-dimensional embedding input is as safe as a 3-dimensional state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct InitConfig {
    pub exponent_sigma: f64,
    pub coefficient_sigma: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            exponent_sigma: 0.17,
            coefficient_sigma: 1.1,
        }
    }
}

/// A product-unit layer plus a complex linear output layer.
///
/// Shapes: `exponents` is `n_units x n_inputs` (row-major), `log_biases`
/// is `n_units`, `coefficients` is `n_outputs x n_units` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductUnitModel {
    pub(crate) n_inputs: usize,
    pub(crate) n_units: usize,
    pub(crate) n_outputs: usize,
    pub(crate) exponents: Vec<ComplexScalar>,
    pub(crate) log_biases: Vec<ComplexScalar>,
    pub(crate) coefficients: Vec<ComplexScalar>,
}

/// Partial derivatives of a scalar real loss with respect to the Re/Im
/// parts of every model parameter, stored shape-congruent with the model:
/// entry `re` is ∂L/∂Re(p) and `im` is ∂L/∂Im(p).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub exponents: Vec<ComplexScalar>,
    pub log_biases: Vec<ComplexScalar>,
    pub coefficients: Vec<ComplexScalar>,
}

impl GradientSet {
    pub fn zeros_like(model: &ProductUnitModel) -> Self {
        let zero = ComplexScalar::new(0.0, 0.0);
        Self {
            exponents: vec![zero; model.exponents.len()],
            log_biases: vec![zero; model.log_biases.len()],
            coefficients: vec![zero; model.coefficients.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.exponents
            .iter()
            .chain(&self.log_biases)
            .chain(&self.coefficients)
            .all(|g| g.re.is_finite() && g.im.is_finite())
    }
}

/// One training sample with its inputs already clamped away from zero and
/// their principal logs precomputed (they never change across epochs).
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub inputs: Vec<ComplexScalar>,
    pub logs: Vec<ComplexScalar>,
    pub targets: Vec<ComplexScalar>,
}

impl PreparedSample {
    /// Clamp real-valued inputs/targets and cache the input logs.
    pub fn from_real(
        inputs: &[f64],
        targets: &[f64],
        clamp_eps: f64,
    ) -> Result<Self, NetworkError> {
        let inputs: Vec<ComplexScalar> = inputs
            .iter()
            .map(|&x| clamp_nonzero(ComplexScalar::new(x, 0.0), clamp_eps))
            .collect();
        let logs = inputs
            .iter()
            .map(|&x| principal_log(x))
            .collect::<Result<Vec<_>, _>>()?;
        let targets = targets.iter().map(|&t| ComplexScalar::new(t, 0.0)).collect();
        Ok(Self {
            inputs,
            logs,
            targets,
        })
    }
}

/// Single product unit: `exp(b + Σ_i w_i log x_i)`.
///
/// Inputs must already be clamped nonzero.
pub fn unit_forward(
    x: &[ComplexScalar],
    w_row: &[ComplexScalar],
    b: ComplexScalar,
) -> Result<ComplexScalar, NetworkError> {
    if x.len() != w_row.len() {
        return Err(NetworkError::DimensionMismatch {
            expected: w_row.len(),
            got: x.len(),
        });
    }
    let mut s = b;
    for (&xi, &wi) in x.iter().zip(w_row) {
        s += wi * principal_log(xi)?;
    }
    if s.re > LOG_PREACTIVATION_LIMIT {
        return Err(NetworkError::UnitOverflow {
            unit: 0,
            preactivation: s.re,
        });
    }
    Ok(s.exp())
}

/// Mean squared error for complex values: `(1/n) Σ (f - f̂)(conj(f - f̂))`.
pub fn loss_cmse(preds: &[ComplexScalar], targets: &[ComplexScalar]) -> Result<f64, NetworkError> {
    if preds.is_empty() {
        return Err(NetworkError::Empty);
    }
    if preds.len() != targets.len() {
        return Err(NetworkError::DimensionMismatch {
            expected: targets.len(),
            got: preds.len(),
        });
    }
    let sum: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).norm_sqr())
        .sum();
    Ok(sum / preds.len() as f64)
}

impl ProductUnitModel {
    /// Build a model from raw parameter arrays, validating shapes.
    pub fn from_parts(
        n_inputs: usize,
        n_units: usize,
        n_outputs: usize,
        exponents: Vec<ComplexScalar>,
        log_biases: Vec<ComplexScalar>,
        coefficients: Vec<ComplexScalar>,
    ) -> Result<Self, NetworkError> {
        if n_inputs == 0 || n_units == 0 || n_outputs == 0 {
            return Err(NetworkError::Document(
                "dimensions must all be at least 1".into(),
            ));
        }
        if exponents.len() != n_units * n_inputs {
            return Err(NetworkError::Document(format!(
                "exponents has {} entries, expected n_units*n_inputs = {}",
                exponents.len(),
                n_units * n_inputs
            )));
        }
        if log_biases.len() != n_units {
            return Err(NetworkError::Document(format!(
                "log_biases has {} entries, expected n_units = {}",
                log_biases.len(),
                n_units
            )));
        }
        if coefficients.len() != n_outputs * n_units {
            return Err(NetworkError::Document(format!(
                "coefficients has {} entries, expected n_outputs*n_units = {}",
                coefficients.len(),
                n_outputs * n_units
            )));
        }
        let model = Self {
            n_inputs,
            n_units,
            n_outputs,
            exponents,
            log_biases,
            coefficients,
        };
        if !model.is_finite() {
            return Err(NetworkError::NonFinite {
                context: "model parameters",
            });
        }
        Ok(model)
    }

    /// Random initialization: every component drawn from a centered
    /// Gaussian with the fan-in-scaled sigmas of [`InitConfig`]. Draw
    /// order is fixed (exponents row-major, then log-biases, then
    /// coefficients) so a seeded RNG reproduces the model bit for bit.
    pub fn random<R: Rng>(
        n_inputs: usize,
        n_units: usize,
        n_outputs: usize,
        init: InitConfig,
        rng: &mut R,
    ) -> Self {
        let exp_dist = Normal::new(0.0, init.exponent_sigma / (n_inputs as f64).sqrt())
            .expect("valid sigma");
        let coef_dist = Normal::new(0.0, init.coefficient_sigma / (n_units as f64).sqrt())
            .expect("valid sigma");
        let draw = |dist: &Normal<f64>, n: usize, rng: &mut R| {
            (0..n)
                .map(|_| ComplexScalar::new(dist.sample(rng), dist.sample(rng)))
                .collect::<Vec<_>>()
        };
        let exponents = draw(&exp_dist, n_units * n_inputs, rng);
        let log_biases = draw(&exp_dist, n_units, rng);
        let coefficients = draw(&coef_dist, n_outputs * n_units, rng);
        Self {
            n_inputs,
            n_units,
            n_outputs,
            exponents,
            log_biases,
            coefficients,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn exponent(&self, unit: usize, input: usize) -> ComplexScalar {
        self.exponents[unit * self.n_inputs + input]
    }

    pub fn exponent_row(&self, unit: usize) -> &[ComplexScalar] {
        &self.exponents[unit * self.n_inputs..(unit + 1) * self.n_inputs]
    }

    pub fn log_bias(&self, unit: usize) -> ComplexScalar {
        self.log_biases[unit]
    }

    pub fn coefficient(&self, output: usize, unit: usize) -> ComplexScalar {
        self.coefficients[output * self.n_units + unit]
    }

    pub fn is_finite(&self) -> bool {
        self.exponents
            .iter()
            .chain(&self.log_biases)
            .chain(&self.coefficients)
            .all(|p| p.re.is_finite() && p.im.is_finite())
    }

    /// Mutable access to (exponents, log_biases, coefficients).
    pub fn parts_mut(
        &mut self,
    ) -> (
        &mut Vec<ComplexScalar>,
        &mut Vec<ComplexScalar>,
        &mut Vec<ComplexScalar>,
    ) {
        (
            &mut self.exponents,
            &mut self.log_biases,
            &mut self.coefficients,
        )
    }

    /// Unit values from precomputed input logs.
    fn units_from_logs(&self, logs: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, NetworkError> {
        let mut units = Vec::with_capacity(self.n_units);
        for k in 0..self.n_units {
            let row = self.exponent_row(k);
            let mut s = self.log_biases[k];
            for (&w, &lx) in row.iter().zip(logs) {
                s += w * lx;
            }
            if s.re > LOG_PREACTIVATION_LIMIT || !s.re.is_finite() || !s.im.is_finite() {
                return Err(NetworkError::UnitOverflow {
                    unit: k,
                    preactivation: s.re,
                });
            }
            units.push(s.exp());
        }
        Ok(units)
    }

    fn outputs_from_units(&self, units: &[ComplexScalar]) -> Vec<ComplexScalar> {
        (0..self.n_outputs)
            .map(|v| {
                let row = &self.coefficients[v * self.n_units..(v + 1) * self.n_units];
                let mut y = ComplexScalar::new(0.0, 0.0);
                for (&c, &u) in row.iter().zip(units) {
                    y += c * u;
                }
                y
            })
            .collect()
    }

    /// Evaluate all outputs at `x`. Inputs must be nonzero (clamp first);
    /// unit values are computed once and shared across outputs.
    pub fn forward(&self, x: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, NetworkError> {
        if x.len() != self.n_inputs {
            return Err(NetworkError::DimensionMismatch {
                expected: self.n_inputs,
                got: x.len(),
            });
        }
        let logs = x
            .iter()
            .map(|&xi| principal_log(xi))
            .collect::<Result<Vec<_>, _>>()?;
        let units = self.units_from_logs(&logs)?;
        Ok(self.outputs_from_units(&units))
    }

    /// Batch loss and exact gradients.
    ///
    /// The loss is the CMSE averaged over outputs and samples. Gradients
    /// are accumulated sample by sample in index order, so the result is
    /// deterministic for a given batch ordering.
    pub fn backward<S: std::borrow::Borrow<PreparedSample>>(
        &self,
        batch: &[S],
    ) -> Result<(f64, GradientSet), NetworkError> {
        if batch.is_empty() {
            return Err(NetworkError::Empty);
        }
        let d = self.n_outputs as f64;
        let n = batch.len() as f64;
        let mut grads = GradientSet::zeros_like(self);
        let mut loss = 0.0;

        for sample in batch {
            let sample = sample.borrow();
            if sample.logs.len() != self.n_inputs {
                return Err(NetworkError::DimensionMismatch {
                    expected: self.n_inputs,
                    got: sample.logs.len(),
                });
            }
            if sample.targets.len() != self.n_outputs {
                return Err(NetworkError::DimensionMismatch {
                    expected: self.n_outputs,
                    got: sample.targets.len(),
                });
            }
            let units = self.units_from_logs(&sample.logs)?;
            let outputs = self.outputs_from_units(&units);

            // residuals r_v = y_v - t_v; per-sample loss (1/d) Σ |r_v|²
            let mut sample_loss = 0.0;
            let scale = 2.0 / (d * n);
            for v in 0..self.n_outputs {
                let r = outputs[v] - sample.targets[v];
                sample_loss += r.norm_sqr();
                for k in 0..self.n_units {
                    // y_v is holomorphic in c_{v,k} with derivative u_k
                    grads.coefficients[v * self.n_units + k] += scale * r * units[k].conj();
                }
            }
            loss += sample_loss / d;

            for k in 0..self.n_units {
                // adjoint of unit k through all outputs
                let mut a = ComplexScalar::new(0.0, 0.0);
                for v in 0..self.n_outputs {
                    let r = outputs[v] - sample.targets[v];
                    a += r * self.coefficient(v, k).conj();
                }
                // du/db = u, du/dw_i = u log x_i
                let gb = scale * a * units[k].conj();
                grads.log_biases[k] += gb;
                for i in 0..self.n_inputs {
                    grads.exponents[k * self.n_inputs + i] += gb * sample.logs[i].conj();
                }
            }
        }

        loss /= n;
        if !loss.is_finite() {
            return Err(NetworkError::NonFinite { context: "loss" });
        }
        if !grads.is_finite() {
            return Err(NetworkError::NonFinite {
                context: "gradients",
            });
        }
        Ok((loss, grads))
    }
}

/// Metadata carried alongside the parameters in a model file.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ModelMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    n_inputs: usize,
    n_units: usize,
    n_outputs: usize,
    exponents: Vec<[f64; 2]>,
    log_biases: Vec<[f64; 2]>,
    coefficients: Vec<[f64; 2]>,
    #[serde(default)]
    meta: ModelMeta,
}

fn pairs(v: &[ComplexScalar]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn unpairs(v: Vec<[f64; 2]>) -> Vec<ComplexScalar> {
    v.into_iter()
        .map(|[re, im]| ComplexScalar::new(re, im))
        .collect()
}

/// Serialize a model to the JSON document format. Numbers round-trip
/// bit for bit.
pub fn serialize_model(model: &ProductUnitModel, meta: &ModelMeta) -> String {
    let doc = ModelDocument {
        n_inputs: model.n_inputs,
        n_units: model.n_units,
        n_outputs: model.n_outputs,
        exponents: pairs(&model.exponents),
        log_biases: pairs(&model.log_biases),
        coefficients: pairs(&model.coefficients),
        meta: meta.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
}

/// Parse a model document, validating shape consistency.
pub fn deserialize_model(text: &str) -> Result<(ProductUnitModel, ModelMeta), NetworkError> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
    let model = ProductUnitModel::from_parts(
        doc.n_inputs,
        doc.n_units,
        doc.n_outputs,
        unpairs(doc.exponents),
        unpairs(doc.log_biases),
        unpairs(doc.coefficients),
    )?;
    Ok((model, doc.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> ComplexScalar {
        ComplexScalar::new(re, im)
    }

    fn reals(xs: &[f64]) -> Vec<ComplexScalar> {
        xs.iter().map(|&x| c(x, 0.0)).collect()
    }

    /// Worked three-unit encoding of f(x,y,z) = 5x²y³ + xz^0.1 - 4.
    fn three_unit_example() -> ProductUnitModel {
        ProductUnitModel::from_parts(
            3,
            3,
            1,
            reals(&[2.0, 3.0, 0.0, 1.0, 0.0, 0.1, 0.0, 0.0, 0.0]),
            reals(&[0.0, 0.0, 0.0]),
            reals(&[5.0, 1.0, -4.0]),
        )
        .unwrap()
    }

    #[test]
    fn unit_forward_plain_product() {
        let u = unit_forward(&reals(&[2.0, 3.0]), &reals(&[1.0, 1.0]), c(0.0, 0.0)).unwrap();
        assert!((u - c(6.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unit_forward_integer_powers() {
        let u = unit_forward(
            &reals(&[2.0, 3.0, 1.0]),
            &reals(&[2.0, 3.0, 0.0]),
            c(0.0, 0.0),
        )
        .unwrap();
        assert!((u - c(108.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn unit_forward_with_log_bias() {
        let u = unit_forward(&reals(&[4.0]), &reals(&[0.5]), c(2.0f64.ln(), 0.0)).unwrap();
        assert!((u - c(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn model_forward_worked_example() {
        let m = three_unit_example();
        let y = m.forward(&reals(&[1.0, 1.0, 1.0])).unwrap();
        assert!((y[0] - c(2.0, 0.0)).norm() < 1e-12);
        let y = m.forward(&reals(&[2.0, 1.0, 1.0])).unwrap();
        assert!((y[0] - c(18.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn model_forward_null_model() {
        let m = ProductUnitModel::from_parts(
            2,
            2,
            2,
            reals(&[1.0, 0.0, 0.0, 1.0]),
            reals(&[0.0, 0.0]),
            reals(&[0.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let y = m.forward(&reals(&[3.0, 4.0])).unwrap();
        assert!(y.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn model_forward_dimension_mismatch() {
        let m = three_unit_example();
        assert!(matches!(
            m.forward(&reals(&[1.0, 2.0])),
            Err(NetworkError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn loss_cmse_examples() {
        let t = vec![c(1.0, 1.0)];
        assert_eq!(loss_cmse(&t, &t).unwrap(), 0.0);
        assert_eq!(loss_cmse(&[c(0.0, 0.0)], &t).unwrap(), 2.0);
        let loss = loss_cmse(
            &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert!((loss - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(loss_cmse(&[], &[]), Err(NetworkError::Empty)));
    }

    #[test]
    fn backward_zero_coefficients_zero_exponent_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = ProductUnitModel::random(3, 4, 2, InitConfig::default(), &mut rng);
        for q in m.coefficients.iter_mut() {
            *q = c(0.0, 0.0);
        }
        let s = PreparedSample::from_real(&[1.0, 2.0, 3.0], &[1.0, -1.0], 1e-12).unwrap();
        let (_, g) = m.backward(&[&s]).unwrap();
        assert!(g.exponents.iter().all(|z| z.norm() == 0.0));
        assert!(g.log_biases.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn backward_single_unit_closed_form() {
        // L(c) = |1 - c·1|²: dL/dRe(c) = -2 at c = 0.
        let m = ProductUnitModel::from_parts(
            1,
            1,
            1,
            reals(&[0.0]),
            reals(&[0.0]),
            reals(&[0.0]),
        )
        .unwrap();
        let s = PreparedSample::from_real(&[1.0], &[1.0], 1e-12).unwrap();
        let (loss, g) = m.backward(&[&s]).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
        assert!((g.coefficients[0].re + 2.0).abs() < 1e-12);
        assert!(g.coefficients[0].im.abs() < 1e-12);
    }

    /// Central finite differences on the batch loss, perturbing one real
    /// component of one parameter at a time. This goes through the plain
    /// forward path only, independent of the analytic backward code.
    fn fd_gradient(
        model: &ProductUnitModel,
        batch: &[&PreparedSample],
        step: f64,
    ) -> GradientSet {
        let loss_of = |m: &ProductUnitModel| -> f64 {
            let mut total = 0.0;
            for s in batch {
                let y = m.forward(&s.inputs).unwrap();
                total += loss_cmse(&y, &s.targets).unwrap();
            }
            total / batch.len() as f64
        };
        let mut g = GradientSet::zeros_like(model);
        let arrays: [(
            fn(&ProductUnitModel) -> &Vec<ComplexScalar>,
            fn(&mut ProductUnitModel) -> &mut Vec<ComplexScalar>,
            fn(&mut GradientSet) -> &mut Vec<ComplexScalar>,
        ); 3] = [
            (|m| &m.exponents, |m| &mut m.exponents, |g| &mut g.exponents),
            (
                |m| &m.log_biases,
                |m| &mut m.log_biases,
                |g| &mut g.log_biases,
            ),
            (
                |m| &m.coefficients,
                |m| &mut m.coefficients,
                |g| &mut g.coefficients,
            ),
        ];
        for (read, write, gwrite) in arrays {
            for idx in 0..read(model).len() {
                for part in 0..2 {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    if part == 0 {
                        write(&mut plus)[idx].re += step;
                        write(&mut minus)[idx].re -= step;
                    } else {
                        write(&mut plus)[idx].im += step;
                        write(&mut minus)[idx].im -= step;
                    }
                    let d = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
                    if part == 0 {
                        gwrite(&mut g)[idx].re = d;
                    } else {
                        gwrite(&mut g)[idx].im = d;
                    }
                }
            }
        }
        g
    }

    fn assert_grads_close(analytic: &GradientSet, fd: &GradientSet, rel: f64) {
        let pairs = analytic
            .exponents
            .iter()
            .zip(&fd.exponents)
            .chain(analytic.log_biases.iter().zip(&fd.log_biases))
            .chain(analytic.coefficients.iter().zip(&fd.coefficients));
        for (a, f) in pairs {
            for (av, fv) in [(a.re, f.re), (a.im, f.im)] {
                let denom = fv.abs().max(1e-4);
                assert!(
                    (av - fv).abs() <= rel * denom,
                    "gradient mismatch: analytic {av}, finite-difference {fv}"
                );
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let n_inputs = 1 + (trial % 4);
            let n_units = 1 + (trial % 10);
            let n_outputs = 1 + (trial % 3);
            let m =
                ProductUnitModel::random(n_inputs, n_units, n_outputs, InitConfig::default(), &mut rng);
            let mut samples = Vec::new();
            for _ in 0..3 {
                let xs: Vec<f64> = (0..n_inputs)
                    .map(|_| {
                        let v: f64 = rng.random_range(-2.0..2.0);
                        if v.abs() < 0.05 {
                            v + 0.1
                        } else {
                            v
                        }
                    })
                    .collect();
                let ts: Vec<f64> = (0..n_outputs).map(|_| rng.random_range(-3.0..3.0)).collect();
                samples.push(PreparedSample::from_real(&xs, &ts, 1e-12).unwrap());
            }
            let refs: Vec<&PreparedSample> = samples.iter().collect();
            let (_, analytic) = m.backward(&refs).unwrap();
            let fd = fd_gradient(&m, &refs, 1e-6);
            assert_grads_close(&analytic, &fd, 1e-5);
        }
    }

    #[test]
    fn serialization_round_trips_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = ProductUnitModel::random(3, 5, 3, InitConfig::default(), &mut rng);
        let meta = ModelMeta {
            system: Some("lorenz63".into()),
            seed: Some(7),
            epochs: Some(10),
        };
        let text = serialize_model(&m, &meta);
        let (back, meta2) = deserialize_model(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(meta, meta2);
    }

    #[test]
    fn deserialize_rejects_bad_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = ProductUnitModel::random(2, 2, 1, InitConfig::default(), &mut rng);
        let mut text = serialize_model(&m, &ModelMeta::default());
        text = text.replace("\"n_units\": 2", "\"n_units\": 3");
        assert!(matches!(
            deserialize_model(&text),
            Err(NetworkError::Document(_))
        ));
    }

    #[test]
    fn deserialize_rejects_non_numeric() {
        let text = r#"{"n_inputs":1,"n_units":1,"n_outputs":1,
            "exponents":[["a",0.0]],"log_biases":[[0.0,0.0]],
            "coefficients":[[1.0,0.0]],"meta":{}}"#;
        assert!(matches!(
            deserialize_model(text),
            Err(NetworkError::Parse(_))
        ));
    }

    proptest! {
        // Joint evaluation equals per-output evaluation from shared units.
        #[test]
        fn shared_units_consistent(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = ProductUnitModel::random(3, 4, 3, InitConfig::default(), &mut rng);
            let x = reals(&[0.7, -1.3, 2.1]);
            let joint = m.forward(&x).unwrap();
            for v in 0..3 {
                let single = ProductUnitModel::from_parts(
                    3, 4, 1,
                    m.exponents.clone(),
                    m.log_biases.clone(),
                    m.coefficients[v * 4..(v + 1) * 4].to_vec(),
                ).unwrap();
                let y = single.forward(&x).unwrap();
                prop_assert_eq!(joint[v], y[0]);
            }
        }

        // Scaling one coefficient row by a power of two scales that output
        // exactly (powers of two commute with float multiplication).
        #[test]
        fn homogeneity_in_coefficients(seed in 0u64..500, pow in -3i32..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = ProductUnitModel::random(2, 3, 2, InitConfig::default(), &mut rng);
            let s = 2.0f64.powi(pow);
            let x = reals(&[1.4, -0.6]);
            let before = m.forward(&x).unwrap();
            for k in 0..3 {
                m.coefficients[k] *= s;
            }
            let after = m.forward(&x).unwrap();
            prop_assert_eq!(after[0], before[0] * s);
            prop_assert_eq!(after[1], before[1]);
        }

        // Integer exponents + zero biases on real-negative inputs give
        // (numerically) real outputs.
        #[test]
        fn integer_exponents_stay_real(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let exps: Vec<ComplexScalar> = (0..6)
                .map(|_| c(rng.random_range(-3i32..=3) as f64, 0.0))
                .collect();
            let coefs: Vec<ComplexScalar> = (0..2)
                .map(|_| c(rng.random_range(-5.0..5.0), 0.0))
                .collect();
            let m = ProductUnitModel::from_parts(
                3, 2, 1, exps, reals(&[0.0, 0.0]), coefs,
            ).unwrap();
            let x = reals(&[-1.7, -0.4, -2.2]);
            let y = m.forward(&x).unwrap();
            prop_assert!(y[0].im.abs() <= 1e-9 * (1.0 + y[0].re.abs()));
        }
    }
}
