//! Adam training of product-unit models.
//!
//! Every complex parameter is optimized as two independent reals. Two
//! learning-rate groups: coefficients on one rate, exponents and log-biases
//! on the other, both decayed exponentially per epoch. Batches whose loss
//! or gradients come out non-finite (a unit overflowed) are skipped and
//! counted rather than poisoning the optimizer state.

use crate::complex::{ComplexScalar, DEFAULT_CLAMP_EPS};
use crate::dynamics::TrainingDataset;
use crate::network::{GradientSet, InitConfig, NetworkError, PreparedSample, ProductUnitModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset dimensions {input}x{target} do not match model {n_in}x{n_out}")]
    ShapeMismatch {
        input: usize,
        target: usize,
        n_in: usize,
        n_out: usize,
    },
    #[error("every batch of epoch {epoch} was skipped; the model diverged")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_coefficients: f64,
    pub lr_exponents: f64,
    pub decay_gamma: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub init: InitConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            batch_size: 30,
            lr_coefficients: 0.03,
            lr_exponents: 0.003,
            decay_gamma: 0.999,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            init: InitConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        // A zero learning rate is allowed: it freezes that parameter group.
        if self.batch_size == 0
            || self.lr_coefficients < 0.0
            || self.lr_exponents < 0.0
            || self.decay_gamma <= 0.0
            || self.decay_gamma > 1.0
        {
            return Err(TrainingError::Csv(
                "invalid training config: need batch_size >= 1, non-negative learning rates, 0 < gamma <= 1"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Exponentially decayed learning rate at a given epoch.
pub fn lr_at_epoch(base_lr: f64, gamma: f64, epoch: usize) -> f64 {
    base_lr * gamma.powi(epoch as i32)
}

/// First and second Adam moment estimates, shape-congruent with the model
/// parameters (each entry carries the moments of the Re and Im components).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: GradientSet,
    pub second_moment: GradientSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &ProductUnitModel) -> Self {
        Self {
            first_moment: GradientSet::zeros_like(model),
            second_moment: GradientSet::zeros_like(model),
            step: 0,
        }
    }
}

fn adam_scalar(m: &mut f64, v: &mut f64, g: f64, lr: f64, c: &AdamCoeffs) -> f64 {
    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
    let m_hat = *m / c.bias1;
    let v_hat = *v / c.bias2;
    -lr * m_hat / (v_hat.sqrt() + c.eps)
}

struct AdamCoeffs {
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
}

/// One Adam update over all parameters. `lr_exponents` drives exponents
/// and log-biases, `lr_coefficients` drives the output coefficients.
/// Returns the applied deltas (same layout as the gradients).
pub fn adam_update(
    state: &mut AdamState,
    grads: &GradientSet,
    lr_coefficients: f64,
    lr_exponents: f64,
    config: &TrainConfig,
) -> GradientSet {
    state.step += 1;
    let t = state.step as i32;
    let coeffs = AdamCoeffs {
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        eps: config.adam_eps,
        bias1: 1.0 - config.adam_beta1.powi(t),
        bias2: 1.0 - config.adam_beta2.powi(t),
    };
    let mut deltas = GradientSet {
        exponents: vec![ComplexScalar::new(0.0, 0.0); grads.exponents.len()],
        log_biases: vec![ComplexScalar::new(0.0, 0.0); grads.log_biases.len()],
        coefficients: vec![ComplexScalar::new(0.0, 0.0); grads.coefficients.len()],
    };
    let groups: [(&[ComplexScalar], &mut Vec<ComplexScalar>, &mut Vec<ComplexScalar>, &mut Vec<ComplexScalar>, f64); 3] = [
        (
            &grads.exponents,
            &mut state.first_moment.exponents,
            &mut state.second_moment.exponents,
            &mut deltas.exponents,
            lr_exponents,
        ),
        (
            &grads.log_biases,
            &mut state.first_moment.log_biases,
            &mut state.second_moment.log_biases,
            &mut deltas.log_biases,
            lr_exponents,
        ),
        (
            &grads.coefficients,
            &mut state.first_moment.coefficients,
            &mut state.second_moment.coefficients,
            &mut deltas.coefficients,
            lr_coefficients,
        ),
    ];
    for (g, m, v, d, lr) in groups {
        for i in 0..g.len() {
            d[i].re = adam_scalar(&mut m[i].re, &mut v[i].re, g[i].re, lr, &coeffs);
            d[i].im = adam_scalar(&mut m[i].im, &mut v[i].im, g[i].im, lr, &coeffs);
        }
    }
    deltas
}

fn apply_deltas(model: &mut ProductUnitModel, deltas: &GradientSet) {
    for (p, d) in model.exponents.iter_mut().zip(&deltas.exponents) {
        *p += d;
    }
    for (p, d) in model.log_biases.iter_mut().zip(&deltas.log_biases) {
        *p += d;
    }
    for (p, d) in model.coefficients.iter_mut().zip(&deltas.coefficients) {
        *p += d;
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub lr_coefficients: f64,
    pub lr_exponents: f64,
    pub skipped_batches: usize,
}

/// Full training history; one entry per epoch.
pub type TrainingHistory = Vec<EpochStats>;

/// Train `model` on `dataset`. Deterministic for a fixed (model, dataset,
/// config): shuffling uses a ChaCha stream seeded from `config.seed`, and
/// gradient accumulation is single-threaded in sample order.
pub fn train(
    mut model: ProductUnitModel,
    dataset: &TrainingDataset,
    config: &TrainConfig,
) -> Result<(ProductUnitModel, TrainingHistory), TrainingError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    if dataset.input_dim() != model.n_inputs() || dataset.target_dim() != model.n_outputs() {
        return Err(TrainingError::ShapeMismatch {
            input: dataset.input_dim(),
            target: dataset.target_dim(),
            n_in: model.n_inputs(),
            n_out: model.n_outputs(),
        });
    }

    let samples: Vec<PreparedSample> = dataset
        .inputs
        .iter()
        .zip(&dataset.targets)
        .map(|(x, t)| PreparedSample::from_real(x, t, DEFAULT_CLAMP_EPS))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&model);
    let mut history = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let lr_c = lr_at_epoch(config.lr_coefficients, config.decay_gamma, epoch);
        let lr_e = lr_at_epoch(config.lr_exponents, config.decay_gamma, epoch);

        let mut loss_sum = 0.0;
        let mut loss_weight = 0usize;
        let mut skipped = 0usize;
        for batch in indices.chunks(config.batch_size) {
            let refs: Vec<&PreparedSample> = batch.iter().map(|&i| &samples[i]).collect();
            match model.backward(&refs) {
                Ok((loss, grads)) => {
                    let deltas = adam_update(&mut adam, &grads, lr_c, lr_e, config);
                    apply_deltas(&mut model, &deltas);
                    loss_sum += loss * batch.len() as f64;
                    loss_weight += batch.len();
                }
                Err(
                    NetworkError::UnitOverflow { .. } | NetworkError::NonFinite { .. },
                ) => {
                    skipped += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if loss_weight == 0 {
            return Err(TrainingError::Diverged { epoch });
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / loss_weight as f64,
            lr_coefficients: lr_c,
            lr_exponents: lr_e,
            skipped_batches: skipped,
        });
    }
    Ok((model, history))
}

/// Mean CMSE of a model over a dataset (no training), for held-out checks.
pub fn evaluate_loss(
    model: &ProductUnitModel,
    dataset: &TrainingDataset,
) -> Result<f64, TrainingError> {
    if dataset.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    let mut total = 0.0;
    for (x, t) in dataset.inputs.iter().zip(&dataset.targets) {
        let s = PreparedSample::from_real(x, t, DEFAULT_CLAMP_EPS)?;
        let y = model.forward(&s.inputs)?;
        total += crate::network::loss_cmse(&y, &s.targets)?;
    }
    Ok(total / dataset.len() as f64)
}

/// Write the loss history CSV: `epoch,loss,lr_coeff,lr_exp,skipped_batches`.
pub fn write_history_csv<W: Write>(history: &[EpochStats], out: W) -> Result<(), TrainingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "lr_coeff", "lr_exp", "skipped_batches"])
        .map_err(|e| TrainingError::Csv(e.to_string()))?;
    for row in history {
        w.write_record(&[
            row.epoch.to_string(),
            row.loss.to_string(),
            row.lr_coefficients.to_string(),
            row.lr_exponents.to_string(),
            row.skipped_batches.to_string(),
        ])
        .map_err(|e| TrainingError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| TrainingError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{generate_dataset, System, TrajectoryConfig};
    use crate::network::InitConfig;
    use proptest::prelude::*;

    fn tiny_dataset() -> TrainingDataset {
        let config = TrajectoryConfig::for_system(System::Lorenz63, 5, 100, 3);
        generate_dataset(System::Lorenz63, &config).unwrap()
    }

    fn fresh_model(seed: u64) -> ProductUnitModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ProductUnitModel::random(3, 5, 3, InitConfig::default(), &mut rng)
    }

    #[test]
    fn lr_decay() {
        assert_eq!(lr_at_epoch(0.03, 0.999, 0), 0.03);
        assert!((lr_at_epoch(0.03, 0.999, 1) - 0.02997).abs() < 1e-15);
        // 0.003 * 0.99^500, frozen from a 50-digit evaluation
        assert!((lr_at_epoch(0.003, 0.99, 500) - 1.9711449127243899e-5).abs() < 1e-18);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let model = fresh_model(0);
        let mut state = AdamState::new(&model);
        let mut grads = GradientSet::zeros_like(&model);
        grads.coefficients[0] = ComplexScalar::new(1.0, 0.0);
        let config = TrainConfig::default();
        let deltas = adam_update(&mut state, &grads, 0.03, 0.003, &config);
        // bias-corrected m̂ = g, v̂ = g² -> delta = -lr·g/(|g| + eps)
        assert!((deltas.coefficients[0].re + 0.03).abs() < 1e-9);
        assert_eq!(deltas.coefficients[0].im, 0.0);
        // zero-gradient parameters do not move
        assert_eq!(deltas.exponents[0], ComplexScalar::new(0.0, 0.0));
    }

    #[test]
    fn adam_momentum_partially_cancels() {
        // g = 1 then g = -1: second step's magnitude is below the first.
        let model = fresh_model(0);
        let mut state = AdamState::new(&model);
        let config = TrainConfig::default();
        let mut g1 = GradientSet::zeros_like(&model);
        g1.coefficients[0] = ComplexScalar::new(1.0, 0.0);
        let d1 = adam_update(&mut state, &g1, 0.03, 0.003, &config);
        let mut g2 = GradientSet::zeros_like(&model);
        g2.coefficients[0] = ComplexScalar::new(-1.0, 0.0);
        let d2 = adam_update(&mut state, &g2, 0.03, 0.003, &config);
        assert!(d2.coefficients[0].re.abs() < d1.coefficients[0].re.abs());
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let model = fresh_model(1);
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, history) = train(model.clone(), &tiny_dataset(), &config).unwrap();
        assert_eq!(trained, model);
        assert!(history.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let config = TrainConfig {
            epochs: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let ds = tiny_dataset();
        let (a, ha) = train(fresh_model(2), &ds, &config).unwrap();
        let (b, hb) = train(fresh_model(2), &ds, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha.len(), hb.len());
        for (x, y) in ha.iter().zip(&hb) {
            assert_eq!(x.loss, y.loss);
        }
    }

    #[test]
    fn learning_rate_groups_are_separate() {
        let ds = tiny_dataset();
        let base = fresh_model(4);
        // lr_coefficients = 0 leaves coefficients bit-identical...
        let config = TrainConfig {
            epochs: 2,
            lr_coefficients: 0.0,
            ..TrainConfig::default()
        };
        let (trained, _) = train(base.clone(), &ds, &config).unwrap();
        assert_eq!(trained.coefficients, base.coefficients);
        assert_ne!(trained.exponents, base.exponents);
        // ...and lr_exponents = 0 freezes exponents and log-biases.
        let config = TrainConfig {
            epochs: 2,
            lr_exponents: 0.0,
            ..TrainConfig::default()
        };
        let (trained, _) = train(base.clone(), &ds, &config).unwrap();
        assert_eq!(trained.exponents, base.exponents);
        assert_eq!(trained.log_biases, base.log_biases);
        assert_ne!(trained.coefficients, base.coefficients);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = fresh_model(5);
        let ds = TrainingDataset {
            inputs: vec![vec![1.0, 2.0]],
            targets: vec![vec![0.0, 0.0, 0.0]],
            provenance: vec![crate::dynamics::Provenance {
                trajectory: 0,
                step: 0,
            }],
        };
        assert!(matches!(
            train(model, &ds, &TrainConfig::default()),
            Err(TrainingError::ShapeMismatch { .. })
        ));
    }

    proptest! {
        // |delta| <= 3 lr for every step: m̂/(√v̂+ε) is bounded for any
        // gradient stream once the bias corrections settle.
        #[test]
        fn adam_step_size_is_bounded(gs in proptest::collection::vec(-100.0f64..100.0, 1..20)) {
            let model = fresh_model(6);
            let mut state = AdamState::new(&model);
            let config = TrainConfig::default();
            for g in gs {
                let mut grads = GradientSet::zeros_like(&model);
                grads.coefficients[0] = ComplexScalar::new(g, 0.0);
                let d = adam_update(&mut state, &grads, 0.03, 0.003, &config);
                prop_assert!(d.coefficients[0].re.abs() <= 3.0 * 0.03);
            }
        }
    }
}
