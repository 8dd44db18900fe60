//! Time-delay-embedding pipeline for measured three-channel signals.
//!
//! A signal is modeled by predicting the next sample from a set of lagged
//! past samples. The lag schedule is geometric-ish (dense recent history,
//! sparse distant history), inputs are low-pass filtered before training,
//! and forecasting runs closed loop with only the real parts of previous
//! predictions fed back.

use crate::complex::{clamp_nonzero, ComplexScalar, DEFAULT_CLAMP_EPS};
use crate::dynamics::{Provenance, TrainingDataset};
use crate::network::{NetworkError, ProductUnitModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("series of {len} samples is too short; needs more than {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("cutoff {cutoff} Hz must lie below the Nyquist frequency {nyquist} Hz")]
    CutoffAboveNyquist { cutoff: f64, nyquist: f64 },
    #[error("filter order must be at least 1")]
    BadOrder,
    #[error("channel {0} has zero amplitude range")]
    ZeroRange(usize),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A uniformly sampled three-channel signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<[f64; 3]>,
    pub sample_rate: f64,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Time-delay embedding layout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// Number of lags m; the input dimension is 3m.
    pub n_lags: usize,
    /// Largest-lag scale: the last lag is `lag_base + n_lags - 1`.
    pub lag_base: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            n_lags: 50,
            lag_base: 500.0,
        }
    }
}

/// Low-pass filter design parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 4,
            cutoff_hz: 15.0,
            sample_rate_hz: 200.0,
        }
    }
}

/// Lags ψ_k = floor(base^(k/m) + k - 1) for k = 1..m: dense near the
/// present, geometric farther back, strictly increasing.
pub fn lag_schedule(config: &EmbeddingConfig) -> Vec<usize> {
    let m = config.n_lags as f64;
    (1..=config.n_lags)
        .map(|k| (config.lag_base.powf(k as f64 / m) + k as f64 - 1.0).floor() as usize)
        .collect()
}

/// Lagged inputs at index `t` drawn from `value(t - ψ_k)`, lag-major:
/// the full 3-vector at ψ_1, then at ψ_2, and so on.
fn embed_at<F: Fn(usize) -> [f64; 3]>(t: usize, lags: &[usize], value: F) -> Vec<f64> {
    let mut input = Vec::with_capacity(3 * lags.len());
    for &lag in lags {
        let v = value(t - lag);
        input.extend_from_slice(&v);
    }
    input
}

/// Build (lagged inputs, next value) samples from a series. Valid targets
/// run from the largest lag to the end, so the sample count is
/// `len - ψ_m`.
pub fn build_embedding_dataset(
    series: &TimeSeries,
    config: &EmbeddingConfig,
) -> Result<TrainingDataset, SignalError> {
    let lags = lag_schedule(config);
    let max_lag = *lags.last().expect("at least one lag");
    if series.len() <= max_lag {
        return Err(SignalError::SeriesTooShort {
            len: series.len(),
            needed: max_lag,
        });
    }
    let mut dataset = TrainingDataset {
        inputs: Vec::with_capacity(series.len() - max_lag),
        targets: Vec::with_capacity(series.len() - max_lag),
        provenance: Vec::with_capacity(series.len() - max_lag),
    };
    for t in max_lag..series.len() {
        dataset
            .inputs
            .push(embed_at(t, &lags, |i| series.samples[i]));
        dataset.targets.push(series.samples[t].to_vec());
        dataset.provenance.push(Provenance {
            trajectory: 0,
            step: t,
        });
    }
    Ok(dataset)
}

/// One second-order section, direct form II transposed.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn process(&self, x: f64, s1: &mut f64, s2: &mut f64) -> f64 {
        let y = self.b0 * x + *s1;
        *s1 = self.b1 * x - self.a1 * y + *s2;
        *s2 = self.b2 * x - self.a2 * y;
        y
    }
}

/// First-order section for odd orders.
#[derive(Debug, Clone, Copy)]
struct FirstOrder {
    b0: f64,
    b1: f64,
    a1: f64,
}

struct LowpassDesign {
    biquads: Vec<Biquad>,
    first_order: Option<FirstOrder>,
}

/// Butterworth low-pass mapped to the digital domain with the bilinear
/// transform and frequency pre-warping, split into cascaded second-order
/// sections (plus one first-order section for odd orders).
fn design_lowpass(spec: &FilterSpec) -> Result<LowpassDesign, SignalError> {
    if spec.order == 0 {
        return Err(SignalError::BadOrder);
    }
    let nyquist = spec.sample_rate_hz / 2.0;
    if spec.cutoff_hz >= nyquist || spec.cutoff_hz <= 0.0 {
        return Err(SignalError::CutoffAboveNyquist {
            cutoff: spec.cutoff_hz,
            nyquist,
        });
    }
    let n = spec.order;
    let big_k = 2.0 * spec.sample_rate_hz;
    // pre-warped analog cutoff so the digital response hits -3 dB there
    let wc = big_k * (std::f64::consts::PI * spec.cutoff_hz / spec.sample_rate_hz).tan();

    let mut biquads = Vec::new();
    let mut first_order = None;
    // analog prototype poles p = wc·exp(iπ(2k+n-1)/(2n)); conjugate pairs
    // give sections s² + α s + wc², α = -2 Re(p)
    for k in 1..=(n / 2) {
        let angle = std::f64::consts::PI * (2 * k + n - 1) as f64 / (2 * n) as f64;
        let alpha = -2.0 * wc * angle.cos();
        let beta = wc * wc;
        let a0 = big_k * big_k + alpha * big_k + beta;
        biquads.push(Biquad {
            b0: beta / a0,
            b1: 2.0 * beta / a0,
            b2: beta / a0,
            a1: (2.0 * beta - 2.0 * big_k * big_k) / a0,
            a2: (big_k * big_k - alpha * big_k + beta) / a0,
        });
    }
    if n % 2 == 1 {
        // single real pole at -wc
        let a0 = big_k + wc;
        first_order = Some(FirstOrder {
            b0: wc / a0,
            b1: wc / a0,
            a1: (wc - big_k) / a0,
        });
    }
    Ok(LowpassDesign {
        biquads,
        first_order,
    })
}

/// Single-pass causal low-pass filtering per channel, zero initial state.
pub fn butterworth_lowpass(
    series: &TimeSeries,
    spec: &FilterSpec,
) -> Result<TimeSeries, SignalError> {
    let design = design_lowpass(spec)?;
    let mut out = series.clone();
    for ch in 0..3 {
        let mut states = vec![(0.0f64, 0.0f64); design.biquads.len()];
        let mut fo_state = 0.0f64;
        for sample in out.samples.iter_mut() {
            let mut x = sample[ch];
            for (bq, (s1, s2)) in design.biquads.iter().zip(states.iter_mut()) {
                x = bq.process(x, s1, s2);
            }
            if let Some(fo) = &design.first_order {
                let y = fo.b0 * x + fo_state;
                fo_state = fo.b1 * x - fo.a1 * y;
                x = y;
            }
            sample[ch] = x;
        }
    }
    Ok(out)
}

/// A closed-loop forecast. Predictions keep their full complex value;
/// `failure` marks the first non-finite step, after which the series stops.
#[derive(Debug, Clone)]
pub struct Forecast {
    pub samples: Vec<[ComplexScalar; 3]>,
    pub failure: Option<usize>,
}

impl Forecast {
    /// Real parts as a plain series (for metrics and CSV).
    pub fn real_series(&self, sample_rate: f64) -> TimeSeries {
        TimeSeries {
            samples: self
                .samples
                .iter()
                .map(|s| [s[0].re, s[1].re, s[2].re])
                .collect(),
            sample_rate,
        }
    }
}

/// Closed-loop rollout: lagged inputs come from the measured history and,
/// once the horizon passes it, from the real parts of earlier predictions.
pub fn forecast(
    model: &ProductUnitModel,
    history: &TimeSeries,
    steps: usize,
    config: &EmbeddingConfig,
) -> Result<Forecast, SignalError> {
    let lags = lag_schedule(config);
    let max_lag = *lags.last().expect("at least one lag");
    if history.len() <= max_lag {
        return Err(SignalError::SeriesTooShort {
            len: history.len(),
            needed: max_lag,
        });
    }
    if model.n_inputs() != 3 * lags.len() || model.n_outputs() != 3 {
        return Err(SignalError::Network(NetworkError::DimensionMismatch {
            expected: 3 * lags.len(),
            got: model.n_inputs(),
        }));
    }
    let mut predictions: Vec<[ComplexScalar; 3]> = Vec::with_capacity(steps);
    let mut fed_back: Vec<[f64; 3]> = Vec::with_capacity(steps);
    for i in 0..steps {
        let t = history.len() + i;
        let input = embed_at(t, &lags, |idx| {
            if idx < history.len() {
                history.samples[idx]
            } else {
                fed_back[idx - history.len()]
            }
        });
        let x: Vec<ComplexScalar> = input
            .iter()
            .map(|&v| clamp_nonzero(ComplexScalar::new(v, 0.0), DEFAULT_CLAMP_EPS))
            .collect();
        let y = match model.forward(&x) {
            Ok(y) => y,
            Err(NetworkError::UnitOverflow { .. } | NetworkError::NonFinite { .. }) => {
                return Ok(Forecast {
                    samples: predictions,
                    failure: Some(i),
                });
            }
            Err(e) => return Err(e.into()),
        };
        let point = [y[0], y[1], y[2]];
        if point
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Ok(Forecast {
                samples: predictions,
                failure: Some(i),
            });
        }
        fed_back.push([point[0].re, point[1].re, point[2].re]);
        predictions.push(point);
    }
    Ok(Forecast {
        samples: predictions,
        failure: None,
    })
}

/// Per-channel error metrics of a forecast against the measured truth,
/// both normalized by the true signal's peak-to-peak range.
#[derive(Debug, Clone)]
pub struct RmseMetrics {
    /// RMSE over the full overlap, per channel, range-normalized.
    pub normalized_rmse: [f64; 3],
    /// Sliding-window RMSE per step and channel, range-normalized. Uses
    /// an expanding window until the first full window is available.
    pub moving_rmse: Vec<[f64; 3]>,
    /// Per-step absolute error, range-normalized.
    pub abs_error: Vec<[f64; 3]>,
}

/// Compare two series over their overlap.
pub fn rmse_metrics(
    truth: &TimeSeries,
    predicted: &TimeSeries,
    window_samples: usize,
) -> Result<RmseMetrics, SignalError> {
    if truth.len() != predicted.len() {
        return Err(SignalError::LengthMismatch(truth.len(), predicted.len()));
    }
    let n = truth.len();
    let window = window_samples.max(1);

    let mut range = [0.0f64; 3];
    for ch in 0..3 {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &truth.samples {
            lo = lo.min(s[ch]);
            hi = hi.max(s[ch]);
        }
        range[ch] = hi - lo;
        if range[ch] == 0.0 {
            return Err(SignalError::ZeroRange(ch));
        }
    }

    let mut sq_err = vec![[0.0f64; 3]; n];
    let mut abs_error = vec![[0.0f64; 3]; n];
    for t in 0..n {
        for ch in 0..3 {
            let e = truth.samples[t][ch] - predicted.samples[t][ch];
            sq_err[t][ch] = e * e;
            abs_error[t][ch] = e.abs() / range[ch];
        }
    }

    let mut normalized_rmse = [0.0f64; 3];
    for ch in 0..3 {
        let mean: f64 = sq_err.iter().map(|s| s[ch]).sum::<f64>() / n as f64;
        normalized_rmse[ch] = mean.sqrt() / range[ch];
    }

    let mut moving_rmse = vec![[0.0f64; 3]; n];
    let mut running = [0.0f64; 3];
    for t in 0..n {
        for ch in 0..3 {
            running[ch] += sq_err[t][ch];
            if t >= window {
                running[ch] -= sq_err[t - window][ch];
            }
            let count = (t + 1).min(window) as f64;
            moving_rmse[t][ch] = (running[ch].max(0.0) / count).sqrt() / range[ch];
        }
    }

    Ok(RmseMetrics {
        normalized_rmse,
        moving_rmse,
        abs_error,
    })
}

/// Fundamental gait frequency of the synthetic generator (Hz).
pub const GAIT_FUNDAMENTAL_HZ: f64 = 1.8;
/// Frequency of the slow amplitude drift (Hz).
pub const GAIT_DRIFT_HZ: f64 = 0.1;
/// Relative depth of the amplitude drift.
pub const GAIT_DRIFT_DEPTH: f64 = 0.05;
/// Noise standard deviation relative to each channel's dominant amplitude.
pub const GAIT_NOISE_FRACTION: f64 = 0.05;

/// Per-channel harmonic mixes: (harmonic multiple, amplitude, phase).
const GAIT_TONES: [&[(f64, f64, f64)]; 3] = [
    &[(1.0, 4.0, 0.3), (2.0, 1.5, 1.1), (3.0, 0.8, 2.0)],
    &[(1.0, 6.0, 1.7), (2.0, 2.0, 0.4)],
    &[(1.0, 5.0, 2.6), (3.0, 1.2, 0.9)],
];
const GAIT_OFFSETS: [f64; 3] = [0.4, -0.2, 9.8];

/// The slow amplitude envelope shared by all channels.
pub fn gait_envelope(t: f64) -> f64 {
    1.0 + GAIT_DRIFT_DEPTH * (2.0 * std::f64::consts::PI * GAIT_DRIFT_HZ * t).sin()
}

/// Noiseless quasi-periodic component of one channel.
pub fn gait_clean(channel: usize, t: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let tones: f64 = GAIT_TONES[channel]
        .iter()
        .map(|&(mult, amp, phase)| amp * (two_pi * GAIT_FUNDAMENTAL_HZ * mult * t + phase).sin())
        .sum();
    GAIT_OFFSETS[channel] + gait_envelope(t) * tones
}

/// Synthetic walking-accelerometer stand-in: per channel a sum of two or
/// three harmonics of a ~1.8 Hz fundamental under a slow amplitude drift,
/// plus seeded Gaussian noise at 5% of the channel amplitude.
pub fn synth_gait(duration_s: f64, sample_rate: f64, seed: u64) -> TimeSeries {
    let n = (duration_s * sample_rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_sigmas: [f64; 3] = std::array::from_fn(|ch| {
        let amp: f64 = GAIT_TONES[ch].iter().map(|&(_, a, _)| a).sum();
        GAIT_NOISE_FRACTION * amp
    });
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sample_rate;
        let mut s = [0.0f64; 3];
        for ch in 0..3 {
            s[ch] = gait_clean(ch, t) + noise_sigmas[ch] * normal.sample(&mut rng);
        }
        samples.push(s);
    }
    TimeSeries {
        samples,
        sample_rate,
    }
}

/// Write a signal CSV: `t,ax,ay,az`.
pub fn write_signal_csv<W: Write>(series: &TimeSeries, out: W) -> Result<(), SignalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "ax", "ay", "az"])
        .map_err(|e| SignalError::Csv(e.to_string()))?;
    for (i, s) in series.samples.iter().enumerate() {
        let t = i as f64 / series.sample_rate;
        w.write_record(&[
            t.to_string(),
            s[0].to_string(),
            s[1].to_string(),
            s[2].to_string(),
        ])
        .map_err(|e| SignalError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| SignalError::Csv(e.to_string()))?;
    Ok(())
}

/// Read a `t,ax,ay,az` CSV; the sample rate is inferred from the first
/// time step when present, else `fallback_rate` is used.
pub fn read_signal_csv<R: Read>(input: R, fallback_rate: f64) -> Result<TimeSeries, SignalError> {
    let mut r = csv::Reader::from_reader(input);
    let mut samples = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| SignalError::Csv(e.to_string()))?;
        if record.len() < 4 {
            return Err(SignalError::Csv(format!(
                "expected 4 columns t,ax,ay,az, found {}",
                record.len()
            )));
        }
        let field = |i: usize| -> Result<f64, SignalError> {
            record[i]
                .parse::<f64>()
                .map_err(|e| SignalError::Csv(format!("column {i}: {e}")))
        };
        times.push(field(0)?);
        samples.push([field(1)?, field(2)?, field(3)?]);
    }
    let sample_rate = if times.len() >= 2 && (times[1] - times[0]) > 0.0 {
        1.0 / (times[1] - times[0])
    } else {
        fallback_rate
    };
    Ok(TimeSeries {
        samples,
        sample_rate,
    })
}

/// Write a forecast CSV: `t,ax,ay,az,ax_im,ay_im,az_im`. Time starts at
/// the step after the history ends.
pub fn write_forecast_csv<W: Write>(
    pred: &Forecast,
    history_len: usize,
    sample_rate: f64,
    out: W,
) -> Result<(), SignalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "ax", "ay", "az", "ax_im", "ay_im", "az_im"])
        .map_err(|e| SignalError::Csv(e.to_string()))?;
    for (i, s) in pred.samples.iter().enumerate() {
        let t = (history_len + i) as f64 / sample_rate;
        w.write_record(&[
            t.to_string(),
            s[0].re.to_string(),
            s[1].re.to_string(),
            s[2].re.to_string(),
            s[0].im.to_string(),
            s[1].im.to_string(),
            s[2].im.to_string(),
        ])
        .map_err(|e| SignalError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| SignalError::Csv(e.to_string()))?;
    Ok(())
}

/// Write the metrics CSV: `t,err_x,err_y,err_z,mrmse_x,mrmse_y,mrmse_z`.
pub fn write_metrics_csv<W: Write>(
    metrics: &RmseMetrics,
    start_index: usize,
    sample_rate: f64,
    out: W,
) -> Result<(), SignalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "err_x", "err_y", "err_z", "mrmse_x", "mrmse_y", "mrmse_z"])
        .map_err(|e| SignalError::Csv(e.to_string()))?;
    for t in 0..metrics.abs_error.len() {
        let time = (start_index + t) as f64 / sample_rate;
        let e = metrics.abs_error[t];
        let m = metrics.moving_rmse[t];
        w.write_record(&[
            time.to_string(),
            e[0].to_string(),
            e[1].to_string(),
            e[2].to_string(),
            m[0].to_string(),
            m[1].to_string(),
            m[2].to_string(),
        ])
        .map_err(|e| SignalError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| SignalError::Csv(e.to_string()))?;
    Ok(())
}
