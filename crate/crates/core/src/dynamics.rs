//! Benchmark ODE systems, the RK4 integrator, and training-set generation.
//!
//! Training data are phase-space points paired with the analytic value of
//! the right-hand side at those points, sampled along RK4 trajectories from
//! random initial conditions. Targets are exact by construction; nothing is
//! differentiated numerically.

use crate::complex::ComplexScalar;
use crate::network::ProductUnitModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("unknown system '{0}'; built-ins: lorenz63, lorenz84, four_wing, lorenz_fract")]
    UnknownSystem(String),
    #[error("non-finite state in trajectory {trajectory} at step {step}")]
    NonFiniteState { trajectory: usize, step: usize },
    #[error("non-finite stage value in RK4 step")]
    NonFiniteStage,
    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Built-in three-dimensional benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Lorenz63,
    Lorenz84,
    FourWing,
    LorenzFract,
}

pub const ALL_SYSTEMS: [System; 4] = [
    System::Lorenz63,
    System::Lorenz84,
    System::FourWing,
    System::LorenzFract,
];

impl System {
    pub fn from_name(name: &str) -> Result<Self, DynamicsError> {
        match name.to_ascii_lowercase().as_str() {
            "lorenz63" => Ok(Self::Lorenz63),
            "lorenz84" => Ok(Self::Lorenz84),
            "four_wing" | "fourwing" => Ok(Self::FourWing),
            "lorenz_fract" | "lorenzfract" => Ok(Self::LorenzFract),
            other => Err(DynamicsError::UnknownSystem(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Lorenz63 => "lorenz63",
            Self::Lorenz84 => "lorenz84",
            Self::FourWing => "four_wing",
            Self::LorenzFract => "lorenz_fract",
        }
    }

    pub fn params(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::Lorenz63 => &[("sigma", 10.0), ("rho", 28.0), ("beta", 2.667)],
            Self::Lorenz84 => &[("a", 0.25), ("b", 6.0), ("F", 16.0), ("G", 3.0)],
            Self::FourWing => &[
                ("a", 0.2),
                ("b", -0.01),
                ("c", 1.0),
                ("d", -0.4),
                ("e", -1.0),
                ("f", -1.0),
            ],
            Self::LorenzFract => &[
                ("sigma", 35.0),
                ("rho", 28.0),
                ("beta", 3.0),
                ("eta", 0.5),
            ],
        }
    }

    /// Right-hand side of the governing equations.
    ///
    /// LorenzFract contains `z^0.5`; the real-valued evaluator requires
    /// `z >= 0` (guaranteed by the state clamp during generation) and
    /// returns NaN otherwise, which the integrator reports as an error.
    pub fn rhs(self, s: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = s;
        match self {
            Self::Lorenz63 => [10.0 * (-x + y), -x * z + 28.0 * x - y, x * y - 2.667 * z],
            Self::Lorenz84 => [
                -y * y - z * z - 0.25 * x + 0.25 * 16.0,
                x * y - 6.0 * x * z - y + 3.0,
                6.0 * x * y + x * z - z,
            ],
            Self::FourWing => [
                0.2 * x + y * z,
                -0.01 * x - 0.4 * y - x * z,
                -z - x * y,
            ],
            Self::LorenzFract => [
                35.0 * (-x + y),
                -x * z + 28.0 * x - y,
                x * y - 3.0 * z.sqrt(),
            ],
        }
    }

    /// Step size used for trajectory generation.
    pub fn default_dt(self) -> f64 {
        match self {
            Self::LorenzFract => 0.01,
            _ => 0.001,
        }
    }

    /// Box from which training trajectories start.
    pub fn default_init_box(self) -> [[f64; 2]; 3] {
        match self {
            Self::LorenzFract => [[0.0, 20.0]; 3],
            _ => [[-2.0, 2.0]; 3],
        }
    }

    /// Componentwise state constraint applied during generation, if any.
    ///
    /// None for every built-in. LorenzFract instead draws its initial
    /// points from the non-negative box [0, 20]³, from which the flow
    /// keeps `z` positive on its own; projecting whole trajectories into
    /// that box pins them against the faces and the resulting degenerate
    /// data reliably traps training in non-sparse local minima. A clamp
    /// can still be requested per run through [`TrajectoryConfig`].
    pub fn state_clamp(self) -> Option<[[f64; 2]; 3]> {
        None
    }

    /// Box from which prediction-horizon evaluations start.
    pub fn ept_init_box(self) -> [[f64; 2]; 3] {
        match self {
            Self::LorenzFract => [[0.0, 40.0]; 3],
            _ => [[-4.0, 4.0]; 3],
        }
    }

    /// Largest Lyapunov exponent, used to normalize prediction horizons.
    pub fn lambda_max(self) -> f64 {
        match self {
            Self::Lorenz63 => 0.9056,
            Self::FourWing => 0.064,
            Self::Lorenz84 => 0.56,
            Self::LorenzFract => 6e-5,
        }
    }

    /// Minimum number of product units that can represent the system.
    pub fn min_units(self) -> usize {
        match self {
            Self::Lorenz63 | Self::LorenzFract => 5,
            Self::FourWing => 6,
            Self::Lorenz84 => 8,
        }
    }

    /// The system written as an exact product-unit model: one unit per
    /// distinct monomial, zero log-biases, real coefficients.
    ///
    /// This is the reference representation used for term matching and for
    /// prediction-horizon comparisons, where both the true and the learned
    /// system must go through the same evaluation path.
    pub fn truth_model(self) -> ProductUnitModel {
        let c = |re: f64| ComplexScalar::new(re, 0.0);
        let (units, rows): (Vec<[f64; 3]>, Vec<Vec<f64>>) = match self {
            // units: x, y, xz, xy, z
            Self::Lorenz63 => (
                vec![
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [1.0, 0.0, 1.0],
                    [1.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                ],
                vec![
                    vec![-10.0, 10.0, 0.0, 0.0, 0.0],
                    vec![28.0, -1.0, -1.0, 0.0, 0.0],
                    vec![0.0, 0.0, 0.0, 1.0, -2.667],
                ],
            ),
            // units: y², z², x, 1, xy, xz, y, z
            Self::Lorenz84 => (
                vec![
                    [0.0, 2.0, 0.0],
                    [0.0, 0.0, 2.0],
                    [1.0, 0.0, 0.0],
                    [0.0, 0.0, 0.0],
                    [1.0, 1.0, 0.0],
                    [1.0, 0.0, 1.0],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                ],
                vec![
                    vec![-1.0, -1.0, -0.25, 4.0, 0.0, 0.0, 0.0, 0.0],
                    vec![0.0, 0.0, 0.0, 3.0, 1.0, -6.0, -1.0, 0.0],
                    vec![0.0, 0.0, 0.0, 0.0, 6.0, 1.0, 0.0, -1.0],
                ],
            ),
            // units: x, yz, y, xz, z, xy
            Self::FourWing => (
                vec![
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 1.0],
                    [0.0, 1.0, 0.0],
                    [1.0, 0.0, 1.0],
                    [0.0, 0.0, 1.0],
                    [1.0, 1.0, 0.0],
                ],
                vec![
                    vec![0.2, 1.0, 0.0, 0.0, 0.0, 0.0],
                    vec![-0.01, 0.0, -0.4, -1.0, 0.0, 0.0],
                    vec![0.0, 0.0, 0.0, 0.0, -1.0, -1.0],
                ],
            ),
            // units: x, y, xz, xy, z^0.5
            Self::LorenzFract => (
                vec![
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [1.0, 0.0, 1.0],
                    [1.0, 1.0, 0.0],
                    [0.0, 0.0, 0.5],
                ],
                vec![
                    vec![-35.0, 35.0, 0.0, 0.0, 0.0],
                    vec![28.0, -1.0, -1.0, 0.0, 0.0],
                    vec![0.0, 0.0, 0.0, 1.0, -3.0],
                ],
            ),
        };
        let n_units = units.len();
        let exponents = units.iter().flat_map(|u| u.iter().map(|&e| c(e))).collect();
        let log_biases = vec![c(0.0); n_units];
        let coefficients = rows
            .iter()
            .flat_map(|row| row.iter().map(|&v| c(v)))
            .collect();
        ProductUnitModel::from_parts(3, n_units, 3, exponents, log_biases, coefficients)
            .expect("built-in truth model is well-formed")
    }
}

/// Deterministic per-index sub-seed (splitmix64 over seed and index), so
/// trajectories and trials can be generated independently, in any order,
/// with identical results.
pub fn subseed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x243F_6A88_85A3_08D3);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Classical fourth-order Runge-Kutta step for a real-valued state.
pub fn rk4_step<F>(rhs: &F, state: &[f64], dt: f64) -> Result<Vec<f64>, DynamicsError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = state.len();
    let add = |s: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        s.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let k1 = rhs(state);
    let k2 = rhs(&add(state, &k1, dt / 2.0));
    let k3 = rhs(&add(state, &k2, dt / 2.0));
    let k4 = rhs(&add(state, &k3, dt));
    for k in [&k1, &k2, &k3, &k4] {
        if k.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteStage);
        }
    }
    Ok((0..n)
        .map(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// RK4 step for a complex-valued state, for model systems. The right-hand
/// side may fail (overflow, zero input after clamping upstream); the error
/// is propagated as-is.
pub fn rk4_step_complex<F, E>(
    rhs: &F,
    state: &[ComplexScalar],
    dt: f64,
) -> Result<Vec<ComplexScalar>, E>
where
    F: Fn(&[ComplexScalar]) -> Result<Vec<ComplexScalar>, E>,
{
    let add = |s: &[ComplexScalar], k: &[ComplexScalar], h: f64| -> Vec<ComplexScalar> {
        s.iter().zip(k).map(|(a, b)| a + h * b).collect()
    };
    let k1 = rhs(state)?;
    let k2 = rhs(&add(state, &k1, dt / 2.0))?;
    let k3 = rhs(&add(state, &k2, dt / 2.0))?;
    let k4 = rhs(&add(state, &k3, dt))?;
    Ok(state
        .iter()
        .enumerate()
        .map(|(i, s)| s + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// How a set of training trajectories is produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n_trajectories: usize,
    pub total_points: usize,
    pub dt: f64,
    pub init_box: [[f64; 2]; 3],
    pub state_clamp: Option<[[f64; 2]; 3]>,
    pub seed: u64,
}

impl TrajectoryConfig {
    /// Per-system defaults for a given grid cell.
    pub fn for_system(system: System, n_trajectories: usize, total_points: usize, seed: u64) -> Self {
        Self {
            n_trajectories,
            total_points,
            dt: system.default_dt(),
            init_box: system.default_init_box(),
            state_clamp: system.state_clamp(),
            seed,
        }
    }

    pub fn points_per_trajectory(&self) -> usize {
        self.total_points / self.n_trajectories
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub trajectory: usize,
    pub step: usize,
}

/// Phase-space points paired with target vectors. For benchmark systems
/// the targets are the analytic derivatives; for embedded signals the
/// inputs are lagged states and the targets the next state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub provenance: Vec<Provenance>,
}

impl TrainingDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }
}

fn clamp_state(state: &mut [f64], bounds: &[[f64; 2]; 3]) {
    for (v, [lo, hi]) in state.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Generate a training set of `(point, rhs(point))` samples along RK4
/// trajectories from uniform random starts.
///
/// When a state clamp is configured it is applied after every step and to
/// the state fed into every RK4 stage, so fractional powers never see an
/// argument outside their real domain. Each trajectory uses its own
/// sub-seed derived from `(seed, trajectory index)`.
pub fn generate_dataset(
    system: System,
    config: &TrajectoryConfig,
) -> Result<TrainingDataset, DynamicsError> {
    if config.n_trajectories == 0 {
        return Err(DynamicsError::Config("n_trajectories must be >= 1".into()));
    }
    if config.dt <= 0.0 {
        return Err(DynamicsError::Config("dt must be positive".into()));
    }
    let ppt = config.points_per_trajectory();
    if ppt < 2 {
        return Err(DynamicsError::Config(format!(
            "{} points over {} trajectories leaves fewer than 2 points each",
            config.total_points, config.n_trajectories
        )));
    }

    let rhs = move |s: &[f64]| -> Vec<f64> {
        let mut s3 = [s[0], s[1], s[2]];
        if let Some(bounds) = &config.state_clamp {
            clamp_state(&mut s3, bounds);
        }
        system.rhs(s3).to_vec()
    };

    let n_samples = config.n_trajectories * ppt;
    let mut dataset = TrainingDataset {
        inputs: Vec::with_capacity(n_samples),
        targets: Vec::with_capacity(n_samples),
        provenance: Vec::with_capacity(n_samples),
    };

    for traj in 0..config.n_trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, traj as u64));
        let mut state = [0.0f64; 3];
        for (v, [lo, hi]) in state.iter_mut().zip(&config.init_box) {
            *v = rng.random_range(*lo..=*hi);
        }
        if let Some(bounds) = &config.state_clamp {
            clamp_state(&mut state, bounds);
        }
        for step in 0..ppt {
            if step > 0 {
                let next = rk4_step(&rhs, &state, config.dt).map_err(|_| {
                    DynamicsError::NonFiniteState {
                        trajectory: traj,
                        step,
                    }
                })?;
                state = [next[0], next[1], next[2]];
                if let Some(bounds) = &config.state_clamp {
                    clamp_state(&mut state, bounds);
                }
                if state.iter().any(|v| !v.is_finite()) {
                    return Err(DynamicsError::NonFiniteState {
                        trajectory: traj,
                        step,
                    });
                }
            }
            dataset.inputs.push(state.to_vec());
            dataset.targets.push(system.rhs(state).to_vec());
            dataset.provenance.push(Provenance {
                trajectory: traj,
                step,
            });
        }
    }
    Ok(dataset)
}

/// A complex-valued trajectory; `failure` is the step index at which the
/// state became non-finite, if it did, and the trajectory then contains
/// only the states up to the failure.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub states: Vec<Vec<ComplexScalar>>,
    pub failure: Option<usize>,
}

/// Integrate a (possibly complex) right-hand side forward with RK4,
/// returning `steps + 1` states including the start.
pub fn rollout<F, E>(rhs: &F, start: &[ComplexScalar], dt: f64, steps: usize) -> Rollout
where
    F: Fn(&[ComplexScalar]) -> Result<Vec<ComplexScalar>, E>,
{
    let mut states = Vec::with_capacity(steps + 1);
    states.push(start.to_vec());
    let mut current = start.to_vec();
    for step in 1..=steps {
        let next = match rk4_step_complex(rhs, &current, dt) {
            Ok(next) => next,
            Err(_) => {
                return Rollout {
                    states,
                    failure: Some(step),
                }
            }
        };
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Rollout {
                states,
                failure: Some(step),
            };
        }
        states.push(next.clone());
        current = next;
    }
    Rollout {
        states,
        failure: None,
    }
}

/// Wrap a real-valued system as a complex right-hand side (imaginary
/// parts are dropped on input and zero on output). Intended for rollouts
/// of the true dynamics where complex states never arise.
pub fn real_system_rhs(
    system: System,
) -> impl Fn(&[ComplexScalar]) -> Result<Vec<ComplexScalar>, DynamicsError> {
    move |s: &[ComplexScalar]| {
        let out = system.rhs([s[0].re, s[1].re, s[2].re]);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFiniteStage);
        }
        Ok(out.iter().map(|&v| ComplexScalar::new(v, 0.0)).collect())
    }
}

/// Write a dataset as CSV: `traj,step,t,x,y,z,dx,dy,dz`, full precision.
pub fn write_dataset_csv<W: Write>(
    dataset: &TrainingDataset,
    dt: f64,
    out: W,
) -> Result<(), DynamicsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["traj", "step", "t", "x", "y", "z", "dx", "dy", "dz"])
        .map_err(|e| DynamicsError::Csv(e.to_string()))?;
    for i in 0..dataset.len() {
        let p = dataset.provenance[i];
        let mut rec = vec![
            p.trajectory.to_string(),
            p.step.to_string(),
            (p.step as f64 * dt).to_string(),
        ];
        rec.extend(dataset.inputs[i].iter().map(f64::to_string));
        rec.extend(dataset.targets[i].iter().map(f64::to_string));
        w.write_record(&rec)
            .map_err(|e| DynamicsError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset CSV produced by [`write_dataset_csv`].
pub fn read_dataset_csv<R: Read>(input: R) -> Result<TrainingDataset, DynamicsError> {
    let mut r = csv::Reader::from_reader(input);
    let mut dataset = TrainingDataset {
        inputs: Vec::new(),
        targets: Vec::new(),
        provenance: Vec::new(),
    };
    for record in r.records() {
        let record = record.map_err(|e| DynamicsError::Csv(e.to_string()))?;
        if record.len() != 9 {
            return Err(DynamicsError::Csv(format!(
                "expected 9 columns, found {}",
                record.len()
            )));
        }
        let field = |i: usize| -> Result<f64, DynamicsError> {
            record[i]
                .parse::<f64>()
                .map_err(|e| DynamicsError::Csv(format!("column {i}: {e}")))
        };
        dataset.provenance.push(Provenance {
            trajectory: record[0]
                .parse()
                .map_err(|e| DynamicsError::Csv(format!("traj: {e}")))?,
            step: record[1]
                .parse()
                .map_err(|e| DynamicsError::Csv(format!("step: {e}")))?,
        });
        dataset.inputs.push(vec![field(3)?, field(4)?, field(5)?]);
        dataset.targets.push(vec![field(6)?, field(7)?, field(8)?]);
    }
    Ok(dataset)
}

/// Write a complex rollout as CSV with the model-evaluated derivative and
/// the imaginary state components:
/// `traj,step,t,x,y,z,dx,dy,dz,x_im,y_im,z_im`.
pub fn write_rollout_csv<W: Write, F, E>(
    roll: &Rollout,
    rhs: &F,
    dt: f64,
    out: W,
) -> Result<(), DynamicsError>
where
    F: Fn(&[ComplexScalar]) -> Result<Vec<ComplexScalar>, E>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "traj", "step", "t", "x", "y", "z", "dx", "dy", "dz", "x_im", "y_im", "z_im",
    ])
    .map_err(|e| DynamicsError::Csv(e.to_string()))?;
    for (step, state) in roll.states.iter().enumerate() {
        let deriv = rhs(state)
            .map(|d| d.iter().map(|z| z.re).collect::<Vec<_>>())
            .unwrap_or_else(|_| vec![f64::NAN; state.len()]);
        let mut rec = vec!["0".to_string(), step.to_string(), (step as f64 * dt).to_string()];
        rec.extend(state.iter().map(|z| z.re.to_string()));
        rec.extend(deriv.iter().map(f64::to_string));
        rec.extend(state.iter().map(|z| z.im.to_string()));
        w.write_record(&rec)
            .map_err(|e| DynamicsError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
