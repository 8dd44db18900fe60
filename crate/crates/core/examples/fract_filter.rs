use pundit::cli::{derive_seeds, run_discovery};
use pundit::discovery::MergeConfig;
use pundit::dynamics::{rk4_step, System, TrainingDataset, Provenance, TrajectoryConfig, subseed};
use pundit::training::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let seed: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let system = System::LorenzFract;
    let seeds = derive_seeds(seed);
    let tc = TrajectoryConfig {
        seed: seeds.dataset,
        init_box: [[0.0, 20.0]; 3],
        ..TrajectoryConfig::for_system(system, 30, 3000, 0)
    };
    let ppt = tc.points_per_trajectory();
    let mut ds = TrainingDataset { inputs: vec![], targets: vec![], provenance: vec![] };
    let rhs = |s: &[f64]| system.rhs([s[0], s[1], s[2]]).to_vec();
    let in_box = |s: &[f64; 3]| s.iter().all(|&v| (0.0..=20.0).contains(&v));
    for traj in 0..tc.n_trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(tc.seed, traj as u64));
        let mut state = [0.0f64; 3];
        for (v, [lo, hi]) in state.iter_mut().zip(&tc.init_box) {
            *v = rng.random_range(*lo..=*hi);
        }
        let mut kept = 0usize;
        let mut step = 0usize;
        while kept < ppt && step < 200 * ppt {
            if in_box(&state) {
                ds.inputs.push(state.to_vec());
                ds.targets.push(system.rhs(state).to_vec());
                ds.provenance.push(Provenance { trajectory: traj, step });
                kept += 1;
            }
            let next = rk4_step(&rhs, &state, tc.dt).unwrap();
            state = [next[0], next[1], next[2]];
            step += 1;
        }
        if kept < ppt { println!("seed={seed} traj={traj}: only {kept}/{ppt} in-box points"); }
    }
    let outcome = run_discovery(system, &ds, 5, seed, &TrainConfig::default(), &MergeConfig::default()).unwrap();
    println!(
        "filter seed={seed}: n={} correct={} err={} exact={} loss={:.2e}",
        ds.inputs.len(), outcome.report.correct_count, outcome.report.erroneous_count,
        outcome.is_exact(), outcome.final_loss
    );
}
