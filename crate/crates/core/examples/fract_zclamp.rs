use pundit::cli::{derive_seeds, run_discovery};
use pundit::discovery::MergeConfig;
use pundit::dynamics::{generate_dataset, System, TrajectoryConfig};
use pundit::training::TrainConfig;

fn main() {
    let seed: u64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let system = System::LorenzFract;
    let seeds = derive_seeds(seed);
    let tc = TrajectoryConfig {
        seed: seeds.dataset,
        init_box: [[0.0, 20.0]; 3],
        // clamp only the fractional-power variable
        state_clamp: Some([[f64::NEG_INFINITY, f64::INFINITY],
                           [f64::NEG_INFINITY, f64::INFINITY],
                           [0.0, 20.0]]),
        ..TrajectoryConfig::for_system(system, 30, 3000, 0)
    };
    let dataset = match generate_dataset(system, &tc) {
        Ok(d) => d,
        Err(e) => { println!("seed={seed}: generation failed: {e}"); return; }
    };
    let outcome = run_discovery(system, &dataset, 5, seed, &TrainConfig::default(), &MergeConfig::default()).unwrap();
    println!(
        "zclamp seed={seed}: correct={} err={} exact={} loss={:.2e}",
        outcome.report.correct_count, outcome.report.erroneous_count,
        outcome.is_exact(), outcome.final_loss
    );
}
