use pundit::cli::{derive_seeds, run_discovery};
use pundit::discovery::{render_equations, MergeConfig};
use pundit::dynamics::{generate_dataset, System, TrajectoryConfig};
use pundit::training::TrainConfig;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let system = System::from_name(args.get(1).map(String::as_str).unwrap_or("lorenz63")).unwrap();
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let units = system.min_units();

    let start = Instant::now();
    let seeds = derive_seeds(seed);
    let tc = TrajectoryConfig {
        seed: seeds.dataset,
        ..TrajectoryConfig::for_system(system, 30, 3000, 0)
    };
    let dataset = generate_dataset(system, &tc).unwrap();
    let train_config = TrainConfig { epochs, ..TrainConfig::default() };
    let outcome = run_discovery(system, &dataset, units, seed, &train_config, &MergeConfig::default()).unwrap();
    println!(
        "{} seed {}: correct={} erroneous={} exact={} final_loss={:.3e} [{:.1}s]",
        system.name(), seed, outcome.report.correct_count, outcome.report.erroneous_count,
        outcome.is_exact(), outcome.final_loss, start.elapsed().as_secs_f64()
    );
    println!("{}", render_equations(&outcome.terms, &["x", "y", "z"], 3));
}
