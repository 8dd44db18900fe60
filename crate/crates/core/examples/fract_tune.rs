use pundit::cli::{derive_seeds, run_discovery};
use pundit::discovery::MergeConfig;
use pundit::dynamics::{generate_dataset, System, TrajectoryConfig};
use pundit::network::InitConfig;
use pundit::training::TrainConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trajs: usize = args[1].parse().unwrap();
    let lo: f64 = args[2].parse().unwrap();
    let hi: f64 = args[3].parse().unwrap();
    let exp_sigma: f64 = args[4].parse().unwrap();
    let coef_sigma: f64 = args[5].parse().unwrap();
    let seed: u64 = args[6].parse().unwrap();
    let system = System::LorenzFract;

    let seeds = derive_seeds(seed);
    let tc = TrajectoryConfig {
        seed: seeds.dataset,
        init_box: [[lo, hi]; 3],
        ..TrajectoryConfig::for_system(system, trajs, 3000, 0)
    };
    let dataset = generate_dataset(system, &tc).unwrap();
    let train_config = TrainConfig {
        init: InitConfig { exponent_sigma: exp_sigma, coefficient_sigma: coef_sigma },
        ..TrainConfig::default()
    };
    let outcome = run_discovery(system, &dataset, 5, seed, &train_config, &MergeConfig::default()).unwrap();
    println!(
        "trajs={trajs} box=[{lo},{hi}] es={exp_sigma} cs={coef_sigma} seed={seed}: correct={} err={} exact={} loss={:.2e}",
        outcome.report.correct_count, outcome.report.erroneous_count,
        outcome.is_exact(), outcome.final_loss
    );
}
