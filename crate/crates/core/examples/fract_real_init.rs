use pundit::cli::derive_seeds;
use pundit::complex::ComplexScalar;
use pundit::discovery::{discover_terms, match_against_truth, truth_terms, MergeConfig};
use pundit::dynamics::{generate_dataset, System, TrajectoryConfig};
use pundit::network::{InitConfig, ProductUnitModel};
use pundit::training::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let sysname = args[1].as_str();
    let seed: u64 = args[2].parse().unwrap();
    let zero_im: bool = args[3].parse().unwrap();
    let system = System::from_name(sysname).unwrap();
    let units = system.min_units();

    let seeds = derive_seeds(seed);
    let tc = TrajectoryConfig {
        seed: seeds.dataset,
        ..TrajectoryConfig::for_system(system, 30, 3000, 0)
    };
    let dataset = generate_dataset(system, &tc).unwrap();
    let train_config = TrainConfig { seed: seeds.shuffle, ..TrainConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.model_init);
    let mut model = ProductUnitModel::random(3, units, 3, InitConfig::default(), &mut rng);
    if zero_im {
        // project the random init onto the real subspace
        let zero_imag = |v: &mut Vec<ComplexScalar>| for z in v.iter_mut() { z.im = 0.0; };
        let (e, b, c) = model.parts_mut();
        zero_imag(e); zero_imag(b); zero_imag(c);
    }
    let (model, history) = train(model, &dataset, &train_config).unwrap();
    let terms = discover_terms(&model, &MergeConfig::default());
    let truth = truth_terms(system);
    let report = match_against_truth(&terms, &truth, 0.1);
    println!(
        "{sysname} seed={seed} zero_im={zero_im}: correct={} err={} loss={:.2e}",
        report.correct_count, report.erroneous_count,
        history.last().unwrap().loss
    );
}
