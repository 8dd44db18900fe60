use pundit::cli::{derive_seeds, run_discovery};
use pundit::discovery::MergeConfig;
use pundit::dynamics::{generate_dataset, System, TrajectoryConfig};
use pundit::evaluation::{compute_ept, corrupted_lorenz63, normalize_to_terms, trial_seed, EptConfig};
use pundit::training::TrainConfig;

fn main() {
    // 1. criterion-6 style: train Lorenz63 seed 0, EPT over 3 starts
    let system = System::Lorenz63;
    let seeds = derive_seeds(0);
    let tc = TrajectoryConfig { seed: seeds.dataset, ..TrajectoryConfig::for_system(system, 30, 3000, 0) };
    let dataset = generate_dataset(system, &tc).unwrap();
    let outcome = run_discovery(system, &dataset, 5, 0, &TrainConfig::default(), &MergeConfig::default()).unwrap();
    println!("recovery exact: {}", outcome.is_exact());
    let norm_model = normalize_to_terms(&outcome.model, 3);
    let norm_truth = normalize_to_terms(&system.truth_model(), 3);
    println!("normalized == truth (bitwise): {}", norm_model == norm_truth);
    for trial in 0..3 {
        let config = EptConfig { seed: trial_seed(seeds.ept, trial), ..EptConfig::for_system(system, 0) };
        let r = compute_ept(system, &outcome.model, &config).unwrap();
        println!("trial {trial}: finite={} normalized={} diverged={}", r.is_finite(), r.ept_normalized, r.diverged);
    }
    // 2. criterion-7 style: corrupted fixture over 10 starts
    let model = corrupted_lorenz63();
    let mut in_range = 0;
    for trial in 0..10 {
        let config = EptConfig { seed: trial_seed(777, trial), ..EptConfig::for_system(system, 0) };
        let r = compute_ept(system, &model, &config).unwrap();
        let ok = r.is_finite() && (2.0..=30.0).contains(&r.ept_normalized);
        if ok { in_range += 1; }
        println!("corrupted trial {trial}: ept_norm={:.3} in_range={}", r.ept_normalized, ok);
    }
    println!("corrupted in [2,30]: {in_range}/10");
}
