use pundit::cli::derive_seeds;
use pundit::dynamics::{generate_dataset, System, TrajectoryConfig};

fn main() {
    let mut global_zmin = f64::MAX;
    for seed in 0..20u64 {
        let seeds = derive_seeds(seed);
        for (trajs, pts) in [(30, 3000), (10, 1000), (100, 5000)] {
            let tc = TrajectoryConfig {
                seed: seeds.dataset,
                init_box: [[0.0, 20.0]; 3],
                state_clamp: None,
                ..TrajectoryConfig::for_system(System::LorenzFract, trajs, pts, 0)
            };
            match generate_dataset(System::LorenzFract, &tc) {
                Ok(ds) => {
                    let zmin = ds.inputs.iter().map(|p| p[2]).fold(f64::MAX, f64::min);
                    global_zmin = global_zmin.min(zmin);
                }
                Err(e) => println!("seed={seed} trajs={trajs}: FAILED {e}"),
            }
        }
    }
    println!("min z over all datasets: {global_zmin:.4}");
}
