use pundit::cli::derive_seeds;
use pundit::dynamics::{generate_dataset, System, TrajectoryConfig};

fn main() {
    let seeds = derive_seeds(0);
    let tc = TrajectoryConfig {
        seed: seeds.dataset,
        ..TrajectoryConfig::for_system(System::LorenzFract, 30, 3000, 0)
    };
    let ds = generate_dataset(System::LorenzFract, &tc).unwrap();
    let mut at_boundary = 0usize;
    let mut corner = 0usize;
    let (mut lo, mut hi) = ([f64::MAX; 3], [f64::MIN; 3]);
    let mut target_absmax = [0.0f64; 3];
    for (x, t) in ds.inputs.iter().zip(&ds.targets) {
        let b = x.iter().filter(|&&v| v == 0.0 || v == 20.0).count();
        if b > 0 { at_boundary += 1; }
        if b == 3 { corner += 1; }
        for i in 0..3 {
            lo[i] = lo[i].min(x[i]); hi[i] = hi[i].max(x[i]);
            target_absmax[i] = target_absmax[i].max(t[i].abs());
        }
    }
    println!("samples={} boundary={} corner={}", ds.len(), at_boundary, corner);
    println!("input lo={lo:?}\ninput hi={hi:?}\ntarget absmax={target_absmax:?}");
    // target scale
    let mut mean_sq = 0.0;
    for t in &ds.targets { for v in t { mean_sq += v * v; } }
    println!("mean |target|^2 per component = {:.1}", mean_sq / (3.0 * ds.len() as f64));
}
