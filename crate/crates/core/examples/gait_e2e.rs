use pundit::cli::derive_seeds;
use pundit::network::ProductUnitModel;
use pundit::signal::*;
use pundit::training::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let t0 = Instant::now();
    let seeds = derive_seeds(seed);
    let raw = synth_gait(40.0, 200.0, seeds.dataset);
    let spec = FilterSpec::default();
    let filtered = butterworth_lowpass(&raw, &spec).unwrap();
    let train_len = 2000;
    let history = TimeSeries { samples: filtered.samples[..train_len].to_vec(), sample_rate: 200.0 };
    let embedding = EmbeddingConfig::default();
    let dataset = build_embedding_dataset(&history, &embedding).unwrap();
    println!("[{:.0}s] dataset: {} samples x {} dims", t0.elapsed().as_secs_f64(), dataset.len(), dataset.input_dim());

    let config = TrainConfig { epochs: 500, decay_gamma: 0.99, seed: seeds.shuffle, ..TrainConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.model_init);
    let model = ProductUnitModel::random(dataset.input_dim(), 300, 3, config.init, &mut rng);
    let (model, hist) = train(model, &dataset, &config).unwrap();
    println!("[{:.0}s] trained; first-epoch loss {:.4e}, final loss {:.4e}, skipped {} (last epoch)",
        t0.elapsed().as_secs_f64(), hist.first().unwrap().loss, hist.last().unwrap().loss, hist.last().unwrap().skipped_batches);

    let steps = filtered.samples.len() - train_len;
    let pred = forecast(&model, &history, steps, &embedding).unwrap();
    println!("[{:.0}s] forecast {} steps, failure={:?}", t0.elapsed().as_secs_f64(), pred.samples.len(), pred.failure);
    if pred.samples.len() < steps { return; }

    let truth_tail = TimeSeries { samples: filtered.samples[train_len..].to_vec(), sample_rate: 200.0 };
    let m = rmse_metrics(&truth_tail, &pred.real_series(200.0), 200).unwrap();
    println!("normalized RMSE = {:?}", m.normalized_rmse);
    // moving RMSE: first 5 s vs last 5 s of the forecast
    let w = 1000;
    let early: f64 = m.moving_rmse[..w].iter().map(|v| (v[0] + v[1] + v[2]) / 3.0).sum::<f64>() / w as f64;
    let late: f64 = m.moving_rmse[m.moving_rmse.len() - w..].iter().map(|v| (v[0] + v[1] + v[2]) / 3.0).sum::<f64>() / w as f64;
    println!("moving RMSE early={early:.4} late={late:.4} ratio={:.2}", late / early);
}
