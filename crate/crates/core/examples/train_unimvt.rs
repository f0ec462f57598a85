//! Generate a benchmark, fit the network and report held-out quality.
//!
//! cargo run --release --example train_unimvt -- [preset] [epochs]

use std::time::Instant;

use unimvt::datagen::{generate, SynSpec};
use unimvt::htenet::{train, ModelConfig, TrainConfig};

fn main() -> unimvt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = args.first().map(String::as_str).unwrap_or("syn1");
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let bench = generate(&SynSpec::preset(preset)?)?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (model, history) = train(&bench.train, &ModelConfig::default(), &cfg)?;
    for r in &history {
        println!("epoch {:>3}  loss/row {:.5}", r.epoch, r.total);
    }
    println!("trained in {:.1?}", start.elapsed());
    let preds = model.predict_samples(&bench.test.samples, None)?;
    let mean_eta: f64 = preds.iter().map(|p| p.eta_hat).sum::<f64>() / preds.len() as f64;
    println!("mean eta_hat on test: {mean_eta:.4}");
    Ok(())
}
