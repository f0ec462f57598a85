//! Train the full network and each single-component ablation on one
//! benchmark and compare uplift ranking quality.
//!
//! cargo run --release --example ablation_study -- [preset] [seeds]

use unimvt::baselines::UpliftEstimator;
use unimvt::datagen::{generate, SynSpec};
use unimvt::htenet::{train, ModelConfig, TrainConfig};
use unimvt::metrics::{cs_qini, spearman, DEFAULT_GRID};

fn main() -> unimvt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = args.first().map(String::as_str).unwrap_or("syn1");
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let bench = generate(&SynSpec::preset(preset)?)?;
    let test = &bench.test.samples;
    let truth: Vec<f64> = test.iter().map(|s| s.truth_eta.unwrap_or(0.0)).collect();

    let mut no_dcr = ModelConfig::default();
    no_dcr.dcr.enabled = false;
    let variants = [
        ("full", ModelConfig::default(), true),
        ("w/o DCR", no_dcr, true),
        ("w/o X-Network", ModelConfig::default(), false),
        ("w/o Treatment Tower", ModelConfig { treat_tower: false, ..ModelConfig::default() }, true),
    ];
    for (name, model_cfg, xnet) in variants {
        let (mut q, mut rho) = (0.0, 0.0);
        for seed in 0..seeds {
            let mut cfg = TrainConfig { seed, ..TrainConfig::default() };
            cfg.loss.xnet = xnet;
            let (model, _) = train(&bench.train, &model_cfg, &cfg)?;
            let uplift = model.unit_uplifts(test)?;
            q += cs_qini(&uplift, test, DEFAULT_GRID)?;
            rho += spearman(&uplift, &truth)?;
        }
        let n = seeds as f64;
        println!("{name:<20} mean cs-qini {:>8.2}  mean spearman {:.3}", q / n, rho / n);
    }
    Ok(())
}
