//! Fit the full network and both meta-learners on one benchmark and print
//! base-CTR quality and cumulative-slope uplift metrics on the RCT test split.
//!
//! cargo run --release --example compare_baselines -- [preset] [epochs] [seed]

use unimvt::baselines::{train_slearner, train_tlearner, BaselineConfig, UpliftEstimator};
use unimvt::datagen::{generate, SynSpec};
use unimvt::htenet::{train, ModelConfig, TrainConfig};
use unimvt::metrics::{intensity_edges, spearman, MetricsReport, DEFAULT_GRID};

fn report(name: &str, model: &dyn UpliftEstimator, test: &[unimvt::datagen::Sample], edges: &[f64]) -> unimvt::Result<()> {
    let p0 = model.base_probs(test)?;
    let uplift = model.unit_uplifts(test)?;
    let m = MetricsReport::compute(&p0, &uplift, test, DEFAULT_GRID, edges)?;
    let truth: Vec<f64> = test.iter().map(|s| s.truth_eta.unwrap_or(0.0)).collect();
    let rho = spearman(&uplift, &truth).unwrap_or(f64::NAN);
    println!(
        "{name:<10} auc {:.4}  logloss {:.4}  cs-auuc {:>9.2}  cs-qini {:>8.2}  spearman {:.3}",
        m.auc.unwrap_or(f64::NAN),
        m.logloss,
        m.cs_auuc,
        m.cs_qini,
        rho
    );
    Ok(())
}

fn main() -> unimvt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = args.first().map(String::as_str).unwrap_or("syn1");
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let bench = generate(&SynSpec::preset(preset)?)?;
    let train_cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let base_cfg = BaselineConfig {
        train: train_cfg.clone(),
        ..BaselineConfig::default()
    };
    let (lo, hi) = bench.train.treated_range().unwrap_or((1.0, 2.0));
    let edges = intensity_edges(lo, hi, 5);
    let test = &bench.test.samples;

    let (unimvt, _) = train(&bench.train, &ModelConfig::default(), &train_cfg)?;
    report("unimvt", &unimvt, test, &edges)?;
    let (s, _) = train_slearner(&bench.train, &base_cfg)?;
    report("s-learner", &s, test, &edges)?;
    let (t, _) = train_tlearner(&bench.train, &base_cfg)?;
    report("t-learner", &t, test, &edges)?;
    Ok(())
}
