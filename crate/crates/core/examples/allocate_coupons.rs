//! Train on Syn-2, then decide coupon intensities for the test users and
//! compare the decisions against the generator's true response.
//!
//! cargo run --release --example allocate_coupons -- [value-per-click] [threshold]

use unimvt::allocator::{decide, AllocationGrid, SimulateMode};
use unimvt::datagen::{generate, SynSpec};
use unimvt::htenet::{train, ModelConfig, TrainConfig};

fn main() -> unimvt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let value: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(40.0);
    let threshold: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let bench = generate(&SynSpec::syn2())?;
    let (model, _) = train(&bench.train, &ModelConfig::default(), &TrainConfig::default())?;
    let grid = AllocationGrid::new(0.5, 3.0, 0.25)?;
    let test = &bench.test.samples;
    let preds = model.predict_samples(test, None)?;

    for mode in [SimulateMode::Logit, SimulateMode::Additive] {
        let (mut issued, mut spend, mut predicted, mut realized) = (0, 0.0, 0.0, 0.0);
        for (s, p) in test.iter().zip(&preds) {
            let d = decide(p, &grid, value, threshold, mode)?;
            if d.issue {
                issued += 1;
                spend += d.q_star;
                predicted += d.expected_uplift;
                let truth = s.truth_click_prob(d.q_star).unwrap_or(0.0) - s.truth_click_prob(0.0).unwrap_or(0.0);
                realized += truth;
            }
        }
        println!(
            "{mode:<8} issued {issued:>5}/{}  spend {spend:>8.1}  predicted clicks {predicted:>7.1}  true clicks {realized:>7.1}  true net {:>8.1}",
            test.len(),
            value * realized - spend
        );
    }
    Ok(())
}
