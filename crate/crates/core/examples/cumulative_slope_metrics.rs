//! Cumulative-slope curves on the Syn-1 test split for three rankings: the
//! true unit uplift, its reverse and a random order.
//!
//! cargo run --release --example cumulative_slope_metrics

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimvt::datagen::{generate, SynSpec};
use unimvt::metrics::{CumulativeSlopeCurve, DEFAULT_GRID};

fn main() -> unimvt::Result<()> {
    let test = generate(&SynSpec::syn1())?.test.samples;
    let truth: Vec<f64> = test.iter().map(|s| s.truth_eta.unwrap_or(0.0)).collect();
    let reverse: Vec<f64> = truth.iter().map(|v| -v).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let random: Vec<f64> = test.iter().map(|_| rng.random()).collect();
    for (name, scores) in [("truth", &truth), ("reverse", &reverse), ("random", &random)] {
        let c = CumulativeSlopeCurve::new(scores, &test, DEFAULT_GRID)?;
        let at = |phi: f64| {
            c.phi
                .iter()
                .position(|&p| p >= phi)
                .map_or(f64::NAN, |i| c.slope[i])
        };
        println!(
            "{name:<8} cs-auuc {:>9.2}  cs-qini {:>8.2}  beta@10% {:.4}  beta@50% {:.4}  beta_global {:.4}",
            c.cs_auuc(),
            c.cs_qini(),
            at(0.1),
            at(0.5),
            c.global_slope
        );
    }
    Ok(())
}
