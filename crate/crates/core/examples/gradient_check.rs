//! Compare tape gradients of the joint loss against central finite
//! differences on one mixed batch, for the full network and its ablations.
//!
//! cargo run --release --example gradient_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unimvt::datagen::{generate, SynSpec};
use unimvt::htenet::{joint_loss, LossConfig, LossWeights, ModelConfig, UniMvt};
use unimvt::numerics::finite_diff_check;

fn main() -> unimvt::Result<()> {
    let data = generate(&SynSpec { n_train: 400, n_test: 16, ..SynSpec::syn3() })?.train;
    let mut batch: Vec<_> = data.samples.iter().filter(|s| s.w).take(16).cloned().collect();
    batch.extend(data.samples.iter().filter(|s| !s.w).take(16).cloned());
    let cfg = LossConfig {
        weights: LossWeights { o: 0.1, ..LossWeights::default() },
        xnet: true,
    };
    for (name, dcr, tower) in [("full", true, true), ("w/o DCR", false, true), ("w/o tower", true, false)] {
        let mut config = ModelConfig::default();
        config.dcr.enabled = dcr;
        config.treat_tower = tower;
        let mut model = UniMvt::new(config, 1.0, 4.0, &mut ChaCha8Rng::seed_from_u64(1))?;
        let frozen = model.clone();
        let r = finite_diff_check(&mut model.store, 1e-5, |store, tape| {
            joint_loss(&frozen, store, &batch, &cfg, tape).map(|(v, _)| v)
        })?;
        println!(
            "{name:<10} entries {:>6}  max rel error {:.2e}  worst {:?}",
            r.entries_checked, r.max_rel_error, r.worst
        );
    }
    Ok(())
}
