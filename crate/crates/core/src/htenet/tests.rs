use super::*;
use crate::datagen::{generate, Dataset, Sample, SynSpec};
use crate::numerics::{finite_diff_check, logit, sigmoid, Activation, Dense, ParamStore, Tape};
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_data(n: usize) -> Dataset {
    generate(&SynSpec {
        n_train: n,
        n_test: 16,
        ..SynSpec::syn3()
    })
    .unwrap()
    .train
}

fn model(seed: u64) -> UniMvt {
    UniMvt::new(ModelConfig::default(), 1.0, 4.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn bce(p: f64, y: bool) -> f64 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[test]
fn counterfactuals_invert_each_other() {
    assert!((counterfactual_treat(0.5, 1.0, 3f64.ln()) - 0.75).abs() < 1e-12);
    let want = sigmoid(logit(0.2) + 0.6);
    assert!((counterfactual_treat(0.2, 2.0, 0.3) - want).abs() < 1e-15);
    for &(p, t, e) in &[(0.2, 2.0, 0.3), (0.9, 0.5, 1.1), (0.01, 4.0, 0.0)] {
        let back = counterfactual_base(counterfactual_treat(p, t, e), t, e);
        assert!((back - p).abs() < 1e-12);
    }
}

#[test]
fn treatment_encoding_is_normalized() {
    assert_eq!(TreatmentEncoding::new(1.0, 1.0, 3.0).e_t, [0.0, 0.0]);
    assert_eq!(TreatmentEncoding::new(2.0, 1.0, 3.0).e_t, [0.5, 0.25]);
    assert_eq!(TreatmentEncoding::new(3.0, 1.0, 3.0).e_t, [1.0, 1.0]);
}

#[test]
fn ta_gate_with_zero_weights_is_identity() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gate = Dense::new(&mut store, "g", 2, 3, Activation::Sigmoid, &mut rng);
    store.set_value(gate.weight, Array2::zeros((2, 3))).unwrap();
    let mut tape = Tape::new();
    let e = tape.constant(array![[0.3, 0.09]]);
    let h = tape.constant(array![[1.0, -2.0, 0.5]]);
    let out = ta_gate(&gate, &store, e, h, &mut tape).unwrap();
    assert_eq!(tape.value(out), &array![[1.0, -2.0, 0.5]]);

    store.set_value(gate.bias, array![[100.0, -100.0, 0.0]]).unwrap();
    let mut tape = Tape::new();
    let e = tape.constant(array![[0.3, 0.09]]);
    let h = tape.constant(array![[1.0, -2.0, 0.5]]);
    let out = ta_gate(&gate, &store, e, h, &mut tape).unwrap();
    let v = tape.value(out);
    assert!((v[[0, 0]] - 2.0).abs() < 1e-12 && v[[0, 1]].abs() < 1e-12 && (v[[0, 2]] - 0.5).abs() < 1e-12);
}

#[test]
fn predictions_respect_ranges() {
    let m = model(3);
    let data = small_data(200);
    for p in m.predict_samples(&data.samples, None).unwrap() {
        assert!(p.p0_hat > 0.0 && p.p0_hat < 1.0);
        assert!(p.pt_hat > 0.0 && p.pt_hat < 1.0);
        assert!(p.t_hat >= 1.0 && p.t_hat <= 4.0);
        assert!(p.eta_hat >= 0.0);
        assert!((p.tau_hat - p.t_hat * p.eta_hat).abs() < 1e-15);
        assert!(!p.extrapolated);
    }
    let x = data.samples[0].x;
    assert!(m.predict(&x, Some(5.0)).unwrap().extrapolated);
    assert!(m.predict(&x, Some(0.5)).unwrap().extrapolated);
    let q = m.predict(&x, Some(2.0)).unwrap();
    assert!((q.tau_hat - 2.0 * q.eta_hat).abs() < 1e-15);
}

#[test]
fn invalid_bounds_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(UniMvt::new(ModelConfig::default(), 2.0, 2.0, &mut rng).is_err());
    assert!(UniMvt::new(ModelConfig::default(), 0.0, 2.0, &mut rng).is_err());
}

#[test]
fn zero_weights_give_zero_loss() {
    let m = model(0);
    let data = small_data(32);
    let cfg = LossConfig {
        weights: LossWeights::zero(),
        xnet: true,
    };
    let mut tape = Tape::new();
    let (root, _) = joint_loss(&m, &m.store, &data.samples, &cfg, &mut tape).unwrap();
    assert_eq!(tape.scalar(root), 0.0);
}

#[test]
fn single_control_row_at_half_is_ln2() {
    let mut m = model(0);
    let last = m.hte.base_tower.layers.last().unwrap().clone();
    let (r, c) = m.store.value(last.weight).dim();
    m.store.set_value(last.weight, Array2::zeros((r, c))).unwrap();
    m.store.set_value(last.bias, Array2::zeros((1, c))).unwrap();
    let row = Sample {
        x: [0.1; 8],
        w: false,
        t: 0.0,
        y: true,
        truth_p0: None,
        truth_eta: None,
    };
    let cfg = LossConfig {
        weights: LossWeights {
            base: 1.0,
            ..LossWeights::zero()
        },
        xnet: false,
    };
    let mut tape = Tape::new();
    let (root, parts) = joint_loss(&m, &m.store, &[row], &cfg, &mut tape).unwrap();
    assert!((tape.scalar(root) - 2f64.ln()).abs() < 1e-12);
    assert_eq!(parts.treat, 0.0);
    assert_eq!(parts.t, 0.0);
}

#[test]
fn components_match_scalar_oracle() {
    let m = model(5);
    let data = small_data(400);
    let mut batch: Vec<Sample> = data.samples.iter().filter(|s| s.w).take(4).cloned().collect();
    batch.extend(data.samples.iter().filter(|s| !s.w).take(4).cloned());
    let w = LossWeights::default();

    let (mut base, mut treat, mut lt, mut xt, mut xb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in &batch {
        let imputed = m.predict(&s.x, None).unwrap();
        if s.w {
            let at_obs = m.predict(&s.x, Some(s.t)).unwrap();
            treat += bce(at_obs.pt_hat, s.y);
            let d = s.t - imputed.t_hat;
            lt += w.l1 * d * d + w.l2 * d.abs();
            let cf = counterfactual_treat(imputed.p0_hat, imputed.t_hat, imputed.eta_hat);
            xt += (f64::from(u8::from(s.y)) - cf).powi(2);
        } else {
            base += bce(imputed.p0_hat, s.y);
            let cf = counterfactual_base(imputed.pt_hat, imputed.t_hat, imputed.eta_hat);
            xb += (f64::from(u8::from(s.y)) - cf).powi(2);
        }
    }
    let mut tape = Tape::new();
    let (root, parts) = joint_loss(&m, &m.store, &batch, &LossConfig::default(), &mut tape).unwrap();
    for (got, want) in [(parts.base, base), (parts.treat, treat), (parts.t, lt), (parts.x_treat, xt), (parts.x_base, xb)] {
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
    let orth = crate::dcr::orth_penalty_value(&m.dcr, &m.store).unwrap();
    assert!((parts.orth - orth).abs() < 1e-10 * orth.max(1.0));
    let total = tape.scalar(root);
    assert!((total - parts.weighted_total(&w)).abs() < 1e-12 * total.abs().max(1.0));
}

#[test]
fn intensity_loss_does_not_reach_the_representation() {
    let mut m = model(2);
    let data = small_data(64);
    let cfg = LossConfig {
        weights: LossWeights {
            t: 1.0,
            l1: 1.0,
            l2: 1.0,
            ..LossWeights::zero()
        },
        xnet: false,
    };
    let mut tape = Tape::new();
    let (root, _) = joint_loss(&m, &m.store, &data.samples, &cfg, &mut tape).unwrap();
    tape.backward(root, 1.0, &mut m.store).unwrap();
    for id in m.dcr.params() {
        assert!(m.store.grad(id).iter().all(|g| *g == 0.0), "{}", m.store.get(id).name);
    }
    let head_grad: f64 = m.hte.intensity_head.params().iter().map(|&id| m.store.grad(id).mapv(f64::abs).sum()).sum();
    assert!(head_grad > 0.0);
}

#[test]
fn disabling_xnet_zeroes_counterfactual_terms() {
    let m = model(4);
    let data = small_data(64);
    let cfg = LossConfig {
        xnet: false,
        ..LossConfig::default()
    };
    let mut tape = Tape::new();
    let (_, parts) = joint_loss(&m, &m.store, &data.samples, &cfg, &mut tape).unwrap();
    assert_eq!(parts.x(), 0.0);
    assert!(parts.base > 0.0 && parts.treat > 0.0);
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    for (dcr_on, tower_on) in [(true, true), (false, true), (true, false)] {
        let mut config = ModelConfig::default();
        config.dcr.enabled = dcr_on;
        config.treat_tower = tower_on;
        let mut m = UniMvt::new(config, 1.0, 4.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let data = small_data(32);
        let cfg = LossConfig {
            weights: LossWeights {
                o: 0.1,
                ..LossWeights::default()
            },
            xnet: true,
        };
        let frozen = m.clone();
        let report = finite_diff_check(&mut m.store, 1e-5, |store, tape| {
            joint_loss(&frozen, store, &data.samples, &cfg, tape).map(|(v, _)| v)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "dcr={dcr_on} tower={tower_on}: {report:?}");
    }
}

#[test]
fn empty_batch_is_rejected() {
    let m = model(0);
    let mut tape = Tape::new();
    assert!(joint_loss(&m, &m.store, &[], &LossConfig::default(), &mut tape).is_err());
}

#[test]
fn model_text_roundtrip_is_exact() {
    let data = small_data(300);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let (m, _) = train(&data, &ModelConfig::default(), &cfg).unwrap();
    let back = model_from_text(&model_to_text(&m).unwrap()).unwrap();
    assert_eq!(back.store.to_text(), m.store.to_text());
    assert_eq!(back.t_bounds(), m.t_bounds());
    let a = m.predict_samples(&data.samples[..20], None).unwrap();
    let b = back.predict_samples(&data.samples[..20], None).unwrap();
    assert_eq!(a, b);
    assert!(model_from_text("garbage").is_err());
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let data = small_data(2000);
    let cfg = TrainConfig {
        epochs: 5,
        seed: 11,
        ..TrainConfig::default()
    };
    let (m1, h1) = train(&data, &ModelConfig::default(), &cfg).unwrap();
    let (m2, h2) = train(&data, &ModelConfig::default(), &cfg).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1.store.to_text(), m2.store.to_text());
    assert!(h1.last().unwrap().total < h1[0].total);
    let csv = history_csv(&h1);
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with(HISTORY_HEADER));
}

#[test]
fn training_rejects_degenerate_input() {
    let mut data = small_data(50);
    let bad = TrainConfig {
        batch: 0,
        ..TrainConfig::default()
    };
    assert!(train(&data, &ModelConfig::default(), &bad).is_err());
    data.samples.retain(|s| !s.w);
    assert!(train(&data, &ModelConfig::default(), &TrainConfig::default()).is_err());
}

