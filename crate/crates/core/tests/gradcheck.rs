//! Gradient verification against central finite differences, from a single
//! fused loss up to the full model.

use mft_core::correction::{batch_correct, cross_entropy_soft, cross_entropy_soft_grad, CorrectionConfig, Mode, ProbDist};
use mft_core::model::{forward, TinyLM, TinyLMConfig};
use mft_core::numerics::gradcheck::grad_check;
use mft_core::numerics::params::ParamStore;
use mft_core::numerics::tensor::Tensor;
use rand::Rng;

fn tiny_cfg() -> TinyLMConfig {
    TinyLMConfig {
        vocab_size: 19,
        d_model: 16,
        n_layers: 1,
        n_heads: 4,
        d_ff: 32,
        seq_len: 16,
        tie_embeddings: true,
    }
}

#[test]
fn soft_ce_with_softmax_matches_central_differences_f64() {
    // analytic gradient softmax(logits) - target vs f64 central differences
    // over random 8-dim logits
    let mut rng = mft_core::numerics::rng::stream_rng(17, "test");
    for _ in 0..20 {
        let logits: Vec<f32> = (0..8).map(|_| rng.gen_range(-3.0f32..3.0)).collect();
        let target_raw: Vec<f64> = (0..8).map(|_| rng.gen_range(0.05f64..1.0)).collect();
        let tsum: f64 = target_raw.iter().sum();
        let target = ProbDist::new(target_raw.into_iter().map(|v| v / tsum).collect()).unwrap();

        let analytic = cross_entropy_soft_grad(&logits, &target).unwrap();
        let eps = 1e-5f64;
        for i in 0..8 {
            let mut lp = logits.clone();
            lp[i] = (lp[i] as f64 + eps) as f32;
            let mut lm = logits.clone();
            lm[i] = (lm[i] as f64 - eps) as f32;
            // divide by the step the f32 storage actually realized
            let h = lp[i] as f64 - lm[i] as f64;
            let numeric =
                (cross_entropy_soft(&lp, &target).unwrap() - cross_entropy_soft(&lm, &target).unwrap())
                    / h;
            let rel = (analytic[i] - numeric).abs()
                / 1.0f64.max(analytic[i].abs()).max(numeric.abs());
            assert!(rel < 1e-7, "coordinate {i}: analytic {} numeric {numeric}", analytic[i]);
        }
    }
}

#[test]
fn soft_ce_tape_matches_central_differences_f32() {
    // the same composition through the f32 tape
    let mut rng = mft_core::numerics::rng::stream_rng(29, "test");
    let logits: Vec<f32> = (0..8).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
    let traw: Vec<f32> = (0..8).map(|_| rng.gen_range(0.05f32..1.0)).collect();
    let tsum: f32 = traw.iter().sum();
    let target =
        Tensor::from_vec(&[1, 1, 8], traw.into_iter().map(|v| v / tsum).collect()).unwrap();

    let mut store = ParamStore::new();
    let pid = store.register("logits", Tensor::from_vec(&[1, 1, 8], logits).unwrap(), true);
    let report = grad_check(&mut store, 1e-3, 16, 3, |tape| {
        let l = tape.param(pid);
        tape.soft_ce_loss(l, &target, &[1.0])
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "rel err {} ({:?})", report.max_rel_err, report.worst);
}

fn batch_tokens(cfg: &TinyLMConfig, seed: u64) -> (Vec<u32>, Vec<u32>, Vec<f32>) {
    let mut rng = mft_core::numerics::rng::stream_rng(seed, "test-batch");
    let n = 2 * cfg.seq_len;
    let tokens: Vec<u32> = (0..n).map(|_| rng.gen_range(0..cfg.vocab_size as u32)).collect();
    let mut labels = vec![0u32; n];
    let mut mask = vec![0.0f32; n];
    for b in 0..2 {
        for t in 0..cfg.seq_len - 1 {
            labels[b * cfg.seq_len + t] = tokens[b * cfg.seq_len + t + 1];
            mask[b * cfg.seq_len + t] = 1.0;
        }
    }
    (tokens, labels, mask)
}

#[test]
fn full_model_gradients_pass_with_one_hot_targets() {
    let cfg = tiny_cfg();
    let mut model = TinyLM::init(cfg.clone(), 11).unwrap();
    let (tokens, labels, mask) = batch_tokens(&cfg, 5);
    let mut targets = vec![0.0f32; labels.len() * cfg.vocab_size];
    for (r, (&l, &m)) in labels.iter().zip(&mask).enumerate() {
        if m == 0.0 {
            targets[r * cfg.vocab_size..(r + 1) * cfg.vocab_size]
                .fill(1.0 / cfg.vocab_size as f32);
        } else {
            targets[r * cfg.vocab_size + l as usize] = 1.0;
        }
    }
    let targets = Tensor::from_vec(&[2, cfg.seq_len, cfg.vocab_size], targets).unwrap();

    let (spec, params) = model.parts_mut();
    let report = grad_check(params, 1e-3, 220, 77, |tape| {
        forward::loss_taped(spec, tape, &tokens, 2, cfg.seq_len, &targets, &mask)
    })
    .unwrap();
    assert!(report.checked >= 200);
    assert!(report.max_rel_err < 1e-3, "rel err {} ({:?})", report.max_rel_err, report.worst);
}

#[test]
fn full_model_gradients_pass_with_corrected_targets() {
    let cfg = tiny_cfg();
    let mut model = TinyLM::init(cfg.clone(), 13).unwrap();
    let teacher = model.clone_frozen();
    let (tokens, labels, mask) = batch_tokens(&cfg, 9);
    let teacher_logits = teacher.forward(&tokens, 2, cfg.seq_len).unwrap();
    let ccfg = CorrectionConfig::new(Mode::FullMft, 0.25).unwrap();
    let (targets, _) = batch_correct(&teacher_logits, &labels, &mask, &ccfg).unwrap();

    let (spec, params) = model.parts_mut();
    let report = grad_check(params, 1e-3, 220, 78, |tape| {
        forward::loss_taped(spec, tape, &tokens, 2, cfg.seq_len, &targets, &mask)
    })
    .unwrap();
    assert!(report.checked >= 200);
    assert!(report.max_rel_err < 1e-3, "rel err {} ({:?})", report.max_rel_err, report.worst);
}

#[test]
fn adapter_gradients_pass() {
    let cfg = tiny_cfg();
    let mut model = TinyLM::init(cfg.clone(), 15).unwrap();
    model
        .attach_adapter(&mft_core::model::AdapterConfig::all_projections(3), 4)
        .unwrap();
    // move the zero-initialized halves so their gradients are informative
    let ids: Vec<_> = model
        .params()
        .iter()
        .filter(|(_, p)| p.name.ends_with("lora_up"))
        .map(|(id, _)| id)
        .collect();
    for id in ids {
        for (i, v) in model.params_mut().get_mut(id).data_mut().iter_mut().enumerate() {
            *v = 0.02 * ((i % 7) as f32 - 3.0);
        }
    }
    let (tokens, labels, mask) = batch_tokens(&cfg, 21);
    let mut targets = vec![0.0f32; labels.len() * cfg.vocab_size];
    for (r, &l) in labels.iter().enumerate() {
        targets[r * cfg.vocab_size + l as usize] = 1.0;
    }
    let targets = Tensor::from_vec(&[2, cfg.seq_len, cfg.vocab_size], targets).unwrap();

    let (spec, params) = model.parts_mut();
    let report = grad_check(params, 1e-3, 150, 79, |tape| {
        forward::loss_taped(spec, tape, &tokens, 2, cfg.seq_len, &targets, &mask)
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-3, "rel err {} ({:?})", report.max_rel_err, report.worst);
}
