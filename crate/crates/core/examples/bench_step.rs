//! Rough step-time measurement at a given model scale.

use std::time::Instant;

use mft_core::data::{fixtures, Corpus, DomainTag};
use mft_core::model::{TinyLM, TinyLMConfig};
use mft_core::numerics::adam::Adam;
use mft_core::training::{train_step, Objective, StepOptions};

fn main() {
    let cfg = TinyLMConfig {
        vocab_size: 259,
        d_model: 64,
        n_layers: 2,
        n_heads: 4,
        d_ff: 128,
        seq_len: 128,
        tie_embeddings: true,
    };
    let text = fixtures::legal_style(1, 200_000);
    let docs: Vec<Vec<u8>> = text
        .split("\n\n")
        .filter(|d| !d.trim().is_empty())
        .map(|d| d.as_bytes().to_vec())
        .collect();
    let corpus = Corpus::from_documents(DomainTag::Specialized, docs);
    let packed = mft_core::data::pack::pack(&corpus, cfg.seq_len).unwrap();
    let batches = mft_core::data::pack::make_batches(
        packed,
        None,
        8,
        mft_core::data::ReplayConfig::none(),
        40,
        7,
    )
    .unwrap();

    let mut student = TinyLM::init(cfg, 3).unwrap();
    let teacher = student.clone_frozen();
    let mut opt = Adam::new(student.params(), 1e-3);
    let objective = Objective::full_mft(0.25).unwrap();
    let opts = StepOptions::default();

    let mut batches: Vec<_> = batches.collect();
    // warmup
    let b0 = batches.remove(0);
    train_step(&mut student, Some(&teacher), &b0, &objective, &mut opt, &opts).unwrap();

    let t0 = Instant::now();
    let n = batches.len();
    for b in &batches {
        train_step(&mut student, Some(&teacher), b, &objective, &mut opt, &opts).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("{} steps (mft) in {:.2}s -> {:.0} ms/step", n, dt, 1000.0 * dt / n as f64);
}
