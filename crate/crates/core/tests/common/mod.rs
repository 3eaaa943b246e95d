//! Shared setup for integration tests: small fixture corpora, a random
//! reference checkpoint, and a base run configuration.

use std::path::{Path, PathBuf};

use mft_core::correction::SaturatedPolicy;
use mft_core::data::{fixtures, ReplayConfig};
use mft_core::model::{checkpoint, TinyLM, TinyLMConfig};
use mft_core::training::{Objective, RunConfig, RunPaths};

pub fn tiny_cfg() -> TinyLMConfig {
    TinyLMConfig {
        vocab_size: 259,
        d_model: 16,
        n_layers: 1,
        n_heads: 4,
        d_ff: 32,
        seq_len: 32,
        tie_embeddings: true,
    }
}

/// Writes small general/legal corpora and a random-init reference checkpoint
/// into `dir`, returning a run config pointing at them.
pub fn setup(dir: &Path, cfg: TinyLMConfig, seed: u64) -> RunConfig {
    let general = dir.join("general.txt");
    let legal = dir.join("legal.txt");
    std::fs::write(&general, fixtures::general_prose(11, 60_000)).unwrap();
    std::fs::write(&legal, fixtures::legal_style(12, 60_000)).unwrap();
    let reference = dir.join("reference.mft");
    let model = TinyLM::init(cfg, seed).unwrap();
    checkpoint::save(&model, &reference).unwrap();

    RunConfig {
        objective: Objective::plain_ft(),
        replay: ReplayConfig::none(),
        adapter: None,
        steps: 12,
        batch_size: 4,
        eval_every: 4,
        seed,
        lr: 1e-3,
        spec_budget_tokens: 0,
        val_tokens: 2_000,
        saturated_policy: SaturatedPolicy::Keep,
        replay_bypass_dc: false,
        max_degeneralization: None,
        paths: RunPaths {
            specialized_corpus: legal,
            general_corpus: general,
            reference_checkpoint: reference,
            out_dir: dir.join("run"),
        },
    }
}

pub fn out_dir(base: &RunConfig, name: &str) -> PathBuf {
    base.paths.out_dir.parent().unwrap().join(name)
}
