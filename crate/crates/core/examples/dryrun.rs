//! End-to-end sanity run: pretrain a reference on the general fixture, then
//! finetune on the legal fixture with plain FT and with corrective
//! self-distillation, printing the trade-off metrics for both.

use std::path::PathBuf;

use mft_core::correction::SaturatedPolicy;
use mft_core::data::ReplayConfig;
use mft_core::model::TinyLMConfig;
use mft_core::training::{self, Objective, PretrainConfig, RunConfig, RunPaths};

fn main() {
    let out = PathBuf::from("target/dryrun");
    std::fs::create_dir_all(&out).unwrap();
    let model = TinyLMConfig {
        vocab_size: 259,
        d_model: 64,
        n_layers: 2,
        n_heads: 4,
        d_ff: 128,
        seq_len: 128,
        tie_embeddings: true,
    };
    let reference = out.join("reference.mft");
    let t0 = std::time::Instant::now();
    let pretrain = PretrainConfig {
        model,
        general_corpus: PathBuf::from("fixtures/general.txt"),
        out_path: reference.clone(),
        val_tokens: 8192,
        budget_tokens: 0,
        max_steps: 1000,
        eval_every: 50,
        batch_size: 8,
        lr: 1e-3,
        seed: 42,
        patience: 4,
    };
    let outcome = training::pretrain_reference(&pretrain).unwrap();
    println!(
        "pretrain: best step {} val ppl {:.3} ({} steps, {:.0}s)",
        outcome.best_step,
        outcome.best_val_ppl,
        outcome.steps_run,
        t0.elapsed().as_secs_f64()
    );

    let base = RunConfig {
        objective: Objective::plain_ft(),
        replay: ReplayConfig::none(),
        adapter: None,
        steps: 500,
        batch_size: 8,
        eval_every: 25,
        seed: 42,
        lr: 1e-3,
        spec_budget_tokens: 64_000,
        val_tokens: 8192,
        saturated_policy: SaturatedPolicy::Keep,
        replay_bypass_dc: false,
        max_degeneralization: None,
        paths: RunPaths {
            specialized_corpus: PathBuf::from("fixtures/legal.txt"),
            general_corpus: PathBuf::from("fixtures/general.txt"),
            reference_checkpoint: reference.clone(),
            out_dir: out.join("ft"),
        },
    };

    for (label, objective, budget) in [
        ("ft      b64k", Objective::plain_ft(), 64_000usize),
        ("mft.25  b64k", Objective::full_mft(0.25).unwrap(), 64_000),
        ("ft      b8k", Objective::plain_ft(), 8_000),
        ("mft.25  b8k", Objective::full_mft(0.25).unwrap(), 8_000),
    ] {
        let mut cfg = base.clone();
        cfg.objective = objective;
        cfg.spec_budget_tokens = budget;
        cfg.paths.out_dir = out.join(format!("{}_{}", objective.label(), budget));
        let t = std::time::Instant::now();
        let r = training::run(&cfg).unwrap();
        let m = &r.report;
        println!(
            "{label}: before ({:.3}, {:.3}) best step {} -> S {:.2}% DG {:.2}% ratio {:?} ({:.0}s)",
            r.before.0,
            r.before.1,
            r.best.step,
            m.specialization,
            m.degeneralization,
            m.ratio.map(|v| (v * 1000.0).round() / 1000.0),
            t.elapsed().as_secs_f64()
        );
        // trajectory: print spec val ppl every 100 steps
        let traj: Vec<String> = r
            .records
            .iter()
            .filter(|rec| rec.step % 100 == 0)
            .map(|rec| format!("{}:{:.3}/{:.3}", rec.step, rec.spec_val_ppl, rec.gen_val_ppl))
            .collect();
        println!("    traj(step:spec/gen) {}", traj.join(" "));
    }
}
