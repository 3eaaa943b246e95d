//! Onset probe with a larger validation split (less evaluation noise).

use std::path::PathBuf;

use mft_core::correction::SaturatedPolicy;
use mft_core::data::ReplayConfig;
use mft_core::training::{self, Objective, RunConfig, RunPaths};

fn main() {
    let out = PathBuf::from("target/dryrun5");
    std::fs::create_dir_all(&out).unwrap();
    let base = RunConfig {
        objective: Objective::plain_ft(),
        replay: ReplayConfig::none(),
        adapter: None,
        steps: 500,
        batch_size: 8,
        eval_every: 25,
        seed: 42,
        lr: 1e-3,
        spec_budget_tokens: 8_000,
        val_tokens: 24_000,
        saturated_policy: SaturatedPolicy::Keep,
        replay_bypass_dc: false,
        max_degeneralization: None,
        paths: RunPaths {
            specialized_corpus: PathBuf::from("fixtures/legal.txt"),
            general_corpus: PathBuf::from("fixtures/general.txt"),
            reference_checkpoint: PathBuf::from("target/dryrun/reference.mft"),
            out_dir: out.clone(),
        },
    };
    for (objective, budget) in [
        (Objective::plain_ft(), 8_000usize),
        (Objective::full_mft(0.25).unwrap(), 8_000),
        (Objective::plain_ft(), 6_000),
        (Objective::full_mft(0.25).unwrap(), 6_000),
    ] {
        let mut cfg = base.clone();
        cfg.objective = objective;
        cfg.spec_budget_tokens = budget;
        cfg.paths.out_dir = out.join(format!("{}_{}", objective.label(), budget));
        let r = training::run(&cfg).unwrap();
        let mut running_min = r.before.0;
        let mut onset = None;
        for rec in &r.records {
            if rec.spec_val_ppl > running_min * 1.01 && onset.is_none() {
                onset = Some(rec.step);
            }
            running_min = running_min.min(rec.spec_val_ppl);
        }
        let traj: Vec<String> = r
            .records
            .iter()
            .filter(|rec| rec.step % 100 == 0)
            .map(|rec| format!("{}:{:.3}", rec.step, rec.spec_val_ppl))
            .collect();
        println!(
            "{} b{}: onset {:?} best {} S {:.2} DG {:.2} | {}",
            objective.label(),
            budget,
            onset,
            r.best.step,
            r.report.specialization,
            r.report.degeneralization,
            traj.join(" ")
        );
    }
}
