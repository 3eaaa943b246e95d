//! Trend calibration: ablation modes, tau sweep, nu sweep on the fixtures.

use std::path::PathBuf;

use mft_core::correction::SaturatedPolicy;
use mft_core::data::ReplayConfig;
use mft_core::training::{self, Objective, RunConfig, RunPaths};

fn main() {
    let out = PathBuf::from("target/dryrun2");
    std::fs::create_dir_all(&out).unwrap();
    let reference = PathBuf::from("target/dryrun/reference.mft");
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
            reference_checkpoint: reference,
            out_dir: out.clone(),
        },
    };

    let mut jobs: Vec<(String, RunConfig)> = Vec::new();
    for (label, obj) in [
        ("ablate corrective_ft", Objective::corrective_ft()),
        ("ablate singly_0.25", Objective::singly_corrective(0.25).unwrap()),
    ] {
        let mut cfg = base.clone();
        cfg.objective = obj;
        jobs.push((label.to_string(), cfg));
    }
    for tau in [0.0, 0.1, 0.5, 0.75, 1.0] {
        let mut cfg = base.clone();
        cfg.objective = Objective::full_mft(tau).unwrap();
        jobs.push((format!("tau {tau}"), cfg));
    }
    for nu in [0.5] {
        let mut cfg = base.clone();
        cfg.replay = ReplayConfig::new(nu).unwrap();
        jobs.push((format!("nu {nu}"), cfg));
    }

    for (label, mut cfg) in jobs {
        cfg.paths.out_dir = out.join(label.replace(' ', "_"));
        let t = std::time::Instant::now();
        let r = training::run(&cfg).unwrap();
        let m = &r.report;
        println!(
            "{label}: best {} -> S {:.2}% DG {:.2}% ratio {:?} hash {} ({:.0}s)",
            r.best.step,
            m.specialization,
            m.degeneralization,
            m.ratio.map(|v| (v * 1000.0).round() / 1000.0),
            &r.best.param_hash[..8],
            t.elapsed().as_secs_f64()
        );
    }
}
