//! `mft`: pretrain a reference model, finetune it with corrective
//! self-distillation or its ablations, and sweep the method's knobs.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration error, 4 data/IO error,
//! 5 numeric failure.

mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mft_core::experiment::{self, render_metrics_table, SweepAxis, SweepSpec};
use mft_core::training::{self, Objective};
use mft_core::{MftError, Result};
use settings::Settings;

#[derive(Parser)]
#[command(name = "mft", version, about = "Corrective self-distillation at desk scale")]
struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed (overrides config file and MFT_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root (overrides config file and MFT_OUT_DIR)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct RunFlags {
    /// plain_ft | corrective_ft | singly_corrective | full_mft
    #[arg(long)]
    objective: Option<String>,
    /// Correction margin in [0, 1]
    #[arg(long)]
    tau: Option<f64>,
    /// New-data fraction in [0, 1]; below 1 mixes general-domain replay rows
    #[arg(long)]
    nu: Option<f64>,
    /// Low-rank adapter rank (0 disables the adapter)
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Specialized-domain training budget in tokens (0 = all)
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    val_tokens: Option<usize>,
    /// keep | mask
    #[arg(long)]
    saturated_policy: Option<String>,
    /// Give replayed general-domain rows one-hot targets instead of corrected ones
    #[arg(long)]
    replay_bypass_dc: Option<bool>,
    /// Stop once degeneralization exceeds this many percent
    #[arg(long)]
    max_dg: Option<f64>,
    #[arg(long)]
    spec_corpus: Option<PathBuf>,
    #[arg(long)]
    gen_corpus: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the shared reference checkpoint on the general corpus
    Pretrain {
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        eval_every: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        val_tokens: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        gen_corpus: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Finetune from the reference checkpoint on the specialized corpus
    Finetune {
        #[command(flatten)]
        flags: RunFlags,
        /// Run directory name under the output root
        #[arg(long)]
        name: Option<String>,
    },
    /// One full run per value of tau | nu | rank | budget
    Sweep {
        /// tau | nu | rank | budget
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values
        #[arg(long)]
        values: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Budget-response runs logging per-step trajectories and overfit onset
    Scarcity {
        /// Comma-separated token budgets
        #[arg(long)]
        budgets: String,
        /// Comma-separated objectives (default plain_ft,full_mft)
        #[arg(long)]
        objectives: Option<String>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// The four-objective incremental ablation
    Ablation {
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Render stored results
    Report {
        /// A finished run directory (reads metrics.json)
        #[arg(long)]
        run: Option<PathBuf>,
        /// A sweep.csv file
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Distribution-correction property suite and gradient checks
    Selftest,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    });
}

fn load_settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        s.out_dir = dir.clone();
    }
    Ok(s)
}

fn apply_flags(s: &mut Settings, f: &RunFlags) -> Result<()> {
    if f.objective.is_some() || f.tau.is_some() {
        s.set_objective(f.objective.as_deref(), f.tau)?;
    }
    if let Some(v) = f.nu {
        s.nu = v;
    }
    if let Some(v) = f.rank {
        s.adapter_rank = v;
    }
    if let Some(v) = f.steps {
        s.steps = v;
    }
    if let Some(v) = f.batch_size {
        s.batch_size = v;
    }
    if let Some(v) = f.eval_every {
        s.eval_every = v;
    }
    if let Some(v) = f.lr {
        s.lr = v;
    }
    if let Some(v) = f.budget {
        s.spec_budget_tokens = v;
    }
    if let Some(v) = f.val_tokens {
        s.val_tokens = v;
    }
    if let Some(p) = &f.saturated_policy {
        s.saturated_policy = match p.as_str() {
            "keep" => mft_core::correction::SaturatedPolicy::Keep,
            "mask" => mft_core::correction::SaturatedPolicy::Mask,
            other => {
                return Err(MftError::config(format!("unknown saturated policy '{other}'")))
            }
        };
    }
    if let Some(v) = f.replay_bypass_dc {
        s.replay_bypass_dc = v;
    }
    if f.max_dg.is_some() {
        s.max_degeneralization = f.max_dg;
    }
    if let Some(p) = &f.spec_corpus {
        s.specialized_corpus = p.clone();
    }
    if let Some(p) = &f.gen_corpus {
        s.general_corpus = p.clone();
    }
    if let Some(p) = &f.reference {
        s.reference_checkpoint = p.clone();
    }
    Ok(())
}

fn parse_axis(name: &str) -> Result<SweepAxis> {
    match name {
        "tau" => Ok(SweepAxis::Tau),
        "nu" => Ok(SweepAxis::Nu),
        "rank" => Ok(SweepAxis::Rank),
        "budget" => Ok(SweepAxis::Budget),
        other => Err(MftError::config(format!(
            "unknown sweep axis '{other}' (expected tau | nu | rank | budget)"
        ))),
    }
}

fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| MftError::config(format!("sweep value '{v}' is not a number")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Pretrain {
            max_steps,
            eval_every,
            batch_size,
            lr,
            patience,
            val_tokens,
            budget,
            gen_corpus,
            reference,
        } => {
            let mut s = load_settings(&cli)?;
            if let Some(v) = max_steps {
                s.pretrain_max_steps = *v;
            }
            if let Some(v) = eval_every {
                s.pretrain_eval_every = *v;
            }
            if let Some(v) = batch_size {
                s.pretrain_batch_size = *v;
            }
            if let Some(v) = lr {
                s.pretrain_lr = *v;
            }
            if let Some(v) = patience {
                s.pretrain_patience = *v;
            }
            if let Some(v) = val_tokens {
                s.pretrain_val_tokens = *v;
            }
            if let Some(v) = budget {
                s.pretrain_budget_tokens = *v;
            }
            if let Some(p) = gen_corpus {
                s.general_corpus = p.clone();
            }
            if let Some(p) = reference {
                s.reference_checkpoint = p.clone();
            }
            let outcome = training::pretrain_reference(&s.pretrain_config())?;
            println!(
                "reference checkpoint: {} (best step {}, general val ppl {:.4}, {} steps run)",
                outcome.checkpoint_path.display(),
                outcome.best_step,
                outcome.best_val_ppl,
                outcome.steps_run
            );
            Ok(())
        }
        Cmd::Finetune { flags, name } => {
            let mut s = load_settings(&cli)?;
            apply_flags(&mut s, flags)?;
            let dir_name = name
                .clone()
                .unwrap_or_else(|| format!("finetune_{}", s.objective.label()));
            let cfg = s.run_config(s.out_dir.join(dir_name))?;
            let out = training::run(&cfg)?;
            println!("run directory: {}", out.out_dir.display());
            println!(
                "before: specialized ppl {:.4}, general ppl {:.4}; best checkpoint at step {}",
                out.before.0, out.before.1, out.best.step
            );
            print!(
                "{}",
                render_metrics_table(&[(s.objective.label().to_string(), out.report.clone())])
            );
            if let Some(step) = out.stopped_early_at {
                println!("stopped early at step {step} (degeneralization guard)");
            }
            Ok(())
        }
        Cmd::Sweep { axis, values, flags } => {
            let mut s = load_settings(&cli)?;
            apply_flags(&mut s, flags)?;
            let axis = parse_axis(axis)?;
            let values = parse_values(values)?;
            let base = s.run_config(s.out_dir.join(format!("sweep_{}", axis.as_str())))?;
            let table = experiment::sweep(&SweepSpec { axis, values, base: base.clone() })?;
            print!("{}", table.to_csv());
            println!("sweep.csv written under {}", base.paths.out_dir.display());
            Ok(())
        }
        Cmd::Scarcity { budgets, objectives, flags } => {
            let mut s = load_settings(&cli)?;
            apply_flags(&mut s, flags)?;
            let budgets: Vec<usize> = budgets
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| MftError::config(format!("budget '{v}' is not an integer")))
                })
                .collect::<Result<_>>()?;
            let objectives: Vec<Objective> = objectives
                .as_deref()
                .unwrap_or("plain_ft,full_mft")
                .split(',')
                .map(|name| settings::parse_objective(name.trim(), s.objective.tau))
                .collect::<Result<_>>()?;
            let base = s.run_config(s.out_dir.join("scarcity"))?;
            let report = experiment::scarcity_suite(&base, &budgets, &objectives)?;
            for row in &report.rows {
                println!(
                    "budget {:>8} {:>18}: overfit onset {}, S {:.2}%, DG {:.2}%",
                    row.budget_tokens,
                    row.objective_label,
                    row.overfit_onset
                        .map(|v| format!("step {v}"))
                        .unwrap_or_else(|| "none".to_string()),
                    row.report.specialization,
                    row.report.degeneralization
                );
            }
            println!("trajectories written under {}", base.paths.out_dir.display());
            Ok(())
        }
        Cmd::Ablation { flags } => {
            let mut s = load_settings(&cli)?;
            apply_flags(&mut s, flags)?;
            let base = s.run_config(s.out_dir.join("ablation"))?;
            let table = experiment::ablation_suite(&base)?;
            print!("{}", table.to_markdown());
            println!("ablation.md written under {}", base.paths.out_dir.display());
            Ok(())
        }
        Cmd::Report { run, sweep } => {
            if run.is_none() && sweep.is_none() {
                return Err(MftError::config("report: pass --run <dir> and/or --sweep <csv>"));
            }
            if let Some(dir) = run {
                let text = std::fs::read_to_string(dir.join("metrics.json"))
                    .map_err(|e| MftError::data(format!("{}: {e}", dir.display())))?;
                let report: mft_core::experiment::MetricsReport = serde_json::from_str(&text)
                    .map_err(|e| MftError::data(format!("metrics.json: {e}")))?;
                let label = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".to_string());
                print!("{}", render_metrics_table(&[(label, report)]));
            }
            if let Some(csv) = sweep {
                let text = std::fs::read_to_string(csv)
                    .map_err(|e| MftError::data(format!("{}: {e}", csv.display())))?;
                print!("{text}");
            }
            Ok(())
        }
        Cmd::Selftest => {
            let s = load_settings(&cli)?;
            let results = mft_core::experiment::selftest::run_selftest(s.seed);
            let mut failed = 0usize;
            for r in &results {
                println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                if !r.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(MftError::numeric(format!("{failed} selftest check(s) failed")));
            }
            Ok(())
        }
    }
}
