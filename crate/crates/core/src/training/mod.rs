//! The teacher-student training loop and run orchestration.
//!
//! A run starts from a shared reference checkpoint, optionally clones it as a
//! frozen teacher, then repeats: forward both models on a batch, correct the
//! teacher's distributions into per-token targets, take the soft cross-entropy
//! gradient step on the student. Periodic evaluations write checkpoint
//! records; the reported result is the checkpoint with the lowest specialized
//! validation perplexity.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::correction::{self, CorrectionConfig, Mode, SaturatedPolicy};
use crate::data::{self, Batch, DomainTag, ReplayConfig};
use crate::error::{MftError, Result};
use crate::experiment::{compute_metrics, perplexity, MetricsReport};
use crate::model::checkpoint::{self, param_hash};
use crate::model::{forward, AdapterConfig, TinyLM};
use crate::numerics::adam::Adam;
use crate::numerics::tape::GradTape;
use crate::numerics::tensor::Tensor;

/// Training-target mode plus its margin parameter.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Objective {
    pub mode: Mode,
    /// Target correction margin; ignored by `PlainFt` and `CorrectiveFt`.
    pub tau: f64,
}

impl Objective {
    pub fn plain_ft() -> Self {
        Objective { mode: Mode::PlainFt, tau: 1.0 }
    }

    pub fn corrective_ft() -> Self {
        Objective { mode: Mode::CorrectiveFt, tau: 1.0 }
    }

    pub fn singly_corrective(tau: f64) -> Result<Self> {
        let o = Objective { mode: Mode::SinglyCorrective, tau };
        o.validate()?;
        Ok(o)
    }

    pub fn full_mft(tau: f64) -> Result<Self> {
        let o = Objective { mode: Mode::FullMft, tau };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::FullMft | Mode::SinglyCorrective => {
                if !(0.0..=1.0).contains(&self.tau) {
                    return Err(MftError::config(format!("tau {} outside [0, 1]", self.tau)));
                }
            }
            Mode::PlainFt | Mode::CorrectiveFt => {}
        }
        Ok(())
    }

    pub fn needs_teacher(&self) -> bool {
        self.mode != Mode::PlainFt
    }

    pub fn label(&self) -> &'static str {
        match self.mode {
            Mode::PlainFt => "plain_ft",
            Mode::CorrectiveFt => "corrective_ft",
            Mode::SinglyCorrective => "singly_corrective",
            Mode::FullMft => "full_mft",
        }
    }

    fn correction_config(&self, policy: SaturatedPolicy) -> Result<CorrectionConfig> {
        let mut cfg = CorrectionConfig::new(
            self.mode,
            match self.mode {
                Mode::PlainFt | Mode::CorrectiveFt => 1.0,
                _ => self.tau,
            },
        )?;
        cfg.saturated_policy = policy;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunPaths {
    pub specialized_corpus: PathBuf,
    pub general_corpus: PathBuf,
    pub reference_checkpoint: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub objective: Objective,
    pub replay: ReplayConfig,
    pub adapter: Option<AdapterConfig>,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub lr: f64,
    /// Specialized-domain training budget in tokens; 0 means all available.
    pub spec_budget_tokens: usize,
    /// Validation tokens split off per domain.
    pub val_tokens: usize,
    pub saturated_policy: SaturatedPolicy,
    /// When replaying under a distillation objective, general-domain rows
    /// normally pass through the distribution correction like everything
    /// else; this flag gives them plain one-hot targets instead.
    pub replay_bypass_dc: bool,
    /// Optional guard: stop early once degeneralization (percent) exceeds this.
    pub max_degeneralization: Option<f64>,
    pub paths: RunPaths,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(MftError::config("steps, batch_size, eval_every must be >= 1"));
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(MftError::config(format!("invalid learning rate {}", self.lr)));
        }
        ReplayConfig::new(self.replay.nu)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: usize,
    pub spec_val_ppl: f64,
    pub gen_val_ppl: f64,
    pub path: PathBuf,
    pub param_hash: String,
}

impl CheckpointRecord {
    fn new(step: usize, spec: f64, gen: f64, path: PathBuf, hash: String) -> Result<Self> {
        if !(spec.is_finite() && spec > 0.0 && gen.is_finite() && gen > 0.0) {
            return Err(MftError::numeric(format!(
                "checkpoint record at step {step} has invalid perplexities ({spec}, {gen})"
            )));
        }
        Ok(CheckpointRecord { step, spec_val_ppl: spec, gen_val_ppl: gen, path, param_hash: hash })
    }
}

/// Record with the lowest specialized validation perplexity; ties go to the
/// earliest step.
pub fn select_best(records: &[CheckpointRecord]) -> Result<&CheckpointRecord> {
    records
        .iter()
        .min_by(|a, b| {
            a.spec_val_ppl
                .partial_cmp(&b.spec_val_ppl)
                .expect("record perplexities are finite")
                .then(a.step.cmp(&b.step))
        })
        .ok_or_else(|| MftError::config("select_best: no checkpoint records"))
}

/// Per-step knobs that are not part of the objective itself.
#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    pub saturated_policy: SaturatedPolicy,
    pub replay_bypass_dc: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { saturated_policy: SaturatedPolicy::Keep, replay_bypass_dc: false }
    }
}

/// One-hot targets with the same masked-row sentinel as `batch_correct`.
fn one_hot_targets(labels: &[u32], mask: &[f32], batch: usize, seq: usize, vocab: usize) -> Tensor {
    let mut data = vec![0.0f32; batch * seq * vocab];
    let uniform = 1.0f32 / vocab as f32;
    for (r, &m) in mask.iter().enumerate() {
        let row = &mut data[r * vocab..(r + 1) * vocab];
        if m == 0.0 {
            row.fill(uniform);
        } else {
            row[labels[r] as usize] = 1.0;
        }
    }
    Tensor::from_vec_unchecked(&[batch, seq, vocab], data)
}

/// One optimizer update on the student. Returns the masked mean loss.
pub fn train_step(
    student: &mut TinyLM,
    teacher: Option<&TinyLM>,
    batch: &Batch,
    objective: &Objective,
    opt: &mut Adam,
    opts: &StepOptions,
) -> Result<f64> {
    objective.validate()?;
    if objective.needs_teacher() && teacher.is_none() {
        return Err(MftError::config(format!(
            "objective {} requires a teacher, none provided",
            objective.label()
        )));
    }
    if !objective.needs_teacher() && teacher.is_some() {
        return Err(MftError::config("plain finetuning takes no teacher"));
    }
    let vocab = student.config().vocab_size;
    let (batch_n, seq) = (batch.batch, batch.seq);

    let mut mask = batch.loss_mask.clone();
    let targets = match teacher {
        None => one_hot_targets(&batch.labels, &mask, batch_n, seq, vocab),
        Some(t) => {
            if t.config() != student.config() {
                return Err(MftError::config("teacher and student configs differ"));
            }
            let teacher_logits = t.forward(&batch.tokens, batch_n, seq)?;
            let ccfg = objective.correction_config(opts.saturated_policy)?;
            let (mut targets, diags) =
                correction::batch_correct(&teacher_logits, &batch.labels, &mask, &ccfg)?;
            if opts.saturated_policy == SaturatedPolicy::Mask {
                for d in &diags {
                    if d.diag.branch == correction::Branch::Saturated {
                        mask[d.batch_index * seq + d.position] = 0.0;
                    }
                }
            }
            if opts.replay_bypass_dc && batch.n_specialized < batch_n {
                let from = batch.n_specialized * seq;
                overwrite_one_hot(&mut targets, &batch.labels, &mask, from, batch_n * seq, vocab);
            }
            targets
        }
    };

    let (spec, params) = student.parts_mut();
    let mut tape = GradTape::new(params);
    let loss_id = forward::loss_taped(spec, &mut tape, &batch.tokens, batch_n, seq, &targets, &mask)?;
    let loss = tape.scalar_f64(loss_id)?;
    if !loss.is_finite() {
        return Err(MftError::numeric(format!(
            "non-finite loss {loss} on a [{batch_n}, {seq}] batch ({} mode, tau {})",
            objective.label(),
            objective.tau
        )));
    }
    let grads = tape.backward(loss_id)?;
    drop(tape);
    opt.step(params, &grads)?;
    Ok(loss)
}

fn overwrite_one_hot(
    targets: &mut Tensor,
    labels: &[u32],
    mask: &[f32],
    from_row: usize,
    to_row: usize,
    vocab: usize,
) {
    let uniform = 1.0f32 / vocab as f32;
    for r in from_row..to_row {
        let row = &mut targets.data_mut()[r * vocab..(r + 1) * vocab];
        if mask[r] == 0.0 {
            row.fill(uniform);
        } else {
            row.fill(0.0);
            row[labels[r] as usize] = 1.0;
        }
    }
}

/// Everything a completed run produced.
#[derive(Debug)]
pub struct RunOutput {
    /// (specialized, general) validation perplexity of the reference model.
    pub before: (f64, f64),
    pub records: Vec<CheckpointRecord>,
    pub best: CheckpointRecord,
    pub report: MetricsReport,
    pub out_dir: PathBuf,
    /// Set when the degeneralization guard stopped the run early.
    pub stopped_early_at: Option<usize>,
}

/// Executes a full finetuning run as configured.
///
/// Layout of the output directory: `config.json` (snapshot), `loss.csv`
/// (step, loss, mode), `checkpoints/step*.mft`, `records.json`,
/// `metrics.json`. All files are byte-identical across reruns with the same
/// configuration.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let out_dir = cfg.paths.out_dir.clone();
    fs::create_dir_all(out_dir.join("checkpoints"))?;
    fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg).map_err(|e| MftError::config(e.to_string()))? + "\n",
    )?;

    let mut student = checkpoint::load(&cfg.paths.reference_checkpoint)?;
    let teacher = if cfg.objective.needs_teacher() {
        Some(student.clone_frozen())
    } else {
        None
    };
    let teacher_hash_before = teacher.as_ref().map(param_hash);
    if let Some(acfg) = &cfg.adapter {
        student.attach_adapter(acfg, cfg.seed)?;
    }

    let seq_len = student.config().seq_len;
    let spec_corpus =
        data::load_corpus(&cfg.paths.specialized_corpus, DomainTag::Specialized)?;
    let gen_corpus = data::load_corpus(&cfg.paths.general_corpus, DomainTag::General)?;
    let (spec_train, spec_val) = data::split_validation(&spec_corpus, cfg.val_tokens, cfg.seed)?;
    let (gen_train, gen_val) = data::split_validation(&gen_corpus, cfg.val_tokens, cfg.seed)?;
    let spec_train = data::take_budget(&spec_train, cfg.spec_budget_tokens);

    let spec_pack = data::pack::pack(&spec_train, seq_len)?;
    let spec_val_pack = data::pack::pack(&spec_val, seq_len)?;
    let gen_val_pack = data::pack::pack(&gen_val, seq_len)?;
    let gen_pack = if cfg.replay.nu < 1.0 {
        Some(data::pack::pack(&gen_train, seq_len)?)
    } else {
        None
    };

    let before = (perplexity(&student, &spec_val_pack)?, perplexity(&student, &gen_val_pack)?);

    let mut opt = Adam::new(student.params(), cfg.lr);
    let opts = StepOptions {
        saturated_policy: cfg.saturated_policy,
        replay_bypass_dc: cfg.replay_bypass_dc,
    };
    let batches =
        data::pack::make_batches(spec_pack, gen_pack, cfg.batch_size, cfg.replay, cfg.steps, cfg.seed)?;

    let mut loss_log = fs::File::create(out_dir.join("loss.csv"))?;
    loss_log.write_all(b"step,loss,mode\n")?;
    let mut records: Vec<CheckpointRecord> = Vec::new();
    let mut stopped_early_at = None;

    for (i, batch) in batches.enumerate() {
        let step = i + 1;
        let loss = train_step(&mut student, teacher.as_ref(), &batch, &cfg.objective, &mut opt, &opts)
            .map_err(|e| MftError::numeric(format!("step {step}: {e}")))?;
        writeln!(loss_log, "{step},{loss},{}", cfg.objective.label())?;

        if step % cfg.eval_every == 0 || step == cfg.steps {
            let spec_ppl = perplexity(&student, &spec_val_pack)?;
            let gen_ppl = perplexity(&student, &gen_val_pack)?;
            let path = out_dir.join(format!("checkpoints/step{step}.mft"));
            checkpoint::save(&student, &path)?;
            records.push(CheckpointRecord::new(
                step,
                spec_ppl,
                gen_ppl,
                path,
                param_hash(&student),
            )?);
            flush_records(&out_dir, &records)?;
            if let Some(max_dg) = cfg.max_degeneralization {
                let dg = 100.0 * (gen_ppl - before.1) / before.1;
                if dg > max_dg {
                    stopped_early_at = Some(step);
                    break;
                }
            }
        }
    }
    loss_log.flush()?;

    if let (Some(t), Some(h0)) = (&teacher, &teacher_hash_before) {
        if &param_hash(t) != h0 {
            return Err(MftError::numeric("teacher parameters changed during the run"));
        }
    }

    let best = select_best(&records)?.clone();
    let report = compute_metrics(before, (best.spec_val_ppl, best.gen_val_ppl))?;
    fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&report).map_err(|e| MftError::config(e.to_string()))? + "\n",
    )?;

    Ok(RunOutput { before, records, best, report, out_dir, stopped_early_at })
}

fn flush_records(out_dir: &Path, records: &[CheckpointRecord]) -> Result<()> {
    fs::write(
        out_dir.join("records.json"),
        serde_json::to_string_pretty(records).map_err(|e| MftError::config(e.to_string()))? + "\n",
    )?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub model: crate::model::TinyLMConfig,
    pub general_corpus: PathBuf,
    pub out_path: PathBuf,
    pub val_tokens: usize,
    /// 0 means use every training document.
    pub budget_tokens: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Evaluations without improvement after the first improvement before the
    /// run stops at its plateau.
    pub patience: usize,
}

#[derive(Debug)]
pub struct PretrainOutcome {
    pub checkpoint_path: PathBuf,
    pub best_step: usize,
    pub best_val_ppl: f64,
    pub steps_run: usize,
}

/// Trains the shared reference checkpoint from scratch on the general corpus
/// and keeps the state with the lowest general validation perplexity.
///
/// A model that never improves on its initial validation perplexity within
/// the patience window is treated as diverged and reported as an error;
/// plateauing after improvement is the normal exit.
pub fn pretrain_reference(cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    if cfg.max_steps == 0 || cfg.eval_every == 0 || cfg.batch_size == 0 {
        return Err(MftError::config("pretrain: max_steps, eval_every, batch_size must be >= 1"));
    }
    let corpus = data::load_corpus(&cfg.general_corpus, DomainTag::General)?;
    let (train, val) = data::split_validation(&corpus, cfg.val_tokens, cfg.seed)?;
    let train = data::take_budget(&train, cfg.budget_tokens);
    let seq_len = cfg.model.seq_len;
    let train_pack = data::pack::pack(&train, seq_len)?;
    let val_pack = data::pack::pack(&val, seq_len)?;

    let mut model = TinyLM::init(cfg.model.clone(), cfg.seed)?;
    let mut opt = Adam::new(model.params(), cfg.lr);
    let objective = Objective::plain_ft();
    let opts = StepOptions::default();

    let initial_ppl = perplexity(&model, &val_pack)?;
    let mut best_ppl = f64::INFINITY;
    let mut best_step = 0usize;
    let mut evals_since_improvement = 0usize;
    let mut improved_ever = false;
    let mut steps_run = 0usize;

    let batches = data::pack::make_batches(
        train_pack,
        None,
        cfg.batch_size,
        ReplayConfig::none(),
        cfg.max_steps,
        cfg.seed,
    )?;
    for (i, batch) in batches.enumerate() {
        let step = i + 1;
        train_step(&mut model, None, &batch, &objective, &mut opt, &opts)
            .map_err(|e| MftError::numeric(format!("pretrain step {step}: {e}")))?;
        steps_run = step;
        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let ppl = perplexity(&model, &val_pack)?;
            if ppl < best_ppl {
                best_ppl = ppl;
                best_step = step;
                evals_since_improvement = 0;
                improved_ever = improved_ever || ppl < initial_ppl;
                checkpoint::save(&model, &cfg.out_path)?;
            } else {
                evals_since_improvement += 1;
            }
            if evals_since_improvement >= cfg.patience {
                if !improved_ever {
                    return Err(MftError::numeric(format!(
                        "pretrain diverged: validation perplexity never improved on {initial_ppl:.3}"
                    )));
                }
                break;
            }
        }
    }
    if !improved_ever {
        return Err(MftError::numeric(
            "pretrain diverged: validation perplexity never improved",
        ));
    }
    Ok(PretrainOutcome {
        checkpoint_path: cfg.out_path.clone(),
        best_step,
        best_val_ppl: best_ppl,
        steps_run,
    })
}
