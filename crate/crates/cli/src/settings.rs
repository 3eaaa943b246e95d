//! Layered configuration: built-in defaults, then the TOML config file, then
//! `MFT_SEED` / `MFT_OUT_DIR`, then command-line flags, each overriding the
//! last.

use std::path::PathBuf;

use serde::Deserialize;

use mft_core::correction::{Mode, SaturatedPolicy};
use mft_core::data::ReplayConfig;
use mft_core::model::{AdapterConfig, TinyLMConfig};
use mft_core::training::{Objective, PretrainConfig, RunConfig, RunPaths};
use mft_core::{MftError, Result};

/// Keys accepted in the TOML config file. Every field is optional; missing
/// values fall back to the defaults documented in the README.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: FileModel,
    #[serde(default)]
    pub pretrain: FilePretrain,
    #[serde(default)]
    pub run: FileRun,
    #[serde(default)]
    pub paths: FilePaths,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileModel {
    pub vocab_size: Option<usize>,
    pub d_model: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub seq_len: Option<usize>,
    pub tie_embeddings: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilePretrain {
    pub max_steps: Option<usize>,
    pub eval_every: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub patience: Option<usize>,
    pub val_tokens: Option<usize>,
    pub budget_tokens: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRun {
    pub objective: Option<String>,
    pub tau: Option<f64>,
    pub nu: Option<f64>,
    pub adapter_rank: Option<usize>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub eval_every: Option<usize>,
    pub lr: Option<f64>,
    pub spec_budget_tokens: Option<usize>,
    pub val_tokens: Option<usize>,
    pub saturated_policy: Option<String>,
    pub replay_bypass_dc: Option<bool>,
    pub max_degeneralization: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilePaths {
    pub specialized_corpus: Option<PathBuf>,
    pub general_corpus: Option<PathBuf>,
    pub reference_checkpoint: Option<PathBuf>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: TinyLMConfig,
    pub pretrain_max_steps: usize,
    pub pretrain_eval_every: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_lr: f64,
    pub pretrain_patience: usize,
    pub pretrain_val_tokens: usize,
    pub pretrain_budget_tokens: usize,
    pub objective: Objective,
    pub nu: f64,
    pub adapter_rank: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub lr: f64,
    pub spec_budget_tokens: usize,
    pub val_tokens: usize,
    pub saturated_policy: SaturatedPolicy,
    pub replay_bypass_dc: bool,
    pub max_degeneralization: Option<f64>,
    pub specialized_corpus: PathBuf,
    pub general_corpus: PathBuf,
    pub reference_checkpoint: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 42,
            out_dir: PathBuf::from("runs"),
            model: TinyLMConfig::default(),
            pretrain_max_steps: 1000,
            pretrain_eval_every: 50,
            pretrain_batch_size: 16,
            pretrain_lr: 1e-3,
            pretrain_patience: 4,
            pretrain_val_tokens: 31_250,
            pretrain_budget_tokens: 0,
            objective: Objective::full_mft(0.25).expect("default tau valid"),
            nu: 1.0,
            adapter_rank: 0,
            steps: 500,
            batch_size: 16,
            eval_every: 25,
            lr: 1e-3,
            spec_budget_tokens: 250_000,
            val_tokens: 31_250,
            saturated_policy: SaturatedPolicy::Keep,
            replay_bypass_dc: false,
            max_degeneralization: None,
            specialized_corpus: PathBuf::from("fixtures/legal.txt"),
            general_corpus: PathBuf::from("fixtures/general.txt"),
            reference_checkpoint: PathBuf::from("runs/reference.mft"),
        }
    }
}

pub fn parse_objective(name: &str, tau: f64) -> Result<Objective> {
    match name {
        "plain_ft" | "ft" => Ok(Objective::plain_ft()),
        "corrective_ft" => Ok(Objective::corrective_ft()),
        "singly_corrective" => Objective::singly_corrective(tau),
        "full_mft" | "mft" => Objective::full_mft(tau),
        other => Err(MftError::config(format!(
            "unknown objective '{other}' (expected plain_ft | corrective_ft | singly_corrective | full_mft)"
        ))),
    }
}

fn parse_policy(name: &str) -> Result<SaturatedPolicy> {
    match name {
        "keep" => Ok(SaturatedPolicy::Keep),
        "mask" => Ok(SaturatedPolicy::Mask),
        other => Err(MftError::config(format!(
            "unknown saturated_policy '{other}' (expected keep | mask)"
        ))),
    }
}

impl Settings {
    /// Defaults layered with the optional config file and the environment.
    pub fn load(config_path: Option<&std::path::Path>) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| MftError::config(format!("config {}: {e}", path.display())))?;
            let file: FileConfig = toml::from_str(&text)
                .map_err(|e| MftError::config(format!("config {}: {e}", path.display())))?;
            s.apply_file(file)?;
        }
        if let Ok(v) = std::env::var("MFT_SEED") {
            s.seed = v
                .parse()
                .map_err(|_| MftError::config(format!("MFT_SEED '{v}' is not a 64-bit integer")))?;
        }
        if let Ok(v) = std::env::var("MFT_OUT_DIR") {
            s.out_dir = PathBuf::from(v);
        }
        Ok(s)
    }

    fn apply_file(&mut self, f: FileConfig) -> Result<()> {
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(self.seed, f.seed);
        set!(self.out_dir, f.out_dir);
        set!(self.model.vocab_size, f.model.vocab_size);
        set!(self.model.d_model, f.model.d_model);
        set!(self.model.n_layers, f.model.n_layers);
        set!(self.model.n_heads, f.model.n_heads);
        set!(self.model.d_ff, f.model.d_ff);
        set!(self.model.seq_len, f.model.seq_len);
        set!(self.model.tie_embeddings, f.model.tie_embeddings);
        set!(self.pretrain_max_steps, f.pretrain.max_steps);
        set!(self.pretrain_eval_every, f.pretrain.eval_every);
        set!(self.pretrain_batch_size, f.pretrain.batch_size);
        set!(self.pretrain_lr, f.pretrain.lr);
        set!(self.pretrain_patience, f.pretrain.patience);
        set!(self.pretrain_val_tokens, f.pretrain.val_tokens);
        set!(self.pretrain_budget_tokens, f.pretrain.budget_tokens);
        let tau = f.run.tau.unwrap_or(self.objective.tau);
        if let Some(name) = &f.run.objective {
            self.objective = parse_objective(name, tau)?;
        } else if f.run.tau.is_some() {
            self.objective = parse_objective(self.objective.label(), tau)?;
        }
        set!(self.nu, f.run.nu);
        set!(self.adapter_rank, f.run.adapter_rank);
        set!(self.steps, f.run.steps);
        set!(self.batch_size, f.run.batch_size);
        set!(self.eval_every, f.run.eval_every);
        set!(self.lr, f.run.lr);
        set!(self.spec_budget_tokens, f.run.spec_budget_tokens);
        set!(self.val_tokens, f.run.val_tokens);
        if let Some(p) = &f.run.saturated_policy {
            self.saturated_policy = parse_policy(p)?;
        }
        set!(self.replay_bypass_dc, f.run.replay_bypass_dc);
        if f.run.max_degeneralization.is_some() {
            self.max_degeneralization = f.run.max_degeneralization;
        }
        set!(self.specialized_corpus, f.paths.specialized_corpus);
        set!(self.general_corpus, f.paths.general_corpus);
        set!(self.reference_checkpoint, f.paths.reference_checkpoint);
        Ok(())
    }

    pub fn run_config(&self, out_dir: PathBuf) -> Result<RunConfig> {
        let adapter = match self.adapter_rank {
            0 => None,
            r => Some(AdapterConfig::all_projections(r)),
        };
        let cfg = RunConfig {
            objective: self.objective,
            replay: ReplayConfig::new(self.nu)?,
            adapter,
            steps: self.steps,
            batch_size: self.batch_size,
            eval_every: self.eval_every,
            seed: self.seed,
            lr: self.lr,
            spec_budget_tokens: self.spec_budget_tokens,
            val_tokens: self.val_tokens,
            saturated_policy: self.saturated_policy,
            replay_bypass_dc: self.replay_bypass_dc,
            max_degeneralization: self.max_degeneralization,
            paths: RunPaths {
                specialized_corpus: self.specialized_corpus.clone(),
                general_corpus: self.general_corpus.clone(),
                reference_checkpoint: self.reference_checkpoint.clone(),
                out_dir,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            model: self.model.clone(),
            general_corpus: self.general_corpus.clone(),
            out_path: self.reference_checkpoint.clone(),
            val_tokens: self.pretrain_val_tokens,
            budget_tokens: self.pretrain_budget_tokens,
            max_steps: self.pretrain_max_steps,
            eval_every: self.pretrain_eval_every,
            batch_size: self.pretrain_batch_size,
            lr: self.pretrain_lr,
            seed: self.seed,
            patience: self.pretrain_patience,
        }
    }

    /// Re-parse the objective after flag overrides touched mode or tau.
    pub fn set_objective(&mut self, name: Option<&str>, tau: Option<f64>) -> Result<()> {
        let tau = tau.unwrap_or(self.objective.tau);
        let name = name.map(str::to_string).unwrap_or_else(|| match self.objective.mode {
            Mode::PlainFt => "plain_ft".to_string(),
            Mode::CorrectiveFt => "corrective_ft".to_string(),
            Mode::SinglyCorrective => "singly_corrective".to_string(),
            Mode::FullMft => "full_mft".to_string(),
        });
        self.objective = parse_objective(&name, tau)?;
        Ok(())
    }
}
