//! Sweep harness: one knob, several values, one full run per value, plus the
//! scarcity and ablation suites built on the same machinery.

use std::fs;
use std::path::Path;

use crate::error::{MftError, Result};
use crate::experiment::MetricsReport;
use crate::model::AdapterConfig;
use crate::training::{run, Objective, RunConfig, RunOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Correction margin of the distillation objective.
    Tau,
    /// New-data fraction of replay mixing.
    Nu,
    /// Low-rank adapter rank.
    Rank,
    /// Specialized training budget in tokens.
    Budget,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Nu => "nu",
            SweepAxis::Rank => "rank",
            SweepAxis::Budget => "budget",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub base: RunConfig,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: f64,
    pub report: Option<MetricsReport>,
    pub best_step: Option<usize>,
    pub best_hash: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Fixed column set; failed rows leave the metric fields empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value,S,DG,ratio,spec_ppl,gen_ppl,best_step\n");
        for r in &self.rows {
            match (&r.report, r.best_step) {
                (Some(m), Some(step)) => {
                    let ratio = m.ratio.map(|v| v.to_string()).unwrap_or_default();
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        self.axis.as_str(),
                        r.value,
                        m.specialization,
                        m.degeneralization,
                        ratio,
                        m.spec_ppl_after,
                        m.gen_ppl_after,
                        step
                    ));
                }
                _ => {
                    out.push_str(&format!("{},{},,,,,,\n", self.axis.as_str(), r.value));
                }
            }
        }
        out
    }
}

/// Configures one run along the sweep axis. Everything else, including the
/// seed and reference checkpoint, is shared with the base.
pub fn derive_config(axis: SweepAxis, base: &RunConfig, value: f64) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Tau => {
            cfg.objective = Objective::full_mft(value)?;
        }
        SweepAxis::Nu => {
            cfg.replay = crate::data::ReplayConfig::new(value)?;
        }
        SweepAxis::Rank => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(MftError::config(format!("rank value {value} must be a positive integer")));
            }
            cfg.adapter = Some(AdapterConfig::all_projections(value as usize));
        }
        SweepAxis::Budget => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(MftError::config(format!("budget value {value} must be a positive integer")));
            }
            cfg.spec_budget_tokens = value as usize;
        }
    }
    cfg.paths.out_dir = base.paths.out_dir.join(format!("{}_{}", axis.as_str(), value));
    Ok(cfg)
}

/// Runs the whole sweep, ordering rows by axis value. A failing run records
/// its error and the sweep continues. Writes `sweep.csv` (and
/// `sweep_errors.txt` if anything failed) under the base output directory.
pub fn sweep(spec: &SweepSpec) -> Result<SweepTable> {
    if spec.values.is_empty() {
        return Err(MftError::config("sweep: no values"));
    }
    let mut values = spec.values.clone();
    values.sort_by(|a, b| a.partial_cmp(b).expect("sweep values are finite"));
    let mut rows = Vec::with_capacity(values.len());
    for &value in &values {
        let row = match derive_config(spec.axis, &spec.base, value).and_then(|cfg| run(&cfg)) {
            Ok(out) => SweepRow {
                value,
                report: Some(out.report.clone()),
                best_step: Some(out.best.step),
                best_hash: Some(out.best.param_hash.clone()),
                error: None,
            },
            Err(e) => SweepRow {
                value,
                report: None,
                best_step: None,
                best_hash: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let table = SweepTable { axis: spec.axis, rows };
    fs::create_dir_all(&spec.base.paths.out_dir)?;
    fs::write(spec.base.paths.out_dir.join("sweep.csv"), table.to_csv())?;
    let errors: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}={}: {e}", table.axis.as_str(), r.value)))
        .collect();
    if !errors.is_empty() {
        fs::write(spec.base.paths.out_dir.join("sweep_errors.txt"), errors.join("\n") + "\n")?;
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct ScarcityRow {
    pub budget_tokens: usize,
    pub objective_label: &'static str,
    /// First eval step where specialized validation perplexity exceeded its
    /// running minimum by more than 1%; None if it never did.
    pub overfit_onset: Option<usize>,
    pub last_step: usize,
    pub report: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct ScarcityReport {
    pub rows: Vec<ScarcityRow>,
}

/// Per-step trajectory CSV for one finished run.
fn trajectory_csv(out: &RunOutput) -> String {
    let mut s = String::from("step,spec_ppl,gen_ppl,S,DG,ratio\n");
    for r in &out.records {
        let sp = 100.0 * (out.before.0 - r.spec_val_ppl) / out.before.0;
        let dg = 100.0 * (r.gen_val_ppl - out.before.1) / out.before.1;
        let ratio = if sp > 0.0 { (dg / sp).to_string() } else { String::new() };
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.spec_val_ppl, r.gen_val_ppl, sp, dg, ratio
        ));
    }
    s
}

fn overfit_onset(out: &RunOutput) -> Option<usize> {
    let mut running_min = out.before.0;
    for r in &out.records {
        if r.spec_val_ppl > running_min * 1.01 {
            return Some(r.step);
        }
        running_min = running_min.min(r.spec_val_ppl);
    }
    None
}

/// Trains each (budget, objective) pair with everything else shared, logging
/// the full specialization/degeneralization trajectory and flagging where
/// overfitting sets in.
pub fn scarcity_suite(
    base: &RunConfig,
    budgets: &[usize],
    objectives: &[Objective],
) -> Result<ScarcityReport> {
    if budgets.is_empty() || objectives.is_empty() {
        return Err(MftError::config("scarcity_suite: empty budgets or objectives"));
    }
    let mut rows = Vec::new();
    for &budget in budgets {
        for objective in objectives {
            let mut cfg = base.clone();
            cfg.spec_budget_tokens = budget;
            cfg.objective = *objective;
            cfg.paths.out_dir = base
                .paths
                .out_dir
                .join(format!("scarcity_b{budget}_{}", objective.label()));
            let out = run(&cfg)?;
            fs::write(out.out_dir.join("trajectory.csv"), trajectory_csv(&out))?;
            rows.push(ScarcityRow {
                budget_tokens: budget,
                objective_label: objective.label(),
                overfit_onset: overfit_onset(&out),
                last_step: out.records.last().map(|r| r.step).unwrap_or(0),
                report: out.report,
            });
        }
    }
    let report = ScarcityReport { rows };
    fs::create_dir_all(&base.paths.out_dir)?;
    fs::write(base.paths.out_dir.join("scarcity.csv"), scarcity_csv(&report))?;
    Ok(report)
}

fn scarcity_csv(report: &ScarcityReport) -> String {
    let mut s = String::from("budget,objective,overfit_onset,last_step,S,DG,ratio\n");
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.budget_tokens,
            r.objective_label,
            r.overfit_onset.map(|v| v.to_string()).unwrap_or_default(),
            r.last_step,
            r.report.specialization,
            r.report.degeneralization,
            r.report.ratio.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    s
}

#[derive(Clone, Debug)]
pub struct AblationTable {
    pub rows: Vec<(String, MetricsReport)>,
}

impl AblationTable {
    pub fn to_markdown(&self) -> String {
        render_metrics_table(&self.rows)
    }
}

/// Runs the four-objective incremental ablation (one-hot targets, distillation
/// with one-hot on errors, single-sided correction, full correction) under a
/// shared seed and teacher, and renders `ablation.md`.
///
/// The margin comes from the base objective when it has one, otherwise 0.25.
pub fn ablation_suite(base: &RunConfig) -> Result<AblationTable> {
    let tau = match base.objective.mode {
        crate::correction::Mode::FullMft | crate::correction::Mode::SinglyCorrective => {
            base.objective.tau
        }
        _ => 0.25,
    };
    let objectives = [
        ("finetuning", Objective::plain_ft()),
        ("+ distillation", Objective::corrective_ft()),
        ("+ partial correction", Objective::singly_corrective(tau)?),
        ("+ full correction", Objective::full_mft(tau)?),
    ];
    let mut rows = Vec::new();
    for (label, objective) in objectives {
        let mut cfg = base.clone();
        cfg.objective = objective;
        cfg.paths.out_dir = base.paths.out_dir.join(format!("ablation_{}", objective.label()));
        let out = run(&cfg)?;
        rows.push((label.to_string(), out.report));
    }
    let table = AblationTable { rows };
    fs::create_dir_all(&base.paths.out_dir)?;
    fs::write(base.paths.out_dir.join("ablation.md"), table.to_markdown())?;
    Ok(table)
}

/// Markdown table with the paper-style rounding: percentages to one decimal,
/// ratios to two.
pub fn render_metrics_table(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("| method | S | DG | ratio | spec ppl | gen ppl |\n");
    s.push_str("|---|---|---|---|---|---|\n");
    for (label, m) in rows {
        let ratio = m.ratio.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".to_string());
        s.push_str(&format!(
            "| {} | {:.1} | {:.1} | {} | {:.3} | {:.3} |\n",
            label, m.specialization, m.degeneralization, ratio, m.spec_ppl_after, m.gen_ppl_after
        ));
    }
    s
}

/// Reads a rendered report back for the CLI `report` subcommand.
pub fn read_report(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| MftError::data(format!("{}: {e}", path.display())))
}
