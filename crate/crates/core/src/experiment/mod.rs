//! Evaluation primitives: perplexity and the specialization /
//! degeneralization report.

pub mod selftest;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::data::PackedSet;
use crate::error::{MftError, Result};
use crate::model::TinyLM;
use crate::numerics::kernels;
use crate::numerics::tensor::Tensor;

pub use sweep::{
    ablation_suite, render_metrics_table, scarcity_suite, sweep, AblationTable, ScarcityReport,
    ScarcityRow, SweepAxis, SweepRow, SweepSpec, SweepTable,
};

/// Rows evaluated per forward pass during perplexity computation.
const EVAL_CHUNK: usize = 8;

/// Masked negative log-likelihood over a logit block: returns the f64 sum and
/// the number of weighted positions.
pub fn masked_nll(logits: &Tensor, labels: &[u32], mask: &[f32]) -> Result<(f64, f64)> {
    let vocab = *logits
        .shape()
        .last()
        .ok_or_else(|| MftError::config("masked_nll: scalar logits"))?;
    let rows = logits.numel() / vocab;
    if labels.len() != rows || mask.len() != rows {
        return Err(MftError::config("masked_nll: labels/mask length mismatch"));
    }
    let mut sum = 0.0f64;
    let mut count = 0.0f64;
    for r in 0..rows {
        if mask[r] == 0.0 {
            continue;
        }
        let l = labels[r] as usize;
        if l >= vocab {
            return Err(MftError::data(format!("masked_nll: label {l} out of range")));
        }
        let row = &logits.data()[r * vocab..(r + 1) * vocab];
        let lp = kernels::log_softmax_f64(row);
        sum -= mask[r] as f64 * lp[l];
        count += mask[r] as f64;
    }
    Ok((sum, count))
}

/// `exp(token-masked mean NLL)` of the model over a packed set, with the NLL
/// accumulated in f64. Positions without a real next token carry no weight.
pub fn perplexity(model: &TinyLM, set: &PackedSet) -> Result<f64> {
    if set.is_empty() {
        return Err(MftError::data("perplexity: empty evaluation set"));
    }
    let seq = set.seq_len;
    let mut total = 0.0f64;
    let mut count = 0.0f64;
    let mut i = 0usize;
    while i < set.len() {
        let n = EVAL_CHUNK.min(set.len() - i);
        let mut tokens = Vec::with_capacity(n * seq);
        for j in 0..n {
            tokens.extend_from_slice(set.sequence(i + j));
        }
        let logits = model.forward(&tokens, n, seq)?;
        let (labels, mask) = shift_labels(&tokens, n, seq);
        let (s, c) = masked_nll(&logits, &labels, &mask)?;
        total += s;
        count += c;
        i += n;
    }
    if count == 0.0 {
        return Err(MftError::data("perplexity: no scorable positions"));
    }
    Ok((total / count).exp())
}

fn shift_labels(tokens: &[u32], batch: usize, seq: usize) -> (Vec<u32>, Vec<f32>) {
    let mut labels = vec![crate::data::PAD; batch * seq];
    let mut mask = vec![0.0f32; batch * seq];
    for b in 0..batch {
        for t in 0..seq - 1 {
            let next = tokens[b * seq + t + 1];
            labels[b * seq + t] = next;
            if next != crate::data::PAD {
                mask[b * seq + t] = 1.0;
            }
        }
    }
    (labels, mask)
}

/// Specialization / degeneralization report for one run.
///
/// `specialization` is the percent drop in specialized-domain validation
/// perplexity; `degeneralization` the percent rise on the general domain;
/// `ratio` their quotient, undefined (null) when specialization is not
/// positive.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub spec_ppl_before: f64,
    pub spec_ppl_after: f64,
    pub gen_ppl_before: f64,
    pub gen_ppl_after: f64,
    pub specialization: f64,
    pub degeneralization: f64,
    pub ratio: Option<f64>,
}

pub fn compute_metrics(before: (f64, f64), after: (f64, f64)) -> Result<MetricsReport> {
    for (name, v) in [
        ("specialized before", before.0),
        ("general before", before.1),
        ("specialized after", after.0),
        ("general after", after.1),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(MftError::numeric(format!("compute_metrics: {name} perplexity {v}")));
        }
    }
    let s = 100.0 * (before.0 - after.0) / before.0;
    let dg = 100.0 * (after.1 - before.1) / before.1;
    let ratio = if s > 0.0 { Some(dg / s) } else { None };
    Ok(MetricsReport {
        spec_ppl_before: before.0,
        spec_ppl_after: after.0,
        gen_ppl_before: before.1,
        gen_ppl_after: after.1,
        specialization: s,
        degeneralization: dg,
        ratio,
    })
}
