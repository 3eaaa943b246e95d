//! Per-token distribution correction.
//!
//! Training targets are built from the frozen teacher's predicted distribution
//! rather than from one-hot labels. For a token with ground-truth index `l`:
//!
//! - if the teacher's argmax is **not** `l`, the whole distribution is scaled
//!   down uniformly and the released mass is added at `l` so that the
//!   corrected probability of `l` exceeds the old argmax probability by
//!   exactly the margin `tau`;
//! - if the teacher's argmax **is** `l`, the probability of `l` is raised to
//!   `min(1, p_l + tau)` the same way.
//!
//! Both cases are the convex blend `(1 - s) * p + s * onehot(l)`, which leaves
//! the probability ratios of all non-`l` token pairs intact. `tau = 1` turns
//! every target into a one-hot label (plain finetuning); `tau = 0` distills
//! the teacher unchanged on already-correct tokens.
//!
//! All correction arithmetic runs in f64.

use crate::error::{MftError, Result};
use crate::numerics::tensor::Tensor;

/// Treat the teacher as saturated once `p_l` is within this distance of 1.
pub const DEFAULT_EPSILON_SATURATION: f64 = 1e-7;

/// Allowed drift of an incoming distribution's sum away from 1.
const SUM_TOLERANCE: f64 = 1e-5;

/// A normalized probability vector over the token vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbDist {
    probs: Vec<f64>,
}

impl ProbDist {
    /// Validates elements in [0, 1] and a total within 1e-5 of 1.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(MftError::config("ProbDist: empty vector"));
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(MftError::numeric("ProbDist: element outside [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MftError::numeric(format!("ProbDist: sums to {sum}, not 1")));
        }
        Ok(ProbDist { probs })
    }

    /// Max-subtracted softmax of f32 logits, computed in f64.
    pub fn from_logits(logits: &[f32]) -> Result<Self> {
        if logits.is_empty() {
            return Err(MftError::config("softmax: empty input"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(MftError::numeric("softmax: non-finite input"));
        }
        let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut probs: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Ok(ProbDist { probs })
    }

    pub fn uniform(n: usize) -> Self {
        ProbDist { probs: vec![1.0 / n as f64; n] }
    }

    pub fn one_hot(n: usize, l: usize) -> Result<Self> {
        if l >= n {
            return Err(MftError::config(format!("one_hot: index {l} out of range {n}")));
        }
        let mut probs = vec![0.0; n];
        probs[l] = 1.0;
        Ok(ProbDist { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Lowest-index maximizer.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Softmax of a logit vector as a validated distribution.
pub fn softmax(logits: &[f32]) -> Result<ProbDist> {
    ProbDist::from_logits(logits)
}

/// Soft-label cross-entropy `-sum_i target_i * log softmax(logits)_i` in f64.
///
/// Its gradient with respect to the logits is `softmax(logits) - target`.
pub fn cross_entropy_soft(logits: &[f32], target: &ProbDist) -> Result<f64> {
    if logits.len() != target.len() {
        return Err(MftError::config("cross_entropy_soft: length mismatch"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(MftError::numeric("cross_entropy_soft: non-finite logits"));
    }
    let tsum: f64 = target.probs().iter().sum();
    if (tsum - 1.0).abs() > SUM_TOLERANCE {
        return Err(MftError::numeric(format!("cross_entropy_soft: target sums to {tsum}")));
    }
    let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut sum = 0.0f64;
    for &v in logits {
        sum += (v as f64 - max).exp();
    }
    let lse = max + sum.ln();
    let mut loss = 0.0f64;
    for (&t, &l) in target.probs().iter().zip(logits) {
        if t != 0.0 {
            loss -= t * (l as f64 - lse);
        }
    }
    Ok(loss)
}

/// Analytic gradient of [`cross_entropy_soft`] with respect to the logits.
pub fn cross_entropy_soft_grad(logits: &[f32], target: &ProbDist) -> Result<Vec<f64>> {
    if logits.len() != target.len() {
        return Err(MftError::config("cross_entropy_soft_grad: length mismatch"));
    }
    let p = ProbDist::from_logits(logits)?;
    Ok(p.probs().iter().zip(target.probs()).map(|(a, b)| a - b).collect())
}

/// Which training target the correction produces on already-correct tokens
/// and on incorrect ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    /// One-hot targets everywhere: plain finetuning.
    PlainFt,
    /// Teacher unchanged on correct tokens, one-hot on incorrect tokens.
    CorrectiveFt,
    /// Teacher unchanged on correct tokens, margin-corrected blend on
    /// incorrect tokens.
    SinglyCorrective,
    /// Margin-corrected blend on both branches.
    FullMft,
}

/// What to do with tokens where the teacher is already (near-)certain and
/// correct, so there is nothing to correct.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SaturatedPolicy {
    /// Keep the token in the loss with the teacher distribution as target.
    Keep,
    /// Zero the token's loss weight.
    Mask,
}

#[derive(Clone, Copy, Debug)]
pub struct CorrectionConfig {
    pub mode: Mode,
    /// Target correction margin in [0, 1].
    pub tau: f64,
    pub epsilon_saturation: f64,
    pub saturated_policy: SaturatedPolicy,
}

impl CorrectionConfig {
    pub fn new(mode: Mode, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(MftError::config(format!("tau {tau} outside [0, 1]")));
        }
        Ok(CorrectionConfig {
            mode,
            tau,
            epsilon_saturation: DEFAULT_EPSILON_SATURATION,
            saturated_policy: SaturatedPolicy::Keep,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    IncorrectArgmax,
    CorrectArgmax,
    Saturated,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::IncorrectArgmax => "incorrect_argmax",
            Branch::CorrectArgmax => "correct_argmax",
            Branch::Saturated => "saturated",
        }
    }
}

/// Per-token record of what the correction did.
#[derive(Clone, Copy, Debug)]
pub struct CorrectionDiagnostics {
    pub branch: Branch,
    /// Blend weight applied (alpha on the incorrect branch, beta on the
    /// correct one; 0 for identity, 1 for one-hot).
    pub scale: f64,
    /// `p_l - max_{i != l} p_i` of the corrected distribution.
    pub achieved_margin: f64,
    pub ground_truth_index: usize,
}

/// Scale factor for tokens the teacher gets wrong.
///
/// With `d = p_max - p_l`, returns `(d + tau) / (1 + d)`: the blend weight
/// that puts the corrected `p_l` exactly `tau` above the scaled-down old
/// argmax.
pub fn alpha_scale(teacher: &ProbDist, l: usize, tau: f64) -> Result<f64> {
    let p = teacher.probs();
    if l >= p.len() {
        return Err(MftError::config(format!("alpha_scale: label {l} out of range")));
    }
    let p_max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if p[l] >= p_max {
        return Err(MftError::config(
            "alpha_scale: label is already an argmax; use beta_scale",
        ));
    }
    let d = p_max - p[l];
    Ok((d + tau) / (1.0 + d))
}

/// Scale factor for tokens the teacher already gets right.
///
/// Returns the blend weight that raises `p_l` to `min(1, p_l + tau)`. When the
/// clamp binds the weight is exactly 1. Saturated input (`p_l` within
/// `epsilon_saturation` of 1) is the caller's responsibility to divert.
pub fn beta_scale(teacher: &ProbDist, l: usize, tau: f64, epsilon_saturation: f64) -> Result<f64> {
    let p = teacher.probs();
    if l >= p.len() {
        return Err(MftError::config(format!("beta_scale: label {l} out of range")));
    }
    let p_max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if p[l] < p_max {
        return Err(MftError::config("beta_scale: label is not an argmax; use alpha_scale"));
    }
    if p[l] > 1.0 - epsilon_saturation {
        return Err(MftError::numeric(
            "beta_scale: teacher saturated at the label; take the saturated branch",
        ));
    }
    if p[l] + tau >= 1.0 {
        return Ok(1.0);
    }
    Ok(((p[l] + tau).min(1.0) - p[l]) / (1.0 - p[l]))
}

/// Applies the mode's correction to one teacher distribution.
pub fn distribution_correct(
    teacher: &ProbDist,
    l: usize,
    cfg: &CorrectionConfig,
) -> Result<(ProbDist, CorrectionDiagnostics)> {
    let p = teacher.probs();
    let vocab = p.len();
    if l >= vocab {
        return Err(MftError::config(format!("distribution_correct: label {l} out of range")));
    }
    let p_max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let l_is_max = p[l] >= p_max;

    if cfg.mode == Mode::PlainFt {
        let pc = ProbDist::one_hot(vocab, l)?;
        let branch = if l_is_max { Branch::CorrectArgmax } else { Branch::IncorrectArgmax };
        return Ok((pc, CorrectionDiagnostics { branch, scale: 1.0, achieved_margin: 1.0, ground_truth_index: l }));
    }

    let (branch, scale) = if !l_is_max {
        let s = match cfg.mode {
            Mode::CorrectiveFt => 1.0,
            _ => alpha_scale(teacher, l, cfg.tau)?,
        };
        (Branch::IncorrectArgmax, s)
    } else {
        match cfg.mode {
            Mode::CorrectiveFt | Mode::SinglyCorrective => {
                let b = if p[l] > 1.0 - cfg.epsilon_saturation {
                    Branch::Saturated
                } else {
                    Branch::CorrectArgmax
                };
                (b, 0.0)
            }
            Mode::FullMft => {
                // tau >= 1 takes precedence over the saturation guard so the
                // one-hot reduction stays exact for every input.
                if cfg.tau >= 1.0 {
                    (Branch::CorrectArgmax, 1.0)
                } else if p[l] > 1.0 - cfg.epsilon_saturation {
                    (Branch::Saturated, 0.0)
                } else {
                    (Branch::CorrectArgmax, beta_scale(teacher, l, cfg.tau, cfg.epsilon_saturation)?)
                }
            }
            Mode::PlainFt => unreachable!(),
        }
    };

    let pc = blend(p, l, scale)?;
    let mut off_max = f64::NEG_INFINITY;
    for (i, &v) in pc.iter().enumerate() {
        if i != l && v > off_max {
            off_max = v;
        }
    }
    let diag = CorrectionDiagnostics {
        branch,
        scale,
        achieved_margin: pc[l] - off_max,
        ground_truth_index: l,
    };
    Ok((ProbDist { probs: pc }, diag))
}

/// `(1 - s) * p + s * onehot(l)`, renormalized to absorb rounding drift.
fn blend(p: &[f64], l: usize, s: f64) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = p.iter().map(|&v| (1.0 - s) * v).collect();
    out[l] += s;
    let sum: f64 = out.iter().sum();
    if (sum - 1.0).abs() >= SUM_TOLERANCE {
        return Err(MftError::numeric(format!("distribution correction drifted to sum {sum}")));
    }
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Location and outcome of a correction inside a batch.
#[derive(Clone, Copy, Debug)]
pub struct TokenDiagnostics {
    pub batch_index: usize,
    pub position: usize,
    pub diag: CorrectionDiagnostics,
}

/// Corrects every unmasked token of a teacher logit block.
///
/// `teacher_logits` has shape `[batch, seq, vocab]`; `labels` and `mask` are
/// flattened `[batch * seq]`. Masked positions receive a uniform sentinel
/// target (their loss weight is zero downstream). Returns the corrected
/// targets as f32 plus one diagnostic record per unmasked token.
pub fn batch_correct(
    teacher_logits: &Tensor,
    labels: &[u32],
    mask: &[f32],
    cfg: &CorrectionConfig,
) -> Result<(Tensor, Vec<TokenDiagnostics>)> {
    let shape = teacher_logits.shape();
    if shape.len() != 3 {
        return Err(MftError::config("batch_correct: logits must be [batch, seq, vocab]"));
    }
    let (batch, seq, vocab) = (shape[0], shape[1], shape[2]);
    let rows = batch * seq;
    if labels.len() != rows || mask.len() != rows {
        return Err(MftError::config("batch_correct: labels/mask length != batch * seq"));
    }
    let mut targets = vec![0.0f32; rows * vocab];
    let mut diags = Vec::new();
    let uniform = 1.0f32 / vocab as f32;
    for r in 0..rows {
        let out = &mut targets[r * vocab..(r + 1) * vocab];
        if mask[r] == 0.0 {
            out.fill(uniform);
            continue;
        }
        let l = labels[r] as usize;
        if l >= vocab {
            return Err(MftError::data(format!("batch_correct: label {l} out of range")));
        }
        let lrow = &teacher_logits.data()[r * vocab..(r + 1) * vocab];
        let teacher = ProbDist::from_logits(lrow)?;
        let (pc, diag) = distribution_correct(&teacher, l, cfg)?;
        for (o, &v) in out.iter_mut().zip(pc.probs()) {
            *o = v as f32;
        }
        diags.push(TokenDiagnostics { batch_index: r / seq, position: r % seq, diag });
    }
    Ok((Tensor::from_vec_unchecked(&[batch, seq, vocab], targets), diags))
}

/// Flat CSV rendering of per-token diagnostics.
pub fn diagnostics_csv(diags: &[TokenDiagnostics]) -> String {
    let mut out = String::from("batch,pos,label,branch,scale,margin\n");
    for d in diags {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.batch_index,
            d.position,
            d.diag.ground_truth_index,
            d.diag.branch.as_str(),
            d.diag.scale,
            d.diag.achieved_margin
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> ProbDist {
        ProbDist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform_and_ln2() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for &v in p.probs() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = softmax(&[0.0, std::f64::consts::LN_2 as f32]).unwrap();
        assert!((p.probs()[0] - 1.0 / 3.0).abs() < 1e-7);
        assert!((p.probs()[1] - 2.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn softmax_shift_invariance() {
        // exactly representable shifts keep the equality bitwise; a rounded
        // shift is equal to f32 input precision
        for delta in [-3.0f32, 0.5, 2.0] {
            let a = softmax(&[0.0, delta]).unwrap();
            let b = softmax(&[17.5, 17.5 + delta]).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        let a = softmax(&[0.0, 0.4]).unwrap();
        let b = softmax(&[17.5, 17.5 + 0.4]).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[0.0, f32::NAN]).is_err());
        assert!(softmax(&[f32::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn ce_one_hot_at_confident_argmax() {
        let target = ProbDist::one_hot(2, 0).unwrap();
        let loss = cross_entropy_soft(&[10.0, -10.0], &target).unwrap();
        // -ln(sigmoid(20))
        let want = (1.0f64 + (-20.0f64).exp()).ln();
        assert!((loss - want).abs() < 1e-12, "loss {loss} want {want}");
        assert!((loss - 2.06e-9).abs() < 1e-10);
    }

    #[test]
    fn ce_at_matching_distribution_is_entropy_with_zero_grad() {
        let logits = [0.7f32, -0.3, 0.1, 1.9];
        let p = softmax(&logits).unwrap();
        let loss = cross_entropy_soft(&logits, &p).unwrap();
        let entropy: f64 = -p.probs().iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
        assert!((loss - entropy).abs() < 1e-12);
        let grad = cross_entropy_soft_grad(&logits, &p).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn ce_uniform_target_is_logv_minus_mean_logsoftmax() {
        let logits = [0.3f32, 1.2, -0.8, 0.05, 2.0];
        let v = logits.len();
        let target = ProbDist::uniform(v);
        let loss = cross_entropy_soft(&logits, &target).unwrap();
        // 64-bit oracle: direct evaluation.
        let max = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let lse = max + logits.iter().map(|&x| (x as f64 - max).exp()).sum::<f64>().ln();
        let mean_ls: f64 = logits.iter().map(|&x| x as f64 - lse).sum::<f64>() / v as f64;
        assert!((loss - (-mean_ls)).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_unnormalized_target() {
        assert!(ProbDist::new(vec![0.6, 0.6]).is_err());
        // A distribution that drifts past tolerance after construction is
        // still caught at use.
        let bad = ProbDist { probs: vec![0.6, 0.6] };
        assert!(cross_entropy_soft(&[0.0, 0.0], &bad).is_err());
    }

    #[test]
    fn alpha_matches_worked_examples() {
        let p = dist(&[0.5, 0.3, 0.2]);
        let a = alpha_scale(&p, 1, 0.25).unwrap();
        assert!((a - 0.375).abs() < 1e-12);

        let p2 = dist(&[0.6, 0.4]);
        let a2 = alpha_scale(&p2, 1, 0.0).unwrap();
        assert!((a2 - 1.0 / 6.0).abs() < 1e-12);
        // margin check: corrected distribution ties at tau = 0
        let cfg = CorrectionConfig::new(Mode::FullMft, 0.0).unwrap();
        let (pc, _) = distribution_correct(&p2, 1, &cfg).unwrap();
        assert!((pc.probs()[0] - pc.probs()[1]).abs() < 1e-12);
    }

    #[test]
    fn alpha_is_one_at_tau_one() {
        for p in [dist(&[0.5, 0.3, 0.2]), dist(&[0.9, 0.05, 0.05]), dist(&[0.4, 0.35, 0.25])] {
            for l in 1..p.len() {
                assert_eq!(alpha_scale(&p, l, 1.0).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn alpha_rejects_argmax_label() {
        let p = dist(&[0.5, 0.3, 0.2]);
        assert!(alpha_scale(&p, 0, 0.25).is_err());
    }

    #[test]
    fn beta_matches_worked_examples() {
        let p = dist(&[0.6, 0.4]);
        let b = beta_scale(&p, 0, 0.25, DEFAULT_EPSILON_SATURATION).unwrap();
        assert!((b - 0.625).abs() < 1e-12);
        let cfg = CorrectionConfig::new(Mode::FullMft, 0.25).unwrap();
        let (pc, _) = distribution_correct(&p, 0, &cfg).unwrap();
        assert!((pc.probs()[0] - 0.85).abs() < 1e-12);
        assert!((pc.probs()[1] - 0.15).abs() < 1e-12);

        assert_eq!(beta_scale(&p, 0, 0.0, DEFAULT_EPSILON_SATURATION).unwrap(), 0.0);

        // clamp case hits exactly 1
        let p = dist(&[0.9, 0.1]);
        assert_eq!(beta_scale(&p, 0, 0.25, DEFAULT_EPSILON_SATURATION).unwrap(), 1.0);
        let (pc, _) = distribution_correct(&p, 0, &cfg).unwrap();
        assert_eq!(pc.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn beta_rejects_non_argmax_and_saturated() {
        let p = dist(&[0.6, 0.4]);
        assert!(beta_scale(&p, 1, 0.25, DEFAULT_EPSILON_SATURATION).is_err());
        let sat = dist(&[1.0 - 1e-9, 1e-9]);
        assert!(beta_scale(&sat, 0, 0.25, DEFAULT_EPSILON_SATURATION).is_err());
    }

    #[test]
    fn full_correction_worked_example() {
        let p = dist(&[0.5, 0.3, 0.2]);
        let cfg = CorrectionConfig::new(Mode::FullMft, 0.25).unwrap();
        let (pc, diag) = distribution_correct(&p, 1, &cfg).unwrap();
        let want = [0.3125, 0.5625, 0.125];
        for (a, b) in pc.probs().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(diag.branch, Branch::IncorrectArgmax);
        assert!((diag.achieved_margin - 0.25).abs() < 1e-12);
        // off-label pairwise ratio preserved: 0.3125 / 0.125 == 0.5 / 0.2
        let r_new = pc.probs()[0] / pc.probs()[2];
        let r_old = 0.5 / 0.2;
        assert!((r_new - r_old).abs() < 1e-12);
    }

    #[test]
    fn tau_one_reduces_every_mode_branch_to_one_hot() {
        let cfg = CorrectionConfig::new(Mode::FullMft, 1.0).unwrap();
        for p in [dist(&[0.5, 0.3, 0.2]), dist(&[0.1, 0.8, 0.1]), dist(&[1.0 - 1e-9, 1e-9, 0.0])] {
            for l in 0..3 {
                let (pc, _) = distribution_correct(&p, l, &cfg).unwrap();
                let mut want = vec![0.0; 3];
                want[l] = 1.0;
                assert_eq!(pc.probs(), &want[..], "p {:?} l {l}", p.probs());
            }
        }
    }

    #[test]
    fn already_one_hot_is_saturated_identity() {
        let p = ProbDist::one_hot(4, 2).unwrap();
        for tau in [0.0, 0.25, 0.9] {
            let cfg = CorrectionConfig::new(Mode::FullMft, tau).unwrap();
            let (pc, diag) = distribution_correct(&p, 2, &cfg).unwrap();
            assert_eq!(pc.probs(), p.probs());
            assert_eq!(diag.branch, Branch::Saturated);
            assert_eq!(diag.scale, 0.0);
        }
        // tau = 1 still yields the same one-hot values (exactness wins over the
        // saturated branch label).
        let cfg = CorrectionConfig::new(Mode::FullMft, 1.0).unwrap();
        let (pc, _) = distribution_correct(&p, 2, &cfg).unwrap();
        assert_eq!(pc.probs(), p.probs());
    }

    #[test]
    fn mode_dispatch_on_both_branches() {
        let p = dist(&[0.5, 0.3, 0.2]);
        let incorrect = 1;
        let correct = 0;

        let cfg = CorrectionConfig::new(Mode::PlainFt, 0.25).unwrap();
        let (pc, _) = distribution_correct(&p, incorrect, &cfg).unwrap();
        assert_eq!(pc.probs(), ProbDist::one_hot(3, incorrect).unwrap().probs());

        let cfg = CorrectionConfig::new(Mode::CorrectiveFt, 0.25).unwrap();
        let (pc, d) = distribution_correct(&p, incorrect, &cfg).unwrap();
        assert_eq!(pc.probs(), ProbDist::one_hot(3, incorrect).unwrap().probs());
        assert_eq!(d.scale, 1.0);
        let (pc, d) = distribution_correct(&p, correct, &cfg).unwrap();
        assert_eq!(pc.probs(), p.probs());
        assert_eq!(d.scale, 0.0);

        let cfg = CorrectionConfig::new(Mode::SinglyCorrective, 0.25).unwrap();
        let (pc_s, d) = distribution_correct(&p, incorrect, &cfg).unwrap();
        assert_eq!(d.branch, Branch::IncorrectArgmax);
        let cfg_full = CorrectionConfig::new(Mode::FullMft, 0.25).unwrap();
        let (pc_f, _) = distribution_correct(&p, incorrect, &cfg_full).unwrap();
        assert_eq!(pc_s.probs(), pc_f.probs()); // same alpha branch
        let (pc, d) = distribution_correct(&p, correct, &cfg).unwrap();
        assert_eq!(pc.probs(), p.probs()); // beta forced to zero
        assert_eq!(d.scale, 0.0);
    }

    #[test]
    fn batch_correct_handles_masking_and_shapes() {
        // 1 x 2 x 3 logits
        let logits = Tensor::from_vec(&[1, 2, 3], vec![2.0, 0.0, -1.0, 0.0, 1.0, 0.0]).unwrap();
        let cfg = CorrectionConfig::new(Mode::FullMft, 0.25).unwrap();
        let (targets, diags) = batch_correct(&logits, &[1, 2], &[1.0, 0.0], &cfg).unwrap();
        assert_eq!(targets.shape(), &[1, 2, 3]);
        assert_eq!(diags.len(), 1);
        // masked row is the uniform sentinel
        for &v in &targets.data()[3..6] {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        // unmasked row: argmax flipped to label 1
        let row = &targets.data()[0..3];
        assert!(row[1] > row[0] && row[1] > row[2]);

        assert!(batch_correct(&logits, &[1], &[1.0, 0.0], &cfg).is_err());
        assert!(batch_correct(&logits, &[1, 9], &[1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn diagnostics_csv_is_flat_and_parsable() {
        let logits = Tensor::from_vec(&[1, 2, 3], vec![2.0, 0.0, -1.0, 0.0, 1.0, 0.0]).unwrap();
        let cfg = CorrectionConfig::new(Mode::FullMft, 0.25).unwrap();
        let (_, diags) = batch_correct(&logits, &[1, 2], &[1.0, 1.0], &cfg).unwrap();
        let csv = diagnostics_csv(&diags);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("batch,pos,label,branch"));
        assert!(lines[1].contains("incorrect_argmax"));
    }
}
