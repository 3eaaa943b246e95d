//! Built-in verification suite behind the `selftest` CLI subcommand:
//! distribution-correction properties on random inputs, a brute-force solver
//! comparison, and gradient checks up to the full model.

use rand::Rng;

use crate::correction::{distribution_correct, Branch, CorrectionConfig, Mode, ProbDist};
use crate::model::{forward, TinyLM, TinyLMConfig};
use crate::numerics::gradcheck::grad_check;
use crate::numerics::params::ParamStore;
use crate::numerics::rng::stream_rng;
use crate::numerics::tensor::Tensor;
use crate::Result;

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult { name, passed: true, detail },
        Err(e) => CheckResult { name, passed: false, detail: e.to_string() },
    }
}

/// Runs every check; all are deterministic in the seed.
pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    vec![
        check("dc-random-properties", dc_random_properties(seed)),
        check("dc-tau1-reduction", dc_tau1_reduction(seed)),
        check("dc-solver-equivalence", dc_solver_equivalence()),
        check("gradcheck-soft-ce", gradcheck_soft_ce(seed)),
        check("gradcheck-tiny-model", gradcheck_tiny_model(seed)),
    ]
}

fn random_dist(rng: &mut rand_chacha::ChaCha8Rng, vocab: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..vocab).map(|_| rng.gen_range(1e-6..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn dc_random_properties(seed: u64) -> Result<String> {
    let mut rng = stream_rng(seed, "selftest/dc");
    let taus = [0.0, 0.1, 0.25, 0.5, 1.0];
    let mut cases = 0usize;
    let mut worst_margin = 0.0f64;
    for &vocab in &[3usize, 8, 256] {
        for _ in 0..400 {
            let p = random_dist(&mut rng, vocab);
            let l = rng.gen_range(0..vocab);
            for &tau in &taus {
                let teacher = ProbDist::new(p.clone())?;
                let cfg = CorrectionConfig::new(Mode::FullMft, tau)?;
                let (pc, diag) = distribution_correct(&teacher, l, &cfg)?;
                let pc = pc.probs();
                let sum: f64 = pc.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(crate::MftError::numeric(format!("sum {sum}")));
                }
                if diag.branch == Branch::IncorrectArgmax {
                    let dev = (diag.achieved_margin - tau).abs();
                    worst_margin = worst_margin.max(dev);
                    if dev > 1e-9 {
                        return Err(crate::MftError::numeric(format!(
                            "margin deviation {dev} at tau {tau}"
                        )));
                    }
                }
                if tau > 0.0 {
                    let max_other = pc
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != l)
                        .map(|(_, &v)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    if pc[l] < max_other {
                        return Err(crate::MftError::numeric("argmax flip failed".to_string()));
                    }
                }
                for i in 0..vocab {
                    for j in (i + 1)..vocab {
                        if i == l || j == l || p[j] <= 1e-8 {
                            continue;
                        }
                        if (pc[i] * p[j] - p[i] * pc[j]).abs() > 1e-9 {
                            return Err(crate::MftError::numeric("ratio preservation failed".to_string()));
                        }
                    }
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} cases, worst margin deviation {worst_margin:.2e}"))
}

fn dc_tau1_reduction(seed: u64) -> Result<String> {
    let mut rng = stream_rng(seed, "selftest/reduction");
    for _ in 0..500 {
        let p = random_dist(&mut rng, 8);
        let l = rng.gen_range(0..8);
        let teacher = ProbDist::new(p)?;
        let (a, _) = distribution_correct(&teacher, l, &CorrectionConfig::new(Mode::FullMft, 1.0)?)?;
        let (b, _) = distribution_correct(&teacher, l, &CorrectionConfig::new(Mode::PlainFt, 1.0)?)?;
        if a.probs().iter().zip(b.probs()).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Err(crate::MftError::numeric("tau=1 target not bitwise one-hot".to_string()));
        }
    }
    Ok("500 cases bitwise".to_string())
}

/// Bisection on the margin / target equations; no closed forms.
fn dc_solver_equivalence() -> Result<String> {
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for a in 0..=10u32 {
        for b in 0..=(10 - a) {
            let c = 10 - a - b;
            let p = [a as f64 / 10.0, b as f64 / 10.0, c as f64 / 10.0];
            let Ok(teacher) = ProbDist::new(p.to_vec()) else { continue };
            for l in 0..3 {
                for tau in [0.0, 0.25, 0.5, 1.0] {
                    let cfg = CorrectionConfig::new(Mode::FullMft, tau)?;
                    let (got, _) = distribution_correct(&teacher, l, &cfg)?;
                    let want = solve_by_bisection(&p, l, tau);
                    for (g, w) in got.probs().iter().zip(&want) {
                        worst = worst.max((g - w).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    if worst > 1e-9 {
        return Err(crate::MftError::numeric(format!("solver deviation {worst}")));
    }
    Ok(format!("{cases} grid cases, worst deviation {worst:.2e}"))
}

fn solve_by_bisection(p: &[f64], l: usize, tau: f64) -> Vec<f64> {
    let p_max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let blend = |s: f64| -> Vec<f64> {
        let mut out: Vec<f64> = p.iter().map(|&v| (1.0 - s) * v).collect();
        out[l] += s;
        let sum: f64 = out.iter().sum();
        out.into_iter().map(|v| v / sum).collect()
    };
    let bisect = |f: &dyn Fn(f64) -> f64| -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let s = if p[l] < p_max {
        bisect(&|s| ((1.0 - s) * p[l] + s) - (1.0 - s) * p_max - tau)
    } else if p[l] > 1.0 - crate::correction::DEFAULT_EPSILON_SATURATION {
        if tau >= 1.0 {
            1.0
        } else {
            return p.to_vec();
        }
    } else {
        let target = (p[l] + tau).min(1.0);
        bisect(&|s| ((1.0 - s) * p[l] + s) - target)
    };
    blend(s)
}

fn gradcheck_soft_ce(seed: u64) -> Result<String> {
    let mut rng = stream_rng(seed, "selftest/ce");
    let logits: Vec<f32> = (0..8).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
    let traw: Vec<f32> = (0..8).map(|_| rng.gen_range(0.05f32..1.0)).collect();
    let tsum: f32 = traw.iter().sum();
    let target = Tensor::from_vec(&[1, 1, 8], traw.into_iter().map(|v| v / tsum).collect())?;
    let mut store = ParamStore::new();
    let pid = store.register("logits", Tensor::from_vec(&[1, 1, 8], logits)?, true);
    let report = grad_check(&mut store, 1e-3, 16, seed, |tape| {
        let l = tape.param(pid);
        tape.soft_ce_loss(l, &target, &[1.0])
    })?;
    if report.max_rel_err > 1e-4 {
        return Err(crate::MftError::numeric(format!("rel err {}", report.max_rel_err)));
    }
    Ok(format!("max rel err {:.2e}", report.max_rel_err))
}

fn gradcheck_tiny_model(seed: u64) -> Result<String> {
    let cfg = TinyLMConfig {
        vocab_size: 19,
        d_model: 16,
        n_layers: 1,
        n_heads: 4,
        d_ff: 32,
        seq_len: 16,
        tie_embeddings: true,
    };
    let mut model = TinyLM::init(cfg.clone(), seed)?;
    let mut rng = stream_rng(seed, "selftest/model");
    let tokens: Vec<u32> = (0..2 * cfg.seq_len).map(|_| rng.gen_range(0..19)).collect();
    let mut targets = vec![0.0f32; tokens.len() * cfg.vocab_size];
    let mut mask = vec![0.0f32; tokens.len()];
    for b in 0..2 {
        for t in 0..cfg.seq_len - 1 {
            let r = b * cfg.seq_len + t;
            targets[r * cfg.vocab_size + tokens[r + 1] as usize] = 1.0;
            mask[r] = 1.0;
        }
    }
    for r in 0..tokens.len() {
        if mask[r] == 0.0 {
            targets[r * cfg.vocab_size..(r + 1) * cfg.vocab_size].fill(1.0 / 19.0);
        }
    }
    let targets = Tensor::from_vec(&[2, cfg.seq_len, cfg.vocab_size], targets)?;
    let (spec, params) = model.parts_mut();
    let report = grad_check(params, 1e-3, 220, seed, |tape| {
        forward::loss_taped(spec, tape, &tokens, 2, cfg.seq_len, &targets, &mask)
    })?;
    if report.max_rel_err > 1e-3 {
        return Err(crate::MftError::numeric(format!(
            "rel err {} at {:?}",
            report.max_rel_err, report.worst
        )));
    }
    Ok(format!("{} coordinates, max rel err {:.2e}", report.checked, report.max_rel_err))
}
