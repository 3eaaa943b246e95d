//! Forward passes.
//!
//! Two paths share the same kernels and operation order, so their outputs are
//! bit-identical: [`logits`] runs tape-free (teacher and evaluation), while
//! [`logits_taped`] records every operation for the backward pass. Keep the
//! two in lockstep when changing the architecture; `pure_and_taped_agree`
//! below pins the equivalence.

use crate::error::{MftError, Result};
use crate::model::{AdapterPair, ModelSpec};
use crate::numerics::kernels;
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tape::{GradTape, ValueId};
use crate::numerics::tensor::Tensor;

fn validate_tokens(spec: &ModelSpec, tokens: &[u32], batch: usize, seq: usize) -> Result<()> {
    if tokens.len() != batch * seq {
        return Err(MftError::config("forward: token count != batch * seq"));
    }
    if seq > spec.cfg.seq_len {
        return Err(MftError::config(format!(
            "forward: sequence length {seq} exceeds model maximum {}",
            spec.cfg.seq_len
        )));
    }
    let vocab = spec.cfg.vocab_size as u32;
    if let Some(&t) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(MftError::data(format!("token id {t} out of range (vocab {vocab})")));
    }
    Ok(())
}

fn adapter_for(spec: &ModelSpec, layer: usize) -> Option<(&crate::model::LayerAdapters, f32)> {
    spec.adapter.as_ref().map(|(cfg, layers)| (&layers[layer], cfg.scale()))
}

/// Next-token logits [batch, seq, vocab] with no tape recording.
pub fn logits(
    spec: &ModelSpec,
    params: &ParamStore,
    tokens: &[u32],
    batch: usize,
    seq: usize,
) -> Result<Tensor> {
    validate_tokens(spec, tokens, batch, seq)?;
    let d = spec.cfg.d_model;
    let rows = batch * seq;

    let mut x = vec![0.0f32; rows * d];
    kernels::embed_rows(
        params.get(spec.tok_emb).data(),
        params.get(spec.pos_emb).data(),
        d,
        tokens,
        seq,
        &mut x,
    );

    let mut h = vec![0.0f32; rows * d];
    let mut xhat = vec![0.0f32; rows * d];
    let mut inv_std = vec![0.0f32; rows];
    let mut probs = vec![0.0f32; batch * spec.cfg.n_heads * seq * seq];

    for (li, lp) in spec.layers.iter().enumerate() {
        let ad = adapter_for(spec, li);
        kernels::layer_norm_rows(
            &x,
            params.get(lp.ln1_gain).data(),
            params.get(lp.ln1_bias).data(),
            d,
            &mut h,
            &mut xhat,
            &mut inv_std,
        );
        let q = project(params, &h, rows, lp.wq, ad.and_then(|(a, s)| a.q.map(|p| (p, s))));
        let k = project(params, &h, rows, lp.wk, ad.and_then(|(a, s)| a.k.map(|p| (p, s))));
        let v = project(params, &h, rows, lp.wv, ad.and_then(|(a, s)| a.v.map(|p| (p, s))));
        let mut attn = vec![0.0f32; rows * d];
        probs.fill(0.0);
        kernels::causal_attention_rows(&q, &k, &v, batch, seq, d, spec.cfg.n_heads, &mut attn, &mut probs);
        let o = project(params, &attn, rows, lp.wo, ad.and_then(|(a, s)| a.o.map(|p| (p, s))));
        for (xv, &ov) in x.iter_mut().zip(&o) {
            *xv += ov;
        }

        kernels::layer_norm_rows(
            &x,
            params.get(lp.ln2_gain).data(),
            params.get(lp.ln2_bias).data(),
            d,
            &mut h,
            &mut xhat,
            &mut inv_std,
        );
        let mut u = project(params, &h, rows, lp.w_up, ad.and_then(|(a, s)| a.up.map(|p| (p, s))));
        for uv in &mut u {
            *uv = kernels::gelu(*uv);
        }
        let dn = project(params, &u, rows, lp.w_down, ad.and_then(|(a, s)| a.down.map(|p| (p, s))));
        for (xv, &dv) in x.iter_mut().zip(&dn) {
            *xv += dv;
        }
    }

    kernels::layer_norm_rows(
        &x,
        params.get(spec.final_gain).data(),
        params.get(spec.final_bias).data(),
        d,
        &mut h,
        &mut xhat,
        &mut inv_std,
    );
    let vocab = spec.cfg.vocab_size;
    let mut out = vec![0.0f32; rows * vocab];
    match spec.head {
        Some(head) => kernels::matmul_nn(&h, params.get(head).data(), rows, d, vocab, &mut out),
        None => kernels::matmul_nt(&h, params.get(spec.tok_emb).data(), rows, d, vocab, &mut out),
    }
    Ok(Tensor::from_vec_unchecked(&[batch, seq, vocab], out))
}

fn project(
    params: &ParamStore,
    x: &[f32],
    rows: usize,
    w: ParamId,
    adapter: Option<(AdapterPair, f32)>,
) -> Vec<f32> {
    let wv = params.get(w);
    let (d_in, d_out) = (wv.shape()[0], wv.shape()[1]);
    let mut out = vec![0.0f32; rows * d_out];
    kernels::matmul_nn(x, wv.data(), rows, d_in, d_out, &mut out);
    if let Some((pair, scale)) = adapter {
        let r = params.get(pair.down).shape()[1];
        let mut t = vec![0.0f32; rows * r];
        kernels::matmul_nn(x, params.get(pair.down).data(), rows, d_in, r, &mut t);
        let mut t2 = vec![0.0f32; rows * d_out];
        kernels::matmul_nn(&t, params.get(pair.up).data(), rows, r, d_out, &mut t2);
        // same rounding sequence as the taped scale-then-add
        for (o, &v) in out.iter_mut().zip(&t2) {
            *o += v * scale;
        }
    }
    out
}

/// Tape-recorded logits; same arithmetic as [`logits`].
pub fn logits_taped(
    spec: &ModelSpec,
    tape: &mut GradTape<'_>,
    tokens: &[u32],
    batch: usize,
    seq: usize,
) -> Result<ValueId> {
    validate_tokens(spec, tokens, batch, seq)?;
    let mut x = tape.embed(spec.tok_emb, spec.pos_emb, tokens, batch, seq)?;
    for (li, lp) in spec.layers.iter().enumerate() {
        let ad = adapter_for(spec, li);
        let h = tape.layer_norm(x, lp.ln1_gain, lp.ln1_bias)?;
        let q = project_taped(tape, h, lp.wq, ad.and_then(|(a, s)| a.q.map(|p| (p, s))))?;
        let k = project_taped(tape, h, lp.wk, ad.and_then(|(a, s)| a.k.map(|p| (p, s))))?;
        let v = project_taped(tape, h, lp.wv, ad.and_then(|(a, s)| a.v.map(|p| (p, s))))?;
        let attn = tape.causal_attention(q, k, v, spec.cfg.n_heads)?;
        let o = project_taped(tape, attn, lp.wo, ad.and_then(|(a, s)| a.o.map(|p| (p, s))))?;
        x = tape.add(x, o)?;

        let h2 = tape.layer_norm(x, lp.ln2_gain, lp.ln2_bias)?;
        let u = project_taped(tape, h2, lp.w_up, ad.and_then(|(a, s)| a.up.map(|p| (p, s))))?;
        let g = tape.gelu(u);
        let dn = project_taped(tape, g, lp.w_down, ad.and_then(|(a, s)| a.down.map(|p| (p, s))))?;
        x = tape.add(x, dn)?;
    }
    let xf = tape.layer_norm(x, spec.final_gain, spec.final_bias)?;
    match spec.head {
        Some(head) => tape.linear(xf, head),
        None => tape.tied_head(xf, spec.tok_emb),
    }
}

fn project_taped(
    tape: &mut GradTape<'_>,
    x: ValueId,
    w: ParamId,
    adapter: Option<(AdapterPair, f32)>,
) -> Result<ValueId> {
    let base = tape.linear(x, w)?;
    match adapter {
        None => Ok(base),
        Some((pair, scale)) => {
            let t = tape.linear(x, pair.down)?;
            let t2 = tape.linear(t, pair.up)?;
            let sc = tape.scale(t2, scale);
            tape.add(base, sc)
        }
    }
}

/// Tape-recorded masked soft-target loss over a token block.
pub fn loss_taped(
    spec: &ModelSpec,
    tape: &mut GradTape<'_>,
    tokens: &[u32],
    batch: usize,
    seq: usize,
    targets: &Tensor,
    mask: &[f32],
) -> Result<ValueId> {
    let logits = logits_taped(spec, tape, tokens, batch, seq)?;
    tape.soft_ce_loss(logits, targets, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AdapterConfig, TinyLM, TinyLMConfig};

    fn cfg() -> TinyLMConfig {
        TinyLMConfig {
            vocab_size: 13,
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 24,
            seq_len: 10,
            tie_embeddings: true,
        }
    }

    #[test]
    fn pure_and_taped_agree() {
        for (seed, adapter) in [(5u64, false), (6, true), (7, false)] {
            let mut m = TinyLM::init(cfg(), seed).unwrap();
            if adapter {
                m.attach_adapter(&AdapterConfig::all_projections(3), 21).unwrap();
                // move the adapter off zero so the branch actually contributes
                let ids: Vec<_> = m
                    .params()
                    .iter()
                    .filter(|(_, p)| p.name.ends_with("lora_up"))
                    .map(|(id, _)| id)
                    .collect();
                for id in ids {
                    for v in m.params_mut().get_mut(id).data_mut() {
                        *v = 0.01;
                    }
                }
            }
            let tokens: Vec<u32> = (0..20).map(|i| (i * 7 % 13) as u32).collect();
            let pure = m.forward(&tokens, 2, 10).unwrap();
            let mut tape = GradTape::new(m.params());
            let id = logits_taped(m.spec(), &mut tape, &tokens, 2, 10).unwrap();
            assert_eq!(pure.data(), tape.value(id).data(), "seed {seed} adapter {adapter}");
        }
    }

    #[test]
    fn untied_head_works() {
        let mut c = cfg();
        c.tie_embeddings = false;
        let m = TinyLM::init(c, 9).unwrap();
        let tokens: Vec<u32> = (0..10).map(|i| (i % 13) as u32).collect();
        let out = m.forward(&tokens, 1, 10).unwrap();
        assert_eq!(out.shape(), &[1, 10, 13]);
        let mut tape = GradTape::new(m.params());
        let id = logits_taped(m.spec(), &mut tape, &tokens, 1, 10).unwrap();
        assert_eq!(out.data(), tape.value(id).data());
    }

    #[test]
    fn seq_longer_than_position_table_rejected() {
        let m = TinyLM::init(cfg(), 1).unwrap();
        let tokens: Vec<u32> = vec![0; 11];
        assert!(m.forward(&tokens, 1, 11).is_err());
    }
}
