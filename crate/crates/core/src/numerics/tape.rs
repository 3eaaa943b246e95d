//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Forward calls append nodes to the tape; `backward` replays them in reverse
//! creation order (which is a reverse topological order, since an operation's
//! inputs always exist before it) and accumulates gradients additively across
//! fan-out. Parameters are referenced by id into an external [`ParamStore`];
//! frozen parameters participate in the forward pass but skip weight-gradient
//! work.

use crate::error::{MftError, Result};
use crate::numerics::kernels;
use crate::numerics::params::{Gradients, ParamId, ParamStore};
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op {
    ParamLeaf(ParamId),
    Const,
    Add(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f32),
    /// 2-D product A[m,k] * B[k,n].
    Matmul { a: ValueId, b: ValueId, m: usize, k: usize, n: usize },
    /// Sum of all elements to a scalar (f64 accumulation).
    Sum { x: ValueId, value_f64: f64 },
    /// Token + learned position embedding lookup.
    Embed { tok: ParamId, pos: ParamId, tokens: Vec<u32>, seq: usize },
    LayerNorm { x: ValueId, gain: ParamId, bias: ParamId, xhat: Tensor, inv_std: Vec<f32> },
    /// Rows of `x` times weight [in, out].
    Linear { x: ValueId, w: ParamId },
    /// Rows of `x` times the transposed embedding table [vocab, dim].
    TiedHead { x: ValueId, emb: ParamId },
    CausalAttention { q: ValueId, k: ValueId, v: ValueId, n_heads: usize, probs: Vec<f32> },
    Gelu(ValueId),
    /// Token-masked mean cross-entropy between `logits` rows and target rows.
    SoftCe { logits: ValueId, targets: Tensor, mask: Vec<f32>, probs: Tensor, n_active: f64, value_f64: f64 },
}

struct Node {
    op: Op,
    value: Tensor,
}

pub struct GradTape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> GradTape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        GradTape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Scalar value in the precision it was reduced in (f64 for reductions).
    pub fn scalar_f64(&self, id: ValueId) -> Result<f64> {
        let node = &self.nodes[id.0];
        if !node.value.is_scalar() {
            return Err(MftError::numeric("scalar_f64 on non-scalar node"));
        }
        Ok(match node.op {
            Op::Sum { value_f64, .. } => value_f64,
            Op::SoftCe { value_f64, .. } => value_f64,
            _ => node.value.item() as f64,
        })
    }

    fn push(&mut self, op: Op, value: Tensor) -> ValueId {
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    pub fn param(&mut self, id: ParamId) -> ValueId {
        let value = self.params.get(id).clone();
        self.push(Op::ParamLeaf(id), value)
    }

    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Const, value)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(MftError::config("add: shape mismatch"));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b))?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(MftError::config("mul: shape mismatch"));
        }
        let data: Vec<f32> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec_unchecked(self.value(a).shape(), data);
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, x: ValueId, c: f32) -> ValueId {
        let data: Vec<f32> = self.value(x).data().iter().map(|v| v * c).collect();
        let out = Tensor::from_vec_unchecked(self.value(x).shape(), data);
        self.push(Op::Scale(x, c), out)
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(MftError::config(format!("matmul: incompatible shapes {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0f32; m * n];
        kernels::matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let value = Tensor::from_vec_unchecked(&[m, n], out);
        Ok(self.push(Op::Matmul { a, b, m, k, n }, value))
    }

    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let s = self.value(x).sum_f64();
        self.push(Op::Sum { x, value_f64: s }, Tensor::scalar(s as f32))
    }

    /// Embedding lookup: output[b, t, :] = tok_table[tokens[b, t]] + pos_table[t].
    pub fn embed(
        &mut self,
        tok: ParamId,
        pos: ParamId,
        tokens: &[u32],
        batch: usize,
        seq: usize,
    ) -> Result<ValueId> {
        let tok_table = self.params.get(tok);
        let pos_table = self.params.get(pos);
        let (vocab, dim) = (tok_table.shape()[0], tok_table.shape()[1]);
        if tokens.len() != batch * seq {
            return Err(MftError::config("embed: token count != batch * seq"));
        }
        if seq > pos_table.shape()[0] {
            return Err(MftError::config(format!(
                "embed: sequence length {seq} exceeds maximum {}",
                pos_table.shape()[0]
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= vocab) {
            return Err(MftError::data(format!("token id {t} out of range (vocab {vocab})")));
        }
        let mut out = vec![0.0f32; batch * seq * dim];
        kernels::embed_rows(tok_table.data(), pos_table.data(), dim, tokens, seq, &mut out);
        let value = Tensor::from_vec_unchecked(&[batch, seq, dim], out);
        Ok(self.push(Op::Embed { tok, pos, tokens: tokens.to_vec(), seq }, value))
    }

    /// Row-wise layer normalization over the last dimension, with gain and bias.
    pub fn layer_norm(&mut self, x: ValueId, gain: ParamId, bias: ParamId) -> Result<ValueId> {
        let xv = self.value(x);
        let dim = *xv.shape().last().ok_or_else(|| MftError::config("layer_norm: scalar input"))?;
        let g = self.params.get(gain);
        let b = self.params.get(bias);
        if g.numel() != dim || b.numel() != dim {
            return Err(MftError::config("layer_norm: gain/bias length != last dim"));
        }
        let rows = xv.numel() / dim;
        let mut out = vec![0.0f32; xv.numel()];
        let mut xhat = vec![0.0f32; xv.numel()];
        let mut inv_std = vec![0.0f32; rows];
        kernels::layer_norm_rows(xv.data(), g.data(), b.data(), dim, &mut out, &mut xhat, &mut inv_std);
        let shape = xv.shape().to_vec();
        let value = Tensor::from_vec_unchecked(&shape, out);
        let xhat = Tensor::from_vec_unchecked(&shape, xhat);
        Ok(self.push(Op::LayerNorm { x, gain, bias, xhat, inv_std }, value))
    }

    /// `x` (rows over the last dim `in`) times weight [in, out], no bias.
    pub fn linear(&mut self, x: ValueId, w: ParamId) -> Result<ValueId> {
        let xv = self.value(x);
        let wv = self.params.get(w);
        if wv.shape().len() != 2 {
            return Err(MftError::config("linear: weight must be 2-D [in, out]"));
        }
        let (d_in, d_out) = (wv.shape()[0], wv.shape()[1]);
        if *xv.shape().last().unwrap_or(&0) != d_in {
            return Err(MftError::config(format!(
                "linear: input last dim {:?} != weight in dim {d_in}",
                xv.shape().last()
            )));
        }
        let rows = xv.numel() / d_in;
        let mut out = vec![0.0f32; rows * d_out];
        kernels::matmul_nn(xv.data(), wv.data(), rows, d_in, d_out, &mut out);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = d_out;
        let value = Tensor::from_vec_unchecked(&shape, out);
        Ok(self.push(Op::Linear { x, w }, value))
    }

    /// Output logits through the transposed token embedding [vocab, dim].
    pub fn tied_head(&mut self, x: ValueId, emb: ParamId) -> Result<ValueId> {
        let xv = self.value(x);
        let ev = self.params.get(emb);
        let (vocab, dim) = (ev.shape()[0], ev.shape()[1]);
        if *xv.shape().last().unwrap_or(&0) != dim {
            return Err(MftError::config("tied_head: input last dim != embedding dim"));
        }
        let rows = xv.numel() / dim;
        let mut out = vec![0.0f32; rows * vocab];
        kernels::matmul_nt(xv.data(), ev.data(), rows, dim, vocab, &mut out);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = vocab;
        let value = Tensor::from_vec_unchecked(&shape, out);
        Ok(self.push(Op::TiedHead { x, emb }, value))
    }

    /// Multi-head causal self-attention over projected q/k/v of shape
    /// [batch, seq, dim]; head `h` occupies columns `h*dh .. (h+1)*dh`.
    pub fn causal_attention(
        &mut self,
        q: ValueId,
        k: ValueId,
        v: ValueId,
        n_heads: usize,
    ) -> Result<ValueId> {
        let shape = self.value(q).shape().to_vec();
        if shape.len() != 3 || self.value(k).shape() != shape || self.value(v).shape() != shape {
            return Err(MftError::config("causal_attention: q/k/v must share [b, t, d]"));
        }
        let (batch, seq, dim) = (shape[0], shape[1], shape[2]);
        if dim % n_heads != 0 {
            return Err(MftError::config("causal_attention: dim not divisible by n_heads"));
        }
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![0.0f32; batch * n_heads * seq * seq];
        let mut out = vec![0.0f32; batch * seq * dim];
        kernels::causal_attention_rows(qd, kd, vd, batch, seq, dim, n_heads, &mut out, &mut probs);
        let value = Tensor::from_vec_unchecked(&shape, out);
        Ok(self.push(Op::CausalAttention { q, k, v, n_heads, probs }, value))
    }

    pub fn gelu(&mut self, x: ValueId) -> ValueId {
        let data: Vec<f32> = self.value(x).data().iter().map(|&v| kernels::gelu(v)).collect();
        let out = Tensor::from_vec_unchecked(self.value(x).shape(), data);
        self.push(Op::Gelu(x), out)
    }

    /// Masked mean cross-entropy of `logits` rows against soft target rows.
    ///
    /// `targets` matches the logits shape; `mask` has one weight per row.
    /// Per-row log-normalizers and the final mean are accumulated in f64.
    pub fn soft_ce_loss(&mut self, logits: ValueId, targets: &Tensor, mask: &[f32]) -> Result<ValueId> {
        let lv = self.value(logits);
        if lv.shape() != targets.shape() {
            return Err(MftError::config("soft_ce_loss: target shape mismatch"));
        }
        let vocab = *lv.shape().last().ok_or_else(|| MftError::config("soft_ce_loss: scalar logits"))?;
        let rows = lv.numel() / vocab;
        if mask.len() != rows {
            return Err(MftError::config("soft_ce_loss: mask length != rows"));
        }
        let n_active: f64 = mask.iter().map(|&m| m as f64).sum();
        if n_active <= 0.0 {
            return Err(MftError::numeric("soft_ce_loss: no unmasked tokens"));
        }
        let mut probs = vec![0.0f32; rows * vocab];
        let mut total = 0.0f64;
        for r in 0..rows {
            let lrow = &lv.data()[r * vocab..(r + 1) * vocab];
            let trow = &targets.data()[r * vocab..(r + 1) * vocab];
            let max = lrow.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let mut sum = 0.0f64;
            for &l in lrow {
                sum += (l as f64 - max).exp();
            }
            let lse = max + sum.ln();
            let prow = &mut probs[r * vocab..(r + 1) * vocab];
            for (p, &l) in prow.iter_mut().zip(lrow) {
                *p = ((l as f64 - lse).exp()) as f32;
            }
            if mask[r] != 0.0 {
                let mut ce = 0.0f64;
                for (&t, &l) in trow.iter().zip(lrow) {
                    if t != 0.0 {
                        ce -= t as f64 * (l as f64 - lse);
                    }
                }
                total += mask[r] as f64 * ce;
            }
        }
        let loss = total / n_active;
        if !loss.is_finite() {
            return Err(MftError::numeric(format!("soft_ce_loss: non-finite loss {loss}")));
        }
        let op = Op::SoftCe {
            logits,
            targets: targets.clone(),
            mask: mask.to_vec(),
            probs: Tensor::from_vec_unchecked(lv.shape(), probs),
            n_active,
            value_f64: loss,
        };
        Ok(self.push(op, Tensor::scalar(loss as f32)))
    }

    /// Gradients of a scalar loss with respect to every registered parameter.
    pub fn backward(&self, loss: ValueId) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(MftError::numeric("backward: loss node is not recorded on this tape"));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(MftError::numeric("backward: loss must be scalar"));
        }
        let mut node_grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut grads = Gradients::new(self.params.len());
        node_grads[loss.0] = Some(Tensor::scalar(1.0));

        // Reverse creation order == reverse topological order; each node's
        // gradient is taken exactly once.
        for id in (0..=loss.0).rev() {
            let Some(g) = node_grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut node_grads, &mut grads)?;
        }
        grads.materialize_zeros(self.params);
        Ok(grads)
    }

    fn backprop_node(
        &self,
        id: usize,
        g: &Tensor,
        node_grads: &mut [Option<Tensor>],
        grads: &mut Gradients,
    ) -> Result<()> {
        match &self.nodes[id].op {
            Op::Const => {}
            Op::ParamLeaf(pid) => {
                if self.params.is_trainable(*pid) {
                    grads.accumulate(*pid, g)?;
                }
            }
            Op::Add(a, b) => {
                add_to(node_grads, *a, g.clone())?;
                add_to(node_grads, *b, g.clone())?;
            }
            Op::Mul(a, b) => {
                let ga = elementwise_mul(g, self.value(*b));
                let gb = elementwise_mul(g, self.value(*a));
                add_to(node_grads, *a, ga)?;
                add_to(node_grads, *b, gb)?;
            }
            Op::Scale(x, c) => {
                let gx: Vec<f32> = g.data().iter().map(|v| v * c).collect();
                add_to(node_grads, *x, Tensor::from_vec_unchecked(g.shape(), gx))?;
            }
            Op::Matmul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let mut ga = vec![0.0f32; m * k];
                kernels::matmul_nt(g.data(), self.value(*b).data(), m, n, k, &mut ga);
                let mut gb = vec![0.0f32; k * n];
                kernels::matmul_tn(self.value(*a).data(), g.data(), m, k, n, &mut gb);
                add_to(node_grads, *a, Tensor::from_vec_unchecked(&[m, k], ga))?;
                add_to(node_grads, *b, Tensor::from_vec_unchecked(&[k, n], gb))?;
            }
            Op::Sum { x, .. } => {
                let gv = g.item();
                let shape = self.value(*x).shape().to_vec();
                let n = self.value(*x).numel();
                add_to(node_grads, *x, Tensor::from_vec_unchecked(&shape, vec![gv; n]))?;
            }
            Op::Embed { tok, pos, tokens, seq } => {
                let dim = self.params.get(*tok).shape()[1];
                if self.params.is_trainable(*tok) {
                    let mut gt = Tensor::zeros(self.params.get(*tok).shape());
                    for (i, &t) in tokens.iter().enumerate() {
                        let src = &g.data()[i * dim..(i + 1) * dim];
                        let dst = &mut gt.data_mut()[t as usize * dim..(t as usize + 1) * dim];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    grads.accumulate(*tok, &gt)?;
                }
                if self.params.is_trainable(*pos) {
                    let mut gp = Tensor::zeros(self.params.get(*pos).shape());
                    for i in 0..tokens.len() {
                        let src = &g.data()[i * dim..(i + 1) * dim];
                        let t = i % seq;
                        let dst = &mut gp.data_mut()[t * dim..(t + 1) * dim];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    grads.accumulate(*pos, &gp)?;
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gv = self.params.get(*gain);
                let dim = gv.numel();
                let rows = xhat.numel() / dim;
                let mut gx = vec![0.0f32; xhat.numel()];
                let mut ggain = vec![0.0f32; dim];
                let mut gbias = vec![0.0f32; dim];
                for r in 0..rows {
                    let grow = &g.data()[r * dim..(r + 1) * dim];
                    let hrow = &xhat.data()[r * dim..(r + 1) * dim];
                    let mut m1 = 0.0f32;
                    let mut m2 = 0.0f32;
                    for i in 0..dim {
                        let dyh = grow[i] * gv.data()[i];
                        m1 += dyh;
                        m2 += dyh * hrow[i];
                        ggain[i] += grow[i] * hrow[i];
                        gbias[i] += grow[i];
                    }
                    m1 /= dim as f32;
                    m2 /= dim as f32;
                    let inv = inv_std[r];
                    let xrow = &mut gx[r * dim..(r + 1) * dim];
                    for i in 0..dim {
                        let dyh = grow[i] * gv.data()[i];
                        xrow[i] = inv * (dyh - m1 - hrow[i] * m2);
                    }
                }
                if self.params.is_trainable(*gain) {
                    grads.accumulate(*gain, &Tensor::from_vec_unchecked(&[dim], ggain))?;
                }
                if self.params.is_trainable(*bias) {
                    grads.accumulate(*bias, &Tensor::from_vec_unchecked(&[dim], gbias))?;
                }
                let shape = self.value(*x).shape().to_vec();
                add_to(node_grads, *x, Tensor::from_vec_unchecked(&shape, gx))?;
            }
            Op::Linear { x, w } => {
                let wv = self.params.get(*w);
                let (d_in, d_out) = (wv.shape()[0], wv.shape()[1]);
                let rows = g.numel() / d_out;
                let mut gx = vec![0.0f32; rows * d_in];
                kernels::matmul_nt(g.data(), wv.data(), rows, d_out, d_in, &mut gx);
                if self.params.is_trainable(*w) {
                    let mut gw = vec![0.0f32; d_in * d_out];
                    kernels::matmul_tn(self.value(*x).data(), g.data(), rows, d_in, d_out, &mut gw);
                    grads.accumulate(*w, &Tensor::from_vec_unchecked(&[d_in, d_out], gw))?;
                }
                let shape = self.value(*x).shape().to_vec();
                add_to(node_grads, *x, Tensor::from_vec_unchecked(&shape, gx))?;
            }
            Op::TiedHead { x, emb } => {
                let ev = self.params.get(*emb);
                let (vocab, dim) = (ev.shape()[0], ev.shape()[1]);
                let rows = g.numel() / vocab;
                let mut gx = vec![0.0f32; rows * dim];
                kernels::matmul_nn(g.data(), ev.data(), rows, vocab, dim, &mut gx);
                if self.params.is_trainable(*emb) {
                    let mut ge = vec![0.0f32; vocab * dim];
                    kernels::matmul_tn(g.data(), self.value(*x).data(), rows, vocab, dim, &mut ge);
                    grads.accumulate(*emb, &Tensor::from_vec_unchecked(&[vocab, dim], ge))?;
                }
                let shape = self.value(*x).shape().to_vec();
                add_to(node_grads, *x, Tensor::from_vec_unchecked(&shape, gx))?;
            }
            Op::CausalAttention { q, k, v, n_heads, probs } => {
                let shape = self.value(*q).shape().to_vec();
                let (batch, seq, dim) = (shape[0], shape[1], shape[2]);
                let dh = dim / n_heads;
                let scale = 1.0 / (dh as f32).sqrt();
                let (qd, kd, vd) = (self.value(*q).data(), self.value(*k).data(), self.value(*v).data());
                let mut gq = vec![0.0f32; qd.len()];
                let mut gk = vec![0.0f32; kd.len()];
                let mut gv = vec![0.0f32; vd.len()];
                let mut dp = vec![0.0f32; seq];
                for b in 0..batch {
                    for h in 0..*n_heads {
                        let col = h * dh;
                        for i in 0..seq {
                            let grow = &g.data()[(b * seq + i) * dim + col..][..dh];
                            let prow = &probs[((b * n_heads + h) * seq + i) * seq..][..seq];
                            let mut dot_pp = 0.0f32;
                            for j in 0..=i {
                                let vrow = &vd[(b * seq + j) * dim + col..][..dh];
                                let mut acc = 0.0f32;
                                for (&a, &c) in grow.iter().zip(vrow) {
                                    acc += a * c;
                                }
                                dp[j] = acc;
                                dot_pp += prow[j] * acc;
                                // dV_j += P_ij * dC_i
                                let gvrow = &mut gv[(b * seq + j) * dim + col..][..dh];
                                for (d, &s) in gvrow.iter_mut().zip(grow) {
                                    *d += prow[j] * s;
                                }
                            }
                            let qrow = &qd[(b * seq + i) * dim + col..][..dh];
                            for j in 0..=i {
                                let ds = prow[j] * (dp[j] - dot_pp) * scale;
                                let krow = &kd[(b * seq + j) * dim + col..][..dh];
                                let gqrow = &mut gq[(b * seq + i) * dim + col..][..dh];
                                for (d, &c) in gqrow.iter_mut().zip(krow) {
                                    *d += ds * c;
                                }
                                let gkrow = &mut gk[(b * seq + j) * dim + col..][..dh];
                                for (d, &c) in gkrow.iter_mut().zip(qrow) {
                                    *d += ds * c;
                                }
                            }
                        }
                    }
                }
                add_to(node_grads, *q, Tensor::from_vec_unchecked(&shape, gq))?;
                add_to(node_grads, *k, Tensor::from_vec_unchecked(&shape, gk))?;
                add_to(node_grads, *v, Tensor::from_vec_unchecked(&shape, gv))?;
            }
            Op::Gelu(x) => {
                let gx: Vec<f32> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| kernels::gelu_grad(xv) * gv)
                    .collect();
                let shape = self.value(*x).shape().to_vec();
                add_to(node_grads, *x, Tensor::from_vec_unchecked(&shape, gx))?;
            }
            Op::SoftCe { logits, targets, mask, probs, n_active, .. } => {
                let gscalar = g.item();
                let vocab = *probs.shape().last().unwrap();
                let rows = probs.numel() / vocab;
                let mut gl = vec![0.0f32; probs.numel()];
                for r in 0..rows {
                    if mask[r] == 0.0 {
                        continue;
                    }
                    let w = gscalar * mask[r] / *n_active as f32;
                    let prow = &probs.data()[r * vocab..(r + 1) * vocab];
                    let trow = &targets.data()[r * vocab..(r + 1) * vocab];
                    let grow = &mut gl[r * vocab..(r + 1) * vocab];
                    for i in 0..vocab {
                        grow[i] = w * (prow[i] - trow[i]);
                    }
                }
                let shape = self.value(*logits).shape().to_vec();
                add_to(node_grads, *logits, Tensor::from_vec_unchecked(&shape, gl))?;
            }
        }
        Ok(())
    }
}

fn add_to(node_grads: &mut [Option<Tensor>], id: ValueId, delta: Tensor) -> Result<()> {
    match &mut node_grads[id.0] {
        Some(t) => t.add_assign(&delta),
        slot @ None => {
            *slot = Some(delta);
            Ok(())
        }
    }
}

fn elementwise_mul(a: &Tensor, b: &Tensor) -> Tensor {
    let data: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::from_vec_unchecked(a.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, shape: &[usize], data: Vec<f32>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.register(name, Tensor::from_vec(shape, data).unwrap(), true);
        (store, id)
    }

    #[test]
    fn fanout_accumulates_additively() {
        // f(x) = sum(x*x) + sum(x)  -> df/dx = 2x + 1
        let (store, pid) = store_with("x", &[3], vec![1.0, -2.0, 0.5]);
        let mut tape = GradTape::new(&store);
        let x = tape.param(pid);
        let sq = tape.mul(x, x).unwrap();
        let s1 = tape.sum(sq);
        let s2 = tape.sum(x);
        let loss = tape.add(s1, s2).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.expect(pid).unwrap();
        for (gv, xv) in g.data().iter().zip([1.0f32, -2.0, 0.5]) {
            assert!((gv - (2.0 * xv + 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn matmul_gradients_match_manual() {
        // loss = sum(A @ B); dA = row-sums of B broadcast, dB = col-sums of A.
        let mut store = ParamStore::new();
        let a = store.register("a", Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap(), true);
        let b = store.register("b", Tensor::from_vec(&[3, 2], vec![1., -1., 2., 0.5, 0., 3.]).unwrap(), true);
        let mut tape = GradTape::new(&store);
        let an = tape.param(a);
        let bn = tape.param(b);
        let c = tape.matmul(an, bn).unwrap();
        let loss = tape.sum(c);
        let grads = tape.backward(loss).unwrap();
        let ga = grads.expect(a).unwrap();
        // dA[i,k] = sum_j B[k,j]
        let brows = [0.0f32, 2.5, 3.0];
        for i in 0..2 {
            for k in 0..3 {
                assert!((ga.data()[i * 3 + k] - brows[k]).abs() < 1e-6);
            }
        }
        let gb = grads.expect(b).unwrap();
        // dB[k,j] = sum_i A[i,k]
        let acols = [5.0f32, 7.0, 9.0];
        for k in 0..3 {
            for j in 0..2 {
                assert!((gb.data()[k * 2 + j] - acols[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_ids() {
        let (store, pid) = store_with("x", &[2], vec![1.0, 2.0]);
        let mut tape = GradTape::new(&store);
        let x = tape.param(pid);
        assert!(tape.backward(x).is_err()); // non-scalar
        let empty_tape = GradTape::new(&store);
        assert!(empty_tape.backward(ValueId(0)).is_err()); // nothing recorded
    }

    #[test]
    fn soft_ce_gradient_is_probs_minus_target() {
        let mut store = ParamStore::new();
        let l = store.register("logits", Tensor::from_vec(&[1, 1, 3], vec![0.3, -0.7, 1.1]).unwrap(), true);
        let target = Tensor::from_vec(&[1, 1, 3], vec![0.2, 0.5, 0.3]).unwrap();
        let mut tape = GradTape::new(&store);
        let ln = tape.param(l);
        let loss = tape.soft_ce_loss(ln, &target, &[1.0]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.expect(l).unwrap();
        let p = kernels::softmax_f64(&[0.3f64, -0.7, 1.1]);
        for i in 0..3 {
            assert!((g.data()[i] as f64 - (p[i] - target.data()[i] as f64)).abs() < 1e-6);
        }
    }

    #[test]
    fn soft_ce_masked_rows_get_zero_gradient() {
        let mut store = ParamStore::new();
        let l = store.register(
            "logits",
            Tensor::from_vec(&[1, 2, 3], vec![0.3, -0.7, 1.1, 0.2, 0.1, -0.5]).unwrap(),
            true,
        );
        let target = Tensor::from_vec(
            &[1, 2, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let mut tape = GradTape::new(&store);
        let ln = tape.param(l);
        let loss = tape.soft_ce_loss(ln, &target, &[1.0, 0.0]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.expect(l).unwrap();
        assert!(g.data()[3..].iter().all(|&v| v == 0.0));
        assert!(g.data()[..3].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn frozen_params_get_no_gradient_entry_but_pass_through() {
        let mut store = ParamStore::new();
        let x = store.register("x", Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap(), true);
        let w = store.register("w", Tensor::from_vec(&[2, 2], vec![1., 0., 0., 1.]).unwrap(), false);
        let mut tape = GradTape::new(&store);
        let xn = tape.param(x);
        let y = tape.linear(xn, w).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(w).is_none());
        assert!(grads.get(x).is_some());
    }
}
