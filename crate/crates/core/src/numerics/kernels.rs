//! Flat-slice compute kernels: matmul variants, softmax, GELU.
//!
//! All loops are written so the inner dimension walks contiguous memory;
//! accumulation order is fixed, which keeps results bitwise reproducible.

/// C[m,n] = A[m,k] * B[k,n]
pub fn matmul_nn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
}

/// C[m,n] = A[m,k] * B[n,k]^T  (rows of B are dotted against rows of A)
pub fn matmul_nt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (j, c) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *c = acc;
        }
    }
}

/// C[k,n] = A[m,k]^T * B[m,n]  (used for weight gradients)
pub fn matmul_tn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    out.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let crow = &mut out[kk * n..(kk + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
}

/// Max-subtracted softmax of one row, computed and returned in f64.
pub fn softmax_f64(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// In-place max-subtracted softmax over each row of an [rows, cols] slice.
pub fn softmax_rows_inplace(x: &mut [f32], rows: usize, cols: usize) {
    debug_assert_eq!(x.len(), rows * cols);
    for r in 0..rows {
        let row = &mut x[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Log-softmax of one f32 row, accumulated in f64.
pub fn log_softmax_f64(row: &[f32]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut sum = 0.0f64;
    for &v in row {
        sum += (v as f64 - max).exp();
    }
    let lse = max + sum.ln();
    row.iter().map(|&v| v as f64 - lse).collect()
}

/// Embedding rows: out[i] = tok_table[tokens[i]] + pos_table[i % seq].
/// Token ids must already be validated.
pub fn embed_rows(
    tok_table: &[f32],
    pos_table: &[f32],
    dim: usize,
    tokens: &[u32],
    seq: usize,
    out: &mut [f32],
) {
    for (i, &t) in tokens.iter().enumerate() {
        let trow = &tok_table[t as usize * dim..(t as usize + 1) * dim];
        let prow = &pos_table[(i % seq) * dim..(i % seq + 1) * dim];
        let orow = &mut out[i * dim..(i + 1) * dim];
        for ((o, &a), &b) in orow.iter_mut().zip(trow).zip(prow) {
            *o = a + b;
        }
    }
}

pub const LN_EPS: f32 = 1e-5;

/// Row-wise layer norm with gain and bias. `xhat` and `inv_std` receive the
/// normalized rows and reciprocal standard deviations for the backward pass;
/// pass scratch and discard when only the output is needed.
pub fn layer_norm_rows(
    x: &[f32],
    gain: &[f32],
    bias: &[f32],
    dim: usize,
    out: &mut [f32],
    xhat: &mut [f32],
    inv_std: &mut [f32],
) {
    let rows = x.len() / dim;
    for r in 0..rows {
        let xrow = &x[r * dim..(r + 1) * dim];
        let mean = xrow.iter().sum::<f32>() / dim as f32;
        let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / dim as f32;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = inv;
        let hrow = &mut xhat[r * dim..(r + 1) * dim];
        let orow = &mut out[r * dim..(r + 1) * dim];
        for i in 0..dim {
            let h = (xrow[i] - mean) * inv;
            hrow[i] = h;
            orow[i] = gain[i] * h + bias[i];
        }
    }
}

/// Multi-head causal attention over projected q/k/v laid out [batch, seq, dim]
/// with head `h` in columns `h*dh .. (h+1)*dh`. `probs` ([batch, heads, seq,
/// seq]) receives the attention weights for the backward pass.
pub fn causal_attention_rows(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    batch: usize,
    seq: usize,
    dim: usize,
    n_heads: usize,
    out: &mut [f32],
    probs: &mut [f32],
) {
    let dh = dim / n_heads;
    let scale = 1.0 / (dh as f32).sqrt();
    let mut srow = vec![0.0f32; seq];
    for b in 0..batch {
        for h in 0..n_heads {
            let col = h * dh;
            for i in 0..seq {
                let qrow = &q[(b * seq + i) * dim + col..][..dh];
                for j in 0..=i {
                    let krow = &k[(b * seq + j) * dim + col..][..dh];
                    let mut acc = 0.0f32;
                    for (&a, &c) in qrow.iter().zip(krow) {
                        acc += a * c;
                    }
                    srow[j] = acc * scale;
                }
                let max = srow[..=i].iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let mut sum = 0.0f32;
                for s in &mut srow[..=i] {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let inv = 1.0 / sum;
                let prow = &mut probs[((b * n_heads + h) * seq + i) * seq..][..seq];
                for (j, s) in srow[..=i].iter().enumerate() {
                    prow[j] = s * inv;
                }
                let orow = &mut out[(b * seq + i) * dim + col..][..dh];
                for j in 0..=i {
                    let p = prow[j];
                    let vrow = &v[(b * seq + j) * dim + col..][..dh];
                    for (o, &vv) in orow.iter_mut().zip(vrow) {
                        *o += p * vv;
                    }
                }
            }
        }
    }
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)

/// GELU, tanh approximation.
pub fn gelu(x: f32) -> f32 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

/// Derivative of the tanh-approximated GELU.
pub fn gelu_grad(x: f32) -> f32 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
