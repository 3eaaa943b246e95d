//! Sequence packing and the deterministic replay-mixing batch iterator.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, DomainTag, BOS, EOS, PAD};
use crate::error::{MftError, Result};
use crate::numerics::rng::stream_rng;

/// Fixed-length windows of token ids with a PAD mask.
#[derive(Clone, Debug)]
pub struct PackedSet {
    pub domain: DomainTag,
    pub seq_len: usize,
    /// `n_sequences * seq_len` token ids.
    tokens: Vec<u32>,
    n_sequences: usize,
}

impl PackedSet {
    pub fn len(&self) -> usize {
        self.n_sequences
    }

    pub fn is_empty(&self) -> bool {
        self.n_sequences == 0
    }

    pub fn sequence(&self, i: usize) -> &[u32] {
        &self.tokens[i * self.seq_len..(i + 1) * self.seq_len]
    }

    /// 1.0 for real tokens, 0.0 for PAD, aligned with `sequence(i)`.
    pub fn pad_mask(&self, i: usize) -> Vec<f32> {
        self.sequence(i).iter().map(|&t| if t == PAD { 0.0 } else { 1.0 }).collect()
    }

    pub fn token_count(&self) -> usize {
        self.tokens.iter().filter(|&&t| t != PAD).count()
    }
}

/// Concatenates documents as `BOS bytes... EOS` and chunks the stream into
/// non-overlapping `seq_len` windows; the final partial window is PAD-filled.
pub fn pack(corpus: &Corpus, seq_len: usize) -> Result<PackedSet> {
    if seq_len < 2 {
        return Err(MftError::config("pack: seq_len must be >= 2"));
    }
    let mut tokens: Vec<u32> = Vec::with_capacity(corpus.token_count);
    for doc in &corpus.documents {
        tokens.push(BOS);
        tokens.extend(doc.iter().map(|&b| b as u32));
        tokens.push(EOS);
    }
    let n_sequences = tokens.len().div_ceil(seq_len);
    tokens.resize(n_sequences * seq_len, PAD);
    Ok(PackedSet { domain: corpus.domain, seq_len, tokens, n_sequences })
}

/// Fraction of each batch drawn from the specialized domain (the "new data
/// fraction"). 1.0 means no replay.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub nu: f64,
}

impl ReplayConfig {
    pub fn none() -> Self {
        ReplayConfig { nu: 1.0 }
    }

    pub fn new(nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(MftError::config(format!("replay fraction nu {nu} outside [0, 1]")));
        }
        Ok(ReplayConfig { nu })
    }
}

/// One training batch. `labels[b, t]` is the next token after position `t`
/// (PAD at window ends); `loss_mask[b, t]` is zero wherever there is no real
/// next token to predict. The first `n_specialized` rows come from the
/// specialized set, the rest from the general set.
#[derive(Clone, Debug)]
pub struct Batch {
    pub batch: usize,
    pub seq: usize,
    pub tokens: Vec<u32>,
    pub labels: Vec<u32>,
    pub loss_mask: Vec<f32>,
    pub n_specialized: usize,
}

struct StreamState {
    perm: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl StreamState {
    fn new(n: usize, mut rng: ChaCha8Rng) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        StreamState { perm, cursor: 0, rng }
    }

    /// Next sequence index, reshuffling when the epoch is exhausted.
    fn next(&mut self) -> usize {
        if self.cursor == self.perm.len() {
            self.perm.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let i = self.perm[self.cursor];
        self.cursor += 1;
        i
    }
}

pub struct BatchIter {
    specialized: PackedSet,
    general: Option<PackedSet>,
    spec_state: StreamState,
    gen_state: Option<StreamState>,
    batch_size: usize,
    n_spec_rows: usize,
    steps: usize,
    emitted: usize,
}

/// Deterministic batch stream: each batch holds `round(nu * batch_size)`
/// specialized rows and the remainder general rows, with each stream cycling
/// through seeded epoch permutations (data is reused once exhausted).
pub fn make_batches(
    specialized: PackedSet,
    general: Option<PackedSet>,
    batch_size: usize,
    replay: ReplayConfig,
    steps: usize,
    seed: u64,
) -> Result<BatchIter> {
    if batch_size == 0 || steps == 0 {
        return Err(MftError::config("make_batches: batch_size and steps must be >= 1"));
    }
    if specialized.is_empty() {
        return Err(MftError::data("make_batches: empty specialized set"));
    }
    let n_spec_rows = ((replay.nu * batch_size as f64).round() as usize).min(batch_size);
    if n_spec_rows < batch_size {
        match &general {
            None => {
                return Err(MftError::data(
                    "replay (nu < 1) requires general-domain data, none provided",
                ))
            }
            Some(g) => {
                if g.is_empty() {
                    return Err(MftError::data("make_batches: empty general set"));
                }
                if g.seq_len != specialized.seq_len {
                    return Err(MftError::config("make_batches: mismatched seq_len"));
                }
            }
        }
    }
    let spec_state = StreamState::new(specialized.len(), stream_rng(seed, "data/specialized"));
    let gen_state = general
        .as_ref()
        .map(|g| StreamState::new(g.len(), stream_rng(seed, "data/general")));
    Ok(BatchIter {
        specialized,
        general,
        spec_state,
        gen_state,
        batch_size,
        n_spec_rows,
        steps,
        emitted: 0,
    })
}

impl Iterator for BatchIter {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.emitted == self.steps {
            return None;
        }
        self.emitted += 1;
        let seq = self.specialized.seq_len;
        let mut tokens = Vec::with_capacity(self.batch_size * seq);
        for _ in 0..self.n_spec_rows {
            tokens.extend_from_slice(self.specialized.sequence(self.spec_state.next()));
        }
        for _ in self.n_spec_rows..self.batch_size {
            let g = self.general.as_ref().expect("general set checked at construction");
            let st = self.gen_state.as_mut().expect("general state exists");
            tokens.extend_from_slice(g.sequence(st.next()));
        }
        let mut labels = vec![PAD; self.batch_size * seq];
        let mut loss_mask = vec![0.0f32; self.batch_size * seq];
        for b in 0..self.batch_size {
            for t in 0..seq - 1 {
                let next = tokens[b * seq + t + 1];
                labels[b * seq + t] = next;
                if next != PAD {
                    loss_mask[b * seq + t] = 1.0;
                }
            }
        }
        Some(Batch {
            batch: self.batch_size,
            seq,
            tokens,
            labels,
            loss_mask,
            n_specialized: self.n_spec_rows,
        })
    }
}
