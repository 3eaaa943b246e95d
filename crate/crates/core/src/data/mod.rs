//! Corpus ingestion, byte tokenization, packing, and deterministic batching
//! with replay mixing between a general and a specialized domain.

pub mod fixtures;
pub mod pack;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{MftError, Result};
use crate::numerics::rng::stream_rng;

pub use pack::{make_batches, Batch, BatchIter, PackedSet, ReplayConfig};

/// Byte-level vocabulary: 256 byte values plus BOS/EOS/PAD.
pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const VOCAB_SIZE: usize = 259;

/// Tokens contributed by one document: its bytes plus BOS and EOS.
pub fn document_tokens(doc: &[u8]) -> usize {
    doc.len() + 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainTag {
    General,
    Specialized,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::General => "general",
            DomainTag::Specialized => "specialized",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub domain: DomainTag,
    pub documents: Vec<Vec<u8>>,
    pub token_count: usize,
}

impl Corpus {
    pub fn from_documents(domain: DomainTag, documents: Vec<Vec<u8>>) -> Self {
        let token_count = documents.iter().map(|d| document_tokens(d)).sum();
        Corpus { domain, documents, token_count }
    }
}

/// Loads a corpus from a text file or a directory of `.txt` files.
///
/// Documents are blank-line-delimited blocks (see
/// [`load_corpus_with_delimiter`] for other delimiters). Directory entries are
/// visited in sorted order so the result is deterministic.
pub fn load_corpus(path: &Path, domain: DomainTag) -> Result<Corpus> {
    load_corpus_with_delimiter(path, domain, "\n\n")
}

pub fn load_corpus_with_delimiter(path: &Path, domain: DomainTag, delimiter: &str) -> Result<Corpus> {
    if delimiter.is_empty() {
        return Err(MftError::config("corpus delimiter must be non-empty"));
    }
    let mut texts: Vec<String> = Vec::new();
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| MftError::data(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|x| x == "txt").unwrap_or(false))
            .collect();
        files.sort();
        for f in files {
            texts.push(read_text(&f)?);
        }
    } else {
        texts.push(read_text(path)?);
    }

    let mut documents = Vec::new();
    for text in texts {
        for block in text.split(delimiter) {
            let trimmed = block.trim();
            if !trimmed.is_empty() {
                documents.push(trimmed.as_bytes().to_vec());
            }
        }
    }
    if documents.is_empty() {
        return Err(MftError::data(format!("{}: empty corpus", path.display())));
    }
    Ok(Corpus::from_documents(domain, documents))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| MftError::data(format!("{}: {e}", path.display())))
}

/// Splits whole documents into a validation set of at least `val_tokens`
/// tokens; everything else is training data. Selection is a seeded shuffle,
/// so the same seed gives the same split; the two halves never share a
/// document.
pub fn split_validation(corpus: &Corpus, val_tokens: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    if val_tokens == 0 {
        return Ok((
            corpus.clone(),
            Corpus { domain: corpus.domain, documents: Vec::new(), token_count: 0 },
        ));
    }
    if val_tokens >= corpus.token_count {
        return Err(MftError::data(format!(
            "validation budget {val_tokens} >= corpus tokens {}",
            corpus.token_count
        )));
    }
    let mut order: Vec<usize> = (0..corpus.documents.len()).collect();
    order.shuffle(&mut stream_rng(seed, "data/split"));
    let mut in_val = vec![false; corpus.documents.len()];
    let mut got = 0usize;
    for &i in &order {
        if got >= val_tokens {
            break;
        }
        in_val[i] = true;
        got += document_tokens(&corpus.documents[i]);
    }
    let mut train_docs = Vec::new();
    let mut val_docs = Vec::new();
    for (i, doc) in corpus.documents.iter().enumerate() {
        if in_val[i] {
            val_docs.push(doc.clone());
        } else {
            train_docs.push(doc.clone());
        }
    }
    if train_docs.is_empty() {
        return Err(MftError::data("validation split consumed every document"));
    }
    Ok((
        Corpus::from_documents(corpus.domain, train_docs),
        Corpus::from_documents(corpus.domain, val_docs),
    ))
}

/// First documents of the corpus up to (and including) the one that reaches
/// `budget_tokens`. A zero or over-large budget returns the corpus unchanged.
pub fn take_budget(corpus: &Corpus, budget_tokens: usize) -> Corpus {
    if budget_tokens == 0 || budget_tokens >= corpus.token_count {
        return corpus.clone();
    }
    let mut docs = Vec::new();
    let mut got = 0usize;
    for doc in &corpus.documents {
        if got >= budget_tokens {
            break;
        }
        got += document_tokens(doc);
        docs.push(doc.clone());
    }
    Corpus::from_documents(corpus.domain, docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_of(n_docs: usize, doc_bytes: usize) -> Corpus {
        let docs: Vec<Vec<u8>> = (0..n_docs)
            .map(|i| {
                let mut d = format!("{i:04}").into_bytes();
                d.resize(doc_bytes, b'a' + (i % 26) as u8);
                d
            })
            .collect();
        Corpus::from_documents(DomainTag::General, docs)
    }

    #[test]
    fn token_count_includes_bos_eos() {
        let c = corpus_of(3, 10);
        assert_eq!(c.token_count, 3 * 12);
    }

    #[test]
    fn split_zero_is_identity() {
        let c = corpus_of(4, 10);
        let (train, val) = split_validation(&c, 0, 1).unwrap();
        assert_eq!(train.documents.len(), 4);
        assert!(val.documents.is_empty());
    }

    #[test]
    fn split_greedy_document_count() {
        // 10 docs of 100 tokens each; 250 token validation budget -> 3 docs.
        let c = corpus_of(10, 98);
        let (train, val) = split_validation(&c, 250, 9).unwrap();
        assert_eq!(val.documents.len(), 3);
        assert_eq!(train.documents.len(), 7);
        assert_eq!(val.token_count, 300);
    }

    #[test]
    fn split_is_seed_deterministic_and_disjoint() {
        let c = corpus_of(40, 50);
        let (t1, v1) = split_validation(&c, 500, 5).unwrap();
        let (t2, v2) = split_validation(&c, 500, 5).unwrap();
        assert_eq!(t1.documents, t2.documents);
        assert_eq!(v1.documents, v2.documents);
        assert_eq!(t1.token_count + v1.token_count, c.token_count);
        let (t3, _) = split_validation(&c, 500, 6).unwrap();
        assert_ne!(t1.documents, t3.documents);
    }

    #[test]
    fn split_insufficient_tokens_is_error() {
        let c = corpus_of(2, 10);
        assert!(split_validation(&c, 24, 1).is_err());
    }

    #[test]
    fn budget_is_greedy_prefix() {
        let c = corpus_of(10, 98);
        let b = take_budget(&c, 250);
        assert_eq!(b.documents.len(), 3);
        assert_eq!(take_budget(&c, 0).documents.len(), 10);
        assert_eq!(take_budget(&c, 10_000).documents.len(), 10);
    }

    #[test]
    fn load_corpus_splits_on_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.txt");
        std::fs::write(&f, "first doc line one\nline two\n\nsecond doc\n\n\nthird doc\n").unwrap();
        let c = load_corpus(&f, DomainTag::Specialized).unwrap();
        assert_eq!(c.documents.len(), 3);
        assert_eq!(c.documents[1], b"second doc");
    }

    #[test]
    fn load_corpus_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(&dir.path().join("missing.txt"), DomainTag::General).is_err());
        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "\n\n\n").unwrap();
        assert!(load_corpus(&empty, DomainTag::General).is_err());
    }

    #[test]
    fn load_corpus_from_directory_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.txt"), "from b").unwrap();
        std::fs::write(dir.path().join("a.txt"), "from a").unwrap();
        std::fs::write(dir.path().join("ignore.md"), "not txt").unwrap();
        let c = load_corpus(dir.path(), DomainTag::General).unwrap();
        assert_eq!(c.documents, vec![b"from a".to_vec(), b"from b".to_vec()]);
    }
}
