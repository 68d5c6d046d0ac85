//! In-memory vector index over signal definitions with top-k cosine
//! retrieval. The embedding is TF-IDF over a shared tokenizer; anything that
//! can produce a sparse vector for a piece of text (the [`Embedding`] trait)
//! can take its place.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{PropertyDef, PropertyKind, SignalDef, StateDef};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate doc_id '{0}'")]
    DuplicateDocId(String),
}

/// One entry of the searchable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDoc {
    pub doc_id: String,
    pub text: String,
}

/// Sparse vector over vocabulary dimensions, sorted by dimension.
pub type SparseVec = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy)]
pub struct RetrievalConfig {
    /// Number of results to return. Must be at least 1.
    pub k: usize,
    /// Results scoring below this are dropped. Must lie in [0, 1].
    pub min_score: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: 5,
            min_score: 0.0,
        }
    }
}

/// Projects text into the index's vector space. Implemented by the TF-IDF
/// index itself; a learned-embedding backend would provide its own.
pub trait Embedding {
    fn embed(&self, text: &str) -> SparseVec;
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    vocabulary: BTreeMap<String, u32>,
    idf: Vec<f64>,
    doc_vectors: BTreeMap<String, SparseVec>,
}

/// Lowercased word split of `text`: breaks at non-alphanumerics, camel and
/// Pascal case boundaries, and letter/digit boundaries. An all-uppercase run
/// keeps its last letter for a following lowercase word ("ACMode" gives
/// [ac, mode]), and the registry's API prefix is peeled off acronym runs so
/// "APIACModeRqst" gives [api, ac, mode, rqst].
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        if chars[i].is_numeric() {
            while i < chars.len() && chars[i].is_numeric() {
                i += 1;
            }
        } else if chars[i].is_lowercase() {
            while i < chars.len() && chars[i].is_lowercase() {
                i += 1;
            }
        } else {
            i += 1;
            if i < chars.len() && chars[i].is_uppercase() {
                while i < chars.len() && chars[i].is_uppercase() {
                    i += 1;
                }
                // "ACMode": the M opens the next word.
                if i < chars.len() && chars[i].is_lowercase() {
                    i -= 1;
                }
            } else {
                while i < chars.len() && chars[i].is_lowercase() {
                    i += 1;
                }
            }
        }
        push_word(&mut tokens, chars[start..i].iter().collect());
    }
    tokens
}

fn push_word(tokens: &mut Vec<String>, word: String) {
    let all_upper = word.chars().all(char::is_uppercase);
    if all_upper && word.len() > 3 && word.starts_with("API") {
        tokens.push("api".to_string());
        tokens.push(word[3..].to_lowercase());
    } else {
        tokens.push(word.to_lowercase());
    }
}

/// The searchable text of a signal: its name, the name's word split, the
/// direction keyword, and the free-form description.
pub fn signal_doc(signal: &SignalDef) -> SignalDoc {
    let mut text = signal.name.clone();
    for token in tokenize(&signal.name) {
        text.push(' ');
        text.push_str(&token);
    }
    text.push(' ');
    text.push_str(signal.direction.keyword());
    text.push(' ');
    text.push_str(&signal.description);
    SignalDoc {
        doc_id: signal.doc_id.clone(),
        text,
    }
}

/// Query text for signal search by property: name, labels or unit, and the
/// description.
pub fn property_query_text(prop: &PropertyDef) -> String {
    let mut text = prop.name.clone();
    match &prop.kind {
        PropertyKind::Enum { labels } => {
            for label in labels {
                text.push(' ');
                text.push_str(label);
            }
        }
        PropertyKind::Number { unit, .. } => {
            text.push(' ');
            text.push_str(unit);
        }
        PropertyKind::Boolean => {}
    }
    text.push(' ');
    text.push_str(&prop.description);
    text
}

/// Query text for signal search by state: name plus the verbatim source
/// declaration (which carries labels or unit on its own).
pub fn state_query_text(state: &StateDef) -> String {
    format!("{} {}", state.name, state.source_text)
}

/// Build a TF-IDF index over the docs with idf(t) = ln((1+N)/(1+df(t))) + 1
/// and raw-count tf, each vector L2-normalized. Deterministic for a given
/// doc order.
pub fn build_index(docs: &[SignalDoc]) -> Result<VectorIndex, RetrievalError> {
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    let mut doc_tokens: Vec<(&str, Vec<String>)> = Vec::with_capacity(docs.len());
    for doc in docs {
        let tokens = tokenize(&doc.text);
        let mut unique: Vec<&String> = tokens.iter().collect();
        unique.sort();
        unique.dedup();
        for token in unique {
            *df.entry(token.clone()).or_insert(0) += 1;
        }
        doc_tokens.push((&doc.doc_id, tokens));
    }

    let vocabulary: BTreeMap<String, u32> = df
        .keys()
        .enumerate()
        .map(|(dim, token)| (token.clone(), dim as u32))
        .collect();
    let n = docs.len() as f64;
    let mut idf = vec![0.0; vocabulary.len()];
    for (token, dim) in &vocabulary {
        idf[*dim as usize] = ((1.0 + n) / (1.0 + f64::from(df[token]))).ln() + 1.0;
    }

    let mut index = VectorIndex {
        vocabulary,
        idf,
        doc_vectors: BTreeMap::new(),
    };
    for (doc_id, tokens) in doc_tokens {
        let vector = index.vector_of_tokens(&tokens);
        if index.doc_vectors.insert(doc_id.to_string(), vector).is_some() {
            return Err(RetrievalError::DuplicateDocId(doc_id.to_string()));
        }
    }
    Ok(index)
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.doc_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_vectors.is_empty()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// The stored vector of a doc, for inspection and doc-to-doc comparison.
    pub fn doc_vector(&self, doc_id: &str) -> Option<&SparseVec> {
        self.doc_vectors.get(doc_id)
    }

    fn vector_of_tokens(&self, tokens: &[String]) -> SparseVec {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for token in tokens {
            if let Some(dim) = self.vocabulary.get(token) {
                *counts.entry(*dim).or_insert(0.0) += 1.0;
            }
        }
        let mut vec: SparseVec = counts
            .into_iter()
            .map(|(dim, tf)| (dim, tf * self.idf[dim as usize]))
            .collect();
        let norm = vec.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut vec {
                *w /= norm;
            }
        }
        vec
    }
}

impl Embedding for VectorIndex {
    fn embed(&self, text: &str) -> SparseVec {
        self.vector_of_tokens(&tokenize(text))
    }
}

fn dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let mut sum = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Top-k cosine search. Results come back score-descending, ties broken by
/// ascending doc_id; docs with no token overlap (score 0) never appear, and
/// out-of-vocabulary query tokens contribute nothing.
pub fn query(index: &VectorIndex, query_text: &str, config: &RetrievalConfig) -> Vec<(String, f64)> {
    let query_vec = index.embed(query_text);
    if query_vec.is_empty() {
        return Vec::new();
    }
    let mut scored: Vec<(String, f64)> = index
        .doc_vectors
        .iter()
        .filter_map(|(doc_id, vec)| {
            let score = dot(&query_vec, vec).min(1.0);
            (score > 0.0 && score >= config.min_score).then(|| (doc_id.clone(), score))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(config.k);
    scored
}
