//! Local knowledge store with BM25 ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
/// Characters of a document body quoted in a retrieved snippet.
pub const EXCERPT_CHARS: usize = 600;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("reading corpus file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Document { doc_id: doc_id.into(), title: title.into(), body: body.into() }
    }

    /// Parses the corpus file format: first line is the title, the rest
    /// is the body.
    pub fn from_text(doc_id: impl Into<String>, text: &str) -> Self {
        let (title, body) = text.split_once('\n').unwrap_or((text, ""));
        Document::new(doc_id, title.trim(), body.trim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snippet {
    pub doc_id: String,
    pub score: f64,
    pub excerpt: String,
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Posting {
    doc: usize,
    tf: u32,
}

/// Immutable after indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeStore {
    documents: Vec<Document>,
    doc_lengths: Vec<u32>,
    avg_length: f64,
    index: BTreeMap<String, Vec<Posting>>,
}

/// Indexes title and body of every document.
pub fn index_store(documents: Vec<Document>) -> Result<KnowledgeStore, StoreError> {
    let mut seen = BTreeSet::new();
    for d in &documents {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(StoreError::DuplicateId(d.doc_id.clone()));
        }
    }
    let mut index: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(documents.len());
    for (doc, d) in documents.iter().enumerate() {
        let tokens = tokenize(&format!("{}\n{}", d.title, d.body));
        doc_lengths.push(tokens.len() as u32);
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        for (term, tf) in counts {
            index.entry(term).or_default().push(Posting { doc, tf });
        }
    }
    let avg_length = if documents.is_empty() {
        0.0
    } else {
        doc_lengths.iter().map(|l| *l as f64).sum::<f64>() / documents.len() as f64
    };
    Ok(KnowledgeStore { documents, doc_lengths, avg_length, index })
}

impl KnowledgeStore {
    pub fn empty() -> Self {
        index_store(Vec::new()).expect("empty corpus")
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Loads every `*.txt` file of a directory, in file-name order; the
    /// file stem becomes the document id.
    pub fn load_dir(dir: &Path) -> Result<Self, StoreError> {
        let io = |path: &Path, source| StoreError::Io { path: path.display().to_string(), source };
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        let docs = paths
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p).map_err(|e| io(p, e))?;
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Ok(Document::from_text(id, &text))
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        index_store(docs)
    }

    /// The corpus shipped with the crate.
    pub fn builtin() -> Self {
        let files: [(&str, &str); 6] = [
            ("crb_magnitude", include_str!("../corpus/crb_magnitude.txt")),
            ("dsl_examples", include_str!("../corpus/dsl_examples.txt")),
            ("fairness_notes", include_str!("../corpus/fairness_notes.txt")),
            ("isac_objectives", include_str!("../corpus/isac_objectives.txt")),
            ("power_constraint", include_str!("../corpus/power_constraint.txt")),
            ("reward_shaping", include_str!("../corpus/reward_shaping.txt")),
        ];
        index_store(files.iter().map(|(id, text)| Document::from_text(*id, text)).collect())
            .expect("builtin corpus ids are unique")
    }

    /// BM25 score of every document sharing at least one query term,
    /// indexed like [`KnowledgeStore::documents`].
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let n = self.documents.len() as f64;
        let mut scores = vec![0.0; self.documents.len()];
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        for term in terms {
            let Some(postings) = self.index.get(&term) else { continue };
            let df = postings.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for p in postings {
                let tf = p.tf as f64;
                let len_norm = 1.0 - BM25_B + BM25_B * self.doc_lengths[p.doc] as f64 / self.avg_length;
                scores[p.doc] += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * len_norm);
            }
        }
        scores
    }

    /// Top-`top_k` documents by score, ties broken by ascending doc id.
    /// Documents sharing no term with the query are never returned.
    pub fn retrieve(&self, query: &str, top_k: usize) -> Vec<Snippet> {
        assert!(top_k >= 1, "top_k must be at least 1");
        let scores = self.scores(query);
        let mut ranked: Vec<usize> = (0..self.documents.len()).filter(|i| scores[*i] > 0.0).collect();
        ranked.sort_by(|a, b| {
            scores[*b]
                .total_cmp(&scores[*a])
                .then_with(|| self.documents[*a].doc_id.cmp(&self.documents[*b].doc_id))
        });
        ranked
            .into_iter()
            .take(top_k)
            .map(|i| {
                let d = &self.documents[i];
                Snippet {
                    doc_id: d.doc_id.clone(),
                    score: scores[i],
                    excerpt: d.body.chars().take(EXCERPT_CHARS).collect(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("CRB, log10(crb)! rate-2"), vec!["crb", "log10", "crb", "rate", "2"]);
    }

    #[test]
    fn empty_corpus() {
        let s = KnowledgeStore::empty();
        assert!(s.retrieve("anything", 3).is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let docs = vec![Document::new("a", "t", "x"), Document::new("a", "t", "y")];
        assert!(matches!(index_store(docs), Err(StoreError::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn single_matching_doc_first() {
        let s = index_store(vec![
            Document::new("a", "alpha", "nothing relevant here"),
            Document::new("b", "beta", "the target angle crb"),
        ])
        .unwrap();
        let hits = s.retrieve("crb", 5);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "b");
    }

    #[test]
    fn builtin_corpus_indexes() {
        let s = KnowledgeStore::builtin();
        assert_eq!(s.len(), 6);
        let hits = s.retrieve("reward magnitude crb rate normalize", 3);
        assert_eq!(hits.len(), 3);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    }
}
