//! Nearest-neighbour example selection over program text.
//!
//! The default [`TfIdf`] embedder tokenizes on non-alphanumeric characters,
//! lowercases, and weights raw term counts by the smoothed inverse document
//! frequency
//!
//! ```text
//! idf(t) = ln((1 + N) / (1 + df(t))) + 1
//! ```
//!
//! before L2-normalizing, so cosine similarity is a plain dot product.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;

/// Retrieved examples per prompt unless configured otherwise.
pub const DEFAULT_K: usize = 2;

const INDEX_MAGIC: [u8; 4] = *b"PEIX";
const INDEX_VERSION: u32 = 1;

/// Anything that maps program text to a fixed-length, L2-normalized vector.
pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Token tf-idf embedder fitted on a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdf {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
    n_docs: usize,
}

impl TfIdf {
    pub fn fit<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<String> = tokenize(doc.as_ref()).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let mut vocab = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (token, count)) in df.into_iter().enumerate() {
            idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
            vocab.insert(token, i);
        }
        Self {
            vocab,
            idf,
            n_docs: docs.len(),
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }
}

impl Embedder for TfIdf {
    fn id(&self) -> String {
        let joined: Vec<&str> = self.vocab.keys().map(String::as_str).collect();
        let digest = sha256_hex(joined.join("\n").as_bytes());
        format!("tfidf-smooth-l2/v1/{}/{}", self.n_docs, &digest[..12])
    }

    fn dim(&self) -> usize {
        self.vocab.len()
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        for t in tokenize(text) {
            if let Some(&i) = self.vocab.get(&t) {
                v[i] += 1.0;
            }
        }
        for (x, w) in v.iter_mut().zip(&self.idf) {
            *x *= w;
        }
        l2_normalize(&mut v);
        v
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

/// Cosine similarity of two normalized vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index is empty")]
    Empty,
    #[error("vector for {id:?} has dimension {got}, expected {expected}")]
    Dimension {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("index file is not a v{INDEX_VERSION} index: {0}")]
    Format(String),
    #[error("index was built with {built}, not {given}")]
    EmbedderMismatch { built: String, given: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub vectorizer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

impl EmbeddingIndex {
    pub fn build<E: Embedder + ?Sized>(embedder: &E, items: &[(String, String)]) -> Self {
        Self {
            ids: items.iter().map(|(id, _)| id.clone()).collect(),
            vectors: items.iter().map(|(_, text)| embedder.embed(text)).collect(),
            dim: embedder.dim(),
            vectorizer_id: embedder.id(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Top `k` corpus entries by cosine similarity, descending, ties by id.
    /// Asking for more than the corpus returns the whole corpus ranked.
    pub fn query<E: Embedder + ?Sized>(
        &self,
        embedder: &E,
        query: &str,
        k: usize,
    ) -> Result<Vec<Hit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if self.is_empty() {
            return Err(IndexError::Empty);
        }
        if embedder.id() != self.vectorizer_id {
            return Err(IndexError::EmbedderMismatch {
                built: self.vectorizer_id.clone(),
                given: embedder.id(),
            });
        }
        let q = embedder.embed(query);
        let mut hits: Vec<Hit> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| Hit {
                id: id.clone(),
                score: cosine(&q, v),
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k);
        Ok(hits)
    }

    /// Writes `<stem>.bin` (header + little-endian f64 rows) and a JSON
    /// sidecar carrying the ids and the embedder state.
    pub fn save<S: Serialize>(&self, bin: &Path, sidecar: &Path, embedder_state: &S) -> Result<(), IndexError> {
        let mut bytes = Vec::with_capacity(20 + self.len() * self.dim * 8);
        bytes.extend_from_slice(&INDEX_MAGIC);
        bytes.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (id, row) in self.ids.iter().zip(&self.vectors) {
            if row.len() != self.dim {
                return Err(IndexError::Dimension {
                    id: id.clone(),
                    got: row.len(),
                    expected: self.dim,
                });
            }
            for x in row {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        fs::write(bin, bytes)?;
        let meta = Sidecar {
            version: INDEX_VERSION,
            vectorizer_id: self.vectorizer_id.clone(),
            pair_ids: self.ids.clone(),
            vectorizer: serde_json::to_value(embedder_state)?,
        };
        fs::write(sidecar, serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    /// Loads an index and the raw embedder state from its sidecar.
    pub fn load(bin: &Path, sidecar: &Path) -> Result<(Self, serde_json::Value), IndexError> {
        let meta: Sidecar = serde_json::from_slice(&fs::read(sidecar)?)?;
        let mut file = io::BufReader::new(fs::File::open(bin)?);
        let mut header = [0u8; 20];
        file.read_exact(&mut header)
            .map_err(|_| IndexError::Format("truncated header".into()))?;
        if header[..4] != INDEX_MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
        if version != INDEX_VERSION || meta.version != INDEX_VERSION {
            return Err(IndexError::Format(format!("version {version}")));
        }
        let dim = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
        let n = u64::from_le_bytes(header[12..20].try_into().expect("8 bytes")) as usize;
        if n != meta.pair_ids.len() {
            return Err(IndexError::Format(format!(
                "{n} rows but {} ids in sidecar",
                meta.pair_ids.len()
            )));
        }
        let mut vectors = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            let mut row = Vec::with_capacity(dim);
            for _ in 0..dim {
                file.read_exact(&mut buf)
                    .map_err(|_| IndexError::Format("truncated rows".into()))?;
                row.push(f64::from_le_bytes(buf));
            }
            vectors.push(row);
        }
        if file.read(&mut buf)? != 0 {
            return Err(IndexError::Format("trailing bytes".into()));
        }
        Ok((
            Self {
                ids: meta.pair_ids,
                vectors,
                dim,
                vectorizer_id: meta.vectorizer_id,
            },
            meta.vectorizer,
        ))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    vectorizer_id: String,
    pair_ids: Vec<String>,
    vectorizer: serde_json::Value,
}
