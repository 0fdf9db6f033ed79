//! Word-embedding tables in the common whitespace-separated text format, plus
//! the vector primitives every scorer builds on.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::ops::Deref;
use std::path::Path;

use crate::linalg::{dot, norm};
use crate::token;
use crate::{Error, Result};

/// A dense vector in the word-embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct SemVector(Vec<f64>);

impl SemVector {
    pub fn new(components: Vec<f64>) -> Self {
        SemVector(components)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn normalized(&self) -> Option<SemVector> {
        crate::linalg::normalized(&self.0).map(SemVector)
    }
}

impl Deref for SemVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for SemVector {
    fn from(v: Vec<f64>) -> Self {
        SemVector(v)
    }
}

/// Vocabulary → vector map. Immutable once loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    entries: Vec<(String, Vec<f64>)>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            index: HashMap::new(),
            entries: Vec::new(),
        })
    }

    /// Inserts (or overwrites) a word vector. The token is lowercased.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::dim(format!(
                "vector for {token:?} has {} components, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite component for {token:?}")));
        }
        let key = token.to_lowercase();
        if key.is_empty() {
            return Err(Error::Format("empty token".into()));
        }
        match self.index.get(&key) {
            Some(&i) => self.entries[i].1 = vector,
            None => {
                self.index.insert(key.clone(), self.entries.len());
                self.entries.push((key, vector));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in first-insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(t, v)| (t.as_str(), v.as_slice()))
    }

    fn get(&self, token: &str) -> Option<&[f64]> {
        let key = token::normalize(token);
        self.index.get(&key).map(|&i| self.entries[i].1.as_slice())
    }

    /// Looks up a token after normalization. Out-of-vocabulary tokens yield `None`.
    pub fn lookup(&self, token: &str) -> Option<SemVector> {
        self.get(token).map(|v| SemVector(v.to_vec()))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.get(token).is_some()
    }

    /// Mean of the in-vocabulary token vectors, counting repeats.
    pub fn mean_embed<S: AsRef<str>>(&self, tokens: &[S]) -> Option<SemVector> {
        let mut sum = vec![0.0; self.dim];
        let mut count = 0usize;
        for v in tokens.iter().filter_map(|t| self.get(t.as_ref())) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            count += 1;
        }
        if count == 0 {
            return None;
        }
        let n = count as f64;
        Some(SemVector(sum.into_iter().map(|s| s / n).collect()))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        let mut saw_line = false;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if !saw_line {
                saw_line = true;
                if let Some(dim) = parse_header(&fields) {
                    table = Some(EmbeddingTable::new(dim).map_err(|e| Error::Parse {
                        line: lineno,
                        message: e.to_string(),
                    })?);
                    continue;
                }
            }
            let (word, comps) = fields.split_first().expect("non-empty");
            if comps.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("token {word:?} has no components"),
                });
            }
            let table = table
                .get_or_insert_with(|| EmbeddingTable::new(comps.len()).expect("non-zero dim"));
            if comps.len() != table.dim {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {} components, found {}", table.dim, comps.len()),
                });
            }
            let vector = comps
                .iter()
                .map(|c| match c.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(Error::Parse {
                        line: lineno,
                        message: format!("invalid number {c:?}"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            table.insert(word, vector).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        }
        table.ok_or_else(|| Error::Format("embedding file is empty".into()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    /// Text serialization with a `V D` header. Floats use shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (word, v) in &self.entries {
            out.push_str(word);
            for x in v {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_header(fields: &[&str]) -> Option<usize> {
    match fields {
        [v, d] => match (v.parse::<usize>(), d.parse::<usize>()) {
            (Ok(_), Ok(dim)) if dim > 0 => Some(dim),
            _ => None,
        },
        _ => None,
    }
}

/// Loads a table from a text file; see [`EmbeddingTable::from_reader`] for the format.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    EmbeddingTable::load(path)
}

/// `1 − cos(a, b)`, clamped to `[0, 2]`. A zero vector on either side gives 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "cosine distance between lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(cosine_distance_unchecked(a, b))
}

pub(crate) fn cosine_distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 || !denom.is_finite() {
        return 1.0;
    }
    (1.0 - dot(a, b) / denom).clamp(0.0, 2.0)
}

#[cfg(test)]
pub(crate) fn toy2() -> EmbeddingTable {
    EmbeddingTable::from_reader("cat 1.0 0.0\ndog 0.0 1.0\ncar -1.0 0.0\n".as_bytes()).unwrap()
}
