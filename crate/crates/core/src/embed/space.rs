use std::fs;
use std::path::Path;

use super::train::EmbeddingTable;
use super::vocab::{EntityKind, Vocabulary};
use super::EmbedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

/// Trained vectors with their vocabulary, answering distance queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    vocab: Vocabulary,
    table: EmbeddingTable,
    norms: Vec<f64>,
    metric: Metric,
}

impl EmbeddingSpace {
    pub fn new(vocab: Vocabulary, table: EmbeddingTable) -> Result<Self, EmbedError> {
        if vocab.len() != table.rows() {
            return Err(EmbedError::Mismatch {
                vectors: table.rows(),
                metadata: vocab.len(),
            });
        }
        let norms = (0..table.rows())
            .map(|i| table.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Ok(EmbeddingSpace {
            vocab,
            table,
            norms,
            metric: Metric::Cosine,
        })
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vector(&self, name: &str) -> Option<&[f64]> {
        self.vocab.index_of(name).map(|i| self.table.row(i))
    }

    fn index(&self, name: &str) -> Result<usize, EmbedError> {
        self.vocab
            .index_of(name)
            .ok_or_else(|| EmbedError::UnknownEntity(name.to_string()))
    }

    fn distance_by_index(&self, a: usize, b: usize) -> Result<f64, EmbedError> {
        let (va, vb) = (self.table.row(a), self.table.row(b));
        match self.metric {
            Metric::Cosine => {
                for i in [a, b] {
                    if self.norms[i] == 0.0 {
                        return Err(EmbedError::ZeroNorm(self.vocab.name(i).to_string()));
                    }
                }
                let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                Ok((1.0 - dot / (self.norms[a] * self.norms[b])).clamp(0.0, 2.0))
            }
            Metric::Euclidean => Ok(va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()),
        }
    }

    /// Distance between two named entities under the space's metric.
    pub fn distance(&self, a: &str, b: &str) -> Result<f64, EmbedError> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        self.distance_by_index(ia, ib)
    }

    /// Every action within `radius` of `state`, nearest first, ties by name.
    /// Actions whose vectors are all zero have no cosine distance and are
    /// never returned.
    pub fn find_closest_actions(&self, state: &str, radius: f64) -> Result<Vec<(String, f64)>, EmbedError> {
        let s = self
            .vocab
            .index_of(state)
            .ok_or_else(|| EmbedError::UnknownSituation(state.to_string()))?;
        if self.metric == Metric::Cosine && self.norms[s] == 0.0 {
            return Err(EmbedError::ZeroNorm(state.to_string()));
        }
        let mut out = Vec::new();
        for i in 0..self.vocab.len() {
            if self.vocab.kind(i) != EntityKind::Action {
                continue;
            }
            if self.metric == Metric::Cosine && self.norms[i] == 0.0 {
                continue;
            }
            let d = self.distance_by_index(s, i)?;
            if d <= radius {
                out.push((self.vocab.name(i).to_string(), d));
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }
}

/// Reads a vectors/metadata file pair written by `export_tsv`.
pub fn load_tsv(vectors: &Path, metadata: &Path) -> Result<EmbeddingSpace, EmbedError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| EmbedError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    parse_tsv(&read(vectors)?, &read(metadata)?)
}

pub fn parse_tsv(vectors: &str, metadata: &str) -> Result<EmbeddingSpace, EmbedError> {
    let mut rows = Vec::new();
    for (no, line) in vectors.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split('\t')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| EmbedError::Format {
                file: "vectors",
                line: no + 1,
                message: "non-numeric field".into(),
            })?;
        if let Some(first) = rows.first() {
            if Vec::len(first) != row.len() {
                return Err(EmbedError::Format {
                    file: "vectors",
                    line: no + 1,
                    message: format!("expected {} fields, found {}", Vec::len(first), row.len()),
                });
            }
        }
        rows.push(row);
    }

    let mut vocab = Vocabulary::new();
    let mut lines = metadata.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    if let Some((no, header)) = lines.next() {
        if header.trim_end() != "name\tindex\tconcept" {
            return Err(EmbedError::Format {
                file: "metadata",
                line: no + 1,
                message: "expected header `name\\tindex\\tconcept`".into(),
            });
        }
    }
    for (no, line) in lines {
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        let err = |message: String| EmbedError::Format {
            file: "metadata",
            line: no + 1,
            message,
        };
        let [name, index, concept] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let kind: EntityKind = concept.parse().map_err(err)?;
        let expected = vocab.len();
        if index.parse::<usize>().ok() != Some(expected) {
            return Err(err(format!("expected index {expected}, found `{index}`")));
        }
        if vocab.index_of(name).is_some() {
            return Err(err(format!("duplicate entity `{name}`")));
        }
        vocab.insert(name, kind);
    }
    if rows.len() != vocab.len() {
        return Err(EmbedError::Mismatch {
            vectors: rows.len(),
            metadata: vocab.len(),
        });
    }
    EmbeddingSpace::new(vocab, EmbeddingTable::from_rows(rows)?)
}
