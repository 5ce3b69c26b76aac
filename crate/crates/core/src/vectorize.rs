//! Vocabulary, sparse count matrices and TF-IDF weighting.
//!
//! Term frequency is the raw count normalized by document length,
//! `idf(t) = ln(N / (1 + df(t)))` (which is zero or negative for terms
//! present in at least `N - 1` documents), and the weight is their product.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Builds a vocabulary keeping terms with `min_df <= df <= max_df_ratio * N`.
    /// Term indices are assigned in lexicographic order.
    pub fn build<S: AsRef<str>>(docs: &[Vec<S>], min_df: usize, max_df_ratio: f64) -> Result<Self> {
        if min_df < 1 {
            return Err(Error::invalid("min_df must be >= 1"));
        }
        if !(max_df_ratio > 0.0 && max_df_ratio <= 1.0) {
            return Err(Error::invalid("max_df_ratio must be in (0, 1]"));
        }
        if docs.is_empty() {
            return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
        }
        let mut df: HashMap<&str, usize> = HashMap::new();
        for d in docs {
            let mut seen: Vec<&str> = d.iter().map(|s| s.as_ref()).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = docs.len();
        let max_df = max_df_ratio * n as f64;
        let mut kept: Vec<(&str, usize)> = df
            .into_iter()
            .filter(|&(_, c)| c >= min_df && (c as f64) <= max_df)
            .collect();
        if kept.is_empty() {
            return Err(Error::invalid("vocabulary is empty after document-frequency pruning"));
        }
        kept.sort_unstable_by(|a, b| a.0.cmp(b.0));
        Ok(Self::from_parts(
            kept.iter().map(|(t, _)| t.to_string()).collect(),
            kept.iter().map(|(_, c)| *c).collect(),
            n,
        ))
    }

    pub fn from_parts(terms: Vec<String>, doc_freq: Vec<usize>, n_docs: usize) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            index,
            doc_freq,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, idx: usize) -> usize {
        self.doc_freq[idx]
    }

    /// Maps a document to vocabulary indices, dropping out-of-vocabulary terms.
    pub fn encode<S: AsRef<str>>(&self, doc: &[S]) -> Vec<usize> {
        doc.iter().filter_map(|t| self.index_of(t.as_ref())).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("index,term,doc_freq\n");
        for (i, t) in self.terms.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{}", crate::io::csv_field(t), self.doc_freq[i]);
        }
        let _ = writeln!(s, "# n_docs={}", self.n_docs);
        write_atomic(path, s.as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut terms = Vec::new();
        let mut dfs = Vec::new();
        let mut n_docs = None;
        let malformed = |line: usize, message: &str| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        for (i, line) in text.lines().enumerate().skip(1) {
            if let Some(n) = line.strip_prefix("# n_docs=") {
                n_docs = Some(n.trim().parse().map_err(|_| malformed(i + 1, "bad n_docs"))?);
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let idx: usize = parts.next().unwrap_or("").parse().map_err(|_| malformed(i + 1, "bad index"))?;
            let rest = parts.next().ok_or_else(|| malformed(i + 1, "missing fields"))?;
            let (term, df) = rest.rsplit_once(',').ok_or_else(|| malformed(i + 1, "missing doc_freq"))?;
            if idx != terms.len() {
                return Err(malformed(i + 1, "indices must be dense and ascending"));
            }
            terms.push(term.trim_matches('"').replace("\"\"", "\""));
            dfs.push(df.parse().map_err(|_| malformed(i + 1, "bad doc_freq"))?);
        }
        let n_docs = n_docs.ok_or_else(|| malformed(text.lines().count(), "missing n_docs trailer"))?;
        Ok(Self::from_parts(terms, dfs, n_docs))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdfMode {
    /// `ln(N / (1 + df))`.
    #[default]
    Plain,
    /// `ln((1 + N) / (1 + df)) + 1`.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Counts,
    Tfidf,
}

/// Row-major sparse matrix with strictly increasing column indices per row
/// and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDocTermMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub kind: MatrixKind,
}

impl SparseDocTermMatrix {
    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n_rows, self.n_cols));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[[i, j]] = w;
            }
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Copy with negative weights removed; returns the number clamped.
    pub fn clamped_nonnegative(&self) -> (SparseDocTermMatrix, usize) {
        let mut clamped = 0;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .copied()
                    .filter(|&(_, w)| {
                        let keep = w > 0.0;
                        clamped += usize::from(w < 0.0);
                        keep
                    })
                    .collect()
            })
            .collect();
        (
            SparseDocTermMatrix {
                rows,
                ..self.clone()
            },
            clamped,
        )
    }

    /// Transposed copy (terms become rows).
    pub fn transpose(&self) -> SparseDocTermMatrix {
        let mut rows = vec![Vec::new(); self.n_cols];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                rows[j].push((i, w));
            }
        }
        SparseDocTermMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            rows,
            kind: self.kind,
        }
    }

    /// Expands a count matrix back into token-index sequences (ascending term index).
    pub fn to_token_docs(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| r.iter().flat_map(|&(j, c)| std::iter::repeat_n(j, c.round() as usize)).collect())
            .collect()
    }

    /// Triplet export: `doc,term_index,weight`.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut s = format!("doc,term_index,weight\n# shape={}x{} kind={:?}\n", self.n_rows, self.n_cols, self.kind);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                let _ = writeln!(s, "{i},{j},{w:?}");
            }
        }
        write_atomic(path, s.as_bytes())
    }

    pub fn read_triplets(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let malformed = |line: usize, message: &str| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().skip(1);
        let (_, meta) = lines.next().ok_or_else(|| malformed(2, "missing shape line"))?;
        let meta = meta.strip_prefix("# shape=").ok_or_else(|| malformed(2, "missing shape line"))?;
        let (shape, kind) = meta.split_once(" kind=").ok_or_else(|| malformed(2, "missing kind"))?;
        let (r, c) = shape.split_once('x').ok_or_else(|| malformed(2, "bad shape"))?;
        let n_rows: usize = r.parse().map_err(|_| malformed(2, "bad shape"))?;
        let n_cols: usize = c.parse().map_err(|_| malformed(2, "bad shape"))?;
        let kind = match kind {
            "Counts" => MatrixKind::Counts,
            "Tfidf" => MatrixKind::Tfidf,
            _ => return Err(malformed(2, "bad kind")),
        };
        let mut rows = vec![Vec::new(); n_rows];
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(malformed(i + 1, "expected 3 fields"));
            }
            let d: usize = f[0].parse().map_err(|_| malformed(i + 1, "bad doc"))?;
            let t: usize = f[1].parse().map_err(|_| malformed(i + 1, "bad term index"))?;
            let w: f64 = f[2].parse().map_err(|_| malformed(i + 1, "bad weight"))?;
            if d >= n_rows || t >= n_cols {
                return Err(malformed(i + 1, "index out of range"));
            }
            rows[d].push((t, w));
        }
        Ok(SparseDocTermMatrix {
            n_rows,
            n_cols,
            rows,
            kind,
        })
    }
}

fn ensure_nonempty<S>(d: &[S]) -> Result<()> {
    if d.is_empty() {
        Err(Error::invalid("term frequency of an empty document is undefined"))
    } else {
        Ok(())
    }
}

/// Relative frequency of `t` in `d`.
pub fn tf<S: AsRef<str>>(t: &str, d: &[S]) -> Result<f64> {
    ensure_nonempty(d)?;
    let count = d.iter().filter(|x| x.as_ref() == t).count();
    Ok(count as f64 / d.len() as f64)
}

pub fn idf(t: &str, vocab: &Vocabulary) -> Result<f64> {
    let idx = vocab
        .index_of(t)
        .ok_or_else(|| Error::invalid(format!("term `{t}` is not in the vocabulary")))?;
    Ok(idf_value(vocab.n_docs(), vocab.doc_freq(idx), IdfMode::Plain))
}

pub fn idf_value(n_docs: usize, df: usize, mode: IdfMode) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    match mode {
        IdfMode::Plain => (n / (1.0 + df)).ln(),
        IdfMode::Smoothed => ((1.0 + n) / (1.0 + df)).ln() + 1.0,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfOptions {
    pub idf: IdfMode,
    pub clamp_nonnegative: bool,
}

/// Sparse TF-IDF row for one document: `(term_index, weight)` ascending,
/// zero products omitted.
pub fn tfidf_row<S: AsRef<str>>(doc: &[S], vocab: &Vocabulary, mode: IdfMode) -> Vec<(usize, f64)> {
    if doc.is_empty() {
        return Vec::new();
    }
    let len = doc.len() as f64;
    let mut idx = vocab.encode(doc);
    idx.sort_unstable();
    let mut row = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let j = idx[i];
        let mut c = 0usize;
        while i < idx.len() && idx[i] == j {
            c += 1;
            i += 1;
        }
        let w = (c as f64 / len) * idf_value(vocab.n_docs(), vocab.doc_freq(j), mode);
        if w != 0.0 {
            row.push((j, w));
        }
    }
    row
}

pub fn count_matrix<S: AsRef<str> + Sync>(docs: &[Vec<S>], vocab: &Vocabulary) -> SparseDocTermMatrix {
    let rows = docs
        .par_iter()
        .map(|d| {
            let mut idx = vocab.encode(d);
            idx.sort_unstable();
            let mut row: Vec<(usize, f64)> = Vec::new();
            for j in idx {
                match row.last_mut() {
                    Some((k, c)) if *k == j => *c += 1.0,
                    _ => row.push((j, 1.0)),
                }
            }
            row
        })
        .collect();
    SparseDocTermMatrix {
        n_rows: docs.len(),
        n_cols: vocab.len(),
        rows,
        kind: MatrixKind::Counts,
    }
}

pub fn tfidf_matrix<S: AsRef<str> + Sync>(docs: &[Vec<S>], vocab: &Vocabulary, opts: TfidfOptions) -> SparseDocTermMatrix {
    let rows = docs
        .par_iter()
        .map(|d| {
            let mut row = tfidf_row(d, vocab, opts.idf);
            if opts.clamp_nonnegative {
                row.retain(|&(_, w)| w > 0.0);
            }
            row
        })
        .collect();
    SparseDocTermMatrix {
        n_rows: docs.len(),
        n_cols: vocab.len(),
        rows,
        kind: MatrixKind::Tfidf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter().map(|d| d.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn vocabulary_pruning() {
        let d = docs(&[&["a", "b"], &["a"]]);
        let v = Vocabulary::build(&d, 1, 1.0).unwrap();
        assert_eq!(v.n_docs(), 2);
        assert_eq!(v.doc_freq(v.index_of("a").unwrap()), 2);
        assert_eq!(v.doc_freq(v.index_of("b").unwrap()), 1);
        let v = Vocabulary::build(&d, 2, 1.0).unwrap();
        assert_eq!(v.terms(), &["a".to_string()]);
    }

    #[test]
    fn vocabulary_errors() {
        let empty: Vec<Vec<String>> = vec![];
        assert!(Vocabulary::build(&empty, 1, 1.0).is_err());
        assert!(Vocabulary::build(&docs(&[&["a"]]), 2, 1.0).is_err());
        assert!(Vocabulary::build(&docs(&[&["a"]]), 0, 1.0).is_err());
        assert!(Vocabulary::build(&docs(&[&["a"]]), 1, 0.0).is_err());
    }

    #[test]
    fn tf_examples() {
        assert!((tf("flood", &["flood", "flood", "rain"]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(tf("x", &["x"]).unwrap(), 1.0);
        assert!(tf::<&str>("x", &[]).is_err());
    }

    #[test]
    fn idf_examples() {
        let v = Vocabulary::from_parts(vec!["a".into(), "b".into(), "c".into()], vec![1, 2, 9], 2);
        assert_eq!(idf("a", &v).unwrap(), 0.0);
        assert!((idf("b", &v).unwrap() - (2.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((idf_value(1000, 9, IdfMode::Plain) - 100f64.ln()).abs() < 1e-12);
        assert!(idf("zzz", &v).is_err());
    }

    #[test]
    fn tfidf_hand_values() {
        let d = docs(&[&["flood", "flood", "rain"], &["rain", "wind"]]);
        let v = Vocabulary::build(&d, 1, 1.0).unwrap();
        let m = tfidf_matrix(&d, &v, TfidfOptions::default());
        // flood: df=1, idf=ln(2/2)=0, so the entry is not stored.
        assert!(m.rows[0].iter().all(|&(j, _)| v.term(j) != "flood"));
        let rain = v.index_of("rain").unwrap();
        let w = m.rows[1].iter().find(|e| e.0 == rain).unwrap().1;
        assert!((w - 0.5 * (2.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((w + 0.202_732_554_054_082_2).abs() < 1e-12);
        let clamped = tfidf_matrix(&d, &v, TfidfOptions { clamp_nonnegative: true, ..Default::default() });
        assert_eq!(clamped.nnz(), 0);
    }

    #[test]
    fn triplets_and_vocab_roundtrip() {
        let d = docs(&[&["flood", "flood", "rain"], &["rain", "wind"], &["wind"]]);
        let v = Vocabulary::build(&d, 1, 1.0).unwrap();
        let m = count_matrix(&d, &v);
        let dir = tempfile::tempdir().unwrap();
        m.write_triplets(&dir.path().join("m.csv")).unwrap();
        v.write_csv(&dir.path().join("v.csv")).unwrap();
        assert_eq!(SparseDocTermMatrix::read_triplets(&dir.path().join("m.csv")).unwrap(), m);
        assert_eq!(Vocabulary::read_csv(&dir.path().join("v.csv")).unwrap(), v);
        assert_eq!(m.to_token_docs()[0], vec![0, 0, 1]);
    }
}
