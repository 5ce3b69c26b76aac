//! Three-way sentiment labels, the lexicon fallback classifier and
//! per-sentiment summaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TweetRecord;
use crate::error::{Error, Result};
use crate::vectorize::{self, IdfMode, Vocabulary};

const DEFAULT_LEXICON: &str = include_str!("../data/default_lexicon.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Positive,
    Negative,
    Neutral,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 3] = [EmotionLabel::Positive, EmotionLabel::Negative, EmotionLabel::Neutral];

    pub fn as_str(&self) -> &'static str {
        match self {
            EmotionLabel::Positive => "positive",
            EmotionLabel::Negative => "negative",
            EmotionLabel::Neutral => "neutral",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(EmotionLabel::Positive),
            "negative" => Ok(EmotionLabel::Negative),
            "neutral" => Ok(EmotionLabel::Neutral),
            other => Err(Error::invalid(format!("unknown emotion label `{other}`"))),
        }
    }
}

/// Term valences with a decision threshold.
#[derive(Debug, Clone)]
pub struct ValenceLexicon {
    entries: HashMap<String, f64>,
    threshold: f64,
}

impl ValenceLexicon {
    pub fn new(entries: HashMap<String, f64>, threshold: f64) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::invalid("lexicon threshold must be >= 0"));
        }
        Ok(ValenceLexicon { entries, threshold })
    }

    /// The small bundled lexicon, threshold 0.5.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_LEXICON, Path::new("<bundled lexicon>"), 0.5).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path, threshold: f64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, threshold)
    }

    fn parse(text: &str, path: &Path, threshold: f64) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let malformed = |message: String| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message,
            };
            let term = rec.get(0).unwrap_or("").trim().to_lowercase();
            let score: f64 = rec
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| malformed("score is not a number".into()))?;
            if term.is_empty() {
                return Err(malformed("empty term".into()));
            }
            if entries.insert(term.clone(), score).is_some() {
                return Err(malformed(format!("duplicate term `{term}`")));
            }
        }
        Self::new(entries, threshold)
    }

    /// Re-keys entries through a normalizer (e.g. the tokenizer's stemmer).
    /// Entries that collide after normalization are averaged.
    pub fn normalized_with(&self, normalize: impl Fn(&str) -> Option<String>) -> Self {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut keys: Vec<_> = self.entries.iter().collect();
        keys.sort_by(|a, b| a.0.cmp(b.0));
        for (term, score) in keys {
            if let Some(k) = normalize(term) {
                let e = acc.entry(k).or_insert((0.0, 0));
                e.0 += score;
                e.1 += 1;
            }
        }
        ValenceLexicon {
            entries: acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect(),
            threshold: self.threshold,
        }
    }

    pub fn with_threshold(self, threshold: f64) -> Result<Self> {
        Self::new(self.entries, threshold)
    }

    pub fn valence(&self, term: &str) -> f64 {
        self.entries.get(term).copied().unwrap_or(0.0)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sums token valences: above `τ` is positive, below `-τ` negative.
pub fn lexicon_classify(record: &TweetRecord, lex: &ValenceLexicon) -> EmotionLabel {
    classify_tokens(&record.tokens, lex)
}

pub fn classify_tokens<S: AsRef<str>>(tokens: &[S], lex: &ValenceLexicon) -> EmotionLabel {
    // Sort the addends so the sum is independent of token order.
    let mut vals: Vec<f64> = tokens.iter().map(|t| lex.valence(t.as_ref())).collect();
    vals.sort_by(f64::total_cmp);
    let score: f64 = vals.iter().sum();
    if score > lex.threshold {
        EmotionLabel::Positive
    } else if score < -lex.threshold {
        EmotionLabel::Negative
    } else {
        EmotionLabel::Neutral
    }
}

/// Reads an `id,emotion` label file.
pub fn read_label_file(path: &Path) -> Result<BTreeMap<String, EmotionLabel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = rec.get(0).unwrap_or("").trim().to_string();
        let label: EmotionLabel = rec.get(1).unwrap_or("").parse().map_err(|e: Error| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if labels.insert(id.clone(), label).is_some() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("id `{id}` appears more than once"),
            });
        }
    }
    Ok(labels)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelJoin {
    pub labeled: usize,
    /// Record ids with no entry in the label file.
    pub unlabeled: Vec<String>,
    /// Label-file ids that matched no record.
    pub unmatched_labels: Vec<String>,
}

/// Applies an external `id,emotion` label file to the records.
pub fn ingest_external_labels(records: &mut [TweetRecord], labels: &Path) -> Result<LabelJoin> {
    let map = read_label_file(labels)?;
    Ok(apply_labels(records, &map))
}

pub fn apply_labels(records: &mut [TweetRecord], map: &BTreeMap<String, EmotionLabel>) -> LabelJoin {
    if map.is_empty() {
        log::warn!("label file is empty; no records labeled");
    }
    let mut join = LabelJoin::default();
    let mut used = HashSet::new();
    for r in records.iter_mut() {
        match map.get(&r.id) {
            Some(l) => {
                r.emotion = Some(*l);
                used.insert(r.id.as_str());
                join.labeled += 1;
            }
            None => join.unlabeled.push(r.id.clone()),
        }
    }
    join.unmatched_labels = map.keys().filter(|k| !used.contains(k.as_str())).cloned().collect();
    join
}

/// Counts per label. Every label is present in the map, possibly at zero.
pub fn emotion_distribution(records: &[TweetRecord]) -> Result<BTreeMap<EmotionLabel, usize>> {
    let mut counts: BTreeMap<EmotionLabel, usize> = EmotionLabel::ALL.iter().map(|l| (*l, 0)).collect();
    for r in records {
        let l = r
            .emotion
            .ok_or_else(|| Error::invalid(format!("record `{}` has no emotion label", r.id)))?;
        *counts.get_mut(&l).unwrap() += 1;
    }
    Ok(counts)
}

/// Splits labeled records into the three sentiment partitions.
pub fn partition(records: &[TweetRecord]) -> BTreeMap<EmotionLabel, Vec<TweetRecord>> {
    let mut parts: BTreeMap<EmotionLabel, Vec<TweetRecord>> = EmotionLabel::ALL.iter().map(|l| (*l, Vec::new())).collect();
    for r in records {
        if let Some(l) = r.emotion {
            parts.get_mut(&l).unwrap().push(r.clone());
        }
    }
    parts
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WordRanking {
    #[default]
    Frequency,
    MeanTfidf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedTerm {
    pub term: String,
    pub score: f64,
}

/// The `n` highest-ranked terms per label; ties broken lexicographically.
pub fn top_words_by_sentiment(
    records: &[TweetRecord],
    n: usize,
    ranking: WordRanking,
) -> Result<BTreeMap<EmotionLabel, Vec<RankedTerm>>> {
    if n == 0 {
        return Err(Error::invalid("top-word count must be >= 1"));
    }
    let mut out = BTreeMap::new();
    let tfidf_ctx = match ranking {
        WordRanking::MeanTfidf => {
            let docs: Vec<Vec<String>> = records.iter().filter(|r| !r.tokens.is_empty()).map(|r| r.tokens.clone()).collect();
            if docs.is_empty() {
                None
            } else {
                let vocab = Vocabulary::build(&docs, 1, 1.0)?;
                Some(vocab)
            }
        }
        WordRanking::Frequency => None,
    };
    for label in EmotionLabel::ALL {
        let members: Vec<&TweetRecord> = records.iter().filter(|r| r.emotion == Some(label)).collect();
        let mut scores: HashMap<&str, f64> = HashMap::new();
        match (&ranking, &tfidf_ctx) {
            (WordRanking::MeanTfidf, Some(vocab)) => {
                let m = members.len().max(1) as f64;
                for r in members.iter().filter(|r| !r.tokens.is_empty()) {
                    for (idx, w) in vectorize::tfidf_row(&r.tokens, vocab, IdfMode::Plain) {
                        *scores.entry(vocab.term(idx)).or_default() += w / m;
                    }
                }
            }
            _ => {
                for r in &members {
                    for t in &r.tokens {
                        *scores.entry(t.as_str()).or_default() += 1.0;
                    }
                }
            }
        }
        let mut ranked: Vec<RankedTerm> = scores
            .into_iter()
            .map(|(t, s)| RankedTerm {
                term: t.to_string(),
                score: s,
            })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
        ranked.truncate(n);
        out.insert(label, ranked);
    }
    Ok(out)
}
