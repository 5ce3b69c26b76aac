//! Tweet ingestion and text normalization.
//!
//! Raw tweets come in as CSV (header row required) or JSONL, are cleaned of
//! URLs, emoji ranges and Twitter noise, then split into normalized terms
//! (lemma table, stopword filter, Snowball stemmer, length filter).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use once_cell_regex::hex_escape;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const DEFAULT_DOMAIN_STOPWORDS: &str = include_str!("../data/stopwords_domain.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
    pub raw_text: String,
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
}

impl TweetRecord {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        TweetRecord {
            id: id.into(),
            timestamp: None,
            raw_text: raw_text.into(),
            tokens: Vec::new(),
            emotion: None,
        }
    }
}

/// Inclusive codepoint interval removed by [`clean_text`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodepointRange {
    pub lo: u32,
    pub hi: u32,
}

impl CodepointRange {
    pub const fn new(lo: u32, hi: u32) -> Self {
        CodepointRange { lo, hi }
    }

    fn contains(&self, c: char) -> bool {
        (self.lo..=self.hi).contains(&(c as u32))
    }
}

/// Emoji blocks, dingbats, variation selectors, joiners, private-use icons
/// and tag characters.
pub const DEFAULT_STRIP_RANGES: &[CodepointRange] = &[
    CodepointRange::new(0x200D, 0x200D),
    CodepointRange::new(0x2300, 0x23FF),
    CodepointRange::new(0x2600, 0x27BF),
    CodepointRange::new(0x2B00, 0x2BFF),
    CodepointRange::new(0x3030, 0x3030),
    CodepointRange::new(0x303D, 0x303D),
    CodepointRange::new(0x3297, 0x3299),
    CodepointRange::new(0xE000, 0xF8FF),
    CodepointRange::new(0xFE00, 0xFE0F),
    CodepointRange::new(0xFFFD, 0xFFFD),
    CodepointRange::new(0x1F000, 0x1FAFF),
    CodepointRange::new(0xE0000, 0xE007F),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub strip_urls: bool,
    pub strip_unicode_ranges: Vec<CodepointRange>,
    /// Drop `@mention` tokens.
    pub strip_mentions: bool,
    /// Drop literal `\xNN` byte escapes left over from badly decoded exports.
    pub strip_hex_escapes: bool,
    pub lowercase: bool,
    pub min_token_len: usize,
    pub lemma_table: BTreeMap<String, String>,
    pub stemmer_enabled: bool,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        let lemma_table = [
            ("am", "be"),
            ("is", "be"),
            ("are", "be"),
            ("was", "be"),
            ("were", "be"),
            ("being", "be"),
            ("been", "be"),
            ("has", "have"),
            ("had", "have"),
            ("having", "have"),
            ("does", "do"),
            ("did", "do"),
            ("done", "do"),
            ("went", "go"),
            ("gone", "go"),
            ("made", "make"),
            ("took", "take"),
            ("taken", "take"),
            ("saw", "see"),
            ("seen", "see"),
            ("gave", "give"),
            ("given", "give"),
            ("came", "come"),
            ("left", "leave"),
            ("lost", "lose"),
            ("felt", "feel"),
            ("kept", "keep"),
            ("brought", "bring"),
            ("thought", "think"),
            ("children", "child"),
            ("people", "person"),
            ("men", "man"),
            ("women", "woman"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        CleaningConfig {
            strip_urls: true,
            strip_unicode_ranges: DEFAULT_STRIP_RANGES.to_vec(),
            strip_mentions: true,
            strip_hex_escapes: true,
            lowercase: true,
            min_token_len: 2,
            lemma_table,
            stemmer_enabled: true,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.min_token_len < 1 {
            problems.push("cleaning.min_token_len must be >= 1".to_string());
        }
        for r in &self.strip_unicode_ranges {
            if r.lo > r.hi {
                problems.push(format!(
                    "cleaning.strip_unicode_ranges: interval {:#x}..{:#x} has lo > hi",
                    r.lo, r.hi
                ));
            }
        }
        problems
    }
}

/// Stopword lookup. Entries are normalized (lowercase, apostrophes removed)
/// the same way tokens are.
#[derive(Debug, Clone, Default)]
pub struct StopwordSet {
    base: HashSet<String>,
    domain: HashSet<String>,
}

fn normalize_word(w: &str) -> String {
    w.trim().to_lowercase().replace(['\'', '\u{2019}'], "")
}

fn parse_word_list(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(normalize_word)
        .filter(|w| !w.is_empty())
}

impl StopwordSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Standard English list plus the bundled disaster/location list.
    pub fn english_with_domain() -> Self {
        let mut s = Self::english();
        s.domain.extend(parse_word_list(DEFAULT_DOMAIN_STOPWORDS));
        s
    }

    /// The bundled disaster/location words on their own.
    pub fn bundled_domain_words() -> Vec<String> {
        parse_word_list(DEFAULT_DOMAIN_STOPWORDS).collect()
    }

    pub fn english() -> Self {
        StopwordSet {
            base: parse_word_list(DEFAULT_STOPWORDS).collect(),
            domain: HashSet::new(),
        }
    }

    pub fn from_words<I, S>(base: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordSet {
            base: base
                .into_iter()
                .map(|w| normalize_word(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect(),
            domain: HashSet::new(),
        }
    }

    pub fn add_domain<I, S>(&mut self, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.domain.extend(
            words
                .into_iter()
                .map(|w| normalize_word(w.as_ref()))
                .filter(|w| !w.is_empty()),
        );
    }

    /// Reads a UTF-8 word list (one term per line, `#` comments) into the
    /// domain set.
    pub fn load_domain_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.domain.extend(parse_word_list(&text));
        Ok(())
    }

    pub fn load_base_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.base.extend(parse_word_list(&text));
        Ok(())
    }

    pub fn contains(&self, word: &str) -> bool {
        let w = normalize_word(word);
        self.base.contains(&w) || self.domain.contains(&w)
    }

    pub fn len(&self) -> usize {
        self.base.union(&self.domain).count()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty() && self.domain.is_empty()
    }
}

mod once_cell_regex {
    use std::sync::OnceLock;

    use regex::Regex;

    pub fn hex_escape() -> &'static Regex {
        static RE: OnceLock<Regex> = OnceLock::new();
        RE.get_or_init(|| Regex::new(r"\\x[0-9a-fA-F]{2}").unwrap())
    }
}

/// Cleans one raw tweet. Total and idempotent.
///
/// Order: case fold, codepoint stripping, hex-escape stripping, then
/// whitespace tokens containing "http" (any case) and `@mentions` are
/// dropped. Whitespace is collapsed to single spaces.
pub fn clean_text(raw: &str, cfg: &CleaningConfig) -> String {
    let mut text = if cfg.lowercase {
        raw.to_lowercase()
    } else {
        raw.to_string()
    };
    if !cfg.strip_unicode_ranges.is_empty() {
        text.retain(|c| !cfg.strip_unicode_ranges.iter().any(|r| r.contains(c)));
    }
    if cfg.strip_hex_escapes {
        loop {
            let next = hex_escape().replace_all(&text, "").into_owned();
            if next == text {
                break;
            }
            text = next;
        }
    }
    text.split_whitespace()
        .filter(|tok| !(cfg.strip_urls && tok.to_lowercase().contains("http")))
        .filter(|tok| !(cfg.strip_mentions && tok.starts_with('@')))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A normalized term together with the surface word it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub stem: String,
    pub surface: String,
}

/// Splits and normalizes cleaned text into terms, keeping surface forms.
pub fn tokenize_terms(clean: &str, cfg: &CleaningConfig, stops: &StopwordSet) -> Vec<Term> {
    let stemmer = cfg.stemmer_enabled.then(|| Stemmer::create(Algorithm::English));
    let mut out = Vec::new();
    for piece in clean.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}')) {
        let mut word = piece.trim_matches(|c| c == '\'' || c == '\u{2019}').to_string();
        if cfg.lowercase {
            word = word.to_lowercase();
        }
        for suffix in ["'s", "\u{2019}s"] {
            if let Some(stripped) = word.strip_suffix(suffix) {
                word = stripped.to_string();
            }
        }
        word.retain(|c| c != '\'' && c != '\u{2019}');
        if word.is_empty() || word.contains("http") {
            continue;
        }
        let lemma = cfg.lemma_table.get(&word).cloned().unwrap_or(word);
        if stops.contains(&lemma) {
            continue;
        }
        let stem = match &stemmer {
            Some(s) => s.stem(&lemma).into_owned(),
            None => lemma.clone(),
        };
        if stem.chars().count() < cfg.min_token_len || stops.contains(&stem) {
            continue;
        }
        out.push(Term {
            stem,
            surface: lemma,
        });
    }
    out
}

/// Splits cleaned text into normalized terms: punctuation split, lemma
/// table, stopwords, stemmer, then the minimum-length filter.
pub fn tokenize_and_normalize(clean: &str, cfg: &CleaningConfig, stops: &StopwordSet) -> Vec<String> {
    tokenize_terms(clean, cfg, stops)
        .into_iter()
        .map(|t| t.stem)
        .collect()
}

/// Cleans and tokenizes every record in place.
pub fn normalize_records(records: &mut [TweetRecord], cfg: &CleaningConfig, stops: &StopwordSet) {
    use rayon::prelude::*;
    records.par_iter_mut().for_each(|r| {
        let clean = clean_text(&r.raw_text, cfg);
        r.tokens = tokenize_and_normalize(&clean, cfg, stops);
    });
}

/// Most frequent surface word per stem, ties broken lexicographically.
pub fn surface_forms(records: &[TweetRecord], cfg: &CleaningConfig, stops: &StopwordSet) -> BTreeMap<String, String> {
    let mut counts: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    for r in records {
        for t in tokenize_terms(&clean_text(&r.raw_text, cfg), cfg, stops) {
            *counts.entry(t.stem).or_default().entry(t.surface).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(stem, forms)| {
            let best = forms
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(s, _)| s.clone())
                .unwrap_or_else(|| stem.clone());
            (stem, best)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(InputFormat::Csv),
            "jsonl" | "ndjson" => Some(InputFormat::Jsonl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub text_col: String,
    pub id_col: Option<String>,
    pub time_col: Option<String>,
    pub emotion_col: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            text_col: "text".into(),
            id_col: Some("id".into()),
            time_col: None,
            emotion_col: None,
        }
    }
}

/// A row that was not turned into a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<TweetRecord>,
    pub rows_in: usize,
    pub skipped: Vec<SkippedRow>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Strictness {
    #[default]
    Lenient,
    Strict,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

struct RowFields {
    id: Option<String>,
    text: String,
    time: Option<String>,
    emotion: Option<String>,
}

/// Loads a CSV or JSONL tweet file.
///
/// Empty-text rows are skipped and itemized. Malformed rows are skipped
/// under [`Strictness::Lenient`] and fatal under [`Strictness::Strict`].
/// Rows without an id column get their 1-based data row number as id.
pub fn load_corpus(path: &Path, format: InputFormat, columns: &ColumnMap, strictness: Strictness) -> Result<LoadReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = match format {
        InputFormat::Csv => read_csv_rows(path, &text, columns)?,
        InputFormat::Jsonl => read_jsonl_rows(path, &text, columns),
    };

    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (n, (line, row)) in rows.into_iter().enumerate() {
        report.rows_in += 1;
        let row = match row {
            Ok(r) => r,
            Err(message) => {
                if strictness == Strictness::Strict {
                    return Err(Error::Malformed {
                        path: path.to_path_buf(),
                        line,
                        message,
                    });
                }
                log::warn!("{}:{line}: skipping malformed row: {message}", path.display());
                report.skipped.push(SkippedRow { line, reason: message });
                continue;
            }
        };
        if row.text.trim().is_empty() {
            report.skipped.push(SkippedRow {
                line,
                reason: "empty text".into(),
            });
            continue;
        }
        let id = row.id.unwrap_or_else(|| (n + 1).to_string());
        if !seen.insert(id.clone()) {
            let message = format!("duplicate id `{id}`");
            if strictness == Strictness::Strict {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message,
                });
            }
            report.skipped.push(SkippedRow { line, reason: message });
            continue;
        }
        let emotion = match row.emotion.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => match s.parse::<EmotionLabel>() {
                Ok(l) => Some(l),
                Err(_) => {
                    let message = format!("unknown emotion label `{s}`");
                    if strictness == Strictness::Strict {
                        return Err(Error::Malformed {
                            path: path.to_path_buf(),
                            line,
                            message,
                        });
                    }
                    report.skipped.push(SkippedRow { line, reason: message });
                    continue;
                }
            },
        };
        report.records.push(TweetRecord {
            id,
            timestamp: row.time.as_deref().and_then(parse_timestamp),
            raw_text: row.text,
            tokens: Vec::new(),
            emotion,
        });
    }
    Ok(report)
}

type Row = (usize, std::result::Result<RowFields, String>);

fn read_csv_rows(path: &Path, text: &str, columns: &ColumnMap) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |column: &str| Error::MissingColumn {
        path: path.to_path_buf(),
        column: column.to_string(),
    };
    let text_idx = find(&columns.text_col).ok_or_else(|| missing(&columns.text_col))?;
    let optional = |col: &Option<String>| -> Result<Option<usize>> {
        match col {
            None => Ok(None),
            Some(c) => find(c).map(Some).ok_or_else(|| missing(c)),
        }
    };
    let id_idx = optional(&columns.id_col)?;
    let time_idx = optional(&columns.time_col)?;
    let emotion_idx = optional(&columns.emotion_col)?;

    let mut rows = Vec::new();
    for result in reader.records() {
        match result {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                let get = |i: usize| rec.get(i).map(str::to_string);
                let row = if rec.len() != headers.len() {
                    Err(format!("expected {} fields, found {}", headers.len(), rec.len()))
                } else {
                    Ok(RowFields {
                        id: id_idx.and_then(get).map(|s| s.trim().to_string()),
                        text: get(text_idx).unwrap_or_default(),
                        time: time_idx.and_then(get),
                        emotion: emotion_idx.and_then(get),
                    })
                };
                rows.push((line, row));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                rows.push((line, Err(e.to_string())));
            }
        }
    }
    Ok(rows)
}

fn json_field_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Null => None,
        other => Some(other.to_string()),
    }
}

fn read_jsonl_rows(_path: &Path, text: &str, columns: &ColumnMap) -> Vec<Row> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let row = serde_json::from_str::<serde_json::Value>(line)
            .map_err(|e| e.to_string())
            .and_then(|v| {
                let obj = v.as_object().ok_or_else(|| "line is not a JSON object".to_string())?;
                let text = obj
                    .get(&columns.text_col)
                    .ok_or_else(|| format!("missing field `{}`", columns.text_col))?;
                let field = |c: &Option<String>| c.as_ref().and_then(|c| obj.get(c)).and_then(json_field_string);
                Ok(RowFields {
                    id: field(&columns.id_col),
                    text: json_field_string(text).unwrap_or_default(),
                    time: field(&columns.time_col),
                    emotion: field(&columns.emotion_col),
                })
            });
        rows.push((lineno, row));
    }
    rows
}

/// Writes records as JSONL, one object per line.
pub fn write_records(path: &Path, records: &[TweetRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?);
        out.push('\n');
    }
    crate::io::write_atomic(path, out.as_bytes())
}

pub fn read_records(path: &Path) -> Result<Vec<TweetRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                path: PathBuf::from(path),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn no_stem() -> CleaningConfig {
        CleaningConfig::default()
    }

    #[test]
    fn clean_text_strips_url_and_emoji() {
        let cfg = CleaningConfig::default();
        assert_eq!(clean_text("Stay safe http://t.co/abc \u{1F64F}", &cfg), "stay safe");
        assert_eq!(clean_text("", &cfg), "");
        assert_eq!(clean_text("FLOOD", &cfg), "flood");
    }

    #[test]
    fn clean_text_drops_hex_escapes_and_mentions() {
        let cfg = CleaningConfig::default();
        assert_eq!(clean_text("@khou water rising\\xe2\\x80\\xa6", &cfg), "water rising");
        // Removing `\x41` exposes a new escape `\xbc`; stripping runs to a fixpoint.
        assert_eq!(clean_text("a \\x\\x41bcd", &cfg), "a d");
    }

    #[test]
    fn tokenize_hand_trace() {
        let mut cfg = no_stem();
        cfg.lemma_table = [("being", "be"), ("been", "be")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let stops = StopwordSet::from_words(["a", "lot", "be"]);
        assert_eq!(tokenize_and_normalize("being flooded a lot", &cfg, &stops), vec!["flood"]);
    }

    #[test]
    fn tokenize_all_stopwords_and_single_chars() {
        let cfg = CleaningConfig::default();
        assert!(tokenize_and_normalize("the a an", &cfg, &StopwordSet::english()).is_empty());
        assert_eq!(tokenize_and_normalize("x flood", &cfg, &StopwordSet::empty()), vec!["flood"]);
    }

    #[test]
    fn tokenize_possessives_and_hashtags() {
        let cfg = CleaningConfig::default();
        let toks = tokenize_and_normalize("#houstonstrong harvey's don't rescuers", &cfg, &StopwordSet::english_with_domain());
        assert_eq!(toks, vec!["rescuer"]);
    }

    #[test]
    fn stopword_lookup_is_case_insensitive() {
        let stops = StopwordSet::from_words(["Houston"]);
        assert!(stops.contains("HOUSTON"));
        assert!(!stops.contains(""));
    }

    #[test]
    fn config_validation() {
        let mut cfg = CleaningConfig {
            min_token_len: 0,
            ..CleaningConfig::default()
        };
        cfg.strip_unicode_ranges.push(CodepointRange::new(10, 5));
        assert_eq!(cfg.validate().len(), 2);
    }

    #[test]
    fn csv_skips_empty_text() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,text\n1,flood here\n2,\n3,rain again").unwrap();
        let rep = load_corpus(f.path(), InputFormat::Csv, &ColumnMap::default(), Strictness::Lenient).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert_eq!(rep.skipped.len(), 1);
        assert_eq!(rep.skipped[0].line, 3);
        assert_eq!(rep.rows_in, rep.records.len() + rep.skipped.len());
    }

    #[test]
    fn csv_missing_text_column() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "id,body\n1,x").unwrap();
        let err = load_corpus(f.path(), InputFormat::Csv, &ColumnMap::default(), Strictness::Lenient).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { .. }));
    }

    #[test]
    fn jsonl_preserves_raw_text() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"1","text":"Flood in Houston http://t.co/x"}}"#).unwrap();
        let rep = load_corpus(f.path(), InputFormat::Jsonl, &ColumnMap::default(), Strictness::Lenient).unwrap();
        assert_eq!(rep.records[0].raw_text, "Flood in Houston http://t.co/x");
        assert_eq!(rep.records[0].id, "1");
    }

    #[test]
    fn jsonl_malformed_line_lenient_vs_strict() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"id\":\"1\",\"text\":\"ok\"}}\n{{broken\n{{\"id\":\"3\",\"text\":\"fine\"}}").unwrap();
        let rep = load_corpus(f.path(), InputFormat::Jsonl, &ColumnMap::default(), Strictness::Lenient).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert_eq!(rep.skipped[0].line, 2);
        let err = load_corpus(f.path(), InputFormat::Jsonl, &ColumnMap::default(), Strictness::Strict).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    #[test]
    fn unreadable_file() {
        let err = load_corpus(Path::new("/nonexistent/x.csv"), InputFormat::Csv, &ColumnMap::default(), Strictness::Lenient).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
