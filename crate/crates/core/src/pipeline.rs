//! Stage orchestration: configuration, on-disk artifacts per stage, a run
//! manifest with content digests, and the final report.
//!
//! Layout under the output directory:
//!
//! ```text
//! clean/       records.jsonl skipped.csv surface_forms.csv
//! emotions/    records.jsonl distribution.csv top_words.csv label_sources.csv
//! <sentiment>/vectorize/  vocab.csv counts.csv tfidf.csv docs.csv dropped.csv
//! <sentiment>/lda/        coherence.csv selection.csv topics.csv doc_topics.csv
//! <sentiment>/graph/      embeddings.csv edges.csv info.csv
//! <sentiment>/gnn/        model.csv refined.csv loss.csv
//! <sentiment>/cluster/    silhouette.csv selection.csv assignments.csv
//! <sentiment>/compare/    comparison.csv comparison.md
//! <sentiment>/name/       events.csv events.md diagnostics.csv
//! report/      report.md plus copies of the tables it shows
//! manifest.json
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster;
use crate::corpus::{self, CleaningConfig, ColumnMap, InputFormat, StopwordSet, Strictness, TweetRecord};
use crate::emotion::{self, EmotionLabel, ValenceLexicon, WordRanking};
use crate::error::{Error, Result};
use crate::graph::{self, EmbeddingMatrix, EmbeddingSource, GaeConfig, SimilarityGraph};
use crate::io::{csv_field, file_digest, sha256_hex, write_atomic};
use crate::naming::{self, EndpointConfig, FailurePolicy, NamingCorpus, NamingOptions, NamingRequest};
use crate::topic::{self, LdaParams, SweepParams};
use crate::vectorize::{self, IdfMode, SparseDocTermMatrix, TfidfOptions, Vocabulary};

pub const ENV_PREFIX: &str = "STORMLENS_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    /// Inferred from the extension when absent.
    pub format: Option<InputFormat>,
    pub text_col: String,
    pub id_col: Option<String>,
    pub time_col: Option<String>,
    pub emotion_col: Option<String>,
    /// Abort on malformed rows instead of skipping them.
    pub strict: bool,
}

impl Default for InputConfig {
    fn default() -> Self {
        let c = ColumnMap::default();
        InputConfig {
            path: PathBuf::new(),
            format: None,
            text_col: c.text_col,
            id_col: c.id_col,
            time_col: None,
            emotion_col: None,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningSection {
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub strip_hex_escapes: bool,
    pub strip_emoji: bool,
    pub lowercase: bool,
    pub stemmer: bool,
    pub min_token_len: usize,
    /// Replaces the bundled English list when set.
    pub stopwords: Option<PathBuf>,
    /// Include the bundled disaster/location list.
    pub bundled_domain_stopwords: bool,
    /// Extra domain list, one word per line.
    pub domain_stopwords: Option<PathBuf>,
    pub extra_stopwords: Vec<String>,
}

impl Default for CleaningSection {
    fn default() -> Self {
        let c = CleaningConfig::default();
        CleaningSection {
            strip_urls: c.strip_urls,
            strip_mentions: c.strip_mentions,
            strip_hex_escapes: c.strip_hex_escapes,
            strip_emoji: true,
            lowercase: c.lowercase,
            stemmer: c.stemmer_enabled,
            min_token_len: c.min_token_len,
            stopwords: None,
            bundled_domain_stopwords: true,
            domain_stopwords: None,
            extra_stopwords: Vec::new(),
        }
    }
}

impl CleaningSection {
    pub fn cleaning_config(&self) -> CleaningConfig {
        let defaults = CleaningConfig::default();
        CleaningConfig {
            strip_urls: self.strip_urls,
            strip_mentions: self.strip_mentions,
            strip_hex_escapes: self.strip_hex_escapes,
            strip_unicode_ranges: if self.strip_emoji { defaults.strip_unicode_ranges.clone() } else { Vec::new() },
            lowercase: self.lowercase,
            stemmer_enabled: self.stemmer,
            min_token_len: self.min_token_len,
            ..defaults
        }
    }

    pub fn stopwords(&self) -> Result<StopwordSet> {
        let mut s = match &self.stopwords {
            Some(p) => {
                let mut s = StopwordSet::empty();
                s.load_base_file(p)?;
                s
            }
            None => StopwordSet::english(),
        };
        if self.bundled_domain_stopwords {
            s.add_domain(StopwordSet::bundled_domain_words());
        }
        if let Some(p) = &self.domain_stopwords {
            s.load_domain_file(p)?;
        }
        s.add_domain(&self.extra_stopwords);
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmotionSection {
    /// External `id,emotion` labels; take precedence over everything else.
    pub labels: Option<PathBuf>,
    /// `term,score` lexicon for records without a label; bundled when absent.
    pub lexicon: Option<PathBuf>,
    pub threshold: f64,
    pub top_words: usize,
    pub ranking: WordRanking,
}

impl Default for EmotionSection {
    fn default() -> Self {
        EmotionSection {
            labels: None,
            lexicon: None,
            threshold: 0.5,
            top_words: 20,
            ranking: WordRanking::Frequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizeSection {
    pub min_df: usize,
    pub max_df_ratio: f64,
    pub idf: IdfMode,
    pub clamp_nonnegative: bool,
}

impl Default for VectorizeSection {
    fn default() -> Self {
        VectorizeSection {
            min_df: 2,
            max_df_ratio: 1.0,
            idf: IdfMode::Plain,
            clamp_nonnegative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaSection {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
    /// `50 / K` when absent.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub top_n: usize,
    /// Overrides the elbow choice.
    pub manual_k: Option<usize>,
}

impl Default for LdaSection {
    fn default() -> Self {
        let s = SweepParams::default();
        LdaSection {
            k_min: s.k_min,
            k_max: s.k_max,
            step: s.step,
            alpha: None,
            beta: s.beta,
            iterations: s.iterations,
            top_n: s.top_n,
            manual_k: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphOver {
    /// One node per tweet.
    #[default]
    Tweets,
    /// One node per vocabulary term (term-by-document vectors).
    Terms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub over: GraphOver,
    pub k: usize,
    pub dim: usize,
    /// Precomputed `id,v0,...` CSV or binary embeddings; TF-IDF factors otherwise.
    pub embeddings: Option<PathBuf>,
}

impl Default for GraphSection {
    fn default() -> Self {
        GraphSection {
            over: GraphOver::Tweets,
            k: 10,
            dim: 64,
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub negative_ratio: f64,
}

impl Default for GnnSection {
    fn default() -> Self {
        let g = GaeConfig::default();
        GnnSection {
            hidden_dim: g.hidden_dim,
            out_dim: g.out_dim,
            step_size: g.step_size,
            momentum: g.momentum,
            epochs: g.epochs,
            negative_ratio: g.negative_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            k_min: 2,
            k_max: 10,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NamingSection {
    /// Offline (fallback names only) when absent.
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub auth_header: Option<String>,
    pub policy: FailurePolicy,
    pub n_terms: usize,
    pub n_tweets: usize,
    pub template: String,
    pub concurrency: usize,
}

impl Default for NamingSection {
    fn default() -> Self {
        let o = NamingOptions::default();
        NamingSection {
            endpoint: None,
            timeout_secs: 30.0,
            auth_header: None,
            policy: FailurePolicy::Fallback,
            n_terms: o.n_terms,
            n_tweets: o.n_tweets,
            template: o.template,
            concurrency: o.concurrency,
        }
    }
}

impl NamingSection {
    pub fn endpoint_config(&self) -> Option<EndpointConfig> {
        self.endpoint.as_ref().map(|url| EndpointConfig {
            url: url.clone(),
            timeout_secs: self.timeout_secs,
            auth_header: self.auth_header.clone(),
            policy: self.policy,
        })
    }

    pub fn options(&self) -> NamingOptions {
        NamingOptions {
            n_terms: self.n_terms,
            n_tweets: self.n_tweets,
            template: self.template.clone(),
            concurrency: self.concurrency,
        }
    }
}

/// Everything a run depends on. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sentiments: Vec<EmotionLabel>,
    pub input: InputConfig,
    pub cleaning: CleaningSection,
    pub emotion: EmotionSection,
    pub vectorize: VectorizeSection,
    pub lda: LdaSection,
    pub graph: GraphSection,
    pub gnn: GnnSection,
    pub cluster: ClusterSection,
    pub naming: NamingSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            sentiments: EmotionLabel::ALL.to_vec(),
            input: InputConfig::default(),
            cleaning: CleaningSection::default(),
            emotion: EmotionSection::default(),
            vectorize: VectorizeSection::default(),
            lda: LdaSection::default(),
            graph: GraphSection::default(),
            gnn: GnnSection::default(),
            cluster: ClusterSection::default(),
            naming: NamingSection::default(),
        }
    }
}

/// Parses a `STORMLENS_`-style override value as a TOML value, or as a bare
/// string when it is not valid TOML.
fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `PREFIX_SECTION__KEY=value` overrides to a parsed TOML table.
/// Sections nest with a double underscore; names are case-insensitive.
pub fn apply_env_overrides<I, K, V>(table: &mut toml::Table, vars: I) -> Vec<String>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut applied = Vec::new();
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| k.as_ref().strip_prefix(ENV_PREFIX).map(|s| (s.to_ascii_lowercase(), v.as_ref().to_string())))
        .collect();
    vars.sort();
    for (key, value) in vars {
        let path: Vec<&str> = key.split("__").collect();
        let mut node = &mut *table;
        for seg in &path[..path.len() - 1] {
            let entry = node.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if !entry.is_table() {
                *entry = toml::Value::Table(toml::Table::new());
            }
            node = entry.as_table_mut().expect("just made a table");
        }
        node.insert(path[path.len() - 1].to_string(), parse_override(&value));
        applied.push(key);
    }
    applied
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        resolve(base, p);
    }
}

impl PipelineConfig {
    /// Reads the file, applies process-environment overrides, resolves paths
    /// and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, std::env::vars())
    }

    pub fn from_toml_str<I, K, V>(text: &str, base_dir: &Path, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![format!("parse error: {e}")]))?;
        apply_env_overrides(&mut table, env);
        let mut cfg: PipelineConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        cfg.resolve_paths(base_dir);
        let problems = cfg.validate();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        resolve(base, &mut self.input.path);
        resolve_opt(base, &mut self.cleaning.stopwords);
        resolve_opt(base, &mut self.cleaning.domain_stopwords);
        resolve_opt(base, &mut self.emotion.labels);
        resolve_opt(base, &mut self.emotion.lexicon);
        resolve_opt(base, &mut self.graph.embeddings);
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut file = |what: &str, path: &Option<PathBuf>| {
            if let Some(path) = path {
                if !path.is_file() {
                    p.push(format!("{what}: file {} does not exist", path.display()));
                }
            }
        };
        file("input.path", &Some(self.input.path.clone()).filter(|p| !p.as_os_str().is_empty()));
        file("cleaning.stopwords", &self.cleaning.stopwords);
        file("cleaning.domain_stopwords", &self.cleaning.domain_stopwords);
        file("emotion.labels", &self.emotion.labels);
        file("emotion.lexicon", &self.emotion.lexicon);
        file("graph.embeddings", &self.graph.embeddings);
        if self.input.path.as_os_str().is_empty() {
            p.push("input.path is required".into());
        } else if self.input.format.is_none() && InputFormat::from_path(&self.input.path).is_none() {
            p.push("input.format is not set and cannot be inferred from the file extension".into());
        }
        if self.input.text_col.trim().is_empty() {
            p.push("input.text_col must not be empty".into());
        }
        if self.out_dir.as_os_str().is_empty() {
            p.push("out_dir must not be empty".into());
        }
        if self.sentiments.is_empty() {
            p.push("sentiments must list at least one partition".into());
        }
        p.extend(self.cleaning.cleaning_config().validate());
        if self.emotion.threshold.is_nan() || self.emotion.threshold < 0.0 {
            p.push("emotion.threshold must be >= 0".into());
        }
        if self.emotion.top_words < 1 {
            p.push("emotion.top_words must be >= 1".into());
        }
        if self.vectorize.min_df < 1 {
            p.push("vectorize.min_df must be >= 1".into());
        }
        if !(self.vectorize.max_df_ratio > 0.0 && self.vectorize.max_df_ratio <= 1.0) {
            p.push("vectorize.max_df_ratio must lie in (0, 1]".into());
        }
        if self.lda.k_min < 1 {
            p.push("lda.k_min must be >= 1".into());
        }
        if self.lda.step < 1 {
            p.push("lda.step must be >= 1".into());
        }
        if self.lda.k_min > self.lda.k_max {
            p.push(format!("lda range {}..{} is empty", self.lda.k_min, self.lda.k_max));
        }
        if self.lda.alpha.is_some_and(|a| a.is_nan() || a <= 0.0) {
            p.push("lda.alpha must be > 0".into());
        }
        if self.lda.beta.is_nan() || self.lda.beta <= 0.0 {
            p.push("lda.beta must be > 0".into());
        }
        if self.lda.iterations < 1 {
            p.push("lda.iterations must be >= 1".into());
        }
        if self.lda.top_n < 2 {
            p.push("lda.top_n must be >= 2".into());
        }
        if self.lda.manual_k == Some(0) {
            p.push("lda.manual_k must be >= 1".into());
        }
        if self.graph.k < 1 {
            p.push("graph.k must be >= 1".into());
        }
        if self.graph.dim < 1 {
            p.push("graph.dim must be >= 1".into());
        }
        if self.gnn.hidden_dim < 1 || self.gnn.out_dim < 1 {
            p.push("gnn.hidden_dim and gnn.out_dim must be >= 1".into());
        }
        if self.gnn.step_size.is_nan() || self.gnn.step_size <= 0.0 {
            p.push("gnn.step_size must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.gnn.momentum) {
            p.push("gnn.momentum must lie in [0, 1)".into());
        }
        if self.gnn.epochs < 1 {
            p.push("gnn.epochs must be >= 1".into());
        }
        if self.gnn.negative_ratio.is_nan() || self.gnn.negative_ratio <= 0.0 {
            p.push("gnn.negative_ratio must be > 0".into());
        }
        if self.cluster.k_min < 2 {
            p.push("cluster.k_min must be >= 2".into());
        }
        if self.cluster.k_min > self.cluster.k_max {
            p.push(format!("cluster range {}..{} is empty", self.cluster.k_min, self.cluster.k_max));
        }
        if self.cluster.restarts < 1 {
            p.push("cluster.restarts must be >= 1".into());
        }
        if let Err(e) = naming::validate_template(&self.naming.template) {
            p.push(format!("naming.template: {e}"));
        }
        if self.naming.timeout_secs.is_nan() || self.naming.timeout_secs <= 0.0 {
            p.push("naming.timeout_secs must be > 0".into());
        }
        if self.naming.concurrency < 1 {
            p.push("naming.concurrency must be >= 1".into());
        }
        if self.naming.n_terms < 1 || self.naming.n_tweets < 1 {
            p.push("naming.n_terms and naming.n_tweets must be >= 1".into());
        }
        if self.naming.auth_header.as_deref().is_some_and(|h| !h.contains(':')) {
            p.push("naming.auth_header must look like `Name: value`".into());
        }
        p
    }

    /// Digest of the effective configuration. The output directory is left
    /// out: where results go does not change what they are.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Clean,
    Emotions,
    Vectorize,
    LdaSweep,
    LdaFit,
    Graph,
    GnnTrain,
    Cluster,
    Compare,
    Name,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Clean,
        Stage::Emotions,
        Stage::Vectorize,
        Stage::LdaSweep,
        Stage::LdaFit,
        Stage::Graph,
        Stage::GnnTrain,
        Stage::Cluster,
        Stage::Compare,
        Stage::Name,
        Stage::Report,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Clean => "clean",
            Stage::Emotions => "emotions",
            Stage::Vectorize => "vectorize",
            Stage::LdaSweep => "lda-sweep",
            Stage::LdaFit => "lda-fit",
            Stage::Graph => "graph",
            Stage::GnnTrain => "gnn-train",
            Stage::Cluster => "cluster",
            Stage::Compare => "compare",
            Stage::Name => "name",
            Stage::Report => "report",
        }
    }

    /// Stages that run once per sentiment partition.
    pub fn per_sentiment(&self) -> bool {
        !matches!(self, Stage::Clean | Stage::Emotions | Stage::Report)
    }

    fn dir(&self) -> &'static str {
        match self {
            Stage::LdaSweep | Stage::LdaFit => "lda",
            Stage::GnnTrain => "gnn",
            other => other.as_str(),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

/// Per-stage seed: the master seed hashed together with a stable stage tag.
pub fn stage_seed(master: u64, tag: &str) -> u64 {
    let mut bytes = master.to_le_bytes().to_vec();
    bytes.extend_from_slice(tag.as_bytes());
    let hex = sha256_hex(&bytes);
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub seed: u64,
    /// Path (relative to the output directory where possible) → sha256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_ms: u64,
    pub finished_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_digest: String,
    pub seed: u64,
    /// Keyed `stage` or `stage/sentiment`.
    pub stages: BTreeMap<String, StageEntry>,
}

impl RunManifest {
    /// The manifest with wall-clock fields blanked, for determinism checks.
    pub fn without_timings(&self) -> RunManifest {
        let mut m = self.clone();
        for e in m.stages.values_mut() {
            e.wall_clock_ms = 0;
            e.finished_at.clear();
        }
        m
    }
}

struct StageIo {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

/// A configured run over one output directory.
pub struct Pipeline {
    cfg: PipelineConfig,
    manifest: Mutex<RunManifest>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Data rows of a simple CSV artifact (header and `#` lines skipped).
fn csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    rdr.records()
        .map(|r| {
            r.map(|r| r.iter().map(str::to_string).collect()).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })
        })
        .collect()
}

fn parse_field<T: FromStr>(path: &Path, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        line: 0,
        message: format!("unparsable value `{v}`"),
    })
}

/// Converts a CSV artifact into a markdown table, cell text unchanged.
pub fn csv_to_markdown(text: &str) -> String {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = String::new();
    for (i, rec) in rdr.records().filter_map(|r| r.ok()).enumerate() {
        let cells: Vec<String> = rec.iter().map(|c| c.replace('|', "\\|")).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
        if i == 0 {
            let _ = writeln!(out, "|{}", "---|".repeat(cells.len()));
        }
    }
    out
}

impl Pipeline {
    /// Opens the output directory, picking up an existing manifest.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        let path = cfg.out_dir.join("manifest.json");
        let mut manifest = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|e| {
                log::warn!("ignoring unreadable manifest {}: {e}", path.display());
                RunManifest::default()
            }),
            Err(_) => RunManifest::default(),
        };
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
        let digest = cfg.digest();
        if !manifest.stages.is_empty() && manifest.config_digest != digest {
            log::warn!("configuration changed since {} was written; earlier stage entries came from the old settings", path.display());
        }
        manifest.config_digest = digest;
        manifest.seed = cfg.seed;
        Ok(Pipeline {
            cfg,
            manifest: Mutex::new(manifest),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn manifest(&self) -> RunManifest {
        self.manifest.lock().expect("manifest lock").clone()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.cfg.out_dir.join("manifest.json")
    }

    pub fn save_manifest(&self) -> Result<()> {
        let m = self.manifest();
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        write_atomic(&self.manifest_path(), format!("{text}\n").as_bytes())
    }

    /// Directory for a stage's artifacts.
    pub fn stage_dir(&self, stage: Stage, sentiment: Option<EmotionLabel>) -> PathBuf {
        match sentiment {
            Some(s) if stage.per_sentiment() => self.cfg.out_dir.join(s.as_str()).join(stage.dir()),
            _ => self.cfg.out_dir.join(stage.dir()),
        }
    }

    fn key(stage: Stage, sentiment: Option<EmotionLabel>) -> String {
        match sentiment {
            Some(s) if stage.per_sentiment() => format!("{stage}/{s}"),
            _ => stage.to_string(),
        }
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.cfg.out_dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    /// Checks that an upstream artifact exists and, when the manifest knows
    /// it, that it still has the digest its producer recorded.
    fn require(&self, stage: Stage, sentiment: Option<EmotionLabel>, producer: Stage, file: &str) -> Result<PathBuf> {
        let path = self.stage_dir(producer, sentiment).join(file);
        let needs = match sentiment {
            Some(s) if producer.per_sentiment() => format!("{producer} --sentiment {s}"),
            _ => producer.to_string(),
        };
        if !path.is_file() {
            return Err(Error::Precondition {
                stage: stage.to_string(),
                needs: producer.to_string(),
                reason: format!("{} is missing (produced by `{needs}`)", path.display()),
            });
        }
        let recorded = self
            .manifest
            .lock()
            .expect("manifest lock")
            .stages
            .get(&Self::key(producer, sentiment))
            .and_then(|e| e.outputs.get(&self.rel(&path)).cloned());
        if let Some(d) = recorded {
            if file_digest(&path)? != d {
                return Err(Error::Precondition {
                    stage: stage.to_string(),
                    needs: producer.to_string(),
                    reason: format!("{} changed since `{needs}` wrote it", path.display()),
                });
            }
        }
        Ok(path)
    }

    fn seed_for(&self, stage: Stage, sentiment: Option<EmotionLabel>) -> u64 {
        stage_seed(self.cfg.seed, &Self::key(stage, sentiment))
    }

    /// Runs one stage. Per-sentiment stages without a sentiment run every
    /// configured partition, concurrently.
    pub fn run_stage(&self, stage: Stage, sentiment: Option<EmotionLabel>) -> Result<()> {
        if stage.per_sentiment() && sentiment.is_none() {
            let results: Vec<Result<()>> = self.cfg.sentiments.par_iter().map(|s| self.run_stage(stage, Some(*s))).collect();
            return results.into_iter().collect();
        }
        let sentiment = if stage.per_sentiment() { sentiment } else { None };
        let start = Instant::now();
        log::info!("running {}", Self::key(stage, sentiment));
        let io = match stage {
            Stage::Clean => self.clean()?,
            Stage::Emotions => self.emotions()?,
            Stage::Vectorize => self.vectorize(sentiment.unwrap())?,
            Stage::LdaSweep => self.lda_sweep(sentiment.unwrap())?,
            Stage::LdaFit => self.lda_fit(sentiment.unwrap())?,
            Stage::Graph => self.graph(sentiment.unwrap())?,
            Stage::GnnTrain => self.gnn_train(sentiment.unwrap())?,
            Stage::Cluster => self.cluster(sentiment.unwrap())?,
            Stage::Compare => self.compare(sentiment.unwrap())?,
            Stage::Name => self.name(sentiment.unwrap())?,
            Stage::Report => self.report()?,
        };
        let digests = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths.iter().map(|p| Ok((self.rel(p), file_digest(p)?))).collect()
        };
        let entry = StageEntry {
            seed: self.seed_for(stage, sentiment),
            inputs: digests(&io.inputs)?,
            outputs: digests(&io.outputs)?,
            wall_clock_ms: start.elapsed().as_millis() as u64,
            finished_at: chrono::Utc::now().to_rfc3339(),
        };
        self.manifest.lock().expect("manifest lock").stages.insert(Self::key(stage, sentiment), entry);
        Ok(())
    }

    /// The whole chain: shared stages, each sentiment partition (concurrently),
    /// then the report. The manifest is written once at the end, also when a
    /// partition failed; the first failure is returned.
    pub fn run_all(&self) -> Result<()> {
        self.run_stage(Stage::Clean, None)?;
        self.run_stage(Stage::Emotions, None)?;
        let chain = [
            Stage::Vectorize,
            Stage::LdaSweep,
            Stage::LdaFit,
            Stage::Graph,
            Stage::GnnTrain,
            Stage::Cluster,
            Stage::Compare,
            Stage::Name,
        ];
        let results: Vec<Result<()>> = self
            .cfg
            .sentiments
            .par_iter()
            .map(|s| chain.iter().try_for_each(|st| self.run_stage(*st, Some(*s))))
            .collect();
        let report = self.run_stage(Stage::Report, None);
        self.save_manifest()?;
        results.into_iter().collect::<Result<()>>()?;
        report
    }

    fn stopwords(&self) -> Result<StopwordSet> {
        self.cfg.cleaning.stopwords()
    }

    fn clean(&self) -> Result<StageIo> {
        let input = &self.cfg.input;
        let format = input
            .format
            .or_else(|| InputFormat::from_path(&input.path))
            .ok_or_else(|| Error::invalid("input format cannot be inferred"))?;
        let columns = ColumnMap {
            text_col: input.text_col.clone(),
            id_col: input.id_col.clone(),
            time_col: input.time_col.clone(),
            emotion_col: input.emotion_col.clone(),
        };
        let strictness = if input.strict { Strictness::Strict } else { Strictness::Lenient };
        let mut report = corpus::load_corpus(&input.path, format, &columns, strictness)?;
        let cc = self.cfg.cleaning.cleaning_config();
        let stops = self.stopwords()?;
        corpus::normalize_records(&mut report.records, &cc, &stops);
        let dir = self.stage_dir(Stage::Clean, None);
        let records = dir.join("records.jsonl");
        corpus::write_records(&records, &report.records)?;
        let mut s = String::from("line,reason\n");
        for k in &report.skipped {
            let _ = writeln!(s, "{},{}", k.line, csv_field(&k.reason));
        }
        let skipped = dir.join("skipped.csv");
        write_atomic(&skipped, s.as_bytes())?;
        let mut s = String::from("stem,surface\n");
        for (stem, surface) in corpus::surface_forms(&report.records, &cc, &stops) {
            let _ = writeln!(s, "{},{}", csv_field(&stem), csv_field(&surface));
        }
        let surface = dir.join("surface_forms.csv");
        write_atomic(&surface, s.as_bytes())?;
        log::info!(
            "clean: {} records from {} rows, {} skipped",
            report.records.len(),
            report.rows_in,
            report.skipped.len()
        );
        Ok(StageIo {
            inputs: vec![input.path.clone()],
            outputs: vec![records, skipped, surface],
        })
    }

    fn surface_map(&self, stage: Stage, sentiment: Option<EmotionLabel>) -> Result<HashMap<String, String>> {
        let path = self.require(stage, sentiment, Stage::Clean, "surface_forms.csv")?;
        Ok(csv_rows(&path)?.into_iter().filter(|r| r.len() == 2).map(|r| (r[0].clone(), r[1].clone())).collect())
    }

    fn emotions(&self) -> Result<StageIo> {
        let src = self.require(Stage::Emotions, None, Stage::Clean, "records.jsonl")?;
        let mut records = corpus::read_records(&src)?;
        let mut inputs = vec![src];
        let mut sources: BTreeMap<&str, usize> = BTreeMap::new();
        let from_column: Vec<bool> = records.iter().map(|r| r.emotion.is_some()).collect();
        let mut from_file = vec![false; records.len()];
        if let Some(labels) = &self.cfg.emotion.labels {
            let map = emotion::read_label_file(labels)?;
            let join = emotion::apply_labels(&mut records, &map);
            if !join.unmatched_labels.is_empty() {
                log::warn!("{} label ids match no record", join.unmatched_labels.len());
            }
            for (i, r) in records.iter().enumerate() {
                from_file[i] = map.contains_key(&r.id);
            }
            inputs.push(labels.clone());
        }
        let lexicon = match &self.cfg.emotion.lexicon {
            Some(p) => {
                inputs.push(p.clone());
                ValenceLexicon::load(p, self.cfg.emotion.threshold)?
            }
            None => ValenceLexicon::bundled().with_threshold(self.cfg.emotion.threshold)?,
        };
        let cc = self.cfg.cleaning.cleaning_config();
        let no_stops = StopwordSet::empty();
        let lexicon = lexicon.normalized_with(|t| corpus::tokenize_and_normalize(t, &cc, &no_stops).into_iter().next());
        for (i, r) in records.iter_mut().enumerate() {
            let source = if from_file[i] {
                "label_file"
            } else if from_column[i] {
                "input_column"
            } else {
                r.emotion = Some(emotion::lexicon_classify(r, &lexicon));
                "lexicon"
            };
            *sources.entry(source).or_default() += 1;
        }
        let dir = self.stage_dir(Stage::Emotions, None);
        let out_records = dir.join("records.jsonl");
        corpus::write_records(&out_records, &records)?;

        let dist = emotion::emotion_distribution(&records)?;
        let total = records.len().max(1) as f64;
        let mut s = String::from("emotion,count,share\n");
        for (l, c) in &dist {
            let _ = writeln!(s, "{l},{c},{}", crate::io::fmt_f64(*c as f64 / total, 4));
        }
        let distribution = dir.join("distribution.csv");
        write_atomic(&distribution, s.as_bytes())?;

        let surface = self.surface_map(Stage::Emotions, None)?;
        let top = emotion::top_words_by_sentiment(&records, self.cfg.emotion.top_words, self.cfg.emotion.ranking)?;
        let mut s = String::from("sentiment,rank,term,stem,score\n");
        for (l, terms) in &top {
            for (i, t) in terms.iter().enumerate() {
                let shown = surface.get(&t.term).cloned().unwrap_or_else(|| t.term.clone());
                let _ = writeln!(
                    s,
                    "{l},{},{},{},{}",
                    i + 1,
                    csv_field(&shown),
                    csv_field(&t.term),
                    crate::io::fmt_f64(t.score, 4)
                );
            }
        }
        let top_words = dir.join("top_words.csv");
        write_atomic(&top_words, s.as_bytes())?;

        let mut s = String::from("source,count\n");
        for (k, v) in &sources {
            let _ = writeln!(s, "{k},{v}");
        }
        let label_sources = dir.join("label_sources.csv");
        write_atomic(&label_sources, s.as_bytes())?;
        Ok(StageIo {
            inputs,
            outputs: vec![out_records, distribution, top_words, label_sources],
        })
    }

    fn partition_records(&self, stage: Stage, s: EmotionLabel) -> Result<(PathBuf, Vec<TweetRecord>)> {
        let src = self.require(stage, None, Stage::Emotions, "records.jsonl")?;
        let records = corpus::read_records(&src)?.into_iter().filter(|r| r.emotion == Some(s)).collect();
        Ok((src, records))
    }

    fn vectorize(&self, s: EmotionLabel) -> Result<StageIo> {
        let (src, records) = self.partition_records(Stage::Vectorize, s)?;
        let v = &self.cfg.vectorize;
        let mut dropped: Vec<(String, &str)> = Vec::new();
        let nonempty: Vec<&TweetRecord> = records
            .iter()
            .filter(|r| {
                let keep = !r.tokens.is_empty();
                if !keep {
                    dropped.push((r.id.clone(), "no tokens after cleaning"));
                }
                keep
            })
            .collect();
        if nonempty.is_empty() {
            return Err(Error::invalid(format!("partition `{s}` has no documents with tokens")));
        }
        let docs: Vec<Vec<String>> = nonempty.iter().map(|r| r.tokens.clone()).collect();
        let first = Vocabulary::build(&docs, v.min_df, v.max_df_ratio)?;
        let mut kept = Vec::new();
        for r in nonempty {
            if r.tokens.iter().any(|t| first.index_of(t).is_some()) {
                kept.push(r);
            } else {
                dropped.push((r.id.clone(), "no retained vocabulary terms"));
            }
        }
        let docs: Vec<Vec<String>> = kept.iter().map(|r| r.tokens.clone()).collect();
        let vocab = Vocabulary::build(&docs, v.min_df, v.max_df_ratio)?;
        let counts = vectorize::count_matrix(&docs, &vocab);
        let tfidf = vectorize::tfidf_matrix(
            &docs,
            &vocab,
            TfidfOptions {
                idf: v.idf,
                clamp_nonnegative: v.clamp_nonnegative,
            },
        );
        let dir = self.stage_dir(Stage::Vectorize, Some(s));
        let vocab_p = dir.join("vocab.csv");
        vocab.write_csv(&vocab_p)?;
        let counts_p = dir.join("counts.csv");
        counts.write_triplets(&counts_p)?;
        let tfidf_p = dir.join("tfidf.csv");
        tfidf.write_triplets(&tfidf_p)?;
        let mut d = String::from("row,id\n");
        for (i, r) in kept.iter().enumerate() {
            let _ = writeln!(d, "{i},{}", csv_field(&r.id));
        }
        let docs_p = dir.join("docs.csv");
        write_atomic(&docs_p, d.as_bytes())?;
        let mut d = String::from("id,reason\n");
        for (id, why) in &dropped {
            let _ = writeln!(d, "{},{why}", csv_field(id));
        }
        let dropped_p = dir.join("dropped.csv");
        write_atomic(&dropped_p, d.as_bytes())?;
        log::info!("vectorize/{s}: {} docs x {} terms, {} dropped", kept.len(), vocab.len(), dropped.len());
        Ok(StageIo {
            inputs: vec![src],
            outputs: vec![vocab_p, counts_p, tfidf_p, docs_p, dropped_p],
        })
    }

    fn doc_ids(&self, stage: Stage, s: EmotionLabel) -> Result<(PathBuf, Vec<String>)> {
        let p = self.require(stage, Some(s), Stage::Vectorize, "docs.csv")?;
        let ids = csv_rows(&p)?.into_iter().map(|r| r.get(1).cloned().unwrap_or_default()).collect();
        Ok((p, ids))
    }

    fn lda_sweep(&self, s: EmotionLabel) -> Result<StageIo> {
        let counts_p = self.require(Stage::LdaSweep, Some(s), Stage::Vectorize, "counts.csv")?;
        let counts = SparseDocTermMatrix::read_triplets(&counts_p)?;
        let l = &self.cfg.lda;
        let params = SweepParams {
            k_min: l.k_min,
            k_max: l.k_max,
            step: l.step,
            alpha: l.alpha,
            beta: l.beta,
            iterations: l.iterations,
            seed: self.seed_for(Stage::LdaSweep, Some(s)),
            top_n: l.top_n,
        };
        let report = topic::coherence_sweep(&counts.to_token_docs(), counts.n_cols, &params)?;
        let (k, rule) = topic::elbow_select(&report, l.manual_k)?;
        let dir = self.stage_dir(Stage::LdaSweep, Some(s));
        let mut c = String::from("k,mean_umass\n");
        for (k, v) in &report.curve {
            let _ = writeln!(c, "{k},{}", crate::io::fmt_f64(*v, 6));
        }
        let curve_p = dir.join("coherence.csv");
        write_atomic(&curve_p, c.as_bytes())?;
        let rule = serde_json::to_value(rule).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let sel_p = dir.join("selection.csv");
        write_atomic(&sel_p, format!("selected_k,rule\n{k},{rule}\n").as_bytes())?;
        Ok(StageIo {
            inputs: vec![counts_p],
            outputs: vec![curve_p, sel_p],
        })
    }

    fn lda_fit(&self, s: EmotionLabel) -> Result<StageIo> {
        let sel_p = self.require(Stage::LdaFit, Some(s), Stage::LdaSweep, "selection.csv")?;
        let counts_p = self.require(Stage::LdaFit, Some(s), Stage::Vectorize, "counts.csv")?;
        let vocab_p = self.require(Stage::LdaFit, Some(s), Stage::Vectorize, "vocab.csv")?;
        let (docs_p, ids) = self.doc_ids(Stage::LdaFit, s)?;
        let k: usize = parse_field(&sel_p, csv_rows(&sel_p)?.first().and_then(|r| r.first()).map(String::as_str).unwrap_or(""))?;
        let counts = SparseDocTermMatrix::read_triplets(&counts_p)?;
        let vocab = Vocabulary::read_csv(&vocab_p)?;
        let surface = self.surface_map(Stage::LdaFit, Some(s))?;
        let l = &self.cfg.lda;
        let params = LdaParams {
            n_topics: k,
            alpha: l.alpha.unwrap_or(50.0 / k as f64),
            beta: l.beta,
            iterations: l.iterations,
            seed: self.seed_for(Stage::LdaFit, Some(s)),
        };
        let model = topic::lda_fit(counts.to_token_docs(), counts.n_cols, &params)?;
        let dir = self.stage_dir(Stage::LdaFit, Some(s));
        let mut t = String::from("topic,rank,term,stem,weight\n");
        for (topic, summary) in topic::all_topic_terms(&model, l.top_n.min(vocab.len()))? {
            for (rank, (w, p)) in summary.terms.iter().enumerate() {
                let stem = vocab.term(*w);
                let shown = surface.get(stem).map(String::as_str).unwrap_or(stem);
                let _ = writeln!(t, "{topic},{},{},{},{}", rank + 1, csv_field(shown), csv_field(stem), crate::io::fmt_f64(*p, 6));
            }
        }
        let topics_p = dir.join("topics.csv");
        write_atomic(&topics_p, t.as_bytes())?;
        let mut d = String::from("id,dominant_topic,weight\n");
        for (i, id) in ids.iter().enumerate() {
            let theta = model.doc_topic_distribution(i);
            let (best, w) = theta.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
            let _ = writeln!(d, "{},{best},{}", csv_field(id), crate::io::fmt_f64(w, 6));
        }
        let dt_p = dir.join("doc_topics.csv");
        write_atomic(&dt_p, d.as_bytes())?;
        Ok(StageIo {
            inputs: vec![sel_p, counts_p, vocab_p, docs_p],
            outputs: vec![topics_p, dt_p],
        })
    }

    /// Node ids and node-by-feature weights for the configured graph mode.
    fn nodes(&self, stage: Stage, s: EmotionLabel) -> Result<(Vec<PathBuf>, Vec<String>, SparseDocTermMatrix)> {
        let tfidf_p = self.require(stage, Some(s), Stage::Vectorize, "tfidf.csv")?;
        let tfidf = SparseDocTermMatrix::read_triplets(&tfidf_p)?;
        match self.cfg.graph.over {
            GraphOver::Tweets => {
                let (docs_p, ids) = self.doc_ids(stage, s)?;
                Ok((vec![tfidf_p, docs_p], ids, tfidf))
            }
            GraphOver::Terms => {
                let vocab_p = self.require(stage, Some(s), Stage::Vectorize, "vocab.csv")?;
                let vocab = Vocabulary::read_csv(&vocab_p)?;
                Ok((vec![tfidf_p, vocab_p], vocab.terms().to_vec(), tfidf.transpose()))
            }
        }
    }

    fn graph(&self, s: EmotionLabel) -> Result<StageIo> {
        let (mut inputs, ids, x) = self.nodes(Stage::Graph, s)?;
        let g = &self.cfg.graph;
        let seed = self.seed_for(Stage::Graph, Some(s));
        let n = ids.len();
        if n < 3 {
            return Err(Error::invalid(format!("partition `{s}` has only {n} graph nodes")));
        }
        let emb = match &g.embeddings {
            Some(p) => {
                inputs.push(p.clone());
                let e = graph::load_embeddings(p, &ids)?;
                if e.dim() > g.dim {
                    graph::reduce_dimensions(&e, g.dim, seed)?
                } else {
                    e
                }
            }
            None => {
                let rank = g.dim.min(x.n_rows).min(x.n_cols);
                graph::fallback_embeddings(&ids, &x, rank, seed)?
            }
        };
        let k = if g.k >= n {
            log::warn!("graph.k = {} clamped to {} for {n} nodes", g.k, n - 1);
            n - 1
        } else {
            g.k
        };
        let (sim, knn) = graph::build_knn_graph(&emb.data, k)?;
        let dir = self.stage_dir(Stage::Graph, Some(s));
        let emb_p = dir.join("embeddings.csv");
        emb.write_csv(&emb_p)?;
        let edges_p = dir.join("edges.csv");
        sim.write_csv(&edges_p)?;
        let source = match emb.source {
            EmbeddingSource::External => "external",
            EmbeddingSource::Fallback => "tfidf_factors",
        };
        let info = format!(
            "key,value\nnodes,{n}\nk,{k}\ndim,{}\nedges,{}\nzero_rows,{}\nsource,{source}\n",
            emb.dim(),
            sim.edges.len(),
            knn.zero_rows.len()
        );
        let info_p = dir.join("info.csv");
        write_atomic(&info_p, info.as_bytes())?;
        Ok(StageIo {
            inputs,
            outputs: vec![emb_p, edges_p, info_p],
        })
    }

    fn read_matrix(path: &Path, ids: &[String]) -> Result<Array2<f64>> {
        Ok(graph::load_embeddings(path, ids)?.data)
    }

    fn gnn_train(&self, s: EmotionLabel) -> Result<StageIo> {
        let emb_p = self.require(Stage::GnnTrain, Some(s), Stage::Graph, "embeddings.csv")?;
        let edges_p = self.require(Stage::GnnTrain, Some(s), Stage::Graph, "edges.csv")?;
        let (_, ids, _) = self.nodes(Stage::GnnTrain, s)?;
        let mut x = Self::read_matrix(&emb_p, &ids)?;
        // Unit-length rows keep the first-layer activations on a common scale.
        for mut row in x.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row.mapv_inplace(|v| v / n);
            }
        }
        let a = graph::normalize_adjacency(&SimilarityGraph::read_csv(&edges_p)?);
        let gc = &self.cfg.gnn;
        let cfg = GaeConfig {
            hidden_dim: gc.hidden_dim,
            out_dim: gc.out_dim,
            step_size: gc.step_size,
            momentum: gc.momentum,
            epochs: gc.epochs,
            negative_ratio: gc.negative_ratio,
            seed: self.seed_for(Stage::GnnTrain, Some(s)),
        };
        let (model, report) = graph::gae_train(&a, &x, &cfg)?;
        let z = graph::gcn_forward(&model, &a, &x)?;
        let dir = self.stage_dir(Stage::GnnTrain, Some(s));
        let model_p = dir.join("model.csv");
        model.write_csv(&model_p)?;
        let refined_p = dir.join("refined.csv");
        EmbeddingMatrix::new(ids, z, EmbeddingSource::Fallback)?.write_csv(&refined_p)?;
        let mut l = format!("epoch,loss\n# initial={:?} final={:?}\n", report.initial_loss, report.final_loss);
        for (e, v) in report.history.iter().enumerate() {
            let _ = writeln!(l, "{e},{v:?}");
        }
        let loss_p = dir.join("loss.csv");
        write_atomic(&loss_p, l.as_bytes())?;
        Ok(StageIo {
            inputs: vec![emb_p, edges_p],
            outputs: vec![model_p, refined_p, loss_p],
        })
    }

    fn refined(&self, stage: Stage, s: EmotionLabel) -> Result<(PathBuf, Vec<String>, Array2<f64>)> {
        let p = self.require(stage, Some(s), Stage::GnnTrain, "refined.csv")?;
        let (_, ids, _) = self.nodes(stage, s)?;
        let z = Self::read_matrix(&p, &ids)?;
        Ok((p, ids, z))
    }

    fn cluster(&self, s: EmotionLabel) -> Result<StageIo> {
        let (z_p, ids, z) = self.refined(Stage::Cluster, s)?;
        let c = &self.cfg.cluster;
        let hi = c.k_max.min(ids.len().saturating_sub(1));
        if hi < c.k_min {
            return Err(Error::invalid(format!("partition `{s}` has too few items ({}) for k >= {}", ids.len(), c.k_min)));
        }
        let ks: Vec<usize> = (c.k_min..=hi).collect();
        let sweep = cluster::sweep_k(&z, &ks, self.seed_for(Stage::Cluster, Some(s)), c.restarts)?;
        let dir = self.stage_dir(Stage::Cluster, Some(s));
        let mut t = String::from("k,mean_silhouette\n");
        for (k, v) in &sweep.curve {
            let _ = writeln!(t, "{k},{}", crate::io::fmt_f64(*v, 6));
        }
        let curve_p = dir.join("silhouette.csv");
        write_atomic(&curve_p, t.as_bytes())?;
        let sel_p = dir.join("selection.csv");
        write_atomic(&sel_p, format!("selected_k\n{}\n", sweep.selected).as_bytes())?;
        let a = &sweep.assignments[&sweep.selected];
        let mut t = String::from("id,cluster\n");
        for (id, l) in ids.iter().zip(&a.labels) {
            let _ = writeln!(t, "{},{l}", csv_field(id));
        }
        let assign_p = dir.join("assignments.csv");
        write_atomic(&assign_p, t.as_bytes())?;
        Ok(StageIo {
            inputs: vec![z_p],
            outputs: vec![curve_p, sel_p, assign_p],
        })
    }

    fn assignments(&self, stage: Stage, s: EmotionLabel, ids: &[String]) -> Result<(PathBuf, cluster::ClusterAssignment)> {
        let p = self.require(stage, Some(s), Stage::Cluster, "assignments.csv")?;
        let rows = csv_rows(&p)?;
        let map: HashMap<&str, usize> = rows
            .iter()
            .map(|r| Ok((r[0].as_str(), parse_field(&p, r.get(1).map(String::as_str).unwrap_or(""))?)))
            .collect::<Result<_>>()?;
        let labels: Vec<usize> = ids
            .iter()
            .map(|id| {
                map.get(id.as_str()).copied().ok_or_else(|| Error::Precondition {
                    stage: stage.to_string(),
                    needs: Stage::Cluster.to_string(),
                    reason: format!("assignments lack item `{id}`"),
                })
            })
            .collect::<Result<_>>()?;
        let mut a = cluster::ClusterAssignment::from_labels(&labels, "kmeans");
        // Keep the stored ids rather than first-appearance order.
        a.labels = labels;
        a.k = a.labels.iter().max().map_or(0, |m| m + 1);
        Ok((p, a))
    }

    fn compare(&self, s: EmotionLabel) -> Result<StageIo> {
        let (z_p, ids, z) = self.refined(Stage::Compare, s)?;
        let (assign_p, a) = self.assignments(Stage::Compare, s, &ids)?;
        let edges_p = self.require(Stage::Compare, Some(s), Stage::Graph, "edges.csv")?;
        let (mut inputs, _, x) = self.nodes(Stage::Compare, s)?;
        let adj = graph::normalize_adjacency(&SimilarityGraph::read_csv(&edges_p)?);
        let report = cluster::compare_algorithms(&z, &adj, &x, None, a.k, self.seed_for(Stage::Compare, Some(s)));
        let dir = self.stage_dir(Stage::Compare, Some(s));
        let csv_p = dir.join("comparison.csv");
        write_atomic(&csv_p, report.to_csv().as_bytes())?;
        let md_p = dir.join("comparison.md");
        write_atomic(&md_p, report.to_markdown().as_bytes())?;
        inputs.extend([z_p, assign_p, edges_p]);
        Ok(StageIo {
            inputs,
            outputs: vec![csv_p, md_p],
        })
    }

    fn name(&self, s: EmotionLabel) -> Result<StageIo> {
        let (z_p, ids, z) = self.refined(Stage::Name, s)?;
        let (assign_p, a) = self.assignments(Stage::Name, s, &ids)?;
        let (mut inputs, _, x) = self.nodes(Stage::Name, s)?;
        let (_, records) = self.partition_records(Stage::Name, s)?;
        let surface = self.surface_map(Stage::Name, Some(s))?;
        let vocab_p = self.require(Stage::Name, Some(s), Stage::Vectorize, "vocab.csv")?;
        let vocab = Vocabulary::read_csv(&vocab_p)?;
        let shown = |stem: &str| surface.get(stem).cloned().unwrap_or_else(|| stem.to_string());
        let text_of: HashMap<&str, &str> = records.iter().map(|r| (r.id.as_str(), r.raw_text.as_str())).collect();
        let opts = self.cfg.naming.options();
        let endpoint = self.cfg.naming.endpoint_config();
        let events = match self.cfg.graph.over {
            GraphOver::Tweets => {
                let texts: Vec<String> = ids.iter().map(|id| text_of.get(id.as_str()).unwrap_or(&"").to_string()).collect();
                let terms: Vec<String> = vocab.terms().iter().map(|t| shown(t)).collect();
                let corpus = NamingCorpus {
                    ids: &ids,
                    texts: &texts,
                    weights: &x,
                    terms: &terms,
                };
                naming::name_all_clusters(&a, &z, &corpus, endpoint.as_ref(), &opts)?
            }
            GraphOver::Terms => self.name_term_clusters(s, &a, &z, &ids, &x, &text_of, &shown, endpoint.as_ref(), &opts)?,
        };
        let dir = self.stage_dir(Stage::Name, Some(s));
        let csv_p = dir.join("events.csv");
        write_atomic(&csv_p, naming::events_csv(&events).as_bytes())?;
        let md_p = dir.join("events.md");
        write_atomic(&md_p, naming::events_markdown(&events).as_bytes())?;
        let mut d = String::from("cluster,provenance,diagnostic,raw\n");
        for e in &events {
            let _ = writeln!(
                d,
                "{},{},{},{}",
                e.event.cluster,
                e.event.provenance.as_str(),
                csv_field(e.event.diagnostic.as_deref().unwrap_or("")),
                csv_field(e.event.raw.as_deref().unwrap_or(""))
            );
        }
        let diag_p = dir.join("diagnostics.csv");
        write_atomic(&diag_p, d.as_bytes())?;
        inputs.extend([z_p, assign_p, vocab_p]);
        Ok(StageIo {
            inputs,
            outputs: vec![csv_p, md_p, diag_p],
        })
    }

    /// Term-graph clusters: terms nearest the centroid name the cluster; the
    /// tweets carrying the most weight on the cluster's terms illustrate it.
    #[allow(clippy::too_many_arguments)]
    fn name_term_clusters(
        &self,
        s: EmotionLabel,
        a: &cluster::ClusterAssignment,
        z: &Array2<f64>,
        terms: &[String],
        term_by_doc: &SparseDocTermMatrix,
        text_of: &HashMap<&str, &str>,
        shown: &dyn Fn(&str) -> String,
        endpoint: Option<&EndpointConfig>,
        opts: &NamingOptions,
    ) -> Result<Vec<naming::NamedCluster>> {
        let (_, doc_ids) = self.doc_ids(Stage::Name, s)?;
        let mut built = Vec::new();
        for c in 0..a.k {
            let reps = naming::select_representatives(z, terms, a, c, opts.n_terms)?;
            let mut doc_score = vec![0.0; term_by_doc.n_cols];
            for &t in &a.members(c) {
                for &(d, w) in &term_by_doc.rows[t] {
                    doc_score[d] += w;
                }
            }
            let mut docs: Vec<usize> = (0..doc_score.len()).filter(|&d| doc_score[d] > 0.0).collect();
            docs.sort_by(|x, y| doc_score[*y].total_cmp(&doc_score[*x]).then_with(|| doc_ids[*x].cmp(&doc_ids[*y])));
            docs.truncate(opts.n_tweets);
            let req = NamingRequest {
                cluster: c,
                terms: reps.iter().map(|&i| shown(&terms[i])).collect(),
                tweets: docs.iter().map(|&d| text_of.get(doc_ids[d].as_str()).unwrap_or(&"").to_string()).collect(),
                template: opts.template.clone(),
            };
            built.push((req, docs.iter().map(|&d| doc_ids[d].clone()).collect::<Vec<_>>()));
        }
        let reqs: Vec<NamingRequest> = built.iter().map(|(r, _)| r.clone()).collect();
        let names = naming::name_requests(&reqs, endpoint, opts.concurrency)?;
        Ok(built
            .into_iter()
            .zip(names)
            .map(|((req, ids), event)| naming::NamedCluster {
                event,
                top_terms: req.terms,
                representative_ids: ids,
                representative_tweets: req.tweets,
            })
            .collect())
    }

    /// Builds the markdown report from whatever artifacts exist; missing ones
    /// are listed under a gaps section instead of failing.
    fn report(&self) -> Result<StageIo> {
        let dir = self.stage_dir(Stage::Report, None);
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut gaps: Vec<String> = Vec::new();
        let mut md = String::from("# Event analysis report\n\n");
        let _ = writeln!(md, "Seed: {}\n", self.cfg.seed);

        let mut take = |producer: Stage, s: Option<EmotionLabel>, file: &str, bundle: Option<String>, gaps: &mut Vec<String>| -> Result<Option<String>> {
            let path = self.stage_dir(producer, s).join(file);
            if !path.is_file() {
                gaps.push(format!("{} (run `{producer}`{})", self.rel(&path), s.map(|s| format!(" --sentiment {s}")).unwrap_or_default()));
                return Ok(None);
            }
            let text = read_text(&path)?;
            inputs.push(path);
            if let Some(name) = bundle {
                let out = dir.join(name);
                write_atomic(&out, text.as_bytes())?;
                outputs.push(out);
            }
            Ok(Some(text))
        };

        md.push_str("## Emotion distribution\n\n");
        if let Some(t) = take(Stage::Emotions, None, "distribution.csv", Some("emotion_distribution.csv".into()), &mut gaps)? {
            md.push_str(&csv_to_markdown(&t));
        } else {
            md.push_str("_missing_\n");
        }

        md.push_str("\n## Top words by sentiment\n\n");
        if let Some(t) = take(Stage::Emotions, None, "top_words.csv", Some("top_words.csv".into()), &mut gaps)? {
            md.push_str(&csv_to_markdown(&t));
        } else {
            md.push_str("_missing_\n");
        }

        md.push_str("\n## Topic coherence\n");
        for &s in &self.cfg.sentiments {
            let _ = writeln!(md, "\n### {s}\n");
            if let Some(t) = take(Stage::LdaSweep, Some(s), "selection.csv", None, &mut gaps)? {
                let k = t.lines().nth(1).and_then(|l| l.split(',').next()).unwrap_or("?").to_string();
                let _ = writeln!(md, "Selected K: {k}\n");
            }
            match take(Stage::LdaSweep, Some(s), "coherence.csv", Some(format!("{s}_coherence.csv")), &mut gaps)? {
                Some(t) => md.push_str(&csv_to_markdown(&t)),
                None => md.push_str("_missing_\n"),
            }
        }

        md.push_str("\n## Silhouette\n");
        for &s in &self.cfg.sentiments {
            let _ = writeln!(md, "\n### {s}\n");
            if let Some(t) = take(Stage::Cluster, Some(s), "selection.csv", None, &mut gaps)? {
                let k = t.lines().nth(1).unwrap_or("?").trim().to_string();
                let _ = writeln!(md, "Selected k: {k}\n");
            }
            match take(Stage::Cluster, Some(s), "silhouette.csv", Some(format!("{s}_silhouette.csv")), &mut gaps)? {
                Some(t) => md.push_str(&csv_to_markdown(&t)),
                None => md.push_str("_missing_\n"),
            }
        }

        md.push_str("\n## Algorithm comparison\n");
        for &s in &self.cfg.sentiments {
            let _ = writeln!(md, "\n### {s}\n");
            take(Stage::Compare, Some(s), "comparison.csv", Some(format!("{s}_comparison.csv")), &mut gaps)?;
            match take(Stage::Compare, Some(s), "comparison.md", None, &mut gaps)? {
                Some(t) => md.push_str(&t),
                None => md.push_str("_missing_\n"),
            }
        }

        md.push_str("\n## Named event clusters\n");
        for &s in &self.cfg.sentiments {
            let _ = writeln!(md, "\n### {s}\n");
            take(Stage::Name, Some(s), "events.csv", Some(format!("{s}_events.csv")), &mut gaps)?;
            match take(Stage::Name, Some(s), "events.md", None, &mut gaps)? {
                Some(t) => md.push_str(&t),
                None => md.push_str("_missing_\n"),
            }
        }

        if !gaps.is_empty() {
            md.push_str("\n## Gaps\n\nThese artifacts were missing when the report was built:\n\n");
            for g in &gaps {
                let _ = writeln!(md, "- {g}");
            }
        }
        let report_p = dir.join("report.md");
        write_atomic(&report_p, md.as_bytes())?;
        outputs.push(report_p);
        Ok(StageIo { inputs, outputs })
    }
}
