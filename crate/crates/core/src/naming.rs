//! Event names for clusters: an HTTP JSON text-generation contract with a
//! deterministic term-based fallback.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::linalg;
use crate::vectorize::SparseDocTermMatrix;

pub const DEFAULT_TEMPLATE: &str =
    "Given these key terms: {terms} and example posts: {tweets}, produce a concise event name (max 8 words).";

pub const MAX_NAME_WORDS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NamingRequest {
    pub cluster: usize,
    /// Ranked, most distinctive first.
    pub terms: Vec<String>,
    pub tweets: Vec<String>,
    pub template: String,
}

impl NamingRequest {
    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::invalid(format!("cluster {} has no terms to name it by", self.cluster)));
        }
        validate_template(&self.template)
    }

    /// Substitutes `{terms}` and `{tweets}` with JSON arrays in a single pass,
    /// so placeholder-like text inside the inputs is never re-expanded and
    /// distinct inputs always give distinct prompts.
    pub fn render_prompt(&self) -> String {
        let terms = serde_json::to_string(&self.terms).expect("strings serialize");
        let tweets = serde_json::to_string(&self.tweets).expect("strings serialize");
        let mut out = String::with_capacity(self.template.len() + terms.len() + tweets.len());
        let mut rest = self.template.as_str();
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if let Some(after) = tail.strip_prefix("{terms}") {
                out.push_str(&terms);
                rest = after;
            } else if let Some(after) = tail.strip_prefix("{tweets}") {
                out.push_str(&tweets);
                rest = after;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }
}

pub fn validate_template(template: &str) -> Result<()> {
    let missing: Vec<&str> = ["{terms}", "{tweets}"].into_iter().filter(|p| !template.contains(p)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!("prompt template lacks {}", missing.join(" and "))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Llm,
    Fallback,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Llm => "llm",
            Provenance::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventName {
    pub cluster: usize,
    pub name: String,
    pub provenance: Provenance,
    /// Model output as received, when there was one.
    pub raw: Option<String>,
    /// Why the fallback was used, when it was.
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    #[default]
    Fallback,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub url: String,
    pub timeout_secs: f64,
    /// Optional `Name: value` header sent with every request.
    pub auth_header: Option<String>,
    pub policy: FailurePolicy,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: String::new(),
            timeout_secs: 30.0,
            auth_header: None,
            policy: FailurePolicy::Fallback,
        }
    }
}

/// First non-empty line of the response, surrounding quotes removed,
/// clamped to [`MAX_NAME_WORDS`] words.
pub fn normalize_name(text: &str) -> Option<String> {
    let line = text.trim().lines().next()?.trim();
    let line = line.trim_matches(|c| c == '"' || c == '\'' || c == '“' || c == '”').trim();
    let words: Vec<&str> = line.split_whitespace().take(MAX_NAME_WORDS).collect();
    if words.is_empty() {
        None
    } else {
        Some(words.join(" "))
    }
}

fn title_case(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Title-cased join of the first three request terms.
pub fn fallback_name(req: &NamingRequest) -> EventName {
    let name = req.terms.iter().take(3).map(|t| title_case(t)).collect::<Vec<_>>().join(" ");
    EventName {
        cluster: req.cluster,
        name: if name.trim().is_empty() {
            format!("Cluster {}", req.cluster)
        } else {
            name
        },
        provenance: Provenance::Fallback,
        raw: None,
        diagnostic: None,
    }
}

#[derive(Serialize)]
struct PromptBody<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionBody {
    text: String,
}

/// Outcome of one HTTP exchange, before the failure policy is applied.
fn request_name(prompt: &str, endpoint: &EndpointConfig) -> std::result::Result<(String, String), (String, Option<String>)> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(endpoint.timeout_secs.max(0.001)))
        .build()
        .map_err(|e| (format!("client setup failed: {e}"), None))?;
    let mut req = client.post(&endpoint.url).json(&PromptBody { prompt });
    if let Some(h) = &endpoint.auth_header {
        let (name, value) = h.split_once(':').ok_or_else(|| ("auth header must look like `Name: value`".to_string(), None))?;
        req = req.header(name.trim(), value.trim());
    }
    let resp = req.send().map_err(|e| (format!("request failed: {e}"), None))?;
    let status = resp.status();
    let body = resp.text().map_err(|e| (format!("reading response failed: {e}"), None))?;
    if !status.is_success() {
        return Err((format!("endpoint returned HTTP {status}"), Some(body)));
    }
    let parsed: CompletionBody =
        serde_json::from_str(&body).map_err(|e| (format!("malformed response body: {e}"), Some(body.clone())))?;
    match normalize_name(&parsed.text) {
        Some(name) => Ok((name, parsed.text)),
        None => Err(("response text is empty".into(), Some(parsed.text))),
    }
}

/// Asks the endpoint for a name. Failures follow the endpoint's policy:
/// fall back to [`fallback_name`] (keeping the diagnostic) or return an error.
pub fn llm_name(req: &NamingRequest, endpoint: &EndpointConfig) -> Result<EventName> {
    req.validate()?;
    match request_name(&req.render_prompt(), endpoint) {
        Ok((name, raw)) => Ok(EventName {
            cluster: req.cluster,
            name,
            provenance: Provenance::Llm,
            raw: Some(raw),
            diagnostic: None,
        }),
        Err((diag, raw)) => match endpoint.policy {
            FailurePolicy::Fail => Err(Error::Endpoint(format!("cluster {}: {diag}", req.cluster))),
            FailurePolicy::Fallback => {
                log::warn!("naming cluster {} fell back: {diag}", req.cluster);
                let mut e = fallback_name(req);
                e.raw = raw;
                e.diagnostic = Some(diag);
                Ok(e)
            }
        },
    }
}

/// The `m` members with highest cosine to the cluster centroid; ties by id.
/// Returns row indices.
pub fn select_representatives(
    z: &Array2<f64>,
    ids: &[String],
    assignment: &ClusterAssignment,
    cluster: usize,
    m: usize,
) -> Result<Vec<usize>> {
    let members = assignment.members(cluster);
    if members.is_empty() {
        return Err(Error::invalid(format!("cluster {cluster} is empty")));
    }
    if m > members.len() {
        log::warn!("cluster {cluster} has {} members; returning all instead of {m}", members.len());
    }
    let mut centroid = vec![0.0; z.ncols()];
    for &i in &members {
        for (c, v) in centroid.iter_mut().zip(z.row(i)) {
            *c += v;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
    let mut scored: Vec<(usize, f64)> = members
        .iter()
        .map(|&i| (i, linalg::cosine(&z.row(i).to_vec(), &centroid)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0])));
    Ok(scored.into_iter().take(m).map(|(i, _)| i).collect())
}

/// Columns ranked by cluster-mean weight minus corpus-mean weight, keeping
/// only terms that occur in the cluster. Ties go to the smaller column.
pub fn distinctive_terms(x: &SparseDocTermMatrix, members: &[usize], n: usize) -> Vec<(usize, f64)> {
    if members.is_empty() || x.n_rows == 0 {
        return Vec::new();
    }
    let mut corpus = vec![0.0; x.n_cols];
    for row in &x.rows {
        for &(j, w) in row {
            corpus[j] += w;
        }
    }
    let mut cluster = vec![0.0; x.n_cols];
    let mut present = vec![false; x.n_cols];
    for &i in members {
        for &(j, w) in &x.rows[i] {
            cluster[j] += w;
            present[j] = true;
        }
    }
    let nc = members.len() as f64;
    let nn = x.n_rows as f64;
    let mut scored: Vec<(usize, f64)> = (0..x.n_cols)
        .filter(|&j| present[j])
        .map(|j| (j, cluster[j] / nc - corpus[j] / nn))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NamingOptions {
    pub n_terms: usize,
    pub n_tweets: usize,
    pub template: String,
    /// Outstanding requests at once.
    pub concurrency: usize,
}

impl Default for NamingOptions {
    fn default() -> Self {
        NamingOptions {
            n_terms: 10,
            n_tweets: 5,
            template: DEFAULT_TEMPLATE.to_string(),
            concurrency: 4,
        }
    }
}

/// The corpus view naming needs: one row per clustered item.
pub struct NamingCorpus<'a> {
    pub ids: &'a [String],
    pub texts: &'a [String],
    /// Item-by-term weights used to rank distinctive terms.
    pub weights: &'a SparseDocTermMatrix,
    /// Display form of each weight column.
    pub terms: &'a [String],
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCluster {
    pub event: EventName,
    pub top_terms: Vec<String>,
    pub representative_ids: Vec<String>,
    pub representative_tweets: Vec<String>,
}

/// One request per cluster id, built from distinctive terms and the members
/// nearest the centroid.
pub fn build_requests(
    assignment: &ClusterAssignment,
    z: &Array2<f64>,
    corpus: &NamingCorpus,
    opts: &NamingOptions,
) -> Result<Vec<(NamingRequest, Vec<String>)>> {
    validate_template(&opts.template)?;
    if z.nrows() != corpus.ids.len() || corpus.weights.n_rows != corpus.ids.len() || corpus.texts.len() != corpus.ids.len() {
        return Err(Error::invalid("embedding, weights, ids and texts must have one row per item"));
    }
    (0..assignment.k)
        .map(|c| {
            let members = assignment.members(c);
            let terms: Vec<String> = distinctive_terms(corpus.weights, &members, opts.n_terms)
                .into_iter()
                .map(|(j, _)| corpus.terms[j].clone())
                .collect();
            let reps = select_representatives(z, corpus.ids, assignment, c, opts.n_tweets)?;
            Ok((
                NamingRequest {
                    cluster: c,
                    terms,
                    tweets: reps.iter().map(|&i| corpus.texts[i].clone()).collect(),
                    template: opts.template.clone(),
                },
                reps.iter().map(|&i| corpus.ids[i].clone()).collect(),
            ))
        })
        .collect()
}

/// Names every request with at most `concurrency` in flight; results come
/// back in request order. A request that cannot be named at all (no terms)
/// gets a placeholder fallback with the problem recorded. Under the fail
/// policy the first endpoint error (in cluster order) is returned instead.
pub fn name_requests(requests: &[NamingRequest], endpoint: Option<&EndpointConfig>, concurrency: usize) -> Result<Vec<EventName>> {
    let name_one = |req: &NamingRequest| -> Result<EventName> {
        if let Err(e) = req.validate() {
            let mut f = fallback_name(req);
            f.diagnostic = Some(e.to_string());
            return Ok(f);
        }
        match endpoint {
            Some(ep) => llm_name(req, ep),
            None => Ok(fallback_name(req)),
        }
    };
    let results: Mutex<Vec<Option<Result<EventName>>>> = Mutex::new((0..requests.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = concurrency.max(1).min(requests.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= requests.len() {
                    break;
                }
                let e = name_one(&requests[i]);
                results.lock().expect("no poisoned naming worker")[i] = Some(e);
            });
        }
    });
    let mut names = results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|e| e.expect("every slot filled"))
        .collect::<Result<Vec<EventName>>>()?;
    make_unique(&mut names);
    Ok(names)
}

/// Appends " (2)", " (3)", ... to repeated names, in cluster order.
pub fn make_unique(names: &mut [EventName]) {
    let mut seen = std::collections::HashSet::new();
    for e in names.iter_mut() {
        if seen.insert(e.name.clone()) {
            continue;
        }
        let mut n = 2;
        loop {
            let candidate = format!("{} ({n})", e.name);
            if seen.insert(candidate.clone()) {
                e.name = candidate;
                break;
            }
            n += 1;
        }
    }
}

/// Builds requests and names them; one entry per cluster, ordered by id.
pub fn name_all_clusters(
    assignment: &ClusterAssignment,
    z: &Array2<f64>,
    corpus: &NamingCorpus,
    endpoint: Option<&EndpointConfig>,
    opts: &NamingOptions,
) -> Result<Vec<NamedCluster>> {
    let built = build_requests(assignment, z, corpus, opts)?;
    let requests: Vec<NamingRequest> = built.iter().map(|(r, _)| r.clone()).collect();
    let names = name_requests(&requests, endpoint, opts.concurrency)?;
    Ok(built
        .into_iter()
        .zip(names)
        .map(|((req, ids), event)| NamedCluster {
            event,
            top_terms: req.terms,
            representative_ids: ids,
            representative_tweets: req.tweets,
        })
        .collect())
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace(['\n', '\r'], " ")
}

/// Markdown table `cluster | name | provenance | top_terms | representative_tweets`.
pub fn events_markdown(events: &[NamedCluster]) -> String {
    let mut s = String::from("| cluster | name | provenance | top_terms | representative_tweets |\n|---|---|---|---|---|\n");
    for e in events {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            e.event.cluster,
            md_cell(&e.event.name),
            e.event.provenance.as_str(),
            md_cell(&e.top_terms.join(", ")),
            md_cell(&e.representative_tweets.join(" / "))
        );
    }
    s
}

/// CSV with the same columns; lists are `;`-joined.
pub fn events_csv(events: &[NamedCluster]) -> String {
    let mut s = String::from("cluster,name,provenance,top_terms,representative_tweets\n");
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e.event.cluster,
            crate::io::csv_field(&e.event.name),
            e.event.provenance.as_str(),
            crate::io::csv_field(&e.top_terms.join(";")),
            crate::io::csv_field(&e.representative_ids.join(";"))
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(terms: &[&str]) -> NamingRequest {
        NamingRequest {
            cluster: 0,
            terms: terms.iter().map(|s| s.to_string()).collect(),
            tweets: vec!["a post".into()],
            template: DEFAULT_TEMPLATE.into(),
        }
    }

    #[test]
    fn fallback_rules() {
        assert_eq!(fallback_name(&req(&["flood", "rescue", "boat", "water"])).name, "Flood Rescue Boat");
        assert_eq!(fallback_name(&req(&["prayer"])).name, "Prayer");
    }

    #[test]
    fn clamp_and_first_line() {
        let long = (1..=30).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        assert_eq!(normalize_name(&long).unwrap(), "w1 w2 w3 w4 w5 w6 w7 w8");
        assert_eq!(normalize_name("  \"Relief Work\"\nsecond line").unwrap(), "Relief Work");
        assert!(normalize_name("   \n ").is_none());
    }

    #[test]
    fn prompt_is_single_pass() {
        let mut r = req(&["{tweets}"]);
        r.tweets = vec!["x".into()];
        let p = r.render_prompt();
        assert!(p.contains(r#"["{tweets}"]"#));
        assert!(p.contains(r#"["x"]"#));
        assert!(validate_template("no placeholders").is_err());
    }

    #[test]
    fn duplicate_names_get_suffixes() {
        let mk = |c: usize, n: &str| EventName {
            cluster: c,
            name: n.into(),
            provenance: Provenance::Fallback,
            raw: None,
            diagnostic: None,
        };
        let mut v = vec![mk(0, "A"), mk(1, "A"), mk(2, "A (2)"), mk(3, "A")];
        make_unique(&mut v);
        let names: Vec<&str> = v.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["A", "A (2)", "A (2) (2)", "A (3)"]);
    }

    #[test]
    fn representatives_tie_by_id() {
        let z = Array2::from_elem((3, 2), 1.0);
        let a = ClusterAssignment::from_labels(&[0, 0, 0], "t");
        let ids = vec!["c".to_string(), "a".to_string(), "b".to_string()];
        assert_eq!(select_representatives(&z, &ids, &a, 0, 2).unwrap(), vec![1, 2]);
        assert_eq!(select_representatives(&z, &ids, &a, 0, 9).unwrap().len(), 3);
    }
}
