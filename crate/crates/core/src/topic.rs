//! LDA by collapsed Gibbs sampling, UMass coherence and topic-count
//! selection.
//!
//! Documents are sequences of vocabulary indices. The sampler resamples
//! each token's topic from
//!
//! ```text
//! p(z_i = k | z_-i, w) ∝ (n_dk + α) · (n_kw + β) / (n_k + Vβ)
//! ```
//!
//! with token `i` removed from the counts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LdaParams {
    /// Symmetric priors `α = 50 / K`, `β = 0.01`.
    pub fn with_default_priors(n_topics: usize, iterations: usize, seed: u64) -> Self {
        LdaParams {
            n_topics,
            alpha: 50.0 / n_topics as f64,
            beta: 0.01,
            iterations,
            seed,
        }
    }
}

/// Sampler state. All count tables are a function of `z`.
#[derive(Debug, Clone)]
pub struct LdaModel {
    n_topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    /// `M × K`, row-major.
    n_dk: Vec<u32>,
    /// `V × K`, word-major for cache locality in the sampler.
    n_wk: Vec<u32>,
    n_k: Vec<u32>,
    rng: ChaCha8Rng,
    sweeps_done: usize,
}

fn validate(docs: &[Vec<usize>], vocab_size: usize, n_topics: usize, alpha: f64, beta: f64) -> Result<()> {
    if n_topics < 2 {
        return Err(Error::invalid("LDA needs at least 2 topics"));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid("Dirichlet priors must be positive"));
    }
    if docs.is_empty() {
        return Err(Error::invalid("LDA needs a nonempty corpus"));
    }
    for (d, doc) in docs.iter().enumerate() {
        if doc.is_empty() {
            return Err(Error::invalid(format!("document {d} is empty")));
        }
        if let Some(&w) = doc.iter().find(|&&w| w >= vocab_size) {
            return Err(Error::invalid(format!("document {d} has term index {w} >= vocabulary size {vocab_size}")));
        }
    }
    Ok(())
}

impl LdaModel {
    /// Random initial assignments drawn from the seeded generator.
    pub fn init(docs: Vec<Vec<usize>>, vocab_size: usize, params: &LdaParams) -> Result<Self> {
        validate(&docs, vocab_size, params.n_topics, params.alpha, params.beta)?;
        let total: usize = docs.iter().map(Vec::len).sum();
        if params.n_topics > total {
            log::warn!("K = {} exceeds the {} tokens in the corpus", params.n_topics, total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let z = docs
            .iter()
            .map(|d| d.iter().map(|_| rng.gen_range(0..params.n_topics)).collect())
            .collect();
        let mut model = Self::from_assignments(docs, z, vocab_size, params)?;
        model.rng = rng;
        Ok(model)
    }

    /// Rebuilds a model from explicit assignments.
    pub fn from_assignments(docs: Vec<Vec<usize>>, z: Vec<Vec<usize>>, vocab_size: usize, params: &LdaParams) -> Result<Self> {
        validate(&docs, vocab_size, params.n_topics, params.alpha, params.beta)?;
        if z.len() != docs.len() || z.iter().zip(&docs).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::invalid("assignment shape does not match the corpus"));
        }
        if z.iter().flatten().any(|&k| k >= params.n_topics) {
            return Err(Error::invalid("assignment refers to a topic >= K"));
        }
        let k = params.n_topics;
        let mut model = LdaModel {
            n_topics: k,
            vocab_size,
            alpha: params.alpha,
            beta: params.beta,
            seed: params.seed,
            n_dk: vec![0; docs.len() * k],
            n_wk: vec![0; vocab_size * k],
            n_k: vec![0; k],
            docs,
            z,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            sweeps_done: 0,
        };
        for (d, (doc, zs)) in model.docs.iter().zip(&model.z).enumerate() {
            for (&w, &t) in doc.iter().zip(zs) {
                model.n_dk[d * k + t] += 1;
                model.n_wk[w * k + t] += 1;
                model.n_k[t] += 1;
            }
        }
        Ok(model)
    }

    /// One full pass over every token.
    pub fn sweep(&mut self) {
        let k = self.n_topics;
        let vbeta = self.vocab_size as f64 * self.beta;
        let mut weights = vec![0.0f64; k];
        for d in 0..self.docs.len() {
            let ndk = &mut self.n_dk[d * k..(d + 1) * k];
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                let nwk = &mut self.n_wk[w * k..(w + 1) * k];
                ndk[old] -= 1;
                nwk[old] -= 1;
                self.n_k[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    let p = (ndk[t] as f64 + self.alpha) * (nwk[t] as f64 + self.beta) / (self.n_k[t] as f64 + vbeta);
                    total += p;
                    weights[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = weights.partition_point(|&c| c <= u).min(k - 1);
                ndk[new] += 1;
                nwk[new] += 1;
                self.n_k[new] += 1;
                self.z[d][i] = new;
            }
        }
        self.sweeps_done += 1;
    }

    /// Unnormalized conditional weights for token `i` of document `d`, with
    /// that token's current assignment removed from the counts.
    pub fn conditional_weights(&self, d: usize, i: usize) -> Vec<f64> {
        let k = self.n_topics;
        let w = self.docs[d][i];
        let cur = self.z[d][i];
        let vbeta = self.vocab_size as f64 * self.beta;
        (0..k)
            .map(|t| {
                let own = u32::from(t == cur) as f64;
                let ndk = self.n_dk[d * k + t] as f64 - own;
                let nwk = self.n_wk[w * k + t] as f64 - own;
                let nk = self.n_k[t] as f64 - own;
                (ndk + self.alpha) * (nwk + self.beta) / (nk + vbeta)
            })
            .collect()
    }

    pub fn n_topics(&self) -> usize {
        self.n_topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn docs(&self) -> &[Vec<usize>] {
        &self.docs
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.z
    }

    pub fn doc_topic_count(&self, d: usize, k: usize) -> u32 {
        self.n_dk[d * self.n_topics + k]
    }

    pub fn topic_word_count(&self, k: usize, w: usize) -> u32 {
        self.n_wk[w * self.n_topics + k]
    }

    pub fn topic_total(&self, k: usize) -> u32 {
        self.n_k[k]
    }

    /// `(n_dk, n_kw, n_k)` as dense tables.
    pub fn count_tables(&self) -> (Vec<Vec<u32>>, Vec<Vec<u32>>, Vec<u32>) {
        let k = self.n_topics;
        let ndk = self.n_dk.chunks(k).map(<[u32]>::to_vec).collect();
        let nkw = (0..k)
            .map(|t| (0..self.vocab_size).map(|w| self.n_wk[w * k + t]).collect())
            .collect();
        (ndk, nkw, self.n_k.clone())
    }

    /// `φ̂[k, w] = (n_kw + β) / (n_k + Vβ)`.
    pub fn topic_word(&self, k: usize, w: usize) -> f64 {
        (self.topic_word_count(k, w) as f64 + self.beta) / (self.n_k[k] as f64 + self.vocab_size as f64 * self.beta)
    }

    pub fn topic_word_distribution(&self, k: usize) -> Vec<f64> {
        (0..self.vocab_size).map(|w| self.topic_word(k, w)).collect()
    }

    /// Per-token perplexity of the training corpus under the point estimates.
    pub fn perplexity(&self) -> f64 {
        let k = self.n_topics;
        let phi: Vec<Vec<f64>> = (0..k).map(|t| self.topic_word_distribution(t)).collect();
        let mut ll = 0.0;
        let mut n = 0usize;
        for (d, doc) in self.docs.iter().enumerate() {
            let theta = self.doc_topic_distribution(d);
            for &w in doc {
                let p: f64 = (0..k).map(|t| theta[t] * phi[t][w]).sum();
                ll += p.ln();
                n += 1;
            }
        }
        (-ll / n as f64).exp()
    }

    /// `θ̂[d, k] = (n_dk + α) / (N_d + Kα)`.
    pub fn doc_topic_distribution(&self, d: usize) -> Vec<f64> {
        let k = self.n_topics;
        let nd = self.docs[d].len() as f64;
        (0..k)
            .map(|t| (self.n_dk[d * k + t] as f64 + self.alpha) / (nd + k as f64 * self.alpha))
            .collect()
    }
}

/// Initializes and runs `params.iterations` sweeps.
pub fn lda_fit(docs: Vec<Vec<usize>>, vocab_size: usize, params: &LdaParams) -> Result<LdaModel> {
    if params.iterations < 1 {
        return Err(Error::invalid("LDA needs at least one sweep"));
    }
    let mut model = LdaModel::init(docs, vocab_size, params)?;
    for _ in 0..params.iterations {
        model.sweep();
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicSummary {
    pub topic: usize,
    /// `(term index, φ̂)` in descending probability.
    pub terms: Vec<(usize, f64)>,
}

/// The `n` most probable terms of topic `k`; ties by term index.
pub fn topic_top_terms(model: &LdaModel, k: usize, n: usize) -> Result<TopicSummary> {
    if k >= model.n_topics {
        return Err(Error::invalid(format!("topic {k} out of range (K = {})", model.n_topics)));
    }
    if n < 1 {
        return Err(Error::invalid("requested zero top terms"));
    }
    if n > model.vocab_size {
        log::warn!("requested {n} top terms but the vocabulary has {}", model.vocab_size);
    }
    let mut terms: Vec<(usize, f64)> = model.topic_word_distribution(k).into_iter().enumerate().collect();
    terms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    terms.truncate(n);
    Ok(TopicSummary { topic: k, terms })
}

/// Document-occurrence index for coherence scoring.
#[derive(Debug, Clone)]
pub struct DocOccurrence {
    /// Sorted, deduplicated document ids per term.
    postings: Vec<Vec<u32>>,
}

impl DocOccurrence {
    pub fn new(docs: &[Vec<usize>], vocab_size: usize) -> Self {
        let mut postings = vec![Vec::new(); vocab_size];
        for (d, doc) in docs.iter().enumerate() {
            for &w in doc {
                let p: &mut Vec<u32> = &mut postings[w];
                if p.last() != Some(&(d as u32)) {
                    p.push(d as u32);
                }
            }
        }
        DocOccurrence { postings }
    }

    pub fn doc_count(&self, w: usize) -> usize {
        self.postings.get(w).map_or(0, Vec::len)
    }

    pub fn co_doc_count(&self, a: usize, b: usize) -> usize {
        let (pa, pb) = (&self.postings[a], &self.postings[b]);
        let (mut i, mut j, mut c) = (0, 0, 0);
        while i < pa.len() && j < pb.len() {
            match pa[i].cmp(&pb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    c += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        c
    }
}

/// UMass coherence of an ordered term list:
/// `Σ_{i≥2} Σ_{j<i} ln((D(w_i, w_j) + 1) / D(w_j))` with document counts `D`.
pub fn umass_coherence(terms: &[usize], occ: &DocOccurrence) -> Result<f64> {
    if terms.len() < 2 {
        return Err(Error::invalid("coherence needs at least two terms"));
    }
    let mut c = 0.0;
    for i in 1..terms.len() {
        for j in 0..i {
            let dj = occ.doc_count(terms[j]);
            if dj == 0 {
                return Err(Error::invalid(format!("term {} occurs in no document", terms[j])));
            }
            c += ((occ.co_doc_count(terms[i], terms[j]) as f64 + 1.0) / dj as f64).ln();
        }
    }
    Ok(c)
}

/// Mean UMass coherence over all topics of a fitted model.
pub fn mean_coherence(model: &LdaModel, occ: &DocOccurrence, top_n: usize) -> Result<f64> {
    let n = top_n.min(model.vocab_size());
    let mut total = 0.0;
    for k in 0..model.n_topics() {
        let top: Vec<usize> = topic_top_terms(model, k, n)?.terms.iter().map(|t| t.0).collect();
        total += umass_coherence(&top, occ)?;
    }
    Ok(total / model.n_topics() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    Elbow,
    /// Fewer than three points: best score.
    BestScore,
    Manual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    /// `(K, mean UMass)` ascending in K.
    pub curve: Vec<(usize, f64)>,
    pub top_n: usize,
    pub selected: Option<(usize, SelectionRule)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
    /// `None` means `50 / K`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub top_n: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            k_min: 20,
            k_max: 70,
            step: 5,
            alpha: None,
            beta: 0.01,
            iterations: 200,
            seed: 0,
            top_n: 10,
        }
    }
}

impl SweepParams {
    pub fn k_values(&self) -> Result<Vec<usize>> {
        if self.step < 1 {
            return Err(Error::invalid("sweep step must be >= 1"));
        }
        if self.k_min > self.k_max {
            return Err(Error::invalid("sweep range is empty"));
        }
        Ok((self.k_min..=self.k_max).step_by(self.step).collect())
    }

    /// Parameters for one K, with the seed derived as `seed + K`.
    pub fn lda_params(&self, k: usize) -> LdaParams {
        LdaParams {
            n_topics: k,
            alpha: self.alpha.unwrap_or(50.0 / k as f64),
            beta: self.beta,
            iterations: self.iterations,
            seed: self.seed.wrapping_add(k as u64),
        }
    }
}

/// Fits one model per K (in parallel) and records mean coherence.
pub fn coherence_sweep(docs: &[Vec<usize>], vocab_size: usize, params: &SweepParams) -> Result<CoherenceReport> {
    let ks = params.k_values()?;
    if params.top_n < 2 {
        return Err(Error::invalid("coherence top-N must be >= 2"));
    }
    let occ = DocOccurrence::new(docs, vocab_size);
    let curve = ks
        .par_iter()
        .map(|&k| {
            let model = lda_fit(docs.to_vec(), vocab_size, &params.lda_params(k))?;
            Ok((k, mean_coherence(&model, &occ, params.top_n)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceReport {
        curve,
        top_n: params.top_n,
        selected: None,
    })
}

/// Second differences of the curve at interior points: `(K, Δ²)`.
pub fn second_differences(curve: &[(usize, f64)]) -> Vec<(usize, f64)> {
    curve
        .windows(3)
        .map(|w| (w[1].0, w[2].1 - 2.0 * w[1].1 + w[0].1))
        .collect()
}

/// Picks the K where the improvement in coherence drops off most sharply,
/// i.e. the most negative second difference of the score curve. The two
/// endpoints count as bend zero, so a curve without a concave bend (e.g. a
/// straight line) selects the smallest K. Ties go to the smallest K. With
/// fewer than three points the best score wins.
pub fn elbow_select(report: &CoherenceReport, manual: Option<usize>) -> Result<(usize, SelectionRule)> {
    if report.curve.is_empty() {
        return Err(Error::invalid("coherence curve is empty"));
    }
    if let Some(k) = manual {
        return Ok((k, SelectionRule::Manual));
    }
    if report.curve.len() < 3 {
        log::warn!("elbow needs at least 3 curve points; using the best score");
        let best = report
            .curve
            .iter()
            .fold(None::<(usize, f64)>, |acc, &(k, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((k, s)),
            })
            .unwrap();
        return Ok((best.0, SelectionRule::BestScore));
    }
    let first = report.curve[0].0;
    let last = report.curve[report.curve.len() - 1].0;
    let mut best: Option<(usize, f64)> = Some((first, 0.0));
    for (k, d2) in second_differences(&report.curve).into_iter().chain([(last, 0.0)]) {
        let bend = -d2;
        if best.is_none_or(|(_, b)| bend > b) {
            best = Some((k, bend));
        }
    }
    Ok((best.unwrap().0, SelectionRule::Elbow))
}

/// Top terms for every topic, keyed by topic id.
pub fn all_topic_terms(model: &LdaModel, n: usize) -> Result<BTreeMap<usize, TopicSummary>> {
    (0..model.n_topics()).map(|k| Ok((k, topic_top_terms(model, k, n)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize) -> LdaParams {
        LdaParams {
            n_topics: k,
            alpha: 0.1,
            beta: 0.01,
            iterations: 5,
            seed: 7,
        }
    }

    #[test]
    fn single_token_conservation() {
        let m = lda_fit(vec![vec![0]], 1, &params(2)).unwrap();
        assert_eq!(m.topic_total(0) + m.topic_total(1), 1);
    }

    #[test]
    fn fit_preconditions() {
        assert!(lda_fit(vec![vec![0]], 1, &params(1)).is_err());
        assert!(lda_fit(vec![], 1, &params(2)).is_err());
        assert!(lda_fit(vec![vec![]], 1, &params(2)).is_err());
        let mut p = params(2);
        p.alpha = 0.0;
        assert!(lda_fit(vec![vec![0]], 1, &p).is_err());
        p = params(2);
        p.iterations = 0;
        assert!(lda_fit(vec![vec![0]], 1, &p).is_err());
    }

    #[test]
    fn theta_hand_value() {
        let p = LdaParams {
            n_topics: 2,
            alpha: 0.1,
            ..params(2)
        };
        let m = LdaModel::from_assignments(vec![vec![0, 1, 2, 3]], vec![vec![0; 4]], 4, &p).unwrap();
        let th = m.doc_topic_distribution(0);
        assert!((th[0] - 4.1 / 4.2).abs() < 1e-15);
        assert!((th[1] - 0.1 / 4.2).abs() < 1e-15);
    }

    #[test]
    fn topic_terms_all_mass() {
        let m = LdaModel::from_assignments(vec![vec![2, 2, 2, 0]], vec![vec![0, 0, 0, 1]], 3, &params(2)).unwrap();
        assert_eq!(topic_top_terms(&m, 0, 1).unwrap().terms[0].0, 2);
        assert_eq!(topic_top_terms(&m, 0, 10).unwrap().terms.len(), 3);
        assert!(topic_top_terms(&m, 2, 1).is_err());
    }

    #[test]
    fn umass_hand_case() {
        // docs {a,b}, {a}, {a}; terms (a, b)
        let occ = DocOccurrence::new(&[vec![0, 1], vec![0], vec![0]], 2);
        let c = umass_coherence(&[0, 1], &occ).unwrap();
        assert!((c - (2.0f64 / 3.0).ln()).abs() < 1e-15);
        let occ = DocOccurrence::new(&[vec![0, 1], vec![0, 1]], 3);
        assert!((umass_coherence(&[0, 1], &occ).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        // An unseen later term is smoothed by the +1; an unseen conditioning term is an error.
        assert!((umass_coherence(&[0, 2], &occ).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!(umass_coherence(&[2, 0], &occ).is_err());
        assert!(umass_coherence(&[0], &occ).is_err());
    }

    #[test]
    fn elbow_rules() {
        let rep = |curve: Vec<(usize, f64)>| CoherenceReport {
            curve,
            top_n: 10,
            selected: None,
        };
        // Rising steeply up to 20, then flat.
        let knee: Vec<_> = (10..=40).step_by(5).map(|k| (k, if k <= 20 { k as f64 - 20.0 } else { 0.0 })).collect();
        assert_eq!(elbow_select(&rep(knee.clone()), None).unwrap(), (20, SelectionRule::Elbow));
        // Flat up to 20, then falling: improvement stops at 20 as well.
        let drop: Vec<_> = (10..=40).step_by(5).map(|k| (k, if k <= 20 { -1.0 } else { -1.0 - (k as f64 - 20.0) })).collect();
        assert_eq!(elbow_select(&rep(drop), None).unwrap().0, 20);
        let linear: Vec<_> = (10..=40).step_by(5).map(|k| (k, k as f64 * 0.3)).collect();
        assert_eq!(elbow_select(&rep(linear), None).unwrap().0, 10);
        assert_eq!(elbow_select(&rep(vec![(20, -3.0)]), None).unwrap(), (20, SelectionRule::BestScore));
        assert_eq!(elbow_select(&rep(vec![(20, -3.0), (25, -2.0)]), None).unwrap().0, 25);
        assert_eq!(elbow_select(&rep(knee), Some(35)).unwrap(), (35, SelectionRule::Manual));
    }

    #[test]
    fn sweep_k_values() {
        let p = SweepParams::default();
        assert_eq!(p.k_values().unwrap().len(), 11);
        let bad = SweepParams { step: 0, ..p };
        assert!(bad.k_values().is_err());
    }
}
