//! Cluster a few dozen storm tweets and name each cluster. With no argument
//! the names are built offline from distinctive terms; pass an endpoint URL
//! that accepts `{"prompt": ...}` and answers `{"text": ...}` to ask a model.
//!
//! ```bash
//! cargo run -p stormlens --example name_events
//! cargo run -p stormlens --example name_events -- http://localhost:8080/generate
//! ```

use ndarray::Array2;

use stormlens::cluster;
use stormlens::corpus::{self, CleaningConfig, StopwordSet, TweetRecord};
use stormlens::naming::{self, EndpointConfig, NamingCorpus, NamingOptions};
use stormlens::vectorize::{self, TfidfOptions, Vocabulary};

const TWEETS: &[&str] = &[
    "Water rising fast on Main Street, cars floating #flood",
    "Flood water in our living room now, street is a river",
    "Main street flooded again, avoid downtown",
    "Flooding on the interstate, water over the lanes",
    "Shelter at Lincoln school is open for evacuees",
    "Evacuees welcome at the high school shelter tonight",
    "The convention center shelter needs cots and blankets",
    "Shelter volunteers needed, bring blankets",
    "Power outage across the east side since midnight",
    "Still no power, outage map says tomorrow",
    "Power lines down, outage reported on 5th avenue",
    "Whole block without power, outage crews on the way",
];

fn main() -> stormlens::Result<()> {
    let cfg = CleaningConfig::default();
    let stops = StopwordSet::english_with_domain();
    let mut records: Vec<TweetRecord> = TWEETS.iter().enumerate().map(|(i, t)| TweetRecord::new(format!("t{i:02}"), *t)).collect();
    corpus::normalize_records(&mut records, &cfg, &stops);
    let docs: Vec<Vec<String>> = records.iter().map(|r| r.tokens.clone()).collect();
    let vocab = Vocabulary::build(&docs, 1, 1.0)?;
    let weights = vectorize::tfidf_matrix(&docs, &vocab, TfidfOptions::default());

    // Row-normalized TF-IDF doubles as the embedding here.
    let mut z: Array2<f64> = weights.to_dense();
    for mut r in z.rows_mut() {
        let norm = r.dot(&r).sqrt().max(1e-12);
        r.mapv_inplace(|v| v / norm);
    }
    let assignment = cluster::kmeans(&z, 3, 0, 10)?;

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let texts: Vec<String> = records.iter().map(|r| r.raw_text.clone()).collect();
    // Show stems as the most common word they came from.
    let surface = corpus::surface_forms(&records, &cfg, &stops);
    let terms: Vec<String> = vocab.terms().iter().map(|t| surface.get(t).cloned().unwrap_or_else(|| t.clone())).collect();
    let corpus = NamingCorpus {
        ids: &ids,
        texts: &texts,
        weights: &weights,
        terms: &terms,
    };
    let endpoint = std::env::args().nth(1).map(|url| EndpointConfig {
        url,
        ..EndpointConfig::default()
    });
    let opts = NamingOptions {
        n_terms: 5,
        n_tweets: 2,
        ..NamingOptions::default()
    };
    let named = naming::name_all_clusters(&assignment, &z, &corpus, endpoint.as_ref(), &opts)?;
    for n in &named {
        println!("cluster {} [{}]: {}", n.event.cluster, n.event.provenance.as_str(), n.event.name);
        println!("  terms:  {}", n.top_terms.join(", "));
        for t in &n.representative_tweets {
            println!("  tweet:  {t}");
        }
        if let Some(d) = &n.event.diagnostic {
            println!("  note:   {d}");
        }
    }
    println!("\n{}", naming::events_markdown(&named));
    Ok(())
}
