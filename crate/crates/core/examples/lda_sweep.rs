//! Sweep the number of LDA topics over the mini corpus, score each fit by
//! mean UMass coherence, and pick K at the elbow of the curve.
//!
//! ```bash
//! cargo run --release -p stormlens --example lda_sweep
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use stormlens::corpus::{self, CleaningConfig, ColumnMap, InputFormat, StopwordSet, Strictness};
use stormlens::topic::{self, SweepParams};
use stormlens::vectorize::{self, Vocabulary};

fn main() -> stormlens::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini_corpus.csv");
    let columns = ColumnMap {
        id_col: Some("tweet_id".into()),
        ..ColumnMap::default()
    };
    let mut records = corpus::load_corpus(&path, InputFormat::Csv, &columns, Strictness::Lenient)?.records;
    corpus::normalize_records(&mut records, &CleaningConfig::default(), &StopwordSet::english_with_domain());
    let docs: Vec<Vec<String>> = records.into_iter().map(|r| r.tokens).filter(|t| !t.is_empty()).collect();
    let vocab = Vocabulary::build(&docs, 2, 1.0)?;
    let counts = vectorize::count_matrix(&docs, &vocab);
    let token_docs = counts.to_token_docs();
    println!("{} documents, {} terms", token_docs.len(), vocab.len());

    let params = SweepParams {
        k_min: 5,
        k_max: 30,
        step: 5,
        iterations: 150,
        seed: 7,
        ..SweepParams::default()
    };
    let report = topic::coherence_sweep(&token_docs, vocab.len(), &params)?;
    let bends: BTreeMap<usize, f64> = topic::second_differences(&report.curve).into_iter().collect();
    println!("\n   K  mean UMass   second diff");
    for (k, c) in &report.curve {
        let b = bends.get(k).map(|b| format!("{b:>11.4}")).unwrap_or_else(|| format!("{:>11}", "-"));
        println!("  {k:>2}  {c:>10.4}  {b}");
    }
    let (k, rule) = topic::elbow_select(&report, None)?;
    println!("\nselected K = {k} ({rule:?})");

    let model = topic::lda_fit(token_docs, vocab.len(), &params.lda_params(k))?;
    for (t, summary) in topic::all_topic_terms(&model, 6)? {
        let words: Vec<&str> = summary.terms.iter().map(|(w, _)| vocab.term(*w)).collect();
        println!("  topic {t:>2}: {}", words.join(" "));
    }
    Ok(())
}
