//! Load the bundled mini corpus, clean and tokenize it, and tag each tweet
//! with the bundled valence lexicon.
//!
//! ```bash
//! cargo run -p stormlens --example clean_tweets
//! ```

use std::path::Path;

use stormlens::corpus::{self, CleaningConfig, ColumnMap, InputFormat, StopwordSet, Strictness};
use stormlens::emotion::{self, ValenceLexicon, WordRanking};

fn main() -> stormlens::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini_corpus.csv");
    let columns = ColumnMap {
        id_col: Some("tweet_id".into()),
        time_col: Some("created_at".into()),
        ..ColumnMap::default()
    };
    let mut report = corpus::load_corpus(&path, InputFormat::Csv, &columns, Strictness::Lenient)?;
    println!("{} rows read, {} records, {} skipped", report.rows_in, report.records.len(), report.skipped.len());
    for s in &report.skipped {
        println!("  skipped line {}: {}", s.line, s.reason);
    }

    let cfg = CleaningConfig::default();
    let stops = StopwordSet::english_with_domain();
    corpus::normalize_records(&mut report.records, &cfg, &stops);
    for r in report.records.iter().take(5) {
        println!("\n{}: {}", r.id, r.raw_text);
        println!("  clean:  {}", corpus::clean_text(&r.raw_text, &cfg));
        println!("  tokens: {:?}", r.tokens);
    }

    // The lexicon is keyed by surface words; stem it the same way as the tokens.
    let none = StopwordSet::empty();
    let lex = ValenceLexicon::bundled().normalized_with(|w| corpus::tokenize_and_normalize(w, &cfg, &none).into_iter().next());
    for r in report.records.iter_mut() {
        r.emotion = Some(emotion::lexicon_classify(r, &lex));
    }
    println!("\nemotion distribution:");
    for (label, count) in emotion::emotion_distribution(&report.records)? {
        println!("  {label:<9} {count}");
    }
    println!("\ntop words:");
    for (label, terms) in emotion::top_words_by_sentiment(&report.records, 8, WordRanking::Frequency)? {
        let words: Vec<&str> = terms.iter().map(|t| t.term.as_str()).collect();
        println!("  {label:<9} {}", words.join(", "));
    }
    Ok(())
}
