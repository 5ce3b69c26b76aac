//! Build a vocabulary and a sparse TF-IDF matrix over a handful of
//! tokenized tweets, and compare one entry with the closed-form value.
//!
//! ```bash
//! cargo run -p stormlens --example tfidf
//! ```

use stormlens::vectorize::{self, IdfMode, TfidfOptions, Vocabulary};

fn main() -> stormlens::Result<()> {
    let docs: Vec<Vec<&str>> = vec![
        vec!["water", "rising", "street", "water"],
        vec!["shelter", "open", "school"],
        vec!["water", "shelter", "need", "help"],
        vec!["power", "outage", "street"],
        vec!["rescue", "boat", "water", "street"],
    ];
    let vocab = Vocabulary::build(&docs, 1, 1.0)?;
    println!("{} terms over {} documents", vocab.len(), vocab.n_docs());
    for (i, t) in vocab.terms().iter().enumerate() {
        println!("  {i:>2} {t:<8} df={}", vocab.doc_freq(i));
    }

    let x = vectorize::tfidf_matrix(&docs, &vocab, TfidfOptions::default());
    println!("\nnonzeros: {} (negative weights appear for terms in most documents)", x.nnz());
    for (d, row) in x.rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|(j, v)| format!("{}={v:.3}", vocab.term(*j))).collect();
        println!("  doc {d}: {}", cells.join("  "));
    }

    let tf = vectorize::tf("water", &docs[0])?;
    let idf = vectorize::idf("water", &vocab)?;
    println!("\nwater in doc 0: tf={tf:.3} idf=ln(5/(1+3))={idf:.4} tfidf={:.4}", tf * idf);
    println!("smoothed idf for the same term: {:.4}", vectorize::idf_value(5, 3, IdfMode::Smoothed));
    Ok(())
}
