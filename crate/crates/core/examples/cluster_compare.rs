//! Run every clustering algorithm on the same refined embedding and print
//! the comparison table, with purity against the planted labels.
//!
//! ```bash
//! cargo run --release -p stormlens --example cluster_compare
//! ```

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stormlens::cluster;
use stormlens::graph;
use stormlens::vectorize::{MatrixKind, SparseDocTermMatrix};

fn main() -> stormlens::Result<()> {
    let per = 25;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth: Vec<usize> = (0..2 * per).map(|i| usize::from(i >= per)).collect();

    // Nonnegative term weights: each block uses its own half of the vocabulary.
    let cols = 20;
    let rows: Vec<Vec<(usize, f64)>> = truth
        .iter()
        .map(|&b| {
            let mut w = vec![0.0; cols];
            for _ in 0..12 {
                w[b * cols / 2 + rng.gen_range(0..cols / 2)] += 1.0;
            }
            w.into_iter().enumerate().filter(|(_, v)| *v > 0.0).collect()
        })
        .collect();
    let tfidf = SparseDocTermMatrix {
        n_rows: 2 * per,
        n_cols: cols,
        rows,
        kind: MatrixKind::Tfidf,
    };

    // Embedding: the dense weights, normalized; graph: cosine 5-NN.
    let mut z: Array2<f64> = tfidf.to_dense();
    for mut r in z.rows_mut() {
        let norm = r.dot(&r).sqrt();
        r.mapv_inplace(|v| v / norm);
    }
    let (g, _) = graph::build_knn_graph(&z, 5)?;
    let a = graph::normalize_adjacency(&g);

    let sweep = cluster::sweep_k(&z, &[2, 3, 4, 5], 1, 10)?;
    for (k, s) in &sweep.curve {
        println!("k={k} mean silhouette {s:.3}");
    }
    println!("selected k = {}\n", sweep.selected);

    let report = cluster::compare_algorithms(&z, &a, &tfidf, Some(&truth), sweep.selected, 1);
    print!("{}", report.to_markdown());
    Ok(())
}
