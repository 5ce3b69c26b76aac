//! Synthetic data shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stormlens::graph::SimilarityGraph;
use stormlens::vectorize::{MatrixKind, SparseDocTermMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = r.gen::<f64>().max(1e-300);
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random token documents over `t0..t{n_terms}`.
pub fn random_corpus(r: &mut ChaCha8Rng, max_docs: usize, max_terms: usize) -> Vec<Vec<String>> {
    let n_docs = r.gen_range(1..=max_docs);
    let n_terms = r.gen_range(1..=max_terms);
    (0..n_docs)
        .map(|_| {
            let len = r.gen_range(1..=12);
            (0..len).map(|_| format!("t{}", r.gen_range(0..n_terms))).collect()
        })
        .collect()
}

/// Two-block stochastic block model; nodes `0..n/2` form block 0.
pub fn sbm(r: &mut ChaCha8Rng, n: usize, p_in: f64, p_out: f64) -> (SimilarityGraph, Vec<usize>) {
    let truth: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if truth[i] == truth[j] { p_in } else { p_out };
            if r.gen::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    (SimilarityGraph::from_edges(n, edges).unwrap(), truth)
}

/// Two Gaussian blobs of `per` points each around the given centers.
pub fn two_blobs(r: &mut ChaCha8Rng, per: usize, c0: &[f64], c1: &[f64], sd: f64) -> (Array2<f64>, Vec<usize>) {
    let d = c0.len();
    let mut x = Array2::zeros((2 * per, d));
    let mut truth = Vec::new();
    for i in 0..2 * per {
        let c = if i < per { c0 } else { c1 };
        truth.push(usize::from(i >= per));
        for j in 0..d {
            x[[i, j]] = c[j] + sd * gaussian(r);
        }
    }
    (x, truth)
}

/// Nonnegative two-block document-term counts: block 0 rows draw from
/// columns `0..cols/2`, block 1 from the rest.
pub fn two_block_counts(r: &mut ChaCha8Rng, per: usize, cols: usize) -> (SparseDocTermMatrix, Vec<usize>) {
    let half = cols / 2;
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for i in 0..2 * per {
        let block = usize::from(i >= per);
        let mut counts = vec![0.0; cols];
        for _ in 0..20 {
            let j = block * half + r.gen_range(0..half);
            counts[j] += 1.0;
        }
        rows.push(counts.iter().enumerate().filter(|(_, c)| **c > 0.0).map(|(j, c)| (j, *c)).collect());
        truth.push(block);
    }
    (
        SparseDocTermMatrix {
            n_rows: 2 * per,
            n_cols: cols,
            rows,
            kind: MatrixKind::Counts,
        },
        truth,
    )
}

/// Documents from `k` planted topics over disjoint vocabularies of
/// `words_per_topic` terms with geometric within-topic weights. Each
/// document takes `main_share` of its tokens from one topic and the rest
/// uniformly from the others. Returns token-id documents and each topic's
/// ten most probable word ids.
pub fn planted_topics(
    r: &mut ChaCha8Rng,
    k: usize,
    words_per_topic: usize,
    n_docs: usize,
    doc_len: usize,
    main_share: f64,
    decay: f64,
) -> (Vec<Vec<usize>>, Vec<BTreeSet<usize>>) {
    let weights: Vec<f64> = (0..words_per_topic).map(|i| decay.powi(i as i32)).collect();
    let word = WeightedIndex::new(&weights).unwrap();
    let docs = (0..n_docs)
        .map(|d| {
            let main = d % k;
            (0..doc_len)
                .map(|_| {
                    let t = if k == 1 || r.gen::<f64>() < main_share {
                        main
                    } else {
                        let o = r.gen_range(0..k - 1);
                        if o >= main {
                            o + 1
                        } else {
                            o
                        }
                    };
                    t * words_per_topic + word.sample(r)
                })
                .collect()
        })
        .collect();
    let tops = (0..k).map(|t| (0..10.min(words_per_topic)).map(|i| t * words_per_topic + i).collect()).collect();
    (docs, tops)
}

/// Euclidean silhouette straight from the definition; singletons score 0.
pub fn silhouette_oracle(x: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    let n = x.nrows();
    let dist = |i: usize, j: usize| -> f64 {
        x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    (0..n)
        .map(|i| {
            let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if own.is_empty() {
                return 0.0;
            }
            let a = own.iter().map(|&j| dist(i, j)).sum::<f64>() / own.len() as f64;
            let b = clusters
                .iter()
                .filter(|&&c| c != labels[i])
                .map(|&c| {
                    let m: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                    m.iter().map(|&j| dist(i, j)).sum::<f64>() / m.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect()
}

/// A one-thread HTTP stub. Every request body is recorded; the reply comes
/// from `respond(body) -> (status, body)`. Serves until `max_requests`.
pub struct StubServer {
    pub url: String,
    pub bodies: std::sync::Arc<std::sync::Mutex<Vec<String>>>,
    pub headers: std::sync::Arc<std::sync::Mutex<Vec<String>>>,
}

pub fn stub_server(max_requests: usize, respond: impl Fn(&str) -> (u16, String) + Send + 'static) -> StubServer {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let bodies = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    let headers = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    let (b, h) = (bodies.clone(), headers.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming().take(max_requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut head = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let body = String::from_utf8(body).unwrap();
            let (status, reply) = respond(&body);
            b.lock().unwrap().push(body);
            h.lock().unwrap().push(head);
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    StubServer { url, bodies, headers }
}

/// An address nothing listens on.
pub fn dead_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}/generate")
}
