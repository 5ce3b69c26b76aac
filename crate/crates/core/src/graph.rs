//! Document embeddings, the cosine k-NN similarity graph and a two-layer
//! graph-convolutional autoencoder that refines embeddings over it.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linalg::{self, LinearOperator};
use crate::vectorize::SparseDocTermMatrix;

const EMB_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    External,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub ids: Vec<String>,
    pub data: Array2<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, data: Array2<f64>, source: EmbeddingSource) -> Result<Self> {
        if ids.len() != data.nrows() {
            return Err(Error::invalid(format!("{} ids for {} embedding rows", ids.len(), data.nrows())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("embedding has non-finite entries".into()));
        }
        Ok(EmbeddingMatrix { ids, data, source })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// CSV `id,v0,v1,...` with a header row and round-trip float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("id");
        for j in 0..self.dim() {
            let _ = write!(s, ",v{j}");
        }
        s.push('\n');
        for (id, row) in self.ids.iter().zip(self.data.rows()) {
            s.push_str(&crate::io::csv_field(id));
            for x in row {
                let _ = write!(s, ",{x:?}");
            }
            s.push('\n');
        }
        write_atomic(path, s.as_bytes())
    }

    /// Headered little-endian f32 binary. Ids are not stored.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(12 + 4 * self.data.len());
        bytes.extend_from_slice(EMB_MAGIC);
        bytes.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for x in self.data.iter() {
            bytes.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        write_atomic(path, &bytes)
    }
}

/// Loads embeddings (CSV `id,v0,...` or `EMB1` binary) aligned to `ids`.
///
/// CSV rows are matched by id; binary rows are taken in order.
pub fn load_embeddings(path: &Path, ids: &[String]) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (file_ids, data) = if bytes.starts_with(EMB_MAGIC) {
        let data = parse_binary(path, &bytes)?;
        (None, data)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            line: 0,
            message: "embedding file is neither EMB1 binary nor UTF-8 CSV".into(),
        })?;
        let (file_ids, data) = parse_csv(path, &text)?;
        (Some(file_ids), data)
    };
    let data = match file_ids {
        None => {
            if data.nrows() != ids.len() {
                return Err(Error::invalid(format!(
                    "{} has {} rows but the corpus subset has {}",
                    path.display(),
                    data.nrows(),
                    ids.len()
                )));
            }
            data
        }
        Some(file_ids) => {
            let pos: HashMap<&str, usize> = file_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            let mut out = Array2::zeros((ids.len(), data.ncols()));
            for (r, id) in ids.iter().enumerate() {
                let i = *pos
                    .get(id.as_str())
                    .ok_or_else(|| Error::invalid(format!("id `{id}` has no row in {}", path.display())))?;
                out.row_mut(r).assign(&data.row(i));
            }
            out
        }
    };
    EmbeddingMatrix::new(ids.to_vec(), data, EmbeddingSource::External)
}

fn parse_binary(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    let bad = |m: &str| Error::Malformed {
        path: path.to_path_buf(),
        line: 0,
        message: m.to_string(),
    };
    if bytes.len() < 12 {
        return Err(bad("truncated EMB1 header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != rows * dim * 4 {
        return Err(bad("EMB1 payload length does not match rows x dim"));
    }
    let vals: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((rows, dim), vals).map_err(|e| bad(&e.to_string()))
}

fn parse_csv(path: &Path, text: &str) -> Result<(Vec<String>, Array2<f64>)> {
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or("").trim();
        if i == 0 && id == "id" {
            continue;
        }
        let row: Vec<f64> = fields
            .enumerate()
            .map(|(j, f)| {
                f.trim().parse::<f64>().map_err(|_| Error::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("field {} is not numeric: `{f}`", j + 1),
                })
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("row has {} values, expected {d}", row.len()),
                })
            }
            _ => {}
        }
        ids.push(id.trim_matches('"').to_string());
        vals.extend(row);
    }
    let dim = dim.unwrap_or(0);
    let data = Array2::from_shape_vec((ids.len(), dim), vals).expect("shape checked row by row");
    Ok((ids, data))
}

/// Rank-`rank` document coordinates of a TF-IDF matrix by subspace
/// iteration (20 iterations).
pub fn fallback_embeddings(ids: &[String], tfidf: &SparseDocTermMatrix, rank: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = linalg::subspace_iteration(tfidf, rank, 20, &mut rng)?;
    let coords = tfidf.apply(&f.basis);
    EmbeddingMatrix::new(ids.to_vec(), coords, EmbeddingSource::Fallback)
}

/// Projects onto the top `target_dim` principal axes of the centered matrix.
///
/// The projection is applied to the uncentered rows, so with
/// `target_dim == dim` the output is a pure rotation.
pub fn reduce_dimensions(emb: &EmbeddingMatrix, target_dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if target_dim < 1 {
        return Err(Error::invalid("target dimension must be >= 1"));
    }
    if target_dim > emb.dim() {
        return Err(Error::invalid(format!("target dimension {target_dim} exceeds current {}", emb.dim())));
    }
    let mean = emb.data.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(emb.dim()));
    let centered = &emb.data - &mean;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = if target_dim > emb.rows() {
        // More axes than samples: the centered span is exhausted, pad with an
        // orthonormal completion.
        let rank = emb.rows().min(emb.dim());
        let f = linalg::subspace_iteration(&centered, rank, 20, &mut rng)?;
        let mut b = Array2::zeros((emb.dim(), target_dim));
        b.slice_mut(ndarray::s![.., ..rank]).assign(&f.basis);
        for j in rank..target_dim {
            for i in 0..emb.dim() {
                b[[i, j]] = rng.gen::<f64>() - 0.5;
            }
        }
        linalg::orthonormalize_columns(&mut b, &mut rng);
        b
    } else {
        linalg::subspace_iteration(&centered, target_dim, 20, &mut rng)?.basis
    };
    EmbeddingMatrix::new(emb.ids.clone(), emb.data.dot(&basis), emb.source)
}

/// Undirected weighted graph; edges stored once with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub n_nodes: usize,
    pub k: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl SimilarityGraph {
    pub fn from_edges(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut map: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
        for (i, j, w) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::invalid(format!("edge ({i}, {j}) out of range")));
            }
            if i == j {
                continue;
            }
            if !w.is_finite() {
                return Err(Error::Numerical(format!("edge ({i}, {j}) has weight {w}")));
            }
            map.insert((i.min(j), i.max(j)), w);
        }
        Ok(SimilarityGraph {
            n_nodes,
            k: 0,
            edges: map.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
        })
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search_by(|e| (e.0, e.1).cmp(&key)).is_ok()
    }

    /// Edge list CSV `i,j,w`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = format!("i,j,w\n# nodes={} k={}\n", self.n_nodes, self.k);
        for (i, j, w) in &self.edges {
            let _ = writeln!(s, "{i},{j},{w:?}");
        }
        write_atomic(path, s.as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, m: &str| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: m.to_string(),
        };
        let mut lines = text.lines().enumerate().skip(1);
        let (_, meta) = lines.next().ok_or_else(|| bad(2, "missing metadata line"))?;
        let meta = meta.strip_prefix("# nodes=").ok_or_else(|| bad(2, "missing metadata line"))?;
        let (n, k) = meta.split_once(" k=").ok_or_else(|| bad(2, "bad metadata"))?;
        let n_nodes: usize = n.parse().map_err(|_| bad(2, "bad node count"))?;
        let k: usize = k.parse().map_err(|_| bad(2, "bad k"))?;
        let mut edges = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(i + 1, "expected i,j,w"));
            }
            let a = f[0].parse().map_err(|_| bad(i + 1, "bad i"))?;
            let b = f[1].parse().map_err(|_| bad(i + 1, "bad j"))?;
            let w = f[2].parse().map_err(|_| bad(i + 1, "bad w"))?;
            edges.push((a, b, w));
        }
        let mut g = Self::from_edges(n_nodes, edges)?;
        g.k = k;
        Ok(g)
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnnReport {
    /// Rows with zero norm; they get no outgoing edges.
    pub zero_rows: Vec<usize>,
}

/// Exact cosine k-NN graph, symmetrized by union. Neighbor ties go to the
/// index that follows the query node soonest in cyclic order.
pub fn build_knn_graph(emb: &Array2<f64>, k: usize) -> Result<(SimilarityGraph, KnnReport)> {
    let n = emb.nrows();
    if k < 1 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < {n}")));
    }
    let norms = linalg::row_norms(emb);
    let zero_rows: Vec<usize> = (0..n).filter(|&i| norms[i] == 0.0).collect();
    if !zero_rows.is_empty() {
        log::warn!("{} zero-norm embedding rows get no outgoing edges", zero_rows.len());
    }
    let unit: Array2<f64> = Array2::from_shape_fn(emb.dim(), |(i, j)| if norms[i] > 0.0 { emb[[i, j]] / norms[i] } else { 0.0 });
    let neighbor_lists: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if norms[i] == 0.0 {
                return Vec::new();
            }
            let ui = unit.row(i);
            let mut cands: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i && norms[j] > 0.0)
                .map(|j| (j, ui.dot(&unit.row(j)).clamp(-1.0, 1.0)))
                .collect();
            cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(((a.0 + n - i) % n).cmp(&((b.0 + n - i) % n))));
            cands.truncate(k);
            cands.into_iter().map(|(j, w)| (i, j, w)).collect()
        })
        .collect();
    let mut g = SimilarityGraph::from_edges(n, neighbor_lists.into_iter().flatten())?;
    g.k = k;
    Ok((g, KnnReport { zero_rows }))
}

/// `Â = D^{-1/2} (A + I) D^{-1/2}` in sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub n: usize,
    /// Per row `(column, value)` ascending, diagonal included.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Negative edge weights clamped to zero.
    pub clamped: usize,
}

impl NormalizedAdjacency {
    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// `Â · B`.
    pub fn mul(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, b.ncols()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(self.rows.par_iter())
            .for_each(|(mut o, r)| {
                for &(j, v) in r {
                    o.scaled_add(v, &b.row(j));
                }
            });
        out
    }

    /// Off-diagonal pairs `i < j` with a positive entry.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().filter(move |&&(j, v)| j > i && v > 0.0).map(move |&(j, _)| (i, j)))
            .collect()
    }
}

pub fn normalize_adjacency(g: &SimilarityGraph) -> NormalizedAdjacency {
    let n = g.n_nodes;
    let mut clamped = 0;
    let mut adj: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
    for &(i, j, w) in &g.edges {
        let w = if w < 0.0 {
            clamped += 1;
            0.0
        } else {
            w
        };
        if w > 0.0 {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().map(|e| e.1).sum::<f64>()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let rows = adj
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.sort_by_key(|e| e.0);
            r.into_iter().map(|(j, w)| (j, inv_sqrt[i] * w * inv_sqrt[j])).collect()
        })
        .collect();
    if clamped > 0 {
        log::info!("clamped {clamped} negative similarity edges to zero");
    }
    NormalizedAdjacency { n, rows, clamped }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaeConfig {
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Sampled non-edges per positive edge.
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        GaeConfig {
            hidden_dim: 32,
            out_dim: 16,
            step_size: 0.01,
            momentum: 0.9,
            epochs: 200,
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub config: GaeConfig,
}

impl GcnModel {
    /// Glorot-uniform weights from the config seed.
    pub fn init(in_dim: usize, cfg: &GaeConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut glorot = |r: usize, c: usize| {
            let lim = (6.0 / (r + c) as f64).sqrt();
            Array2::from_shape_fn((r, c), |_| rng.gen_range(-lim..=lim))
        };
        let w1 = glorot(in_dim, cfg.hidden_dim);
        let w2 = glorot(cfg.hidden_dim, cfg.out_dim);
        GcnModel { w1, w2, config: *cfg }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (name, w) in [("w1", &self.w1), ("w2", &self.w2)] {
            let _ = writeln!(s, "# {name} {}x{}", w.nrows(), w.ncols());
            for row in w.rows() {
                let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
                let _ = writeln!(s, "{}", line.join(","));
            }
        }
        write_atomic(path, s.as_bytes())
    }
}

/// `Z = Â · ReLU(Â X W1) · W2`.
pub fn gcn_forward(model: &GcnModel, a: &NormalizedAdjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.nrows() != a.n {
        return Err(Error::invalid(format!("{} feature rows for {} graph nodes", x.nrows(), a.n)));
    }
    if x.ncols() != model.w1.nrows() || model.w1.ncols() != model.w2.nrows() {
        return Err(Error::invalid("GCN weight shapes do not chain with the features"));
    }
    let h = a.mul(&x.dot(&model.w1)).mapv(|v| v.max(0.0));
    Ok(a.mul(&h).dot(&model.w2))
}

/// A scored node pair with its target (1 = edge, 0 = sampled non-edge).
pub type LabeledPair = (usize, usize, f64);

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log σ(s)` for target 1 and `-log(1 - σ(s))` for target 0, stably.
fn bce(score: f64, target: f64) -> f64 {
    // softplus(s) - target * s
    let softplus = if score > 0.0 { score + (-score).exp().ln_1p() } else { score.exp().ln_1p() };
    softplus - target * score
}

/// Mean binary cross-entropy of inner-product edge scores and its gradients
/// with respect to `W1` and `W2`.
pub fn loss_and_gradients(
    w1: &Array2<f64>,
    w2: &Array2<f64>,
    a: &NormalizedAdjacency,
    ax: &Array2<f64>,
    pairs: &[LabeledPair],
) -> (f64, Array2<f64>, Array2<f64>) {
    // ax = Â X, precomputed by the caller.
    let p = ax.dot(w1);
    let h = p.mapv(|v| v.max(0.0));
    let q = a.mul(&h);
    let z = q.dot(w2);
    let m = pairs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut dz = Array2::<f64>::zeros(z.dim());
    for &(i, j, y) in pairs {
        let s = z.row(i).dot(&z.row(j));
        loss += bce(s, y);
        let g = (sigmoid(s) - y) / m;
        let zi = z.row(i).to_owned();
        let zj = z.row(j).to_owned();
        dz.row_mut(i).scaled_add(g, &zj);
        dz.row_mut(j).scaled_add(g, &zi);
    }
    let gw2 = q.t().dot(&dz);
    let dq = dz.dot(&w2.t());
    // Â is symmetric, so Âᵀ dQ = Â dQ.
    let dh = a.mul(&dq);
    let dp = dh * &p.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let gw1 = ax.t().dot(&dp);
    (loss / m, gw1, gw2)
}

fn sample_negatives(n: usize, edges: &HashSet<(usize, usize)>, count: usize, rng: &mut ChaCha8Rng) -> Vec<LabeledPair> {
    let possible = n * (n - 1) / 2 - edges.len();
    let count = count.min(possible);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 100 * count + 100 {
        attempts += 1;
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j || edges.contains(&(i.min(j), i.max(j))) {
            continue;
        }
        out.push((i.min(j), i.max(j), 0.0));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss on a fixed evaluation pair set before the first update.
    pub initial_loss: f64,
    /// Loss on the same evaluation set after the last update.
    pub final_loss: f64,
    /// Per-epoch training loss (fresh negatives each epoch).
    pub history: Vec<f64>,
}

/// Trains the autoencoder with momentum gradient descent. Negatives are
/// re-drawn every epoch from the seeded generator.
pub fn gae_train(a: &NormalizedAdjacency, x: &Array2<f64>, cfg: &GaeConfig) -> Result<(GcnModel, TrainReport)> {
    if x.nrows() != a.n {
        return Err(Error::invalid(format!("{} feature rows for {} graph nodes", x.nrows(), a.n)));
    }
    let pos = a.edges();
    if pos.is_empty() {
        return Err(Error::invalid("autoencoder training needs a graph with at least one edge"));
    }
    let edge_set: HashSet<(usize, usize)> = pos.iter().copied().collect();
    let mut model = GcnModel::init(x.ncols(), cfg);
    let ax = a.mul(x);
    let n_neg = (pos.len() as f64 * cfg.negative_ratio).round() as usize;
    let positives: Vec<LabeledPair> = pos.iter().map(|&(i, j)| (i, j, 1.0)).collect();

    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_e7a1);
    let mut eval_pairs = positives.clone();
    eval_pairs.extend(sample_negatives(a.n, &edge_set, n_neg, &mut eval_rng));
    let initial_loss = loss_and_gradients(&model.w1, &model.w2, a, &ax, &eval_pairs).0;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut v1 = Array2::<f64>::zeros(model.w1.dim());
    let mut v2 = Array2::<f64>::zeros(model.w2.dim());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut pairs = positives.clone();
        pairs.extend(sample_negatives(a.n, &edge_set, n_neg, &mut rng));
        let (loss, g1, g2) = loss_and_gradients(&model.w1, &model.w2, a, &ax, &pairs);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "autoencoder loss became {loss} at epoch {epoch}; lower the step size or rescale features"
            )));
        }
        history.push(loss);
        v1 = v1 * cfg.momentum - g1 * cfg.step_size;
        v2 = v2 * cfg.momentum - g2 * cfg.step_size;
        model.w1 += &v1;
        model.w2 += &v2;
    }
    let final_loss = loss_and_gradients(&model.w1, &model.w2, a, &ax, &eval_pairs).0;
    if !final_loss.is_finite() {
        return Err(Error::Numerical("autoencoder loss is non-finite after training".into()));
    }
    Ok((
        model,
        TrainReport {
            initial_loss,
            final_loss,
            history,
        },
    ))
}

/// Largest-magnitude eigenvalue estimate by power iteration.
pub fn spectral_radius(a: &NormalizedAdjacency, iterations: usize) -> f64 {
    let mut v = Array2::from_elem((a.n, 1), 1.0 / (a.n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = a.mul(&v);
        let norm = linalg::frobenius(&w);
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w / norm;
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn adjacency_hand_cases() {
        let g = SimilarityGraph::from_edges(1, []).unwrap();
        assert_eq!(normalize_adjacency(&g).to_dense(), arr2(&[[1.0]]));
        let g = SimilarityGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let a = normalize_adjacency(&g).to_dense();
        for v in a.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let g = SimilarityGraph::from_edges(3, [(0, 1, -0.3), (1, 2, 0.5)]).unwrap();
        assert_eq!(normalize_adjacency(&g).clamped, 1);
    }

    #[test]
    fn knn_identical_points_make_triangle() {
        let x = arr2(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        let (g, _) = build_knn_graph(&x, 1).unwrap();
        // 0 -> 1, 1 -> 2, 2 -> 0
        assert_eq!(g.edges.iter().map(|e| (e.0, e.1)).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn knn_zero_rows_and_bounds() {
        let x = arr2(&[[1.0, 0.0], [0.0, 0.0], [0.5, 0.5]]);
        let (g, rep) = build_knn_graph(&x, 1).unwrap();
        assert_eq!(rep.zero_rows, vec![1]);
        assert!(g.edges.iter().all(|e| e.0 != 1 && e.1 != 1));
        assert!(build_knn_graph(&x, 3).is_err());
        assert!(build_knn_graph(&x, 0).is_err());
    }

    #[test]
    fn forward_identity_and_zero() {
        let g = SimilarityGraph::from_edges(1, []).unwrap();
        let a = normalize_adjacency(&g);
        let x = arr2(&[[0.5, 2.0]]);
        let cfg = GaeConfig {
            hidden_dim: 2,
            out_dim: 2,
            ..Default::default()
        };
        let mut m = GcnModel::init(2, &cfg);
        m.w1 = Array2::eye(2);
        m.w2 = Array2::eye(2);
        assert_eq!(gcn_forward(&m, &a, &x).unwrap(), x);
        m.w1.fill(0.0);
        assert!(gcn_forward(&m, &a, &x).unwrap().iter().all(|v| *v == 0.0));
        let bad = arr2(&[[1.0, 2.0, 3.0]]);
        assert!(gcn_forward(&m, &a, &bad).is_err());
    }

    #[test]
    fn zero_epochs_returns_init() {
        let g = SimilarityGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let a = normalize_adjacency(&g);
        let x = Array2::eye(3);
        let cfg = GaeConfig {
            epochs: 0,
            seed: 9,
            ..Default::default()
        };
        let (m, rep) = gae_train(&a, &x, &cfg).unwrap();
        assert_eq!(m, GcnModel::init(3, &cfg));
        assert_eq!(rep.initial_loss, rep.final_loss);
    }

    #[test]
    fn training_needs_edges() {
        let a = normalize_adjacency(&SimilarityGraph::from_edges(3, []).unwrap());
        assert!(gae_train(&a, &Array2::eye(3), &GaeConfig::default()).is_err());
    }

    #[test]
    fn embedding_csv_rejects_non_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "a,1.0,2.0\nb,1.0,oops\n").unwrap();
        let err = load_embeddings(&p, &["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
        fs::write(&p, "a,1.0,2.0\nb,1.0\n").unwrap();
        assert!(load_embeddings(&p, &["a".into(), "b".into()]).is_err());
        fs::write(&p, "a,1.0,2.0\n").unwrap();
        assert!(load_embeddings(&p, &["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn embedding_binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.emb");
        let ids = vec!["a".to_string(), "b".to_string()];
        let e = EmbeddingMatrix::new(ids.clone(), arr2(&[[1.0, -2.5], [0.25, 4.0]]), EmbeddingSource::Fallback).unwrap();
        e.write_binary(&p).unwrap();
        let back = load_embeddings(&p, &ids).unwrap();
        assert_eq!(back.data, e.data);
        assert_eq!(back.source, EmbeddingSource::External);
    }
}
