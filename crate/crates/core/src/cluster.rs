//! Clustering of refined embeddings: k-means with silhouette-driven k
//! selection, purity, and the baseline algorithms used in the comparison
//! table (affinity propagation, spectral, average-linkage agglomerative,
//! NMF).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{NormalizedAdjacency, SimilarityGraph};
use crate::linalg;
use crate::vectorize::SparseDocTermMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub algorithm: String,
    pub inertia: Option<f64>,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
}

impl ClusterAssignment {
    /// Relabels to `0..k` by first appearance, which drops empty clusters.
    pub fn from_labels(labels: &[usize], algorithm: &str) -> Self {
        let mut map = HashMap::new();
        let labels: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        ClusterAssignment {
            k: map.len(),
            labels,
            algorithm: algorithm.to_string(),
            inertia: None,
            seed: None,
            notes: Vec::new(),
        }
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, l)| **l == cluster).map(|(i, _)| i).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

fn euclid(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// One k-means run: its assignment, centroids and inertia after every Lloyd
/// iteration.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia_trace: Vec<f64>,
}

impl KMeansRun {
    pub fn inertia(&self) -> f64 {
        *self.inertia_trace.last().unwrap_or(&f64::INFINITY)
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    pub best: KMeansRun,
    pub restart_inertias: Vec<f64>,
}

fn plus_plus_seeding(z: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = z.nrows();
    let mut centers = Array2::zeros((k, z.ncols()));
    let first = rng.gen_range(0..n);
    centers.row_mut(0).assign(&z.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(z.row(i), z.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > u {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).assign(&z.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), z.row(pick)));
        }
    }
    centers
}

fn lloyd(z: &Array2<f64>, mut centers: Array2<f64>, max_iter: usize) -> KMeansRun {
    let (n, dim) = z.dim();
    let k = centers.nrows();
    let assign = |centers: &Array2<f64>| -> (Vec<usize>, f64) {
        let best: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..k)
                    .map(|c| (c, sq_dist(z.row(i), centers.row(c))))
                    .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
            })
            .collect();
        let inertia = best.iter().map(|b| b.1).sum();
        (best.into_iter().map(|b| b.0).collect(), inertia)
    };
    let (mut labels, mut inertia) = assign(&centers);
    let mut trace = vec![inertia];
    for _ in 0..max_iter {
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums.row_mut(l).scaled_add(1.0, &z.row(i));
            counts[l] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let row = sums.row(c).mapv(|v| v / count as f64);
                centers.row_mut(c).assign(&row);
            }
        }
        let (next, next_inertia) = assign(&centers);
        debug_assert!(
            next_inertia <= inertia * (1.0 + 1e-12) + 1e-12,
            "k-means inertia increased: {inertia} -> {next_inertia}"
        );
        trace.push(next_inertia);
        inertia = next_inertia;
        if next == labels {
            break;
        }
        labels = next;
    }
    KMeansRun {
        labels,
        centroids: centers,
        inertia_trace: trace,
    }
}

/// k-means with distance-proportional seeding; best of `restarts` runs by
/// inertia. Restart `r` uses seed `seed + r`.
pub fn kmeans_detailed(z: &Array2<f64>, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::invalid("k-means needs k >= 2"));
    }
    if k > z.nrows() {
        return Err(Error::invalid(format!("k = {k} exceeds the {} rows", z.nrows())));
    }
    let runs: Vec<KMeansRun> = (0..restarts.max(1))
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let centers = plus_plus_seeding(z, k, &mut rng);
            lloyd(z, centers, 300)
        })
        .collect();
    let restart_inertias: Vec<f64> = runs.iter().map(KMeansRun::inertia).collect();
    let best_idx = restart_inertias
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v < restart_inertias[b] { i } else { b });
    let best = runs.into_iter().nth(best_idx).unwrap();
    let mut assignment = ClusterAssignment::from_labels(&best.labels, "kmeans");
    if assignment.k < k {
        assignment.notes.push(format!("{} empty clusters dropped", k - assignment.k));
    }
    assignment.inertia = Some(best.inertia());
    assignment.seed = Some(seed);
    Ok(KMeansResult {
        assignment,
        best,
        restart_inertias,
    })
}

pub fn kmeans(z: &Array2<f64>, k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    Ok(kmeans_detailed(z, k, seed, restarts)?.assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    pub values: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Euclidean silhouette. Members of singleton clusters score 0.
pub fn silhouette(z: &Array2<f64>, labels: &[usize]) -> Result<Silhouette> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let clusters = sizes.iter().filter(|&&s| s > 0).count();
    if clusters < 2 {
        return Err(Error::invalid("silhouette is undefined for fewer than two clusters"));
    }
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += euclid(z.row(i), z.row(j));
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = median(&values);
    Ok(Silhouette { values, mean, median })
}

#[derive(Debug, Clone)]
pub struct SilhouetteSweep {
    /// `(k, mean silhouette)` ascending in k.
    pub curve: Vec<(usize, f64)>,
    pub selected: usize,
    pub assignments: BTreeMap<usize, ClusterAssignment>,
}

/// Runs k-means for each k (seed `seed + k`) and picks the highest mean
/// silhouette; ties go to the smaller k.
pub fn sweep_k(z: &Array2<f64>, ks: &[usize], seed: u64, restarts: usize) -> Result<SilhouetteSweep> {
    if ks.is_empty() {
        return Err(Error::invalid("k range is empty"));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let results = ks
        .par_iter()
        .map(|&k| {
            let a = kmeans(z, k, seed.wrapping_add(k as u64), restarts)?;
            let s = silhouette(z, &a.labels)?;
            Ok((k, s.mean, a))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut selected = results[0].0;
    let mut best = f64::NEG_INFINITY;
    for (k, s, _) in &results {
        if *s > best {
            best = *s;
            selected = *k;
        }
    }
    Ok(SilhouetteSweep {
        curve: results.iter().map(|(k, s, _)| (*k, *s)).collect(),
        selected,
        assignments: results.into_iter().map(|(k, _, a)| (k, a)).collect(),
    })
}

/// `(1/n) Σ_clusters max_class |cluster ∩ class|`.
pub fn purity<T: Eq + Hash>(labels: &[usize], truth: &[T]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::invalid(format!("{} labels vs {} truth entries", labels.len(), truth.len())));
    }
    if labels.is_empty() {
        return Err(Error::invalid("purity of an empty labeling is undefined"));
    }
    let mut table: HashMap<usize, HashMap<&T, usize>> = HashMap::new();
    for (l, t) in labels.iter().zip(truth) {
        *table.entry(*l).or_default().entry(t).or_default() += 1;
    }
    let hits: usize = table.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityReport {
    pub converged: bool,
    pub iterations: usize,
    pub exemplars: Vec<usize>,
}

/// Affinity propagation on a square similarity matrix: damping 0.5,
/// preference = median off-diagonal similarity, at most 200 iterations,
/// converged once the exemplar set is unchanged for 15 iterations.
pub fn affinity_propagation(s: &Array2<f64>) -> Result<(ClusterAssignment, AffinityReport)> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::invalid("similarity matrix must be square"));
    }
    if n == 0 {
        return Err(Error::invalid("empty similarity matrix"));
    }
    for i in 0..n {
        for j in 0..i {
            if (s[[i, j]] - s[[j, i]]).abs() > 1e-9 * (1.0 + s[[i, j]].abs()) {
                return Err(Error::invalid("similarity matrix must be symmetric"));
            }
        }
    }
    if n == 1 {
        let mut a = ClusterAssignment::from_labels(&[0], "affinity_propagation");
        a.notes.push("single point is its own exemplar".into());
        return Ok((
            a,
            AffinityReport {
                converged: true,
                iterations: 0,
                exemplars: vec![0],
            },
        ));
    }
    const DAMPING: f64 = 0.5;
    const MAX_ITER: usize = 200;
    const STABLE_ITER: usize = 15;

    let off: Vec<f64> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| s[[i, j]]).collect();
    let preference = median(&off);
    let mut sim = s.clone();
    // Tiny index-dependent preference offsets break exact symmetry between
    // identical points without randomness.
    let scale = off.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    for i in 0..n {
        sim[[i, i]] = preference - 1e-12 * scale * i as f64;
    }

    let mut r = Array2::<f64>::zeros((n, n));
    let mut a = Array2::<f64>::zeros((n, n));
    let mut last: Vec<usize> = Vec::new();
    let mut stable = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        for i in 0..n {
            let mut first = (usize::MAX, f64::NEG_INFINITY);
            let mut second = f64::NEG_INFINITY;
            for k in 0..n {
                let v = a[[i, k]] + sim[[i, k]];
                if v > first.1 {
                    second = first.1;
                    first = (k, v);
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == first.0 { second } else { first.1 };
                let new = sim[[i, k]] - competitor;
                r[[i, k]] = DAMPING * r[[i, k]] + (1.0 - DAMPING) * new;
            }
        }
        for k in 0..n {
            let pos_sum: f64 = (0..n).filter(|&i| i != k).map(|i| r[[i, k]].max(0.0)).sum();
            for i in 0..n {
                let new = if i == k {
                    pos_sum
                } else {
                    (r[[k, k]] + pos_sum - r[[i, k]].max(0.0)).min(0.0)
                };
                a[[i, k]] = DAMPING * a[[i, k]] + (1.0 - DAMPING) * new;
            }
        }
        let exemplars: Vec<usize> = (0..n).filter(|&k| r[[k, k]] + a[[k, k]] > 0.0).collect();
        if exemplars == last && !exemplars.is_empty() {
            stable += 1;
            if stable >= STABLE_ITER {
                converged = true;
                break;
            }
        } else {
            stable = 0;
            last = exemplars;
        }
    }
    let exemplars = last;
    let mut notes = Vec::new();
    let labels: Vec<usize> = if exemplars.is_empty() {
        notes.push("no exemplars emerged; all points placed in one cluster".into());
        vec![0; n]
    } else {
        (0..n)
            .map(|i| {
                if let Ok(pos) = exemplars.binary_search(&i) {
                    pos
                } else {
                    exemplars
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |b, (c, &e)| if s[[i, e]] > b.1 { (c, s[[i, e]]) } else { b })
                        .0
                }
            })
            .collect()
    };
    if !converged {
        notes.push(format!("did not converge within {MAX_ITER} iterations"));
    }
    let mut assignment = ClusterAssignment::from_labels(&labels, "affinity_propagation");
    assignment.notes = notes;
    Ok((
        assignment,
        AffinityReport {
            converged,
            iterations,
            exemplars,
        },
    ))
}

/// Negative squared Euclidean distances, the usual affinity-propagation input.
pub fn negative_sq_distances(z: &Array2<f64>) -> Array2<f64> {
    let n = z.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| -sq_dist(z.row(i), z.row(j)))
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub assignment: ClusterAssignment,
    /// Eigenvalues of `L = I - Â`, ascending (all of them).
    pub eigenvalues: Vec<f64>,
    /// Row-normalized spectral coordinates, `n × k`.
    pub embedding: Array2<f64>,
}

/// Spectral clustering with `L = I - Â`: the `k` eigenvectors of smallest
/// eigenvalue, rows scaled to unit length, then k-means.
pub fn spectral_clustering(a: &NormalizedAdjacency, k: usize, seed: u64) -> Result<SpectralResult> {
    if k < 2 {
        return Err(Error::invalid("spectral clustering needs k >= 2"));
    }
    if k > a.n {
        return Err(Error::invalid(format!("k = {k} exceeds the {} nodes", a.n)));
    }
    let lap = Array2::<f64>::eye(a.n) - a.to_dense();
    let eig = linalg::jacobi_eigen(lap.view())?;
    let mut emb = eig.vectors.slice(ndarray::s![.., ..k]).to_owned();
    for mut row in emb.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    let mut assignment = kmeans(&emb, k, seed, 10)?;
    assignment.algorithm = "spectral".into();
    Ok(SpectralResult {
        assignment,
        eigenvalues: eig.values.to_vec(),
        embedding: emb,
    })
}

/// Builds the normalized adjacency of a dense similarity matrix
/// (negative entries clamped).
pub fn adjacency_from_similarity(s: &Array2<f64>) -> Result<NormalizedAdjacency> {
    let n = s.nrows();
    let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).filter_map(|(i, j)| {
        let w = s[[i, j]];
        (w != 0.0).then_some((i, j, w))
    });
    Ok(crate::graph::normalize_adjacency(&SimilarityGraph::from_edges(n, edges)?))
}

#[derive(Debug, Clone)]
pub struct Dendrogram {
    /// `(cluster a, cluster b, height)` in merge order; ids are the surviving
    /// slot (smallest original index in the cluster).
    pub merges: Vec<(usize, usize, f64)>,
}

pub fn cosine_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    1.0 - linalg::cosine(a.as_slice().unwrap_or(&a.to_vec()), b.as_slice().unwrap_or(&b.to_vec()))
}

/// Average-linkage agglomerative clustering on cosine distance, cut at `k`.
/// Equal linkage distances merge the lexicographically smallest pair first.
pub fn agglomerative(z: &Array2<f64>, k: usize) -> Result<(ClusterAssignment, Dendrogram)> {
    let n = z.nrows();
    if k < 1 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in [1, {n}]")));
    }
    let rows: Vec<Vec<f64>> = z.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 1.0 - linalg::cosine(&rows[i], &rows[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::new();
    let mut clusters = n;
    while clusters > k {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && d[i][j] < best.2 {
                    best = (i, j, d[i][j]);
                }
            }
        }
        let (i, j, h) = best;
        for m in 0..n {
            if active[m] && m != i && m != j {
                let v = (size[i] as f64 * d[i][m] + size[j] as f64 * d[j][m]) / (size[i] + size[j]) as f64;
                d[i][m] = v;
                d[m][i] = v;
            }
        }
        size[i] += size[j];
        active[j] = false;
        for o in owner.iter_mut() {
            if *o == j {
                *o = i;
            }
        }
        merges.push((i, j, h));
        clusters -= 1;
    }
    let mut a = ClusterAssignment::from_labels(&owner, "agglomerative");
    a.k = k.min(a.k);
    Ok((a, Dendrogram { merges }))
}

#[derive(Debug, Clone)]
pub struct NmfResult {
    pub assignment: ClusterAssignment,
    /// Squared Frobenius error after initialization and after every update.
    pub objective: Vec<f64>,
    pub zero_rows: Vec<usize>,
    pub clamped: usize,
}

/// Lee-Seung multiplicative updates (200 iterations) on the nonnegative part
/// of `x`; each row goes to the argmax of its document factor.
pub fn nmf_cluster(x: &SparseDocTermMatrix, k: usize, seed: u64) -> Result<NmfResult> {
    nmf_cluster_iters(x, k, seed, 200)
}

pub fn nmf_cluster_iters(x: &SparseDocTermMatrix, k: usize, seed: u64, iterations: usize) -> Result<NmfResult> {
    if k < 1 || k > x.n_rows.min(x.n_cols) {
        return Err(Error::invalid(format!("NMF rank {k} out of range for {}x{}", x.n_rows, x.n_cols)));
    }
    let (pos, clamped) = x.clamped_nonnegative();
    let v = pos.to_dense();
    let (n, m) = v.dim();
    let mean = v.mean().unwrap_or(0.0).max(1e-12);
    let scale = (mean / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((n, k), |_| rng.gen::<f64>() * scale + 1e-6);
    let mut h = Array2::from_shape_fn((k, m), |_| rng.gen::<f64>() * scale + 1e-6);
    const EPS: f64 = 1e-300;
    let objective_of = |w: &Array2<f64>, h: &Array2<f64>| {
        let r = &v - &w.dot(h);
        r.iter().map(|e| e * e).sum::<f64>()
    };
    let mut objective = vec![objective_of(&w, &h)];
    for _ in 0..iterations {
        let num = w.t().dot(&v);
        let den = w.t().dot(&w).dot(&h);
        h.zip_mut_with(&(num / (den + EPS)), |a, b| *a *= b);
        let num = v.dot(&h.t());
        let den = w.dot(&h.dot(&h.t()));
        w.zip_mut_with(&(num / (den + EPS)), |a, b| *a *= b);
        let obj = objective_of(&w, &h);
        debug_assert!(
            obj <= objective.last().unwrap() * (1.0 + 1e-9) + 1e-12,
            "NMF objective increased"
        );
        objective.push(obj);
    }
    let zero_rows: Vec<usize> = pos.rows.iter().enumerate().filter(|(_, r)| r.is_empty()).map(|(i, _)| i).collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if zero_rows.binary_search(&i).is_ok() {
                0
            } else {
                w.row(i).iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (c, &x)| if x > b.1 { (c, x) } else { b }).0
            }
        })
        .collect();
    let mut assignment = ClusterAssignment::from_labels(&labels, "nmf");
    assignment.seed = Some(seed);
    if !zero_rows.is_empty() {
        assignment.notes.push(format!("{} all-zero rows assigned to the first cluster", zero_rows.len()));
    }
    if clamped > 0 {
        assignment.notes.push(format!("{clamped} negative weights clamped to zero"));
    }
    Ok(NmfResult {
        assignment,
        objective,
        zero_rows,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub median_silhouette: Option<f64>,
    pub purity: Option<f64>,
    pub k: Option<usize>,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

pub const COMPARISON_ALGORITHMS: [&str; 5] = ["gnn_kmeans", "agglomerative", "affinity_propagation", "spectral", "nmf"];

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("algorithm,median_silhouette,purity,k,notes\n");
        let f = |v: Option<f64>| v.map(|x| crate::io::fmt_f64(x, 4)).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.algorithm,
                f(r.median_silhouette),
                f(r.purity),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                crate::io::csv_field(&r.notes)
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| crate::io::fmt_f64(x, 2)).unwrap_or_else(|| "n/a".into());
        let mut s = String::from("| Algorithm | Median silhouette | Purity | k | Notes |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                r.algorithm,
                f(r.median_silhouette),
                f(r.purity),
                r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
                r.notes
            );
        }
        s.push_str(
            "\nSilhouette is the median per-point value, computed for every row on the same refined embedding. \
             Purity is shown only when reference classes are supplied.\n",
        );
        s
    }
}

/// Runs the five algorithms and tabulates median silhouette (on `z`) and
/// purity. A failing algorithm yields a row marked failed.
pub fn compare_algorithms(
    z: &Array2<f64>,
    graph: &NormalizedAdjacency,
    tfidf: &SparseDocTermMatrix,
    truth: Option<&[usize]>,
    k: usize,
    seed: u64,
) -> ComparisonReport {
    let run = |name: &str| -> Result<ClusterAssignment> {
        match name {
            "gnn_kmeans" => kmeans(z, k, seed, 10),
            "agglomerative" => agglomerative(z, k).map(|r| r.0),
            "affinity_propagation" => affinity_propagation(&negative_sq_distances(z)).map(|r| r.0),
            "spectral" => spectral_clustering(graph, k, seed).map(|r| r.assignment),
            "nmf" => nmf_cluster(tfidf, k, seed).map(|r| r.assignment),
            other => Err(Error::invalid(format!("unknown algorithm {other}"))),
        }
    };
    let rows = COMPARISON_ALGORITHMS
        .par_iter()
        .map(|name| match run(name) {
            Ok(a) => {
                let mut notes = a.notes.clone();
                let sil = match silhouette(z, &a.labels) {
                    Ok(s) => Some(s.median),
                    Err(e) => {
                        notes.push(e.to_string());
                        None
                    }
                };
                let pur = truth.and_then(|t| purity(&a.labels, t).ok());
                ComparisonRow {
                    algorithm: name.to_string(),
                    median_silhouette: sil,
                    purity: pur,
                    k: Some(a.k),
                    notes: notes.join("; "),
                }
            }
            Err(e) => ComparisonRow {
                algorithm: name.to_string(),
                median_silhouette: None,
                purity: None,
                k: None,
                notes: format!("failed: {e}"),
            },
        })
        .collect();
    ComparisonReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn pairs() -> Array2<f64> {
        arr2(&[[0.0, 0.0], [0.0, 0.0], [10.0, 10.0], [10.0, 10.0]])
    }

    #[test]
    fn kmeans_identical_pairs() {
        let a = kmeans(&pairs(), 2, 3, 10).unwrap();
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[2], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[2]);
        assert_eq!(a.inertia, Some(0.0));
        assert!(kmeans(&pairs(), 5, 0, 1).is_err());
        assert!(kmeans(&pairs(), 1, 0, 1).is_err());
    }

    #[test]
    fn silhouette_edge_cases() {
        let s = silhouette(&pairs(), &[0, 0, 1, 1]).unwrap();
        assert!(s.values.iter().all(|v| *v == 1.0));
        let z = arr2(&[[0.0], [1.0], [5.0]]);
        let s = silhouette(&z, &[0, 0, 1]).unwrap();
        assert_eq!(s.values[2], 0.0);
        assert!(silhouette(&z, &[0, 0, 0]).is_err());
    }

    #[test]
    fn purity_hand_cases() {
        assert_eq!(purity(&[1, 1, 2, 2], &['x', 'x', 'x', 'y']).unwrap(), 0.75);
        assert_eq!(purity(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert!((purity(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap() - 0.25).abs() < 1e-15);
        assert!(purity(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn affinity_pairs_and_single() {
        let (a, rep) = affinity_propagation(&negative_sq_distances(&pairs())).unwrap();
        assert_eq!(rep.exemplars.len(), 2);
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[2], a.labels[3]);
        assert_ne!(a.labels[0], a.labels[2]);
        let (a, rep) = affinity_propagation(&arr2(&[[0.0]])).unwrap();
        assert_eq!(a.labels, vec![0]);
        assert_eq!(rep.exemplars, vec![0]);
    }

    #[test]
    fn agglomerative_k_equals_rows() {
        let z = arr2(&[[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]]);
        let (a, d) = agglomerative(&z, 3).unwrap();
        assert_eq!(a.k, 3);
        assert!(d.merges.is_empty());
        let (a, d) = agglomerative(&z, 1).unwrap();
        assert_eq!(a.k, 1);
        assert!(d.merges.windows(2).all(|w| w[0].2 <= w[1].2));
    }

    #[test]
    fn spectral_rejects_bad_k() {
        let g = SimilarityGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let a = crate::graph::normalize_adjacency(&g);
        assert!(spectral_clustering(&a, 1, 0).is_err());
        assert!(spectral_clustering(&a, 4, 0).is_err());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
