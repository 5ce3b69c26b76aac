//! Dense linear algebra used by the embedding and spectral code: a cyclic
//! Jacobi eigensolver, column orthonormalization and truncated
//! factorization by subspace iteration.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix. Eigenvalues ascending,
/// eigenvectors in the matching columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn jacobi_eigen(a: ArrayView2<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("eigen-decomposition needs a square matrix"));
    }
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    fix_signs(&mut vectors);
    Ok(SymmetricEigen { values, vectors })
}

/// Makes the largest-magnitude entry of every column positive.
pub fn fix_signs(m: &mut Array2<f64>) {
    for mut col in m.axis_iter_mut(Axis(1)) {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() + 1e-12 {
                best = x;
            }
        }
        if best < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
}

/// Orthonormalizes columns in place (Gram-Schmidt, two passes). Columns that
/// collapse numerically are replaced by fresh random directions.
pub fn orthonormalize_columns(m: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let (rows, cols) = m.dim();
    for j in 0..cols {
        let original = m.column(j).dot(&m.column(j)).sqrt();
        let mut attempts = 0;
        loop {
            for _pass in 0..2 {
                for i in 0..j {
                    let proj = m.column(i).dot(&m.column(j));
                    let ci = m.column(i).to_owned();
                    m.column_mut(j).scaled_add(-proj, &ci);
                }
            }
            let norm = m.column(j).dot(&m.column(j)).sqrt();
            if norm > 1e-10 * original.max(1e-300) && norm > 1e-150 {
                m.column_mut(j).mapv_inplace(|x| x / norm);
                break;
            }
            attempts += 1;
            assert!(attempts < 50 && j < rows, "cannot extend orthonormal basis");
            for i in 0..rows {
                m[[i, j]] = rng.gen::<f64>() - 0.5;
            }
        }
    }
}

/// Rank-`r` truncated factorization `X ≈ U Σ Vᵀ` by subspace iteration.
#[derive(Debug, Clone)]
pub struct TruncatedFactorization {
    /// Right singular vectors, `n_cols × r`, orthonormal columns.
    pub basis: Array2<f64>,
    /// Singular value estimates, descending.
    pub singular_values: Array1<f64>,
}

/// Products needed by subspace iteration, so sparse and dense inputs share it.
pub trait LinearOperator {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// `X · B` for `B` with `n_cols` rows.
    fn apply(&self, b: &Array2<f64>) -> Array2<f64>;
    /// `Xᵀ · B` for `B` with `n_rows` rows.
    fn apply_transpose(&self, b: &Array2<f64>) -> Array2<f64>;
}

impl LinearOperator for Array2<f64> {
    fn n_rows(&self) -> usize {
        self.nrows()
    }
    fn n_cols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, b: &Array2<f64>) -> Array2<f64> {
        self.dot(b)
    }
    fn apply_transpose(&self, b: &Array2<f64>) -> Array2<f64> {
        self.t().dot(b)
    }
}

impl LinearOperator for crate::vectorize::SparseDocTermMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }
    fn apply(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, b.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, w) in row {
                o.scaled_add(w, &b.row(j));
            }
        }
        out
    }
    fn apply_transpose(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_cols, b.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let bi = b.row(i);
            for &(j, w) in row {
                out.row_mut(j).scaled_add(w, &bi);
            }
        }
        out
    }
}

pub fn subspace_iteration<X: LinearOperator>(x: &X, rank: usize, iterations: usize, rng: &mut ChaCha8Rng) -> Result<TruncatedFactorization> {
    let (n, m) = (x.n_rows(), x.n_cols());
    if rank < 1 || rank > n.min(m) {
        return Err(Error::invalid(format!(
            "rank {rank} must lie in [1, {}] for a {n}x{m} matrix",
            n.min(m)
        )));
    }
    let mut v = Array2::from_shape_fn((m, rank), |_| rng.gen::<f64>() - 0.5);
    orthonormalize_columns(&mut v, rng);
    for _ in 0..iterations {
        let xv = x.apply(&v);
        v = x.apply_transpose(&xv);
        orthonormalize_columns(&mut v, rng);
    }
    // Rayleigh-Ritz: rotate the basis onto the singular directions.
    let xv = x.apply(&v);
    let gram = xv.t().dot(&xv);
    let eig = jacobi_eigen(gram.view())?;
    let mut basis = v.dot(&eig.vectors);
    let mut values: Vec<(f64, usize)> = eig.values.iter().copied().enumerate().map(|(i, l)| (l, i)).collect();
    values.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = values.iter().map(|v| v.1).collect();
    let mut sorted = Array2::zeros(basis.dim());
    for (dst, &src) in order.iter().enumerate() {
        sorted.column_mut(dst).assign(&basis.column(src));
    }
    basis = sorted;
    fix_signs(&mut basis);
    let singular_values = Array1::from_iter(values.iter().map(|(l, _)| l.max(0.0).sqrt()));
    Ok(TruncatedFactorization { basis, singular_values })
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn row_norms(m: &Array2<f64>) -> Vec<f64> {
    m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn jacobi_diagonalizes() {
        let a = ndarray::arr2(&[[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]]);
        let e = jacobi_eigen(a.view()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        assert!((e.values[2] - 5.0).abs() < 1e-12);
        for k in 0..3 {
            let v = e.vectors.column(k);
            let r = a.dot(&v) - &v * e.values[k];
            assert!(r.dot(&r).sqrt() < 1e-12);
        }
    }

    #[test]
    fn orthonormalize_handles_dependent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = ndarray::arr2(&[[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        orthonormalize_columns(&mut m, &mut rng);
        let g = m.t().dot(&m);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subspace_rank_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::<f64>::ones((3, 4));
        assert!(subspace_iteration(&x, 0, 5, &mut rng).is_err());
        assert!(subspace_iteration(&x, 4, 5, &mut rng).is_err());
        let f = subspace_iteration(&x, 1, 5, &mut rng).unwrap();
        assert!((f.singular_values[0] - 12f64.sqrt()).abs() < 1e-10);
    }
}
