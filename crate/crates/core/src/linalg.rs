//! Thin helpers over `faer` for the dense and Kronecker-structured algebra.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive definite matrix.
pub struct SpdFactor {
    llt: Llt<f64>,
    n: usize,
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdFactor").field("n", &self.n).finish()
    }
}

impl SpdFactor {
    pub fn new(a: &Mat<f64>, what: &str) -> Result<Self> {
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::Factorization(format!("{what}: {e:?}")))?;
        Ok(Self { llt, n: a.nrows() })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(rhs.as_mut());
        (0..self.n).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        let mut rhs = b.clone();
        self.llt.solve_in_place(rhs.as_mut());
        rhs
    }

    /// Lower-triangular factor L with A = L Lᵀ.
    pub fn lower(&self) -> Mat<f64> {
        self.llt.L().to_owned()
    }
}

pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn quad_form(a: &Mat<f64>, x: &[f64]) -> f64 {
    dot(x, &mat_vec(a, x))
}

/// Coefficient vector in space-fastest layout (index = i_t·n_x + i_x)
/// viewed as an n_x × n_t matrix.
pub fn as_space_time(z: &[f64], n_x: usize, n_t: usize) -> Mat<f64> {
    debug_assert_eq!(z.len(), n_x * n_t);
    Mat::from_fn(n_x, n_t, |i, j| z[j * n_x + i])
}

pub fn flatten_space_time(m: &Mat<f64>) -> Vec<f64> {
    let (n_x, n_t) = (m.nrows(), m.ncols());
    let mut out = vec![0.0; n_x * n_t];
    for j in 0..n_t {
        for i in 0..n_x {
            out[j * n_x + i] = m[(i, j)];
        }
    }
    out
}

/// (A_t ⊗ B_x) z with space index fastest: returns vec(B_x Z A_tᵀ).
pub fn kron_apply(time: &Mat<f64>, space: &Mat<f64>, z: &[f64]) -> Vec<f64> {
    let zm = as_space_time(z, space.ncols(), time.ncols());
    let r = space * &zm * time.transpose();
    flatten_space_time(&r)
}

/// Dense A_t ⊗ B_x (space-fastest ordering).
pub fn kron_dense(time: &Mat<f64>, space: &Mat<f64>) -> Mat<f64> {
    let (rx, cx) = (space.nrows(), space.ncols());
    Mat::from_fn(time.nrows() * rx, time.ncols() * cx, |i, j| {
        time[(i / rx, j / cx)] * space[(i % rx, j % cx)]
    })
}

/// M K⁻¹ M for symmetric M and an SPD factor of K.
pub fn sandwich_inverse(m: &Mat<f64>, k: &SpdFactor) -> Mat<f64> {
    let kinv_m = k.solve_mat(m);
    let mut out = m * &kinv_m;
    symmetrize(&mut out);
    out
}

pub fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_apply_matches_dense() {
        let t = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64 + 0.5);
        let s = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { -1.0 });
        let z: Vec<f64> = (0..6).map(|k| (k as f64).sin()).collect();
        let fast = kron_apply(&t, &s, &z);
        let dense = mat_vec(&kron_dense(&t, &s), &z);
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 });
        let f = SpdFactor::new(&a, "test").unwrap();
        let x = f.solve(&[1.0, 2.0, 3.0]);
        let r = mat_vec(&a, &x);
        for (u, v) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-13);
        }
        let bad = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(SpdFactor::new(&bad, "bad").is_err());
    }
}
