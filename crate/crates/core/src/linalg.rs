//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

pub type C64 = Complex<f64>;

/// Determinant of a square complex matrix by Gaussian elimination with
/// partial pivoting. The input is consumed as scratch space.
pub fn complex_det(mut m: DMatrix<C64>) -> C64 {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "determinant of a non-square matrix");
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[(a, col)].norm().total_cmp(&m[(b, col)].norm()))
            .expect("non-empty pivot range");
        let pv = m[(pivot, col)];
        if pv.norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot != col {
            m.swap_rows(pivot, col);
            det = -det;
        }
        det *= pv;
        for row in col + 1..n {
            let factor = m[(row, col)] / pv;
            if factor.norm() == 0.0 {
                continue;
            }
            for k in col + 1..n {
                let upd = m[(col, k)] * factor;
                m[(row, k)] -= upd;
            }
        }
    }
    det
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// (λ_min, λ_max) of a symmetric matrix.
pub fn extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = symmetric_eigenvalues(m);
    (ev[0], ev[ev.len() - 1])
}

/// Unit eigenvector for the smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvector(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("non-empty matrix");
    (val, eig.eigenvectors.column(idx).iter().copied().collect())
}

pub fn max_abs_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Quadratic form `vᵀ M v`.
pub fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    debug_assert_eq!(m.nrows(), n);
    let mut acc = 0.0;
    for i in 0..n {
        if v[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
