//! Small dense linear-algebra helpers shared by the model and scoring code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Cholesky factor of a symmetric positive-definite matrix, or `None` when
/// the matrix is not numerically SPD.
pub fn spd_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if !m.is_square() || m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(m.clone())?;
    if chol.l_dirty().diagonal().iter().all(|&d| d > 0.0 && d.is_finite()) {
        Some(chol)
    } else {
        None
    }
}

/// `log |M|` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `x' M⁻¹ x` from a Cholesky factor of `M`.
pub fn mahalanobis_sq(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let mut z = x.clone();
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut z)
        .then_some(())
        .expect("Cholesky factor has a positive diagonal");
    z.norm_squared()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Largest relative asymmetry `|m_ij - m_ji| / max|m|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs() / scale);
        }
    }
    worst
}

/// Quadratic form `w' M w`.
pub fn quad_form(m: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        let mut col = 0.0;
        for i in 0..m.nrows() {
            col += m[(i, j)] * w[i];
        }
        acc += col * w[j];
    }
    acc
}

pub fn is_unit(w: &DVector<f64>, tol: f64) -> bool {
    (w.norm() - 1.0).abs() <= tol
}
