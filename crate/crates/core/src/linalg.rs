//! Dense Hermitian eigensolvers on `ndarray` matrices.

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

fn eigh_generic<T: ComplexField<RealField = f64> + Copy>(m: &Array2<T>) -> Result<(Array1<f64>, Array2<T>), String> {
    let (r, c) = m.dim();
    if r != c {
        return Err(format!("matrix is {r}x{c}, not square"));
    }
    let a = DMatrix::from_fn(r, r, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0).ok_or("eigensolver did not converge")?;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let w = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let v = Array2::from_shape_fn((r, r), |(i, j)| eig.eigenvectors[(i, order[j])]);
    if w.iter().any(|x| !x.is_finite()) {
        return Err("non-finite eigenvalue".into());
    }
    Ok((w, v))
}

/// Ascending eigenvalues and column eigenvectors of a real symmetric matrix.
pub fn eigh_real(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>), String> {
    eigh_generic(m)
}

/// Ascending eigenvalues and column eigenvectors of a Hermitian matrix.
pub fn eigh_complex(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>), String> {
    eigh_generic(m)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn eigvalsh(m: &Array2<C64>) -> Result<Array1<f64>, String> {
    let (r, c) = m.dim();
    if r != c {
        return Err(format!("matrix is {r}x{c}, not square"));
    }
    let a = DMatrix::from_fn(r, r, |i, j| m[[i, j]]);
    let mut w: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    w.sort_by(f64::total_cmp);
    Ok(Array1::from_vec(w))
}
