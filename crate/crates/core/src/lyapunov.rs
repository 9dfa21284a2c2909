//! Discrete Lyapunov equation `X = M + F X Fᵀ`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{frob, symmetrize, Scalar};

/// Residual tolerance relative to `1 + ‖X‖_F`.
pub fn residual_tolerance<T: Scalar>() -> T {
    let floor = T::lit(1e-10);
    let scaled = T::machine_eps() * T::lit(1e5);
    if scaled > floor {
        scaled
    } else {
        floor
    }
}

/// `‖X - M - F X Fᵀ‖_F`.
pub fn residual<T: Scalar>(f: &DMatrix<T>, m: &DMatrix<T>, x: &DMatrix<T>) -> T {
    frob(&(x - m - f * x * f.transpose()))
}

/// Solves `X = M + F X Fᵀ` for Schur-stable `F`.
///
/// The primary route is a dense solve of the vectorized system
/// `(I - F ⊗ F) vec(X) = vec(M)` with one step of iterative refinement; if the
/// residual is still above tolerance the doubling iteration
/// `X ← X + F_k X F_kᵀ`, `F_k ← F_k²` is used instead.
pub fn solve_discrete_lyapunov<T: Scalar>(f: &DMatrix<T>, m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = f.nrows();
    if f.ncols() != n || m.shape() != (n, n) {
        return Err(Error::Shape(format!("lyapunov: F {:?}, M {:?}", f.shape(), m.shape())));
    }
    let tol = residual_tolerance::<T>();
    let mut best: Option<(DMatrix<T>, T)> = None;

    if let Some(x) = kronecker_solve(f, m) {
        let res = residual(f, m, &x);
        if res <= tol * (T::one() + frob(&x)) {
            return Ok(x);
        }
        best = Some((x, res));
    }

    let x = doubling(f, m);
    let res = residual(f, m, &x);
    if res.is_finite() && res <= tol * (T::one() + frob(&x)) {
        return Ok(x);
    }
    let res = match best {
        Some((_, r)) if r < res => r,
        _ => res,
    };
    Err(Error::Numerical { message: "discrete Lyapunov solve did not reach tolerance".into(), residual: res.as_f64() })
}

fn kronecker_solve<T: Scalar>(f: &DMatrix<T>, m: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = f.nrows();
    let n2 = n * n;
    // vec(F X Fᵀ) = (F ⊗ F) vec(X) with column-major vec.
    let op = DMatrix::<T>::identity(n2, n2) - f.kronecker(f);
    let lu = op.lu();
    let rhs = DMatrix::from_column_slice(n2, 1, m.as_slice());
    let mut v = lu.solve(&rhs)?;
    let mut x = symmetrize_if(&DMatrix::from_column_slice(n, n, v.as_slice()), m);
    // One refinement pass on the residual.
    let r = m + f * &x * f.transpose() - &x;
    let rv = DMatrix::from_column_slice(n2, 1, r.as_slice());
    if let Some(dv) = lu.solve(&rv) {
        v = DMatrix::from_column_slice(n2, 1, x.as_slice()) + dv;
        x = symmetrize_if(&DMatrix::from_column_slice(n, n, v.as_slice()), m);
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

fn symmetrize_if<T: Scalar>(x: &DMatrix<T>, m: &DMatrix<T>) -> DMatrix<T> {
    if m == &m.transpose() {
        symmetrize(x)
    } else {
        x.clone()
    }
}

fn doubling<T: Scalar>(f: &DMatrix<T>, m: &DMatrix<T>) -> DMatrix<T> {
    let mut x = m.clone();
    let mut fk = f.clone();
    for _ in 0..64 {
        let inc = &fk * &x * fk.transpose();
        let done = frob(&inc) <= T::machine_eps() * (T::one() + frob(&x));
        x += inc;
        if done {
            break;
        }
        fk = &fk * &fk;
    }
    symmetrize_if(&x, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_geometric_fixed_point() {
        let f = DMatrix::<f64>::from_element(1, 1, -0.5);
        let m = DMatrix::from_element(1, 1, 1.0);
        let x = solve_discrete_lyapunov(&f, &m).unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn doubling_agrees_with_kronecker() {
        let f = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, -0.1, 0.3, 0.4, 0.2, 0.0, -0.6]);
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 1.5]);
        let a = kronecker_solve(&f, &m).unwrap();
        let b = doubling(&f, &m);
        assert!(frob(&(a - b)) < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let f = DMatrix::<f64>::zeros(2, 2);
        let m = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(solve_discrete_lyapunov(&f, &m), Err(Error::Shape(_))));
    }
}
