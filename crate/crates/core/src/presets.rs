//! The four-state, two-input benchmark family with its cost and initial-state
//! distribution, used as the default experiment.

use nalgebra::{DMatrix, DVector};

use crate::linsys::{InitialStateSpec, Interval, UncertainFamily};
use crate::lqr::QuadraticCost;
use crate::scalar::Scalar;

fn mat<T: Scalar>(rows: usize, cols: usize, data: &[f64]) -> DMatrix<T> {
    DMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| T::lit(x)))
}

/// `δ, γ ∈ [-1, 1]²`; `A1`/`A2` are the lower/upper triangular matrices of
/// `0.1`s.
pub fn benchmark_family<T: Scalar>() -> UncertainFamily<T> {
    #[rustfmt::skip]
    let a0 = mat(4, 4, &[
        0.7, -0.3, 0.0,  0.1,
        0.5, -0.4, 0.3,  0.0,
        0.0,  0.4, 0.2, -0.1,
        0.2,  0.0, 0.4,  0.6,
    ]);
    let tenth = T::lit(0.1);
    let a1 = DMatrix::from_fn(4, 4, |i, j| if j <= i { tenth } else { T::zero() });
    let a2 = DMatrix::from_fn(4, 4, |i, j| if j >= i { tenth } else { T::zero() });
    #[rustfmt::skip]
    let b0 = mat(4, 2, &[
        0.3, 0.2,
        0.1, 0.5,
        0.4, 0.1,
        0.0, 0.1,
    ]);
    #[rustfmt::skip]
    let b1 = mat(4, 2, &[
        0.1, 0.0,
        0.0, 0.1,
        0.1, 0.0,
        0.0, 0.1,
    ]);
    #[rustfmt::skip]
    let b2 = mat(4, 2, &[
        0.0, 0.1,
        0.1, 0.0,
        0.0, 0.1,
        0.1, 0.0,
    ]);
    let unit = Interval { lo: -T::one(), hi: T::one() };
    UncertainFamily::new(a0, vec![a1, a2], b0, vec![b1, b2], vec![unit; 2], vec![unit; 2])
        .expect("benchmark family is well formed")
}

/// `x⁰ ~ unif(-10, 10)⁴`.
pub fn benchmark_initial_state<T: Scalar>() -> InitialStateSpec<T> {
    InitialStateSpec::symmetric_box(4, T::lit(10.0))
}

/// `Q = diag(1, 2, 3, 4)`, `R = diag(1, 2)`, `Σ₀ = (100/3) I`.
pub fn benchmark_cost<T: Scalar>() -> QuadraticCost<T> {
    let q = DMatrix::from_diagonal(&DVector::from_iterator(4, [1.0, 2.0, 3.0, 4.0].map(T::lit)));
    let r = DMatrix::from_diagonal(&DVector::from_iterator(2, [1.0, 2.0].map(T::lit)));
    let sigma0 = benchmark_initial_state::<T>()
        .second_moment()
        .expect("box second moment is positive definite");
    QuadraticCost::new(q, r, sigma0).expect("benchmark cost is valid")
}
