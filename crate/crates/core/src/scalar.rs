//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::{DMatrix, RealField};

/// Real floating-point type the LQR machinery is generic over.
///
/// Blanket-implemented for any nalgebra `RealField` that is `Copy`, which in
/// practice means `f32` and `f64`. Literal constants go through [`Scalar::lit`]
/// so routines never hard-code a concrete float type.
pub trait Scalar: RealField + Copy {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    /// Lossy conversion back to `f64`, used for logging and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_subset_unchecked()
    }

    /// Machine epsilon of the underlying representation.
    fn machine_eps() -> Self {
        Self::default_epsilon()
    }
}

impl<T: RealField + Copy> Scalar for T {}

/// Squared Frobenius norm.
pub fn frob_sq<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

/// Frobenius norm.
pub fn frob<T: Scalar>(m: &DMatrix<T>) -> T {
    frob_sq(m).sqrt()
}

/// Frobenius inner product `tr(aᵀ b)`.
pub fn frob_dot<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn all_finite<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// `(m + mᵀ) / 2`.
pub(crate) fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Deterministic 64-bit mixer (SplitMix64 finalizer) used to derive per-task
/// seeds from a base seed and a list of indices.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
