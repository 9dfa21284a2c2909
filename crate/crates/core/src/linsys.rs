//! Uncertain linear system families, their realizations, and closed-loop
//! simulation under static state feedback `u = -K x`.

use nalgebra::{DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lqr::QuadraticCost;
use crate::scalar::{all_finite, Scalar};

/// Margin below one that the closed-loop spectral radius must respect for a
/// policy to count as stabilizing.
pub const SCHUR_MARGIN: f64 = 1e-9;

/// Closed interval `[lo, hi]` bounding one uncertain parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Argument(format!(
                "interval [{}, {}] must be nonempty and bounded",
                lo.as_f64(),
                hi.as_f64()
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Affine family `A = A0 + Σ δ_i A_i`, `B = B0 + Σ γ_j B_j` with box-bounded
/// uncertain parameters `δ`, `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainFamily<T: Scalar> {
    a0: DMatrix<T>,
    a_terms: Vec<DMatrix<T>>,
    b0: DMatrix<T>,
    b_terms: Vec<DMatrix<T>>,
    delta_bounds: Vec<Interval<T>>,
    gamma_bounds: Vec<Interval<T>>,
}

impl<T: Scalar> UncertainFamily<T> {
    pub fn new(
        a0: DMatrix<T>,
        a_terms: Vec<DMatrix<T>>,
        b0: DMatrix<T>,
        b_terms: Vec<DMatrix<T>>,
        delta_bounds: Vec<Interval<T>>,
        gamma_bounds: Vec<Interval<T>>,
    ) -> Result<Self> {
        let n = a0.nrows();
        let m = b0.ncols();
        if n == 0 || m == 0 {
            return Err(Error::Shape("state and input dimensions must be positive".into()));
        }
        if a0.ncols() != n {
            return Err(Error::Shape(format!("A0 is {}x{}, expected square", a0.nrows(), a0.ncols())));
        }
        if b0.nrows() != n {
            return Err(Error::Shape(format!("B0 has {} rows, expected {n}", b0.nrows())));
        }
        for (i, a) in a_terms.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::Shape(format!("A_terms[{i}] is {:?}, expected ({n}, {n})", a.shape())));
            }
        }
        for (j, b) in b_terms.iter().enumerate() {
            if b.shape() != (n, m) {
                return Err(Error::Shape(format!("B_terms[{j}] is {:?}, expected ({n}, {m})", b.shape())));
            }
        }
        if delta_bounds.len() != a_terms.len() {
            return Err(Error::Shape(format!(
                "{} delta bounds for {} A terms",
                delta_bounds.len(),
                a_terms.len()
            )));
        }
        if gamma_bounds.len() != b_terms.len() {
            return Err(Error::Shape(format!(
                "{} gamma bounds for {} B terms",
                gamma_bounds.len(),
                b_terms.len()
            )));
        }
        for iv in delta_bounds.iter().chain(gamma_bounds.iter()) {
            Interval::new(iv.lo, iv.hi)?;
        }
        let all = std::iter::once(&a0)
            .chain(a_terms.iter())
            .chain(std::iter::once(&b0))
            .chain(b_terms.iter());
        if !all.into_iter().all(all_finite) {
            return Err(Error::Argument("family matrices must be finite".into()));
        }
        Ok(Self { a0, a_terms, b0, b_terms, delta_bounds, gamma_bounds })
    }

    pub fn n(&self) -> usize {
        self.a0.nrows()
    }

    pub fn m(&self) -> usize {
        self.b0.ncols()
    }

    pub fn a0(&self) -> &DMatrix<T> {
        &self.a0
    }

    pub fn b0(&self) -> &DMatrix<T> {
        &self.b0
    }

    pub fn a_terms(&self) -> &[DMatrix<T>] {
        &self.a_terms
    }

    pub fn b_terms(&self) -> &[DMatrix<T>] {
        &self.b_terms
    }

    pub fn delta_bounds(&self) -> &[Interval<T>] {
        &self.delta_bounds
    }

    pub fn gamma_bounds(&self) -> &[Interval<T>] {
        &self.gamma_bounds
    }

    /// The nominal realization `(A0, B0)`.
    pub fn nominal(&self) -> LinearSystem<T> {
        LinearSystem {
            a: self.a0.clone(),
            b: self.b0.clone(),
            id: 0,
            provenance: Some(Provenance {
                delta: vec![T::zero(); self.a_terms.len()],
                gamma: vec![T::zero(); self.b_terms.len()],
                seed: None,
            }),
        }
    }
}

/// Uncertain parameters and seed a realization was drawn with.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance<T> {
    pub delta: Vec<T>,
    pub gamma: Vec<T>,
    pub seed: Option<u64>,
}

/// One concrete realization `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub id: usize,
    pub provenance: Option<Provenance<T>>,
}

impl<T: Scalar> LinearSystem<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, id: usize) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Shape(format!("A is {:?}, expected nonempty square", a.shape())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Shape(format!("B is {:?}, expected ({n}, m>0)", b.shape())));
        }
        Ok(Self { a, b, id, provenance: None })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub(crate) fn check_gain(&self, k: &DMatrix<T>) -> Result<()> {
        if k.shape() != (self.m(), self.n()) {
            return Err(Error::Shape(format!(
                "gain is {:?}, expected ({}, {})",
                k.shape(),
                self.m(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// Where a policy came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyMeta {
    pub algorithm: String,
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
}

/// Static state feedback `u = -K x`, `K` being `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T: Scalar> {
    pub k: DMatrix<T>,
    pub meta: Option<PolicyMeta>,
}

impl<T: Scalar> Policy<T> {
    pub fn new(k: DMatrix<T>) -> Result<Self> {
        if !all_finite(&k) {
            return Err(Error::Argument("policy gain has non-finite entries".into()));
        }
        Ok(Self { k, meta: None })
    }

    pub fn with_meta(mut self, meta: PolicyMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self { k: DMatrix::zeros(m, n), meta: None }
    }
}

/// Distribution of the initial state `x⁰`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStateSpec<T: Scalar> {
    /// Independent coordinates, `x⁰_k ~ unif(low_k, high_k)`.
    UniformBox { low: Vec<T>, high: Vec<T> },
    /// Zero-mean with the given second moment `E[x⁰ x⁰ᵀ]`.
    FixedCovariance(DMatrix<T>),
}

impl<T: Scalar> InitialStateSpec<T> {
    pub fn symmetric_box(n: usize, half_width: T) -> Self {
        Self::UniformBox { low: vec![-half_width; n], high: vec![half_width; n] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformBox { low, .. } => low.len(),
            Self::FixedCovariance(s) => s.nrows(),
        }
    }

    /// `Σ₀ = E[x⁰ x⁰ᵀ]`, validated to be symmetric positive definite.
    pub fn second_moment(&self) -> Result<DMatrix<T>> {
        let s = match self {
            Self::UniformBox { low, high } => {
                if low.len() != high.len() || low.is_empty() {
                    return Err(Error::Shape("box bounds must be nonempty and of equal length".into()));
                }
                for (k, (&lo, &hi)) in low.iter().zip(high).enumerate() {
                    if !(lo < hi) {
                        return Err(Error::Argument(format!("box coordinate {k}: low must be < high")));
                    }
                }
                let n = low.len();
                let three = T::lit(3.0);
                let two = T::lit(2.0);
                DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        (low[i] * low[i] + low[i] * high[i] + high[i] * high[i]) / three
                    } else {
                        ((low[i] + high[i]) / two) * ((low[j] + high[j]) / two)
                    }
                })
            }
            Self::FixedCovariance(s) => s.clone(),
        };
        if s.nrows() != s.ncols() {
            return Err(Error::Shape("initial-state covariance must be square".into()));
        }
        if s.clone().cholesky().is_none() {
            return Err(Error::Argument("initial-state second moment must be positive definite".into()));
        }
        Ok(s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<T>> {
        match self {
            Self::UniformBox { low, high } => Ok(DVector::from_iterator(
                low.len(),
                low.iter().zip(high).map(|(&lo, &hi)| uniform(rng, lo, hi)),
            )),
            Self::FixedCovariance(s) => Ok(InitialStateSampler::new(s)?.sample(rng)),
        }
    }
}

/// Draws zero-mean initial states with a prescribed second moment `Σ₀`:
/// `x⁰ = L u` with `L Lᵀ = Σ₀` and `u_k ~ unif(-√3, √3)` (unit variance).
///
/// For `Σ₀ = (w²/3) I` this is exactly `unif(-w, w)ⁿ`.
#[derive(Debug, Clone)]
pub struct InitialStateSampler<T: Scalar> {
    factor: DMatrix<T>,
}

impl<T: Scalar> InitialStateSampler<T> {
    pub fn new(sigma0: &DMatrix<T>) -> Result<Self> {
        let chol = sigma0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Argument("Σ₀ must be positive definite".into()))?;
        Ok(Self { factor: chol.l() })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        let w = T::lit(3f64.sqrt());
        let u = DVector::from_fn(self.factor.nrows(), |_, _| uniform(rng, -w, w));
        &self.factor * u
    }
}

pub(crate) fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, lo: T, hi: T) -> T {
    if lo == hi {
        return lo;
    }
    T::lit(rng.random_range(lo.as_f64()..=hi.as_f64()))
}

/// `A = A0 + Σ δ_i A_i`, `B = B0 + Σ γ_j B_j`.
pub fn sample_realization<T: Scalar>(
    family: &UncertainFamily<T>,
    delta: &[T],
    gamma: &[T],
) -> Result<LinearSystem<T>> {
    if delta.len() != family.a_terms.len() {
        return Err(Error::Shape(format!("expected {} delta values, got {}", family.a_terms.len(), delta.len())));
    }
    if gamma.len() != family.b_terms.len() {
        return Err(Error::Shape(format!("expected {} gamma values, got {}", family.b_terms.len(), gamma.len())));
    }
    for (name, values, bounds) in [("delta", delta, &family.delta_bounds), ("gamma", gamma, &family.gamma_bounds)] {
        for (index, (&v, iv)) in values.iter().zip(bounds.iter()).enumerate() {
            if !iv.contains(v) {
                return Err(Error::Bounds {
                    name,
                    index,
                    value: v.as_f64(),
                    lo: iv.lo.as_f64(),
                    hi: iv.hi.as_f64(),
                });
            }
        }
    }
    let mut a = family.a0.clone();
    for (d, term) in delta.iter().zip(&family.a_terms) {
        a += term * *d;
    }
    let mut b = family.b0.clone();
    for (g, term) in gamma.iter().zip(&family.b_terms) {
        b += term * *g;
    }
    Ok(LinearSystem {
        a,
        b,
        id: 0,
        provenance: Some(Provenance { delta: delta.to_vec(), gamma: gamma.to_vec(), seed: None }),
    })
}

/// Draws `count` realizations with `δ`, `γ` i.i.d. uniform over their boxes.
/// Labels are `0..count`.
pub fn sample_realizations<T: Scalar>(
    family: &UncertainFamily<T>,
    count: usize,
    seed: u64,
) -> Result<Vec<LinearSystem<T>>> {
    if count == 0 {
        return Err(Error::Argument("realization count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let delta: Vec<T> = family.delta_bounds.iter().map(|iv| uniform(&mut rng, iv.lo, iv.hi)).collect();
            let gamma: Vec<T> = family.gamma_bounds.iter().map(|iv| uniform(&mut rng, iv.lo, iv.hi)).collect();
            let mut sys = sample_realization(family, &delta, &gamma)?;
            sys.id = id;
            if let Some(p) = sys.provenance.as_mut() {
                p.seed = Some(seed);
            }
            Ok(sys)
        })
        .collect()
}

/// `A - B K`.
pub fn closed_loop<T: Scalar>(system: &LinearSystem<T>, k: &DMatrix<T>) -> Result<DMatrix<T>> {
    system.check_gain(k)?;
    Ok(&system.a - &system.b * k)
}

/// Largest eigenvalue modulus. Returns `+∞` if the eigenvalue iteration fails
/// or the matrix has non-finite entries.
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    if !all_finite(m) {
        return T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
    }
    let eps = T::machine_eps();
    match Schur::try_new(m.clone(), eps, 10_000) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re * z.re + z.im * z.im).sqrt())
            .fold(T::zero(), |acc, x| if x > acc { x } else { acc }),
        None => T::max_value().unwrap_or_else(|| T::lit(f64::MAX)),
    }
}

pub fn closed_loop_spectral_radius<T: Scalar>(system: &LinearSystem<T>, k: &DMatrix<T>) -> Result<T> {
    Ok(spectral_radius(&closed_loop(system, k)?))
}

/// `true` iff `ρ(A - BK) < 1 - SCHUR_MARGIN`. Mismatched shapes count as
/// not stabilizing.
pub fn is_stabilizing<T: Scalar>(system: &LinearSystem<T>, k: &DMatrix<T>) -> bool {
    match closed_loop_spectral_radius(system, k) {
        Ok(rho) => rho < T::one() - T::lit(SCHUR_MARGIN),
        Err(_) => false,
    }
}

/// States, inputs and (optionally) stage costs of a closed-loop simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    /// `T + 1` states.
    pub states: Vec<DVector<T>>,
    /// `T` inputs.
    pub inputs: Vec<DVector<T>>,
    /// `T` stage costs `xᵀQx + uᵀRu`; empty when no cost was supplied.
    pub stage_costs: Vec<T>,
}

pub fn rollout<T: Scalar>(
    system: &LinearSystem<T>,
    k: &DMatrix<T>,
    x0: &DVector<T>,
    horizon: usize,
    cost: Option<&QuadraticCost<T>>,
) -> Result<Trajectory<T>> {
    if horizon == 0 {
        return Err(Error::Argument("rollout horizon must be at least 1".into()));
    }
    system.check_gain(k)?;
    if x0.len() != system.n() {
        return Err(Error::Shape(format!("x0 has length {}, expected {}", x0.len(), system.n())));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut stage_costs = Vec::with_capacity(if cost.is_some() { horizon } else { 0 });
    let mut x = x0.clone();
    for _ in 0..horizon {
        let u = -(k * &x);
        if let Some(c) = cost {
            stage_costs.push(x.dot(&(&c.q * &x)) + u.dot(&(&c.r * &u)));
        }
        let next = &system.a * &x + &system.b * &u;
        states.push(std::mem::replace(&mut x, next));
        inputs.push(u);
    }
    states.push(x);
    Ok(Trajectory { states, inputs, stage_costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn scalar_system(a: f64, b: f64) -> LinearSystem<f64> {
        LinearSystem::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b), 0).unwrap()
    }

    #[test]
    fn zero_uncertainty_gives_nominal() {
        let fam = presets::benchmark_family::<f64>();
        let sys = sample_realization(&fam, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(sys.a, *fam.a0());
        assert_eq!(sys.b, *fam.b0());
    }

    #[test]
    fn unit_delta_adds_lower_triangular_tenths() {
        let fam = presets::benchmark_family::<f64>();
        let sys = sample_realization(&fam, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let diff = &sys.a - fam.a0();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if j <= i { 0.1 } else { 0.0 };
                assert!((diff[(i, j)] - expected).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn out_of_bounds_parameter_is_rejected() {
        let fam = presets::benchmark_family::<f64>();
        let err = sample_realization(&fam, &[1.5, 0.0], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Bounds { name: "delta", index: 0, .. }));
        let err = sample_realization(&fam, &[0.0, 0.0], &[0.0, -1.01]).unwrap_err();
        assert!(matches!(err, Error::Bounds { name: "gamma", index: 1, .. }));
        assert!(matches!(sample_realization(&fam, &[0.0], &[0.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn family_rejects_bad_shapes() {
        let a0 = DMatrix::<f64>::identity(2, 2);
        let b0 = DMatrix::<f64>::zeros(2, 1);
        let bad = UncertainFamily::new(a0.clone(), vec![DMatrix::zeros(3, 3)], b0.clone(), vec![], vec![Interval { lo: -1.0, hi: 1.0 }], vec![]);
        assert!(matches!(bad, Err(Error::Shape(_))));
        let bad = UncertainFamily::new(a0, vec![], b0, vec![], vec![Interval { lo: 0.0, hi: 1.0 }], vec![]);
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let fam = presets::benchmark_family::<f64>();
        let a = sample_realizations(&fam, 4, 7).unwrap();
        let b = sample_realizations(&fam, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(sample_realizations(&fam, 1, 99).unwrap().len(), 1);
        assert!(sample_realizations(&fam, 0, 0).is_err());
    }

    #[test]
    fn closed_loop_examples() {
        let sys = LinearSystem::new(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2), 0).unwrap();
        let cl = closed_loop(&sys, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(cl, DMatrix::identity(2, 2) * 0.5);
        let s = scalar_system(0.0, 1.0);
        assert_eq!(closed_loop(&s, &DMatrix::from_element(1, 1, 0.5)).unwrap()[(0, 0)], -0.5);
        assert!(closed_loop(&s, &DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn stability_examples() {
        let stable = LinearSystem::new(DMatrix::identity(2, 2) * 0.5, DMatrix::identity(2, 2), 0).unwrap();
        assert!(is_stabilizing(&stable, &DMatrix::zeros(2, 2)));
        let marginal = LinearSystem::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5])),
            DMatrix::identity(2, 2),
            0,
        )
        .unwrap();
        assert!(!is_stabilizing(&marginal, &DMatrix::zeros(2, 2)));
    }

    #[test]
    fn rollout_examples() {
        let s = scalar_system(0.0, 1.0);
        let tr = rollout(&s, &DMatrix::zeros(1, 1), &DVector::from_element(1, 3.0), 2, None).unwrap();
        let xs: Vec<f64> = tr.states.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![3.0, 0.0, 0.0]);
        assert_eq!(tr.inputs.iter().map(|u| u[0]).collect::<Vec<_>>(), vec![0.0, 0.0]);

        let tr = rollout(&s, &DMatrix::from_element(1, 1, 0.5), &DVector::from_element(1, 1.0), 3, None).unwrap();
        let xs: Vec<f64> = tr.states.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![1.0, -0.5, 0.25, -0.125]);
        assert!(rollout(&s, &DMatrix::zeros(1, 1), &DVector::from_element(1, 1.0), 0, None).is_err());
    }

    #[test]
    fn box_second_moment_matches_uniform_variance() {
        let spec = InitialStateSpec::<f64>::symmetric_box(4, 10.0);
        let s = spec.second_moment().unwrap();
        for i in 0..4 {
            assert!((s[(i, i)] - 100.0 / 3.0).abs() < 1e-12);
            for j in 0..4 {
                if i != j {
                    assert_eq!(s[(i, j)], 0.0);
                }
            }
        }
        let offset = InitialStateSpec::<f64>::UniformBox { low: vec![0.0], high: vec![2.0] };
        // E[x²] for unif(0,2) = 4/3
        assert!((offset.second_moment().unwrap()[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_sampler_on_scaled_identity_stays_in_box() {
        let sigma0 = DMatrix::<f64>::identity(4, 4) * (100.0 / 3.0);
        let sampler = InitialStateSampler::new(&sigma0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = sampler.sample(&mut rng);
            assert!(x.iter().all(|v| v.abs() <= 10.0 + 1e-9));
        }
    }

    #[test]
    fn works_in_single_precision() {
        let fam = presets::benchmark_family::<f32>();
        let sys = sample_realizations(&fam, 2, 1).unwrap();
        assert!(sys.iter().all(|s| spectral_radius(&s.a).is_finite()));
    }
}
