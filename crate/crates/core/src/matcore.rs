//! Dense symmetric-matrix algebra.
//!
//! Every matrix function goes through a full symmetric eigendecomposition
//! `m = V diag(λ) Vᵀ` and is evaluated as `V diag(f(λ)) Vᵀ`. Dimensions are
//! small (n ≤ 10), so one well-tested code path matters more than speed.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues above this (negative) threshold are treated as rounding noise
/// and clipped to zero by the PSD matrix functions.
pub const PSD_CLIP: f64 = -1e-10;

/// Relative tolerance used for `SpdMat`: every eigenvalue must exceed
/// `SPD_REL_TOL × spectral radius`.
pub const SPD_REL_TOL: f64 = 1e-10;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// A dense symmetric `n × n` matrix.
///
/// Construction symmetrizes the input through `(M + Mᵀ)/2`.
#[derive(Clone, PartialEq)]
pub struct SymMat(DMatrix<f64>);

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMat{:?}", self.to_row_major())
    }
}

impl SymMat {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::domain(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::domain("matrix dimension must be at least 1"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("matrix has non-finite entries"));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without validation. Callers guarantee a square, finite input.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMat((m + t) * 0.5)
    }

    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::domain(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(DMatrix::zeros(n, n))
    }

    pub fn scalar(n: usize, s: f64) -> Self {
        SymMat(DMatrix::identity(n, n) * s)
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMat(DMatrix::from_diagonal(&DVector::from_row_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scale(&self, s: f64) -> SymMat {
        SymMat(&self.0 * s)
    }

    /// `tr(self · other)` for two symmetric matrices.
    pub fn trace_product(&self, other: &SymMat) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    /// Symmetrized product `(AB + BA)/2`. Equals `AB` when the factors commute.
    pub fn sym_product(&self, other: &SymMat) -> SymMat {
        SymMat::symmetrized(&self.0 * &other.0)
    }

    /// Congruence `g · self · gᵀ`.
    pub fn congruence(&self, g: &DMatrix<f64>) -> SymMat {
        SymMat::symmetrized(g * &self.0 * g.transpose())
    }

    pub fn eigen(&self) -> Result<EigenSym> {
        eigen_sym(self)
    }

    pub fn apply(&self, f: MatFn) -> Result<SymMat> {
        fun_sym(self, f)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigen()?.values[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        let e = self.eigen()?;
        Ok(e.values[e.values.len() - 1])
    }

    pub fn in_cone(&self, cone: Cone, tol: f64) -> bool {
        cone_check(self, cone, tol)
    }

    pub fn det(&self) -> Result<f64> {
        Ok(self.eigen()?.values.iter().product())
    }

    /// `ln det` of a symmetric positive-definite matrix.
    pub fn ln_det(&self) -> Result<f64> {
        let e = self.eigen()?;
        if e.values[0] <= 0.0 {
            return Err(Error::domain(format!(
                "ln det needs a positive-definite matrix, min eigenvalue {:e}",
                e.values[0]
            )));
        }
        Ok(e.values.iter().map(|v| v.ln()).sum())
    }

    pub fn inverse(&self) -> Result<SymMat> {
        self.apply(MatFn::Pow(-1.0))
    }
}

impl Add for &SymMat {
    type Output = SymMat;
    fn add(self, rhs: &SymMat) -> SymMat {
        SymMat(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMat {
    type Output = SymMat;
    fn sub(self, rhs: &SymMat) -> SymMat {
        SymMat(&self.0 - &rhs.0)
    }
}

impl Neg for &SymMat {
    type Output = SymMat;
    fn neg(self) -> SymMat {
        SymMat(-&self.0)
    }
}

impl Mul<f64> for &SymMat {
    type Output = SymMat;
    fn mul(self, rhs: f64) -> SymMat {
        self.scale(rhs)
    }
}

impl Serialize for SymMat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        let n = (v.len() as f64).sqrt().round() as usize;
        SymMat::from_row_major(n, &v).map_err(serde::de::Error::custom)
    }
}

/// A symmetric matrix whose eigenvalues all exceed `1e-10 × spectral radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMat(SymMat);

impl SpdMat {
    pub fn new(m: SymMat) -> Result<Self> {
        let e = m.eigen()?;
        let radius = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let lo = e.values[0];
        if !(lo > SPD_REL_TOL * radius) || radius == 0.0 {
            return Err(Error::domain(format!(
                "matrix is not positive definite: min eigenvalue {lo:e}, spectral radius {radius:e}"
            )));
        }
        Ok(SpdMat(m))
    }

    pub fn identity(n: usize) -> Self {
        SpdMat(SymMat::identity(n))
    }

    pub fn as_sym(&self) -> &SymMat {
        &self.0
    }

    pub fn into_sym(self) -> SymMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

impl TryFrom<SymMat> for SpdMat {
    type Error = Error;
    fn try_from(m: SymMat) -> Result<Self> {
        SpdMat::new(m)
    }
}

impl std::ops::Deref for SpdMat {
    type Target = SymMat;
    fn deref(&self) -> &SymMat {
        &self.0
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored column-wise.
#[derive(Clone, Debug)]
pub struct EigenSym {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenSym {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn recompose(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        SymMat::symmetrized(scaled * self.vectors.transpose())
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub fn eigen_sym(m: &SymMat) -> Result<EigenSym> {
    let n = m.dim();
    if n == 1 {
        return Ok(EigenSym {
            values: vec![m.0[(0, 0)]],
            vectors: DMatrix::identity(1, 1),
        });
    }
    let eig = m
        .0
        .clone()
        .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::EigenNonConvergence {
            dim: n,
            frobenius: m.frobenius(),
            max_abs: m.0.amax(),
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSym { values, vectors })
}

/// Scalar functions lifted to symmetric matrices by [`fun_sym`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatFn {
    Sqrt,
    Exp,
    Pow(f64),
    Abs,
}

/// `V diag(f(λ)) Vᵀ`. Square roots and fractional powers require a PSD
/// argument; eigenvalues in `[-1e-10, 0)` are clipped to zero first.
pub fn fun_sym(m: &SymMat, f: MatFn) -> Result<SymMat> {
    let e = eigen_sym(m)?;
    let lo = e.values[0];
    let needs_psd = match f {
        MatFn::Sqrt => true,
        MatFn::Pow(p) => p.fract() != 0.0 || p < 0.0,
        MatFn::Exp | MatFn::Abs => false,
    };
    if needs_psd && lo < PSD_CLIP {
        return Err(Error::domain(format!(
            "{f:?} of a matrix with eigenvalue {lo:e} below {PSD_CLIP:e}"
        )));
    }
    if let MatFn::Pow(p) = f
        && p < 0.0
        && lo <= 0.0
    {
        return Err(Error::domain(format!(
            "negative power of a singular matrix (eigenvalue {lo:e})"
        )));
    }
    Ok(match f {
        MatFn::Sqrt => e.recompose(|l| l.max(0.0).sqrt()),
        MatFn::Exp => e.recompose(f64::exp),
        MatFn::Abs => e.recompose(f64::abs),
        MatFn::Pow(p) if p.fract() == 0.0 && p >= 0.0 => e.recompose(|l| l.powi(p as i32)),
        MatFn::Pow(p) => e.recompose(|l| l.max(0.0).powf(p)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cone {
    Psd,
    Nsd,
    Spd,
}

/// Cone membership by extreme eigenvalue: PSD `λmin ≥ -tol`, NSD
/// `λmax ≤ tol`, SPD `λmin > tol`.
pub fn cone_check(m: &SymMat, cone: Cone, tol: f64) -> bool {
    let Ok(e) = eigen_sym(m) else {
        return false;
    };
    let lo = e.values[0];
    let hi = e.values[e.values.len() - 1];
    match cone {
        Cone::Psd => lo >= -tol,
        Cone::Nsd => hi <= tol,
        Cone::Spd => lo > tol,
    }
}

/// `‖pq − qp‖_F ≤ tol (‖p‖_F ‖q‖_F + 1)`.
pub fn commutes(p: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64) -> bool {
    if p.shape() != q.shape() || p.nrows() != p.ncols() {
        return false;
    }
    commutator_norm(p, q) <= tol * (p.norm() * q.norm() + 1.0)
}

pub fn commutator_norm(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (p * q - q * p).norm()
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, 1e-300)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gram(g: &DMatrix<f64>) -> SymMat {
        SymMat::symmetrized(g.transpose() * g)
    }

    fn rot(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn identity_eigen() {
        let e = eigen_sym(&SymMat::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!(rel_frobenius(&vtv, &DMatrix::identity(3, 3)) < 1e-12);
    }

    #[test]
    fn diagonal_eigen_sorted() {
        let e = eigen_sym(&SymMat::from_diagonal(&[9.0, 4.0])).unwrap();
        assert_eq!(e.values, vec![4.0, 9.0]);
        for i in 0..2 {
            for j in 0..2 {
                let v = e.vectors[(i, j)].abs();
                assert!(v < 1e-14 || (v - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constructor_symmetrizes() {
        let m = SymMat::from_row_major(2, &[1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_eq!(m.to_row_major(), vec![1.0, 3.0, 3.0, 3.0]);
        assert!(SymMat::from_row_major(2, &[1.0, 2.0, 3.0]).is_err());
        assert!(SymMat::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn diagonal_sqrt_and_exp_of_zero() {
        let s = fun_sym(&SymMat::from_diagonal(&[4.0, 9.0]), MatFn::Sqrt).unwrap();
        assert!(rel_frobenius(s.matrix(), SymMat::from_diagonal(&[2.0, 3.0]).matrix()) < 1e-14);
        let e = fun_sym(&SymMat::zeros(3), MatFn::Exp).unwrap();
        assert_eq!(e, SymMat::identity(3));
    }

    #[test]
    fn sqrt_rejects_negative_eigenvalue() {
        let err = fun_sym(&SymMat::from_diagonal(&[1.0, -0.5]), MatFn::Sqrt).unwrap_err();
        assert!(err.to_string().contains("-5e-1"), "{err}");
        // rounding-scale negatives are clipped
        let s = fun_sym(&SymMat::from_diagonal(&[1.0, -1e-13]), MatFn::Sqrt).unwrap();
        assert_eq!(s.matrix()[(1, 1)], 0.0);
    }

    #[test]
    fn cone_examples() {
        assert!(cone_check(&SymMat::identity(2), Cone::Psd, 0.0));
        assert!(cone_check(&SymMat::scalar(2, -1.0), Cone::Nsd, 0.0));
        assert!(!cone_check(&SymMat::from_diagonal(&[1.0, -1.0]), Cone::Psd, 1e-12));
        assert!(!cone_check(&SymMat::zeros(2), Cone::Spd, 0.0));
    }

    #[test]
    fn commute_examples() {
        let d1 = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 2.0]));
        let d2 = DMatrix::from_diagonal(&DVector::from_row_slice(&[3.0, 4.0]));
        assert!(commutes(&d1, &d2, 1e-12));
        assert!(commutes(&DMatrix::identity(2, 2), &rot(0.3), 1e-12));
        // direct multiplication: [R, diag(1,2)] has off-diagonal entries ∓sin θ (2 − 1)
        let r = rot(std::f64::consts::FRAC_PI_4);
        let direct = &r * &d1 - &d1 * &r;
        assert!((direct[(0, 1)] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((direct[(1, 0)] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(!commutes(&r, &d1, 1e-9));
    }

    #[test]
    fn pow_and_inverse() {
        let m = SymMat::from_row_major(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let inv = m.inverse().unwrap();
        let prod = m.matrix() * inv.matrix();
        assert!(rel_frobenius(&prod, &DMatrix::identity(2, 2)) < 1e-13);
        let cube = m.apply(MatFn::Pow(3.0)).unwrap();
        let direct = m.matrix() * m.matrix() * m.matrix();
        assert!(rel_frobenius(cube.matrix(), &direct) < 1e-13);
        assert!(SymMat::zeros(2).inverse().is_err());
    }

    #[test]
    fn spd_wrapper() {
        assert!(SpdMat::new(SymMat::identity(2)).is_ok());
        assert!(SpdMat::new(SymMat::from_diagonal(&[1.0, 0.0])).is_err());
        assert!(SpdMat::new(SymMat::zeros(2)).is_err());
    }

    fn mat_strategy(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, n * n)
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
    }

    proptest! {
        #[test]
        fn gram_reconstruction(g in (1usize..6).prop_flat_map(mat_strategy)) {
            let m = gram(&g);
            let e = eigen_sym(&m).unwrap();
            prop_assert!(e.values.iter().all(|&v| v >= -1e-12));
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            let back = e.recompose(|l| l);
            let scale = m.frobenius().max(1.0);
            prop_assert!((back.matrix() - m.matrix()).norm() / scale < 1e-10);
            let n = m.dim();
            let vtv = e.vectors.transpose() * &e.vectors;
            prop_assert!((vtv - DMatrix::<f64>::identity(n, n)).norm() < 1e-10);
        }

        #[test]
        fn sqrt_squares_back(g in (1usize..6).prop_flat_map(mat_strategy)) {
            let n = g.nrows();
            let m = SymMat::symmetrized(g.transpose() * &g + DMatrix::<f64>::identity(n, n) * 0.1);
            let s = fun_sym(&m, MatFn::Sqrt).unwrap();
            prop_assert!(cone_check(&s, Cone::Psd, 0.0));
            let sq = s.matrix() * s.matrix();
            prop_assert!(rel_frobenius(&sq, m.matrix()) < 1e-9);
        }

        #[test]
        fn conjugation_invariance(g in mat_strategy(3), h in mat_strategy(3)) {
            let m = gram(&g);
            // orthogonal Q from the eigenvectors of another Gram matrix
            let q = eigen_sym(&gram(&h)).unwrap().vectors;
            let conj = m.congruence(&q);
            for f in [MatFn::Sqrt, MatFn::Exp] {
                let lhs = fun_sym(&conj, f).unwrap();
                let rhs = fun_sym(&m, f).unwrap().congruence(&q);
                let scale = rhs.frobenius().max(1.0);
                prop_assert!((lhs.matrix() - rhs.matrix()).norm() / scale < 1e-9);
            }
        }
    }
}
