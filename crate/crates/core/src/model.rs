//! Parameters of a Wishart law `WIS(n, α, a, b, x₀)` and the deterministic
//! quantities that identify its marginal at a fixed time.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::NoncentralWishartSpec;
use crate::error::{Error, Result};
use crate::matcore::{self, Cone, EigenSym, SpdMat, SymMat};

const COMMUTE_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// One violated admissibility condition, with the offending value.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    Dimension { what: String, expected: usize, got: usize },
    NonFinite { what: String },
    AlphaBelowBound { alpha: f64, n: usize },
    BNotSymmetric { asymmetry: f64 },
    BNotNegativeSemidefinite { max_eigenvalue: f64 },
    NotCommuting { residual: f64 },
    X0NotPsd { min_eigenvalue: f64 },
    ANotInvertible { det: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { what, expected, got } => {
                write!(f, "{what} has {got} entries, expected {expected}")
            }
            Violation::NonFinite { what } => write!(f, "{what} has non-finite entries"),
            Violation::AlphaBelowBound { alpha, n } => {
                write!(f, "alpha below n+1 (alpha = {alpha}, n + 1 = {})", n + 1)
            }
            Violation::BNotSymmetric { asymmetry } => {
                write!(f, "b is not symmetric (‖b − bᵀ‖ = {asymmetry:e})")
            }
            Violation::BNotNegativeSemidefinite { max_eigenvalue } => {
                write!(f, "b not negative semi-definite (max eigenvalue {max_eigenvalue:e})")
            }
            Violation::NotCommuting { residual } => {
                write!(f, "a,b do not commute (‖ab − ba‖ = {residual:e})")
            }
            Violation::X0NotPsd { min_eigenvalue } => {
                write!(f, "x0 not positive semi-definite (min eigenvalue {min_eigenvalue:e})")
            }
            Violation::ANotInvertible { det } => write!(f, "a not invertible (det a = {det:e})"),
        }
    }
}

/// Row-major serialized form of [`WishartParams`], as found in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub n: usize,
    pub alpha: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
}

/// Validated `WIS(n, α, a, b, x₀)` parameters with `α ≥ n + 1`, `b` symmetric
/// negative semi-definite commuting with the invertible `a`, and `x₀` PSD.
#[derive(Clone, Debug)]
pub struct WishartParams {
    alpha: f64,
    a: DMatrix<f64>,
    b: SymMat,
    x0: SymMat,
    ata: SymMat,
    ata_inv: SymMat,
    b_eigen: EigenSym,
}

impl WishartParams {
    pub fn new(alpha: f64, a: DMatrix<f64>, b: SymMat, x0: SymMat) -> Result<Self> {
        let n = b.dim();
        let raw = RawParams {
            n,
            alpha,
            a: (0..a.nrows())
                .flat_map(|i| (0..a.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)])
                .collect(),
            b: b.to_row_major(),
            x0: x0.to_row_major(),
        };
        validate(&raw).map_err(Error::InvalidParams)
    }

    /// The standard test configuration `a = I`, with the given `b` and `x₀`.
    pub fn with_identity_a(alpha: f64, b: SymMat, x0: SymMat) -> Result<Self> {
        let n = b.dim();
        Self::new(alpha, DMatrix::identity(n, n), b, x0)
    }

    pub fn dim(&self) -> usize {
        self.b.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &SymMat {
        &self.b
    }

    pub fn x0(&self) -> &SymMat {
        &self.x0
    }

    /// `aᵀa`.
    pub fn ata(&self) -> &SymMat {
        &self.ata
    }

    /// `(aᵀa)⁻¹`.
    pub fn ata_inv(&self) -> &SymMat {
        &self.ata_inv
    }

    /// `α − n − 1`.
    pub fn index_excess(&self) -> f64 {
        self.alpha - self.dim() as f64 - 1.0
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.a.clone(), self.b.clone(), self.x0.clone())
    }

    pub fn with_b(&self, b: SymMat) -> Result<Self> {
        Self::new(self.alpha, self.a.clone(), b, self.x0.clone())
    }

    pub fn with_x0(&self, x0: SymMat) -> Result<Self> {
        Self::new(self.alpha, self.a.clone(), self.b.clone(), x0)
    }

    pub fn to_raw(&self) -> RawParams {
        let n = self.dim();
        RawParams {
            n,
            alpha: self.alpha,
            a: (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| self.a[(i, j)])
                .collect(),
            b: self.b.to_row_major(),
            x0: self.x0.to_row_major(),
        }
    }

    /// `e^{bt}`, through the cached eigendecomposition of `b`.
    pub fn exp_bt(&self, t: f64) -> SymMat {
        self.b_eigen.recompose(|l| (l * t).exp())
    }

    /// `σ_t = ∫₀ᵗ e^{bs} aᵀa e^{bs} ds`.
    ///
    /// Evaluated in the eigenbasis `b = Q diag(β) Qᵀ`: with `Ã = Qᵀ aᵀa Q`,
    /// `(Qᵀ σ_t Q)_ij = Ã_ij ∫₀ᵗ e^{(βᵢ+βⱼ)s} ds`. Adaptive Simpson quadrature
    /// takes over when the eigenbasis fails to reconstruct `b`.
    pub fn sigma_t(&self, t: f64) -> Result<SymMat> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("sigma_t needs t ≥ 0, got {t}")));
        }
        let n = self.dim();
        if t == 0.0 {
            return Ok(SymMat::zeros(n));
        }
        let q = &self.b_eigen.vectors;
        let recon = self.b_eigen.recompose(|l| l);
        let resid = (recon.matrix() - self.b.matrix()).norm() / self.b.frobenius().max(1.0);
        if resid > 1e-10 {
            return Ok(self.sigma_t_quadrature(t));
        }
        let rotated = q.transpose() * self.ata.matrix() * q;
        let beta = &self.b_eigen.values;
        let inner = DMatrix::from_fn(n, n, |i, j| rotated[(i, j)] * exp_integral(beta[i] + beta[j], t));
        Ok(SymMat::symmetrized(q * inner * q.transpose()))
    }

    fn sigma_t_quadrature(&self, t: f64) -> SymMat {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let f = |s: f64| {
                    let e = self.exp_bt(s);
                    (e.matrix() * self.ata.matrix() * e.matrix())[(i, j)]
                };
                let v = crate::special::adaptive_simpson(&f, 0.0, t, 1e-12, 40);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMat::symmetrized(out)
    }

    /// `e^{bt} x₀ e^{bt}`, the non-centrality of `X_t` in mean form.
    pub fn noncentrality_mean(&self, t: f64) -> SymMat {
        let e = self.exp_bt(t);
        self.x0.congruence(e.matrix())
    }

    /// Law of `X_t`: non-central Wishart with `α` degrees of freedom, scale
    /// `σ_t` and mean-form non-centrality `e^{bt} x₀ e^{bt}`.
    pub fn endpoint_spec(&self, t: f64) -> Result<NoncentralWishartSpec> {
        if t == 0.0 {
            return Err(Error::DegenerateEndpoint);
        }
        if !(t > 0.0) {
            return Err(Error::domain(format!("endpoint law needs t > 0, got {t}")));
        }
        let scale = SpdMat::new(self.sigma_t(t)?)?;
        NoncentralWishartSpec::new(self.alpha, scale, self.noncentrality_mean(t))
    }

    /// `E X_t = α σ_t + e^{bt} x₀ e^{bt}`.
    pub fn endpoint_mean(&self, t: f64) -> Result<SymMat> {
        Ok(&self.sigma_t(t)?.scale(self.alpha) + &self.noncentrality_mean(t))
    }
}

/// `∫₀ᵗ e^{cs} ds`.
fn exp_integral(c: f64, t: f64) -> f64 {
    let ct = c * t;
    if ct.abs() < 1e-8 {
        t * (1.0 + 0.5 * ct + ct * ct / 6.0)
    } else {
        t * ct.exp_m1() / ct
    }
}

/// Checks every admissibility condition and reports all violations.
pub fn validate(raw: &RawParams) -> std::result::Result<WishartParams, Vec<Violation>> {
    let n = raw.n;
    let mut errs = Vec::new();
    if n == 0 {
        errs.push(Violation::Dimension { what: "n".into(), expected: 1, got: 0 });
        return Err(errs);
    }
    for (what, v) in [("a", &raw.a), ("b", &raw.b), ("x0", &raw.x0)] {
        if v.len() != n * n {
            errs.push(Violation::Dimension { what: what.into(), expected: n * n, got: v.len() });
        } else if v.iter().any(|x| !x.is_finite()) {
            errs.push(Violation::NonFinite { what: what.into() });
        }
    }
    if !raw.alpha.is_finite() {
        errs.push(Violation::NonFinite { what: "alpha".into() });
    }
    if !errs.is_empty() {
        return Err(errs);
    }

    if !(raw.alpha >= n as f64 + 1.0) {
        errs.push(Violation::AlphaBelowBound { alpha: raw.alpha, n });
    }

    let a = DMatrix::from_row_slice(n, n, &raw.a);
    let b_raw = DMatrix::from_row_slice(n, n, &raw.b);
    let asym = (&b_raw - b_raw.transpose()).norm();
    if asym > SYMMETRY_TOL * (1.0 + b_raw.norm()) {
        errs.push(Violation::BNotSymmetric { asymmetry: asym });
    }
    let b = SymMat::symmetrized(b_raw);
    let x0 = SymMat::symmetrized(DMatrix::from_row_slice(n, n, &raw.x0));

    let b_eigen = match b.eigen() {
        Ok(e) => e,
        Err(_) => {
            errs.push(Violation::NonFinite { what: "b".into() });
            return Err(errs);
        }
    };
    let b_max = b_eigen.values[n - 1];
    if b_max > 1e-12 * b.frobenius().max(1.0) {
        errs.push(Violation::BNotNegativeSemidefinite { max_eigenvalue: b_max });
    }

    if !matcore::commutes(&a, b.matrix(), COMMUTE_TOL) {
        errs.push(Violation::NotCommuting { residual: matcore::commutator_norm(&a, b.matrix()) });
    }

    match x0.min_eigenvalue() {
        Ok(lo) if lo >= -1e-12 * x0.frobenius().max(1.0) => {}
        Ok(lo) => errs.push(Violation::X0NotPsd { min_eigenvalue: lo }),
        Err(_) => errs.push(Violation::NonFinite { what: "x0".into() }),
    }

    let det_a = a.determinant();
    if det_a.abs() <= 1e-12 * a.norm().powi(n as i32) || !det_a.is_finite() {
        errs.push(Violation::ANotInvertible { det: det_a });
    }
    if !errs.is_empty() {
        return Err(errs);
    }

    let ata = SymMat::symmetrized(a.transpose() * &a);
    let ata_inv = ata.inverse().map_err(|_| vec![Violation::ANotInvertible { det: det_a }])?;
    debug_assert!(matcore::cone_check(&ata, Cone::Spd, 0.0));
    Ok(WishartParams { alpha: raw.alpha, a, b, x0, ata, ata_inv, b_eigen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::adaptive_simpson;

    fn rot(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn reference() -> WishartParams {
        WishartParams::with_identity_a(3.0, SymMat::zeros(2), SymMat::identity(2)).unwrap()
    }

    #[test]
    fn valid_reference() {
        let p = reference();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.index_excess(), 0.0);
    }

    #[test]
    fn alpha_boundary_rejected() {
        let err = WishartParams::with_identity_a(2.5, SymMat::zeros(2), SymMat::identity(2)).unwrap_err();
        assert!(err.to_string().contains("alpha below n+1"), "{err}");
    }

    #[test]
    fn noncommuting_rejected() {
        let r = rot(std::f64::consts::FRAC_PI_4);
        let d = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = SymMat::new(&r * d * r.transpose()).unwrap();
        // the commutes oracle itself
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert!(!matcore::commutes(&a, b.matrix(), 1e-10));
        let err = WishartParams::new(3.0, a, b, SymMat::identity(2)).unwrap_err();
        assert!(err.to_string().contains("a,b do not commute"), "{err}");
    }

    #[test]
    fn all_violations_reported() {
        let raw = RawParams {
            n: 2,
            alpha: 1.0,
            a: vec![0.0; 4],
            b: vec![1.0, 0.0, 0.0, 1.0],
            x0: vec![-1.0, 0.0, 0.0, 1.0],
        };
        let errs = validate(&raw).unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.iter().any(|e| matches!(e, Violation::AlphaBelowBound { .. })));
        assert!(errs.iter().any(|e| matches!(e, Violation::BNotNegativeSemidefinite { .. })));
        assert!(errs.iter().any(|e| matches!(e, Violation::X0NotPsd { .. })));
        assert!(errs.iter().any(|e| matches!(e, Violation::ANotInvertible { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let raw = RawParams { n: 2, alpha: 3.0, a: vec![1.0], b: vec![0.0; 4], x0: vec![0.0; 4] };
        assert!(matches!(validate(&raw).unwrap_err()[0], Violation::Dimension { .. }));
    }

    #[test]
    fn sigma_constant_integrand() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
        let p = WishartParams::new(3.0, a.clone(), SymMat::zeros(2), SymMat::identity(2)).unwrap();
        let s = p.sigma_t(1.7).unwrap();
        let expected = a.transpose() * &a * 1.7;
        assert!(matcore::rel_frobenius(s.matrix(), &expected) < 1e-14);
        assert_eq!(p.sigma_t(0.0).unwrap(), SymMat::zeros(2));
        assert!(p.sigma_t(-1.0).is_err());
    }

    #[test]
    fn sigma_scalar_exponential() {
        let p = WishartParams::with_identity_a(3.0, SymMat::scalar(2, -1.0), SymMat::identity(2)).unwrap();
        let s = p.sigma_t(1.0).unwrap();
        let expected = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((expected - 0.432332).abs() < 1e-6);
        assert!((s.matrix()[(0, 0)] - expected).abs() < 1e-15);
        assert!(s.matrix()[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn sigma_matches_quadrature_oracle() {
        let a = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, 1.3]);
        let b = SymMat::from_diagonal(&[-0.4, -1.1]);
        let p = WishartParams::new(4.0, a.clone(), b, SymMat::identity(2)).unwrap();
        let t = 1.3;
        let s = p.sigma_t(t).unwrap();
        for (i, (ai, bi)) in [(0.7f64, -0.4f64), (1.3, -1.1)].into_iter().enumerate() {
            let f = |u: f64| ai * ai * (2.0 * bi * u).exp();
            let q = adaptive_simpson(&f, 0.0, t, 1e-13, 50);
            assert!((s.matrix()[(i, i)] - q).abs() < 1e-9 * q);
        }
        assert!(s.matrix()[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn sigma_monotone_and_derivative() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        // b a polynomial in a, so they commute
        let b = SymMat::new(-(&a * &a) * 0.5 - &a * 0.2).unwrap();
        let p = WishartParams::new(4.0, a.clone(), b, SymMat::identity(2)).unwrap();
        let mut prev = p.sigma_t(0.0).unwrap();
        for k in 1..=10 {
            let cur = p.sigma_t(0.3 * k as f64).unwrap();
            assert!(matcore::cone_check(&(&cur - &prev), Cone::Psd, 1e-14));
            prev = cur;
        }
        let t = 0.9;
        let h = 1e-6;
        let fd = (p.sigma_t(t + h).unwrap().matrix() - p.sigma_t(t - h).unwrap().matrix()) / (2.0 * h);
        let e = p.exp_bt(t);
        let exact = e.matrix() * p.ata().matrix() * e.matrix();
        assert!(matcore::rel_frobenius(&fd, &exact) < 1e-5);
        // quadrature fallback agrees with the closed form
        let quad = p.sigma_t_quadrature(t);
        assert!(matcore::rel_frobenius(quad.matrix(), p.sigma_t(t).unwrap().matrix()) < 1e-9);
    }

    #[test]
    fn endpoint_specs() {
        let p = reference();
        let s = p.endpoint_spec(1.0).unwrap();
        assert_eq!(s.dof(), 3.0);
        assert!(matcore::rel_frobenius(s.scale().matrix(), &DMatrix::identity(2, 2)) < 1e-14);
        assert_eq!(s.noncentrality_mean(), &SymMat::identity(2));
        assert!(matches!(p.endpoint_spec(0.0), Err(Error::DegenerateEndpoint)));

        let central = WishartParams::with_identity_a(3.0, SymMat::zeros(2), SymMat::zeros(2)).unwrap();
        assert!(central.endpoint_spec(1.0).unwrap().noncentrality_mean().is_zero());

        let p = WishartParams::with_identity_a(3.0, SymMat::scalar(2, -1.0), SymMat::identity(2)).unwrap();
        let s = p.endpoint_spec(1.0).unwrap();
        let e2 = (-2.0f64).exp();
        assert!((s.noncentrality_mean().matrix()[(1, 1)] - e2).abs() < 1e-15);
        assert!((s.scale().matrix()[(0, 0)] - (1.0 - e2) / 2.0).abs() < 1e-15);
    }
}
