//! Radon–Nikodym densities between Wishart laws that differ in drift `b`
//! or in index `α`, and the parameter maps used by the bridge transforms.
//!
//! Densities are returned in log form by the `*_log_rn` functions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matcore::{self, Cone, MatFn, SymMat};
use crate::model::WishartParams;
use crate::sim::PathSample;
use crate::variant::Variant;

const COMMUTE_TOL: f64 = 1e-10;
const CONE_TOL: f64 = 1e-12;

/// An admissible drift change `b → b + u`: `u` symmetric, commuting with `a`,
/// and `b + u` negative semi-definite.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftShift {
    u: SymMat,
}

impl DriftShift {
    pub fn new(u: SymMat, params: &WishartParams) -> Result<Self> {
        if u.dim() != params.dim() {
            return Err(Error::domain(format!("shift is {0}×{0}, parameters are {1}×{1}", u.dim(), params.dim())));
        }
        if !matcore::commutes(u.matrix(), params.a(), COMMUTE_TOL) {
            return Err(Error::domain(format!(
                "shift does not commute with a (‖ua − au‖ = {:e})",
                matcore::commutator_norm(u.matrix(), params.a())
            )));
        }
        let shifted = params.b() + &u;
        if !matcore::cone_check(&shifted, Cone::Nsd, CONE_TOL) {
            return Err(Error::domain(format!(
                "b + u is not negative semi-definite (max eigenvalue {:e})",
                shifted.max_eigenvalue()?
            )));
        }
        Ok(DriftShift { u })
    }

    pub fn zero(n: usize) -> Self {
        DriftShift { u: SymMat::zeros(n) }
    }

    pub fn u(&self) -> &SymMat {
        &self.u
    }

    pub fn is_zero(&self) -> bool {
        self.u.is_zero()
    }

    /// Parameters of the shifted law `(α, a, b + u, x₀)`.
    pub fn shifted_params(&self, params: &WishartParams) -> Result<WishartParams> {
        params.with_b(params.b() + &self.u)
    }
}

/// Matrix `K` with the density's `∫X` term equal to `−tr(K ∫X ds)`.
///
/// Printed: `K = (aᵀa)⁻¹(u² + bu)`; derived: `K = ½(aᵀa)⁻¹(u² + 2bu)`.
pub fn drift_functional_coefficient(u: &SymMat, params: &WishartParams, variant: Variant) -> DMatrix<f64> {
    let c = params.ata_inv().matrix();
    let u2 = u.matrix() * u.matrix();
    let bu = params.b().matrix() * u.matrix();
    match variant {
        Variant::Printed => c * (u2 + bu),
        Variant::Derived => c * (u2 + bu * 2.0) * 0.5,
    }
}

/// `ln dQ^{b+u}/dQ^{b}` on `F_t`:
/// `tr[½(aᵀa)⁻¹u(X_t − X₀)] − ½αt tr u − tr(K ∫X ds)`.
pub fn drift_log_rn(path: &PathSample, shift: &DriftShift, params: &WishartParams, variant: Variant) -> Result<f64> {
    if shift.u.dim() != params.dim() || path.x_t.dim() != params.dim() {
        return Err(Error::domain("dimension mismatch between path, shift and parameters"));
    }
    if shift.is_zero() {
        return Ok(0.0);
    }
    let u = shift.u.matrix();
    let c = params.ata_inv().matrix();
    let dx = path.x_t.matrix() - path.x0.matrix();
    let first = 0.5 * (c * u * dx).trace();
    let second = -0.5 * params.alpha() * path.t * u.trace();
    let k = drift_functional_coefficient(&shift.u, params, variant);
    let third = -(k * path.int_x.matrix()).trace();
    Ok(first + second + third)
}

pub fn drift_rn(path: &PathSample, shift: &DriftShift, params: &WishartParams, variant: Variant) -> Result<f64> {
    Ok(drift_log_rn(path, shift, params, variant)?.exp())
}

/// `ln dQ^{α+2ν}/dQ^{α}` on `F_t`:
/// `(ν/2) ln(det X_t / det x₀) − ν t tr b − (ν/2)(α − n − 1 + ν) ∫tr(aᵀa X⁻¹) ds`.
pub fn index_log_rn(path: &PathSample, nu: f64, params: &WishartParams) -> Result<f64> {
    let n = params.dim() as f64;
    let lower = (n + 1.0 - params.alpha()) / 2.0;
    if !(nu >= lower) || !nu.is_finite() {
        return Err(Error::domain(format!("index shift ν = {nu} below (n + 1 − α)/2 = {lower}")));
    }
    if nu == 0.0 {
        return Ok(0.0);
    }
    if !path.ln_det_0.is_finite() {
        return Err(Error::domain("index change needs an SPD starting point"));
    }
    if let Some(step) = path.singular_step {
        return Err(Error::ExcludedPath(format!("state became singular at step {step}")));
    }
    let int_tr_inv = path.int_tr_inv()?;
    Ok(0.5 * nu * (path.ln_det_t - path.ln_det_0)
        - nu * params.b().trace() * path.t
        - 0.5 * nu * (params.index_excess() + nu) * int_tr_inv)
}

pub fn index_rn(path: &PathSample, nu: f64, params: &WishartParams) -> Result<f64> {
    Ok(index_log_rn(path, nu, params)?.exp())
}

/// Drift shift `δ` whose density carries `−tr(v² ∫X ds)`.
///
/// Derived: the admissible root of `½(aᵀa)⁻¹(δ² + 2bδ) = v²`, namely
/// `δ = −b − √(b² + 2aᵀa v²)`. Printed: `½(−b + √(b² − 4aᵀa v²))`.
pub fn delta_for_target(v: &SymMat, params: &WishartParams, variant: Variant) -> Result<SymMat> {
    if v.dim() != params.dim() {
        return Err(Error::domain("target has the wrong dimension"));
    }
    if !matcore::commutes(v.matrix(), params.a(), COMMUTE_TOL) {
        return Err(Error::domain("target v does not commute with a"));
    }
    if !matcore::commutes(v.matrix(), params.b().matrix(), COMMUTE_TOL) {
        return Err(Error::domain("target v does not commute with b"));
    }
    let b = params.b();
    let b2 = b.sym_product(b);
    let av2 = SymMat::new(params.ata().matrix() * v.matrix() * v.matrix())?;
    match variant {
        Variant::Derived => {
            if v.is_zero() {
                return Ok(SymMat::zeros(v.dim()));
            }
            let root = (&b2 + &av2.scale(2.0)).apply(MatFn::Sqrt)?;
            Ok(-&(b + &root))
        }
        Variant::Printed => {
            let arg = &b2 - &av2.scale(4.0);
            let root = arg.apply(MatFn::Sqrt).map_err(|_| {
                Error::domain(format!(
                    "b² − 4aᵀa v² is not positive semi-definite (min eigenvalue {:e})",
                    arg.min_eigenvalue().unwrap_or(f64::NAN)
                ))
            })?;
            Ok((&root - b).scale(0.5))
        }
    }
}

/// Index shift `ν` whose density carries `−(λ²/2) ∫tr(aᵀa X⁻¹) ds`.
///
/// With `m = α − n − 1`, derived: the positive root of `ν² + mν = λ²`;
/// printed: `√(λ² + m²) − m`.
pub fn nu_for_lambda(lambda: f64, alpha: f64, n: usize, variant: Variant) -> Result<f64> {
    let m = alpha - n as f64 - 1.0;
    if !(m >= 0.0) {
        return Err(Error::domain(format!("alpha below n+1 (alpha = {alpha}, n + 1 = {})", n + 1)));
    }
    if !lambda.is_finite() {
        return Err(Error::domain("λ must be finite"));
    }
    Ok(match variant {
        Variant::Derived => {
            let l2 = lambda * lambda;
            // rationalized root, stable for small λ
            2.0 * l2 / (m + (m * m + 4.0 * l2).sqrt()).max(f64::MIN_POSITIVE)
        }
        Variant::Printed => lambda.hypot(m) - m,
    })
}
