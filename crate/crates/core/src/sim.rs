//! Path simulation of the Wishart SDE
//!
//! `dX = √X dW a + aᵀ dWᵀ √X + (bX + Xb + α aᵀa) dt`
//!
//! with a full-truncation Euler scheme: after every step the state is
//! symmetrized and its negative eigenvalues are clipped to zero, and the
//! diffusion coefficient always uses the clipped state.

use nalgebra::allocator::Allocator;
use nalgebra::{Const, DMatrix, DefaultAllocator, Dim, DimSub, Dyn, OMatrix, OVector, U1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{MatFn, SymMat};
use crate::model::WishartParams;

/// Eigenvalues below `SINGULAR_FLOOR × trace` are floored before inversion,
/// and the path is flagged.
pub const SINGULAR_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerFullTruncation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    pub seed: u64,
    #[serde(default)]
    pub store_increments: bool,
    #[serde(default)]
    pub store_states: bool,
    /// Return [`Error::SingularPath`] instead of flagging the path.
    #[serde(default)]
    pub strict_singular: bool,
}

impl SimConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        SimConfig {
            steps,
            scheme: Scheme::default(),
            seed,
            store_increments: false,
            store_states: false,
            strict_singular: false,
        }
    }

    pub fn recording(mut self) -> Self {
        self.store_increments = true;
        self.store_states = true;
        self
    }
}

/// A simulated trajectory on the uniform grid `t_k = k t / K` with its
/// accumulated functionals.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub t: f64,
    pub steps: usize,
    pub x0: SymMat,
    pub x_t: SymMat,
    /// Post-projection states `X_0 … X_K`; empty unless requested.
    pub states: Vec<SymMat>,
    /// Trapezoid rule for `∫₀ᵗ X_s ds`.
    pub int_x: SymMat,
    /// Trapezoid rule for `∫₀ᵗ tr(aᵀa X_s⁻¹) ds`, using floored eigenvalues.
    pub int_tr_inv_raw: f64,
    /// Brownian increments `ΔW_k`; present when requested.
    pub increments: Option<Vec<DMatrix<f64>>>,
    /// Number of steps at which eigenvalue clipping was needed.
    pub projection_count: usize,
    /// Smallest eigenvalue seen before projection.
    pub min_eig_seen: f64,
    /// First grid index at which the singularity floor bound.
    pub singular_step: Option<usize>,
    /// `ln det X_t` (−∞ for a singular endpoint).
    pub ln_det_t: f64,
    pub ln_det_0: f64,
}

impl PathSample {
    pub fn dt(&self) -> f64 {
        self.t / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 * self.dt()).collect()
    }

    pub fn is_flagged(&self) -> bool {
        self.singular_step.is_some()
    }

    /// `∫₀ᵗ tr(aᵀa X_s⁻¹) ds`, or the singular step if the floor bound.
    pub fn int_tr_inv(&self) -> Result<f64> {
        match self.singular_step {
            Some(step) => Err(Error::SingularPath { step }),
            None => Ok(self.int_tr_inv_raw),
        }
    }
}

/// Source of the Brownian increments `ΔW_k` (already scaled by `√dt`).
pub trait Increments {
    /// Fills `out` (column-major `n × n`) with the increment of step `k`.
    fn fill(&mut self, k: usize, sqrt_dt: f64, out: &mut [f64]);
}

/// Independent Gaussian increments, optionally negated for antithetic pairs.
pub struct GaussianIncrements<'a, R: Rng + ?Sized> {
    pub rng: &'a mut R,
    pub sign: f64,
}

impl<R: Rng + ?Sized> Increments for GaussianIncrements<'_, R> {
    fn fill(&mut self, _k: usize, sqrt_dt: f64, out: &mut [f64]) {
        let s = self.sign * sqrt_dt;
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(self.rng);
            *v = s * z;
        }
    }
}

/// Replays a fixed list of increments.
pub struct GivenIncrements<'a>(pub &'a [DMatrix<f64>]);

impl Increments for GivenIncrements<'_> {
    fn fill(&mut self, k: usize, _sqrt_dt: f64, out: &mut [f64]) {
        out.copy_from_slice(self.0[k].as_slice());
    }
}

/// One full-truncation Euler step from the PSD state `x`:
/// `x + √x dW a + aᵀ dWᵀ √x + (bx + xb + α aᵀa) dt`, symmetrized and clipped.
pub fn euler_step(x: &SymMat, params: &WishartParams, dt: f64, dw: &DMatrix<f64>) -> Result<SymMat> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!("Euler step needs dt > 0, got {dt}")));
    }
    let root = x.apply(MatFn::Sqrt).or_else(|_| {
        // states produced by the scheme are PSD; clip whatever is passed in
        let e = x.eigen()?;
        Ok::<_, Error>(e.recompose(|l| l.max(0.0).sqrt()))
    })?;
    let s = root.matrix() * dw * params.a();
    let drift = params.b().matrix() * x.matrix()
        + x.matrix() * params.b().matrix()
        + params.ata().matrix() * params.alpha();
    let next = SymMat::new(x.matrix() + &s + s.transpose() + drift * dt)?;
    let e = next.eigen()?;
    if e.values[0] < 0.0 {
        Ok(e.recompose(|l| l.max(0.0)))
    } else {
        Ok(next)
    }
}

/// Simulates one path with a generator seeded from `cfg.seed`.
pub fn simulate_path(params: &WishartParams, t: f64, cfg: &SimConfig) -> Result<PathSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_path_with_rng(params, t, cfg, &mut rng)
}

pub fn simulate_path_with_rng<R: Rng + ?Sized>(
    params: &WishartParams,
    t: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PathSample> {
    simulate_with(params, t, cfg, &mut GaussianIncrements { rng, sign: 1.0 })
}

/// An antithetic pair: the second path uses the negated increments of the first.
pub fn simulate_antithetic_pair<R: Rng + Clone>(
    params: &WishartParams,
    t: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(PathSample, PathSample)> {
    let mut replay = rng.clone();
    let first = simulate_with(params, t, cfg, &mut GaussianIncrements { rng, sign: 1.0 })?;
    let second = simulate_with(params, t, cfg, &mut GaussianIncrements { rng: &mut replay, sign: -1.0 })?;
    Ok((first, second))
}

/// Simulates with an arbitrary increment source.
pub fn simulate_with<I: Increments + ?Sized>(
    params: &WishartParams,
    t: f64,
    cfg: &SimConfig,
    noise: &mut I,
) -> Result<PathSample> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("simulation needs t > 0, got {t}")));
    }
    if cfg.steps < 1 {
        return Err(Error::domain("simulation needs at least one step"));
    }
    let path = match params.dim() {
        1 => run::<Const<1>, I>(params, Const::<1>, t, cfg, noise),
        2 => run::<Const<2>, I>(params, Const::<2>, t, cfg, noise),
        3 => run::<Const<3>, I>(params, Const::<3>, t, cfg, noise),
        4 => run::<Const<4>, I>(params, Const::<4>, t, cfg, noise),
        n => run::<Dyn, I>(params, Dyn(n), t, cfg, noise),
    }?;
    if cfg.strict_singular
        && let Some(step) = path.singular_step
    {
        return Err(Error::SingularPath { step });
    }
    Ok(path)
}

/// Simulates on a grid of `increments.len()` steps driven by the given increments.
pub fn simulate_with_increments(
    params: &WishartParams,
    t: f64,
    increments: &[DMatrix<f64>],
    store: bool,
) -> Result<PathSample> {
    let cfg = SimConfig {
        store_increments: store,
        store_states: store,
        ..SimConfig::new(increments.len(), 0)
    };
    simulate_with(params, t, &cfg, &mut GivenIncrements(increments))
}

fn to_fixed<D: Dim>(d: D, m: &DMatrix<f64>) -> OMatrix<f64, D, D>
where
    DefaultAllocator: Allocator<D, D>,
{
    OMatrix::<f64, D, D>::from_iterator_generic(d, d, m.iter().copied())
}

fn to_dynamic<D: Dim>(m: &OMatrix<f64, D, D>) -> DMatrix<f64>
where
    DefaultAllocator: Allocator<D, D>,
{
    DMatrix::from_iterator(m.nrows(), m.ncols(), m.iter().copied())
}

/// Symmetric eigendecomposition with closed forms for n ≤ 2.
fn eigen_small<D: Dim + DimSub<U1>>(m: &OMatrix<f64, D, D>) -> (OVector<f64, D>, OMatrix<f64, D, D>)
where
    DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<<D as DimSub<U1>>::Output>,
{
    let d = m.shape_generic().0;
    match m.nrows() {
        1 => (
            OVector::<f64, D>::from_element_generic(d, U1, m[(0, 0)]),
            OMatrix::<f64, D, D>::identity_generic(d, d),
        ),
        2 => {
            let (p, q, r) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
            let mut vals = OVector::<f64, D>::zeros_generic(d, U1);
            let mut vecs = OMatrix::<f64, D, D>::identity_generic(d, d);
            if q == 0.0 {
                vals[0] = p;
                vals[1] = r;
                return (vals, vecs);
            }
            let h = 0.5 * (p - r);
            let dist = h.hypot(q);
            let mid = 0.5 * (p + r);
            let hi = mid + dist;
            let lo = if hi > 0.0 && mid > 0.0 { (p * r - q * q) / hi } else { mid - dist };
            let (vx, vy) = if h >= 0.0 { (h + dist, q) } else { (q, dist - h) };
            let norm = vx.hypot(vy);
            let (cx, cy) = (vx / norm, vy / norm);
            vals[0] = lo;
            vals[1] = hi;
            vecs[(0, 0)] = -cy;
            vecs[(1, 0)] = cx;
            vecs[(0, 1)] = cx;
            vecs[(1, 1)] = cy;
            (vals, vecs)
        }
        _ => {
            let e = m.clone().symmetric_eigen();
            (e.eigenvalues, e.eigenvectors)
        }
    }
}

fn recompose<D: Dim>(vals: &OVector<f64, D>, vecs: &OMatrix<f64, D, D>, f: impl Fn(f64) -> f64) -> OMatrix<f64, D, D>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(vals[j]);
    }
    let out = scaled * vecs.transpose();
    (&out + out.transpose()) * 0.5
}

struct StateInfo<D: Dim>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    vals: OVector<f64, D>,
    vecs: OMatrix<f64, D, D>,
    tr_inv: f64,
    floored: bool,
    ln_det: f64,
}

fn state_info<D: Dim>(
    vals: OVector<f64, D>,
    vecs: OMatrix<f64, D, D>,
    ata: &OMatrix<f64, D, D>,
) -> StateInfo<D>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let trace: f64 = vals.iter().sum();
    let floor = SINGULAR_FLOOR * trace.max(f64::MIN_POSITIVE);
    let mut tr_inv = 0.0;
    let mut floored = false;
    let mut ln_det = 0.0;
    for (j, col) in vecs.column_iter().enumerate() {
        let l = vals[j];
        let w = (ata * col).dot(&col);
        if l < floor {
            floored = true;
        }
        tr_inv += w / l.max(floor);
        ln_det += if l > 0.0 { l.ln() } else { f64::NEG_INFINITY };
    }
    StateInfo { vals, vecs, tr_inv, floored, ln_det }
}

fn run<D, I>(params: &WishartParams, d: D, t: f64, cfg: &SimConfig, noise: &mut I) -> Result<PathSample>
where
    D: Dim + DimSub<U1>,
    I: Increments + ?Sized,
    DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<<D as DimSub<U1>>::Output>,
{
    let steps = cfg.steps;
    let dt = t / steps as f64;
    let sqrt_dt = dt.sqrt();
    let a = to_fixed(d, params.a());
    let b = to_fixed(d, params.b().matrix());
    let ata = to_fixed(d, params.ata().matrix());
    let drift_const = &ata * params.alpha();

    let mut x = to_fixed(d, params.x0().matrix());
    let (v0, e0) = eigen_small(&x);
    let mut min_eig_seen = v0.min();
    let mut info = state_info(v0, e0, &ata);
    let ln_det_0 = info.ln_det;
    let mut singular_step = if info.floored { Some(0) } else { None };

    let mut int_x = &x * 0.5;
    let mut int_tr_inv = 0.5 * info.tr_inv;
    let mut projection_count = 0;
    let record_states = cfg.store_states || cfg.store_increments;
    let mut states = Vec::new();
    let mut increments = if cfg.store_increments { Some(Vec::with_capacity(steps)) } else { None };
    if record_states {
        states.reserve(steps + 1);
        states.push(SymMat::symmetrized(to_dynamic(&x)));
    }

    let mut dw = OMatrix::<f64, D, D>::zeros_generic(d, d);
    for k in 0..steps {
        noise.fill(k, sqrt_dt, dw.as_mut_slice());
        if let Some(incs) = increments.as_mut() {
            incs.push(to_dynamic(&dw));
        }
        let root = recompose(&info.vals, &info.vecs, |l| l.max(0.0).sqrt());
        let s = root * &dw * &a;
        let drift = &b * &x + &x * &b + &drift_const;
        let next = &x + &s + s.transpose() + drift * dt;
        let next = (&next + next.transpose()) * 0.5;
        let (vals, vecs) = eigen_small(&next);
        let lo = vals.min();
        min_eig_seen = min_eig_seen.min(lo);
        x = if lo < 0.0 {
            projection_count += 1;
            let clipped = vals.map(|l| l.max(0.0));
            let xp = recompose(&clipped, &vecs, |l| l);
            info = state_info(clipped, vecs, &ata);
            xp
        } else {
            info = state_info(vals, vecs, &ata);
            next
        };
        if info.floored && singular_step.is_none() {
            singular_step = Some(k + 1);
        }
        let w = if k + 1 == steps { 0.5 } else { 1.0 };
        int_x += &x * w;
        int_tr_inv += w * info.tr_inv;
        if record_states {
            states.push(SymMat::symmetrized(to_dynamic(&x)));
        }
    }
    int_x *= dt;
    int_tr_inv *= dt;

    Ok(PathSample {
        t,
        steps,
        x0: params.x0().clone(),
        x_t: SymMat::symmetrized(to_dynamic(&x)),
        states,
        int_x: SymMat::symmetrized(to_dynamic(&int_x)),
        int_tr_inv_raw: int_tr_inv,
        increments,
        projection_count,
        min_eig_seen,
        singular_step,
        ln_det_t: info.ln_det,
        ln_det_0,
    })
}

/// `|ln det X_t − ln det X_0 − Σ_k [(α−n−1) tr(aᵀa X_k⁻¹) + 2 tr b] dt − Σ_k 2 tr(X_k^{−½} ΔW_k a)|`,
/// the discretized log-determinant identity with left-point (Itô) sums.
pub fn logdet_residual(path: &PathSample, params: &WishartParams) -> Result<f64> {
    let incs = path
        .increments
        .as_ref()
        .ok_or_else(|| Error::domain("log-det residual needs stored increments"))?;
    if path.states.len() != path.steps + 1 {
        return Err(Error::domain("log-det residual needs stored states"));
    }
    let dt = path.dt();
    let excess = params.index_excess();
    let tr_b = params.b().trace();
    let mut drift = 0.0;
    let mut stoch = 0.0;
    for (k, dw) in incs.iter().enumerate() {
        let inv_root = path.states[k]
            .apply(MatFn::Pow(-0.5))
            .map_err(|_| Error::domain(format!("state {k} is not SPD")))?;
        let inv = inv_root.sym_product(&inv_root);
        drift += (excess * params.ata().trace_product(&inv) + 2.0 * tr_b) * dt;
        stoch += 2.0 * (inv_root.matrix() * dw * params.a()).trace();
    }
    let last = path.states[path.steps].ln_det().map_err(|_| Error::domain("endpoint is not SPD"))?;
    let first = path.states[0].ln_det().map_err(|_| Error::domain("initial state is not SPD"))?;
    Ok((last - first - drift - stoch).abs())
}

/// Sums consecutive pairs of increments: the same Brownian path on a grid
/// with half as many steps.
pub fn coarsen_increments(fine: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    fine.chunks(2).map(|c| c.iter().sum()).collect()
}

/// `n × n` standard Gaussian increments scaled by `√dt`, for `steps` steps.
pub fn gaussian_increments<R: Rng + ?Sized>(n: usize, steps: usize, dt: f64, rng: &mut R) -> Vec<DMatrix<f64>> {
    let s = dt.sqrt();
    (0..steps)
        .map(|_| {
            DMatrix::from_fn(n, n, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            })
        })
        .collect()
}
