//! Discretization-error measurements on nested grids driven by the same
//! Brownian path.

use serde::{Deserialize, Serialize};

use super::engine;
use crate::error::{Error, Result};
use crate::model::WishartParams;
use crate::sim::{self, coarsen_increments, gaussian_increments};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub steps: usize,
    /// Mean over paths of `‖int_x(K) − int_x(2K)‖_F` (strong error).
    pub int_x_gap: f64,
    /// `‖mean over paths of (int_x(K) − int_x(2K))‖_F` (weak error).
    pub mean_gap: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `int_x` gaps between grids `K` and `2K` for every `K` in `ks`, on paths
/// simulated once on the finest grid and coarsened by summing increments.
pub fn int_x_gaps(params: &WishartParams, t: f64, ks: &[usize], paths: u64, seed: u64) -> Result<Vec<ConvergencePoint>> {
    let kmax = *ks.iter().max().ok_or_else(|| Error::domain("no grid sizes"))?;
    if ks.iter().any(|&k| kmax % k != 0 || k == 0) {
        return Err(Error::domain("grid sizes must divide the largest one"));
    }
    let fine_steps = 2 * kmax;
    let n = params.dim();
    let sums = engine::par_chunks(
        paths,
        seed,
        0,
        1,
        || vec![(0.0, nalgebra::DMatrix::<f64>::zeros(n, n)); ks.len()],
        |acc, _, rng| {
            let fine = gaussian_increments(n, fine_steps, t / fine_steps as f64, rng);
            // increments for 2kmax, kmax, kmax/2, ...
            let mut levels = vec![(fine_steps, fine)];
            while levels.last().unwrap().0 > ks.iter().copied().min().unwrap() {
                let (k, inc) = levels.last().unwrap();
                let next = coarsen_increments(inc);
                levels.push((k / 2, next));
            }
            let int_at = |k: usize| -> Result<nalgebra::DMatrix<f64>> {
                let inc = &levels.iter().find(|(kk, _)| *kk == k).unwrap().1;
                Ok(sim::simulate_with_increments(params, t, inc, false)?.int_x.into_matrix())
            };
            for (slot, &k) in acc.iter_mut().zip(ks) {
                let d = int_at(k)? - int_at(2 * k)?;
                slot.0 += d.norm();
                slot.1 += d;
            }
            Ok(())
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.0 += y.0;
                x.1 += y.1;
            }
        },
    )?;
    Ok(ks
        .iter()
        .zip(sums)
        .map(|(&steps, (s, m))| ConvergencePoint {
            steps,
            int_x_gap: s / paths as f64,
            mean_gap: m.norm() / paths as f64,
        })
        .collect())
}

/// Median of the log-determinant residual over `paths` paths simulated with
/// `steps` steps. Paths that leave the open cone are skipped.
pub fn logdet_residual_median(params: &WishartParams, t: f64, steps: usize, paths: u64, seed: u64) -> Result<f64> {
    let cfg = sim::SimConfig::new(steps, seed).recording();
    let mut res = engine::par_chunks(
        paths,
        seed,
        0,
        1,
        Vec::new,
        |acc, _, rng| {
            let path = sim::simulate_path_with_rng(params, t, &cfg, rng)?;
            if let Ok(r) = sim::logdet_residual(&path, params) {
                acc.push(r);
            }
            Ok(())
        },
        |a: &mut Vec<f64>, b| a.extend(b),
    )?;
    if res.is_empty() {
        return Err(Error::Inconclusive("no SPD path for the log-det residual".into()));
    }
    res.sort_by(f64::total_cmp);
    let m = res.len();
    Ok(if m % 2 == 1 { res[m / 2] } else { 0.5 * (res[m / 2 - 1] + res[m / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.3)).collect();
        assert!((log_log_slope(&x, &y) + 1.3).abs() < 1e-12);
    }
}
