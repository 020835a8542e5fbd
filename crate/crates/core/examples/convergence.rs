//! Discretization diagnostics: the gap between ∫X ds on K and 2K steps
//! driven by the same Brownian path, and the residual of the log-det
//! identity as the grid is refined.

use wishart_bridge::harness::convergence::{int_x_gaps, log_log_slope, logdet_residual_median};
use wishart_bridge::{SymMat, WishartParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = WishartParams::with_identity_a(6.0, SymMat::scalar(2, -0.5), SymMat::identity(2))?;
    let ks = [100, 200, 400, 800];
    let pts = int_x_gaps(&p, 1.0, &ks, 200, 3)?;
    for c in &pts {
        println!(
            "K = {:4}  mean |int_x(K) - int_x(2K)| = {:.3e}   |mean gap| = {:.3e}",
            c.steps, c.int_x_gap, c.mean_gap
        );
    }
    let x: Vec<f64> = pts.iter().map(|c| c.steps as f64).collect();
    let y: Vec<f64> = pts.iter().map(|c| c.int_x_gap).collect();
    println!("log-log slope against K: {:.3}", log_log_slope(&x, &y));
    let r200 = logdet_residual_median(&p, 1.0, 200, 100, 3)?;
    let r400 = logdet_residual_median(&p, 1.0, 400, 100, 3)?;
    println!("median log-det residual: 200 steps {r200:.3e}, 400 steps {r400:.3e}, ratio {:.3}", r400 / r200);
    Ok(())
}
