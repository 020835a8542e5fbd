//! Checks the joint transform E[exp(−∫tr(vX) − (λ²/2)∫tr(AX⁻¹)) g(X_t)] by
//! simulation: the closed-form bridge transform, integrated against the
//! endpoint law, must match the Monte Carlo functional.
//!
//! cargo run --release --example joint_disintegration -- [paths]

use wishart_bridge::harness::{Experiment, GridPoint, Kind, RunOptions, run_experiment};
use wishart_bridge::{SymMat, WishartParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let paths: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20_000);
    let p = WishartParams::with_identity_a(4.0, SymMat::zeros(1), SymMat::identity(1))?;
    let mut grid = Vec::new();
    for v in [0.0, 0.3] {
        for l in [0.0, 1.0] {
            grid.push(GridPoint::joint(SymMat::scalar(1, v), l));
            grid.push(GridPoint::joint(SymMat::scalar(1, v), l).with_w(Some(SymMat::scalar(1, 0.25))));
        }
    }
    let exp = Experiment::new("joint-example", Kind::Joint, &p, 1.0, paths, 200, 5).with_grid(grid);
    let r = run_experiment(&exp, &RunOptions::default())?;
    for rec in &r.records {
        println!(
            "{:40} closed {:.5} ± {:.5}   MC {:.5} ± {:.5}   z {:+.2}  {:?}",
            rec.label, rec.reference.value, rec.reference.stderr, rec.estimate.mean, rec.estimate.stderr, rec.z_score, rec.verdict
        );
    }
    println!("excluded paths {}, passed {}", r.excluded_path_count, r.passed);
    Ok(())
}
