//! Simulates the reference Wishart process and compares the empirical
//! endpoint mean with `α σ_t + e^{bt} x e^{bt}`.
//!
//! cargo run --release --example simulate_paths -- [paths] [steps]

use std::time::Instant;

use wishart_bridge::harness::engine::{LawRun, run_paths};
use wishart_bridge::harness::Moments;
use wishart_bridge::{SymMat, WishartParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let paths: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20_000);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(400);

    let params = WishartParams::with_identity_a(4.0, SymMat::scalar(2, -0.5), SymMat::identity(2))?;
    let t = 1.0;
    let run = LawRun { params: &params, t, steps, seed: 7, law: 0, paths, antithetic: false, workers: 1 };

    let start = Instant::now();
    // entries (0,0), (0,1), (1,1) of X_t, plus the projection indicator
    let acc = run_paths(
        run,
        || vec![Moments::default(); 4],
        |acc, ps| {
            for p in ps {
                let x = p.x_t.matrix();
                acc[0].push(x[(0, 0)]);
                acc[1].push(x[(0, 1)]);
                acc[2].push(x[(1, 1)]);
                acc[3].push(if p.projection_count > 0 { 1.0 } else { 0.0 });
            }
            Ok(())
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(&y)),
    )?;
    let elapsed = start.elapsed();

    let mean = params.endpoint_mean(t)?;
    let m = mean.matrix();
    println!("{paths} paths x {steps} steps in {:.2?} ({:.0} ns/step)", elapsed, elapsed.as_nanos() as f64 / (paths as f64 * steps as f64));
    for (k, (i, j)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        let e = acc[k].estimate();
        println!("E X_t[{i},{j}] = {:.5} ± {:.5}   closed form {:.5}", e.mean, e.stderr, m[(i, j)]);
    }
    println!("fraction of paths with a projection: {:.4}", acc[3].mean);
    Ok(())
}
