//! Radon–Nikodym densities for a change of drift b → b+u and of index
//! α → α+2ν, estimated as E[RN] under the base law. The derived drift
//! functional has mean 1; the printed coefficient does not.

use wishart_bridge::girsanov::{DriftShift, drift_rn, index_rn};
use wishart_bridge::harness::Moments;
use wishart_bridge::harness::engine::{LawRun, run_paths};
use wishart_bridge::{Error, SymMat, Variant, WishartParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = WishartParams::with_identity_a(5.0, SymMat::zeros(1), SymMat::identity(1))?;
    let shift = DriftShift::new(SymMat::scalar(1, -0.5), &params)?;
    let nu = 0.5;
    let run = LawRun { params: &params, t: 1.0, steps: 200, seed: 11, law: 0, paths: 20_000, antithetic: false, workers: 1 };

    let acc = run_paths(
        run,
        || vec![Moments::default(); 3],
        |acc, ps| {
            for p in ps {
                acc[0].push(drift_rn(p, &shift, &params, Variant::Derived)?);
                acc[1].push(drift_rn(p, &shift, &params, Variant::Printed)?);
                match index_rn(p, nu, &params) {
                    Ok(v) => acc[2].push(v),
                    Err(Error::ExcludedPath(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(&y)),
    )?;
    for (name, m) in ["drift, derived", "drift, printed", "index nu=0.5"].iter().zip(&acc) {
        let e = m.estimate();
        println!("{name:15} E[RN] = {:.4} ± {:.4}  ({:+.1} SE from 1, {} paths)", e.mean, e.stderr, (e.mean - 1.0) / e.stderr, e.count);
    }
    Ok(())
}
