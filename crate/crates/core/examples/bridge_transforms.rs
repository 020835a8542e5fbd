//! Bridge Laplace transforms between x and y: the drift functional, the
//! quadratic functional ∫tr(vX), the Hartman–Watson functional ∫tr(AX⁻¹)
//! and the joint transform. For n = 1 they are compared with the squared
//! Bessel bridge formulas.

use wishart_bridge::girsanov::DriftShift;
use wishart_bridge::transforms::{self, BridgeQuery, besq_oracle};
use wishart_bridge::{SpdMat, SymMat, Variant, WishartParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = WishartParams::with_identity_a(4.0, SymMat::scalar(2, -0.5), SymMat::identity(2))?;
    let y = SpdMat::new(SymMat::from_row_major(2, &[1.4, 0.2, 0.2, 0.8])?)?;
    let q = BridgeQuery::new(&p, SpdMat::identity(2), y, 1.0)?;
    let v = SymMat::from_diagonal(&[0.3, 0.1]);
    let u = DriftShift::new(SymMat::scalar(2, -0.25), &p)?;
    for variant in Variant::ALL {
        let show = |r: wishart_bridge::Result<f64>| match r {
            Ok(v) => format!("{v:.6}"),
            Err(e) => format!("not evaluable ({e})"),
        };
        println!("{variant}:");
        println!("  drift      {}", show(transforms::bridge_lt_drift(&q, &u, variant)));
        println!("  quadratic  {}", show(transforms::bridge_lt_quadratic(&q, &v, variant)));
        println!("  hw(1)      {}", show(transforms::bridge_lt_hartman_watson(&q, 1.0, variant)));
        println!("  joint      {}", show(transforms::bridge_lt_joint(&q, &v, 1.0, variant)));
    }

    println!("\nn = 1, alpha = 3, b = 0, x = 1, t = 1");
    let p1 = WishartParams::with_identity_a(3.0, SymMat::zeros(1), SymMat::identity(1))?;
    for (yy, vv, l) in [(0.5, 0.2, 0.0), (1.0, 0.5, 0.7), (2.0, 0.0, 1.5)] {
        let q = BridgeQuery::new(&p1, SpdMat::identity(1), SpdMat::new(SymMat::scalar(1, yy))?, 1.0)?;
        let got = transforms::bridge_lt_joint(&q, &SymMat::scalar(1, vv), l, Variant::Derived)?;
        let oracle = besq_oracle::scalar_bridge(3.0, 1.0, 0.0, 1.0, yy, 1.0, vv, l)?;
        println!("y={yy} v={vv} lambda={l}: {got:.10}  oracle {oracle:.10}");
    }
    Ok(())
}
