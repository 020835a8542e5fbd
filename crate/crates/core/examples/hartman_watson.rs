//! The Hartman–Watson transform E[exp(−(λ²/2)∫tr(AX⁻¹)) | X_t = y] is an
//! index change α → α + 2ν(λ). The two candidate maps ν(λ) differ; for n = 1
//! the derived one reproduces the Bessel ratio I_{√(μ²+λ²)}/I_μ.

use wishart_bridge::girsanov::nu_for_lambda;
use wishart_bridge::transforms::{self, BridgeQuery, besq_oracle};
use wishart_bridge::{SpdMat, SymMat, Variant, WishartParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alpha = 4.0;
    for l in [0.5, 1.0, 2.0] {
        println!(
            "lambda {l}: nu derived {:.6}, printed {:.6}",
            nu_for_lambda(l, alpha, 1, Variant::Derived)?,
            nu_for_lambda(l, alpha, 1, Variant::Printed)?
        );
    }
    let p = WishartParams::with_identity_a(alpha, SymMat::zeros(1), SymMat::identity(1))?;
    for y in [0.5, 1.0, 3.0] {
        let q = BridgeQuery::new(&p, SpdMat::identity(1), SpdMat::new(SymMat::scalar(1, y))?, 1.0)?;
        let d = transforms::bridge_lt_hartman_watson(&q, 1.0, Variant::Derived)?;
        let pr = transforms::bridge_lt_hartman_watson(&q, 1.0, Variant::Printed)?;
        let o = besq_oracle::hartman_watson(alpha, 1.0, y, 1.0, 1.0)?;
        println!("y = {y}: derived {d:.8}  printed {pr:.8}  Bessel ratio {o:.8}");
    }
    Ok(())
}
