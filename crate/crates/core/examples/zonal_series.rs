//! ₀F₁ of a matrix argument by zonal-polynomial series. For n = 1 the series
//! is a modified Bessel function: ₀F₁(b; z) = Γ(b) z^{(1−b)/2} I_{b−1}(2√z).

use wishart_bridge::SymMat;
use wishart_bridge::dist::zonal::{SeriesControl, hyp0f1_eigs, hyp0f1_matrix};
use wishart_bridge::special::{bessel_i, ln_gamma};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ctrl = SeriesControl::default();
    println!("      z   series            Bessel identity");
    for z in [0.1, 1.0, 4.0, 10.0] {
        let b = 1.5;
        let s = hyp0f1_eigs(b, &[z], ctrl)?;
        let exact = ln_gamma(b).exp() * z.powf((1.0 - b) / 2.0) * bessel_i(b - 1.0, 2.0 * z.sqrt())?;
        println!("{z:7.2}   {:.12}   {exact:.12}", s.value);
    }

    let m = SymMat::from_row_major(2, &[2.0, 0.3, 0.3, 1.0])?;
    let v = hyp0f1_matrix(2.0, &m, ctrl)?;
    println!("n = 2: 0F1(2; m) = {:.12} (degree {}, truncation estimate {:.1e})", v.value, v.degree, v.truncation_estimate);
    Ok(())
}
