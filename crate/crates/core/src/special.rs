//! Scalar special functions and quadrature.

use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

use crate::error::{Error, Result};

pub fn ln_gamma(x: f64) -> f64 {
    statrs_ln_gamma(x)
}

/// `ln I_ν(z)` for `ν > −1`, `z ≥ 0`, from the power series
/// `I_ν(z) = (z/2)^ν Σ_k (z²/4)^k / (k! Γ(k+ν+1))`.
///
/// All terms are positive, so the series is summed by the ratio recurrence
/// with periodic rescaling instead of a cancellation-prone asymptotic form.
pub fn ln_bessel_i(nu: f64, z: f64) -> Result<f64> {
    if !(nu > -1.0) {
        return Err(Error::domain(format!("Bessel order {nu} below −1")));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::domain(format!("Bessel argument {z} must be finite and ≥ 0")));
    }
    if z == 0.0 {
        return Ok(if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let q = 0.25 * z * z;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut log_scale = 0.0f64;
    let mut k = 0.0f64;
    loop {
        term *= q / ((k + 1.0) * (k + 1.0 + nu));
        k += 1.0;
        sum += term;
        if sum > 1e250 {
            sum *= 1e-250;
            term *= 1e-250;
            log_scale += 250.0 * std::f64::consts::LN_10;
        }
        // past the peak the ratio is below one and the tail is bounded geometrically
        let ratio = q / ((k + 1.0) * (k + 1.0 + nu));
        if ratio < 1.0 && term < 1e-17 * sum * (1.0 - ratio) {
            break;
        }
        if k > 1e7 {
            return Err(Error::Numerical(format!("Bessel series for z = {z} did not terminate")));
        }
    }
    Ok(nu * (0.5 * z).ln() - ln_gamma(nu + 1.0) + sum.ln() + log_scale)
}

pub fn bessel_i(nu: f64, z: f64) -> Result<f64> {
    Ok(ln_bessel_i(nu, z)?.exp())
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        // Abramowitz & Stegun table 9.8
        assert!((bessel_i(0.0, 1.0).unwrap() - 1.266_065_877_752_008).abs() < 1e-14);
        assert!((bessel_i(1.0, 1.0).unwrap() - 0.565_159_103_992_485).abs() < 1e-14);
        assert!((bessel_i(0.0, 2.0).unwrap() - 2.279_585_302_336_067).abs() < 1e-13);
        // closed form for half-integer order
        let z = 3.7f64;
        let half = (2.0 / (std::f64::consts::PI * z)).sqrt() * z.sinh();
        assert!((bessel_i(0.5, z).unwrap() / half - 1.0).abs() < 1e-13);
    }

    #[test]
    fn bessel_large_argument_no_overflow() {
        // ln I_0(z) ~ z − ½ ln(2πz) + ln(1 + 1/(8z))
        let z = 2000.0f64;
        let asym = z - 0.5 * (2.0 * std::f64::consts::PI * z).ln() + (1.0 + 1.0 / (8.0 * z)).ln();
        assert!((ln_bessel_i(0.0, z).unwrap() - asym).abs() < 1e-6);
    }

    #[test]
    fn bessel_domain() {
        assert!(ln_bessel_i(-1.5, 1.0).is_err());
        assert_eq!(ln_bessel_i(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(ln_bessel_i(1.0, 0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn simpson_polynomial_and_exp() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12, 30);
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 1.0, 1e-13, 40);
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }
}
