//! Projected-dimension lower bounds for each operator family (natural logs throughout).

use crate::error::{Error, Result};

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::BadParameter(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

fn check_counts(r: usize, k: usize, n: usize) -> Result<()> {
    if r == 0 || k == 0 || n == 0 {
        return Err(Error::BadParameter(format!(
            "r, k, N must all be >= 1 (got r={r}, k={k}, N={n})"
        )));
    }
    Ok(())
}

/// Real-valued Gaussian bound
/// `2ε⁻²(r + log(2k²/δ) + √(4r·log(2k²/δ)) + 12·log(4N/δ))`.
pub fn gaussian_dimension_bound(r: usize, k: usize, n: usize, eps: f64, delta: f64) -> Result<f64> {
    check_unit_interval("eps", eps)?;
    check_unit_interval("delta", delta)?;
    check_counts(r, k, n)?;
    let (r, k, n) = (r as f64, k as f64, n as f64);
    let l = (2.0 * k * k / delta).ln();
    Ok(2.0 / (eps * eps) * (r + l + (4.0 * r * l).sqrt() + 12.0 * (4.0 * n / delta).ln()))
}

/// Smallest `p` for which a Gaussian projection embeds every pairwise union of
/// subspaces and every data/noise column with distortion `eps` w.p. `1 − δ`.
pub fn min_dimension_gaussian(r: usize, k: usize, n: usize, eps: f64, delta: f64) -> Result<usize> {
    Ok(gaussian_dimension_bound(r, k, n, eps, delta)?.ceil() as usize)
}

/// Real-valued uniform-sampling bound `8ε⁻²μ₀(r·log(4rk²/δ) + log(8N/δ))`.
pub fn uniform_dimension_bound(
    r: usize,
    k: usize,
    n: usize,
    eps: f64,
    delta: f64,
    mu0: f64,
) -> Result<f64> {
    check_unit_interval("eps", eps)?;
    check_unit_interval("delta", delta)?;
    check_counts(r, k, n)?;
    if !(mu0 >= 1.0) || !mu0.is_finite() {
        return Err(Error::BadParameter(format!("mu0 must be >= 1, got {mu0}")));
    }
    let (r, k, n) = (r as f64, k as f64, n as f64);
    Ok(8.0 / (eps * eps) * mu0 * (r * (4.0 * r * k * k / delta).ln() + (8.0 * n / delta).ln()))
}

/// Smallest `p` for uniform row sampling on `μ₀`-incoherent data.
pub fn min_dimension_uniform(
    r: usize,
    k: usize,
    n: usize,
    eps: f64,
    delta: f64,
    mu0: f64,
) -> Result<usize> {
    Ok(uniform_dimension_bound(r, k, n, eps, delta, mu0)?.ceil() as usize)
}

/// FJLT: `p = c·r/ε²`; the constant `c` is not known in closed form and must be supplied.
pub fn min_dimension_fjlt(r: usize, eps: f64, c: f64) -> Result<usize> {
    check_unit_interval("eps", eps)?;
    check_counts(r, 1, 1)?;
    if !(c > 0.0) {
        return Err(Error::BadParameter(format!("constant must be > 0, got {c}")));
    }
    Ok((c * r as f64 / (eps * eps)).ceil() as usize)
}

/// Count sketch: `p = c·r²/(ε²δ)` with caller-supplied constant `c`.
pub fn min_dimension_sketch(r: usize, eps: f64, delta: f64, c: f64) -> Result<usize> {
    check_unit_interval("eps", eps)?;
    check_unit_interval("delta", delta)?;
    check_counts(r, 1, 1)?;
    if !(c > 0.0) {
        return Err(Error::BadParameter(format!("constant must be > 0, got {c}")));
    }
    let r = r as f64;
    Ok((c * r * r / (eps * eps * delta)).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_reference_value() {
        // 2/0.25 * (5 + ln 80 + sqrt(20 ln 80) + 12 ln 4000) = 946.16...
        let l: f64 = 80f64.ln();
        let expect = 8.0 * (5.0 + l + (20.0 * l).sqrt() + 12.0 * 4000f64.ln());
        assert!((gaussian_dimension_bound(5, 2, 100, 0.5, 0.1).unwrap() - expect).abs() < 1e-9);
        assert_eq!(min_dimension_gaussian(5, 2, 100, 0.5, 0.1).unwrap(), 947);
    }

    #[test]
    fn gaussian_scales_as_inverse_square_eps() {
        let a = gaussian_dimension_bound(5, 3, 200, 0.4, 0.1).unwrap();
        let b = gaussian_dimension_bound(5, 3, 200, 0.2, 0.1).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        let pa = min_dimension_gaussian(5, 3, 200, 0.4, 0.1).unwrap() as f64;
        let pb = min_dimension_gaussian(5, 3, 200, 0.2, 0.1).unwrap() as f64;
        assert!((pb - 4.0 * pa).abs() <= 4.0);
    }

    #[test]
    fn gaussian_is_monotone_in_counts() {
        let base = min_dimension_gaussian(3, 2, 50, 0.3, 0.1).unwrap();
        assert!(min_dimension_gaussian(4, 2, 50, 0.3, 0.1).unwrap() >= base);
        assert!(min_dimension_gaussian(3, 3, 50, 0.3, 0.1).unwrap() >= base);
        assert!(min_dimension_gaussian(3, 2, 51, 0.3, 0.1).unwrap() >= base);
    }

    #[test]
    fn uniform_reference_and_scaling() {
        let expect = 8.0 / 0.25 * 2.0 * (4.0 * (4.0f64 * 4.0 * 4.0 / 0.1).ln() + (400.0f64 / 0.1).ln());
        let got = uniform_dimension_bound(4, 2, 50, 0.5, 0.1, 2.0).unwrap();
        assert!((got - expect).abs() < 1e-9);
        assert_eq!(min_dimension_uniform(4, 2, 50, 0.5, 0.1, 2.0).unwrap(), expect.ceil() as usize);
        let one = uniform_dimension_bound(4, 2, 50, 0.5, 0.1, 1.0).unwrap();
        assert!((got / one - 2.0).abs() < 1e-12);
        assert!(min_dimension_uniform(5, 2, 50, 0.5, 0.1, 2.0).unwrap() >= min_dimension_uniform(4, 2, 50, 0.5, 0.1, 2.0).unwrap());
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(min_dimension_gaussian(5, 2, 100, 1.0, 0.1).is_err());
        assert!(min_dimension_gaussian(5, 2, 100, 0.5, 0.0).is_err());
        assert!(min_dimension_uniform(5, 2, 100, 0.5, 0.1, 0.5).is_err());
        assert!(min_dimension_gaussian(0, 2, 100, 0.5, 0.1).is_err());
        assert!(min_dimension_fjlt(3, 0.5, 0.0).is_err());
    }

    #[test]
    fn fast_transform_bounds() {
        assert_eq!(min_dimension_fjlt(5, 0.5, 1.0).unwrap(), 20);
        assert_eq!(min_dimension_sketch(2, 0.5, 0.5, 1.0).unwrap(), 32);
    }
}
