//! Phi functions for exponential integrators.
//!
//! `phi1(z) = (e^z - 1)/z`, `phi2(z) = (e^z - 1 - z)/z^2`,
//! `phi3(z) = (e^z - 1 - z - z^2/2)/z^3`, with the removable singularities
//! filled in: `phi1(0) = 1`, `phi2(0) = 1/2`, `phi3(0) = 1/6`.
//!
//! Each function evaluates a truncated series near the origin and the direct
//! formula elsewhere; the direct formulas are built on a complex `expm1` so
//! they stay accurate where `e^z` is close to 1.

use num_complex::Complex64;

/// Magnitude below which `phi1` uses its fixed five-term polynomial.
pub const PHI1_SERIES_RADIUS: f64 = 1e-3;

/// Magnitude below which `phi2`/`phi3` switch to their series; inside this
/// disk the direct formulas lose digits to cancellation.
const HIGHER_SERIES_RADIUS: f64 = 8.0;

/// `e^z - 1` without cancellation for `z` near any point where `e^z = 1`.
pub fn expm1c(z: Complex64) -> Complex64 {
    let em = z.re.exp_m1();
    let (sin_y, cos_y) = z.im.sin_cos();
    let half_sin = (0.5 * z.im).sin();
    Complex64::new(em * cos_y - 2.0 * half_sin * half_sin, (em + 1.0) * sin_y)
}

/// `(e^z - 1)/z` with `phi1(0) = 1` exactly.
///
/// Relative accuracy is better than 1e-12 for `|z| <= 50`.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < PHI1_SERIES_RADIUS {
        // 1 + z/2 + z^2/6 + z^3/24 + z^4/120; the omitted term is ~1e-18
        // at the branch point.
        let c = [1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];
        horner(z, &c)
    } else {
        expm1c(z) / z
    }
}

/// Derivative of `phi1`, used by reverse-mode gradients.
pub fn phi1_prime(z: Complex64) -> Complex64 {
    if z.norm() < PHI1_SERIES_RADIUS {
        // 1/2 + z/3 + z^2/8 + z^3/30 + z^4/144
        let c = [0.5, 1.0 / 3.0, 1.0 / 8.0, 1.0 / 30.0, 1.0 / 144.0];
        horner(z, &c)
    } else {
        (z.exp() - phi1(z)) / z
    }
}

/// `(e^z - 1 - z)/z^2` with `phi2(0) = 1/2`.
pub fn phi2(z: Complex64) -> Complex64 {
    if z.norm() <= HIGHER_SERIES_RADIUS {
        phi_series(z, 2)
    } else {
        (expm1c(z) - z) / (z * z)
    }
}

/// `(e^z - 1 - z - z^2/2)/z^3` with `phi3(0) = 1/6`.
pub fn phi3(z: Complex64) -> Complex64 {
    if z.norm() <= HIGHER_SERIES_RADIUS {
        phi_series(z, 3)
    } else {
        (expm1c(z) - z - 0.5 * z * z) / (z * z * z)
    }
}

/// Propagator and phi values for one eigenvalue and step size.
#[derive(Debug, Clone, Copy)]
pub struct PhiCoeffs {
    pub exp_z: Complex64,
    pub phi1: Complex64,
    pub phi2: Complex64,
    pub phi3: Complex64,
}

/// Evaluates `e^{h lambda}` and `phi1..phi3` at `z = h*lambda`.
///
/// Relative accuracy is better than 1e-10 for `|h*lambda| <= 100`; conjugate
/// inputs give conjugate outputs.
pub fn stable_phi_coefficients(lambda: Complex64, h: f64) -> PhiCoeffs {
    let z = h * lambda;
    PhiCoeffs {
        exp_z: z.exp(),
        phi1: phi1(z),
        phi2: phi2(z),
        phi3: phi3(z),
    }
}

/// `sum_{j>=0} z^j / (j+k)!`, the series form of `phi_k`.
fn phi_series(z: Complex64, k: u32) -> Complex64 {
    let mut term = Complex64::new(1.0 / factorial(k), 0.0);
    let mut sum = term;
    for j in 1..200u32 {
        term = term * z / f64::from(j + k);
        sum += term;
        if term.norm() <= 1e-18 * sum.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    sum
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product::<f64>().max(1.0)
}

fn horner(z: Complex64, coeffs: &[f64]) -> Complex64 {
    let mut acc = Complex64::new(*coeffs.last().expect("nonempty coefficients"), 0.0);
    for &c in coeffs.iter().rev().skip(1) {
        acc = acc * z + c;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi1_at_zero_is_exactly_one() {
        let v = phi1(Complex64::new(0.0, 0.0));
        assert_eq!(v.re, 1.0);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn phi1_at_minus_one_matches_closed_form() {
        let v = phi1(Complex64::new(-1.0, 0.0));
        let expected = 1.0 - (-1.0f64).exp();
        assert!(
            (v.re - expected).abs() < 1e-15 && v.im.abs() < 1e-15,
            "phi1(-1) = {v}, expected {expected}"
        );
    }

    #[test]
    fn phi_values_at_origin() {
        let c = stable_phi_coefficients(Complex64::new(0.0, 0.0), 1.0);
        assert_eq!(c.exp_z, Complex64::new(1.0, 0.0));
        assert_eq!(c.phi1, Complex64::new(1.0, 0.0));
        assert!((c.phi2.re - 0.5).abs() < 1e-16);
        assert!((c.phi3.re - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn strongly_damped_step_matches_expected_phi1() {
        // h*lambda = -20: phi1 = (1 - e^{-20})/20
        let c = stable_phi_coefficients(Complex64::new(-2.0, 0.0), 10.0);
        let expected = (1.0 - (-20.0f64).exp()) / 20.0;
        assert!(
            (c.phi1.re - expected).abs() < 1e-15,
            "phi1(-20) = {}, expected {expected:.12}",
            c.phi1.re
        );
        assert!(
            (expected - 0.05).abs() < 1e-9,
            "phi1(-20) should be 0.05 to nine digits"
        );
    }

    #[test]
    fn conjugate_symmetry() {
        let z = Complex64::new(-3.7, 2.9);
        for (a, b) in [
            (phi1(z), phi1(z.conj())),
            (phi2(z), phi2(z.conj())),
            (phi3(z), phi3(z.conj())),
        ] {
            assert!((a - b.conj()).norm() < 1e-15 * a.norm().max(1.0));
        }
    }

    #[test]
    fn series_and_direct_branches_agree_at_the_seam() {
        for &scale in &[0.999e-3, 1.001e-3] {
            for angle_step in 0..8 {
                let theta = angle_step as f64 * std::f64::consts::FRAC_PI_4;
                let z = Complex64::from_polar(scale, theta);
                let direct = expm1c(z) / z;
                let series = {
                    let c = [1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];
                    horner(z, &c)
                };
                assert!(
                    (direct - series).norm() <= 1e-13 * series.norm(),
                    "branch mismatch at z={z}: direct={direct}, series={series}"
                );
            }
        }
    }

    #[test]
    fn phi1_prime_matches_central_difference() {
        let z = Complex64::new(-1.3, 0.7);
        let h = 1e-5;
        let fd = (phi1(z + Complex64::new(h, 0.0)) - phi1(z - Complex64::new(h, 0.0)))
            / Complex64::new(2.0 * h, 0.0);
        let an = phi1_prime(z);
        assert!(
            (fd - an).norm() < 1e-9,
            "phi1' mismatch: fd={fd}, analytic={an}"
        );
    }

    #[test]
    fn magnitude_bounded_by_real_axis_value_in_left_half_plane() {
        // |phi1(x + iy)| <= phi1(x) for x <= 0.
        for &x in &[-30.0, -10.0, -1.0, -0.01, 0.0] {
            for &y in &[0.0, 0.3, 2.0, 15.0, 40.0] {
                let lhs = phi1(Complex64::new(x, y)).norm();
                let rhs = phi1(Complex64::new(x, 0.0)).re;
                assert!(
                    lhs <= rhs * (1.0 + 1e-12),
                    "|phi1({x}+{y}i)| = {lhs} exceeds phi1({x}) = {rhs}"
                );
            }
        }
    }
}
