//! Closed-form kernels for a constant reaction coefficient.
//!
//! For `a + lambda = beta` constant the kernel problem is time independent and
//! solved by
//!
//! ```text
//! Dirichlet-left:  k(x,y) = beta * y * I1(z) / z
//! Neumann-left:    k(x,y) = beta * x * I1(z) / z,     z = sqrt(beta (x^2 - y^2))
//! ```
//!
//! These serve as an oracle for the series synthesis; they are computed from
//! the power series of the modified Bessel function and share no code with
//! [`crate::kernel`].

use crate::kernel::KernelFamily;

/// `I_nu(z) / z^nu` as a power series in `s = z^2`. Entire in `s`, so a
/// negative `s` (oscillatory case) is fine too.
pub fn scaled_bessel_i(nu: u32, s: f64) -> f64 {
    let q = s / 4.0;
    let mut term = 1.0 / (2f64.powi(nu as i32) * factorial(nu));
    let mut sum = term;
    for k in 1..200u32 {
        term *= q / (k as f64 * (k + nu) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `I1(z)` for real `z`.
pub fn bessel_i1(z: f64) -> f64 {
    z * scaled_bessel_i(1, z * z)
}

/// Closed-form kernel value for constant `beta = a + lambda`.
pub fn constant_kernel(family: KernelFamily, beta: f64, x: f64, y: f64) -> f64 {
    let s = beta * (x * x - y * y);
    let weight = match family {
        KernelFamily::DirichletLeft => y,
        KernelFamily::NeumannLeft => x,
    };
    beta * weight * scaled_bessel_i(1, s)
}

/// `d/dx` of [`constant_kernel`], using `d/dz (I1(z)/z) = I2(z)/z`.
pub fn constant_kernel_dx(family: KernelFamily, beta: f64, x: f64, y: f64) -> f64 {
    let s = beta * (x * x - y * y);
    let ds_dx_part = beta * beta * x * scaled_bessel_i(2, s);
    match family {
        KernelFamily::DirichletLeft => y * ds_dx_part,
        KernelFamily::NeumannLeft => beta * scaled_bessel_i(1, s) + x * ds_dx_part,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i1_reference_values() {
        // Abramowitz & Stegun table 9.8.
        assert!((bessel_i1(1.0) - 0.565_159_103_992_485).abs() < 1e-14);
        assert!((bessel_i1(2.0) - 1.590_636_854_637_329).abs() < 1e-13);
        assert!((bessel_i1(5.0) - 24.335_642_142_450_5).abs() < 1e-10);
        assert_eq!(scaled_bessel_i(1, 0.0), 0.5);
    }

    #[test]
    fn closed_form_diagonal_and_boundary() {
        let beta = 7.0;
        for &x in &[0.2, 0.6, 1.0] {
            for fam in [KernelFamily::DirichletLeft, KernelFamily::NeumannLeft] {
                assert!((constant_kernel(fam, beta, x, x) - beta * x / 2.0).abs() < 1e-14);
            }
            assert_eq!(constant_kernel(KernelFamily::DirichletLeft, beta, x, 0.0), 0.0);
        }
    }

    #[test]
    fn closed_form_solves_kernel_pde() {
        // k_xx - k_yy = beta k by central differences.
        let beta = 10.0;
        let h = 1e-3;
        for fam in [KernelFamily::DirichletLeft, KernelFamily::NeumannLeft] {
            let k = |x, y| constant_kernel(fam, beta, x, y);
            for &(x, y) in &[(0.7, 0.3), (0.9, 0.1), (0.5, 0.45)] {
                let kxx = (k(x + h, y) - 2.0 * k(x, y) + k(x - h, y)) / (h * h);
                let kyy = (k(x, y + h) - 2.0 * k(x, y) + k(x, y - h)) / (h * h);
                assert!((kxx - kyy - beta * k(x, y)).abs() < 1e-4, "{fam:?} {x} {y}");
                let hd = 1e-5;
                let kx = (k(x + hd, y) - k(x - hd, y)) / (2.0 * hd);
                assert!((kx - constant_kernel_dx(fam, beta, x, y)).abs() < 1e-6);
            }
            if fam == KernelFamily::NeumannLeft {
                let ky0 = (k(0.8, h) - k(0.8, 0.0)) / h;
                assert!(ky0.abs() < 1e-2);
            }
        }
    }
}
