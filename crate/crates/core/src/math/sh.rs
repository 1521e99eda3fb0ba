//! Real spherical-harmonics color, degrees 0 through 3.
//!
//! Coefficients are stored as `(degree + 1)²` RGB triples, band by band.
//! The evaluated color is `Σ c_k Y_k(d) + 0.5`, clamped at zero.

use nalgebra::{RealField, Vector3};

use crate::error::{Error, Result};

pub const MAX_SH_DEGREE: usize = 3;

pub const SH_C0: f64 = 0.28209479177387814;
pub const SH_C1: f64 = 0.4886025119029199;
pub const SH_C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
pub const SH_C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

/// Number of RGB coefficient triples for a degree.
pub const fn sh_coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Spherical-harmonic color: `(degree + 1)²` RGB coefficient triples.
#[derive(Clone, Debug, PartialEq)]
pub struct ShColor<T> {
    degree: usize,
    coeffs: Vec<[T; 3]>,
}

impl<T: RealField + Copy> ShColor<T> {
    pub fn new(degree: usize, coeffs: Vec<[T; 3]>) -> Result<Self> {
        if degree > MAX_SH_DEGREE {
            return Err(Error::invalid(format!("SH degree {degree} exceeds {MAX_SH_DEGREE}")));
        }
        if coeffs.len() != sh_coeff_count(degree) {
            return Err(Error::invalid(format!(
                "degree {degree} needs {} coefficient triples, got {}",
                sh_coeff_count(degree),
                coeffs.len()
            )));
        }
        Ok(Self { degree, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[[T; 3]] {
        &self.coeffs
    }

    pub fn eval(&self, view_dir: &Vector3<T>) -> Vector3<T> {
        eval_sh(self.degree, &self.coeffs, view_dir)
    }
}

/// Real SH basis values at a unit direction, `(degree + 1)²` entries.
pub fn sh_basis<T: RealField + Copy>(degree: usize, dir: &Vector3<T>) -> Vec<T> {
    let c = |v: f64| -> T { nalgebra::convert(v) };
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut out = Vec::with_capacity(sh_coeff_count(degree));
    out.push(c(SH_C0));
    if degree >= 1 {
        out.push(-c(SH_C1) * y);
        out.push(c(SH_C1) * z);
        out.push(-c(SH_C1) * x);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out.push(c(SH_C2[0]) * x * y);
        out.push(c(SH_C2[1]) * y * z);
        out.push(c(SH_C2[2]) * (c(2.0) * zz - xx - yy));
        out.push(c(SH_C2[3]) * x * z);
        out.push(c(SH_C2[4]) * (xx - yy));
        if degree >= 3 {
            out.push(c(SH_C3[0]) * y * (c(3.0) * xx - yy));
            out.push(c(SH_C3[1]) * x * y * z);
            out.push(c(SH_C3[2]) * y * (c(4.0) * zz - xx - yy));
            out.push(c(SH_C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy));
            out.push(c(SH_C3[4]) * x * (c(4.0) * zz - xx - yy));
            out.push(c(SH_C3[5]) * z * (xx - yy));
            out.push(c(SH_C3[6]) * x * (xx - c(3.0) * yy));
        }
    }
    out
}

/// Partial derivatives of each basis polynomial with respect to `(x, y, z)`.
pub fn sh_basis_gradient(degree: usize, dir: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let v = Vector3::new;
    let mut out = vec![Vector3::zeros()];
    if degree >= 1 {
        out.push(v(0.0, -SH_C1, 0.0));
        out.push(v(0.0, 0.0, SH_C1));
        out.push(v(-SH_C1, 0.0, 0.0));
    }
    if degree >= 2 {
        let c = SH_C2;
        out.push(v(c[0] * y, c[0] * x, 0.0));
        out.push(v(0.0, c[1] * z, c[1] * y));
        out.push(v(-2.0 * c[2] * x, -2.0 * c[2] * y, 4.0 * c[2] * z));
        out.push(v(c[3] * z, 0.0, c[3] * x));
        out.push(v(2.0 * c[4] * x, -2.0 * c[4] * y, 0.0));
        if degree >= 3 {
            let c = SH_C3;
            let (xx, yy, zz) = (x * x, y * y, z * z);
            out.push(v(6.0 * c[0] * x * y, c[0] * (3.0 * xx - 3.0 * yy), 0.0));
            out.push(v(c[1] * y * z, c[1] * x * z, c[1] * x * y));
            out.push(v(-2.0 * c[2] * x * y, c[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * c[2] * y * z));
            out.push(v(-6.0 * c[3] * x * z, -6.0 * c[3] * y * z, c[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)));
            out.push(v(c[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * c[4] * x * y, 8.0 * c[4] * x * z));
            out.push(v(2.0 * c[5] * x * z, -2.0 * c[5] * y * z, c[5] * (xx - yy)));
            out.push(v(c[6] * (3.0 * xx - 3.0 * yy), -6.0 * c[6] * x * y, 0.0));
        }
    }
    out
}

/// Evaluates the color of `coeffs` seen along `view_dir` (normalized here).
pub fn eval_sh<T: RealField + Copy>(degree: usize, coeffs: &[[T; 3]], view_dir: &Vector3<T>) -> Vector3<T> {
    let dir = view_dir.try_normalize(T::default_epsilon()).unwrap_or_else(Vector3::z);
    let basis = sh_basis(degree, &dir);
    let half: T = nalgebra::convert(0.5);
    let mut rgb = Vector3::repeat(half);
    for (b, c) in basis.iter().zip(coeffs) {
        for ch in 0..3 {
            rgb[ch] += *b * c[ch];
        }
    }
    rgb.map(|v| v.max(T::zero()))
}

/// Adjoint of [`eval_sh`].
///
/// Writes dL/dcoeffs into `grad_coeffs` (accumulating) and returns dL/dview_dir
/// for the unnormalized direction. Channels clamped at zero pass no gradient.
pub fn eval_sh_backward(
    degree: usize,
    coeffs: &[[f64; 3]],
    view_dir: &Vector3<f64>,
    grad_rgb: &Vector3<f64>,
    grad_coeffs: &mut [[f64; 3]],
) -> Vector3<f64> {
    let norm = view_dir.norm();
    let dir = view_dir / norm;
    let basis = sh_basis(degree, &dir);
    let mut raw = Vector3::repeat(0.5);
    for (b, c) in basis.iter().zip(coeffs) {
        for ch in 0..3 {
            raw[ch] += b * c[ch];
        }
    }
    let g = Vector3::from_fn(|ch, _| if raw[ch] < 0.0 { 0.0 } else { grad_rgb[ch] });
    for (b, gc) in basis.iter().zip(grad_coeffs.iter_mut()) {
        for ch in 0..3 {
            gc[ch] += b * g[ch];
        }
    }
    if degree == 0 {
        return Vector3::zeros();
    }
    let dbasis = sh_basis_gradient(degree, &dir);
    let mut grad_dir = Vector3::zeros();
    for (db, c) in dbasis.iter().zip(coeffs) {
        let w = c[0] * g[0] + c[1] * g[1] + c[2] * g[2];
        grad_dir += db * w;
    }
    (grad_dir - dir * dir.dot(&grad_dir)) / norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn band_zero_is_view_independent() {
        let c = ShColor::new(0, vec![[0.1, -0.2, 0.3]]).unwrap();
        let a = c.eval(&Vector3::new(0.0, 0.0, 1.0));
        let b = c.eval(&Vector3::new(0.3, -0.8, 0.1));
        assert_eq!(a, b);
        assert!((a.x - (0.5 + 0.1 * SH_C0)).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_give_mid_gray() {
        let c = ShColor::new(3, vec![[0.0; 3]; 16]).unwrap();
        assert_eq!(c.eval(&Vector3::new(1.0, 2.0, 3.0)), Vector3::repeat(0.5));
    }

    #[test]
    fn coefficient_count_is_checked() {
        assert!(ShColor::<f64>::new(2, vec![[0.0; 3]; 4]).is_err());
        assert!(ShColor::<f64>::new(4, vec![[0.0; 3]; 25]).is_err());
    }

    #[test]
    fn negative_colors_clamp_to_zero() {
        let c = ShColor::new(0, vec![[-10.0, 0.0, 0.0]]).unwrap();
        assert_eq!(c.eval(&Vector3::z()).x, 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for degree in 0..=3 {
            let n = sh_coeff_count(degree);
            let coeffs: Vec<[f64; 3]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-0.3..0.3))).collect();
            let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0));
            let g = Vector3::new(0.3, -0.7, 1.1);
            let loss = |c: &[[f64; 3]], d: &Vector3<f64>| eval_sh(degree, c, d).dot(&g);
            let mut gc = vec![[0.0; 3]; n];
            let gd = eval_sh_backward(degree, &coeffs, &dir, &g, &mut gc);
            let h = 1e-6;
            for i in 0..3 {
                let mut dp = dir;
                let mut dm = dir;
                dp[i] += h;
                dm[i] -= h;
                let fd = (loss(&coeffs, &dp) - loss(&coeffs, &dm)) / (2.0 * h);
                assert!((fd - gd[i]).abs() < 1e-7, "deg {degree} dir {i}: {fd} vs {}", gd[i]);
            }
            for k in 0..n {
                for ch in 0..3 {
                    let mut cp = coeffs.clone();
                    let mut cm = coeffs.clone();
                    cp[k][ch] += h;
                    cm[k][ch] -= h;
                    let fd = (loss(&cp, &dir) - loss(&cm, &dir)) / (2.0 * h);
                    assert!((fd - gc[k][ch]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn basis_matches_legendre_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let d = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let fast = sh_basis(3, &Vector3::from(d).normalize());
            let slow = crate::verify::oracles::legendre_sh_basis(3, d);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}
