//! Quaternion rotations.
//!
//! Raw quaternions are stored `[w, x, y, z]` and are not required to be
//! normalized; every consumer normalizes on read.

use nalgebra::{Matrix3, RealField};

use crate::error::{Error, Result};

/// Rotation quaternion with unit norm, components `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: RealField + Copy> UnitQuat<T> {
    pub fn identity() -> Self {
        Self {
            w: T::one(),
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// Normalizes a raw quaternion. Fails on zero (or non-finite) norm.
    pub fn from_raw(raw: [T; 4]) -> Result<Self> {
        let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2] + raw[3] * raw[3]).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::invalid("quaternion has zero norm"));
        }
        Ok(Self {
            w: raw[0] / norm,
            x: raw[1] / norm,
            y: raw[2] / norm,
            z: raw[3] / norm,
        })
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Hamilton product `self ⊗ rhs`; the rotation of the product is
    /// `R(self) · R(rhs)`.
    pub fn mul(self, rhs: Self) -> Self {
        Self {
            w: self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            x: self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y,
            y: self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x,
            z: self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w,
        }
    }

    pub fn to_rotation(self) -> Matrix3<T> {
        let two: T = nalgebra::convert(2.0);
        let one = T::one();
        let Self { w, x, y, z } = self;
        Matrix3::new(
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        )
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation(m: &Matrix3<T>) -> Self {
        let one = T::one();
        let quarter: T = nalgebra::convert(0.25);
        let two: T = nalgebra::convert(2.0);
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let raw = if trace > T::zero() {
            let s = (trace + one).sqrt() * two;
            [
                quarter * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ]
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (one + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * two;
            [
                (m[(2, 1)] - m[(1, 2)]) / s,
                quarter * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ]
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (one + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * two;
            [
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                quarter * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ]
        } else {
            let s = (one + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * two;
            [
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                quarter * s,
            ]
        };
        // Renormalize to absorb rounding in the input matrix.
        Self::from_raw(raw).unwrap_or_else(|_| Self::identity())
    }
}

/// Rotation matrix of a raw (not necessarily unit) quaternion `[w, x, y, z]`.
pub fn quat_to_rotmat<T: RealField + Copy>(raw: [T; 4]) -> Result<Matrix3<T>> {
    Ok(UnitQuat::from_raw(raw)?.to_rotation())
}

/// Pulls a gradient on the rotation matrix back to the raw quaternion.
///
/// `grad_rot` is dL/dR with R = quat_to_rotmat(raw).
pub fn quat_to_rotmat_backward(raw: [f64; 4], grad_rot: &Matrix3<f64>) -> Result<[f64; 4]> {
    let norm = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2] + raw[3] * raw[3]).sqrt();
    let q = UnitQuat::from_raw(raw)?;
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let g = grad_rot;
    let dw = 2.0
        * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)]
            + x * g[(2, 1)]);
    let dx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let dy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)]
            - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let dz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)]
            - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    Ok(normalize_backward(q.to_array(), norm, [dw, dx, dy, dz]))
}

/// Gradient through `q̂ = q / |q|` given dL/dq̂.
pub fn normalize_backward(unit: [f64; 4], norm: f64, grad_unit: [f64; 4]) -> [f64; 4] {
    let dot: f64 = unit.iter().zip(&grad_unit).map(|(a, b)| a * b).sum();
    std::array::from_fn(|i| (grad_unit[i] - unit[i] * dot) / norm)
}

/// Gradient of `a ⊗ b` with respect to `b`, given dL/d(a ⊗ b).
///
/// Left multiplication by a unit quaternion is an orthogonal map, so this is
/// the product with the conjugate.
pub fn left_mul_backward(a: UnitQuat<f64>, grad_out: [f64; 4]) -> [f64; 4] {
    let (w, x, y, z) = (a.w, a.x, a.y, a.z);
    let [gw, gx, gy, gz] = grad_out;
    [
        w * gw + x * gx + y * gy + z * gz,
        -x * gw + w * gx + z * gy - y * gz,
        -y * gw - z * gx + w * gy + x * gz,
        -z * gw + y * gx - x * gy + w * gz,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut impl Rng) -> [f64; 4] {
        std::array::from_fn(|_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_and_half_turn() {
        let r = quat_to_rotmat([1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r, Matrix3::identity());
        let r = quat_to_rotmat([0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(r, Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, -1.0, 1.0)));
    }

    #[test]
    fn zero_norm_is_rejected() {
        let err = quat_to_rotmat([0.0f64; 4]).unwrap_err();
        assert_eq!(err.code(), "invalid-argument");
    }

    #[test]
    fn random_rotations_are_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            let r = quat_to_rotmat(q).unwrap();
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            assert!(err < 1e-12, "orthogonality error {err}");
            assert!((r.determinant() - 1.0).abs() < 1e-12);
            let neg = quat_to_rotmat(q.map(|c| -c)).unwrap();
            assert!((r - neg).abs().max() < 1e-15);
        }
    }

    #[test]
    fn single_precision_matches_double() {
        let q = [0.3, -0.2, 0.9, 0.1];
        let r64 = quat_to_rotmat(q).unwrap();
        let r32 = quat_to_rotmat(q.map(|c| c as f32)).unwrap();
        for (a, b) in r64.iter().zip(r32.iter()) {
            assert!((a - *b as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn product_composes_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = UnitQuat::from_raw(random_quat(&mut rng)).unwrap();
            let b = UnitQuat::from_raw(random_quat(&mut rng)).unwrap();
            let lhs = a.mul(b).to_rotation();
            let rhs = a.to_rotation() * b.to_rotation();
            assert!((lhs - rhs).abs().max() < 1e-12);
            let back = UnitQuat::from_rotation(&a.to_rotation()).to_rotation();
            assert!((back - a.to_rotation()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn rotmat_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let q = random_quat(&mut rng);
            let g = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let loss = |q: [f64; 4]| quat_to_rotmat(q).unwrap().component_mul(&g).sum();
            let analytic = quat_to_rotmat_backward(q, &g).unwrap();
            for i in 0..4 {
                let h = 1e-6;
                let mut qp = q;
                let mut qm = q;
                qp[i] += h;
                qm[i] -= h;
                let fd = (loss(qp) - loss(qm)) / (2.0 * h);
                assert!((fd - analytic[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", analytic[i]);
            }
        }
    }

    #[test]
    fn left_mul_backward_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = UnitQuat::from_raw(random_quat(&mut rng)).unwrap();
        let g = random_quat(&mut rng);
        let prod = |b: [f64; 4]| {
            let p = UnitQuat { w: b[0], x: b[1], y: b[2], z: b[3] };
            a.mul(p).to_array()
        };
        let analytic = left_mul_backward(a, g);
        for i in 0..4 {
            let mut e = [0.0; 4];
            e[i] = 1.0;
            let col = prod(e);
            let expected: f64 = col.iter().zip(&g).map(|(c, g)| c * g).sum();
            assert!((expected - analytic[i]).abs() < 1e-14);
        }
    }
}
