//! Small SO(3) toolbox shared by the dynamics, seeding and environment code.
//!
//! Rotation matrices are plain `Matrix3<f64>` (body→world convention). The
//! integrator works on the raw matrix and re-orthonormalizes after every
//! step, so helpers here are written for matrices that are close to, but not
//! exactly on, the manifold.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Skew-symmetric (hat) matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]: extracts the axial vector of a skew-symmetric matrix.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Re-orthonormalizes a near-rotation matrix by Gram-Schmidt on its columns.
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let x = m.column(0).into_owned();
    let y = m.column(1).into_owned();
    let x = x.normalize();
    let y = (y - x * x.dot(&y)).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// Geodesic rotation angle of `r`, i.e. `arccos((trace(r) - 1) / 2)`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    (((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
}

/// Geodesic angle between two rotations.
pub fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// Logarithmic map: axis-angle vector of a rotation matrix.
///
/// The rotation must be at least `1e-6` away from the π ambiguity; callers
/// that difference consecutive attitudes check this via [`log_map_checked`].
pub fn log_map(r: &Matrix3<f64>) -> Vector3<f64> {
    let rot = Rotation3::from_matrix_unchecked(*r);
    UnitQuaternion::from_rotation_matrix(&rot).scaled_axis()
}

/// [`log_map`] that rejects rotations within `1e-6` of the π ambiguity.
pub fn log_map_checked(r: &Matrix3<f64>) -> Option<Vector3<f64>> {
    if rotation_angle(r) >= std::f64::consts::PI - 1e-6 {
        None
    } else {
        Some(log_map(r))
    }
}

/// Exponential map: rotation matrix from an axis-angle vector (Rodrigues).
pub fn exp_map(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    if theta < 1e-12 {
        return Matrix3::identity() + hat(w);
    }
    let k = hat(&(w / theta));
    Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos())
}

/// Rotation about the world z-axis.
pub fn rot_z(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Builds a body→world rotation from a desired body z-axis and a yaw angle,
/// using the usual flatness completion: `y_b = z_b × x_c`, `x_b = y_b × z_b`
/// with the heading reference `x_c = [cos yaw, sin yaw, 0]`.
///
/// Returns `None` when `z_b` is within ~1e-6 rad of the heading reference
/// (horizontal body z-axis aligned with the yaw direction), where the
/// completion is singular.
pub fn from_z_axis_yaw(z_axis: &Vector3<f64>, yaw: f64) -> Option<Matrix3<f64>> {
    let z_b = z_axis.normalize();
    let x_c = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let y_raw = z_b.cross(&x_c);
    let n = y_raw.norm();
    if n < 1e-6 {
        return None;
    }
    let y_b = y_raw / n;
    let x_b = y_b.cross(&z_b);
    Some(Matrix3::from_columns(&[x_b, y_b, z_b]))
}

/// Yaw angle that [`from_z_axis_yaw`] would need to reproduce `r`.
///
/// Uses the defining property `y_b ⊥ x_c`: the heading reference is the
/// horizontal unit vector orthogonal to the body y-axis, with the sign fixed
/// so `z_b × x_c` points along `y_b`.
pub fn yaw_of(r: &Matrix3<f64>) -> f64 {
    let y_b = r.column(1).into_owned();
    let z_b = r.column(2).into_owned();
    let mut yaw = (-y_b.x).atan2(y_b.y);
    let x_c = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    if z_b.cross(&x_c).dot(&y_b) < 0.0 {
        yaw = wrap_angle(yaw + std::f64::consts::PI);
    }
    yaw
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Max absolute entry of `rᵀr - I`; zero for a perfectly orthonormal matrix.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hat_vee_roundtrip() {
        let v = Vector3::new(1.0, -2.0, 3.5);
        assert_eq!(vee(&hat(&v)), v);
        let b = Vector3::new(0.3, 0.7, -1.1);
        assert!((hat(&v) * b - v.cross(&b)).norm() < 1e-15);
    }

    #[test]
    fn exp_log_identity() {
        assert!(log_map(&Matrix3::identity()).norm() < 1e-12);
        assert!((exp_map(&Vector3::zeros()) - Matrix3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn z_yaw_construction_upright_and_inverted() {
        let up = from_z_axis_yaw(&Vector3::new(0.0, 0.0, 1.0), 0.0).unwrap();
        assert!((up - Matrix3::identity()).abs().max() < 1e-12);

        let inv = from_z_axis_yaw(&Vector3::new(0.0, 0.0, -1.0), 0.0).unwrap();
        assert!((inv * Vector3::z() - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((inv * Vector3::x() - Vector3::x()).norm() < 1e-12);
        assert!((inv.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_heading_rejected() {
        assert!(from_z_axis_yaw(&Vector3::new(1.0, 0.0, 0.0), 0.0).is_none());
    }

    proptest! {
        #[test]
        fn exp_map_is_orthonormal(wx in -3.0f64..3.0, wy in -3.0f64..3.0, wz in -3.0f64..3.0) {
            let r = exp_map(&Vector3::new(wx, wy, wz));
            prop_assert!(orthonormality_error(&r) < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn log_exp_roundtrip(wx in -2.0f64..2.0, wy in -2.0f64..2.0, wz in -2.0f64..2.0) {
            let w = Vector3::new(wx, wy, wz);
            prop_assume!(w.norm() < 3.0);
            let back = log_map(&exp_map(&w));
            prop_assert!((back - w).norm() < 1e-9 * (1.0 + w.norm()));
        }

        #[test]
        fn flatness_rotation_preserves_z_and_yaw(
            ax in -8.0f64..8.0, ay in -8.0f64..8.0, az in -6.0f64..20.0, yaw in -3.0f64..3.0
        ) {
            let z = Vector3::new(ax, ay, az);
            prop_assume!(z.norm() > 0.5);
            if let Some(r) = from_z_axis_yaw(&z, yaw) {
                prop_assert!(orthonormality_error(&r) < 1e-12);
                prop_assert!((r.column(2).into_owned() - z.normalize()).norm() < 1e-12);
                prop_assert!(wrap_angle(yaw_of(&r) - yaw).abs() < 1e-9);
            }
        }
    }
}
