//! Pinhole camera model, rigid camera poses and the projection /
//! back-projection pair used by every other stage.
//!
//! Conventions: right-handed, `+z` forward in the camera frame, image origin
//! top-left with `y` pointing down. Poses are stored camera-to-world. The
//! continuous image coordinate of the centre of pixel `(col, row)` is
//! `(col + 0.5, row + 0.5)`.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Zero-skew pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel intrinsics with the principal point at the image centre.
    pub fn from_fov_y(fov_y_deg: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "vertical field of view {fov_y_deg} deg is outside (0, 180)"
            )));
        }
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Self::new(fy, fy, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be finite and positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Mean focal length, used as the single focal estimate for voxel sizing.
    pub fn mean_focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Rigid transform stored camera-to-world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Builds a camera-to-world pose, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite entries".into()));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "rotation is not orthonormal (max |R^T R - I| = {ortho_err:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Parses a row-major homogeneous 4x4 matrix. The bottom row must be `0 0 0 1`.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self, GeometryError> {
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom
            .iter()
            .zip([0.0, 0.0, 0.0, 1.0])
            .any(|(a, b)| (a - b).abs() > ROTATION_TOLERANCE)
        {
            return Err(GeometryError::InvalidPose(format!("bottom row {bottom:?} is not [0, 0, 0, 1]")));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.to_row_major())
    }

    /// Camera looking from `eye` towards `target`; `up` is the world up
    /// direction, which maps to image `-y`.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(GeometryError::InvalidPose("look-at eye coincides with target".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(GeometryError::InvalidPose("look-at up vector is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(rotation, eye)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Maps a camera-frame point to world coordinates.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a world point to camera coordinates.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Linear interpolation of translation with a renormalised rotation blend.
    pub fn interpolate(&self, other: &Self, w: f64) -> Self {
        let q0 = nalgebra::UnitQuaternion::from_matrix(&self.rotation);
        let q1 = nalgebra::UnitQuaternion::from_matrix(&other.rotation);
        let q = q0.slerp(&q1, w);
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: self.translation * (1.0 - w) + other.translation * w,
        }
    }
}

/// Dense depth map with a validity mask. Depth is camera-frame `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    /// Wraps raw depths; non-finite or non-positive entries are marked invalid.
    pub fn from_values(width: u32, height: u32, values: Vec<f32>) -> Result<Self, GeometryError> {
        if values.len() != width as usize * height as usize {
            return Err(GeometryError::DimensionMismatch {
                expected: (width, height),
                found: values.len(),
            });
        }
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(Self { width, height, values, valid })
    }

    pub fn get(&self, col: u32, row: u32) -> Option<f64> {
        let i = row as usize * self.width as usize + col as usize;
        self.valid[i].then(|| self.values[i] as f64)
    }

    /// Mean over valid pixels, `None` when nothing is valid.
    pub fn mean_valid(&self) -> Option<f64> {
        let (sum, n) = self
            .values
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .fold((0.0f64, 0usize), |(s, n), (d, _)| (s + *d as f64, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Result of projecting a world point into an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

/// Projects a world point. Returns `None` for points at or behind the camera plane.
pub fn project(point_world: &Vector3<f64>, pose: &PoseSE3, k: &Intrinsics) -> Option<Projection> {
    let pc = pose.world_to_camera(point_world);
    if !(pc.z > 0.0) {
        return None;
    }
    let inv_z = 1.0 / pc.z;
    Some(Projection {
        pixel: Vector2::new(k.fx * pc.x * inv_z + k.cx, k.fy * pc.y * inv_z + k.cy),
        depth: pc.z,
    })
}

/// Lifts a pixel with known camera depth into the camera frame.
pub fn unproject_camera(pixel: &Vector2<f64>, depth: f64, k: &Intrinsics) -> Result<Vector3<f64>, GeometryError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    if !(pixel.x.is_finite() && pixel.y.is_finite()) {
        return Err(GeometryError::NonFinitePixel);
    }
    Ok(Vector3::new((pixel.x - k.cx) * depth / k.fx, (pixel.y - k.cy) * depth / k.fy, depth))
}

/// Lifts a pixel with known camera depth into world coordinates.
///
/// Bounds are the caller's responsibility; only the depth and finiteness are checked.
pub fn back_project(
    pixel: &Vector2<f64>,
    depth: f64,
    pose: &PoseSE3,
    k: &Intrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    Ok(pose.transform_point(&unproject_camera(pixel, depth, k)?))
}

/// Continuous coordinate of a pixel centre.
#[inline]
pub fn pixel_center(col: u32, row: u32) -> Vector2<f64> {
    Vector2::new(col as f64 + 0.5, row as f64 + 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cam100() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    fn rot_from_axis_angle(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
        let axis = nalgebra::Unit::new_normalize(Vector3::from(axis));
        *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()
    }

    #[test]
    fn project_on_axis() {
        let p = project(&Vector3::new(0.0, 0.0, 2.0), &PoseSE3::identity(), &cam100()).unwrap();
        assert_eq!(p.pixel, Vector2::new(50.0, 50.0));
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn project_offset() {
        let p = project(&Vector3::new(1.0, 0.0, 2.0), &PoseSE3::identity(), &cam100()).unwrap();
        assert_eq!(p.pixel, Vector2::new(100.0, 50.0));
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn project_behind_camera_is_invalid() {
        assert!(project(&Vector3::new(0.0, 0.0, -1.0), &PoseSE3::identity(), &cam100()).is_none());
        assert!(project(&Vector3::new(0.0, 0.0, 0.0), &PoseSE3::identity(), &cam100()).is_none());
    }

    #[test]
    fn back_project_principal_ray() {
        let k = cam100();
        let x = back_project(&Vector2::new(k.cx, k.cy), 3.0, &PoseSE3::identity(), &k).unwrap();
        assert_eq!(x, Vector3::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn back_project_unit_offset() {
        let k = cam100();
        let x = back_project(&Vector2::new(k.cx + k.fx, k.cy), 1.0, &PoseSE3::identity(), &k).unwrap();
        assert_relative_eq!(x, Vector3::new(1.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn back_project_translated_pose_matches_matrix_oracle() {
        // Oracle: homogeneous G * [d * K^-1 * [u, v, 1]; 1] with explicit 4x4 algebra.
        let k = Intrinsics::new(120.0, 110.0, 64.0, 48.0, 128, 96).unwrap();
        let pose = PoseSE3::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let (u, v, d) = (10.0, 20.0, 2.5);
        let kinv = k.matrix().try_inverse().unwrap();
        let ray = kinv * Vector3::new(u, v, 1.0) * d;
        let g = pose.matrix();
        let h = g * nalgebra::Vector4::new(ray.x, ray.y, ray.z, 1.0);
        // (10-64)*2.5/120 + 1 = -0.125, (20-48)*2.5/110 + 2, 2.5 + 3
        let expected = Vector3::new(-0.125, 2.0 - 70.0 / 110.0, 5.5);
        assert_relative_eq!(Vector3::new(h.x, h.y, h.z), expected, epsilon = 1e-12);
        let x = back_project(&Vector2::new(u, v), d, &pose, &k).unwrap();
        assert_relative_eq!(x, expected, epsilon = 1e-12);
    }

    #[test]
    fn back_project_rejects_bad_depth() {
        let k = cam100();
        for d in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(back_project(&Vector2::new(1.0, 1.0), d, &PoseSE3::identity(), &k).is_err());
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(Intrinsics::new(1.0, 1.0, -0.1, 1.0, 4, 4).is_err());
        assert!(Intrinsics::from_fov_y(60.0, 640, 360).is_ok());
    }

    #[test]
    fn pose_rejects_reflection_and_non_orthonormal() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(PoseSE3::new(r, Vector3::zeros()).is_err());
        assert!(PoseSE3::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_convention() {
        let pose = PoseSE3::look_at(Vector3::new(0.0, 0.0, 2.0), Vector3::zeros(), Vector3::y()).unwrap();
        // Origin is straight ahead.
        let p = pose.world_to_camera(&Vector3::zeros());
        assert_relative_eq!(p, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-12);
        // World up lands above the principal point (negative image y).
        let up = pose.world_to_camera(&Vector3::new(0.0, 1.0, 0.0));
        assert!(up.y < 0.0);
        assert!(PoseSE3::look_at(Vector3::zeros(), Vector3::zeros(), Vector3::y()).is_err());
        assert!(PoseSE3::look_at(Vector3::zeros(), Vector3::new(0.0, 3.0, 0.0), Vector3::y()).is_err());
    }

    #[test]
    fn row_major_round_trip() {
        let r = rot_from_axis_angle([0.3, -1.0, 0.2], 0.7);
        let pose = PoseSE3::new(r, Vector3::new(0.5, -2.0, 4.0)).unwrap();
        let back = PoseSE3::from_row_major(&pose.to_row_major()).unwrap();
        assert_eq!(pose, back);
        let mut bad = pose.to_row_major();
        bad[15] = 2.0;
        assert!(PoseSE3::from_row_major(&bad).is_err());
    }

    fn arb_pose() -> impl Strategy<Value = PoseSE3> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -3.0f64..3.0,
            prop::array::uniform3(-5.0f64..5.0),
        )
            .prop_filter("non-degenerate axis", |(a, _, _)| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|(axis, angle, t)| PoseSE3::new(rot_from_axis_angle(axis, angle), Vector3::from(t)).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn project_back_project_round_trip(
            pose in arb_pose(),
            u in 0.0f64..640.0,
            v in 0.0f64..480.0,
            d in 0.05f64..50.0,
        ) {
            let k = Intrinsics::new(500.0, 480.0, 320.0, 240.0, 640, 480).unwrap();
            let x = back_project(&Vector2::new(u, v), d, &pose, &k).unwrap();
            let p = project(&x, &pose, &k).unwrap();
            prop_assert!((p.pixel.x - u).abs() < 1e-6);
            prop_assert!((p.pixel.y - v).abs() < 1e-6);
            prop_assert!((p.depth - d).abs() < 1e-6);
            let x2 = back_project(&p.pixel, p.depth, &pose, &k).unwrap();
            prop_assert!((x2 - x).norm() < 1e-6);
        }

        #[test]
        fn pose_algebra(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let lhs = a.compose(&b).compose(&c).matrix();
            let rhs = a.compose(&b.compose(&c)).matrix();
            prop_assert!((lhs - rhs).abs().max() < 1e-9);
            let ident = a.inverse().compose(&a).matrix();
            prop_assert!((ident - Matrix4::identity()).abs().max() < 1e-6);
            prop_assert!((a.inverse().inverse().matrix() - a.matrix()).abs().max() < 1e-9);
        }

        #[test]
        fn back_projection_linear_in_depth(pose in arb_pose(), u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.1f64..20.0) {
            let k = Intrinsics::new(500.0, 480.0, 320.0, 240.0, 640, 480).unwrap();
            let c = pose.center();
            let x1 = back_project(&Vector2::new(u, v), d, &pose, &k).unwrap() - c;
            let x2 = back_project(&Vector2::new(u, v), 2.0 * d, &pose, &k).unwrap() - c;
            prop_assert!((x2 - 2.0 * x1).norm() < 1e-9 * (1.0 + x2.norm()));
        }
    }
}
