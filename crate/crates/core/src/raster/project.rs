//! EWA projection of conditioned 3D Gaussians to screen-space splats.

use nalgebra::{Matrix2x3, Vector2, Vector3};

use super::{Camera, COV2D_DILATION, GUARD_BAND, NEAR_PLANE, TILE_SIZE};
use crate::gaussian::ConditionedGaussian3D;

/// A Gaussian projected into one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatProjection {
    pub mean2d: Vector2<f64>,
    /// Upper triangle `(xx, xy, yy)` of the dilated 2D covariance, px².
    pub cov2d: [f64; 3],
    /// Upper triangle of the inverse covariance.
    pub conic: [f64; 3],
    pub depth: f64,
    pub radius: f64,
    /// Camera-frame mean.
    pub cam: Vector3<f64>,
    pub opacity: f64,
    pub rgb: [f64; 3],
    pub index: u32,
    /// Inclusive pixel range `[x0, x1] x [y0, y1]` inside the 3σ radius.
    pub pixels: [u32; 4],
    /// Inclusive tile range `[x0, x1] x [y0, y1]`.
    pub tiles: [u32; 4],
}

impl SplatProjection {
    pub fn tile_count(&self) -> usize {
        ((self.tiles[2] - self.tiles[0] + 1) * (self.tiles[3] - self.tiles[1] + 1)) as usize
    }
}

/// Pinhole Jacobian of `(fx x / z + cx, fy y / z + cy)` at camera point `p`.
#[inline]
pub fn projection_jacobian(p: &Vector3<f64>, fx: f64, fy: f64) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(fx * iz, 0.0, -fx * p.x * iz2, 0.0, fy * iz, -fy * p.y * iz2)
}

/// Projects a conditioned Gaussian with a general 3D covariance:
/// `cov2d = J W cov3 Wᵀ Jᵀ + dilation * I`.
pub fn project_splat(g: &ConditionedGaussian3D, camera: &Camera, index: u32) -> Option<SplatProjection> {
    let cam = camera.pose.world_to_camera(&g.mean);
    if !in_frustum(&cam, camera) {
        return None;
    }
    let k = &camera.intrinsics;
    let t = projection_jacobian(&cam, k.fx, k.fy) * camera.pose.rotation().transpose();
    let c = t * g.cov * t.transpose();
    finish(cam, [c[(0, 0)], 0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)]], g.opacity, g.rgb, camera, index)
}

/// Projection specialised to `cov3 = scale² I`, where the world-to-camera
/// rotation cancels: `cov2d = scale² J Jᵀ + dilation * I`.
#[inline]
pub fn project_isotropic(
    mean: &Vector3<f64>,
    scale: f64,
    opacity: f64,
    rgb: [f64; 3],
    camera: &Camera,
    index: u32,
) -> Option<SplatProjection> {
    let cam = camera.pose.world_to_camera(mean);
    if !in_frustum(&cam, camera) {
        return None;
    }
    let k = &camera.intrinsics;
    let iz = 1.0 / cam.z;
    let (j00, j02) = (k.fx * iz, -k.fx * cam.x * iz * iz);
    let (j11, j12) = (k.fy * iz, -k.fy * cam.y * iz * iz);
    let s2 = scale * scale;
    let cov = [s2 * (j00 * j00 + j02 * j02), s2 * j02 * j12, s2 * (j11 * j11 + j12 * j12)];
    finish(cam, cov, opacity, rgb, camera, index)
}

#[inline]
fn in_frustum(cam: &Vector3<f64>, camera: &Camera) -> bool {
    if !(cam.z > NEAR_PLANE) {
        return false;
    }
    let k = &camera.intrinsics;
    let (tx, ty) = (cam.x / cam.z, cam.y / cam.z);
    let (w, h) = (k.width as f64, k.height as f64);
    tx >= -GUARD_BAND * k.cx / k.fx
        && tx <= GUARD_BAND * (w - k.cx) / k.fx
        && ty >= -GUARD_BAND * k.cy / k.fy
        && ty <= GUARD_BAND * (h - k.cy) / k.fy
}

#[inline]
fn finish(
    cam: Vector3<f64>,
    cov: [f64; 3],
    opacity: f64,
    rgb: [f64; 3],
    camera: &Camera,
    index: u32,
) -> Option<SplatProjection> {
    let k = &camera.intrinsics;
    let cov2d = [cov[0] + COV2D_DILATION, cov[1], cov[2] + COV2D_DILATION];
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    if !(det > 0.0) {
        return None;
    }
    let inv_det = 1.0 / det;
    let conic = [cov2d[2] * inv_det, -cov2d[1] * inv_det, cov2d[0] * inv_det];
    let mid = 0.5 * (cov2d[0] + cov2d[2]);
    let lambda = mid + (mid * mid - det).max(0.1).sqrt();
    let radius = (3.0 * lambda.sqrt()).ceil();
    let iz = 1.0 / cam.z;
    let mean2d = Vector2::new(k.fx * cam.x * iz + k.cx, k.fy * cam.y * iz + k.cy);

    // Pixel centres sit at integer + 0.5.
    let col_lo = (mean2d.x - radius - 0.5).ceil().max(0.0);
    let col_hi = (mean2d.x + radius - 0.5).floor().min(k.width as f64 - 1.0);
    let row_lo = (mean2d.y - radius - 0.5).ceil().max(0.0);
    let row_hi = (mean2d.y + radius - 0.5).floor().min(k.height as f64 - 1.0);
    if !(col_lo <= col_hi && row_lo <= row_hi) {
        return None;
    }
    let pixels = [col_lo as u32, row_lo as u32, col_hi as u32, row_hi as u32];
    let tiles = pixels.map(|v| v / TILE_SIZE);
    Some(SplatProjection { mean2d, cov2d, conic, depth: cam.z, radius, cam, opacity, rgb, index, pixels, tiles })
}

/// The 2x2 covariance as a matrix (for tests and diagnostics).
pub fn cov2d_matrix(s: &SplatProjection) -> nalgebra::Matrix2<f64> {
    nalgebra::Matrix2::new(s.cov2d[0], s.cov2d[1], s.cov2d[1], s.cov2d[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, Intrinsics, PoseSE3};
    use nalgebra::{Matrix2, Matrix3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> Camera {
        Camera { pose: PoseSE3::identity(), intrinsics: Intrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap() }
    }

    fn iso_g(mean: Vector3<f64>, sigma: f64) -> ConditionedGaussian3D {
        ConditionedGaussian3D { mean, cov: Matrix3::from_diagonal_element(sigma * sigma), opacity: 0.5, rgb: [1.0; 3] }
    }

    #[test]
    fn on_axis_isotropic() {
        let (sigma, z) = (0.1, 2.0);
        let s = project_splat(&iso_g(Vector3::new(0.0, 0.0, z), sigma), &camera(), 0).unwrap();
        let expect = (100.0 * sigma / z).powi(2) + COV2D_DILATION;
        assert!((s.cov2d[0] - expect).abs() < 1e-12);
        assert!((s.cov2d[2] - expect).abs() < 1e-12);
        assert!(s.cov2d[1].abs() < 1e-15);
        assert_eq!(s.mean2d, Vector2::new(50.0, 50.0));
        assert_eq!(s.depth, z);
        // Radius covers three standard deviations.
        assert!(s.radius >= 3.0 * expect.sqrt());
    }

    #[test]
    fn behind_camera_is_culled() {
        assert!(project_splat(&iso_g(Vector3::new(0.0, 0.0, -1.0), 0.1), &camera(), 0).is_none());
        assert!(project_splat(&iso_g(Vector3::new(50.0, 0.0, 1.0), 0.1), &camera(), 0).is_none());
    }

    #[test]
    fn isotropic_fast_path_matches_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pose = PoseSE3::look_at(Vector3::new(0.3, -0.2, -3.0), Vector3::new(0.0, 0.1, 0.0), Vector3::y()).unwrap();
        let cam = Camera { pose, intrinsics: camera().intrinsics };
        for i in 0..200 {
            let mean = Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
            let s = rng.gen_range(0.01..0.3);
            let a = project_splat(&iso_g(mean, s), &cam, i).unwrap();
            let b = project_isotropic(&mean, s, 0.5, [1.0; 3], &cam, i).unwrap();
            for k in 0..3 {
                assert!((a.cov2d[k] - b.cov2d[k]).abs() < 1e-9 * (1.0 + a.cov2d[k].abs()));
            }
            assert!((a.mean2d - b.mean2d).norm() < 1e-9);
        }
    }

    /// Oracle: central-difference Jacobian of the projection map, then
    /// `J_fd Σ J_fdᵀ`.
    #[test]
    fn covariance_matches_numerical_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pose = PoseSE3::look_at(Vector3::new(1.0, 0.5, -2.5), Vector3::zeros(), Vector3::y()).unwrap();
        let cam = Camera { pose, intrinsics: Intrinsics::new(120.0, 110.0, 64.0, 40.0, 128, 80).unwrap() };
        let mut checked = 0;
        while checked < 100 {
            let mean = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let a = nalgebra::Matrix3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
            let cov = a * a.transpose() + Matrix3::identity() * 1e-3;
            let g = ConditionedGaussian3D { mean, cov, opacity: 0.5, rgb: [0.0; 3] };
            let Some(s) = project_splat(&g, &cam, 0) else { continue };
            let h = 1e-5;
            let mut jfd = nalgebra::Matrix2x3::zeros();
            for ax in 0..3 {
                let mut dp = Vector3::zeros();
                dp[ax] = h;
                let p1 = project(&(mean + dp), &pose, &cam.intrinsics).unwrap().pixel;
                let p0 = project(&(mean - dp), &pose, &cam.intrinsics).unwrap().pixel;
                jfd.set_column(ax, &((p1 - p0) / (2.0 * h)));
            }
            let expect: Matrix2<f64> = jfd * cov * jfd.transpose() + Matrix2::identity() * COV2D_DILATION;
            let got = cov2d_matrix(&s);
            let rel = (got - expect).abs().max() / expect.abs().max();
            assert!(rel < 1e-4, "relative error {rel}");
            checked += 1;
        }
    }

    #[test]
    fn conic_inverts_covariance() {
        let s = project_isotropic(&Vector3::new(0.1, -0.2, 1.5), 0.05, 0.5, [0.0; 3], &camera(), 0).unwrap();
        let c = cov2d_matrix(&s);
        let q = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
        assert!((c * q - Matrix2::identity()).abs().max() < 1e-12);
    }
}
