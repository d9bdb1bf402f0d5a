//! Rigid transforms, the pinhole camera, ray casting onto the relay wall and
//! plane fitting of LiDAR point clouds.
//!
//! World convention: the relay wall is the plane `z = 0`, hidden objects and
//! the camera both live at `z > 0`. A camera looking straight at the wall has
//! its optical axis along world `-z`, its image x-axis along world `+x` and its
//! image y-axis along world `-y`.

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// 180 degree rotation about x: camera frame looking down `-z` at the wall.
pub fn wall_facing_flip() -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;

    fn try_from(r: PoseRepr) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Pose::new(m, Vector3::from(r.translation))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = p.rotation[(i, j)];
            }
        }
        PoseRepr {
            rotation,
            translation: p.translation.into(),
        }
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).amax() > ORTHO_TOL
            || (rotation.determinant() - 1.0).abs() > ORTHO_TOL
            || !translation.iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidRotation);
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `position` aimed at the wall, tilted by the axis-angle vector
    /// `(tilt[0], tilt[1], 0)` lying in the wall plane. There is no roll about
    /// the wall normal.
    pub fn facing_wall(position: Vector3<f64>, tilt: [f64; 2]) -> Self {
        let axis_angle = Vector3::new(tilt[0], tilt[1], 0.0);
        let tilt = Rotation3::new(axis_angle);
        Pose {
            rotation: tilt.matrix() * wall_facing_flip(),
            translation: position,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn with_translation(&self, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: self.rotation,
            translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }
}

/// Radiometric falloff of the third-bounce signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Falloff {
    /// 1/r^2, objects returning light toward its source.
    Retroreflective,
    /// 1/r^4, Lambertian objects.
    Diffuse,
}

impl Falloff {
    pub fn weight(self, range: f64) -> f64 {
        let r2 = range * range;
        match self {
            Falloff::Retroreflective => 1.0 / r2,
            Falloff::Diffuse => 1.0 / (r2 * r2),
        }
    }

    /// Power of `v` that makes the time resampling radiometrically flat for
    /// this falloff.
    pub fn lct_exponent(self) -> f64 {
        match self {
            Falloff::Retroreflective => 0.5,
            Falloff::Diffuse => 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Row-major 3x3 intrinsic matrix, pixels.
    pub intrinsics: [[f64; 3]; 3],
    /// `(n_x, n_y)` pixel counts.
    pub resolution: (usize, usize),
    pub n_bins: usize,
    /// Seconds per histogram bin. Bin `k` samples time `k * bin_width`.
    pub bin_width: f64,
    /// Standard deviation of the Gaussian laser pulse, seconds.
    pub pulse_sigma: f64,
    pub falloff: Falloff,
}

impl CameraModel {
    /// Square-pixel pinhole with the principal point at the image center.
    pub fn pinhole(
        resolution: (usize, usize),
        fov_x_deg: f64,
        n_bins: usize,
        bin_width: f64,
        pulse_sigma: f64,
        falloff: Falloff,
    ) -> Self {
        let (nx, _) = resolution;
        let f = (nx as f64 / 2.0) / (fov_x_deg.to_radians() / 2.0).tan();
        Self::with_focal(resolution, f, n_bins, bin_width, pulse_sigma, falloff)
    }

    pub fn with_focal(
        resolution: (usize, usize),
        focal: f64,
        n_bins: usize,
        bin_width: f64,
        pulse_sigma: f64,
        falloff: Falloff,
    ) -> Self {
        let (nx, ny) = resolution;
        let cx = (nx as f64 - 1.0) / 2.0;
        let cy = (ny as f64 - 1.0) / 2.0;
        CameraModel {
            intrinsics: [[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]],
            resolution,
            n_bins,
            bin_width,
            pulse_sigma,
            falloff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) {
            return Err(Error::Config("bin_width must be positive".into()));
        }
        if !(self.pulse_sigma >= 0.0) {
            return Err(Error::Config("pulse_sigma must be non-negative".into()));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 || self.n_bins < 2 {
            return Err(Error::Config("empty sensor resolution".into()));
        }
        if self.k().try_inverse().is_none() {
            return Err(Error::Config("intrinsic matrix is singular".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.resolution.0 * self.resolution.1
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.intrinsics[i][j])
    }

    /// Direction of pixel `(i, j)`'s central ray in camera coordinates,
    /// normalized so that its camera-z component is 1.
    pub fn pixel_ray(&self, i: usize, j: usize) -> Vector3<f64> {
        let k_inv = self.k().try_inverse().expect("validated intrinsics");
        k_inv * Vector3::new(i as f64, j as f64, 1.0)
    }

    /// Histogram time of range `r` (one-way), seconds.
    pub fn time_of_range(range: f64) -> f64 {
        2.0 * range / SPEED_OF_LIGHT
    }
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Index of pixel `(i, j)` in every per-pixel array.
#[inline]
pub fn pixel_index(resolution: (usize, usize), i: usize, j: usize) -> usize {
    i * resolution.1 + j
}

/// Wall point hit by each pixel's central ray, indexed by [`pixel_index`].
pub fn intersect_rays(camera: &CameraModel, pose: &Pose) -> Result<Vec<Vector3<f64>>> {
    let (nx, ny) = camera.resolution;
    let k_inv = camera
        .k()
        .try_inverse()
        .ok_or_else(|| Error::Config("intrinsic matrix is singular".into()))?;
    let origin = pose.translation();
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let dir = pose.transform_vector(&(k_inv * Vector3::new(i as f64, j as f64, 1.0)));
            if dir.z.abs() < 1e-15 {
                return Err(Error::RayParallelToWall(i, j));
            }
            let s = -origin.z / dir.z;
            if !(s > 0.0) {
                return Err(Error::BehindCamera(i, j));
            }
            let mut p = origin + dir * s;
            p.z = 0.0;
            out.push(p);
        }
    }
    Ok(out)
}

/// Pixel coordinates `(u, v)` of a world point.
pub fn project(camera: &CameraModel, pose: &Pose, world: &Vector3<f64>) -> Option<(f64, f64)> {
    let cam = pose.inverse().transform_point(world);
    if cam.z <= 0.0 {
        return None;
    }
    let h = camera.k() * cam;
    Some((h.x / h.z, h.y / h.z))
}

#[derive(Debug, Clone)]
pub struct PlaneFit {
    /// Perpendicular distance from the camera center to the plane.
    pub camera_height: f64,
    /// Rotation taking the fitted normal to `+z`.
    pub rotation: Matrix3<f64>,
    /// Unit normal in camera coordinates, positive camera-z component.
    pub normal: Vector3<f64>,
    /// `rotation * p - (0, 0, camera_height)`, lying on `z = 0`.
    pub aligned_points: Vec<Vector3<f64>>,
}

/// Least-squares plane through a camera-frame point cloud.
pub fn fit_plane(points: &[Vector3<f64>]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::DegeneratePointSet(format!(
            "{} points, need at least 3",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l_mid, l_max) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(l_max > 0.0) || l_mid <= 1e-12 * l_max {
        return Err(Error::DegeneratePointSet("points are collinear".into()));
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if normal.z < 0.0 {
        normal = -normal;
    }
    let camera_height = normal.dot(&centroid).abs();
    let rotation = rotation_between(&normal, &Vector3::z());
    let aligned_points = points
        .iter()
        .map(|p| {
            let mut q = rotation * p;
            q.z -= camera_height;
            q
        })
        .collect();
    Ok(PlaneFit {
        camera_height,
        rotation,
        normal,
        aligned_points,
    })
}

/// Minimal rotation taking unit vector `from` onto `to`.
fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let axis = from.cross(to);
    let sin = axis.norm();
    let cos = from.dot(to);
    if sin < 1e-15 {
        // Sign convention keeps `from` in the +z hemisphere, so this is identity.
        return Matrix3::identity();
    }
    let axis = Unit::new_normalize(axis);
    *Rotation3::from_axis_angle(&axis, sin.atan2(cos)).matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn camera(n: usize) -> CameraModel {
        CameraModel::pinhole((n, n), 40.0, 64, 1e-10, 0.0, Falloff::Retroreflective)
    }

    #[test]
    fn center_pixel_hits_origin() {
        let cam = camera(11);
        let pose = Pose::facing_wall(Vector3::new(0.0, 0.0, 1.0), [0.0, 0.0]);
        let pts = intersect_rays(&cam, &pose).unwrap();
        let c = pts[pixel_index(cam.resolution, 5, 5)];
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn translation_shifts_wall_points() {
        let cam = camera(10);
        let a = intersect_rays(
            &cam,
            &Pose::facing_wall(Vector3::new(0.0, 0.0, 1.0), [0.0; 2]),
        )
        .unwrap();
        let b = intersect_rays(
            &cam,
            &Pose::facing_wall(Vector3::new(0.3, 0.0, 1.0), [0.0; 2]),
        )
        .unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((q - p - Vector3::new(0.3, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_about_z_rotates_grid() {
        let cam = camera(10);
        let base = Pose::facing_wall(Vector3::new(0.0, 0.0, 1.0), [0.0; 2]);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let rotated = Pose::new(rz.matrix() * base.rotation(), *base.translation()).unwrap();
        let a = intersect_rays(&cam, &base).unwrap();
        let b = intersect_rays(&cam, &rotated).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((rz * p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn ray_errors() {
        let cam = camera(4);
        let away = Pose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!(matches!(
            intersect_rays(&cam, &away),
            Err(Error::BehindCamera(..))
        ));
        let sideways = Pose::facing_wall(
            Vector3::new(0.0, 0.0, 1.0),
            [std::f64::consts::FRAC_PI_2, 0.0],
        );
        let r = intersect_rays(&cam, &sideways);
        assert!(matches!(
            r,
            Err(Error::RayParallelToWall(..)) | Err(Error::BehindCamera(..))
        ));
    }

    #[test]
    fn projection_round_trip() {
        let cam = camera(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let pose = Pose::facing_wall(
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    1.2,
                ),
                [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            );
            let pts = intersect_rays(&cam, &pose).unwrap();
            for i in 0..10 {
                for j in 0..10 {
                    let (u, v) = project(&cam, &pose, &pts[pixel_index((10, 10), i, j)]).unwrap();
                    assert!((u - i as f64).abs() < 1e-6 && (v - j as f64).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pose_inverse_is_identity() {
        let p = Pose::facing_wall(Vector3::new(0.2, -0.4, 1.1), [0.1, -0.2]);
        let id = p.compose(&p.inverse());
        assert!((id.rotation() - Matrix3::identity()).amax() < 1e-9);
        assert!(id.translation().norm() < 1e-9);
    }

    #[test]
    fn invalid_rotation_rejected() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            Pose::new(m, Vector3::zeros()),
            Err(Error::InvalidRotation)
        ));
    }

    fn grid_points(n: usize) -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Vector3::new(
                    i as f64 * 0.1 - 0.5,
                    j as f64 * 0.13 - 0.4,
                    0.0,
                ));
            }
        }
        pts
    }

    #[test]
    fn fronto_parallel_plane() {
        let pts: Vec<_> = grid_points(6)
            .into_iter()
            .map(|p| p + Vector3::new(0.0, 0.0, 1.5))
            .collect();
        let fit = fit_plane(&pts).unwrap();
        assert!((fit.camera_height - 1.5).abs() < 1e-12);
        assert!((fit.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(fit.aligned_points.iter().all(|p| p.z.abs() < 1e-12));
    }

    #[test]
    fn tilted_plane_is_undone() {
        let tilt = Rotation3::from_axis_angle(&Vector3::x_axis(), 30f64.to_radians());
        let pts: Vec<_> = grid_points(6)
            .into_iter()
            .map(|p| tilt * (p + Vector3::new(0.0, 0.0, 1.0)))
            .collect();
        let fit = fit_plane(&pts).unwrap();
        assert!((fit.camera_height - 1.0).abs() < 1e-9);
        assert!(fit.aligned_points.iter().all(|p| p.z.abs() < 1e-9));
        let undo = fit.rotation * tilt.matrix();
        assert!((undo - Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn degenerate_sets() {
        assert!(matches!(
            fit_plane(&[Vector3::zeros(), Vector3::x()]),
            Err(Error::DegeneratePointSet(_))
        ));
        let line: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64, 2.0 * i as f64, 1.0))
            .collect();
        assert!(matches!(
            fit_plane(&line),
            Err(Error::DegeneratePointSet(_))
        ));
    }

    #[test]
    fn noisy_plane_normal_monte_carlo() {
        // Independent generation: exact plane through a known normal, then
        // 1 mm Gaussian noise along camera z.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let tx = rng.random_range(-0.4..0.4);
            let ty = rng.random_range(-0.4..0.4);
            let tilt = Rotation3::new(Vector3::new(tx, ty, 0.0));
            let truth = tilt * Vector3::z();
            let pts: Vec<_> = grid_points(10)
                .into_iter()
                .map(|p| {
                    let mut q = tilt * (p + Vector3::new(0.0, 0.0, 1.2));
                    q.z += noise.sample(&mut rng);
                    q
                })
                .collect();
            let fit = fit_plane(&pts).unwrap();
            let angle = fit.normal.dot(&truth).clamp(-1.0, 1.0).acos().to_degrees();
            worst = worst.max(angle);
        }
        assert!(worst < 0.5, "worst normal error {worst} deg");
    }

    #[test]
    fn fit_plane_permutation_and_scale_invariant() {
        let tilt = Rotation3::new(Vector3::new(0.1, -0.2, 0.0));
        let pts: Vec<_> = grid_points(5)
            .into_iter()
            .map(|p| tilt * (p + Vector3::new(0.0, 0.0, 1.0)))
            .collect();
        let a = fit_plane(&pts).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let b = fit_plane(&rev).unwrap();
        assert!((a.normal - b.normal).norm() < 1e-12);
        // Scaling in-plane offsets about the centroid leaves the normal alone.
        let c = pts.iter().fold(Vector3::zeros(), |s, p| s + p) / pts.len() as f64;
        let scaled: Vec<_> = pts.iter().map(|p| c + (p - c) * 3.0).collect();
        let s = fit_plane(&scaled).unwrap();
        assert!((a.normal - s.normal).norm() < 1e-12);
    }
}
