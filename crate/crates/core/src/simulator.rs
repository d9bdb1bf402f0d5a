//! Brute-force confocal transient renderer, photon noise and sequence
//! generation.
//!
//! Every scene point contributes one wall-object-wall path per pixel. The
//! return is a Gaussian pulse centred at `tau = 2 r / c` with peak
//! `rho_p * falloff(r)`; with zero pulse width it is linearly splatted between
//! the two neighbouring bins.

use nalgebra::Vector3;
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::geometry::{intersect_rays, CameraModel, Pose, SPEED_OF_LIGHT};
use crate::seeds;

/// Pulses are truncated at this many standard deviations.
const PULSE_TRUNCATION: f64 = 4.0;

/// Centroid-centred point cloud with per-point albedo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    points: Vec<Vector3<f64>>,
    albedo: Vec<f64>,
}

impl ObjectModel {
    /// Builds a model, translating the points so their centroid is the origin.
    pub fn new(points: Vec<Vector3<f64>>, albedo: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("object has no points".into()));
        }
        if points.len() != albedo.len() {
            return Err(Error::LengthMismatch(format!(
                "{} points, {} albedo values",
                points.len(),
                albedo.len()
            )));
        }
        if albedo.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config("albedo must be finite and >= 0".into()));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("object point".into()));
        }
        let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let points = points.into_iter().map(|p| p - c).collect();
        Ok(ObjectModel { points, albedo })
    }

    /// Unit-albedo points.
    pub fn from_points(points: Vec<Vector3<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn point() -> Self {
        ObjectModel {
            points: vec![Vector3::zeros()],
            albedo: vec![1.0],
        }
    }

    /// Square `size x size` patch parallel to the wall sampled by `n x n` points.
    pub fn patch(size: f64, n: usize) -> Result<Self> {
        if n == 0 || !(size >= 0.0) {
            return Err(Error::Config("patch needs n >= 1 and size >= 0".into()));
        }
        let step = if n > 1 { size / (n - 1) as f64 } else { 0.0 };
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pts.push(Vector3::new(i as f64 * step, j as f64 * step, 0.0));
            }
        }
        Self::from_points(pts)
    }

    /// Figure-like cloud: `n` points on an upright ellipsoid of half-axes
    /// `(a, b, c)` with a smaller head on top, drawn from `seed`.
    pub fn figure(n: usize, half_axes: [f64; 3], seed: u64) -> Result<Self> {
        let mut rng = seeds::stream(seed, seeds::TAG_SCENE, 0, 0);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let [a, b, c] = half_axes;
        let mut pts = Vec::with_capacity(n);
        for k in 0..n {
            let d: Vector3<f64> = Vector3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            );
            let d = d / d.norm().max(1e-12);
            // Roughly one point in five goes to the head.
            if k % 5 == 4 {
                let r = 0.35 * a;
                pts.push(Vector3::new(d.x * r, b + r + d.y * r, d.z * r));
            } else {
                pts.push(Vector3::new(d.x * a, d.y * b, d.z * c));
            }
        }
        Self::from_points(pts)
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn albedo(&self) -> &[f64] {
        &self.albedo
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Declarative object description used by scene files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectSpec {
    Point,
    Patch {
        size: f64,
        n: usize,
    },
    Figure {
        n: usize,
        half_axes: [f64; 3],
        seed: u64,
    },
    Points {
        points: Vec<[f64; 3]>,
        albedo: Option<Vec<f64>>,
    },
}

impl ObjectSpec {
    pub fn build(&self) -> Result<ObjectModel> {
        match self {
            ObjectSpec::Point => Ok(ObjectModel::point()),
            ObjectSpec::Patch { size, n } => ObjectModel::patch(*size, *n),
            ObjectSpec::Figure { n, half_axes, seed } => ObjectModel::figure(*n, *half_axes, *seed),
            ObjectSpec::Points { points, albedo } => {
                let pts: Vec<_> = points.iter().map(|p| Vector3::from(*p)).collect();
                let alb = albedo.clone().unwrap_or_else(|| vec![1.0; pts.len()]);
                ObjectModel::new(pts, alb)
            }
        }
    }
}

/// Per-frame object positions (the centroid shift `Delta_t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub frame_rate: f64,
    pub positions: Vec<Vector3<f64>>,
}

impl Trajectory {
    pub fn constant(position: Vector3<f64>, frames: usize, frame_rate: f64) -> Self {
        Trajectory {
            frame_rate,
            positions: vec![position; frames],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Per-frame camera poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPath {
    pub frame_rate: f64,
    pub poses: Vec<Pose>,
}

impl CameraPath {
    pub fn constant(pose: Pose, frames: usize, frame_rate: f64) -> Self {
        CameraPath {
            frame_rate,
            poses: vec![pose; frames],
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Static {
        position: [f64; 3],
    },
    /// `start + velocity * t`, velocity in m/s.
    Linear {
        start: [f64; 3],
        velocity: [f64; 3],
    },
    /// Circle parallel to the wall.
    Circular {
        center: [f64; 3],
        radius: f64,
        period: f64,
    },
    /// Serpentine raster of `n[0] x n[1]` waypoints over an `extent` rectangle
    /// parallel to the wall, each held for `hold` frames.
    Grid {
        center: [f64; 3],
        extent: [f64; 2],
        n: [usize; 2],
        #[serde(default = "one")]
        hold: usize,
    },
    /// Gaussian steps of standard deviation `step` per axis.
    RandomWalk {
        start: [f64; 3],
        step: f64,
        seed: u64,
    },
}

fn one() -> usize {
    1
}

pub fn generate_trajectory(
    spec: &TrajectorySpec,
    frames: usize,
    frame_rate: f64,
) -> Result<Trajectory> {
    if !(frame_rate > 0.0) {
        return Err(Error::Config("frame rate must be positive".into()));
    }
    let dt = 1.0 / frame_rate;
    let v3 = |a: &[f64; 3]| Vector3::from(*a);
    let positions = match spec {
        TrajectorySpec::Static { position } => vec![v3(position); frames],
        TrajectorySpec::Linear { start, velocity } => (0..frames)
            .map(|t| v3(start) + v3(velocity) * (t as f64 * dt))
            .collect(),
        TrajectorySpec::Circular {
            center,
            radius,
            period,
        } => {
            if !(*period > 0.0) {
                return Err(Error::Config("circle period must be positive".into()));
            }
            (0..frames)
                .map(|t| {
                    let a = std::f64::consts::TAU * t as f64 * dt / period;
                    v3(center) + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
                })
                .collect()
        }
        TrajectorySpec::Grid {
            center,
            extent,
            n,
            hold,
        } => {
            if n[0] == 0 || n[1] == 0 || *hold == 0 {
                return Err(Error::Config("grid needs positive counts".into()));
            }
            let waypoints = grid_waypoints(v3(center), *extent, *n);
            (0..frames)
                .map(|t| waypoints[(t / hold) % waypoints.len()])
                .collect()
        }
        TrajectorySpec::RandomWalk { start, step, seed } => {
            let normal =
                Normal::new(0.0, step.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = seeds::stream(*seed, seeds::TAG_TRAJECTORY, 0, 0);
            let mut p = v3(start);
            let mut out = Vec::with_capacity(frames);
            for _ in 0..frames {
                out.push(p);
                p += Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                );
            }
            out
        }
    };
    Ok(Trajectory {
        frame_rate,
        positions,
    })
}

fn grid_waypoints(center: Vector3<f64>, extent: [f64; 2], n: [usize; 2]) -> Vec<Vector3<f64>> {
    let coord = |k: usize, count: usize, ext: f64| {
        if count > 1 {
            -0.5 * ext + ext * k as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    let mut out = Vec::with_capacity(n[0] * n[1]);
    for row in 0..n[1] {
        for c in 0..n[0] {
            let col = if row % 2 == 0 { c } else { n[0] - 1 - c };
            out.push(
                center
                    + Vector3::new(
                        coord(col, n[0], extent[0]),
                        coord(row, n[1], extent[1]),
                        0.0,
                    ),
            );
        }
    }
    out
}

/// Camera motion description. Tilts are `(pitch, yaw)` radians about world x/y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraPathSpec {
    Static {
        position: [f64; 3],
        #[serde(default)]
        tilt: [f64; 2],
    },
    Linear {
        start: [f64; 3],
        velocity: [f64; 3],
        #[serde(default)]
        tilt: [f64; 2],
    },
    /// Serpentine raster of camera positions, as [`TrajectorySpec::Grid`].
    Grid {
        center: [f64; 3],
        extent: [f64; 2],
        n: [usize; 2],
        #[serde(default = "one")]
        hold: usize,
        #[serde(default)]
        tilt: [f64; 2],
    },
    /// Handheld-style 5D walk: Gaussian steps in position and in both tilts,
    /// with the tilt pulled back towards `tilt_center`.
    RandomWalk {
        start: [f64; 3],
        step: f64,
        z_step: f64,
        tilt_step: f64,
        #[serde(default)]
        tilt_center: [f64; 2],
        seed: u64,
    },
}

pub fn generate_camera_path(
    spec: &CameraPathSpec,
    frames: usize,
    frame_rate: f64,
) -> Result<CameraPath> {
    if !(frame_rate > 0.0) {
        return Err(Error::Config("frame rate must be positive".into()));
    }
    let dt = 1.0 / frame_rate;
    let v3 = |a: &[f64; 3]| Vector3::from(*a);
    let poses = match spec {
        CameraPathSpec::Static { position, tilt } => {
            vec![Pose::facing_wall(v3(position), *tilt); frames]
        }
        CameraPathSpec::Linear {
            start,
            velocity,
            tilt,
        } => (0..frames)
            .map(|t| Pose::facing_wall(v3(start) + v3(velocity) * (t as f64 * dt), *tilt))
            .collect(),
        CameraPathSpec::Grid {
            center,
            extent,
            n,
            hold,
            tilt,
        } => generate_trajectory(
            &TrajectorySpec::Grid {
                center: *center,
                extent: *extent,
                n: *n,
                hold: *hold,
            },
            frames,
            frame_rate,
        )?
        .positions
        .into_iter()
        .map(|p| Pose::facing_wall(p, *tilt))
        .collect(),
        CameraPathSpec::RandomWalk {
            start,
            step,
            z_step,
            tilt_step,
            tilt_center,
            seed,
        } => {
            let n = |s: f64| Normal::new(0.0, s.max(0.0)).map_err(|e| Error::Config(e.to_string()));
            let (nxy, nz, nt) = (n(*step)?, n(*z_step)?, n(*tilt_step)?);
            let mut rng = seeds::stream(*seed, seeds::TAG_TRAJECTORY, 1, 0);
            let mut p = v3(start);
            let mut tilt = *tilt_center;
            let mut out = Vec::with_capacity(frames);
            for _ in 0..frames {
                out.push(Pose::facing_wall(p, tilt));
                p += Vector3::new(
                    nxy.sample(&mut rng),
                    nxy.sample(&mut rng),
                    nz.sample(&mut rng),
                );
                for (a, c) in tilt.iter_mut().zip(tilt_center) {
                    *a = c + 0.8 * (*a - c) + nt.sample(&mut rng);
                }
            }
            out
        }
    };
    Ok(CameraPath { frame_rate, poses })
}

/// Photon statistics of the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Expected photons per unit of noiseless model intensity.
    pub signal_scale: f64,
    /// When set, `signal_scale` is replaced so that the brightest noiseless bin
    /// of the first frame has this expected photon count.
    #[serde(default)]
    pub peak_photons: Option<f64>,
    /// Ambient photons per bin.
    pub ambient_rate: f64,
    /// Dark counts per bin.
    pub dark_rate: f64,
    /// Gaussian range noise of the point-cloud depth, meters.
    #[serde(default)]
    pub range_sigma: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.signal_scale)
            && ok(self.ambient_rate)
            && ok(self.dark_rate)
            && ok(self.range_sigma))
        {
            return Err(Error::Config("noise rates must be finite and >= 0".into()));
        }
        if let Some(p) = self.peak_photons {
            if !ok(p) {
                return Err(Error::Config("peak_photons must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

/// One sensor frame. Arrays are stored in single precision so that a dataset
/// survives a round trip through disk unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeasurement {
    pub timestamp: f64,
    /// Camera-to-world pose, absent when withheld for localization.
    pub pose: Option<Pose>,
    /// `(n_x * n_y, 3)` world wall points in pixel order.
    pub wall_points: Option<Array2<f32>>,
    /// `(n_x, n_y, n_t)` photon counts.
    pub histogram: Array3<f32>,
    /// `(n_x * n_y, 3)` wall points in camera coordinates as reported by the
    /// sensor's depth channel.
    pub point_cloud: Option<Array2<f32>>,
}

impl FrameMeasurement {
    pub fn histogram_f64(&self) -> Array3<f64> {
        self.histogram.mapv(f64::from)
    }

    pub fn wall_points_f64(&self) -> Option<Vec<Vector3<f64>>> {
        self.wall_points.as_ref().map(rows_to_vectors)
    }

    pub fn point_cloud_f64(&self) -> Option<Vec<Vector3<f64>>> {
        self.point_cloud.as_ref().map(rows_to_vectors)
    }
}

pub(crate) fn rows_to_vectors(a: &Array2<f32>) -> Vec<Vector3<f64>> {
    a.rows()
        .into_iter()
        .map(|r| Vector3::new(r[0] as f64, r[1] as f64, r[2] as f64))
        .collect()
}

pub(crate) fn vectors_to_rows(v: &[Vector3<f64>]) -> Array2<f32> {
    Array2::from_shape_fn((v.len(), 3), |(i, k)| v[i][k] as f32)
}

/// Noiseless histogram `(n_x, n_y, n_t)` for objects at the given shifts, seen
/// from the given wall points (pixel order).
pub fn render_histogram(
    objects: &[(&ObjectModel, Vector3<f64>)],
    camera: &CameraModel,
    wall_points: &[Vector3<f64>],
) -> Result<Array3<f64>> {
    let (nx, ny) = camera.resolution;
    if wall_points.len() != nx * ny {
        return Err(Error::LengthMismatch(format!(
            "{} wall points for {} pixels",
            wall_points.len(),
            nx * ny
        )));
    }
    let nt = camera.n_bins;
    let mut hist = Array3::<f64>::zeros((nx, ny, nt));
    let mut scene = Vec::new();
    for (obj, shift) in objects {
        for (p, rho) in obj.points().iter().zip(obj.albedo()) {
            let q = p + shift;
            if !(q.z > 0.0) {
                return Err(Error::ObjectBehindWall(q.z));
            }
            if *rho > 0.0 {
                scene.push((q, *rho));
            }
        }
    }
    let bw = camera.bin_width;
    let sigma = camera.pulse_sigma;
    let slice = hist.as_slice_mut().expect("fresh array is contiguous");
    for (px, col) in slice.chunks_exact_mut(nt).enumerate() {
        let w = wall_points[px];
        for (q, rho) in &scene {
            let r = (q - w).norm();
            let tau = 2.0 * r / SPEED_OF_LIGHT;
            let amp = rho * camera.falloff.weight(r);
            deposit(col, tau / bw, sigma / bw, amp);
        }
    }
    Ok(hist)
}

/// Adds one return centred at fractional bin `pos` with width `sigma` bins.
#[inline]
fn deposit(col: &mut [f64], pos: f64, sigma: f64, amp: f64) {
    let n = col.len() as isize;
    if sigma <= 0.0 {
        let k = pos.floor() as isize;
        let f = pos - k as f64;
        if k >= 0 && k < n {
            col[k as usize] += (1.0 - f) * amp;
        }
        if k + 1 >= 0 && k + 1 < n {
            col[(k + 1) as usize] += f * amp;
        }
        return;
    }
    let lo = ((pos - PULSE_TRUNCATION * sigma).ceil() as isize).max(0);
    let hi = ((pos + PULSE_TRUNCATION * sigma).floor() as isize).min(n - 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for k in lo..=hi {
        let d = k as f64 - pos;
        col[k as usize] += amp * (-d * d * inv).exp();
    }
}

/// Noiseless frame for the given pose.
pub fn render_transient_direct(
    objects: &[(&ObjectModel, Vector3<f64>)],
    camera: &CameraModel,
    pose: &Pose,
) -> Result<FrameMeasurement> {
    camera.validate()?;
    let walls = intersect_rays(camera, pose)?;
    let hist = render_histogram(objects, camera, &walls)?;
    Ok(FrameMeasurement {
        timestamp: 0.0,
        pose: Some(*pose),
        wall_points: Some(vectors_to_rows(&walls)),
        histogram: hist.mapv(|v| v as f32),
        point_cloud: Some(vectors_to_rows(&camera_points(pose, &walls))),
    })
}

fn camera_points(pose: &Pose, walls: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let inv = pose.inverse();
    walls.iter().map(|w| inv.transform_point(w)).collect()
}

/// Replaces every bin by a Poisson draw of mean
/// `signal_scale * value + ambient_rate + dark_rate`, and perturbs the point
/// cloud along each pixel ray by `range_sigma`. Draws come from `cfg.seed`.
pub fn add_noise(frame: &FrameMeasurement, cfg: &NoiseConfig) -> Result<FrameMeasurement> {
    cfg.validate()?;
    let mut out = frame.clone();
    let mut rng = seeds::stream(cfg.seed, seeds::TAG_NOISE, 0, 0);
    let floor = cfg.ambient_rate + cfg.dark_rate;
    for v in out.histogram.iter_mut() {
        let lambda = cfg.signal_scale * (*v as f64) + floor;
        *v = poisson(&mut rng, lambda) as f32;
    }
    if cfg.range_sigma > 0.0 {
        if let Some(cloud) = out.point_cloud.as_mut() {
            let normal =
                Normal::new(0.0, cfg.range_sigma).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = seeds::stream(cfg.seed, seeds::TAG_RANGE, 0, 0);
            for mut row in cloud.rows_mut() {
                let p = Vector3::new(row[0] as f64, row[1] as f64, row[2] as f64);
                let r = p.norm();
                let q = p * ((r + normal.sample(&mut rng)) / r);
                for k in 0..3 {
                    row[k] = q[k] as f32;
                }
            }
        }
    }
    Ok(out)
}

fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    Poisson::new(lambda)
        .expect("positive finite rate")
        .sample(rng)
}

/// Renders every frame of a scene. With `noise = None` the stored histograms
/// are the noiseless model intensities.
pub fn simulate_sequence(
    scene: &[(ObjectModel, Trajectory)],
    camera: &CameraModel,
    camera_path: &CameraPath,
    noise: Option<&NoiseConfig>,
) -> Result<Dataset> {
    camera.validate()?;
    let frames = camera_path.len();
    for (_, traj) in scene {
        if traj.len() != frames {
            return Err(Error::LengthMismatch(format!(
                "object trajectory has {} frames, camera path {}",
                traj.len(),
                frames
            )));
        }
    }
    if let Some(cfg) = noise {
        cfg.validate()?;
    }
    let dt = 1.0 / camera_path.frame_rate;
    let clean: Vec<FrameMeasurement> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let objs: Vec<_> = scene.iter().map(|(o, tr)| (o, tr.positions[t])).collect();
            let mut f = render_transient_direct(&objs, camera, &camera_path.poses[t])?;
            f.timestamp = t as f64 * dt;
            Ok(f)
        })
        .collect::<Result<_>>()?;

    let (frames_out, noise_used) = match noise {
        None => (clean, None),
        Some(cfg) => {
            let mut cfg = cfg.clone();
            if let Some(peak) = cfg.peak_photons {
                let max = clean
                    .first()
                    .map(|f| f.histogram.iter().fold(0.0f64, |m, v| m.max(*v as f64)))
                    .unwrap_or(0.0);
                cfg.signal_scale = if max > 0.0 { peak / max } else { 0.0 };
            }
            let noisy = clean
                .par_iter()
                .enumerate()
                .map(|(t, f)| {
                    let per = NoiseConfig {
                        seed: seeds::derive(cfg.seed, seeds::TAG_NOISE, t as u64, 0),
                        ..cfg.clone()
                    };
                    add_noise(f, &per)
                })
                .collect::<Result<Vec<_>>>()?;
            (noisy, Some(cfg))
        }
    };

    let truth = GroundTruth {
        objects: scene
            .iter()
            .map(|(_, tr)| tr.positions.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
        camera: camera_path.poses.clone(),
    };
    Ok(Dataset {
        profile: "custom".into(),
        camera: camera.clone(),
        frame_rate: camera_path.frame_rate,
        seed: noise_used.as_ref().map_or(0, |c| c.seed),
        noise: noise_used,
        frames: frames_out,
        truth: Some(truth),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Falloff;
    use approx::assert_relative_eq;

    fn single_pixel_camera(falloff: Falloff, pulse_sigma: f64) -> CameraModel {
        let bw = 2.0 * 0.001 / SPEED_OF_LIGHT; // 1 mm range bins
        CameraModel::with_focal((1, 1), 1.0, 5000, bw, pulse_sigma, falloff)
    }

    fn peak(col: &[f64]) -> (usize, f64) {
        col.iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    #[test]
    fn point_at_two_meters_retro_and_diffuse() {
        let obj = ObjectModel::point();
        let wall = [Vector3::zeros()];
        for (falloff, expect) in [
            (Falloff::Retroreflective, 0.25),
            (Falloff::Diffuse, 1.0 / 16.0),
        ] {
            let cam = single_pixel_camera(falloff, 0.0);
            let h = render_histogram(&[(&obj, Vector3::new(0.0, 0.0, 2.0))], &cam, &wall).unwrap();
            let (k, v) = peak(h.as_slice().unwrap());
            // tau = 4 / c lands exactly on bin 2000.
            assert_eq!(k, 2000);
            assert_relative_eq!(v, expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn pulse_peak_weight_is_unnormalized() {
        let obj = ObjectModel::point();
        let cam = single_pixel_camera(Falloff::Retroreflective, 5.0 * 2.0 * 0.001 / SPEED_OF_LIGHT);
        let h = render_histogram(
            &[(&obj, Vector3::new(0.0, 0.0, 2.0))],
            &cam,
            &[Vector3::zeros()],
        )
        .unwrap();
        let (k, v) = peak(h.as_slice().unwrap());
        assert_eq!(k, 2000);
        assert_relative_eq!(v, 0.25, max_relative = 1e-9);
    }

    #[test]
    fn two_identical_objects_double_the_histogram() {
        let obj = ObjectModel::patch(0.1, 3).unwrap();
        let cam = CameraModel::pinhole(
            (4, 4),
            30.0,
            400,
            2.0 * 0.01 / SPEED_OF_LIGHT,
            1e-10,
            Falloff::Diffuse,
        );
        let pose = Pose::facing_wall(Vector3::new(0.0, 0.0, 1.0), [0.0, 0.0]);
        let shift = Vector3::new(0.1, 0.0, 0.8);
        let one = render_transient_direct(&[(&obj, shift)], &cam, &pose).unwrap();
        let two = render_transient_direct(&[(&obj, shift), (&obj, shift)], &cam, &pose).unwrap();
        for (a, b) in one.histogram.iter().zip(two.histogram.iter()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn object_behind_wall_rejected() {
        let obj = ObjectModel::point();
        let cam = single_pixel_camera(Falloff::Diffuse, 0.0);
        let err = render_histogram(
            &[(&obj, Vector3::new(0.0, 0.0, -0.1))],
            &cam,
            &[Vector3::zeros()],
        );
        assert!(matches!(err, Err(Error::ObjectBehindWall(_))));
    }

    #[test]
    fn doubling_range_scales_peak() {
        let obj = ObjectModel::point();
        for (falloff, ratio) in [
            (Falloff::Retroreflective, 0.25),
            (Falloff::Diffuse, 1.0 / 16.0),
        ] {
            let cam = single_pixel_camera(falloff, 0.0);
            // The splat divides the return between two bins; their sum is the peak weight.
            let p = |z: f64| {
                let h = render_histogram(
                    &[(&obj, Vector3::new(0.0, 0.0, z))],
                    &cam,
                    &[Vector3::zeros()],
                )
                .unwrap();
                h.sum()
            };
            assert_relative_eq!(p(1.6034) / p(0.8017), ratio, max_relative = 0.01);
        }
    }

    fn zero_noise(seed: u64) -> NoiseConfig {
        NoiseConfig {
            signal_scale: 0.0,
            peak_photons: None,
            ambient_rate: 0.0,
            dark_rate: 0.0,
            range_sigma: 0.0,
            seed,
        }
    }

    fn some_frame() -> FrameMeasurement {
        let cam = CameraModel::pinhole(
            (3, 3),
            30.0,
            200,
            2.0 * 0.01 / SPEED_OF_LIGHT,
            2e-10,
            Falloff::Retroreflective,
        );
        let pose = Pose::facing_wall(Vector3::new(0.0, 0.0, 1.0), [0.0, 0.0]);
        render_transient_direct(
            &[(&ObjectModel::point(), Vector3::new(0.0, 0.0, 0.5))],
            &cam,
            &pose,
        )
        .unwrap()
    }

    #[test]
    fn zero_rates_give_zero_frame() {
        let f = add_noise(&some_frame(), &zero_noise(3)).unwrap();
        assert!(f.histogram.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn noise_is_deterministic() {
        let cfg = NoiseConfig {
            signal_scale: 100.0,
            ambient_rate: 0.5,
            range_sigma: 0.005,
            ..zero_noise(11)
        };
        let a = add_noise(&some_frame(), &cfg).unwrap();
        let b = add_noise(&some_frame(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = add_noise(&some_frame(), &NoiseConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.histogram, c.histogram);
    }

    #[test]
    fn poisson_mean_matches_rate() {
        let lambda = 7.3;
        let n = 10_000;
        let mut frame = some_frame();
        frame.histogram = Array3::from_elem((1, 1, n), 1.0);
        let cfg = NoiseConfig {
            signal_scale: lambda,
            ..zero_noise(99)
        };
        let f = add_noise(&frame, &cfg).unwrap();
        let mean = f.histogram.iter().map(|v| *v as f64).sum::<f64>() / n as f64;
        assert!(
            (mean - lambda).abs() < 3.0 * lambda.sqrt() / (n as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn trajectories() {
        let lin = generate_trajectory(
            &TrajectorySpec::Linear {
                start: [0.1, 0.2, 1.0],
                velocity: [0.0; 3],
            },
            10,
            30.0,
        )
        .unwrap();
        assert!(lin
            .positions
            .iter()
            .all(|p| *p == Vector3::new(0.1, 0.2, 1.0)));

        let grid = generate_trajectory(
            &TrajectorySpec::Grid {
                center: [0.0, 0.0, 1.0],
                extent: [0.25, 0.25],
                n: [10, 10],
                hold: 1,
            },
            100,
            30.0,
        )
        .unwrap();
        let mut distinct = grid.positions.clone();
        distinct.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        distinct.dedup();
        assert_eq!(distinct.len(), 100);
        let xs = grid.positions.iter().map(|p| p.x);
        assert_relative_eq!(xs.clone().fold(f64::MIN, f64::max), 0.125, epsilon = 1e-12);
        assert_relative_eq!(xs.fold(f64::MAX, f64::min), -0.125, epsilon = 1e-12);
    }

    #[test]
    fn random_walk_steps_within_three_sigma() {
        // Per-axis |step| <= 3r holds with probability 0.9973.
        let r = 0.05;
        let t = generate_trajectory(
            &TrajectorySpec::RandomWalk {
                start: [0.0, 0.0, 1.0],
                step: r,
                seed: 4,
            },
            10_001,
            30.0,
        )
        .unwrap();
        let mut inside = 0usize;
        let mut total = 0usize;
        for w in t.positions.windows(2) {
            for d in (w[1] - w[0]).iter() {
                total += 1;
                if d.abs() <= 3.0 * r {
                    inside += 1;
                }
            }
        }
        let frac = inside as f64 / total as f64;
        let p = 0.997_300_203_936_74;
        let sd = (p * (1.0 - p) / total as f64).sqrt();
        assert!((frac - p).abs() < 4.0 * sd, "{frac}");
    }

    #[test]
    fn object_model_is_centred() {
        let o = ObjectModel::from_points(vec![
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(3.0, 2.0, 1.0),
        ])
        .unwrap();
        let c: Vector3<f64> = o.points().iter().sum();
        assert!(c.norm() < 1e-12);
        let f = ObjectModel::figure(500, [0.15, 0.4, 0.1], 1).unwrap();
        assert!(f.points().iter().sum::<Vector3<f64>>().norm() < 1e-9);
    }
}
