//! Camera localization against a known, static hidden object.
//!
//! The camera's height and tilt come from a plane fit of the sensor's own
//! point cloud of the wall; only its translation parallel to the wall is
//! filtered. World coordinates put the origin at the object's `(x, y)`.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{fit_plane, wall_facing_flip};
use crate::particle_filter::{
    cosine_power, init_uniform, mean_estimate, normalize_weights, propagate, residual_resample,
    FilterConfig, ParticleSet,
};
use crate::stir::CanonicalStir;
use crate::tracking::{default_skip, MeasurementTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeConfig {
    /// Two bounds: camera `x` and `y`.
    pub filter: FilterConfig,
    #[serde(default = "default_skip")]
    pub skip: usize,
}

impl LocalizeConfig {
    pub fn new(filter: FilterConfig) -> Self {
        LocalizeConfig {
            filter,
            skip: default_skip(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    /// Frame index of each `(x, y)` estimate.
    pub frames: Vec<usize>,
    pub estimates: Vec<[f64; 2]>,
    /// Camera height above the wall for every frame.
    pub z: Vec<f64>,
    /// Camera-to-world rotation for every frame.
    pub rotations: Vec<Matrix3<f64>>,
    /// Weighted posterior of every frame, before resampling.
    pub posteriors: Vec<ParticleSet>,
    pub dropped_frames: Vec<usize>,
}

/// Wall points in a frame aligned to the wall but with unknown `(x, y)`
/// offset, plus the camera height and rotation.
#[derive(Debug, Clone)]
pub struct AlignedFrame {
    pub wall_points: Vec<Vector3<f64>>,
    pub height: f64,
    pub rotation: Matrix3<f64>,
}

/// Plane-fits a camera-frame point cloud of the wall. The returned wall points
/// are what the camera sees when it sits at world `(0, 0, height)`.
pub fn align_point_cloud(points: &[Vector3<f64>]) -> Result<AlignedFrame> {
    let fit = fit_plane(points)?;
    let flip = wall_facing_flip();
    let wall_points = fit
        .aligned_points
        .iter()
        .map(|a| {
            let mut w = flip * a;
            w.z = 0.0;
            w
        })
        .collect();
    Ok(AlignedFrame {
        wall_points,
        height: fit.camera_height,
        rotation: flip * fit.rotation,
    })
}

fn score_offsets(
    particles: &ParticleSet,
    base: &[Vector3<f64>],
    stir: &CanonicalStir,
    measurement: &[f64],
    eta: f64,
) -> Vec<f64> {
    let nm: f64 = measurement.iter().map(|v| v * v).sum();
    let states = particles.states.as_standard_layout();
    let flat = states.as_slice().expect("standard layout");
    flat.par_chunks_exact(2)
        .map_init(
            || vec![0.0; measurement.len()],
            |buf, s| {
                // Moving the camera by (x, y) is moving the object by (-x, -y).
                stir.render_into(base, &Vector3::new(-s[0], -s[1], 0.0), buf);
                let (mut dot, mut nr) = (0.0, 0.0);
                for (r, i) in buf.iter().zip(measurement) {
                    dot += r * i;
                    nr += r * r;
                }
                cosine_power(dot, nm, nr, eta)
            },
        )
        .collect()
}

/// Filters the camera's wall-parallel translation. `stir` must be anchored at
/// the object's true depth with its `(x, y)` at the world origin.
pub fn localize(
    dataset: &Dataset,
    stir: &CanonicalStir,
    cfg: &LocalizeConfig,
) -> Result<LocalizationResult> {
    let transform = MeasurementTransform::new(&dataset.camera, &stir.output_v)?;
    let mut particles = init_uniform(&cfg.filter, 2)?;
    let mut out = LocalizationResult {
        frames: Vec::new(),
        estimates: Vec::new(),
        z: Vec::with_capacity(dataset.len()),
        rotations: Vec::with_capacity(dataset.len()),
        posteriors: Vec::with_capacity(dataset.len()),
        dropped_frames: Vec::new(),
    };
    for (t, frame) in dataset.frames.iter().enumerate() {
        let cloud = frame
            .point_cloud_f64()
            .ok_or(Error::MissingFrameData(t, "point cloud"))?;
        let aligned = align_point_cloud(&cloud)?;
        let meas = transform.apply(frame)?;
        let mut scored = particles.clone();
        scored.weights = score_offsets(
            &particles,
            &aligned.wall_points,
            stir,
            &meas,
            cfg.filter.eta,
        )
        .into();
        let (posterior, resampled) = match normalize_weights(&scored) {
            Ok(p) => {
                let r = residual_resample(&p);
                (p, r)
            }
            Err(Error::AllZeroWeights) => {
                log::warn!("frame {t}: every particle scored zero, keeping the prior");
                out.dropped_frames.push(t);
                (particles.clone(), particles.clone())
            }
            Err(e) => return Err(e),
        };
        if t >= cfg.skip {
            let m = mean_estimate(&posterior);
            out.frames.push(t);
            out.estimates.push([m[0], m[1]]);
        }
        out.z.push(aligned.height);
        out.rotations.push(aligned.rotation);
        out.posteriors.push(posterior);
        particles = propagate(&resampled, cfg.filter.radius);
    }
    Ok(out)
}
