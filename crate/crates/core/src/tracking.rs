//! Particle-filter tracking of hidden objects with known shapes seen by a
//! camera with known pose.

use nalgebra::Vector3;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::lct::{Axis, ResampleOptions, Sampling, TimeResampler};
use crate::particle_filter::{
    cosine_power, init_uniform, kmeans_modes, mean_estimate, normalize_weights, propagate,
    residual_resample, FilterConfig, ParticleSet,
};
use crate::simulator::FrameMeasurement;
use crate::stir::CanonicalStir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Mean,
    KmeansModes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    pub filter: FilterConfig,
    #[serde(default)]
    pub estimator: Estimator,
    /// Leading frames treated as the acquisition phase and left out of the
    /// estimates.
    #[serde(default = "default_skip")]
    pub skip: usize,
}

pub(crate) fn default_skip() -> usize {
    5
}

impl TrackConfig {
    pub fn new(filter: FilterConfig) -> Self {
        TrackConfig {
            filter,
            estimator: Estimator::Mean,
            skip: default_skip(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    /// Frame index of each estimate.
    pub frames: Vec<usize>,
    /// `estimates[i][m]`: position of object `m` at `frames[i]`.
    pub estimates: Vec<Vec<Vector3<f64>>>,
    /// Posterior-weighted mean superposition weight of each object, per
    /// estimated frame.
    pub object_weights: Vec<Vec<f64>>,
    /// Weighted posterior of every frame, before resampling.
    pub posteriors: Vec<ParticleSet>,
    /// Frames where every particle scored zero.
    pub dropped_frames: Vec<usize>,
}

impl TrackResult {
    /// `(frame, position)` pairs of object `m`.
    pub fn object_track(&self, m: usize) -> Vec<(usize, Vector3<f64>)> {
        self.frames
            .iter()
            .zip(&self.estimates)
            .map(|(t, e)| (*t, e[m]))
            .collect()
    }
}

/// Measurement LCT columns `(n_px, n_v)` of one frame on `v_axis`, with the
/// attenuation matched to the camera's falloff.
#[derive(Debug, Clone)]
pub struct MeasurementTransform {
    resampler: TimeResampler,
    n_bins: usize,
    n_v: usize,
}

impl MeasurementTransform {
    pub fn new(camera: &CameraModel, v_axis: &Axis) -> Result<Self> {
        let opts = ResampleOptions {
            sampling: Sampling::CellAverage,
            exponent: camera.falloff.lct_exponent(),
            crop: true,
        };
        Ok(MeasurementTransform {
            resampler: TimeResampler::new(camera.n_bins, camera.bin_width, v_axis, &opts)?,
            n_bins: camera.n_bins,
            n_v: v_axis.count,
        })
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn apply(&self, frame: &FrameMeasurement) -> Result<Vec<f64>> {
        let (nx, ny, nt) = frame.histogram.dim();
        if nt != self.n_bins {
            return Err(Error::LengthMismatch(format!(
                "frame has {nt} bins, transform expects {}",
                self.n_bins
            )));
        }
        let hist = frame.histogram.as_standard_layout();
        let flat = hist.as_slice().expect("standard layout");
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("histogram".into()));
        }
        let mut out = vec![0.0; nx * ny * self.n_v];
        let mut col = vec![0.0; nt];
        for (px, dst) in out.chunks_exact_mut(self.n_v).enumerate() {
            for (c, h) in col.iter_mut().zip(&flat[px * nt..(px + 1) * nt]) {
                *c = *h as f64;
            }
            self.resampler.apply(&col, dst);
        }
        Ok(out)
    }
}

/// LCT-resampled frame, flattened `(n_px, n_v)`.
pub fn transform_measurements(
    frame: &FrameMeasurement,
    camera: &CameraModel,
    v_axis: &Axis,
) -> Result<Vec<f64>> {
    MeasurementTransform::new(camera, v_axis)?.apply(frame)
}

/// Scratch space for rendering one hypothesis.
#[derive(Debug, Clone)]
pub struct RenderScratch {
    sum: Vec<f64>,
    one: Vec<f64>,
}

impl RenderScratch {
    pub fn new(len: usize) -> Self {
        RenderScratch {
            sum: vec![0.0; len],
            one: vec![0.0; len],
        }
    }

    pub fn rendering(&self) -> &[f64] {
        &self.sum
    }
}

/// Superposition of per-object renderings, each normalized to unit length and
/// weighted by its (clamped) cosine with the measurement. Writes the weights
/// into `weights` and the cube into `scratch`.
pub fn render_multi(
    state: &[f64],
    wall_points: &[Vector3<f64>],
    stirs: &[CanonicalStir],
    measurement: &[f64],
    scratch: &mut RenderScratch,
    weights: &mut [f64],
) {
    let mnorm = measurement.iter().map(|v| v * v).sum::<f64>().sqrt();
    scratch.sum.iter_mut().for_each(|v| *v = 0.0);
    for (m, stir) in stirs.iter().enumerate() {
        let pos = Vector3::new(state[3 * m], state[3 * m + 1], state[3 * m + 2]);
        stir.render_into(wall_points, &stir.shift_for(&pos), &mut scratch.one);
        let (mut dot, mut n2) = (0.0, 0.0);
        for (r, i) in scratch.one.iter().zip(measurement) {
            dot += r * i;
            n2 += r * r;
        }
        if n2 <= 0.0 || mnorm <= 0.0 {
            weights[m] = 0.0;
            continue;
        }
        let rn = n2.sqrt();
        let w = (dot / (rn * mnorm)).max(0.0);
        weights[m] = w;
        if w > 0.0 {
            let s = w / rn;
            for (acc, r) in scratch.sum.iter_mut().zip(&scratch.one) {
                *acc += s * r;
            }
        }
    }
}

/// Score of a state against a transformed frame.
pub fn score_state(
    state: &[f64],
    wall_points: &[Vector3<f64>],
    stirs: &[CanonicalStir],
    measurement: &[f64],
    eta: f64,
    scratch: &mut RenderScratch,
    weights: &mut [f64],
) -> f64 {
    if stirs.len() == 1 {
        let pos = Vector3::new(state[0], state[1], state[2]);
        stirs[0].render_into(wall_points, &stirs[0].shift_for(&pos), &mut scratch.sum);
        let (mut dot, mut nm, mut nr) = (0.0, 0.0, 0.0);
        for (r, i) in scratch.sum.iter().zip(measurement) {
            dot += r * i;
            nm += i * i;
            nr += r * r;
        }
        weights[0] = if nm > 0.0 && nr > 0.0 {
            (dot / (nm.sqrt() * nr.sqrt())).max(0.0)
        } else {
            0.0
        };
        return cosine_power(dot, nm, nr, eta);
    }
    render_multi(state, wall_points, stirs, measurement, scratch, weights);
    let (mut dot, mut nm, mut nr) = (0.0, 0.0, 0.0);
    for (r, i) in scratch.sum.iter().zip(measurement) {
        dot += r * i;
        nm += i * i;
        nr += r * r;
    }
    cosine_power(dot, nm, nr, eta)
}

/// Scores every particle against one frame. Returns `(scores, per-object
/// weights (K, M))`.
pub(crate) fn score_particles(
    particles: &ParticleSet,
    wall_points: &[Vector3<f64>],
    stirs: &[CanonicalStir],
    measurement: &[f64],
    eta: f64,
) -> (Vec<f64>, Array2<f64>) {
    let m = stirs.len();
    let len = measurement.len();
    let states = particles.states.as_standard_layout();
    let flat = states.as_slice().expect("standard layout");
    let d = particles.dim();
    let results: Vec<(f64, Vec<f64>)> = flat
        .par_chunks_exact(d)
        .map_init(
            || RenderScratch::new(len),
            |scratch, s| {
                let mut w = vec![0.0; m];
                let score = score_state(s, wall_points, stirs, measurement, eta, scratch, &mut w);
                (score, w)
            },
        )
        .collect();
    let mut weights = Array2::zeros((results.len(), m));
    let mut scores = Vec::with_capacity(results.len());
    for (k, (s, w)) in results.into_iter().enumerate() {
        scores.push(s);
        for (j, v) in w.into_iter().enumerate() {
            weights[[k, j]] = v;
        }
    }
    (scores, weights)
}

fn check_stirs(stirs: &[CanonicalStir]) -> Result<Axis> {
    let first = stirs
        .first()
        .ok_or_else(|| Error::Config("no object STIRs given".into()))?;
    for s in stirs {
        if s.output_v != first.output_v {
            return Err(Error::GridMismatch(
                "STIRs disagree on the output v axis".into(),
            ));
        }
    }
    Ok(first.output_v)
}

/// Runs the tracker over every frame of `dataset`.
pub fn track(dataset: &Dataset, stirs: &[CanonicalStir], cfg: &TrackConfig) -> Result<TrackResult> {
    let v_axis = check_stirs(stirs)?;
    let m = stirs.len();
    if m > 1 && cfg.estimator != Estimator::KmeansModes {
        return Err(Error::Config(
            "tracking several objects needs the kmeans_modes estimator".into(),
        ));
    }
    let transform = MeasurementTransform::new(&dataset.camera, &v_axis)?;
    let mut particles = init_uniform(&cfg.filter, 3 * m)?;
    let mut result = TrackResult {
        frames: Vec::new(),
        estimates: Vec::new(),
        object_weights: Vec::new(),
        posteriors: Vec::with_capacity(dataset.len()),
        dropped_frames: Vec::new(),
    };
    for (t, frame) in dataset.frames.iter().enumerate() {
        let walls = frame
            .wall_points_f64()
            .ok_or(Error::MissingFrameData(t, "wall points"))?;
        let meas = transform.apply(frame)?;
        let (scores, obj_w) = score_particles(&particles, &walls, stirs, &meas, cfg.filter.eta);
        let mut scored = particles.clone();
        scored.weights = scores.into();
        let (posterior, resampled) = match normalize_weights(&scored) {
            Ok(p) => {
                let r = residual_resample(&p);
                (p, r)
            }
            Err(Error::AllZeroWeights) => {
                log::warn!("frame {t}: every particle scored zero, keeping the prior");
                result.dropped_frames.push(t);
                (particles.clone(), particles.clone())
            }
            Err(e) => return Err(e),
        };
        if t >= cfg.skip {
            let est = match cfg.estimator {
                Estimator::Mean => {
                    let mean = mean_estimate(&posterior);
                    (0..m)
                        .map(|j| Vector3::new(mean[3 * j], mean[3 * j + 1], mean[3 * j + 2]))
                        .collect()
                }
                Estimator::KmeansModes => assign_modes(&resampled, m)?,
            };
            let wsum: Vec<f64> = (0..m)
                .map(|j| {
                    obj_w
                        .column(j)
                        .iter()
                        .zip(posterior.weights.iter())
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            result.frames.push(t);
            result.estimates.push(est);
            result.object_weights.push(wsum);
        }
        result.posteriors.push(posterior);
        particles = propagate(&resampled, cfg.filter.radius);
    }
    Ok(result)
}

/// Clusters the pooled per-object positions of all particles into `m` modes
/// and gives each object slot the mode most of its sub-states fall into.
fn assign_modes(p: &ParticleSet, m: usize) -> Result<Vec<Vector3<f64>>> {
    let k = p.len();
    if m == 1 {
        let modes = kmeans_modes(p, 1)?;
        let c = &modes[0].mean;
        return Ok(vec![Vector3::new(c[0], c[1], c[2])]);
    }
    let mut pooled = Array2::zeros((k * m, 3));
    for (i, row) in p.states.rows().into_iter().enumerate() {
        for j in 0..m {
            for a in 0..3 {
                pooled[[i * m + j, a]] = row[3 * j + a];
            }
        }
    }
    let pooled_set = ParticleSet {
        weights: ndarray::Array1::from_elem(k * m, 1.0 / (k * m) as f64),
        states: pooled,
        seed: p.seed,
        epoch: p.epoch,
    };
    let modes = kmeans_modes(&pooled_set, m)?;
    let centers: Vec<Vector3<f64>> = modes
        .iter()
        .map(|c| Vector3::new(c.mean[0], c.mean[1], c.mean[2]))
        .collect();
    // votes[j][c]: sub-states of slot j nearest to mode c.
    let mut votes = vec![vec![0usize; m]; m];
    for i in 0..k {
        for (j, vote) in votes.iter_mut().enumerate() {
            let x = Vector3::new(
                p.states[[i, 3 * j]],
                p.states[[i, 3 * j + 1]],
                p.states[[i, 3 * j + 2]],
            );
            let c = (0..m)
                .min_by(|&a, &b| {
                    (x - centers[a])
                        .norm_squared()
                        .total_cmp(&(x - centers[b]).norm_squared())
                })
                .expect("m >= 1");
            vote[c] += 1;
        }
    }
    let perm = best_assignment(&votes);
    Ok(perm.into_iter().map(|c| centers[c]).collect())
}

/// Permutation `slot -> mode` maximizing total votes; ties keep the lexically
/// first permutation.
fn best_assignment(votes: &[Vec<usize>]) -> Vec<usize> {
    let m = votes.len();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = perm.clone();
    let mut best_score = 0usize;
    let mut first = true;
    loop {
        let s: usize = perm.iter().enumerate().map(|(j, c)| votes[j][*c]).sum();
        if first || s > best_score {
            best_score = s;
            best = perm.clone();
            first = false;
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best
}

pub(crate) fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
