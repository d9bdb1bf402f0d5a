//! Multi-frame fusion of wall samples and volume recovery by filtered
//! backprojection, plus the per-frame backprojection-argmax tracker used as a
//! baseline.

use std::path::Path;

use nalgebra::Vector3;
use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_f64, read_json, write_f64, write_json, Dataset};
use crate::error::{Error, Result};
use crate::lct::{AlbedoVolume, Axis, GridSpec};
use crate::simulator::FrameMeasurement;
use crate::tracking::MeasurementTransform;

/// Wall samples fused across frames: one LCT column per distinct wall point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    pub points: Vec<Vector3<f64>>,
    pub columns: Vec<Vec<f64>>,
    /// Frames averaged into each sample.
    pub counts: Vec<usize>,
    pub v_axis: Axis,
    /// Samples closer than this are merged.
    pub merge_radius: f64,
}

impl SampleCloud {
    pub fn new(v_axis: Axis, merge_radius: f64) -> Self {
        SampleCloud {
            points: Vec::new(),
            columns: Vec::new(),
            counts: Vec::new(),
            v_axis,
            merge_radius,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds one sample, averaging it into an existing one within
    /// `merge_radius`.
    pub fn insert(&mut self, point: Vector3<f64>, column: &[f64]) {
        let r2 = self.merge_radius * self.merge_radius;
        let hit = self
            .points
            .iter()
            .enumerate()
            .filter(|(_, p)| (*p - point).norm_squared() <= r2)
            .min_by(|a, b| {
                (a.1 - point)
                    .norm_squared()
                    .total_cmp(&(b.1 - point).norm_squared())
            })
            .map(|(i, _)| i);
        match hit {
            Some(i) => {
                let n = self.counts[i] as f64;
                let inv = 1.0 / (n + 1.0);
                for (c, v) in self.columns[i].iter_mut().zip(column) {
                    *c = (*c * n + v) * inv;
                }
                self.points[i] = (self.points[i] * n + point) * inv;
                self.counts[i] += 1;
            }
            None => {
                self.points.push(point);
                self.columns.push(column.to_vec());
                self.counts.push(1);
            }
        }
    }

    /// Adds every pixel of a posed frame.
    pub fn insert_frame(
        &mut self,
        frame: &FrameMeasurement,
        transform: &MeasurementTransform,
        t: usize,
    ) -> Result<()> {
        let walls = frame
            .wall_points_f64()
            .ok_or(Error::MissingFrameData(t, "wall points"))?;
        let cols = transform.apply(frame)?;
        for (w, c) in walls.iter().zip(cols.chunks_exact(transform.n_v())) {
            self.insert(*w, c);
        }
        Ok(())
    }
}

/// Fuses every frame of a posed dataset.
pub fn accumulate(dataset: &Dataset, v_axis: &Axis, merge_radius: f64) -> Result<SampleCloud> {
    let transform = MeasurementTransform::new(&dataset.camera, v_axis)?;
    let mut cloud = SampleCloud::new(*v_axis, merge_radius);
    for (t, f) in dataset.frames.iter().enumerate() {
        cloud.insert_frame(f, &transform, t)?;
    }
    Ok(cloud)
}

/// Reads the linear interpolant of `col` at `v`; zero outside the axis.
#[inline]
fn read(col: &[f64], axis: &Axis, v: f64) -> f64 {
    let p = axis.position(v);
    if p < 0.0 || p > (col.len() - 1) as f64 {
        return 0.0;
    }
    let k = p.floor() as usize;
    let f = p - k as f64;
    if k + 1 >= col.len() {
        col[k]
    } else {
        (1.0 - f) * col[k] + f * col[k + 1]
    }
}

/// Unfiltered backprojection: each voxel sums every column at `v = r^2`.
pub fn backproject_raw(cloud: &SampleCloud, grid: &GridSpec) -> Result<Array3<f64>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (nx, ny, nz) = grid.shape();
    let xs: Vec<f64> = grid.x.coords().collect();
    let ys: Vec<f64> = grid.y.coords().collect();
    let zs: Vec<f64> = grid.v.coords().collect();
    let active: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.columns[i].iter().any(|v| *v != 0.0))
        .collect();
    let mut values = Array3::<f64>::zeros((nx, ny, nz));
    values
        .as_slice_mut()
        .expect("fresh array is contiguous")
        .par_chunks_exact_mut(nz)
        .enumerate()
        .for_each(|(ij, col)| {
            let (x, y) = (xs[ij / ny], ys[ij % ny]);
            for &s in &active {
                let p = cloud.points[s];
                let d2 = (x - p.x).powi(2) + (y - p.y).powi(2);
                let c = &cloud.columns[s];
                for (o, z) in col.iter_mut().zip(&zs) {
                    *o += read(c, &cloud.v_axis, d2 + z * z);
                }
            }
        });
    Ok(values)
}

/// Backprojection sharpened by a negated second difference along `z`,
/// clamped at zero. Falloff is already compensated by the LCT attenuation of
/// the columns.
pub fn backproject(cloud: &SampleCloud, grid: &GridSpec) -> Result<AlbedoVolume> {
    let raw = backproject_raw(cloud, grid)?;
    let (_, _, nz) = raw.dim();
    let mut out = Array3::zeros(raw.dim());
    for (src, mut dst) in raw
        .lanes(ndarray::Axis(2))
        .into_iter()
        .zip(out.lanes_mut(ndarray::Axis(2)))
    {
        for k in 0..nz {
            let prev = if k > 0 { src[k - 1] } else { src[k] };
            let next = if k + 1 < nz { src[k + 1] } else { src[k] };
            dst[k] = (2.0 * src[k] - prev - next).max(0.0);
        }
    }
    AlbedoVolume::new(out, *grid)
}

/// Centre of the voxel with the largest value, lowest linear index on ties.
/// `None` when the volume is all zero.
pub fn argmax_voxel(volume: &AlbedoVolume) -> Option<Vector3<f64>> {
    let mut best: Option<((usize, usize, usize), f64)> = None;
    for (idx, v) in volume.values.indexed_iter() {
        if *v > 0.0 && best.is_none_or(|(_, b)| *v > b) {
            best = Some((idx, *v));
        }
    }
    best.map(|((i, j, k), _)| {
        let g = &volume.grid;
        Vector3::new(g.x.coord(i), g.y.coord(j), g.v.coord(k))
    })
}

/// Value-weighted centroid of voxels at or above `fraction` of the maximum.
pub fn thresholded_centroid(volume: &AlbedoVolume, fraction: f64) -> Option<Vector3<f64>> {
    let max = volume.values.iter().fold(0.0f64, |m, v| m.max(*v));
    if max <= 0.0 {
        return None;
    }
    let thr = fraction * max;
    let g = &volume.grid;
    let (mut acc, mut mass) = (Vector3::zeros(), 0.0);
    for ((i, j, k), v) in volume.values.indexed_iter() {
        if *v >= thr {
            acc += Vector3::new(g.x.coord(i), g.y.coord(j), g.v.coord(k)) * *v;
            mass += v;
        }
    }
    Some(acc / mass)
}

/// Full width at half maximum along `x` through the global maximum, with
/// linear interpolation of the half-maximum crossings.
pub fn lateral_fwhm(volume: &AlbedoVolume) -> Option<f64> {
    let ((_, j, k), max) = volume
        .values
        .indexed_iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))?;
    if max <= 0.0 {
        return None;
    }
    let line: Vec<f64> = volume.values.slice(ndarray::s![.., j, k]).to_vec();
    let peak = line.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?.0;
    let half = 0.5 * line[peak];
    let dx = volume.grid.x.spacing();
    let mut left = 0.0;
    for i in (0..peak).rev() {
        if line[i] < half {
            left = i as f64 + (half - line[i]) / (line[i + 1] - line[i]);
            break;
        }
    }
    let mut right = (line.len() - 1) as f64;
    for i in peak + 1..line.len() {
        if line[i] < half {
            right = (i - 1) as f64 + (line[i - 1] - half) / (line[i - 1] - line[i]);
            break;
        }
    }
    Some((right - left) * dx)
}

/// Argmax of each frame's own backprojection. `None` marks frames with no
/// signal.
pub fn baseline_argmax_track(
    dataset: &Dataset,
    grid: &GridSpec,
    v_axis: &Axis,
) -> Result<Vec<Option<Vector3<f64>>>> {
    let transform = MeasurementTransform::new(&dataset.camera, v_axis)?;
    let mut out = Vec::with_capacity(dataset.len());
    for (t, f) in dataset.frames.iter().enumerate() {
        let mut cloud = SampleCloud::new(*v_axis, 0.0);
        cloud.insert_frame(f, &transform, t)?;
        let vol = backproject(&cloud, grid)?;
        out.push(argmax_voxel(&vol));
    }
    Ok(out)
}

const VOLUME_FORMAT: &str = "nlos-volume";
const VOLUME_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeHeader {
    format: String,
    version: u32,
    grid: GridSpec,
}

/// Writes `dir/volume.json` and the raw `dir/values.f64`.
pub fn write_volume(volume: &AlbedoVolume, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_f64(&dir.join("values.f64"), volume.values.iter().copied())?;
    write_json(
        &dir.join("volume.json"),
        &VolumeHeader {
            format: VOLUME_FORMAT.into(),
            version: VOLUME_VERSION,
            grid: volume.grid,
        },
    )
}

pub fn read_volume(dir: &Path) -> Result<AlbedoVolume> {
    let h: VolumeHeader = read_json(&dir.join("volume.json"))?;
    if h.format != VOLUME_FORMAT || h.version != VOLUME_VERSION {
        return Err(Error::CorruptManifest(format!(
            "unsupported format {} v{}",
            h.format, h.version
        )));
    }
    h.grid.x.validate()?;
    h.grid.y.validate()?;
    h.grid.v.validate()?;
    let shape = h.grid.shape();
    let vals = read_f64(&dir.join("values.f64"), shape.0 * shape.1 * shape.2)?;
    AlbedoVolume::new(
        Array3::from_shape_vec(shape, vals).expect("length checked"),
        h.grid,
    )
}

/// Centres and values of voxels at or above `fraction` of the maximum.
pub fn iso_points(volume: &AlbedoVolume, fraction: f64) -> Vec<(Vector3<f64>, f64)> {
    let max = volume.values.iter().fold(0.0f64, |m, v| m.max(*v));
    if max <= 0.0 {
        return Vec::new();
    }
    let g = &volume.grid;
    volume
        .values
        .indexed_iter()
        .filter(|(_, v)| **v >= fraction * max)
        .map(|((i, j, k), v)| (Vector3::new(g.x.coord(i), g.y.coord(j), g.v.coord(k)), *v))
        .collect()
}
