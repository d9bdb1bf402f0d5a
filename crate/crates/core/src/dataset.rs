//! On-disk datasets, sensor profiles and trajectory metrics.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest                      JSON, human readable
//! frames/<t>/histogram.f32      (n_x, n_y, n_t) little-endian f32
//! frames/<t>/wallpoints.f32     (n_x * n_y, 3), optional
//! frames/<t>/pointcloud.f32     (n_x * n_y, 3), optional
//! truth/trajectories            JSON, optional
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Falloff, Pose, SPEED_OF_LIGHT};
use crate::lct::Axis;
use crate::simulator::{FrameMeasurement, NoiseConfig};

const FORMAT: &str = "nlos-dataset";
const VERSION: u32 = 1;

/// Ground-truth motion of a simulated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `objects[m][t]`: world position of object `m`'s centroid at frame `t`.
    pub objects: Vec<Vec<[f64; 3]>>,
    pub camera: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub profile: String,
    pub camera: CameraModel,
    pub frame_rate: f64,
    pub seed: u64,
    pub noise: Option<NoiseConfig>,
    pub frames: Vec<FrameMeasurement>,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Copy with poses and world wall points removed, as a localization input.
    pub fn without_poses(&self) -> Dataset {
        let mut d = self.clone();
        for f in &mut d.frames {
            f.pose = None;
            f.wall_points = None;
        }
        d
    }

    /// SHA-256 over every stored array and the ground truth, hex encoded.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        for f in &self.frames {
            h.update(f32_bytes(f.histogram.iter()));
            if let Some(w) = &f.wall_points {
                h.update(f32_bytes(w.iter()));
            }
            if let Some(c) = &f.point_cloud {
                h.update(f32_bytes(c.iter()));
            }
        }
        if let Some(t) = &self.truth {
            h.update(truth_json(t)?.as_bytes());
        }
        Ok(hex(&h.finalize()))
    }
}

fn truth_json(t: &GroundTruth) -> Result<String> {
    serde_json::to_string_pretty(t).map_err(|e| Error::CorruptManifest(e.to_string()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn f32_bytes<'a>(vals: impl Iterator<Item = &'a f32>) -> Vec<u8> {
    vals.flat_map(|v| v.to_le_bytes()).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    profile: String,
    camera: CameraModel,
    frame_rate: f64,
    seed: u64,
    noise: Option<NoiseConfig>,
    frame_count: usize,
    frames: Vec<FrameRecord>,
    has_truth: bool,
    digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    timestamp: f64,
    pose: Option<Pose>,
    histogram: [usize; 3],
    wall_points: Option<[usize; 2]>,
    point_cloud: Option<[usize; 2]>,
}

fn frame_dir(root: &Path, t: usize) -> PathBuf {
    root.join("frames").join(t.to_string())
}

fn write_f32(path: &Path, vals: impl Iterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = vals.flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArray(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    if bytes.len() != expected * 4 {
        return Err(Error::ShapeMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() / 4,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn write_f64(path: &Path, vals: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = vals.flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_f64(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArray(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    if bytes.len() != expected * 8 {
        return Err(Error::ShapeMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() / 8,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Reads a JSON header, mapping a missing file to [`Error::MissingArray`].
pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArray(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    serde_json::from_str(&text)
        .map_err(|e| Error::CorruptManifest(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::with_capacity(dataset.len());
    for (t, f) in dataset.frames.iter().enumerate() {
        let dir = frame_dir(path, t);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_f32(&dir.join("histogram.f32"), f.histogram.iter().copied())?;
        if let Some(w) = &f.wall_points {
            write_f32(&dir.join("wallpoints.f32"), w.iter().copied())?;
        }
        if let Some(c) = &f.point_cloud {
            write_f32(&dir.join("pointcloud.f32"), c.iter().copied())?;
        }
        let (a, b, c) = f.histogram.dim();
        records.push(FrameRecord {
            timestamp: f.timestamp,
            pose: f.pose,
            histogram: [a, b, c],
            wall_points: f.wall_points.as_ref().map(|w| [w.nrows(), w.ncols()]),
            point_cloud: f.point_cloud.as_ref().map(|w| [w.nrows(), w.ncols()]),
        });
    }
    if let Some(t) = &dataset.truth {
        let dir = path.join("truth");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let p = dir.join("trajectories");
        fs::write(&p, truth_json(t)?).map_err(|e| Error::io(&p, e))?;
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        profile: dataset.profile.clone(),
        camera: dataset.camera.clone(),
        frame_rate: dataset.frame_rate,
        seed: dataset.seed,
        noise: dataset.noise.clone(),
        frame_count: dataset.len(),
        frames: records,
        has_truth: dataset.truth.is_some(),
        digest: dataset.digest()?,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::CorruptManifest(e.to_string()))?;
    let p = path.join("manifest");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mp = path.join("manifest");
    let text = match fs::read_to_string(&mp) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArray(mp)),
        Err(e) => return Err(Error::io(&mp, e)),
    };
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::CorruptManifest(e.to_string()))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::CorruptManifest(format!(
            "unsupported format {} v{}",
            m.format, m.version
        )));
    }
    if m.frame_count != m.frames.len() {
        return Err(Error::CorruptManifest(format!(
            "frame_count {} but {} frame records",
            m.frame_count,
            m.frames.len()
        )));
    }
    let (nx, ny) = m.camera.resolution;
    let mut frames = Vec::with_capacity(m.frame_count);
    for (t, r) in m.frames.iter().enumerate() {
        if r.histogram != [nx, ny, m.camera.n_bins] {
            return Err(Error::CorruptManifest(format!(
                "frame {t} histogram shape {:?} disagrees with the camera",
                r.histogram
            )));
        }
        let dir = frame_dir(path, t);
        let [a, b, c] = r.histogram;
        let hist = read_f32(&dir.join("histogram.f32"), a * b * c)?;
        let histogram = Array3::from_shape_vec((a, b, c), hist).expect("length checked");
        let read_rows = |name: &str, shape: Option<[usize; 2]>| -> Result<Option<Array2<f32>>> {
            match shape {
                None => Ok(None),
                Some([rows, cols]) => {
                    if cols != 3 || rows != nx * ny {
                        return Err(Error::CorruptManifest(format!(
                            "frame {t} {name} shape {rows}x{cols}"
                        )));
                    }
                    let v = read_f32(&dir.join(name), rows * cols)?;
                    Ok(Some(
                        Array2::from_shape_vec((rows, cols), v).expect("length checked"),
                    ))
                }
            }
        };
        frames.push(FrameMeasurement {
            timestamp: r.timestamp,
            pose: r.pose,
            wall_points: read_rows("wallpoints.f32", r.wall_points)?,
            histogram,
            point_cloud: read_rows("pointcloud.f32", r.point_cloud)?,
        });
    }
    let truth = if m.has_truth {
        let p = path.join("truth").join("trajectories");
        let text = match fs::read_to_string(&p) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingArray(p))
            }
            Err(e) => return Err(Error::io(&p, e)),
        };
        Some(serde_json::from_str(&text).map_err(|e| Error::CorruptManifest(e.to_string()))?)
    } else {
        None
    };
    let ds = Dataset {
        profile: m.profile,
        camera: m.camera,
        frame_rate: m.frame_rate,
        seed: m.seed,
        noise: m.noise,
        frames,
        truth,
    };
    let found = ds.digest()?;
    if found != m.digest {
        return Err(Error::DigestMismatch {
            expected: m.digest,
            found,
        });
    }
    Ok(ds)
}

/// Named sensor defaults plus the processing grids tuned for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub name: String,
    pub camera: CameraModel,
    pub noise: NoiseConfig,
    pub frame_rate: f64,
    /// `v` axis of the measurement LCT grid and of every STIR.
    pub v_axis: Axis,
    /// Lateral half-width of STIR grids, meters.
    pub stir_half_width: f64,
    /// Lateral STIR spacing, meters.
    pub stir_spacing: f64,
}

pub const CONSUMER_PROFILE: &str = "consumer-10x10-30hz";

/// Range covered by one histogram bin in the consumer profile, meters.
const CONSUMER_RANGE_BIN: f64 = 1.0 / 64.0;

pub fn profile(name: &str) -> Result<SensorProfile> {
    match name {
        CONSUMER_PROFILE => Ok(consumer_profile()),
        _ => Err(Error::Config(format!(
            "unknown profile {name:?}; available: {}",
            profile_names().join(", ")
        ))),
    }
}

pub fn profile_names() -> Vec<&'static str> {
    vec![CONSUMER_PROFILE]
}

fn consumer_profile() -> SensorProfile {
    let bin_width = 2.0 * CONSUMER_RANGE_BIN / SPEED_OF_LIGHT;
    SensorProfile {
        name: CONSUMER_PROFILE.into(),
        camera: CameraModel::pinhole(
            (10, 10),
            45.0,
            256,
            bin_width,
            150e-12,
            Falloff::Retroreflective,
        ),
        noise: NoiseConfig {
            signal_scale: 1.0,
            peak_photons: Some(50.0),
            ambient_rate: 0.05,
            dark_rate: 0.01,
            range_sigma: 0.005,
            seed: 0,
        },
        frame_rate: 30.0,
        v_axis: Axis::from_spacing(0.2, 0.02, 141).expect("static axis"),
        stir_half_width: 0.9,
        stir_spacing: 0.025,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// `(frame, error)` pairs in frame order.
    pub per_frame: Vec<(usize, f64)>,
}

/// Euclidean error of each `(frame, estimate)` against `truth[frame]`.
pub fn evaluate_trajectory(
    estimate: &[(usize, Vector3<f64>)],
    truth: &[Vector3<f64>],
) -> Result<TrajectoryMetrics> {
    if estimate.is_empty() {
        return Err(Error::LengthMismatch("estimate has no frames".into()));
    }
    let mut per_frame = Vec::with_capacity(estimate.len());
    for (t, p) in estimate {
        let g = truth.get(*t).ok_or_else(|| {
            Error::LengthMismatch(format!(
                "frame {t} has no ground truth ({} frames)",
                truth.len()
            ))
        })?;
        per_frame.push((*t, (p - g).norm()));
    }
    let mut errs: Vec<f64> = per_frame.iter().map(|e| e.1).collect();
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 {
        errs[n / 2]
    } else {
        0.5 * (errs[n / 2 - 1] + errs[n / 2])
    };
    Ok(TrajectoryMetrics {
        mean: errs.iter().sum::<f64>() / n as f64,
        median,
        max: errs[n - 1],
        per_frame,
    })
}

/// Permutation `slot -> truth object` minimizing the summed error over the
/// given frames. Objects with identical shapes are interchangeable to a
/// tracker, so labels are only meaningful up to this permutation.
/// `estimates[i][m]` is slot `m` at frame `frames[i]`.
pub fn match_labels(
    frames: &[usize],
    estimates: &[Vec<Vector3<f64>>],
    truth: &[Vec<Vector3<f64>>],
) -> Result<Vec<usize>> {
    let m = truth.len();
    if frames.len() != estimates.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frame indices for {} estimates",
            frames.len(),
            estimates.len()
        )));
    }
    let cost = |j: usize, o: usize| -> Result<f64> {
        let mut c = 0.0;
        for (t, e) in frames.iter().zip(estimates) {
            let est = e
                .get(j)
                .ok_or_else(|| Error::LengthMismatch(format!("estimate lacks slot {j}")))?;
            let g = truth[o]
                .get(*t)
                .ok_or_else(|| Error::LengthMismatch(format!("frame {t} has no ground truth")))?;
            c += (est - g).norm();
        }
        Ok(c)
    };
    let mut table = vec![vec![0.0; m]; m];
    for (j, row) in table.iter_mut().enumerate() {
        for (o, c) in row.iter_mut().enumerate() {
            *c = cost(j, o)?;
        }
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = (f64::INFINITY, perm.clone());
    loop {
        let c: f64 = perm.iter().enumerate().map(|(j, o)| table[j][*o]).sum();
        if c < best.0 {
            best = (c, perm.clone());
        }
        if !crate::tracking::next_permutation(&mut perm) {
            break;
        }
    }
    Ok(best.1)
}

/// Ground-truth positions of every object, `[object][frame]`.
pub fn truth_positions(truth: &GroundTruth) -> Vec<Vec<Vector3<f64>>> {
    truth
        .objects
        .iter()
        .map(|o| o.iter().map(|p| Vector3::from(*p)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_the_closest_permutation() {
        let a: Vec<_> = (0..4).map(|t| Vector3::new(t as f64, 0.0, 1.0)).collect();
        let b: Vec<_> = (0..4).map(|_| Vector3::new(5.0, 5.0, 1.0)).collect();
        let frames = vec![1, 2, 3];
        let est: Vec<_> = frames.iter().map(|&t| vec![b[t], a[t]]).collect();
        assert_eq!(
            match_labels(&frames, &est, &[a.clone(), b.clone()]).unwrap(),
            vec![1, 0]
        );
        let est: Vec<_> = frames.iter().map(|&t| vec![a[t], b[t]]).collect();
        assert_eq!(match_labels(&frames, &est, &[a, b]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn metrics_basic() {
        let truth: Vec<_> = (0..3).map(|t| Vector3::new(t as f64, 0.0, 1.0)).collect();
        let same: Vec<_> = truth.iter().copied().enumerate().collect();
        let m = evaluate_trajectory(&same, &truth).unwrap();
        assert_eq!((m.mean, m.median, m.max), (0.0, 0.0, 0.0));
        let off: Vec<_> = truth
            .iter()
            .map(|p| p + Vector3::new(0.0, 0.01, 0.0))
            .enumerate()
            .collect();
        let m = evaluate_trajectory(&off, &truth).unwrap();
        assert!((m.mean - 0.01).abs() < 1e-12);
    }

    #[test]
    fn unknown_profile() {
        assert!(matches!(profile("nope"), Err(Error::Config(_))));
        let p = profile(CONSUMER_PROFILE).unwrap();
        assert_eq!(p.camera.pixel_count(), 100);
        assert_eq!(p.frame_rate, 30.0);
    }

    #[test]
    fn consumer_profile_spans_64_bins_per_meter() {
        let p = profile(CONSUMER_PROFILE).unwrap();
        let bins = |r: f64| 2.0 * r / SPEED_OF_LIGHT / p.camera.bin_width;
        assert!((bins(2.0) - bins(1.0) - 64.0).abs() < 1e-9);
    }
}
