//! Scene files and the batch commands behind the `nlos` binary.
//!
//! Every command is a pure function of its configuration, inputs and seed;
//! outputs are plain JSON, CSV, raw little-endian arrays and SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    evaluate_trajectory, match_labels, profile, read_dataset, read_json, truth_positions,
    write_dataset, write_f64, write_json, Dataset, SensorProfile, TrajectoryMetrics,
    CONSUMER_PROFILE,
};
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::lct::{AlbedoVolume, Axis, GridSpec};
use crate::localization::{localize, LocalizeConfig};
use crate::particle_filter::{kde, scott_bandwidth, FilterConfig, ParticleSet};
use crate::plot;
use crate::reconstruction::{accumulate, backproject, iso_points, read_volume, write_volume};
use crate::simulator::{
    generate_camera_path, generate_trajectory, simulate_sequence, CameraPathSpec, ObjectModel,
    ObjectSpec, TrajectorySpec,
};
use crate::stir::{precompute_canonical_stir, read_stir, write_stir, CanonicalStir};
use crate::tracking::{track, Estimator, TrackConfig};

/// A scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Store model intensities without photon or range noise.
    #[serde(default)]
    pub noiseless: bool,
    /// Overrides the profile's horizontal field of view, degrees.
    #[serde(default)]
    pub fov_deg: Option<f64>,
    pub objects: Vec<SceneObject>,
    pub camera: CameraPathSpec,
    #[serde(default)]
    pub stir: StirSettings,
    #[serde(default)]
    pub track: Option<TrackSettings>,
    #[serde(default)]
    pub localize: Option<LocalizeSettings>,
    #[serde(default)]
    pub reconstruct: Option<ReconstructSettings>,
    #[serde(default)]
    pub paths: Paths,
}

fn default_profile() -> String {
    CONSUMER_PROFILE.into()
}
fn default_frames() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub shape: ObjectSpec,
    pub trajectory: TrajectorySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StirSettings {
    #[serde(default = "one")]
    pub reference_depth: f64,
    /// Lateral half-width, defaults to the profile's.
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub spacing: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for StirSettings {
    fn default() -> Self {
        StirSettings {
            reference_depth: 1.0,
            half_width: None,
            spacing: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSettings {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Three `[min, max]` pairs per object.
    pub bounds: Vec<[f64; 2]>,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "default_skip")]
    pub skip: usize,
    /// Writes a per-frame KDE of each object's marginal at this spacing.
    #[serde(default)]
    pub kde_spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeSettings {
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Camera `x` and `y` bounds relative to the landmark.
    pub bounds: Vec<[f64; 2]>,
    #[serde(default = "default_skip")]
    pub skip: usize,
    /// Index of the static scene object used as landmark.
    #[serde(default)]
    pub landmark: usize,
}

fn default_particles() -> usize {
    1000
}
fn default_radius() -> f64 {
    0.05
}
fn default_eta() -> f64 {
    4.0
}
fn default_skip() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSettings {
    pub x: Axis,
    pub y: Axis,
    pub z: Axis,
    #[serde(default = "default_merge")]
    pub merge_radius: f64,
    /// Fraction of the maximum kept in the iso-surface export.
    #[serde(default = "default_iso")]
    pub iso_fraction: f64,
}

fn default_merge() -> f64 {
    0.005
}
fn default_iso() -> f64 {
    0.5
}

impl ReconstructSettings {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.x, self.y, self.z)
    }
}

/// Default locations, resolved against the scene file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub stirs: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a scene file and resolves its paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.dataset,
            &mut cfg.paths.stirs,
            &mut cfg.paths.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::Config("scene has no objects".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        profile(&self.profile)?;
        if let Some(t) = &self.track {
            if t.bounds.len() != 3 * self.objects.len() {
                return Err(Error::BoundsDimensionMismatch {
                    bounds: t.bounds.len(),
                    dim: 3 * self.objects.len(),
                });
            }
        }
        if let Some(l) = &self.localize {
            if l.bounds.len() != 2 {
                return Err(Error::BoundsDimensionMismatch {
                    bounds: l.bounds.len(),
                    dim: 2,
                });
            }
            if l.landmark >= self.objects.len() {
                return Err(Error::Config(format!(
                    "landmark {} is not a scene object",
                    l.landmark
                )));
            }
        }
        Ok(())
    }

    pub fn sensor(&self) -> Result<SensorProfile> {
        profile(&self.profile)
    }

    /// Profile camera with the scene's overrides applied.
    pub fn camera_model(&self) -> Result<CameraModel> {
        let p = self.sensor()?;
        let c = p.camera;
        Ok(match self.fov_deg {
            Some(fov) => CameraModel::pinhole(
                c.resolution,
                fov,
                c.n_bins,
                c.bin_width,
                c.pulse_sigma,
                c.falloff,
            ),
            None => c,
        })
    }

    pub fn object_models(&self) -> Result<Vec<ObjectModel>> {
        self.objects.iter().map(|o| o.shape.build()).collect()
    }

    pub fn stir_grid(&self) -> Result<GridSpec> {
        let p = self.sensor()?;
        let hw = self.stir.half_width.unwrap_or(p.stir_half_width);
        let dx = self.stir.spacing.unwrap_or(p.stir_spacing);
        if !(hw > 0.0 && dx > 0.0) {
            return Err(Error::Config(
                "STIR half-width and spacing must be positive".into(),
            ));
        }
        let n = (2.0 * hw / dx).round() as usize + 1;
        GridSpec::new(Axis::new(-hw, hw, n)?, Axis::new(-hw, hw, n)?, p.v_axis)
    }

    pub fn track_config(&self) -> Result<TrackConfig> {
        let t = self
            .track
            .as_ref()
            .ok_or_else(|| Error::Config("scene has no [track] section".into()))?;
        Ok(TrackConfig {
            filter: FilterConfig {
                particles: t.particles,
                radius: t.radius,
                eta: t.eta,
                bounds: t.bounds.clone(),
                seed: self.seed,
            },
            estimator: t.estimator,
            skip: t.skip,
        })
    }

    pub fn localize_config(&self) -> Result<LocalizeConfig> {
        let l = self
            .localize
            .as_ref()
            .ok_or_else(|| Error::Config("scene has no [localize] section".into()))?;
        Ok(LocalizeConfig {
            filter: FilterConfig {
                particles: l.particles,
                radius: l.radius,
                eta: l.eta,
                bounds: l.bounds.clone(),
                seed: self.seed,
            },
            skip: l.skip,
        })
    }

    /// Position of the landmark object, which must be static.
    pub fn landmark(&self) -> Result<Vector3<f64>> {
        let l = self
            .localize
            .as_ref()
            .ok_or_else(|| Error::Config("scene has no [localize] section".into()))?;
        match &self.objects[l.landmark].trajectory {
            TrajectorySpec::Static { position } => Ok(Vector3::from(*position)),
            _ => Err(Error::Config(
                "the localization landmark must be static".into(),
            )),
        }
    }
}

/// Renders the scene into a dataset.
pub fn simulate(cfg: &RunConfig) -> Result<Dataset> {
    let p = cfg.sensor()?;
    let camera = cfg.camera_model()?;
    let models = cfg.object_models()?;
    let mut scene = Vec::with_capacity(models.len());
    for (m, o) in models.into_iter().zip(&cfg.objects) {
        scene.push((
            m,
            generate_trajectory(&o.trajectory, cfg.frames, p.frame_rate)?,
        ));
    }
    let path = generate_camera_path(&cfg.camera, cfg.frames, p.frame_rate)?;
    let noise = crate::simulator::NoiseConfig {
        seed: cfg.seed,
        ..p.noise.clone()
    };
    let mut ds = simulate_sequence(&scene, &camera, &path, (!cfg.noiseless).then_some(&noise))?;
    ds.profile = p.name;
    ds.seed = cfg.seed;
    Ok(ds)
}

/// Canonical STIR of every scene object at the configured reference depth.
pub fn precompute_stirs(cfg: &RunConfig) -> Result<Vec<CanonicalStir>> {
    let grid = cfg.stir_grid()?;
    let sigma = cfg.camera_model()?.pulse_sigma;
    cfg.object_models()?
        .iter()
        .map(|m| precompute_canonical_stir(m, &grid, sigma, cfg.stir.reference_depth))
        .collect()
}

fn load_stirs(cfg: &RunConfig, dir: Option<&Path>) -> Result<Vec<CanonicalStir>> {
    match dir {
        None => precompute_stirs(cfg),
        Some(d) => {
            let stirs = (0..cfg.objects.len())
                .map(|m| read_stir(&d.join(m.to_string())))
                .collect::<Result<Vec<_>>>()?;
            Ok(stirs)
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = simulate(cfg)?;
    write_dataset(&ds, out)?;
    log::info!("wrote {} frames to {}", ds.len(), out.display());
    Ok(())
}

/// Writes `out/<m>/` for every scene object.
pub fn cmd_precompute_stir(cfg: &RunConfig, out: &Path) -> Result<()> {
    for (m, s) in precompute_stirs(cfg)?.iter().enumerate() {
        write_stir(s, &out.join(m.to_string()))?;
    }
    Ok(())
}

/// Tracker output as written to `trajectory.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackOutput {
    pub frames: Vec<usize>,
    /// `[frame][object]`.
    pub estimates: Vec<Vec<[f64; 3]>>,
    pub object_weights: Vec<Vec<f64>>,
    pub dropped_frames: Vec<usize>,
}

/// Localizer output as written to `camera.json`. Positions are world
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeOutput {
    pub frames: Vec<usize>,
    pub xy: Vec<[f64; 2]>,
    /// Camera height of every frame.
    pub z: Vec<f64>,
    pub dropped_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimateFile {
    Track(TrackOutput),
    Localize(LocalizeOutput),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KdeHeader {
    bandwidth: Vec<Vec<f64>>,
    axes: Vec<[Axis; 3]>,
    frames: Vec<usize>,
}

fn marginal(p: &ParticleSet, m: usize) -> ParticleSet {
    let mut states = Array2::zeros((p.len(), 3));
    for (i, row) in p.states.rows().into_iter().enumerate() {
        for a in 0..3 {
            states[[i, a]] = row[3 * m + a];
        }
    }
    ParticleSet {
        states,
        weights: p.weights.clone(),
        seed: p.seed,
        epoch: p.epoch,
    }
}

pub fn cmd_track(cfg: &RunConfig, dataset: &Path, stirs: Option<&Path>, out: &Path) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let stirs = load_stirs(cfg, stirs)?;
    let tc = cfg.track_config()?;
    let r = track(&ds, &stirs, &tc)?;
    create_dir(out)?;
    let file = EstimateFile::Track(TrackOutput {
        frames: r.frames.clone(),
        estimates: r
            .estimates
            .iter()
            .map(|e| e.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
        object_weights: r.object_weights.clone(),
        dropped_frames: r.dropped_frames.clone(),
    });
    write_json(&out.join("trajectory.json"), &file)?;
    let mut csv = String::from("frame,object,x,y,z\n");
    for (t, e) in r.frames.iter().zip(&r.estimates) {
        for (m, p) in e.iter().enumerate() {
            writeln!(csv, "{t},{m},{},{},{}", p.x, p.y, p.z).expect("string write");
        }
    }
    write_text(&out.join("trajectory.csv"), &csv)?;

    if let Some(dx) = cfg.track.as_ref().and_then(|t| t.kde_spacing) {
        if !(dx > 0.0) {
            return Err(Error::Config("kde_spacing must be positive".into()));
        }
        let dir = out.join("kde");
        create_dir(&dir)?;
        let axes: Vec<[Axis; 3]> = (0..stirs.len())
            .map(|m| {
                let ax = |a: usize| {
                    let [lo, hi] = tc.filter.bounds[3 * m + a];
                    Axis::new(lo, hi, ((hi - lo) / dx).round() as usize + 1)
                };
                Ok([ax(0)?, ax(1)?, ax(2)?])
            })
            .collect::<Result<_>>()?;
        let mut bandwidth = Vec::with_capacity(r.frames.len());
        for &t in &r.frames {
            let mut row = Vec::with_capacity(stirs.len());
            for (m, ax) in axes.iter().enumerate() {
                let p = marginal(&r.posteriors[t], m);
                let bw = scott_bandwidth(&p).max(1e-6);
                let density = kde(&p, bw, ax)?;
                write_f64(&dir.join(format!("{t}_{m}.f64")), density.iter().copied())?;
                row.push(bw);
            }
            bandwidth.push(row);
        }
        write_json(
            &dir.join("kde.json"),
            &KdeHeader {
                bandwidth,
                axes,
                frames: r.frames.clone(),
            },
        )?;
    }
    Ok(())
}

/// STIR of the landmark re-anchored so that a zero shift renders it at its
/// own depth with its `(x, y)` at the origin.
pub fn landmark_stir(cfg: &RunConfig, stirs: Option<&Path>) -> Result<CanonicalStir> {
    let l = cfg
        .localize
        .as_ref()
        .ok_or_else(|| Error::Config("scene has no [localize] section".into()))?;
    let pos = cfg.landmark()?;
    let stir = match stirs {
        Some(d) => read_stir(&d.join(l.landmark.to_string()))?,
        None => {
            let model = cfg.objects[l.landmark].shape.build()?;
            precompute_canonical_stir(
                &model,
                &cfg.stir_grid()?,
                cfg.camera_model()?.pulse_sigma,
                cfg.stir.reference_depth,
            )?
        }
    };
    let off = stir.shift_for(&Vector3::new(stir.reference.x, stir.reference.y, pos.z));
    Ok(stir.reanchor(off))
}

pub fn cmd_localize(
    cfg: &RunConfig,
    dataset: &Path,
    stirs: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let stir = landmark_stir(cfg, stirs)?;
    let origin = cfg.landmark()?;
    let r = localize(&ds, &stir, &cfg.localize_config()?)?;
    create_dir(out)?;
    let xy: Vec<[f64; 2]> = r
        .estimates
        .iter()
        .map(|e| [e[0] + origin.x, e[1] + origin.y])
        .collect();
    let mut csv = String::from("frame,x,y,z\n");
    for (t, p) in r.frames.iter().zip(&xy) {
        writeln!(csv, "{t},{},{},{}", p[0], p[1], r.z[*t]).expect("string write");
    }
    write_json(
        &out.join("camera.json"),
        &EstimateFile::Localize(LocalizeOutput {
            frames: r.frames,
            xy,
            z: r.z,
            dropped_frames: r.dropped_frames,
        }),
    )?;
    write_text(&out.join("camera.csv"), &csv)
}

pub fn reconstruct(cfg: &RunConfig, ds: &Dataset) -> Result<AlbedoVolume> {
    let rs = cfg
        .reconstruct
        .as_ref()
        .ok_or_else(|| Error::Config("scene has no [reconstruct] section".into()))?;
    let cloud = accumulate(ds, &cfg.sensor()?.v_axis, rs.merge_radius)?;
    backproject(&cloud, &rs.grid()?)
}

/// Writes `out/volume/` and the thresholded voxel centres `out/iso.csv`.
pub fn cmd_reconstruct(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let vol = reconstruct(cfg, &ds)?;
    let frac = cfg
        .reconstruct
        .as_ref()
        .map_or(default_iso(), |r| r.iso_fraction);
    write_volume(&vol, &out.join("volume"))?;
    let mut csv = String::from("x,y,z,value\n");
    for (p, v) in iso_points(&vol, frac) {
        writeln!(csv, "{},{},{},{v}", p.x, p.y, p.z).expect("string write");
    }
    write_text(&out.join("iso.csv"), &csv)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectMetrics {
    /// Ground-truth object this estimate slot was matched to.
    pub truth_index: usize,
    #[serde(flatten)]
    pub metrics: TrajectoryMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Track {
        objects: Vec<ObjectMetrics>,
    },
    Localize {
        xy: TrajectoryMetrics,
        z_mean_abs: f64,
        z_max_abs: f64,
    },
}

/// Scores an estimate file against the dataset's ground truth.
pub fn evaluate(estimate: &EstimateFile, ds: &Dataset) -> Result<Report> {
    let truth = ds
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("dataset carries no ground truth".into()))?;
    match estimate {
        EstimateFile::Track(t) => {
            let gt = truth_positions(truth);
            let est: Vec<Vec<Vector3<f64>>> = t
                .estimates
                .iter()
                .map(|e| e.iter().map(|p| Vector3::from(*p)).collect())
                .collect();
            if est.iter().any(|e| e.len() != gt.len()) {
                return Err(Error::LengthMismatch(format!(
                    "estimates do not have {} objects per frame",
                    gt.len()
                )));
            }
            let perm = match_labels(&t.frames, &est, &gt)?;
            let objects = perm
                .iter()
                .enumerate()
                .map(|(j, &o)| {
                    let track: Vec<_> =
                        t.frames.iter().zip(&est).map(|(f, e)| (*f, e[j])).collect();
                    Ok(ObjectMetrics {
                        truth_index: o,
                        metrics: evaluate_trajectory(&track, &gt[o])?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Report::Track { objects })
        }
        EstimateFile::Localize(l) => {
            let cam: Vec<Vector3<f64>> = truth.camera.iter().map(|p| *p.translation()).collect();
            let flat: Vec<Vector3<f64>> = cam.iter().map(|c| Vector3::new(c.x, c.y, 0.0)).collect();
            let track: Vec<_> = l
                .frames
                .iter()
                .zip(&l.xy)
                .map(|(f, p)| (*f, Vector3::new(p[0], p[1], 0.0)))
                .collect();
            if l.z.len() != cam.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} heights for {} frames",
                    l.z.len(),
                    cam.len()
                )));
            }
            let dz: Vec<f64> = l.z.iter().zip(&cam).map(|(z, c)| (z - c.z).abs()).collect();
            Ok(Report::Localize {
                xy: evaluate_trajectory(&track, &flat)?,
                z_mean_abs: dz.iter().sum::<f64>() / dz.len().max(1) as f64,
                z_max_abs: dz.iter().fold(0.0, |m, v| m.max(*v)),
            })
        }
    }
}

fn read_estimate(path: &Path) -> Result<EstimateFile> {
    if path.is_dir() {
        for name in ["trajectory.json", "camera.json"] {
            let p = path.join(name);
            if p.exists() {
                return read_json(&p);
            }
        }
        return Err(Error::MissingArray(path.join("trajectory.json")));
    }
    read_json(path)
}

pub fn cmd_evaluate(estimate: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let report = evaluate(&read_estimate(estimate)?, &read_dataset(dataset)?)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(out, &report)
}

/// Plots a trajectory or camera estimate (with ground truth when a dataset
/// is given) or a volume's maximum projections.
pub fn cmd_plot(input: &Path, dataset: Option<&Path>, out: &Path) -> Result<()> {
    let svg = if input.join("volume.json").exists() {
        plot::volume_svg(&read_volume(input)?)
    } else if input.join("volume").join("volume.json").exists() {
        plot::volume_svg(&read_volume(&input.join("volume"))?)
    } else {
        let est = read_estimate(input)?;
        let truth = dataset.map(read_dataset).transpose()?.and_then(|d| d.truth);
        let mut series = Vec::new();
        match &est {
            EstimateFile::Track(t) => {
                let m = t.estimates.first().map_or(0, |e| e.len());
                for j in 0..m {
                    let pts = t
                        .frames
                        .iter()
                        .zip(&t.estimates)
                        .map(|(f, e)| (*f, e[j]))
                        .collect();
                    series.push(plot::Series::new(format!("object {j}"), pts, false));
                }
                if let Some(gt) = &truth {
                    for (o, traj) in gt.objects.iter().enumerate() {
                        series.push(plot::Series::new(
                            format!("truth {o}"),
                            traj.iter().copied().enumerate().collect(),
                            true,
                        ));
                    }
                }
            }
            EstimateFile::Localize(l) => {
                let pts = l
                    .frames
                    .iter()
                    .zip(&l.xy)
                    .map(|(f, p)| (*f, [p[0], p[1], l.z[*f]]))
                    .collect();
                series.push(plot::Series::new("camera".into(), pts, false));
                if let Some(gt) = &truth {
                    let pts = gt
                        .camera
                        .iter()
                        .map(|p| {
                            let c = p.translation();
                            [c.x, c.y, c.z]
                        })
                        .enumerate()
                        .collect();
                    series.push(plot::Series::new("truth".into(), pts, true));
                }
            }
        }
        plot::trajectory_svg(&series)
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_text(out, &svg)
}
