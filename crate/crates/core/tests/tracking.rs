use nalgebra::Vector3;

use nlos_core::cli::{self, RunConfig};
use nlos_core::dataset::{evaluate_trajectory, match_labels, truth_positions};
use nlos_core::lct::{Axis, GridSpec};
use nlos_core::particle_filter::covariance;
use nlos_core::stir::precompute_canonical_stir;
use nlos_core::tracking::track;

fn static_scene(pos: [f64; 3], seed: u64) -> RunConfig {
    scene_with(pos, seed, 15, 1000, [0.5, 1.6])
}

fn scene_with(pos: [f64; 3], seed: u64, frames: usize, particles: usize, z: [f64; 2]) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
seed = {seed}
frames = {frames}
[[objects]]
shape = {{ kind = "patch", size = 0.25, n = 10 }}
trajectory = {{ kind = "static", position = {pos:?} }}
[camera]
kind = "static"
position = [0.0, 0.0, 1.0]
[track]
particles = {particles}
bounds = [[-0.4, 0.4], [-0.4, 0.4], {z:?}]
"#
    ))
    .unwrap()
}

#[test]
fn static_patch_is_pinned_down() {
    let cfg = static_scene([0.05, -0.08, 0.9], 1);
    let ds = cli::simulate(&cfg).unwrap();
    let stirs = cli::precompute_stirs(&cfg).unwrap();
    let r = track(&ds, &stirs, &cfg.track_config().unwrap()).unwrap();
    let truth = truth_positions(ds.truth.as_ref().unwrap());
    let m = evaluate_trajectory(&r.object_track(0), &truth[0]).unwrap();
    assert!(m.mean < 0.03, "mean error {}", m.mean);
    assert!(r.dropped_frames.is_empty());
}

/// Mean over the last frames of the lateral posterior variance.
fn lateral_spread(depth: f64, seed: u64) -> f64 {
    let cfg = scene_with([0.0, 0.0, depth], seed, 10, 500, [0.3, 2.3]);
    let ds = cli::simulate(&cfg).unwrap();
    // The profile's v axis stops short of 2 m, so widen it.
    let base = cfg.stir_grid().unwrap();
    let grid = GridSpec::new(base.x, base.y, Axis::from_spacing(0.2, 0.02, 261).unwrap()).unwrap();
    let model = cfg.object_models().unwrap().remove(0);
    let sigma = cfg.camera_model().unwrap().pulse_sigma;
    let stirs = vec![precompute_canonical_stir(&model, &grid, sigma, 1.0).unwrap()];
    let r = track(&ds, &stirs, &cfg.track_config().unwrap()).unwrap();
    let n = r.frames.len() as f64;
    let z = r.estimates.iter().map(|e| e[0].z).sum::<f64>() / n;
    assert!(
        (z - depth).abs() < 0.15,
        "seed {seed}: depth {depth} estimated at {z}"
    );
    r.frames
        .iter()
        .map(|&t| {
            let c = covariance(&r.posteriors[t]);
            c[(0, 0)] + c[(1, 1)]
        })
        .sum::<f64>()
        / n
}

#[test]
fn lateral_uncertainty_grows_with_depth() {
    let seeds = 20;
    let mut wins = 0;
    let (mut near_sum, mut far_sum) = (0.0, 0.0);
    for seed in 0..seeds {
        let near = lateral_spread(0.5, seed);
        let far = lateral_spread(2.0, seed);
        near_sum += near;
        far_sum += far;
        wins += usize::from(far > near);
    }
    // One-sided sign test at p < 0.05 needs 15 of 20.
    assert!(
        wins >= 15 && far_sum > near_sum,
        "far wider in {wins}/{seeds}; means near {:.3e}, far {:.3e}",
        near_sum / seeds as f64,
        far_sum / seeds as f64
    );
}

#[test]
fn identical_objects_are_tracked_up_to_relabelling() {
    let text = r#"
seed = 2
frames = 14
[[objects]]
shape = { kind = "patch", size = 0.25, n = 10 }
trajectory = { kind = "static", position = [-0.15, -0.1, 0.9] }
[[objects]]
shape = { kind = "patch", size = 0.25, n = 10 }
trajectory = { kind = "static", position = [0.2, 0.15, 1.1] }
[camera]
kind = "static"
position = [0.0, 0.0, 1.0]
[track]
eta = 64.0
estimator = "kmeans_modes"
bounds = [[-0.4, 0.4], [-0.4, 0.4], [0.6, 1.4], [-0.4, 0.4], [-0.4, 0.4], [0.6, 1.4]]
"#;
    let cfg = RunConfig::from_toml(text).unwrap();
    let ds = cli::simulate(&cfg).unwrap();
    let stirs = cli::precompute_stirs(&cfg).unwrap();
    let truth = truth_positions(ds.truth.as_ref().unwrap());

    let a = track(&ds, &stirs, &cfg.track_config().unwrap()).unwrap();
    // Same data with the scene objects listed the other way round.
    let swapped: Vec<Vec<Vector3<f64>>> = vec![truth[1].clone(), truth[0].clone()];
    let pa = match_labels(&a.frames, &a.estimates, &truth).unwrap();
    let pb = match_labels(&a.frames, &a.estimates, &swapped).unwrap();
    assert_eq!(pb, pa.iter().map(|o| 1 - o).collect::<Vec<_>>());

    for (t, est) in a.frames.iter().zip(&a.estimates) {
        let mut errs: Vec<f64> = pa
            .iter()
            .enumerate()
            .map(|(j, &o)| (est[j] - truth[o][*t]).norm())
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[1] < 0.05, "frame {t}: {errs:?}");
    }
}
