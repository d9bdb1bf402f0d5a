use nalgebra::Vector3;
use ndarray::{s, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlos_core::geometry::{CameraModel, Falloff, SPEED_OF_LIGHT};
use nlos_core::lct::{
    lct_forward_with, resample_time_with, AlbedoVolume, Axis, GridSpec, LctCube, LctForwardOptions,
    ResampleOptions, Sampling,
};
use nlos_core::simulator::{render_histogram, ObjectModel};

fn peak(col: &[f64]) -> (usize, f64) {
    col.iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap()
}

/// Simulated histograms resampled to `v` against the convolutional forward
/// model of the same points. The histogram counts per range bin, so dividing
/// by the round-trip path length of one bin puts both in the same units.
#[test]
fn direct_rendering_matches_the_forward_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 32;
    // Same layout as the end-to-end check: on-node depths, `v` spacing an odd
    // multiple of dx^2, range bins fine enough not to spill. The `v^1.5` gain
    // is taken at cell centres, so amplitudes are off by about 0.75 dv / v;
    // depths start far enough out to keep that small.
    let x = Axis::new(-0.62, 0.62, n).unwrap();
    let v = Axis::from_spacing(0.2, 13.0 * x.spacing().powi(2), 64).unwrap();
    let grid = GridSpec::new(x, x, v).unwrap();
    let mut fwd = LctCube::new(Array3::zeros(grid.shape()), grid).unwrap();
    let mut points = Vec::new();
    for _ in 0..3 {
        let (i, j, k) = (
            rng.random_range(6..26),
            rng.random_range(6..26),
            rng.random_range(15..30),
        );
        let rho = rng.random_range(0.5..1.5);
        let z = v.coord(k).sqrt();
        let z_axis = Axis::new(z - 0.01, z + 0.01, 11).unwrap();
        let mut vol = AlbedoVolume::zeros(GridSpec::new(x, x, z_axis).unwrap());
        vol.values[[i, j, 5]] = rho / z_axis.spacing();
        let opts = LctForwardOptions {
            depth_sampling: Sampling::CellAverage,
            thickness: 1.0,
        };
        fwd.values += &lct_forward_with(&vol, &grid, &opts).unwrap().values;
        points.push((Vector3::new(x.coord(i), x.coord(j), z), rho));
    }

    let range_bin = 0.0002;
    let bw = 2.0 * range_bin / SPEED_OF_LIGHT;
    let camera = CameraModel::pinhole((n, n), 40.0, 6500, bw, 0.0, Falloff::Diffuse);
    let walls: Vec<_> = (0..n * n)
        .map(|p| Vector3::new(x.coord(p / n), x.coord(p % n), 0.0))
        .collect();
    let models: Vec<ObjectModel> = points
        .iter()
        .map(|(_, rho)| ObjectModel::new(vec![Vector3::zeros()], vec![*rho]).unwrap())
        .collect();
    let scene: Vec<_> = models
        .iter()
        .zip(&points)
        .map(|(m, (p, _))| (m, *p))
        .collect();
    let hist = render_histogram(&scene, &camera, &walls).unwrap();
    let opts = ResampleOptions {
        sampling: Sampling::CellAverage,
        exponent: 1.5,
        crop: true,
    };
    let meas = resample_time_with(hist.view(), bw, &grid, &opts).unwrap();
    let per_bin = SPEED_OF_LIGHT * bw;

    let floor = 1e-9 * fwd.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    let mut lit = 0;
    for i in 0..n {
        for j in 0..n {
            let a: Vec<f64> = meas
                .values
                .slice(s![i, j, ..])
                .iter()
                .map(|v| v / per_bin)
                .collect();
            let b: Vec<f64> = fwd.values.slice(s![i, j, ..]).to_vec();
            if a.iter().all(|v| *v == 0.0) && b.iter().all(|v| v.abs() < floor) {
                continue;
            }
            lit += 1;
            let ((ka, pa), (kb, pb)) = (peak(&a), peak(&b));
            assert!(ka.abs_diff(kb) <= 1, "({i}, {j}): peak bin {ka} vs {kb}");
            worst = worst.max((pa - pb).abs() / pb);
        }
    }
    assert!(lit > 100);
    assert!(worst < 0.05, "worst peak amplitude error {worst:.4}");
}
