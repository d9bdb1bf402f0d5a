use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nlos_core::dataset::match_labels;
use nlos_core::geometry::{intersect_rays, project, CameraModel, Falloff, Pose};
use nlos_core::lct::{Axis, GridSpec};
use nlos_core::particle_filter::{
    init_uniform, normalize_weights, propagate, residual_resample, residual_resample_indices,
    score_dot, FilterConfig,
};
use nlos_core::simulator::ObjectModel;
use nlos_core::stir::{precompute_canonical_stir, CanonicalStir};
use nlos_core::tracking::{render_multi, score_state, RenderScratch};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_resampling_keeps_the_deterministic_copies(
        weights in prop::collection::vec(0.0f64..1.0, 1..60),
        seed in any::<u64>(),
    ) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 0.0);
        let w: Vec<f64> = weights.iter().map(|v| v / total).collect();
        let n = w.len();
        let idx = residual_resample_indices(&w, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(idx.len(), n);
        let mut counts = vec![0usize; n];
        for i in idx {
            prop_assert!(i < n);
            counts[i] += 1;
        }
        for (c, wi) in counts.iter().zip(&w) {
            let floor = (n as f64 * wi + 1e-9).floor() as usize;
            prop_assert!(*c >= floor.min(n));
            if *wi == 0.0 {
                prop_assert_eq!(*c, 0);
            }
        }
    }

    #[test]
    fn normalized_weights_sum_to_one(seed in 0u64..1000, n in 1usize..200) {
        let mut cfg = FilterConfig::new(vec![[-1.0, 1.0], [0.0, 2.0]], seed);
        cfg.particles = n;
        let mut p = init_uniform(&cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.weights.mapv_inplace(|_| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let q = normalize_weights(&p).unwrap();
        prop_assert!((q.weights.sum() - 1.0).abs() < 1e-12);
        prop_assert_eq!(&q.states, &p.states);
    }

    #[test]
    fn propagation_is_seeded_by_its_input(seed in 0u64..1000) {
        let mut cfg = FilterConfig::new(vec![[-1.0, 1.0]; 3], seed);
        cfg.particles = 50;
        let p = init_uniform(&cfg, 3).unwrap();
        prop_assert_eq!(propagate(&p, 0.05).states, propagate(&p, 0.05).states);
    }

    #[test]
    fn pose_inverse_undoes_the_pose(
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -3.0f64..3.0,
        t in prop::array::uniform3(-2.0f64..2.0),
        p in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let a = Vector3::from(axis);
        prop_assume!(a.norm() > 1e-3);
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(a), angle);
        let pose = Pose::new(*r.matrix(), Vector3::from(t)).unwrap();
        let x = Vector3::from(p);
        let back = pose.inverse().transform_point(&pose.transform_point(&x));
        prop_assert!((back - x).norm() < 1e-12);
    }

    #[test]
    fn wall_points_project_back_to_their_pixels(
        pos in prop::array::uniform3(-0.3f64..0.3),
        tilt in prop::array::uniform2(-0.2f64..0.2),
    ) {
        let camera = CameraModel::pinhole((6, 5), 40.0, 16, 1e-10, 0.0, Falloff::Diffuse);
        let pose = Pose::facing_wall(Vector3::new(pos[0], pos[1], 1.0 + pos[2]), tilt);
        let walls = intersect_rays(&camera, &pose).unwrap();
        for (px, w) in walls.iter().enumerate() {
            prop_assert!(w.z.abs() < 1e-12);
            let (u, v) = project(&camera, &pose, w).unwrap();
            prop_assert!((u - (px / 5) as f64).abs() < 1e-9);
            prop_assert!((v - (px % 5) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn axis_position_inverts_coord(min in -5.0f64..5.0, spacing in 1e-3f64..1.0, count in 2usize..500) {
        let a = Axis::from_spacing(min, spacing, count).unwrap();
        for i in [0, count / 2, count - 1] {
            prop_assert!((a.position(a.coord(i)) - i as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn relabelling_the_truth_relabels_the_match(
        pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 3),
        swap in 0usize..3,
    ) {
        let truth: Vec<Vec<Vector3<f64>>> = pts.iter().map(|p| vec![Vector3::from(*p)]).collect();
        let est = vec![truth.iter().map(|t| t[0] + Vector3::new(1e-3, 0.0, 0.0)).collect::<Vec<_>>()];
        let perm = match_labels(&[0], &est, &truth).unwrap();
        let mut shuffled = truth.clone();
        shuffled.swap(swap, (swap + 1) % 3);
        let p2 = match_labels(&[0], &est, &shuffled).unwrap();
        for j in 0..3 {
            prop_assert_eq!(&shuffled[p2[j]], &truth[perm[j]]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stir_lateral_shift_is_a_wall_translation(si in -4i32..5, sj in -4i32..5, sk in 0usize..20) {
        let x = Axis::new(-0.4, 0.4, 41).unwrap();
        let v = Axis::from_spacing(0.5, 0.01, 200).unwrap();
        let stir = precompute_canonical_stir(&ObjectModel::patch(0.1, 4).unwrap(), &GridSpec::new(x, x, v).unwrap(), 100e-12, 1.0).unwrap();
        let dx = x.spacing();
        let shift = Vector3::new(si as f64 * dx, sj as f64 * dx, sk as f64 * v.spacing());
        let walls: Vec<Vector3<f64>> = (0..9)
            .flat_map(|a| (0..9).map(move |b| Vector3::new((a as f64 - 4.0) * 0.05, (b as f64 - 4.0) * 0.05, 0.0)))
            .collect();
        let moved: Vec<Vector3<f64>> = walls.iter().map(|w| w - Vector3::new(shift.x, shift.y, 0.0)).collect();
        let a = stir.render(&walls, &shift);
        let b = stir.render(&moved, &Vector3::new(0.0, 0.0, shift.z));
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + q.abs()));
        }
    }
}

fn small_stir(size: f64) -> CanonicalStir {
    let x = Axis::new(-0.4, 0.4, 41).unwrap();
    let v = Axis::from_spacing(0.5, 0.01, 120).unwrap();
    precompute_canonical_stir(
        &ObjectModel::patch(size, 4).unwrap(),
        &GridSpec::new(x, x, v).unwrap(),
        100e-12,
        1.0,
    )
    .unwrap()
}

fn wall_grid() -> Vec<Vector3<f64>> {
    (0..7)
        .flat_map(|a| {
            (0..7).map(move |b| Vector3::new((a as f64 - 3.0) * 0.06, (b as f64 - 3.0) * 0.06, 0.0))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn score_ignores_positive_scaling(
        pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50),
        a in 1e-3f64..1e3,
        b in 1e-3f64..1e3,
        eta in 0.5f64..64.0,
    ) {
        let (i, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let i2: Vec<f64> = i.iter().map(|v| a * v).collect();
        let r2: Vec<f64> = r.iter().map(|v| b * v).collect();
        let s = score_dot(&i, &r, eta).unwrap();
        let s2 = score_dot(&i2, &r2, eta).unwrap();
        prop_assert!((s - s2).abs() <= 1e-9 * s.max(1e-300), "{} vs {}", s, s2);
    }

    #[test]
    fn resampling_keeps_k_and_equalizes_weights(seed in 0u64..1000, n in 1usize..300) {
        let mut cfg = FilterConfig::new(vec![[-1.0, 1.0]; 3], seed);
        cfg.particles = n;
        let mut p = init_uniform(&cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        p.weights.mapv_inplace(|_| rand::Rng::random_range(&mut rng, 0.0..1.0));
        prop_assume!(p.weights.sum() > 0.0);
        let q = residual_resample(&normalize_weights(&p).unwrap());
        prop_assert_eq!(q.len(), n);
        prop_assert_eq!(q.states.dim(), p.states.dim());
        for w in q.weights.iter() {
            prop_assert_eq!(*w, 1.0 / n as f64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shifts_compose_with_reanchoring(
        a in prop::array::uniform3(-0.1f64..0.1),
        b in prop::array::uniform3(-0.1f64..0.1),
    ) {
        let stir = small_stir(0.1);
        let walls = wall_grid();
        let (a, b) = (Vector3::from(a), Vector3::from(b));
        let direct = stir.render(&walls, &a);
        let composed = stir.reanchor(-b).render(&walls, &(a + b));
        for (p, q) in direct.iter().zip(&composed) {
            prop_assert!((p - q).abs() <= 1e-6);
        }
    }

    #[test]
    fn rendering_is_linear_in_the_stir(
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        shift in prop::array::uniform3(-0.1f64..0.1),
    ) {
        let s1 = small_stir(0.1);
        let s2 = small_stir(0.2);
        let mut mix = s1.clone();
        mix.values = &s1.values * alpha + &s2.values * beta;
        let walls = wall_grid();
        let shift = Vector3::from(shift);
        let r1 = s1.render(&walls, &shift);
        let r2 = s2.render(&walls, &shift);
        let rm = mix.render(&walls, &shift);
        let top = r1.iter().chain(&r2).fold(0.0f64, |m, v| m.max(v.abs()));
        for ((x, y), m) in r1.iter().zip(&r2).zip(&rm) {
            prop_assert!((alpha * x + beta * y - m).abs() <= 1e-9 * top.max(1.0));
        }
    }

    #[test]
    fn swapping_objects_with_their_positions_changes_nothing(
        p in prop::array::uniform3(-0.15f64..0.15),
        q in prop::array::uniform3(-0.15f64..0.15),
        dx in -0.03f64..0.03,
    ) {
        let stirs = [small_stir(0.1), small_stir(0.2)];
        let walls = wall_grid();
        let n = walls.len() * stirs[0].n_v();
        let state = [p[0], p[1], 1.0 + p[2], q[0], q[1], 1.0 + q[2]];
        let truth: Vec<f64> = (0..2)
            .map(|m| {
                let pos = Vector3::new(state[3 * m] + dx, state[3 * m + 1], state[3 * m + 2]);
                stirs[m].render(&walls, &stirs[m].shift_for(&pos))
            })
            .reduce(|a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
            .unwrap();
        let swapped = [q[0], q[1], 1.0 + q[2], p[0], p[1], 1.0 + p[2]];
        let reversed = [stirs[1].clone(), stirs[0].clone()];
        let (mut sa, mut sb) = (RenderScratch::new(n), RenderScratch::new(n));
        let (mut wa, mut wb) = ([0.0; 2], [0.0; 2]);
        render_multi(&state, &walls, &stirs, &truth, &mut sa, &mut wa);
        render_multi(&swapped, &walls, &reversed, &truth, &mut sb, &mut wb);
        prop_assert!(sa.rendering().iter().any(|v| *v != 0.0));
        prop_assert_eq!(sa.rendering(), sb.rendering());
        prop_assert_eq!(wa, [wb[1], wb[0]]);
    }

    #[test]
    fn particle_at_the_truth_scores_highest(
        truth in prop::array::uniform3(-0.15f64..0.15),
        others in prop::collection::vec(prop::array::uniform3(-0.2f64..0.2), 1..20),
        eta in 1.0f64..64.0,
    ) {
        let stirs = [small_stir(0.15)];
        let walls = wall_grid();
        let n = walls.len() * stirs[0].n_v();
        let t = Vector3::new(truth[0], truth[1], 1.0 + truth[2]);
        let meas = stirs[0].render(&walls, &stirs[0].shift_for(&t));
        let mut scratch = RenderScratch::new(n);
        let mut w = [0.0];
        let best = score_state(t.as_slice(), &walls, &stirs, &meas, eta, &mut scratch, &mut w);
        prop_assert!((best - 1.0).abs() < 1e-9);
        for o in others {
            let s = [o[0], o[1], 1.0 + o[2]];
            prop_assert!(score_state(&s, &walls, &stirs, &meas, eta, &mut scratch, &mut w) <= best + 1e-12);
        }
    }
}
