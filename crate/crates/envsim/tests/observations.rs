use nalgebra::Point3;
use proptest::prelude::*;
use vkchain_core::camera::{project_chain, project_point};
use vkchain_core::ot::exact_emd_oracle;
use vkchain_core::{end_effector, forward_kinematics, sample_chain_points, CameraModel, JointConfig, PointSet};
use vkchain_envsim::augment::{apply, AugmentParams};
use vkchain_envsim::render::{render_scene, ARM, BACKGROUND};
use vkchain_envsim::world::canonical_cameras;
use vkchain_envsim::{augment, chain_points, generate_world, ground_truth_chains, render_image, Color, RobotVariant, Target};

#[test]
fn empty_scene_is_uniform_background() {
    let cam = CameraModel::look_at([0.0, 0.0, 3.0], [0.0, 0.0, 6.0], [0.0, 1.0, 0.0], 40.0, 32, 32).unwrap();
    let w = generate_world(1, RobotVariant::Planar3, 1, 32).unwrap();
    let img = render_image(&w, &w.start, &cam).unwrap();
    assert!(img.data.chunks(3).all(|p| p == BACKGROUND));
}

#[test]
fn target_centre_pixel_has_the_target_colour() {
    for seed in 0..10 {
        let w = generate_world(seed, RobotVariant::Planar4, 4, 64).unwrap();
        for cam in &w.cameras {
            let img = render_scene(cam, &w.targets, &[]);
            let centres: Vec<[f64; 2]> = w.targets.iter().map(|t| project_point(cam, &Point3::from(t.position)).pixel().unwrap()).collect();
            for (k, (t, c)) in w.targets.iter().zip(&centres).enumerate() {
                let (x, y) = (c[0].floor(), c[1].floor());
                // a later disk covering this pixel centre is painted over it
                let covered = centres[k + 1..].iter().any(|d| (x + 0.5 - d[0]).hypot(y + 0.5 - d[1]) <= 4.0);
                if !covered {
                    assert_eq!(img.get(x as u32, y as u32), t.color.rgb());
                }
            }
        }
    }
}

#[test]
fn rendering_is_bitwise_repeatable_and_draws_the_arm_on_top() {
    let w = generate_world(2, RobotVariant::Planar3, 4, 64).unwrap();
    for cam in &w.cameras {
        let a = render_image(&w, &w.start, cam).unwrap();
        assert_eq!(a, render_image(&w, &w.start, cam).unwrap());
        let line = project_chain(cam, &forward_kinematics(&w.robot, &w.start).unwrap());
        let tip = line.points.last().unwrap();
        assert_eq!(a.get(tip[0] as u32, tip[1] as u32), ARM);
        assert!(a.data.chunks(3).filter(|p| *p == ARM).count() > 20);
    }
}

#[test]
fn static_trajectory_repeats_one_set() {
    let w = generate_world(4, RobotVariant::Planar4, 2, 64).unwrap();
    let traj = vec![w.start.clone(); 5];
    let gt = ground_truth_chains(&w, &traj, 3, 10).unwrap();
    assert_eq!(gt.len(), 2);
    for per_view in &gt {
        assert_eq!(per_view.len(), 5);
        assert!(per_view.iter().flatten().all(|s| *s == per_view[0][0] && s.len() == 10));
    }
}

#[test]
fn single_point_is_the_projected_end_effector() {
    let w = generate_world(5, RobotVariant::Planar3, 3, 64).unwrap();
    for cam in &w.cameras {
        let p = chain_points(cam, &w, &w.start, 1).unwrap();
        let ee = project_point(cam, &end_effector(&w.robot, &w.start).unwrap()).pixel().unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.points[0][0] - ee[0] / 64.0).abs() < 1e-12 && (p.points[0][1] - ee[1] / 64.0).abs() < 1e-12);
    }
}

#[test]
fn windows_pad_with_the_final_state() {
    let w = generate_world(6, RobotVariant::Planar3, 1, 64).unwrap();
    let traj: Vec<JointConfig> = (0..4).map(|k| JointConfig(vec![0.1 * k as f64, 0.2, -0.3])).collect();
    let gt = ground_truth_chains(&w, &traj, 3, 6).unwrap();
    let last = chain_points(&w.cameras[0], &w, &traj[3], 6).unwrap();
    assert_eq!(gt[0][2][0], chain_points(&w.cameras[0], &w, &traj[2], 6).unwrap());
    assert_eq!(gt[0][2][1], last);
    assert_eq!(gt[0][2][2], last);
    assert!(gt[0][3].iter().all(|s| *s == last));
}

#[test]
fn off_frame_chains_keep_their_point_count() {
    let w = generate_world(7, RobotVariant::Planar4, 1, 64).unwrap();
    let cam = CameraModel::look_at([1.0, -1.0, 0.5], [2.0, -1.0, 0.5], [0.0, 0.0, 1.0], 30.0, 64, 64).unwrap();
    let p = chain_points(&cam, &w, &w.start, 10).unwrap();
    assert_eq!(p.len(), 10);
    assert!(p.is_finite());
}

fn polyline_length(p: &[[f64; 2]]) -> f64 {
    p.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
}

#[test]
fn identity_augmentation_changes_nothing() {
    let w = generate_world(8, RobotVariant::Planar3, 1, 64).unwrap();
    let img = render_image(&w, &w.start, &w.cameras[0]).unwrap();
    let sets = vec![chain_points(&w.cameras[0], &w, &w.start, 10).unwrap()];
    let (i2, s2) = apply(&img, &sets, AugmentParams::default());
    assert_eq!((i2, s2), (img, sets));
}

#[test]
fn flip_mirrors_pixels_and_reflects_points() {
    let w = generate_world(9, RobotVariant::Planar3, 1, 64).unwrap();
    let img = render_image(&w, &w.start, &w.cameras[0]).unwrap();
    let sets = vec![chain_points(&w.cameras[0], &w, &w.start, 10).unwrap()];
    let (f, fs) = apply(&img, &sets, AugmentParams { dx: 0, dy: 0, flip: true });
    for y in 0..64 {
        for x in 0..64 {
            assert_eq!(f.get(x, y), img.get(63 - x, y));
        }
    }
    for (a, b) in fs[0].points.iter().zip(&sets[0].points) {
        assert_eq!(a[0], 1.0 - b[0]);
        assert_eq!(a[1], b[1]);
    }
}

#[test]
fn augmented_targets_stay_under_their_points() {
    // the pixel under a moved target centre keeps the target's colour
    let cam = &canonical_cameras(64)[0];
    let targets = vec![Target { position: [0.4, 0.3, 0.0], color: Color::Blue }];
    let img = render_scene(cam, &targets, &[]);
    let c = project_point(cam, &Point3::from(targets[0].position)).pixel().unwrap();
    let centre = vec![PointSet::new(vec![[c[0] / 64.0, c[1] / 64.0]])];
    for seed in 0..30 {
        let (a, s) = augment(&img, &centre, seed);
        let p = s[0].points[0];
        assert_eq!(a.get((p[0] * 64.0) as u32, (p[1] * 64.0) as u32), Color::Blue.rgb(), "seed {seed}");
    }
}

#[test]
fn augmentation_is_seeded_and_consistent_between_copies() {
    let w = generate_world(10, RobotVariant::Planar4, 1, 64).unwrap();
    let img = render_image(&w, &w.start, &w.cameras[0]).unwrap();
    let gt = chain_points(&w.cameras[0], &w, &w.start, 8).unwrap();
    let a = augment(&img, &[gt.clone(), gt.clone()], 77);
    assert_eq!(a, augment(&img, &[gt.clone(), gt], 77));
    assert_eq!(exact_emd_oracle(&a.1[0], &a.1[1]).unwrap(), 0.0);
    let params: Vec<AugmentParams> = (0..200).map(AugmentParams::sample).collect();
    assert!(params.iter().all(|p| p.dx.abs() <= 8 && p.dy.abs() <= 8));
    let flips = params.iter().filter(|p| p.flip).count();
    assert!((70..130).contains(&flips), "{flips}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn truth_matches_a_direct_recomputation(seed in 0u64..1000, q in prop::collection::vec(-2.5..2.5f64, 4), n in 2usize..16) {
        let w = generate_world(seed, RobotVariant::Planar4, 4, 64).unwrap();
        let q = JointConfig(q);
        let gt = ground_truth_chains(&w, std::slice::from_ref(&q), 1, n).unwrap();
        for (v, cam) in w.cameras.iter().enumerate() {
            let line = project_chain(cam, &forward_kinematics(&w.robot, &q).unwrap());
            let want = sample_chain_points(&line, n).unwrap();
            for (a, b) in gt[v][0][0].points.iter().zip(&want.points) {
                prop_assert!((a[0] - b[0] / 64.0).abs() <= 1e-9 && (a[1] - b[1] / 64.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn top_view_arc_length_is_constant(start in prop::collection::vec(-2.5..2.5f64, 3), end in prop::collection::vec(-2.5..2.5f64, 3)) {
        let w = generate_world(0, RobotVariant::Planar3, 4, 64).unwrap();
        let top = &w.cameras[3];
        let lengths: Vec<f64> = (0..12)
            .map(|k| {
                let s = k as f64 / 11.0;
                let q = JointConfig(start.iter().zip(&end).map(|(a, b)| a + s * (b - a)).collect());
                polyline_length(&project_chain(top, &forward_kinematics(&w.robot, &q).unwrap()).points)
            })
            .collect();
        for l in &lengths {
            prop_assert!((l - lengths[0]).abs() <= 1e-6 * lengths[0]);
        }
    }
}
