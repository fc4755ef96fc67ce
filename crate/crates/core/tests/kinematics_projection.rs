use std::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vkchain_core::camera::{clip_segment, project_chain, project_point, CameraModel, Z_MIN};
use vkchain_core::pointset::sample_polyline;
use vkchain_core::robot::{end_effector, forward_kinematics, parse_chain, JointConfig, JointKind, JointSpec, KinematicChain, LinkSpec};
use vkchain_core::Pose;

fn spatial_chain() -> KinematicChain {
    let joints = vec![
        JointSpec::revolute("a", Pose::new([0.0, 0.0, 0.1], [0.0, 0.0, 0.2]), [0.0, 0.0, 1.0], [-3.0, 3.0]),
        JointSpec::revolute("b", Pose::new([0.3, 0.0, 0.0], [0.1, -0.2, 0.0]), [0.0, 1.0, 0.0], [-3.0, 3.0]),
        JointSpec {
            name: "c".into(),
            kind: JointKind::Prismatic,
            axis: [1.0, 0.0, 0.0],
            origin: Pose::new([0.4, 0.05, 0.0], [0.0, 0.3, 0.0]),
            limits: [0.0, 0.2],
        },
        JointSpec {
            name: "tool".into(),
            kind: JointKind::Fixed,
            axis: [1.0, 0.0, 0.0],
            origin: Pose::from_translation([0.1, 0.0, 0.0]),
            limits: [0.0, 0.0],
        },
        JointSpec::revolute("d", Pose::new([0.0, 0.0, 0.0], [0.5, 0.0, 0.0]), [0.6, 0.8, 0.0], [-3.0, 3.0]),
    ];
    let links = vec![
        LinkSpec { name: "l0".into(), segment: [[0.0; 3], [0.3, 0.0, 0.0]] },
        LinkSpec { name: "l1".into(), segment: [[0.0; 3], [0.4, 0.05, 0.0]] },
        LinkSpec { name: "l2".into(), segment: [[0.0; 3], [0.1, 0.0, 0.0]] },
        LinkSpec { name: "stub".into(), segment: [[0.0; 3], [0.0; 3]] },
        LinkSpec { name: "l4".into(), segment: [[0.0, 0.0, 0.0], [0.0, 0.0, 0.15]] },
    ];
    KinematicChain::new("spatial", joints, links, Pose::new([0.2, -0.1, 0.5], [0.0, 0.1, -0.4])).unwrap()
}

/// Step-by-step composition with explicit matrices, independent of the chain code.
fn oracle_end_effector(chain: &KinematicChain, q: &[f64]) -> Point3<f64> {
    let mut t = chain.base_pose().isometry().to_homogeneous();
    let mut k = 0;
    for joint in chain.joints() {
        let o = joint.origin.xyz();
        let r = joint.origin.rpy();
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), r[2])
            * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), r[1])
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), r[0]);
        t *= Isometry3::from_parts(Translation3::new(o[0], o[1], o[2]), rot).to_homogeneous();
        let axis = Vector3::from(joint.axis);
        match joint.kind {
            JointKind::Revolute => {
                let m = UnitQuaternion::from_scaled_axis(axis * q[k]).to_homogeneous();
                t *= m;
                k += 1;
            }
            JointKind::Prismatic => {
                t *= Translation3::from(axis * q[k]).to_homogeneous();
                k += 1;
            }
            JointKind::Fixed => {}
        }
    }
    let end = chain.links().last().unwrap().segment[1];
    Point3::from_homogeneous(t * nalgebra::Vector4::new(end[0], end[1], end[2], 1.0)).unwrap()
}

#[test]
fn end_effector_matches_stepwise_composition() {
    let chain = spatial_chain();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let q: Vec<f64> = (0..chain.dof()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ee = end_effector(&chain, &JointConfig(q.clone())).unwrap();
        let segs = forward_kinematics(&chain, &JointConfig(q.clone())).unwrap();
        assert!((ee - segs.last().unwrap().end).norm() <= 1e-12);
        assert!((ee - oracle_end_effector(&chain, &q)).norm() <= 1e-12);
    }
}

#[test]
fn zero_configuration_is_the_origin_drawing() {
    let chain = spatial_chain();
    let segs = forward_kinematics(&chain, &JointConfig::zeros(chain.dof())).unwrap();
    let mut frame = *chain.base_pose().isometry();
    for ((joint, link), seg) in chain.joints().iter().zip(chain.links()).zip(&segs) {
        frame *= joint.origin.isometry();
        let a = frame.transform_point(&Point3::from(link.segment[0]));
        let b = frame.transform_point(&Point3::from(link.segment[1]));
        assert!((a - seg.start).norm() <= 1e-12 && (b - seg.end).norm() <= 1e-12);
    }
}

#[test]
fn arc_length_invariant_under_revolute_motion() {
    let chain = KinematicChain::planar("p4", &[0.4, 0.35, 0.3, 0.25], &[[-PI, PI]; 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let reference: f64 = chain.total_length();
    for _ in 0..50 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
        let total: f64 = forward_kinematics(&chain, &JointConfig(q)).unwrap().iter().map(|s| s.length()).sum();
        assert!((total - reference).abs() < 1e-9);
    }
}

#[test]
fn document_round_trip() {
    let chain = spatial_chain();
    let doc = chain.to_document();
    assert_eq!(parse_chain(&doc).unwrap(), chain);
}

#[test]
fn clipped_endpoint_lies_on_near_plane() {
    let cam = CameraModel::new(100.0, 100.0, 32.0, 32.0, 64, 64, Pose::new([0.1, 0.2, -0.3], [0.2, -0.1, 0.3])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inv = cam.pose.isometry().inverse();
    for _ in 0..50 {
        // pick camera-frame endpoints on either side of the plane, then map to world
        let a_cam = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..3.0));
        let b_cam = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..-0.1));
        let a = inv.inverse_transform_point(&a_cam);
        let b = inv.inverse_transform_point(&b_cam);
        let [ca, cb] = clip_segment(&cam, &a, &b).unwrap();
        assert!((ca - a_cam).norm() < 1e-9);
        // independent line-plane solve: a + s (b - a) with z = Z_MIN
        let s = (Z_MIN - a_cam.z) / (b_cam.z - a_cam.z);
        let expected = a_cam + (b_cam - a_cam) * s;
        assert!((cb.z - Z_MIN).abs() <= 1e-9);
        assert!((cb - expected).norm() <= 1e-9);
    }
}

#[test]
fn top_view_of_planar_arm_preserves_length() {
    let chain = KinematicChain::planar("p3", &[0.5, 0.4, 0.3], &[[-PI, PI]; 3]).unwrap();
    let cam = CameraModel::look_at([0.0, 0.0, 4.0], [0.0; 3], [0.0, 1.0, 0.0], 20.0, 48, 48).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pixel_len = |q: Vec<f64>| {
        let poly = project_chain(&cam, &forward_kinematics(&chain, &JointConfig(q)).unwrap());
        poly.points.windows(2).map(|w| (w[0][0] - w[1][0]).hypot(w[0][1] - w[1][1])).sum::<f64>()
    };
    let reference = pixel_len(vec![0.0; 3]);
    for _ in 0..20 {
        let q = (0..3).map(|_| rng.random_range(-PI..PI)).collect();
        assert!((pixel_len(q) - reference).abs() <= 1e-6 * reference);
    }
}

#[test]
fn sampling_projected_chain_examples() {
    let s = sample_polyline(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]], 5).unwrap();
    let want = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [2.0, 2.0]];
    for (g, w) in s.points.iter().zip(want) {
        assert!((g[0] - w[0]).abs() <= 1e-12 && (g[1] - w[1]).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn projection_is_scale_consistent(
        x in -1.0..1.0f64, y in -1.0..1.0f64, z in 0.1..5.0f64, lambda in 0.01..100.0f64,
    ) {
        let cam = CameraModel::new(80.0, 90.0, 30.0, 20.0, 64, 48, Pose::identity()).unwrap();
        let a = project_point(&cam, &Point3::new(x, y, z)).pixel().unwrap();
        let b = project_point(&cam, &Point3::new(lambda * x, lambda * y, lambda * z)).pixel().unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }

    #[test]
    fn rigid_motion_of_camera_and_world_leaves_pixels(
        p in [-1.0..1.0f64, -1.0..1.0, 1.0..4.0],
        t in [-2.0..2.0f64, -2.0..2.0, -2.0..2.0],
        r in [-PI..PI, -1.5..1.5f64, -PI..PI],
    ) {
        let cam = CameraModel::new(100.0, 100.0, 32.0, 32.0, 64, 64, Pose::new([0.1, -0.2, 0.0], [0.05, 0.0, 0.1])).unwrap();
        let g = Pose::new(t, r);
        let moved_cam_iso = g.isometry() * cam.pose.isometry();
        let moved = CameraModel { pose: Pose::from_isometry(&moved_cam_iso), ..cam.clone() };
        let pw = Point3::from(p);
        let a = project_point(&cam, &pw).pixel().unwrap();
        let b = project_point(&moved, &g.transform_point(&pw)).pixel().unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }

    #[test]
    fn planar_document_round_trip(
        lengths in prop::collection::vec(0.0..2.0f64, 1..6),
        lim in 0.1..3.0f64,
    ) {
        let chain = KinematicChain::planar("arm", &lengths, &vec![[-lim, lim]; lengths.len()]).unwrap();
        prop_assert_eq!(parse_chain(&chain.to_document()).unwrap(), chain);
    }
}
