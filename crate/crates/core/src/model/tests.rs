use super::*;
use crate::linalg::{axis_angle, norm3, sub3};
use crate::synth::make_template;
use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn model() -> &'static BodyModel {
    static M: OnceLock<BodyModel> = OnceLock::new();
    M.get_or_init(|| BodyModel::new(make_template(4, 0.35).unwrap().assets).unwrap())
}

fn random_rot6d(rng: &mut ChaCha8Rng, spread: f64) -> [f64; 6] {
    let mut r = ROT6D_IDENTITY;
    for x in r.iter_mut() {
        *x += rng.random_range(-spread..spread);
    }
    r
}

fn random_pose(rng: &mut ChaCha8Rng, n: usize) -> FramePose<f64> {
    FramePose {
        theta: (0..n).flat_map(|_| random_rot6d(rng, 0.4)).collect(),
        translation: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..0.5)],
        orientation: random_rot6d(rng, 0.6),
    }
}

fn random_beta(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..SHAPE_DIM).map(|_| rng.random_range(-1.5..1.5)).collect()
}

fn rest_pose() -> FramePose<f64> {
    FramePose::rest(model().joint_count())
}

#[test]
fn rest_translation_and_scale_examples() {
    let m = model();
    let beta = vec![0.0; SHAPE_DIM];
    let mesh = pose_mesh(m, &beta, 1.0, &rest_pose()).unwrap();
    assert_eq!(mesh.vertices, m.assets.vertices);
    assert_eq!(mesh.joints, m.assets.rest_joints);

    let mut shifted = rest_pose();
    shifted.translation = [1.0, 0.0, 0.0];
    let mesh = pose_mesh(m, &beta, 1.0, &shifted).unwrap();
    for (v, r) in mesh.vertices.iter().zip(&m.assets.vertices) {
        assert_eq!(*v, [r[0] + 1.0, r[1], r[2]]);
    }

    let mesh = pose_mesh(m, &beta, 2.0, &rest_pose()).unwrap();
    for (v, r) in mesh.vertices.iter().zip(&m.assets.vertices) {
        assert_eq!(*v, [2.0 * r[0], 2.0 * r[1], 2.0 * r[2]]);
    }
}

#[test]
fn root_quarter_turn_rotates_everything() {
    let m = model();
    let mut pose = rest_pose();
    let r = axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
    pose.orientation = [r[0][0], r[1][0], r[2][0], r[0][1], r[1][1], r[2][1]];
    let a = forward_kinematics(m, &pose.theta, &pose.orientation).unwrap();
    for (aj, j) in a.iter().zip(&m.assets.rest_joints) {
        let expect = [-j[1], j[0], j[2]];
        assert!(norm3(sub3(aj.trans, expect)) < 1e-12);
    }
}

/// Joint position as the product of homogeneous matrices along its root path.
fn path_product(m: &BodyModel, theta: &[f64], orient: &[f64], j: usize) -> Vector3<f64> {
    let hom = |r: [[f64; 3]; 3], t: [f64; 3]| {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&Matrix3::from_fn(|a, b| r[a][b]));
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&Vector3::from(t));
        h
    };
    let mut path = vec![j];
    while m.assets.parent[*path.last().unwrap()] >= 0 {
        path.push(m.assets.parent[*path.last().unwrap()] as usize);
    }
    path.reverse();
    let rj = &m.assets.rest_joints;
    let mut acc = Matrix4::identity();
    for (k, &q) in path.iter().enumerate() {
        let (r, offset) = if k == 0 {
            (rot6d_to_matrix(orient).unwrap(), rj[q])
        } else {
            let p = path[k - 1];
            (rot6d_to_matrix(&theta[6 * q..6 * q + 6]).unwrap(), sub3(rj[q], rj[p]))
        };
        // translate to the joint, then rotate about it; the root rotates about the origin
        let step = if k == 0 {
            hom(r, [0.0; 3]) * hom(crate::linalg::identity3(), offset)
        } else {
            hom(crate::linalg::identity3(), offset) * hom(r, [0.0; 3])
        };
        acc *= step;
    }
    let p = acc * Vector4::new(0.0, 0.0, 0.0, 1.0);
    Vector3::new(p[0], p[1], p[2])
}

#[test]
fn kinematic_chain_matches_path_products() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let pose = random_pose(&mut rng, m.joint_count());
        let a = forward_kinematics(m, &pose.theta, &pose.orientation).unwrap();
        for (j, aj) in a.iter().enumerate() {
            let o = path_product(m, &pose.theta, &pose.orientation, j);
            let d = (Vector3::from(aj.trans) - o).norm();
            assert!(d < 1e-9, "joint {j}: {d}");
        }
    }
}

#[test]
fn joints_field_matches_pose_joints() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let beta = random_beta(&mut rng);
    let pose = random_pose(&mut rng, m.joint_count());
    let mesh = pose_mesh(m, &beta, 1.3, &pose).unwrap();
    assert_eq!(mesh.joints, pose_joints(m, &beta, 1.3, &pose).unwrap());
}

#[test]
fn sample_counts_follow_face_areas() {
    let m = model();
    let n = 200_000;
    let areas = &m.template_areas;
    let total: f64 = areas.iter().sum();
    let plan = template_plan(m, n, 1.0, 21).unwrap();
    let mut counts = vec![0usize; areas.len()];
    for &f in &plan.faces {
        counts[f as usize] += 1;
    }
    // Pearson statistic against the area vector, within 3σ of its mean
    let chi2: f64 = counts
        .iter()
        .zip(areas)
        .filter(|(_, &a)| a > 0.0)
        .map(|(&c, &a)| {
            let e = n as f64 * a / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = areas.iter().filter(|&&a| a > 0.0).count() as f64 - 1.0;
    assert!((chi2 - dof).abs() < 3.0 * (2.0 * dof).sqrt(), "chi2 {chi2} dof {dof}");

    let leg_area: f64 = areas.iter().enumerate().filter(|(f, _)| m.is_leg_face(*f)).map(|(_, a)| a).sum();
    for boost in [1.0, 4.0] {
        let plan = template_plan(m, n, boost, 22).unwrap();
        let legs = plan.faces.iter().filter(|&&f| m.is_leg_face(f as usize)).count() as f64;
        let p = boost * leg_area / (boost * leg_area + total - leg_area);
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((legs - n as f64 * p).abs() < 3.0 * sd, "boost {boost}: {legs} vs {}", n as f64 * p);
    }
}

#[test]
fn posed_samples_lie_on_their_faces() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mesh = pose_mesh(m, &random_beta(&mut rng), 0.9, &random_pose(&mut rng, m.joint_count())).unwrap();
    let plan = template_plan(m, 2000, 4.0, 3).unwrap();
    let pts = plan.apply(&mesh.vertices, &m.faces);
    for (p, &f) in pts.iter().zip(&plan.faces) {
        let tri = m.faces[f as usize].map(|i| mesh.vertices[i as usize]);
        let nrm = crate::linalg::cross3(sub3(tri[1], tri[0]), sub3(tri[2], tri[0]));
        let off = crate::linalg::dot3(nrm, sub3(*p, tri[0])) / norm3(nrm);
        assert!(off.abs() < 1e-9);
    }
    let a = sample_surface(m, &mesh, 100, 2.0, 5).unwrap();
    assert_eq!(a, sample_surface(m, &mesh, 100, 2.0, 5).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scale_equivariance(seed in any::<u64>(), s in 0.2f64..3.0) {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = random_beta(&mut rng);
        let mut pose = random_pose(&mut rng, m.joint_count());
        pose.translation = [0.0; 3];
        let unit = pose_mesh(m, &beta, 1.0, &pose).unwrap();
        let scaled = pose_mesh(m, &beta, s, &pose).unwrap();
        for (a, b) in unit.vertices.iter().zip(&scaled.vertices) {
            prop_assert_eq!(*b, [a[0] * s, a[1] * s, a[2] * s]);
        }
    }

    #[test]
    fn translation_equivariance(seed in any::<u64>(), dx in -2.0f64..2.0, dy in -2.0f64..2.0, dz in -2.0f64..2.0) {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = random_beta(&mut rng);
        let pose = random_pose(&mut rng, m.joint_count());
        let base = pose_mesh(m, &beta, 1.1, &pose).unwrap();
        let mut moved_pose = pose.clone();
        for (t, d) in moved_pose.translation.iter_mut().zip([dx, dy, dz]) {
            *t += d;
        }
        let moved = pose_mesh(m, &beta, 1.1, &moved_pose).unwrap();
        for (a, b) in base.vertices.iter().chain(&base.joints).zip(moved.vertices.iter().chain(&moved.joints)) {
            prop_assert!(norm3(sub3(*b, [a[0] + dx, a[1] + dy, a[2] + dz])) < 1e-12);
        }
    }

    #[test]
    fn common_transform_moves_shaped_template_rigidly(seed in any::<u64>()) {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = random_beta(&mut rng);
        let mut pose = rest_pose();
        pose.orientation = random_rot6d(&mut rng, 0.8);
        let g = rot6d_to_matrix(&pose.orientation).unwrap();
        let mesh = pose_mesh(m, &beta, 1.0, &pose).unwrap();
        for (v, r) in mesh.vertices.iter().zip(shaped_vertices::<f64>(m, &beta)) {
            prop_assert!(norm3(sub3(*v, crate::linalg::mat_vec(&g, r))) < 1e-9);
        }
    }

    #[test]
    fn vertices_are_affine_in_shape(seed in any::<u64>(), a in -2.0f64..2.0) {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b0 = random_beta(&mut rng);
        let b1 = random_beta(&mut rng);
        let pose = random_pose(&mut rng, m.joint_count());
        let mix: Vec<f64> = b0.iter().zip(&b1).map(|(x, y)| (1.0 - a) * x + a * y).collect();
        let v0 = pose_mesh(m, &b0, 1.0, &pose).unwrap().vertices;
        let v1 = pose_mesh(m, &b1, 1.0, &pose).unwrap().vertices;
        let vm = pose_mesh(m, &mix, 1.0, &pose).unwrap().vertices;
        for ((p, q), r) in v0.iter().zip(&v1).zip(&vm) {
            let lin = [0, 1, 2].map(|c| (1.0 - a) * p[c] + a * q[c]);
            prop_assert!(norm3(sub3(*r, lin)) < 1e-9);
        }
    }
}
