//! 6D rotations, shape blending and the kinematic chain.

use super::assets::{BodyModel, SHAPE_DIM};
use crate::error::{Error, Result};
use crate::linalg::{cross3, lift3, scale3, sub3, Mat3, Rigid, Vec3};
use crate::real::Real;

/// 6D encoding of the identity rotation.
pub const ROT6D_IDENTITY: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

const DEGENERATE: f64 = 1e-8;

/// Converts a 6D rotation (two 3-vectors) to a rotation matrix by
/// Gram–Schmidt on the halves; the third column is their cross product.
pub fn rot6d_to_matrix<T: Real>(r: &[T]) -> Result<Mat3<T>> {
    if r.len() != 6 {
        return Err(Error::InvalidRotation(format!("expected 6 values, got {}", r.len())));
    }
    let a1 = [r[0], r[1], r[2]];
    let a2 = [r[3], r[4], r[5]];
    let n1 = T::norm(&a1);
    let n2 = T::norm(&a2);
    if !(n1.value() > DEGENERATE) || !(n2.value() > DEGENERATE) {
        return Err(Error::InvalidRotation(format!(
            "6D half has norm {:e}/{:e}",
            n1.value(),
            n2.value()
        )));
    }
    let b1 = scale3(a1, n1.recip());
    let proj = T::dot(&b1, &a2);
    let u = sub3(a2, scale3(b1, proj));
    let nu = T::norm(&u);
    if !(nu.value() > DEGENERATE * n2.value()) {
        return Err(Error::InvalidRotation("6D halves are parallel".into()));
    }
    let b2 = scale3(u, nu.recip());
    let b3 = cross3(b1, b2);
    Ok([
        [b1[0], b2[0], b3[0]],
        [b1[1], b2[1], b3[1]],
        [b1[2], b2[2], b3[2]],
    ])
}

/// Per-frame articulation: joint rotations, root translation, root orientation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FramePose<T> {
    /// 6 values per joint. The root's block is unused; the root is driven
    /// by `orientation`.
    pub theta: Vec<T>,
    pub translation: [T; 3],
    pub orientation: [T; 6],
}

impl FramePose<f64> {
    pub fn rest(joint_count: usize) -> Self {
        FramePose {
            theta: ROT6D_IDENTITY.repeat(joint_count),
            translation: [0.0; 3],
            orientation: ROT6D_IDENTITY,
        }
    }

    pub fn lift<T: Real>(&self) -> FramePose<T> {
        FramePose {
            theta: self.theta.iter().map(|&x| T::lit(x)).collect(),
            translation: lift3(self.translation),
            orientation: self.orientation.map(T::lit),
        }
    }
}

impl<T: Real> FramePose<T> {
    pub fn values(&self) -> FramePose<f64> {
        FramePose {
            theta: self.theta.iter().map(|x| x.value()).collect(),
            translation: self.translation.map(|x| x.value()),
            orientation: self.orientation.map(|x| x.value()),
        }
    }
}

fn blend<T: Real>(rest: &[[f64; 3]], basis_t: &[f64], beta: &[T]) -> Vec<Vec3<T>> {
    debug_assert_eq!(beta.len(), SHAPE_DIM);
    rest.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut out = [T::zero(); 3];
            for c in 0..3 {
                let row = &basis_t[(i * 3 + c) * SHAPE_DIM..(i * 3 + c + 1) * SHAPE_DIM];
                out[c] = T::affine(T::lit(p[c]), row, beta);
            }
            out
        })
        .collect()
}

/// Template vertices displaced by the shape coefficients.
pub fn shaped_vertices<T: Real>(model: &BodyModel, beta: &[T]) -> Vec<Vec3<T>> {
    blend(&model.assets.vertices, &model.vertex_basis_t, beta)
}

/// Rest joints displaced by the shape coefficients.
pub fn shaped_joints<T: Real>(model: &BodyModel, beta: &[T]) -> Vec<Vec3<T>> {
    blend(&model.assets.rest_joints, &model.joint_basis_t, beta)
}

/// World rotations `R_j` and skinning offsets `o_j` of every joint, so that
/// a point `x` attached to joint `j` in the rest pose moves to `R_j x + o_j`.
///
/// The root rotates about the world origin (`o_root = 0`); a child rotates
/// about its rest position, giving `o_j = o_p + (R_p − R_j) J_j`.
pub(crate) fn skinning_chain<T: Real>(
    model: &BodyModel,
    rest_joints: &[Vec3<T>],
    theta: &[T],
    orientation: &[T],
) -> Result<(Vec<Mat3<T>>, Vec<Vec3<T>>)> {
    let n = model.joint_count();
    if theta.len() != 6 * n || rest_joints.len() != n {
        return Err(Error::Dimension(format!(
            "pose has {} values for {} joints",
            theta.len(),
            n
        )));
    }
    let mut rots = vec![crate::linalg::identity3::<T>(); n];
    let mut offs = vec![[T::zero(); 3]; n];
    for &j in &model.order {
        let p = model.assets.parent[j];
        if p < 0 {
            rots[j] = rot6d_to_matrix(orientation)?;
        } else {
            let p = p as usize;
            let r = crate::linalg::mat_mul(&rots[p], &rot6d_to_matrix(&theta[6 * j..6 * j + 6])?);
            let mut diff = r;
            for (a, row) in diff.iter_mut().enumerate() {
                for (b, x) in row.iter_mut().enumerate() {
                    *x = rots[p][a][b] - r[a][b];
                }
            }
            offs[j] = crate::linalg::add3(offs[p], crate::linalg::mat_vec(&diff, rest_joints[j]));
            rots[j] = r;
        }
    }
    Ok((rots, offs))
}

/// World transforms `A_j` of every joint for a given rest skeleton.
///
/// The root rotates about the world origin; each child composes its local
/// rotation about its rest position with its parent's transform. The posed
/// position of joint `j` is `A_j.trans`.
pub fn forward_kinematics_with<T: Real>(
    model: &BodyModel,
    rest_joints: &[Vec3<T>],
    theta: &[T],
    orientation: &[T],
) -> Result<Vec<Rigid<T>>> {
    let (rots, offs) = skinning_chain(model, rest_joints, theta, orientation)?;
    Ok(rots
        .into_iter()
        .zip(offs)
        .zip(rest_joints)
        .map(|((rot, o), &jr)| Rigid {
            trans: crate::linalg::add3(o, crate::linalg::mat_vec(&rot, jr)),
            rot,
        })
        .collect())
}

/// Forward kinematics on the unshaped template skeleton.
pub fn forward_kinematics<T: Real>(model: &BodyModel, theta: &[T], orientation: &[T]) -> Result<Vec<Rigid<T>>> {
    let rest: Vec<Vec3<T>> = model.assets.rest_joints.iter().map(|&p| lift3(p)).collect();
    forward_kinematics_with(model, &rest, theta, orientation)
}
