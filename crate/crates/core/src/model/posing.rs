//! Linear blend skinning and the scaled, translated posed mesh.

use super::assets::{Anchor, BodyModel, SHAPE_DIM};
use super::kinematics::{forward_kinematics_with, shaped_joints, shaped_vertices, skinning_chain, FramePose};
use crate::error::{Error, Result};
use crate::linalg::{add3, mat_vec, Mat3, Vec3};
use crate::real::Real;
use serde::{Deserialize, Serialize};

/// World-frame posed vertices and joints. Faces are the template's.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub joints: Vec<Vec3<T>>,
}

impl<T: Real> PosedMesh<T> {
    pub fn values(&self) -> PosedMesh<f64> {
        PosedMesh {
            vertices: self.vertices.iter().map(|p| p.map(|x| x.value())).collect(),
            joints: self.joints.iter().map(|p| p.map(|x| x.value())).collect(),
        }
    }
}

/// Shape and scale of a sequence plus its per-frame poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub beta: Vec<f64>,
    pub scale: f64,
    pub frames: Vec<FramePose<f64>>,
}

impl BodyState {
    pub fn rest(model: &BodyModel, frames: usize) -> Self {
        BodyState {
            beta: vec![0.0; SHAPE_DIM],
            scale: 1.0,
            frames: vec![FramePose::rest(model.joint_count()); frames],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        if self.beta.len() != SHAPE_DIM {
            return Err(Error::InvalidState(format!("beta has {} entries", self.beta.len())));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidState(format!("scale must be positive, got {}", self.scale)));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.theta.len() != model.pose_dim() {
                return Err(Error::InvalidState(format!("frame {t}: theta has {} entries", f.theta.len())));
            }
            if f.theta.iter().chain(&f.translation).chain(&f.orientation).any(|x| !x.is_finite()) {
                return Err(Error::InvalidState(format!("frame {t}: non-finite pose value")));
            }
        }
        Ok(())
    }
}

#[inline]
fn place<T: Real>(p: Vec3<T>, scale: T, translation: &[T; 3]) -> Vec3<T> {
    [
        p[0] * scale + translation[0],
        p[1] * scale + translation[1],
        p[2] * scale + translation[2],
    ]
}

/// `M(β, θ, φ) · s + γ`: shape blend, forward kinematics, linear blend
/// skinning, then uniform scaling about the world origin and translation.
pub fn pose_mesh<T: Real>(model: &BodyModel, beta: &[T], scale: T, pose: &FramePose<T>) -> Result<PosedMesh<T>> {
    if beta.len() != SHAPE_DIM {
        return Err(Error::Dimension(format!("beta has {} entries", beta.len())));
    }
    let rest_joints = shaped_joints(model, beta);
    let rest_vertices = shaped_vertices(model, beta);
    let (rots, offs) = skinning_chain(model, &rest_joints, &pose.theta, &pose.orientation)?;
    let joints: Vec<Vec3<T>> = rots
        .iter()
        .zip(&offs)
        .zip(&rest_joints)
        .map(|((r, o), &jr)| add3(*o, mat_vec(r, jr)))
        .collect();
    // R − I, so the rest pose reproduces the template without rounding
    let deltas: Vec<Mat3<T>> = rots
        .iter()
        .map(|r| {
            let mut d = *r;
            for (k, row) in d.iter_mut().enumerate() {
                row[k] = row[k] - T::one();
            }
            d
        })
        .collect();
    let skin = &model.assets.skin;
    let mut vertices = Vec::with_capacity(rest_vertices.len());
    let mut w = [0.0; 4];
    let mut js = [0usize; 4];
    let mut parts = [T::zero(); 4];
    for (i, v) in rest_vertices.into_iter().enumerate() {
        let mut n = 0;
        for (&j, &wj) in skin.joints[i].iter().zip(&skin.weights[i]) {
            if wj > 0.0 {
                w[n] = wj;
                js[n] = j as usize;
                n += 1;
            }
        }
        let mut out = [T::zero(); 3];
        for r in 0..3 {
            let mut row = [T::zero(); 3];
            for (c, slot) in row.iter_mut().enumerate() {
                for k in 0..n {
                    parts[k] = deltas[js[k]][r][c];
                }
                *slot = T::affine(T::zero(), &w[..n], &parts[..n]);
            }
            for k in 0..n {
                parts[k] = offs[js[k]][r];
            }
            let off = T::affine(T::zero(), &w[..n], &parts[..n]);
            out[r] = v[r] + T::dot(&row, &v) + off;
        }
        vertices.push(place(out, scale, &pose.translation));
    }
    let joints = joints.into_iter().map(|p| place(p, scale, &pose.translation)).collect();
    Ok(PosedMesh { vertices, joints })
}

/// Posed joint positions only (no skinning).
pub fn pose_joints<T: Real>(model: &BodyModel, beta: &[T], scale: T, pose: &FramePose<T>) -> Result<Vec<Vec3<T>>> {
    let rest_joints = shaped_joints(model, beta);
    let a = forward_kinematics_with(model, &rest_joints, &pose.theta, &pose.orientation)?;
    Ok(a.into_iter().map(|aj| place(aj.trans, scale, &pose.translation)).collect())
}

/// Posed mesh of frame `t` of a body state.
pub fn pose_state(model: &BodyModel, state: &BodyState, t: usize) -> Result<PosedMesh<f64>> {
    let pose = state
        .frames
        .get(t)
        .ok_or_else(|| Error::InvalidState(format!("frame {t} out of range ({} frames)", state.len())))?;
    if !(state.scale > 0.0) {
        return Err(Error::InvalidState(format!("scale must be positive, got {}", state.scale)));
    }
    pose_mesh(model, &state.beta, state.scale, pose)
}

/// 3D positions of the model keypoints on a posed mesh.
pub fn keypoint_positions<T: Real>(model: &BodyModel, mesh: &PosedMesh<T>) -> Vec<Vec3<T>> {
    model
        .assets
        .keypoints
        .iter()
        .map(|k| match k.anchor {
            Anchor::Joint(j) => mesh.joints[j as usize],
            Anchor::Vertex(v) => mesh.vertices[v as usize],
        })
        .collect()
}
