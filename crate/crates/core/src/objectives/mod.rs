//! Data, prior and smoothness terms and their weighted combination.
//!
//! Every term is generic over [`Real`]; the two Chamfer terms are evaluated
//! in plain floats and enter the tape as a single node each.

mod obs;
mod prepared;

pub use obs::{Correspondence, FrameObservation, KeypointObs, Sequence, Setting};
pub use prepared::{prepare, PreparedFrame, SampleConfig};

use crate::camera::Camera;
use crate::linalg::Vec3;
use crate::model::{BodyModel, SHAPE_DIM};
use crate::nn::{chamfer_with_grad, KdTree};
use crate::real::Real;
use serde::{Deserialize, Serialize};

/// Term weights and the leg-crossing threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub mask: f64,
    pub keypoint: f64,
    pub depth: f64,
    pub cse: f64,
    pub cross: f64,
    pub prior: f64,
    pub temporal: f64,
    pub w_body: f64,
    pub w_limb: f64,
    /// Pairs with `exp(−distance) ≥ delta` are penalized.
    pub delta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mask: 400.0,
            keypoint: 60.0,
            depth: 1.0,
            cse: 20.0,
            cross: 2.5,
            prior: 0.005,
            temporal: 0.1,
            w_body: 1.0,
            w_limb: 1.0,
            delta: (-0.05f64).exp(),
        }
    }
}

impl LossWeights {
    /// `(mask, keypoint, depth, cse, cross, prior, temporal)`.
    pub fn vector(&self) -> [f64; 7] {
        [
            self.mask,
            self.keypoint,
            self.depth,
            self.cse,
            self.cross,
            self.prior,
            self.temporal,
        ]
    }

    pub fn validate(&self) -> crate::Result<()> {
        let all = self.vector().into_iter().chain([self.w_body, self.w_limb]);
        if all.into_iter().any(|w| !(w >= 0.0) || !w.is_finite()) {
            return Err(crate::Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(crate::Error::Config(format!("leg-cross delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Coarse = 1,
    Full = 2,
    Smooth = 3,
}

impl Stage {
    pub fn id(self) -> u8 {
        self as u8
    }
}

/// Already-averaged term values; absent terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TermValues<T> {
    pub mask: T,
    pub keypoint: T,
    pub depth: T,
    pub cse: T,
    pub cross: T,
    pub prior: T,
    pub temporal: T,
}

pub const TERM_NAMES: [&str; 7] = ["mask", "keypoint", "depth", "cse", "cross", "prior", "temporal"];

impl<T: Real> TermValues<T> {
    pub fn zero() -> Self {
        let z = T::zero();
        TermValues {
            mask: z,
            keypoint: z,
            depth: z,
            cse: z,
            cross: z,
            prior: z,
            temporal: z,
        }
    }

    pub fn as_array(&self) -> [T; 7] {
        [
            self.mask,
            self.keypoint,
            self.depth,
            self.cse,
            self.cross,
            self.prior,
            self.temporal,
        ]
    }
}

/// Which terms a stage uses, in `TERM_NAMES` order.
pub fn active_terms(stage: Stage, depth: bool) -> [bool; 7] {
    let full = stage != Stage::Coarse;
    [true, true, depth, full, full, full, stage == Stage::Smooth]
}

/// Weighted sum of the terms active in `stage`.
pub fn total_loss<T: Real>(stage: Stage, v: &TermValues<T>, w: &LossWeights, depth: bool) -> T {
    let on = active_terms(stage, depth);
    let mut total = T::zero();
    for ((x, wt), a) in v.as_array().iter().zip(w.vector()).zip(on) {
        if a {
            total += *x * T::lit(wt);
        }
    }
    total
}

/// Mean of the terms that are present; `None` when none is.
pub fn mean_present<T: Real>(xs: impl IntoIterator<Item = Option<T>>) -> Option<T> {
    let mut n = 0usize;
    let mut acc = T::zero();
    for x in xs.into_iter().flatten() {
        acc += x;
        n += 1;
    }
    (n > 0).then(|| acc / T::lit(n as f64))
}

/// Projection of `p` with its Jacobian rows `d(u, v)/dp`, or `None` behind
/// the camera.
#[inline]
fn project_jac(cam: &Camera, p: [f64; 3]) -> Option<([f64; 2], [[f64; 3]; 2])> {
    let r = &cam.rotation;
    let t = &cam.translation;
    let xc = r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0];
    let yc = r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1];
    let zc = r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2];
    if zc <= crate::camera::Z_NEAR {
        return None;
    }
    let iz = 1.0 / zc;
    let uv = [cam.fx * xc * iz + cam.cx, cam.fy * yc * iz + cam.cy];
    let mut j = [[0.0; 3]; 2];
    for c in 0..3 {
        j[0][c] = cam.fx * (r[0][c] * iz - xc * r[2][c] * iz * iz);
        j[1][c] = cam.fy * (r[1][c] * iz - yc * r[2][c] * iz * iz);
    }
    Some((uv, j))
}

/// Symmetric Chamfer distance in pixels between the projected `samples`
/// and the foreground pixels held in `mask_tree`. Samples behind the camera
/// are ignored. `None` when either side is empty.
pub fn mask_loss<T: Real>(cam: &Camera, mask_tree: &KdTree<2>, samples: &[Vec3<T>]) -> Option<T> {
    let mut uv = Vec::with_capacity(samples.len());
    let mut jac = Vec::with_capacity(samples.len());
    let mut idx = Vec::with_capacity(samples.len());
    for (i, p) in samples.iter().enumerate() {
        if let Some((q, j)) = project_jac(cam, p.map(|x| x.value())) {
            uv.push(q);
            jac.push(j);
            idx.push(i);
        }
    }
    let (value, g2) = chamfer_with_grad(&uv, mask_tree)?;
    let mut xs = Vec::with_capacity(3 * idx.len());
    let mut partials = Vec::with_capacity(3 * idx.len());
    for ((&i, j), g) in idx.iter().zip(&jac).zip(&g2) {
        for c in 0..3 {
            xs.push(samples[i][c]);
            partials.push(g[0] * j[0][c] + g[1] * j[1][c]);
        }
    }
    Some(T::custom(value, &partials, &xs))
}

/// Symmetric 3D Chamfer distance in meters to the lifted depth points.
pub fn depth_loss<T: Real>(depth_tree: &KdTree<3>, samples: &[Vec3<T>]) -> Option<T> {
    crate::nn::chamfer_to_fixed(samples, depth_tree)
}

/// Confidence-weighted mean pixel distance; `(uv, confidence, point)`.
fn weighted_reprojection<T: Real>(cam: &Camera, items: impl Iterator<Item = ([f64; 2], f64, Vec3<T>)>) -> Option<T> {
    let mut acc = T::zero();
    let mut wsum = 0.0;
    for (uv, c, p) in items {
        if c <= 0.0 {
            continue;
        }
        let q = cam.project_point(p);
        if !q.valid {
            continue;
        }
        let d = T::norm(&[q.uv[0] - T::lit(uv[0]), q.uv[1] - T::lit(uv[1])]);
        acc += d * T::lit(c);
        wsum += c;
    }
    (wsum > 0.0).then(|| acc / T::lit(wsum))
}

/// Keypoint reprojection error over present keypoints with confidence at
/// or above `threshold`.
pub fn keypoint_loss<T: Real>(cam: &Camera, obs: &FrameObservation, model_kps: &[Vec3<T>], threshold: f64) -> Option<T> {
    weighted_reprojection(
        cam,
        obs.keypoints
            .iter()
            .zip(model_kps)
            .filter(|(k, _)| k.present && k.confidence >= threshold)
            .map(|(k, &p)| (k.uv, k.confidence, p)),
    )
}

/// Dense correspondence reprojection error.
pub fn cse_loss<T: Real>(cam: &Camera, corr: &[Correspondence], vertices: &[Vec3<T>]) -> Option<T> {
    weighted_reprojection(
        cam,
        corr.iter()
            .filter(|c| (c.vertex as usize) < vertices.len())
            .map(|c| (c.uv, c.confidence, vertices[c.vertex as usize])),
    )
}

/// `Σ 1[exp(−d) ≥ δ] · exp(−d)` over joint pairs at distance `d`.
pub fn leg_cross_loss<T: Real>(joints: &[Vec3<T>], pairs: &[(u32, u32)], delta: f64) -> T {
    let mut acc = T::zero();
    for &(a, b) in pairs {
        let (p, q) = (joints[a as usize], joints[b as usize]);
        let d = T::norm(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]]);
        let e = (-d).exp();
        if e.value() >= delta {
            acc += e;
        }
    }
    acc
}

fn mahalanobis<T: Real>(x: &[T], mean: &[f64], p: &crate::model::Precision) -> T {
    let d: Vec<T> = x.iter().zip(mean).map(|(&a, &m)| a - T::lit(m)).collect();
    if p.diagonal {
        let sq: Vec<T> = d.iter().map(|&v| v * v).collect();
        return T::affine(T::zero(), &p.diag(), &sq);
    }
    let rows: Vec<T> = (0..p.dim).map(|i| T::affine(T::zero(), p.row(i), &d)).collect();
    T::dot(&d, &rows)
}

/// `w_body · (β−μ)ᵀΣ⁻¹(β−μ) + w_limb · ‖w ⊙ β‖²`.
pub fn shape_prior_loss<T: Real>(beta: &[T], model: &BodyModel, w_body: f64, w_limb: f64) -> T {
    debug_assert_eq!(beta.len(), SHAPE_DIM);
    let body = mahalanobis(beta, &model.shape_prior.mean, &model.shape_precision);
    let sq: Vec<T> = beta.iter().map(|&b| b * b).collect();
    let lw: Vec<f64> = model.limb_weights.iter().map(|w| w * w).collect();
    body * T::lit(w_body) + T::affine(T::zero(), &lw, &sq) * T::lit(w_limb)
}

/// `(θ−μ)ᵀΣ⁻¹(θ−μ)` for one frame's joint rotations.
pub fn pose_prior_loss<T: Real>(theta: &[T], model: &BodyModel) -> T {
    mahalanobis(theta, &model.pose_prior.mean, &model.pose_precision)
}

/// `Σ_t Σ_k ‖J_{t+1} − J_t‖ + mean over cameras of ‖R(J_{t+1}) − R(J_t)‖`.
pub fn temporal_loss<T: Real>(joints: &[Vec<Vec3<T>>], cams: &[Camera]) -> T {
    let mut acc = T::zero();
    if joints.len() < 2 {
        return acc;
    }
    let proj: Vec<Vec<Vec<Option<[T; 2]>>>> = cams
        .iter()
        .map(|c| {
            joints
                .iter()
                .map(|fr| {
                    fr.iter()
                        .map(|&p| {
                            let q = c.project_point(p);
                            q.valid.then_some(q.uv)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let inv_views = if cams.is_empty() { 0.0 } else { 1.0 / cams.len() as f64 };
    for t in 0..joints.len() - 1 {
        for k in 0..joints[t].len() {
            let (a, b) = (joints[t][k], joints[t + 1][k]);
            acc += T::norm(&[b[0] - a[0], b[1] - a[1], b[2] - a[2]]);
            let mut px = T::zero();
            for pv in &proj {
                if let (Some(p), Some(q)) = (pv[t][k], pv[t + 1][k]) {
                    px += T::norm(&[q[0] - p[0], q[1] - p[1]]);
                }
            }
            acc += px * T::lit(inv_views);
        }
    }
    acc
}
