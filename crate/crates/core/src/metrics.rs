//! Evaluation metrics for recovered motion.

use crate::camera::{backproject, rasterize_silhouette, Mask};
use crate::error::{Error, Result};
use crate::model::{pose_state, sample_surface, BodyModel, BodyState};
use crate::nn::KdTree;
use crate::objectives::Sequence;
use serde::{Deserialize, Serialize};

/// Distance threshold of the F-score, meters.
pub const FSCORE_TAU: f64 = 0.05;
/// Surface samples drawn from the predicted mesh for the F-score.
pub const FSCORE_SAMPLES: usize = 10_000;
/// Feet below this height are in contact with the floor, meters.
pub const CONTACT_HEIGHT: f64 = 0.04;

/// Intersection over union of two masks. Two empty masks count as identical.
pub fn iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    if !pred.same_size(gt) {
        return Err(Error::Dimension(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mean IoU over the worst `⌈0.05·T⌉` frames.
pub fn iou_w5(per_frame: &[f64]) -> Option<f64> {
    if per_frame.is_empty() {
        return None;
    }
    let k = ((0.05 * per_frame.len() as f64).ceil() as usize).max(1);
    let mut v = per_frame.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[..k].iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

/// Fraction of each set with a neighbor in the other set within `tau`, and
/// their harmonic mean. `None` if either set is empty.
pub fn fscore(pred: &[[f64; 3]], gt: &[[f64; 3]], tau: f64) -> Option<FScore> {
    if pred.is_empty() || gt.is_empty() {
        return None;
    }
    let tp = KdTree::new(pred.to_vec());
    let tg = KdTree::new(gt.to_vec());
    let within = |pts: &[[f64; 3]], tree: &KdTree<3>| {
        pts.iter().filter(|p| tree.nearest(p).is_some_and(|(_, d2)| d2 <= tau * tau)).count() as f64 / pts.len() as f64
    };
    let precision = within(pred, &tg);
    let recall = within(gt, &tp);
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Some(FScore {
        precision,
        recall,
        fscore: f,
    })
}

/// Fraction of vertices strictly below the floor, per frame.
pub fn pene_per_frame(vertices: &[Vec<[f64; 3]>], floor: f64) -> Vec<f64> {
    vertices
        .iter()
        .map(|f| {
            if f.is_empty() {
                0.0
            } else {
                f.iter().filter(|v| v[2] < floor).count() as f64 / f.len() as f64
            }
        })
        .collect()
}

/// Frame average of the penetrating vertex fraction.
pub fn pene_pct(vertices: &[Vec<[f64; 3]>], floor: f64) -> f64 {
    let per = pene_per_frame(vertices, floor);
    if per.is_empty() {
        0.0
    } else {
        per.iter().sum::<f64>() / per.len() as f64
    }
}

/// Mean norm of the second difference of every joint trajectory.
/// Sequences shorter than 3 frames have no jitter.
pub fn jitter(joints: &[Vec<[f64; 3]>]) -> f64 {
    if joints.len() < 3 {
        return 0.0;
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for w in joints.windows(3) {
        for k in 0..w[1].len() {
            let d = [0, 1, 2].map(|c| w[2][k][c] - 2.0 * w[1][k][c] + w[0][k][c]);
            sum += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean horizontal displacement of feet between consecutive frames in which
/// both positions are below `height` above the floor. Zero without contacts.
pub fn foot_skating(feet: &[Vec<[f64; 3]>], floor: f64, height: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for w in feet.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            if a[2] - floor < height && b[2] - floor < height {
                sum += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub tau: f64,
    pub samples: usize,
    pub seed: u64,
    /// Height of the floor plane, meters.
    pub floor: f64,
    pub contact_height: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tau: FSCORE_TAU,
            samples: FSCORE_SAMPLES,
            seed: 0,
            floor: 0.0,
            contact_height: CONTACT_HEIGHT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerFrame {
    pub iou: Vec<f64>,
    pub fscore: Vec<Option<f64>>,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub pene: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub iou_w5: f64,
    /// `None` when no view carries depth.
    pub fscore: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub pene_pct: f64,
    pub jitter: f64,
    pub foot_skating: f64,
    pub per_frame: PerFrame,
}

fn mean_some(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Evaluates a per-frame body state against a sequence. Silhouettes are
/// compared in every view; the F-score reference is the union of all views'
/// lifted depth at each frame.
pub fn evaluate(model: &BodyModel, state: &BodyState, seq: &Sequence, cfg: &EvalConfig) -> Result<MetricsReport> {
    let frames = seq.frames();
    if state.len() != frames {
        return Err(Error::Dimension(format!(
            "state has {} frames, sequence has {frames}",
            state.len()
        )));
    }
    state.validate(model)?;
    let mut per = PerFrame::default();
    let mut verts = Vec::with_capacity(frames);
    let mut joints = Vec::with_capacity(frames);
    for t in 0..frames {
        let mesh = pose_state(model, state, t)?;
        let mut ious = Vec::with_capacity(seq.views.len());
        let mut cloud = Vec::new();
        for (cam, obs) in seq.rig.cameras.iter().zip(&seq.views) {
            let o = &obs[t];
            let sil = rasterize_silhouette(cam, &mesh.vertices, &model.faces);
            ious.push(iou(&sil, &o.mask)?);
            if let Some(d) = &o.depth {
                cloud.extend(backproject(cam, d, &o.mask)?);
            }
        }
        per.iou.push(ious.iter().sum::<f64>() / ious.len().max(1) as f64);
        let f = if cloud.is_empty() {
            None
        } else {
            let pred = sample_surface(model, &mesh, cfg.samples, 1.0, cfg.seed ^ t as u64)?;
            fscore(&pred, &cloud, cfg.tau)
        };
        per.fscore.push(f.map(|f| f.fscore));
        per.precision.push(f.map(|f| f.precision));
        per.recall.push(f.map(|f| f.recall));
        joints.push(mesh.joints);
        verts.push(mesh.vertices);
    }
    per.pene = pene_per_frame(&verts, cfg.floor);
    let feet: Vec<Vec<[f64; 3]>> = joints
        .iter()
        .map(|j| model.foot_joints.iter().map(|&k| j[k as usize]).collect())
        .collect();
    let n = frames.max(1) as f64;
    Ok(MetricsReport {
        iou: per.iou.iter().sum::<f64>() / n,
        iou_w5: iou_w5(&per.iou).unwrap_or(0.0),
        fscore: mean_some(&per.fscore),
        precision: mean_some(&per.precision),
        recall: mean_some(&per.recall),
        pene_pct: per.pene.iter().sum::<f64>() / n,
        jitter: jitter(&joints),
        foot_skating: foot_skating(&feet, cfg.floor, cfg.contact_height),
        per_frame: per,
    })
}
