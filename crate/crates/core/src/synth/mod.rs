//! Synthetic captures with known ground truth.

mod motion;
mod render;
pub mod template;

pub use motion::synth_motion;
pub use render::{camera_ring, render_observations};
pub use template::{make_template, SynthTemplate};

use crate::error::{Error, Result};
use crate::model::{pose_joints, BodyModel, BodyState};
use crate::objectives::Sequence;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gait {
    Walk,
    Trot,
    Jump,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Gaussian keypoint noise, pixels.
    pub keypoint_sigma: f64,
    /// Mask erosion (< 0) or dilation (> 0), pixels.
    pub mask_px: i32,
    /// Gaussian depth noise, meters.
    pub depth_sigma: f64,
    /// Probability of dropping each correspondence.
    pub cse_dropout: f64,
    /// Gaussian correspondence jitter, pixels.
    pub cse_sigma: f64,
    /// Correspondences drawn per frame and view.
    pub cse_count: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            keypoint_sigma: 0.0,
            mask_px: 0,
            depth_sigma: 0.0,
            cse_dropout: 0.0,
            cse_sigma: 3.0,
            cse_count: 300,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            cse_sigma: 0.0,
            ..NoiseSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    /// Rest withers height of the template, meters.
    pub size_class: f64,
    /// Global scale of the ground-truth body relative to the template.
    pub scale: f64,
    /// Standard deviation of the ground-truth shape coefficients.
    pub shape_sigma: f64,
    pub cameras: usize,
    pub ring_radius: f64,
    pub camera_height: f64,
    pub pitch_jitter_deg: f64,
    pub image_size: (u32, u32),
    pub focal: f64,
    pub frames: usize,
    pub fps: f64,
    pub gait: Gait,
    pub noise: NoiseSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            size_class: 0.3,
            scale: 1.15,
            shape_sigma: 0.0,
            cameras: 5,
            ring_radius: 2.5,
            camera_height: 0.45,
            pitch_jitter_deg: 10.0,
            image_size: (480, 360),
            focal: 300.0,
            frames: 60,
            fps: 15.0,
            gait: Gait::Walk,
            noise: NoiseSpec::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.frames < 2 {
            return bad("synthetic sequences need at least 2 frames");
        }
        if !(self.ring_radius > 0.0) || !(self.size_class > 0.0) || !(self.scale > 0.0) || !(self.fps > 0.0) {
            return bad("ring radius, size class, scale and fps must be positive");
        }
        if self.cameras == 0 || self.image_size.0 == 0 || self.image_size.1 == 0 || !(self.focal > 0.0) {
            return bad("need at least one camera with a valid image");
        }
        let n = &self.noise;
        if !(n.keypoint_sigma >= 0.0 && n.depth_sigma >= 0.0 && n.cse_sigma >= 0.0 && self.shape_sigma >= 0.0) {
            return bad("noise levels must be nonnegative");
        }
        if !(0.0..=1.0).contains(&n.cse_dropout) {
            return bad("correspondence dropout must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Ground truth of a synthetic capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub state: BodyState,
    /// Posed joint positions, `[frame][joint]`.
    pub joints: Vec<Vec<[f64; 3]>>,
}

/// A complete synthetic capture.
#[derive(Debug, Clone)]
pub struct SynthCapture {
    pub template: SynthTemplate,
    pub model: BodyModel,
    pub sequence: Sequence,
    pub truth: GroundTruth,
}

/// Template, motion, rig and rendered observations for one spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthCapture> {
    spec.validate()?;
    let template = make_template(spec.seed, spec.size_class)?;
    let model = BodyModel::new(template.assets.clone())?;
    let state = synth_motion(&model, spec)?;
    let rig = camera_ring(spec);
    let mut sequence = render_observations(&rig, &model, &state, &spec.noise, spec.seed)?;
    sequence.fps = spec.fps;
    let joints = state
        .frames
        .iter()
        .map(|f| pose_joints(&model, &state.beta, state.scale, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthCapture {
        template,
        model,
        sequence,
        truth: GroundTruth {
            spec: spec.clone(),
            state,
            joints,
        },
    })
}
