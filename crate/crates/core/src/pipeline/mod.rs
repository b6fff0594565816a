//! Three-stage fitting: coarse placement and scale, full shape and pose,
//! then temporal refinement.

mod batch;
mod stage;

pub use batch::{sample_batch, BatchMode};
pub use stage::{perturb_field, stage_configs, StageConfig, StageLog};

use crate::error::{Error, Result};
use crate::field::{eval_field, init_field, FieldWeights};
use crate::model::{pose_joints, BodyModel, BodyState, FramePose, SHAPE_DIM};
use crate::objectives::{prepare, LossWeights, SampleConfig, Sequence, Setting};
use serde::{Deserialize, Serialize};

/// Per-group learning rates of one stage. A zero rate freezes the group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRates {
    pub scale: f64,
    pub shape: f64,
    pub field_tr: f64,
    pub field_theta: f64,
}

impl StageRates {
    pub fn as_array(&self) -> [f64; 4] {
        [self.scale, self.shape, self.field_tr, self.field_theta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub stage1: StageRates,
    pub stage2: StageRates,
    pub stage3: StageRates,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            stage1: StageRates {
                scale: 5e-3,
                shape: 0.0,
                field_tr: 5e-2,
                field_theta: 0.0,
            },
            stage2: StageRates {
                scale: 5e-5,
                shape: 5e-2,
                field_tr: 5e-4,
                field_theta: 5e-4,
            },
            stage3: StageRates {
                scale: 0.0,
                shape: 0.0,
                field_tr: 1e-5,
                field_theta: 1e-5,
            },
        }
    }
}

/// Steps per frame of each stage for a setting.
pub fn default_multipliers(setting: Setting) -> [usize; 3] {
    if setting.multi_view() {
        [10, 25, 5]
    } else {
        [5, 20, 5]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub setting: Setting,
    /// View index used by single-view settings.
    pub view: usize,
    /// Steps per frame for stages 1 to 3; `None` follows the setting.
    pub multipliers: Option<[usize; 3]>,
    pub rates: Rates,
    pub weights: LossWeights,
    pub sampling: SampleConfig,
    /// Frames per step in stages 1 and 2.
    pub batch: usize,
    /// Segment length in stage 3.
    pub segment: usize,
    pub seed: u64,
    pub initial_scale: f64,
    /// Also train the shape coefficients in stage 1, at the stage-2 rate.
    pub stage1_trains_shape: bool,
    pub stages: [bool; 3],
    /// Worker threads for per-frame evaluation. Results do not depend on it.
    pub threads: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            setting: Setting::MvRgbd,
            view: 0,
            multipliers: None,
            rates: Rates::default(),
            weights: LossWeights::default(),
            sampling: SampleConfig::default(),
            batch: 8,
            segment: 16,
            seed: 0,
            initial_scale: 1.0,
            stage1_trains_shape: false,
            stages: [true; 3],
            threads: 1,
        }
    }
}

impl FitSettings {
    pub fn for_setting(setting: Setting) -> Self {
        FitSettings {
            setting,
            ..FitSettings::default()
        }
    }

    pub fn multipliers(&self) -> [usize; 3] {
        self.multipliers.unwrap_or_else(|| default_multipliers(self.setting))
    }

    pub fn validate(&self) -> Result<()> {
        if self.multipliers().contains(&0) {
            return Err(Error::Config(format!("stage multipliers must be positive, got {:?}", self.multipliers())));
        }
        if self.batch == 0 || self.segment == 0 {
            return Err(Error::Config("batch size and segment length must be positive".into()));
        }
        if !(self.initial_scale > 0.0) || !self.initial_scale.is_finite() {
            return Err(Error::Config(format!("initial scale must be positive, got {}", self.initial_scale)));
        }
        let r = &self.rates;
        for x in [r.stage1, r.stage2, r.stage3].iter().flat_map(|s| s.as_array()) {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::Config(format!("learning rates must be finite and nonnegative, got {x}")));
            }
        }
        self.weights.validate()?;
        self.sampling.validate()
    }
}

/// Recovered shape, scale, field and the per-frame states it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSolution {
    pub setting: Setting,
    pub seed: u64,
    pub fps: f64,
    pub beta: Vec<f64>,
    pub scale: f64,
    pub psi: FieldWeights,
    /// `eval_field(psi, t, T)` for every frame.
    pub frames: Vec<FramePose<f64>>,
    /// Posed joint positions, `[frame][joint]`.
    pub joints: Vec<Vec<[f64; 3]>>,
    pub logs: Vec<StageLog>,
}

impl MotionSolution {
    /// Materializes the per-frame poses and joints of a field.
    pub fn new(
        model: &BodyModel,
        (setting, seed, fps): (Setting, u64, f64),
        beta: Vec<f64>,
        scale: f64,
        psi: FieldWeights,
        frames: usize,
        logs: Vec<StageLog>,
    ) -> Result<Self> {
        if beta.len() != SHAPE_DIM {
            return Err(Error::Dimension(format!("beta has {} entries", beta.len())));
        }
        psi.validate(model.joint_count())?;
        let poses: Vec<FramePose<f64>> = (0..frames).map(|t| eval_field(&psi, t, frames)).collect();
        let joints = poses
            .iter()
            .map(|p| pose_joints(model, &beta, scale, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(MotionSolution {
            setting,
            seed,
            fps,
            beta,
            scale,
            psi,
            frames: poses,
            joints,
            logs,
        })
    }

    pub fn state(&self) -> BodyState {
        BodyState {
            beta: self.beta.clone(),
            scale: self.scale,
            frames: self.frames.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks that the stored poses are the field's outputs.
    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        self.psi.validate(model.joint_count())?;
        let n = self.frames.len();
        if self.joints.len() != n {
            return Err(Error::Dimension(format!("{} poses but {} joint frames", n, self.joints.len())));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if *f != eval_field(&self.psi, t, n) {
                return Err(Error::InvalidState(format!("frame {t} does not match the field")));
            }
        }
        self.state().validate(model)
    }
}

/// The views a setting fits to.
pub fn views_for(seq: &Sequence, settings: &FitSettings) -> Result<Sequence> {
    if settings.setting.multi_view() {
        Ok(seq.clone())
    } else {
        seq.select_views(&[settings.view])
    }
}

/// Stage objective of a solution on fixed frames, with one surface-sampling
/// seed per frame. Returns the weighted total and the unweighted terms in
/// loss-weight order, per-frame terms averaged over `frames`.
pub fn stage_objective(
    model: &BodyModel,
    seq: &Sequence,
    settings: &FitSettings,
    stage: crate::objectives::Stage,
    solution: &MotionSolution,
    frames: &[usize],
    seeds: &[u64],
) -> Result<(f64, [f64; 7])> {
    settings.validate()?;
    if frames.len() != seeds.len() || frames.iter().any(|&t| t >= seq.frames()) {
        return Err(Error::Config("frames and seeds must pair up and lie in the sequence".into()));
    }
    let used = views_for(seq, settings)?;
    let use_depth = settings.setting.uses_depth() && used.has_depth();
    let prepared = prepare(&used, use_depth, &settings.sampling, settings.seed)?;
    let problem = stage::Problem::new(model, &used, prepared, use_depth, settings);
    let params = stage::Params::new(solution.beta.clone(), solution.scale, solution.psi.clone());
    problem.objective_terms(stage, &params, frames, seeds)
}

/// Runs the enabled stages from a fresh initialization.
pub fn fit_sequence(model: &BodyModel, seq: &Sequence, settings: &FitSettings) -> Result<MotionSolution> {
    fit_from(model, seq, settings, None)
}

/// Runs the enabled stages, starting from `start` when given.
pub fn fit_from(
    model: &BodyModel,
    seq: &Sequence,
    settings: &FitSettings,
    start: Option<&MotionSolution>,
) -> Result<MotionSolution> {
    settings.validate()?;
    seq.validate(model.vertex_count(), model.keypoints.len())?;
    let frames = seq.frames();
    if frames < 2 {
        return Err(Error::Config(format!("need at least 2 frames, got {frames}")));
    }
    let used = views_for(seq, settings)?;
    let use_depth = settings.setting.uses_depth();
    if use_depth && !used.has_depth() {
        return Err(Error::Config(format!(
            "setting {} needs depth for every view and frame",
            settings.setting
        )));
    }
    let prepared = prepare(&used, use_depth, &settings.sampling, settings.seed)?;
    let problem = stage::Problem::new(model, &used, prepared, use_depth, settings);
    let (beta, scale, psi) = match start {
        Some(s) => {
            if s.len() != frames {
                return Err(Error::Dimension(format!("start has {} frames, sequence has {frames}", s.len())));
            }
            (s.beta.clone(), s.scale, s.psi.clone())
        }
        None => (
            vec![0.0; SHAPE_DIM],
            settings.initial_scale,
            init_field(settings.seed, model.joint_count(), None),
        ),
    };
    let mut params = stage::Params::new(beta, scale, psi);
    let mut logs = start.map(|s| s.logs.clone()).unwrap_or_default();
    let meta = (settings.setting, settings.seed, seq.fps);
    let mut previous: Option<(crate::objectives::Stage, f64)> = None;
    for cfg in stage_configs(settings, frames)? {
        if !settings.stages[cfg.stage.id() as usize - 1] {
            continue;
        }
        let log = stage::run_stage(&problem, &cfg, &mut params, previous, settings.threads).map_err(|e| match e {
            Error::Diverged { stage, step, checkpoint } => {
                let (beta, scale, psi) = (checkpoint.beta, checkpoint.scale, checkpoint.psi);
                match MotionSolution::new(model, meta, beta, scale, psi, frames, logs.clone()) {
                    Ok(sol) => Error::Diverged {
                        stage,
                        step,
                        checkpoint: Box::new(sol),
                    },
                    Err(e) => e,
                }
            }
            e => e,
        })?;
        previous = Some((cfg.stage, log.end_probe));
        logs.push(log);
    }
    let (beta, scale, psi) = params.snapshot();
    MotionSolution::new(model, meta, beta, scale, psi, frames, logs)
}

#[cfg(test)]
mod tests;
