use super::batch::{sample_batch, BatchMode};
use super::{FitSettings, MotionSolution, StageRates};
use crate::ad::Var;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::field::{embed, eval_field_with, FieldWeights, EMBED_DIM, THETA_HIDDEN, TR_HIDDEN, TR_OUT};
use crate::model::{keypoint_positions, pose_joints, pose_mesh, template_plan, BodyModel};
use crate::objectives::{
    active_terms, cse_loss, depth_loss, keypoint_loss, leg_cross_loss, mask_loss, mean_present, pose_prior_loss,
    shape_prior_loss, temporal_loss, LossWeights, PreparedFrame, SampleConfig, Sequence, Stage, TERM_NAMES,
};
use crate::optim::{adam_step, group_gradient, OptState, ParamGroup};
use crate::real::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const SCALE: usize = 0;
const SHAPE: usize = 1;
const TR: usize = 2;
const THETA: usize = 3;
const GROUP_NAMES: [&str; 4] = ["scale", "shape", "field_tr", "field_theta"];
/// Consecutive non-finite steps tolerated before acting.
const NON_FINITE_LIMIT: usize = 3;
const PROBE_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    /// Steps per frame.
    pub multiplier: usize,
    /// Total optimizer steps, `multiplier × T`.
    pub steps: usize,
    pub rates: StageRates,
    /// Frames per step.
    pub batch: usize,
    pub mode: BatchMode,
    /// Terms in `TERM_NAMES` order.
    pub active: [bool; 7],
}

impl StageConfig {
    pub fn trainable(&self) -> [bool; 4] {
        self.rates.as_array().map(|r| r > 0.0)
    }
}

/// The three stage configurations for a `frames`-long sequence.
pub fn stage_configs(settings: &FitSettings, frames: usize) -> Result<[StageConfig; 3]> {
    settings.validate()?;
    let m = settings.multipliers();
    let depth = settings.setting.uses_depth();
    let mut s1 = settings.rates.stage1;
    if settings.stage1_trains_shape && s1.shape == 0.0 {
        s1.shape = settings.rates.stage2.shape;
    }
    let make = |stage: Stage, k: usize, rates: StageRates, batch: usize, mode: BatchMode| StageConfig {
        stage,
        multiplier: m[k],
        steps: m[k] * frames,
        rates,
        batch: batch.min(frames),
        mode,
        active: active_terms(stage, depth),
    };
    Ok([
        make(Stage::Coarse, 0, s1, settings.batch, BatchMode::Uniform),
        make(Stage::Full, 1, settings.rates.stage2, settings.batch, BatchMode::Uniform),
        make(Stage::Smooth, 2, settings.rates.stage3, settings.segment, BatchMode::Segment),
    ])
}

/// Per-stage record of the optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: u8,
    pub steps: usize,
    pub rates: StageRates,
    /// Objective of each finite step's batch.
    pub loss: Vec<f64>,
    /// Batch means of the unweighted terms, `TERM_NAMES` order.
    pub terms: Vec<[f64; 7]>,
    /// Steps whose loss or gradient was not finite.
    pub skipped: Vec<usize>,
    pub halved: bool,
    /// Objective of the previous stage on the probe batch, evaluated at this
    /// stage's starting point.
    pub entry_probe: Option<f64>,
    /// This stage's objective on the probe batch after the last step.
    pub end_probe: f64,
    /// Temporal loss over the whole sequence after each step (stage 3).
    pub temporal_full: Vec<f64>,
}

/// Optimizer groups in fixed order: scale, shape, translation/orientation
/// network, pose network.
pub(crate) struct Params {
    groups: Vec<ParamGroup>,
    tr_sizes: Vec<usize>,
    theta_sizes: Vec<usize>,
}

impl Params {
    pub(crate) fn new(beta: Vec<f64>, scale: f64, psi: FieldWeights) -> Self {
        let groups = vec![
            ParamGroup::new(GROUP_NAMES[SCALE], vec![scale], 0.0, false),
            ParamGroup::new(GROUP_NAMES[SHAPE], beta, 0.0, false),
            ParamGroup::new(GROUP_NAMES[TR], psi.tr.params, 0.0, false),
            ParamGroup::new(GROUP_NAMES[THETA], psi.theta.params, 0.0, false),
        ];
        Params {
            groups,
            tr_sizes: psi.tr.sizes,
            theta_sizes: psi.theta.sizes,
        }
    }

    fn psi(&self) -> FieldWeights {
        FieldWeights {
            tr: crate::field::Mlp {
                sizes: self.tr_sizes.clone(),
                params: self.groups[TR].values.clone(),
            },
            theta: crate::field::Mlp {
                sizes: self.theta_sizes.clone(),
                params: self.groups[THETA].values.clone(),
            },
        }
    }

    pub(crate) fn snapshot(&self) -> (Vec<f64>, f64, FieldWeights) {
        (self.groups[SHAPE].values.clone(), self.groups[SCALE].values[0], self.psi())
    }

    fn configure(&mut self, rates: &StageRates) {
        for (g, r) in self.groups.iter_mut().zip(rates.as_array()) {
            g.rate = r;
            g.trainable = r > 0.0;
        }
    }
}

/// Everything the objective needs besides the parameters.
pub(crate) struct Problem<'a> {
    model: &'a BodyModel,
    seq: &'a Sequence,
    prepared: Vec<Vec<PreparedFrame>>,
    use_depth: bool,
    weights: LossWeights,
    sampling: SampleConfig,
    frames: usize,
    seed: u64,
    setting: crate::objectives::Setting,
    tr_sizes: Vec<usize>,
    theta_sizes: Vec<usize>,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(
        model: &'a BodyModel,
        seq: &'a Sequence,
        prepared: Vec<Vec<PreparedFrame>>,
        use_depth: bool,
        settings: &FitSettings,
    ) -> Self {
        Problem {
            model,
            seq,
            prepared,
            use_depth,
            weights: settings.weights,
            sampling: settings.sampling,
            frames: seq.frames(),
            seed: settings.seed,
            setting: settings.setting,
            tr_sizes: vec![EMBED_DIM, TR_HIDDEN, TR_HIDDEN, TR_OUT],
            theta_sizes: vec![EMBED_DIM, THETA_HIDDEN, THETA_HIDDEN, 6 * model.joint_count()],
        }
    }

    fn pose_at<T: Real>(&self, g: &[&[T]], t: usize) -> crate::model::FramePose<T> {
        eval_field_with((&self.tr_sizes, g[TR]), (&self.theta_sizes, g[THETA]), &embed(t, self.frames))
    }

    fn cameras(&self) -> &[Camera] {
        &self.seq.rig.cameras
    }

    /// Weighted per-frame terms of `stage`, each divided by `batch`, plus
    /// the unweighted values. The shape prior and temporal term are not
    /// per-frame and are handled separately.
    fn frame_terms<T: Real>(
        &self,
        stage: Stage,
        t: usize,
        plan_seed: u64,
        g: &[&[T]],
        batch: usize,
    ) -> Result<(Vec<(&'static str, T)>, [f64; 7])> {
        let m = self.model;
        let on = active_terms(stage, self.use_depth);
        let w = self.weights.vector();
        let pose = self.pose_at(g, t);
        let mesh = pose_mesh(m, g[SHAPE], g[SCALE][0], &pose)?;
        let plan = template_plan(m, self.sampling.samples, self.sampling.leg_boost, plan_seed)?;
        let samples = plan.apply(&mesh.vertices, &m.faces);
        let kps = keypoint_positions(m, &mesh);
        let cams = self.cameras();
        let mut values: [Option<T>; 7] = [None; 7];
        values[0] = mean_present(
            cams.iter()
                .zip(&self.prepared)
                .map(|(c, p)| p[t].mask.as_ref().and_then(|tree| mask_loss(c, tree, &samples))),
        );
        values[1] = mean_present(
            cams.iter()
                .zip(&self.seq.views)
                .map(|(c, o)| keypoint_loss(c, &o[t], &kps, self.sampling.keypoint_threshold)),
        );
        if on[2] {
            values[2] = mean_present(
                self.prepared
                    .iter()
                    .map(|p| p[t].depth.as_ref().and_then(|tree| depth_loss(tree, &samples))),
            );
        }
        if on[3] {
            values[3] = mean_present(
                cams.iter()
                    .zip(&self.seq.views)
                    .map(|(c, o)| cse_loss(c, &o[t].correspondences, &mesh.vertices)),
            );
        }
        if on[4] {
            values[4] = Some(leg_cross_loss(&mesh.joints, &m.foot_pairs, self.weights.delta));
        }
        if on[5] {
            values[5] = Some(pose_prior_loss(&pose.theta, m));
        }
        let inv = 1.0 / batch as f64;
        let mut raw = [0.0; 7];
        let mut out = Vec::with_capacity(7);
        for k in 0..6 {
            if let (true, Some(v)) = (on[k], values[k]) {
                raw[k] = v.value();
                out.push((TERM_NAMES[k], v * T::lit(w[k] * inv)));
            }
        }
        Ok((out, raw))
    }

    fn shape_term<T: Real>(&self, stage: Stage, g: &[&[T]]) -> Option<T> {
        (stage != Stage::Coarse).then(|| {
            shape_prior_loss(g[SHAPE], self.model, self.weights.w_body, self.weights.w_limb) * T::lit(self.weights.prior)
        })
    }

    fn temporal_term<T: Real>(&self, frames: &[usize], g: &[&[T]]) -> Result<T> {
        let joints = frames
            .iter()
            .map(|&t| {
                let pose = self.pose_at(g, t);
                pose_joints(self.model, g[SHAPE], g[SCALE][0], &pose)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(temporal_loss(&joints, self.cameras()))
    }

    /// Stage objective in plain floats over fixed frames and plan seeds.
    fn objective(&self, stage: Stage, params: &Params, frames: &[usize], seeds: &[u64]) -> Result<f64> {
        Ok(self.objective_terms(stage, params, frames, seeds)?.0)
    }

    /// Total plus the unweighted terms, per-frame ones averaged over `frames`.
    pub(crate) fn objective_terms(
        &self,
        stage: Stage,
        params: &Params,
        frames: &[usize],
        seeds: &[u64],
    ) -> Result<(f64, [f64; 7])> {
        let g: Vec<&[f64]> = params.groups.iter().map(|g| g.values.as_slice()).collect();
        let mut total = 0.0;
        let mut raw = [0.0; 7];
        let n = frames.len() as f64;
        for (&t, &s) in frames.iter().zip(seeds) {
            let (terms, r) = self.frame_terms(stage, t, s, &g, frames.len())?;
            for (_, v) in terms {
                total += v;
            }
            for (a, b) in raw.iter_mut().zip(r) {
                *a += b / n;
            }
        }
        if let Some(v) = self.shape_term(stage, &g) {
            total += v;
        }
        if stage == Stage::Smooth {
            let v = self.temporal_term(frames, &g)?;
            raw[6] = v;
            total += self.weights.temporal * v;
        }
        Ok((total, raw))
    }

    fn probe(&self) -> (Vec<usize>, Vec<u64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ PROBE_SEED);
        let frames = sample_batch(self.frames, 8, BatchMode::Uniform, &mut rng);
        let seeds = frames.iter().map(|_| rng.random()).collect();
        (frames, seeds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GuardAction {
    Continue,
    Halve,
    Abort,
}

/// Counts consecutive bad steps: the first run of `NON_FINITE_LIMIT` halves
/// the rates, the second aborts.
#[derive(Debug, Default)]
struct Guard {
    run: usize,
    halved: bool,
}

impl Guard {
    fn record(&mut self, finite: bool) -> GuardAction {
        if finite {
            self.run = 0;
            return GuardAction::Continue;
        }
        self.run += 1;
        if self.run < NON_FINITE_LIMIT {
            GuardAction::Continue
        } else if self.halved {
            GuardAction::Abort
        } else {
            self.halved = true;
            self.run = 0;
            GuardAction::Halve
        }
    }
}

struct StepResult {
    value: f64,
    grads: Vec<Vec<f64>>,
    raw: [f64; 7],
}

fn add_into(acc: &mut [Vec<f64>], g: &[Vec<f64>]) {
    for (a, b) in acc.iter_mut().zip(g) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

/// One step's objective and gradient. Per-frame contributions are summed in
/// batch order, then the shape prior, then the temporal term.
fn evaluate_step(
    p: &Problem,
    stage: Stage,
    groups: &[ParamGroup],
    frames: &[usize],
    seeds: &[u64],
    threads: usize,
) -> Result<StepResult> {
    let per_frame = |i: usize| -> Result<(crate::optim::Evaluation, [f64; 7])> {
        let mut raw = [0.0; 7];
        let e = group_gradient(groups, |g| {
            let (terms, r) = p.frame_terms::<Var>(stage, frames[i], seeds[i], g, frames.len())?;
            raw = r;
            Ok(terms)
        })?;
        Ok((e, raw))
    };
    let results: Vec<Result<(crate::optim::Evaluation, [f64; 7])>> = if threads <= 1 || frames.len() < 2 {
        (0..frames.len()).map(per_frame).collect()
    } else {
        let chunk = frames.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..frames.len())
                .collect::<Vec<_>>()
                .chunks(chunk)
                .map(|idx| {
                    let idx = idx.to_vec();
                    let f = &per_frame;
                    s.spawn(move || idx.into_iter().map(f).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    };
    let mut value = 0.0;
    let mut grads: Vec<Vec<f64>> = groups.iter().map(|g| vec![0.0; g.values.len()]).collect();
    let mut raw = [0.0; 7];
    for r in results {
        let (e, fr) = r?;
        value += e.value;
        add_into(&mut grads, &e.grads);
        for k in 0..7 {
            raw[k] += fr[k] / frames.len() as f64;
        }
    }
    if stage != Stage::Coarse {
        let e = group_gradient(groups, |g| Ok(vec![("prior", p.shape_term(stage, g).expect("stage uses the prior"))]))?;
        value += e.value;
        add_into(&mut grads, &e.grads);
        raw[5] += shape_prior_loss(&groups[SHAPE].values, p.model, p.weights.w_body, p.weights.w_limb);
    }
    if stage == Stage::Smooth {
        let mut tv = 0.0;
        let e = group_gradient(groups, |g| {
            let v = p.temporal_term(frames, g)?;
            tv = v.value();
            Ok(vec![("temporal", v * Var::lit(p.weights.temporal))])
        })?;
        value += e.value;
        add_into(&mut grads, &e.grads);
        raw[6] = tv;
    }
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { term: "total".into() });
    }
    Ok(StepResult { value, grads, raw })
}

/// Runs one stage for exactly `cfg.steps` optimizer steps.
pub(crate) fn run_stage(
    p: &Problem,
    cfg: &StageConfig,
    params: &mut Params,
    previous: Option<(Stage, f64)>,
    threads: usize,
) -> Result<StageLog> {
    params.configure(&cfg.rates);
    let (probe_frames, probe_seeds) = p.probe();
    let entry_probe = match previous {
        Some((stage, _)) => Some(p.objective(stage, params, &probe_frames, &probe_seeds)?),
        None => None,
    };
    let mut opt = OptState::new(&params.groups, cfg.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ ((cfg.stage.id() as u64) << 56));
    let mut log = StageLog {
        stage: cfg.stage.id(),
        steps: cfg.steps,
        rates: cfg.rates,
        loss: Vec::with_capacity(cfg.steps),
        terms: Vec::with_capacity(cfg.steps),
        skipped: Vec::new(),
        halved: false,
        entry_probe,
        end_probe: 0.0,
        temporal_full: Vec::new(),
    };
    let all: Vec<usize> = (0..p.frames).collect();
    let mut last_good = params.groups.clone();
    let mut guard = Guard::default();
    for step in 0..cfg.steps {
        let frames = sample_batch(p.frames, cfg.batch, cfg.mode, &mut rng);
        let seeds: Vec<u64> = frames.iter().map(|_| rng.random()).collect();
        let action = match evaluate_step(p, cfg.stage, &params.groups, &frames, &seeds, threads) {
            Ok(r) => {
                last_good.clone_from(&params.groups);
                adam_step(&mut opt, &mut params.groups, &r.grads)?;
                log.loss.push(r.value);
                log.terms.push(r.raw);
                guard.record(true)
            }
            Err(e @ (Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. } | Error::InvalidRotation(_))) => {
                log::warn!("stage {} step {step}: {e}", cfg.stage.id());
                log.skipped.push(step);
                opt.step += 1;
                guard.record(false)
            }
            Err(e) => return Err(e),
        };
        match action {
            GuardAction::Continue => {}
            GuardAction::Halve => {
                log::warn!("stage {}: halving all rates after {NON_FINITE_LIMIT} bad steps", cfg.stage.id());
                params.groups.clone_from(&last_good);
                for g in params.groups.iter_mut() {
                    g.rate *= 0.5;
                }
                log.halved = true;
            }
            GuardAction::Abort => {
                params.groups.clone_from(&last_good);
                let (beta, scale, psi) = params.snapshot();
                return Err(Error::Diverged {
                    stage: cfg.stage.id(),
                    step,
                    checkpoint: Box::new(MotionSolution {
                        setting: p.setting,
                        seed: p.seed,
                        fps: p.seq.fps,
                        beta,
                        scale,
                        psi,
                        frames: Vec::new(),
                        joints: Vec::new(),
                        logs: Vec::new(),
                    }),
                });
            }
        }
        if cfg.stage == Stage::Smooth {
            let g: Vec<&[f64]> = params.groups.iter().map(|g| g.values.as_slice()).collect();
            log.temporal_full.push(p.temporal_term(&all, &g)?);
        }
        if step % 100 == 0 || step + 1 == cfg.steps {
            log::debug!(
                "stage {} step {step}/{}: loss {:.4}",
                cfg.stage.id(),
                cfg.steps,
                log.loss.last().copied().unwrap_or(f64::NAN)
            );
        }
    }
    if log.halved {
        let a: Vec<f64> = params.groups.iter().map(|g| g.rate).collect();
        log.rates = StageRates {
            scale: a[SCALE],
            shape: a[SHAPE],
            field_tr: a[TR],
            field_theta: a[THETA],
        };
    }
    log.end_probe = p.objective(cfg.stage, params, &probe_frames, &probe_seeds)?;
    Ok(log)
}

/// Adds seeded Gaussian noise to the hidden layers of both networks. The
/// output biases are left alone.
pub fn perturb_field(psi: &FieldWeights, sigma: f64, seed: u64) -> FieldWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma.abs()).expect("finite sigma");
    let mut out = psi.clone();
    for mlp in [&mut out.tr, &mut out.theta] {
        let keep = mlp.output_dim();
        let len = mlp.params.len();
        for x in &mut mlp.params[..len - keep] {
            *x += n.sample(&mut rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_halves_once_then_aborts() {
        let mut g = Guard::default();
        assert_eq!(g.record(false), GuardAction::Continue);
        assert_eq!(g.record(false), GuardAction::Continue);
        assert_eq!(g.record(true), GuardAction::Continue);
        assert_eq!(g.record(false), GuardAction::Continue);
        assert_eq!(g.record(false), GuardAction::Continue);
        assert_eq!(g.record(false), GuardAction::Halve);
        assert_eq!(g.record(false), GuardAction::Continue);
        assert_eq!(g.record(true), GuardAction::Continue);
        assert_eq!(g.record(false), GuardAction::Continue);
        assert_eq!(g.record(false), GuardAction::Continue);
        assert_eq!(g.record(false), GuardAction::Abort);
    }
}
