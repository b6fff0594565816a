use super::*;
use crate::objectives::Stage;
use crate::synth::{generate, Gait, NoiseSpec, SynthCapture, SynthSpec};
use std::sync::OnceLock;

fn capture() -> &'static SynthCapture {
    static CAP: OnceLock<SynthCapture> = OnceLock::new();
    CAP.get_or_init(|| {
        generate(&SynthSpec {
            frames: 6,
            cameras: 3,
            image_size: (160, 120),
            focal: 100.0,
            gait: Gait::Walk,
            noise: NoiseSpec::none(),
            ..SynthSpec::default()
        })
        .unwrap()
    })
}

fn quick(setting: Setting) -> FitSettings {
    let mut s = FitSettings::for_setting(setting);
    s.multipliers = Some([3, 2, 2]);
    s.sampling.samples = 300;
    s.sampling.mask_cap = 400;
    s.sampling.depth_cap = 400;
    s.batch = 3;
    s.segment = 4;
    s.seed = 5;
    s
}

fn all_frames(n: usize) -> (Vec<usize>, Vec<u64>) {
    ((0..n).collect(), (0..n as u64).map(|t| 77 + t).collect())
}

#[test]
fn stage_configs_follow_multipliers() {
    let mv = FitSettings::for_setting(Setting::MvRgbd);
    let c = stage_configs(&mv, 60).unwrap();
    assert_eq!(c.each_ref().map(|c| c.steps), [600, 1500, 300]);
    assert_eq!(c.each_ref().map(|c| c.multiplier), [10, 25, 5]);
    assert_eq!(c[0].rates, mv.rates.stage1);
    assert_eq!(c[2].mode, BatchMode::Segment);
    assert_eq!(c[2].batch, mv.segment);
    let sv = FitSettings::for_setting(Setting::SvRgb);
    assert_eq!(stage_configs(&sv, 60).unwrap().map(|c| c.steps), [300, 1200, 300]);
    assert_eq!(default_multipliers(Setting::MvRgb), [10, 25, 5]);
    assert_eq!(default_multipliers(Setting::SvRgbd), [5, 20, 5]);

    let mut bad = mv.clone();
    bad.multipliers = Some([10, 0, 5]);
    assert!(matches!(stage_configs(&bad, 60), Err(Error::Config(_))));
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn stage_one_leaves_shape_and_pose_untouched() {
    let cap = capture();
    let mut s = quick(Setting::MvRgbd);
    s.stages = [true, false, false];
    let sol = fit_sequence(&cap.model, &cap.sequence, &s).unwrap();
    let init = init_field(s.seed, cap.model.joint_count(), None);
    assert!(sol.beta.iter().all(|&b| b == 0.0));
    assert_eq!(sol.psi.theta, init.theta);
    assert_ne!(sol.psi.tr, init.tr);
    assert_ne!(sol.scale, s.initial_scale);
}

#[test]
fn stage_three_leaves_scale_and_shape_untouched() {
    let cap = capture();
    let mut s = quick(Setting::MvRgbd);
    s.stages = [true, true, false];
    let start = fit_sequence(&cap.model, &cap.sequence, &s).unwrap();
    s.stages = [false, false, true];
    let sol = fit_from(&cap.model, &cap.sequence, &s, Some(&start)).unwrap();
    assert_eq!(sol.scale, start.scale);
    assert_eq!(sol.beta, start.beta);
    assert_ne!(sol.psi, start.psi);
    assert_eq!(sol.logs.len(), 3);
    sol.validate(&cap.model).unwrap();
}

#[test]
fn stages_hand_over_the_whole_state() {
    let cap = capture();
    let sol = fit_sequence(&cap.model, &cap.sequence, &quick(Setting::MvRgbd)).unwrap();
    assert_eq!(sol.logs.len(), 3);
    assert!(sol.logs[0].entry_probe.is_none());
    for k in 1..3 {
        let entry = sol.logs[k].entry_probe.unwrap();
        let prev = sol.logs[k - 1].end_probe;
        assert!((entry - prev).abs() <= 1e-6 * prev.abs().max(1.0), "stage {}: {entry} vs {prev}", k + 1);
    }
    assert_eq!(sol.logs[2].temporal_full.len(), sol.logs[2].steps);
}

#[test]
fn duplicated_views_do_not_change_the_objective() {
    let cap = capture();
    let s = quick(Setting::MvRgbd);
    let sol = fit_sequence(
        &cap.model,
        &cap.sequence,
        &FitSettings {
            stages: [true, false, false],
            ..s.clone()
        },
    )
    .unwrap();
    let mut doubled = cap.sequence.clone();
    for v in 0..cap.sequence.views.len() {
        let mut cam = cap.sequence.rig.cameras[v].clone();
        cam.id = format!("{}-copy", cam.id);
        let obs = cap.sequence.views[v]
            .iter()
            .map(|o| {
                let mut o = o.clone();
                o.view = cam.id.clone();
                o
            })
            .collect();
        doubled.rig.cameras.push(cam);
        doubled.views.push(obs);
    }
    let (f, seeds) = all_frames(cap.sequence.frames());
    for stage in [Stage::Coarse, Stage::Full] {
        let (a, ra) = stage_objective(&cap.model, &cap.sequence, &s, stage, &sol, &f, &seeds).unwrap();
        let (b, rb) = stage_objective(&cap.model, &doubled, &s, stage, &sol, &f, &seeds).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} vs {b}");
        for (x, y) in ra.iter().zip(&rb) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
        }
    }
}

#[test]
fn depth_is_ignored_without_a_depth_setting() {
    let cap = capture();
    let s = quick(Setting::MvRgb);
    let sol = MotionSolution::new(
        &cap.model,
        (s.setting, s.seed, cap.sequence.fps),
        vec![0.0; SHAPE_DIM],
        1.0,
        init_field(3, cap.model.joint_count(), None),
        cap.sequence.frames(),
        vec![],
    )
    .unwrap();
    let mut stripped = cap.sequence.clone();
    for o in stripped.views.iter_mut().flatten() {
        o.depth = None;
    }
    let (f, seeds) = all_frames(cap.sequence.frames());
    for stage in [Stage::Coarse, Stage::Full, Stage::Smooth] {
        let with = stage_objective(&cap.model, &cap.sequence, &s, stage, &sol, &f, &seeds).unwrap();
        let without = stage_objective(&cap.model, &stripped, &s, stage, &sol, &f, &seeds).unwrap();
        assert_eq!(with, without);
        assert_eq!(with.1[2], 0.0);
    }
    let rgbd = quick(Setting::MvRgbd);
    assert!(stage_objective(&cap.model, &cap.sequence, &rgbd, Stage::Full, &sol, &f, &seeds).unwrap().1[2] > 0.0);
    assert!(matches!(fit_sequence(&cap.model, &stripped, &rgbd), Err(Error::Config(_))));
}

#[test]
fn fits_are_reproducible_and_thread_independent() {
    let cap = capture();
    let s = quick(Setting::SvRgbd);
    let a = fit_sequence(&cap.model, &cap.sequence, &s).unwrap();
    let b = fit_sequence(&cap.model, &cap.sequence, &s).unwrap();
    assert_eq!(a, b);
    let c = fit_sequence(&cap.model, &cap.sequence, &FitSettings { threads: 2, ..s.clone() }).unwrap();
    assert_eq!(a, c);
    let d = fit_sequence(&cap.model, &cap.sequence, &FitSettings { seed: 6, ..s }).unwrap();
    assert_ne!(a.psi, d.psi);
}

#[test]
fn stage_one_halves_the_mask_term() {
    let cap = capture();
    let mut s = quick(Setting::MvRgbd);
    s.multipliers = Some([40, 1, 1]);
    s.stages = [true, false, false];
    let sol = fit_sequence(&cap.model, &cap.sequence, &s).unwrap();
    let start = MotionSolution::new(
        &cap.model,
        (s.setting, s.seed, cap.sequence.fps),
        vec![0.0; SHAPE_DIM],
        s.initial_scale,
        init_field(s.seed, cap.model.joint_count(), None),
        cap.sequence.frames(),
        vec![],
    )
    .unwrap();
    let (f, seeds) = all_frames(cap.sequence.frames());
    let before = stage_objective(&cap.model, &cap.sequence, &s, Stage::Coarse, &start, &f, &seeds).unwrap().1[0];
    let after = stage_objective(&cap.model, &cap.sequence, &s, Stage::Coarse, &sol, &f, &seeds).unwrap().1[0];
    assert!(after <= 0.5 * before, "mask {before} -> {after}");
}

#[test]
fn solutions_validate_against_their_field() {
    let cap = capture();
    let mut s = quick(Setting::MvRgb);
    s.stages = [true, false, false];
    let mut sol = fit_sequence(&cap.model, &cap.sequence, &s).unwrap();
    sol.validate(&cap.model).unwrap();
    sol.frames[2].translation[0] += 0.1;
    assert!(sol.validate(&cap.model).is_err());
    sol.frames[2].translation[0] -= 0.1;
    sol.joints.pop();
    assert!(sol.validate(&cap.model).is_err());
}

#[test]
fn bad_settings_are_rejected() {
    let cap = capture();
    let mut s = quick(Setting::SvRgb);
    s.view = 9;
    assert!(fit_sequence(&cap.model, &cap.sequence, &s).is_err());
    let mut s = quick(Setting::MvRgb);
    s.rates.stage2.shape = f64::NAN;
    assert!(matches!(fit_sequence(&cap.model, &cap.sequence, &s), Err(Error::Config(_))));
    let mut s = quick(Setting::MvRgb);
    s.initial_scale = 0.0;
    assert!(matches!(s.validate(), Err(Error::Config(_))));
}
