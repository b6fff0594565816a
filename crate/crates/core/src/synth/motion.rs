//! Scripted gaits. Legs are posed by inverse kinematics from world-space paw
//! trajectories so stance paws stay planted.

use super::template::{CHEST, HEAD, LEGS, PELVIS, TAIL, TAIL_SEGMENTS};
use super::{Gait, SynthSpec};
use crate::error::Result;
use crate::linalg::{add3, axis_angle, cross3, dot3, mat_mul, mat_vec, norm3, scale3, sub3, transpose, Mat3, Vec3};
use crate::model::{forward_kinematics_with, shaped_joints, BodyModel, BodyState, FramePose, ROT6D_IDENTITY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Height in meters to which a swinging paw is lifted before it moves.
const SWING_LIFT: f64 = 0.05;
/// Fraction of the swing spent lifting (and, symmetrically, lowering).
const LIFT_FRACTION: f64 = 0.2;
/// Half-extent of the straight root path.
const PATH_HALF: f64 = 0.7;

#[derive(Debug, Clone, Copy)]
struct GaitParams {
    freq: f64,
    duty: f64,
    /// Phase offsets in `LEGS` order (LF, RF, LH, RH).
    offsets: [f64; 4],
    hop: f64,
    sway: f64,
}

fn gait_params(g: Gait) -> Option<GaitParams> {
    match g {
        Gait::Idle => None,
        Gait::Walk => Some(GaitParams {
            freq: 0.75,
            duty: 0.75,
            offsets: [0.25, 0.75, 0.0, 0.5],
            hop: 0.0,
            sway: 1.0,
        }),
        Gait::Trot => Some(GaitParams {
            freq: 1.0,
            duty: 0.5,
            offsets: [0.0, 0.5, 0.5, 0.0],
            hop: 0.0,
            sway: 0.6,
        }),
        Gait::Jump => Some(GaitParams {
            freq: 0.7,
            duty: 0.6,
            offsets: [0.0; 4],
            hop: 0.08,
            sway: 0.3,
        }),
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Lift profile over a swing: up during the first `LIFT_FRACTION`, flat,
/// then down.
fn lift_profile(u: f64) -> f64 {
    smoothstep(u / LIFT_FRACTION).min(smoothstep((1.0 - u) / LIFT_FRACTION))
}

fn progress_profile(u: f64) -> f64 {
    smoothstep((u - LIFT_FRACTION) / (1.0 - 2.0 * LIFT_FRACTION))
}

fn rz(a: f64) -> Mat3<f64> {
    axis_angle([0.0, 0.0, 1.0], a)
}

fn to6d(r: &Mat3<f64>) -> [f64; 6] {
    [r[0][0], r[1][0], r[2][0], r[0][1], r[1][1], r[2][1]]
}

fn normalize(a: Vec3<f64>) -> Vec3<f64> {
    scale3(a, 1.0 / norm3(a))
}

/// Minimal rotation taking direction `a` onto direction `b`.
fn align(a: Vec3<f64>, b: Vec3<f64>) -> Mat3<f64> {
    let (a, b) = (normalize(a), normalize(b));
    let v = cross3(a, b);
    let c = dot3(a, b);
    let s = norm3(v);
    if s < 1e-12 {
        return crate::linalg::identity3();
    }
    axis_angle(scale3(v, 1.0 / s), s.atan2(c))
}

fn set_local(theta: &mut [f64], j: usize, r: &Mat3<f64>) {
    theta[6 * j..6 * j + 6].copy_from_slice(&to6d(r));
}

/// Ground-truth motion for a template.
pub fn synth_motion(model: &BodyModel, spec: &SynthSpec) -> Result<BodyState> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x00d0_9a17);
    let beta: Vec<f64> = (0..crate::model::SHAPE_DIM)
        .map(|_| spec.shape_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let heading: f64 = rng.random_range(-0.5..0.5);
    let center = [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)];
    let s = spec.scale;
    let rest = shaped_joints(model, &beta);
    let frames = spec.frames;
    let duration = (frames.max(2) - 1) as f64 / spec.fps;
    let gp = gait_params(spec.gait);

    let leg_len = s * (rest[LEGS[0]][2] - rest[LEGS[0] + 3][2]);
    let speed = gp.map_or(0.0, |g| (0.45 * leg_len * g.freq).min(2.0 * PATH_HALF / duration));
    let dir = [heading.cos(), heading.sin(), 0.0];
    let r_head = rz(heading);
    let root_z = s * rest[0][2];

    let root_at = |time: f64| -> Vec3<f64> {
        let d = speed * (time - 0.5 * duration);
        [center[0] + dir[0] * d, center[1] + dir[1] * d, root_z]
    };
    // paw ground point under the body at a given time
    let nominal = |f: usize, time: f64| -> Vec3<f64> {
        let paw = rest[LEGS[f] + 3];
        let off = mat_vec(&r_head, scale3(sub3(paw, rest[0]), s));
        let r = root_at(time);
        [r[0] + off[0], r[1] + off[1], s * paw[2]]
    };

    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let time = t as f64 / spec.fps;
        let mut theta = ROT6D_IDENTITY.repeat(model.joint_count());
        let mut root = root_at(time);
        let mut targets = [[0.0; 3]; 4];
        match gp {
            None => {
                for (f, tg) in targets.iter_mut().enumerate() {
                    *tg = nominal(f, time);
                }
            }
            Some(g) => {
                let w = 2.0 * std::f64::consts::PI * g.freq * time;
                for (f, tg) in targets.iter_mut().enumerate() {
                    let x = g.freq * time + g.offsets[f];
                    let c = x.floor();
                    let u = x - c;
                    let plant = |cyc: f64| nominal(f, (cyc + 0.5 * g.duty - g.offsets[f]) / g.freq);
                    *tg = if u < g.duty {
                        plant(c)
                    } else {
                        let us = (u - g.duty) / (1.0 - g.duty);
                        let (a, b) = (plant(c), plant(c + 1.0));
                        let p = progress_profile(us);
                        let lift = (SWING_LIFT + g.hop) * lift_profile(us);
                        [a[0] + (b[0] - a[0]) * p, a[1] + (b[1] - a[1]) * p, a[2] + lift]
                    };
                }
                if g.hop > 0.0 {
                    let u = g.freq * time + g.offsets[0];
                    let u = u - u.floor();
                    if u >= g.duty {
                        root[2] += g.hop * lift_profile((u - g.duty) / (1.0 - g.duty));
                    }
                } else {
                    root[2] += -0.004 * (2.0 * w).cos() * g.sway;
                }
                // passive motion of spine, head and tail
                set_local(&mut theta, 3, &rz(0.03 * g.sway * w.sin()));
                set_local(&mut theta, HEAD - 1, &axis_angle([0.0, 1.0, 0.0], 0.05 * g.sway * (2.0 * w).sin()));
                for k in 0..TAIL_SEGMENTS {
                    set_local(&mut theta, TAIL + k, &rz(0.12 * g.sway * (w - 0.6 * k as f64).sin()));
                }
            }
        }
        let orientation = to6d(&r_head);
        let r0 = mat_vec(&r_head, rest[0]);
        let translation = sub3(root, scale3(r0, s));

        let fk = forward_kinematics_with(model, &rest, &theta, &orientation)?;
        let world = |p: Vec3<f64>| add3(scale3(p, s), translation);
        for (f, &first) in LEGS.iter().enumerate() {
            let par = if f < 2 { CHEST } else { PELVIS };
            let r_par = fk[par].rot;
            let [js, je, jw, jp] = [rest[first], rest[first + 1], rest[first + 2], rest[first + 3]];
            let shoulder = world(fk[first].trans);
            let l1 = s * norm3(sub3(je, js));
            let l2 = s * norm3(sub3(jw, je));
            let meta = scale3(mat_vec(&r_par, sub3(jp, jw)), s);
            let wrist = sub3(targets[f], meta);
            // two-bone solve in the plane holding the rest-pose bend
            let sw = sub3(wrist, shoulder);
            let d = norm3(sw).clamp((l1 - l2).abs() * 1.001 + 1e-9, (l1 + l2) * 0.9999);
            let e = normalize(sw);
            let wrist = add3(shoulder, scale3(e, d));
            let rest_sw = sub3(jw, js);
            let rest_se = sub3(je, js);
            let pole_rest = sub3(rest_se, scale3(rest_sw, dot3(rest_se, rest_sw) / dot3(rest_sw, rest_sw)));
            let pole = mat_vec(&r_par, pole_rest);
            let pp = normalize(sub3(pole, scale3(e, dot3(pole, e))));
            let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
            let hgt = (l1 * l1 - a * a).max(0.0).sqrt();
            let elbow = add3(shoulder, add3(scale3(e, a), scale3(pp, hgt)));

            let ra = align(mat_vec(&r_par, rest_se), sub3(elbow, shoulder));
            let w_up = mat_mul(&ra, &r_par);
            set_local(&mut theta, first, &mat_mul(&transpose(&r_par), &w_up));
            let rb = align(mat_vec(&w_up, sub3(jw, je)), sub3(wrist, elbow));
            let w_mid = mat_mul(&rb, &w_up);
            set_local(&mut theta, first + 1, &mat_mul(&transpose(&w_up), &w_mid));
            let rc = align(mat_vec(&w_mid, sub3(jp, jw)), meta);
            let w_low = mat_mul(&rc, &w_mid);
            set_local(&mut theta, first + 2, &mat_mul(&transpose(&w_mid), &w_low));
        }
        out.push(FramePose {
            theta,
            translation,
            orientation,
        });
    }
    Ok(BodyState {
        beta,
        scale: s,
        frames: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pose_joints;
    use crate::synth::template::{make_template, PAWS};

    #[test]
    fn stance_paws_reach_their_targets() {
        let t = make_template(4, 0.35).unwrap();
        let model = BodyModel::new(t.assets).unwrap();
        let spec = SynthSpec {
            frames: 30,
            gait: Gait::Walk,
            ..SynthSpec::default()
        };
        let st = synth_motion(&model, &spec).unwrap();
        for f in &st.frames {
            let j = pose_joints(&model, &st.beta, st.scale, f).unwrap();
            for &p in &PAWS {
                assert!(j[p as usize][2] > -1e-9);
            }
        }
    }

    #[test]
    fn align_maps_direction() {
        let r = align([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]);
        let v = mat_vec(&r, [1.0, 0.0, 0.0]);
        let s = 0.5f64.sqrt();
        assert!((v[1] - s).abs() < 1e-12 && (v[2] - s).abs() < 1e-12 && v[0].abs() < 1e-12);
    }
}
