//! Procedural quadruped template.
//!
//! World axes: x forward, y left, z up; the rest pose stands on z = 0.

use crate::error::{Error, Result};
use crate::linalg::{add3, cross3, dot3, norm3, scale3, sub3};
use crate::model::{Anchor, GaussianPrior, KeypointDef, SkinWeights, TemplateAssets, MAX_INFLUENCES, SHAPE_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAIL_SEGMENTS: usize = 7;
pub const JOINTS: usize = 28 + TAIL_SEGMENTS;

pub const ROOT: usize = 0;
pub const PELVIS: usize = 2;
pub const CHEST: usize = 4;
pub const HEAD: usize = 7;
/// First joint of each leg (shoulder or hip); each leg has 4 joints.
pub const LEG_LF: usize = 12;
pub const LEG_RF: usize = 16;
pub const LEG_LH: usize = 20;
pub const LEG_RH: usize = 24;
pub const TAIL: usize = 28;
pub const LEGS: [usize; 4] = [LEG_LF, LEG_RF, LEG_LH, LEG_RH];
pub const PAWS: [u32; 4] = [15, 19, 23, 27];

/// Shape coefficients that change leg proportions.
pub const LIMB_MODES: [usize; 3] = [2, 3, 8];

/// Template plus a few constructive measurements.
#[derive(Debug, Clone)]
pub struct SynthTemplate {
    pub assets: TemplateAssets,
    /// Height of the withers above the floor in the rest pose.
    pub shoulder_height: f64,
    /// Vertex at the top of the withers.
    pub withers_vertex: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Part {
    Torso,
    Head,
    Leg(usize),
    Tail,
    Ear(usize),
}

struct Station {
    center: [f64; 3],
    ru: f64,
    rv: f64,
}

#[derive(Default)]
struct Builder {
    verts: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
    vpart: Vec<Option<Part>>,
    fpart: Vec<Option<Part>>,
}

struct Loft {
    rings: Vec<u32>,
    apex_end: u32,
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    scale3(a, 1.0 / norm3(a))
}

impl Builder {
    /// Tube through `stations`; `hint` fixes the ring's second axis.
    fn loft(&mut self, part: Part, st: &[Station], hint: [f64; 3], m: usize, caps: (f64, f64)) -> Loft {
        let n = st.len();
        let mut rings = Vec::with_capacity(n);
        let mut tangents = Vec::with_capacity(n);
        for k in 0..n {
            let a = st[k.saturating_sub(1)].center;
            let b = st[(k + 1).min(n - 1)].center;
            let t = normalize(sub3(b, a));
            tangents.push(t);
            let v = normalize(sub3(hint, scale3(t, dot3(hint, t))));
            let u = cross3(v, t);
            rings.push(self.verts.len() as u32);
            for i in 0..m {
                let ang = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                let p = add3(
                    st[k].center,
                    add3(scale3(u, st[k].ru * ang.cos()), scale3(v, st[k].rv * ang.sin())),
                );
                self.verts.push(p);
                self.vpart.push(Some(part));
            }
        }
        for k in 0..n - 1 {
            let (r0, r1) = (rings[k], rings[k + 1]);
            for i in 0..m as u32 {
                let j = (i + 1) % m as u32;
                self.face(part, [r0 + i, r1 + i, r1 + j]);
                self.face(part, [r0 + i, r1 + j, r0 + j]);
            }
        }
        let start = self.apex(part, sub3(st[0].center, scale3(tangents[0], caps.0)));
        for i in 0..m as u32 {
            self.face(part, [start, rings[0] + (i + 1) % m as u32, rings[0] + i]);
        }
        let apex_end = self.apex(part, add3(st[n - 1].center, scale3(tangents[n - 1], caps.1)));
        for i in 0..m as u32 {
            self.face(part, [apex_end, rings[n - 1] + i, rings[n - 1] + (i + 1) % m as u32]);
        }
        Loft { rings, apex_end }
    }

    fn apex(&mut self, part: Part, p: [f64; 3]) -> u32 {
        self.verts.push(p);
        self.vpart.push(Some(part));
        self.verts.len() as u32 - 1
    }

    fn face(&mut self, part: Part, f: [u32; 3]) {
        self.faces.push(f);
        self.fpart.push(Some(part));
    }
}

/// Piecewise-linear resampling of control stations into `n` stations.
fn resample(ctrl: &[([f64; 3], f64, f64)], n: usize) -> Vec<Station> {
    let mut cum = vec![0.0];
    for w in ctrl.windows(2) {
        cum.push(cum.last().unwrap() + norm3(sub3(w[1].0, w[0].0)));
    }
    let total = *cum.last().unwrap();
    (0..n)
        .map(|i| {
            let s = total * i as f64 / (n - 1) as f64;
            let k = (cum.partition_point(|&c| c <= s).max(1) - 1).min(ctrl.len() - 2);
            let f = ((s - cum[k]) / (cum[k + 1] - cum[k])).clamp(0.0, 1.0);
            let (a, b) = (&ctrl[k], &ctrl[k + 1]);
            Station {
                center: add3(a.0, scale3(sub3(b.0, a.0), f)),
                ru: a.1 + (b.1 - a.1) * f,
                rv: a.2 + (b.2 - a.2) * f,
            }
        })
        .collect()
}

fn seg_dist(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = sub3(b, a);
    let l2 = dot3(ab, ab);
    let t = if l2 > 0.0 {
        (dot3(sub3(p, a), ab) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm3(sub3(p, add3(a, scale3(ab, t))))
}

/// Builds a quadruped whose rest withers height is `shoulder_height` meters.
/// The seed varies body proportions; topology is fixed.
pub fn make_template(seed: u64, shoulder_height: f64) -> Result<SynthTemplate> {
    if !(shoulder_height > 0.0) || !shoulder_height.is_finite() {
        return Err(Error::Config(format!("shoulder height must be positive, got {shoulder_height}")));
    }
    let h = shoulder_height;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jit = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let body_len = 1.15 * h * jit(0.9, 1.1);
    let girth = jit(0.9, 1.1);
    let leg_thick = jit(0.9, 1.1);
    let head_size = jit(0.9, 1.1);
    let tail_len = jit(0.8, 1.2);

    let rz = 0.17 * h * girth;
    let ry = 0.13 * h * girth;
    let zc = h - rz;
    let lb = body_len;
    let rp = 0.05 * h;
    let x_chest = 0.4 * lb;
    let x_pelvis = -0.45 * lb;

    // skeleton
    let mut j = vec![[0.0; 3]; JOINTS];
    let mut parent = vec![-1i32; JOINTS];
    let mut names = vec![String::new(); JOINTS];
    let mut set = |i: usize, name: &str, p: [f64; 3], par: i32| {
        j[i] = p;
        parent[i] = par;
        names[i] = name.to_string();
    };
    set(0, "root", [0.0, 0.0, zc], -1);
    set(1, "spine_back", [-0.25 * lb, 0.0, zc], 0);
    set(2, "pelvis", [x_pelvis, 0.0, zc], 1);
    set(3, "spine_front", [0.2 * lb, 0.0, zc], 0);
    set(4, "chest", [x_chest, 0.0, zc], 3);
    set(5, "neck_base", [0.5 * lb, 0.0, zc + 0.15 * h], 4);
    set(6, "neck_top", [0.57 * lb, 0.0, zc + 0.35 * h], 5);
    let head = [0.62 * lb, 0.0, zc + 0.5 * h];
    set(7, "head", head, 6);
    let hs = h * head_size;
    set(8, "muzzle", [head[0] + 0.22 * hs, 0.0, head[2] - 0.06 * hs], 7);
    set(9, "jaw", [head[0] + 0.08 * hs, 0.0, head[2] - 0.1 * hs], 7);
    set(10, "ear_l", [head[0] - 0.04 * hs, 0.07 * hs, head[2] + 0.08 * hs], 7);
    set(11, "ear_r", [head[0] - 0.04 * hs, -0.07 * hs, head[2] + 0.08 * hs], 7);
    let zs = zc - 0.05 * h;
    for (leg, &first) in LEGS.iter().enumerate() {
        let front = leg < 2;
        let side = if leg % 2 == 0 { 1.0 } else { -1.0 };
        let y = side * 0.09 * h * girth;
        let (x, par) = if front { (0.38 * lb, CHEST) } else { (-0.42 * lb, PELVIS) };
        let bend = if front { -1.0 } else { 1.0 };
        let lname = ["lf", "rf", "lh", "rh"][leg];
        let top = [x, y, zs];
        let mid = [x + bend * 0.06 * h, y, zs - 0.45 * (zs - rp)];
        let low = [x - bend * 0.02 * h, y, rp + 0.14 * h];
        let paw = [x + 0.02 * h, y, rp];
        set(first, &format!("{lname}_upper"), top, par as i32);
        set(first + 1, &format!("{lname}_mid"), mid, first as i32);
        set(first + 2, &format!("{lname}_low"), low, first as i32 + 1);
        set(first + 3, &format!("{lname}_paw"), paw, first as i32 + 2);
    }
    let seg = 0.075 * h * tail_len;
    let mut tp = [x_pelvis - 0.06 * lb, 0.0, zc + 0.06 * h];
    for k in 0..TAIL_SEGMENTS {
        let ang = (25.0 - 8.0 * k as f64).to_radians();
        if k > 0 {
            tp = add3(tp, [-seg * ang.cos(), 0.0, seg * ang.sin()]);
        }
        set(
            TAIL + k,
            &format!("tail_{k}"),
            tp,
            if k == 0 { PELVIS as i32 } else { (TAIL + k - 1) as i32 },
        );
    }

    let mut b = Builder::default();

    // torso: explicit stations so one ring sits exactly at the withers
    let xs = [
        -0.58 * lb,
        -0.52 * lb,
        -0.45 * lb,
        -0.35 * lb,
        -0.25 * lb,
        -0.12 * lb,
        0.0,
        0.12 * lb,
        0.25 * lb,
        x_chest,
        0.48 * lb,
        0.54 * lb,
    ];
    let radii = [0.55, 0.8, 0.9, 0.88, 0.85, 0.85, 0.87, 0.92, 0.97, 1.0, 0.85, 0.55];
    let torso: Vec<Station> = xs
        .iter()
        .zip(radii)
        .map(|(&x, p)| Station {
            center: [x, 0.0, zc],
            ru: ry * p,
            rv: rz * p,
        })
        .collect();
    const TORSO_M: usize = 20;
    let torso_loft = b.loft(Part::Torso, &torso, [0.0, 0.0, 1.0], TORSO_M, (0.05 * lb, 0.04 * lb));
    // ring index TORSO_M/4 has angle π/2: straight up
    let withers_vertex = torso_loft.rings[9] + (TORSO_M / 4) as u32;

    // neck and head
    let nose = [head[0] + 0.3 * hs, 0.0, head[2] - 0.07 * hs];
    let neck_ctrl = [
        ([0.42 * lb, 0.0, zc + 0.05 * h], 0.1 * h * girth, 0.11 * h * girth),
        (j[5], 0.085 * h, 0.09 * h),
        (j[6], 0.07 * h, 0.075 * h),
        (head, 0.085 * hs, 0.09 * hs),
        ([head[0] + 0.12 * hs, 0.0, head[2] - 0.04 * hs], 0.06 * hs, 0.06 * hs),
        (nose, 0.035 * hs, 0.035 * hs),
    ];
    let head_loft = b.loft(Part::Head, &resample(&neck_ctrl, 13), [0.0, 0.0, 1.0], 12, (0.02 * h, 0.02 * hs));
    // eyes: ring near the head centre, angles ±(π/2 ± π/3) around the tangent
    let eye_ring = head_loft.rings[7];
    let eye_l = eye_ring + 2;
    let eye_r = eye_ring + 4;

    // ears
    let mut ear_tips = [0u32; 2];
    for (e, side) in [1.0f64, -1.0].iter().enumerate() {
        let base = j[10 + e];
        let tip = add3(base, [-0.03 * hs, side * 0.03 * hs, 0.11 * hs]);
        let ctrl = [
            (sub3(base, [0.0, 0.0, 0.03 * hs]), 0.035 * hs, 0.02 * hs),
            (base, 0.03 * hs, 0.016 * hs),
            (tip, 0.006 * hs, 0.004 * hs),
        ];
        let l = b.loft(Part::Ear(e), &resample(&ctrl, 4), [1.0, 0.0, 0.0], 6, (0.005 * hs, 0.01 * hs));
        ear_tips[e] = l.apex_end;
    }

    // legs
    for (leg, &first) in LEGS.iter().enumerate() {
        let top = j[first];
        let r_up = 0.07 * h * leg_thick;
        let ctrl = [
            (add3(top, [0.0, 0.0, 0.08 * h]), r_up, r_up * 1.2),
            (top, r_up, r_up * 1.2),
            (j[first + 1], 0.045 * h * leg_thick, 0.05 * h * leg_thick),
            (j[first + 2], 0.032 * h * leg_thick, 0.035 * h * leg_thick),
            (j[first + 3], 0.04 * h * leg_thick, 0.055 * h * leg_thick),
        ];
        let st = resample(&ctrl, 12);
        let last = &st[st.len() - 1];
        let prev = &st[st.len() - 2];
        let t = normalize(sub3(last.center, prev.center));
        // end cap stops just above the floor
        let cap = (rp - 0.004 * h) / t[2].abs().max(1e-6);
        b.loft(Part::Leg(leg), &st, [1.0, 0.0, 0.0], 10, (0.02 * h, cap.min(rp)));
    }

    // tail
    let mut tail_ctrl: Vec<([f64; 3], f64, f64)> = (0..TAIL_SEGMENTS)
        .map(|k| {
            let r = 0.035 * h * (1.0 - 0.13 * k as f64);
            (j[TAIL + k], r, r)
        })
        .collect();
    let dir = normalize(sub3(j[TAIL + TAIL_SEGMENTS - 1], j[TAIL + TAIL_SEGMENTS - 2]));
    tail_ctrl.push((add3(j[TAIL + TAIL_SEGMENTS - 1], scale3(dir, seg)), 0.012 * h, 0.012 * h));
    let tail_loft = b.loft(Part::Tail, &resample(&tail_ctrl, 10), [0.0, 0.0, 1.0], 8, (0.01 * h, 0.01 * h));

    let vertices = b.verts.clone();
    let nv = vertices.len();

    // skinning: inverse-distance falloff to the bones a part may follow
    let mut bones: Vec<(usize, [f64; 3], [f64; 3], Vec<Part>)> = Vec::new();
    let torso_parts = vec![Part::Torso];
    bones.push((0, j[0], j[1], torso_parts.clone()));
    bones.push((0, j[0], j[3], torso_parts.clone()));
    bones.push((1, j[1], j[2], torso_parts.clone()));
    bones.push((2, j[2], [-0.62 * lb, 0.0, zc], {
        let mut v = torso_parts.clone();
        v.extend([Part::Leg(2), Part::Leg(3), Part::Tail]);
        v
    }));
    bones.push((3, j[3], j[4], torso_parts.clone()));
    bones.push((4, j[4], [0.55 * lb, 0.0, zc], {
        let mut v = torso_parts.clone();
        v.extend([Part::Leg(0), Part::Leg(1), Part::Head]);
        v
    }));
    bones.push((5, j[5], j[6], vec![Part::Head]));
    bones.push((6, j[6], j[7], vec![Part::Head]));
    bones.push((7, j[7], j[8], vec![Part::Head, Part::Ear(0), Part::Ear(1)]));
    bones.push((8, j[8], nose, vec![Part::Head]));
    bones.push((9, j[9], add3(j[9], [0.12 * hs, 0.0, -0.02 * hs]), vec![Part::Head]));
    for e in 0..2 {
        bones.push((10 + e, j[10 + e], vertices[ear_tips[e] as usize], vec![Part::Ear(e)]));
    }
    for (leg, &first) in LEGS.iter().enumerate() {
        let p = vec![Part::Leg(leg)];
        bones.push((first, j[first], j[first + 1], p.clone()));
        bones.push((first + 1, j[first + 1], j[first + 2], p.clone()));
        bones.push((first + 2, j[first + 2], j[first + 3], p.clone()));
        bones.push((first + 3, j[first + 3], add3(j[first + 3], [0.04 * h, 0.0, -0.02 * h]), p));
    }
    for k in 0..TAIL_SEGMENTS {
        let end = if k + 1 < TAIL_SEGMENTS {
            j[TAIL + k + 1]
        } else {
            tail_ctrl.last().unwrap().0
        };
        bones.push((TAIL + k, j[TAIL + k], end, vec![Part::Tail]));
    }
    let eps = 0.02 * h;
    let mut skin = SkinWeights {
        joints: Vec::with_capacity(nv),
        weights: Vec::with_capacity(nv),
    };
    for (v, part) in vertices.iter().zip(&b.vpart) {
        let part = part.expect("every vertex has a part");
        // per joint keep the closest of its bones
        let mut best: Vec<(usize, f64)> = Vec::new();
        for (jj, a, c, parts) in &bones {
            if !parts.contains(&part) {
                continue;
            }
            let d = seg_dist(*v, *a, *c);
            match best.iter_mut().find(|(k, _)| k == jj) {
                Some(e) => e.1 = e.1.min(d),
                None => best.push((*jj, d)),
            }
        }
        let mut cand: Vec<(usize, f64)> = best.into_iter().map(|(k, d)| (k, 1.0 / (d + eps).powi(4))).collect();
        cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        cand.truncate(MAX_INFLUENCES);
        let total: f64 = cand.iter().map(|c| c.1).sum();
        let mut js = [0u32; MAX_INFLUENCES];
        let mut ws = [0.0; MAX_INFLUENCES];
        for (slot, (k, w)) in cand.iter().enumerate() {
            js[slot] = *k as u32;
            ws[slot] = w / total;
        }
        let s: f64 = ws.iter().sum();
        ws[0] += 1.0 - s;
        skin.joints.push(js);
        skin.weights.push(ws);
    }

    let (shape_basis, joint_shape_basis) = shape_fields(seed, &vertices, &b.vpart, &j, &skin, h, lb, zc);

    let keypoints = keypoint_table(
        torso_loft.rings[9] + (TORSO_M / 4) as u32,
        head_loft.apex_end,
        [eye_l, eye_r],
        ear_tips,
        tail_loft.apex_end,
    );

    let leg_faces: Vec<u32> = b
        .fpart
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p, Some(Part::Leg(_))))
        .map(|(i, _)| i as u32)
        .collect();

    let mut limb_weights = vec![0.0; SHAPE_DIM];
    for &k in &LIMB_MODES {
        limb_weights[k] = 1.0;
    }
    let mut pose_cov = vec![0.0; 36 * JOINTS * JOINTS];
    for i in 0..6 * JOINTS {
        pose_cov[i * 6 * JOINTS + i] = 0.25;
    }
    let assets = TemplateAssets {
        vertices,
        faces: b.faces,
        joint_names: names,
        rest_joints: j,
        parent,
        skin,
        shape_basis,
        joint_shape_basis,
        shape_prior: GaussianPrior::standard(vec![0.0; SHAPE_DIM]),
        pose_prior: GaussianPrior {
            mean: crate::model::ROT6D_IDENTITY.repeat(JOINTS),
            covariance: pose_cov,
        },
        limb_weights,
        keypoints,
        foot_pairs: vec![(14, 18), (15, 19), (22, 26), (23, 27)],
        foot_joints: PAWS.to_vec(),
        leg_faces,
    };
    assets.validate()?;
    let shoulder_height = assets.vertices[withers_vertex as usize][2];
    Ok(SynthTemplate {
        assets,
        shoulder_height,
        withers_vertex,
    })
}

fn keypoint_table(withers: u32, nose: u32, eyes: [u32; 2], ears: [u32; 2], tail_tip: u32) -> Vec<KeypointDef> {
    let mut k = Vec::new();
    let mut add = |name: &str, anchor: Anchor| {
        k.push(KeypointDef {
            name: name.to_string(),
            anchor,
        })
    };
    add("nose", Anchor::Vertex(nose));
    add("eye_l", Anchor::Vertex(eyes[0]));
    add("eye_r", Anchor::Vertex(eyes[1]));
    add("ear_tip_l", Anchor::Vertex(ears[0]));
    add("ear_tip_r", Anchor::Vertex(ears[1]));
    add("withers", Anchor::Vertex(withers));
    add("tail_base", Anchor::Joint(TAIL as u32));
    add("tail_tip", Anchor::Vertex(tail_tip));
    for (leg, &first) in LEGS.iter().enumerate() {
        let lname = ["lf", "rf", "lh", "rh"][leg];
        let mid = if leg < 2 { "elbow" } else { "knee" };
        let low = if leg < 2 { "wrist" } else { "hock" };
        add(&format!("{lname}_{mid}"), Anchor::Joint(first as u32 + 1));
        add(&format!("{lname}_{low}"), Anchor::Joint(first as u32 + 2));
        add(&format!("{lname}_paw"), Anchor::Joint(first as u32 + 3));
    }
    add("chin", Anchor::Joint(9));
    add("head", Anchor::Joint(HEAD as u32));
    add("chest", Anchor::Joint(CHEST as u32));
    add("pelvis", Anchor::Joint(PELVIS as u32));
    k
}

/// Thirty smooth displacement fields. The first nine are named proportion
/// changes; the rest are seeded low-frequency radial bumps. Every field is
/// made orthogonal to rigid translation and uniform scaling so that shape
/// cannot stand in for the global scale.
#[allow(clippy::too_many_arguments)]
fn shape_fields(
    seed: u64,
    verts: &[[f64; 3]],
    vpart: &[Option<Part>],
    joints: &[[f64; 3]],
    skin: &SkinWeights,
    h: f64,
    lb: f64,
    zc: f64,
) -> (Vec<Vec<[f64; 3]>>, Vec<Vec<[f64; 3]>>) {
    let nv = verts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a9e);
    let is_front = |p: Part| matches!(p, Part::Leg(0) | Part::Leg(1));
    let is_hind = |p: Part| matches!(p, Part::Leg(2) | Part::Leg(3));
    let mut fields: Vec<Vec<[f64; 3]>> = Vec::with_capacity(SHAPE_DIM);
    for k in 0..SHAPE_DIM {
        let (fx, fy, fz, phase) = (
            rng.random_range(0.5..2.5),
            rng.random_range(0.5..2.5),
            rng.random_range(0.5..2.5),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let f: Vec<[f64; 3]> = verts
            .iter()
            .zip(vpart)
            .map(|(&v, p)| {
                let p = p.unwrap();
                let x = v[0];
                let ax = [v[0], 0.0, zc];
                let radial = sub3(v, ax);
                match k {
                    // torso length: stretch along x
                    0 => [x, 0.0, 0.0],
                    // girth: radial growth about the spine axis
                    1 => {
                        if p == Part::Torso {
                            [0.0, radial[1], radial[2]]
                        } else {
                            [0.0; 3]
                        }
                    }
                    // front / hind leg length
                    2 | 3 => {
                        let hit = if k == 2 { is_front(p) } else { is_hind(p) };
                        if hit {
                            [0.0, 0.0, (v[2] - zc).min(0.0)]
                        } else {
                            [0.0; 3]
                        }
                    }
                    // neck length and head size
                    4 => {
                        if p == Part::Head || matches!(p, Part::Ear(_)) {
                            [(x - 0.4 * lb).max(0.0), 0.0, (v[2] - zc).max(0.0)]
                        } else {
                            [0.0; 3]
                        }
                    }
                    5 => {
                        if matches!(p, Part::Head | Part::Ear(_)) && x > 0.55 * lb {
                            sub3(v, joints[HEAD])
                        } else {
                            [0.0; 3]
                        }
                    }
                    6 => {
                        if p == Part::Tail {
                            sub3(v, joints[TAIL])
                        } else {
                            [0.0; 3]
                        }
                    }
                    7 => {
                        if matches!(p, Part::Ear(_)) {
                            [0.0, 0.0, (v[2] - joints[10][2]).max(0.0)]
                        } else {
                            [0.0; 3]
                        }
                    }
                    // leg thickness
                    8 => {
                        if let Part::Leg(l) = p {
                            let top = joints[LEGS[l]];
                            [v[0] - top[0], v[1] - top[1], 0.0]
                        } else {
                            [0.0; 3]
                        }
                    }
                    _ => {
                        let s = (fx * x / lb * std::f64::consts::PI + phase).cos()
                            * (fy * v[1] / h * std::f64::consts::PI).cos()
                            * (fz * (v[2] - zc) / h * std::f64::consts::PI + phase).sin();
                        let n = norm3(radial);
                        if n > 0.0 {
                            scale3(radial, s / n * 0.05)
                        } else {
                            [0.0; 3]
                        }
                    }
                }
            })
            .collect();
        fields.push(f);
    }
    // project out translation and scaling about the centroid
    let c = scale3(verts.iter().fold([0.0; 3], |a, &v| add3(a, v)), 1.0 / nv as f64);
    let mut dirs: Vec<Vec<[f64; 3]>> = vec![
        vec![[1.0, 0.0, 0.0]; nv],
        vec![[0.0, 1.0, 0.0]; nv],
        vec![[0.0, 0.0, 1.0]; nv],
        verts.iter().map(|&v| sub3(v, c)).collect(),
    ];
    // orthonormalize the nuisance directions
    for a in 0..dirs.len() {
        for b in 0..a {
            let d = field_dot(&dirs[a], &dirs[b]);
            let sub: Vec<[f64; 3]> = dirs[b].clone();
            for (x, y) in dirs[a].iter_mut().zip(&sub) {
                *x = sub3(*x, scale3(*y, d));
            }
        }
        let n = field_dot(&dirs[a], &dirs[a]).sqrt();
        for x in dirs[a].iter_mut() {
            *x = scale3(*x, 1.0 / n);
        }
    }
    for (k, f) in fields.iter_mut().enumerate() {
        for d in &dirs {
            let a = field_dot(f, d);
            for (x, y) in f.iter_mut().zip(d) {
                *x = sub3(*x, scale3(*y, a));
            }
        }
        let max = f.iter().map(|&x| norm3(x)).fold(0.0, f64::max);
        let amp = if k < 9 { 0.08 * h } else { 0.02 * h };
        for x in f.iter_mut() {
            *x = scale3(*x, amp / max);
        }
    }
    // joints follow the skin-weighted mean displacement of their vertices
    let nj = joints.len();
    let mut wsum = vec![0.0; nj];
    for (js, ws) in skin.joints.iter().zip(&skin.weights) {
        for (&jj, &w) in js.iter().zip(ws) {
            wsum[jj as usize] += w;
        }
    }
    let jfields = fields
        .iter()
        .map(|f| {
            let mut acc = vec![[0.0; 3]; nj];
            for (i, d) in f.iter().enumerate() {
                for (&jj, &w) in skin.joints[i].iter().zip(&skin.weights[i]) {
                    acc[jj as usize] = add3(acc[jj as usize], scale3(*d, w));
                }
            }
            acc.iter()
                .zip(&wsum)
                .map(|(&a, &w)| if w > 0.0 { scale3(a, 1.0 / w) } else { [0.0; 3] })
                .collect()
        })
        .collect();
    (fields, jfields)
}

fn field_dot(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot3(*x, *y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BodyModel;

    #[test]
    fn template_is_valid_and_sized() {
        for seed in 0..3 {
            let t = make_template(seed, 0.4).unwrap();
            BodyModel::new(t.assets.clone()).unwrap();
            assert!((t.shoulder_height - 0.4).abs() < 1e-6, "{}", t.shoulder_height);
            assert_eq!(t.assets.joint_count(), 35);
            assert_eq!((t.assets.vertices.len(), t.assets.faces.len()), (1022, 2008));
            let minz = t.assets.vertices.iter().map(|v| v[2]).fold(f64::INFINITY, f64::min);
            assert!(minz > 0.0 && minz < 0.01, "lowest vertex {minz}");
        }
    }

    #[test]
    fn seeds_share_topology_not_proportions() {
        let a = make_template(1, 0.4).unwrap().assets;
        let b = make_template(2, 0.4).unwrap().assets;
        assert_eq!(a.faces, b.faces);
        assert_eq!(a.parent, b.parent);
        assert_eq!(a.vertices.len(), b.vertices.len());
        assert_ne!(a.vertices, b.vertices);
    }

    #[test]
    fn shape_fields_avoid_uniform_scaling() {
        let a = make_template(3, 0.4).unwrap().assets;
        let n = a.vertices.len() as f64;
        let c = scale3(a.vertices.iter().fold([0.0; 3], |s, &v| add3(s, v)), 1.0 / n);
        let dir: Vec<[f64; 3]> = a.vertices.iter().map(|&v| sub3(v, c)).collect();
        for f in &a.shape_basis {
            assert!(field_dot(f, &dir).abs() < 1e-9);
        }
    }
}
