//! Camera ring and rendered observations.

use super::{NoiseSpec, SynthSpec};
use crate::camera::{rasterize_silhouette, render_depth_map, Camera, CameraRig, DepthImage, Image};
use crate::error::Result;
use crate::linalg::{norm3, sub3};
use crate::model::{keypoint_positions, pose_state, Anchor, BodyModel, BodyState};
use crate::objectives::{Correspondence, FrameObservation, KeypointObs, Sequence};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Extra depth allowance when deciding whether a surface point is visible.
const SURFACE_TOLERANCE: f64 = 0.01;
/// Extra allowance for keypoints, on top of their depth below the skin.
const KEYPOINT_TOLERANCE: f64 = 0.02;

/// Cameras evenly spaced on a horizontal circle around the origin, each
/// aimed at the vertical axis with a seeded pitch.
pub fn camera_ring(spec: &SynthSpec) -> CameraRig {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xca3e_7a11);
    let offset = rng.random_range(0.0..std::f64::consts::TAU);
    let (w, h) = spec.image_size;
    let cameras = (0..spec.cameras)
        .map(|i| {
            let a = offset + std::f64::consts::TAU * i as f64 / spec.cameras as f64;
            let pitch = if spec.pitch_jitter_deg > 0.0 {
                rng.random_range(-spec.pitch_jitter_deg..spec.pitch_jitter_deg).to_radians()
            } else {
                0.0
            };
            let eye = [spec.ring_radius * a.cos(), spec.ring_radius * a.sin(), spec.camera_height];
            let target = [0.0, 0.0, spec.camera_height - spec.ring_radius * pitch.tan()];
            Camera::look_at(
                format!("{i}"),
                eye,
                target,
                [spec.focal, spec.focal, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0],
                (w, h),
            )
        })
        .collect();
    CameraRig {
        id: format!("ring-{}", spec.cameras),
        cameras,
    }
}

/// Renders every view of every frame of `state`.
pub fn render_observations(rig: &CameraRig, model: &BodyModel, state: &BodyState, noise: &NoiseSpec, seed: u64) -> Result<Sequence> {
    rig.validate()?;
    let mut views = vec![Vec::with_capacity(state.len()); rig.cameras.len()];
    for t in 0..state.len() {
        let mesh = pose_state(model, state, t)?;
        let kps = keypoint_positions(model, &mesh);
        // how deep each keypoint sits below the skin
        let depth_below: Vec<f64> = model
            .keypoints
            .iter()
            .zip(&kps)
            .map(|(k, p)| match k.anchor {
                Anchor::Vertex(_) => 0.0,
                Anchor::Joint(_) => mesh
                    .vertices
                    .iter()
                    .map(|v| norm3(sub3(*v, *p)))
                    .fold(f64::INFINITY, f64::min),
            })
            .collect();
        for (v, cam) in rig.cameras.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((t as u64) << 20) ^ ((v as u64) << 8) ^ 0x0b5e);
            let mask = rasterize_silhouette(cam, &mesh.vertices, &model.faces);
            let zmap = render_depth_map(cam, &mesh.vertices, &model.faces);
            let mut depth: DepthImage = Image {
                width: zmap.width,
                height: zmap.height,
                data: zmap
                    .data
                    .iter()
                    .map(|&d| {
                        if d.is_finite() {
                            (d / cam.depth_unit).round().clamp(1.0, u16::MAX as f64) as u16
                        } else {
                            0
                        }
                    })
                    .collect(),
            };
            if noise.depth_sigma > 0.0 {
                let n = Normal::new(0.0, noise.depth_sigma / cam.depth_unit).expect("finite sigma");
                for d in depth.data.iter_mut().filter(|d| **d > 0) {
                    *d = (*d as f64 + n.sample(&mut rng)).round().clamp(1.0, u16::MAX as f64) as u16;
                }
            }
            let visible = |p: [f64; 3], tol: f64| -> Option<[f64; 2]> {
                let q = cam.project_point(p);
                if !q.valid {
                    return None;
                }
                let (i, j) = (q.uv[0].round(), q.uv[1].round());
                if i < 0.0 || j < 0.0 || i >= cam.width as f64 || j >= cam.height as f64 {
                    return None;
                }
                let z = zmap.get(i as u32, j as u32);
                (q.depth <= z + tol).then_some(q.uv)
            };
            let kn = Normal::new(0.0, noise.keypoint_sigma.max(0.0)).expect("finite sigma");
            let keypoints = kps
                .iter()
                .zip(&depth_below)
                .map(|(&p, &below)| match visible(p, below + KEYPOINT_TOLERANCE) {
                    Some(uv) => {
                        let uv = if noise.keypoint_sigma > 0.0 {
                            [uv[0] + kn.sample(&mut rng), uv[1] + kn.sample(&mut rng)]
                        } else {
                            uv
                        };
                        let inside = uv[0] >= -0.5
                            && uv[1] >= -0.5
                            && uv[0] <= cam.width as f64 - 0.5
                            && uv[1] <= cam.height as f64 - 0.5;
                        if inside {
                            KeypointObs {
                                uv,
                                confidence: 1.0,
                                present: true,
                            }
                        } else {
                            KeypointObs::absent()
                        }
                    }
                    None => KeypointObs::absent(),
                })
                .collect();
            let seen: Vec<(u32, [f64; 2])> = mesh
                .vertices
                .iter()
                .enumerate()
                .filter_map(|(i, &p)| visible(p, SURFACE_TOLERANCE).map(|uv| (i as u32, uv)))
                .collect();
            let take = noise.cse_count.min(seen.len());
            let mut picks: Vec<usize> = sample(&mut rng, seen.len(), take).into_vec();
            picks.sort_unstable();
            let cn = Normal::new(0.0, noise.cse_sigma.max(0.0)).expect("finite sigma");
            let mut correspondences = Vec::with_capacity(take);
            for k in picks {
                if noise.cse_dropout > 0.0 && rng.random::<f64>() < noise.cse_dropout {
                    continue;
                }
                let (vi, uv) = seen[k];
                let uv = if noise.cse_sigma > 0.0 {
                    [uv[0] + cn.sample(&mut rng), uv[1] + cn.sample(&mut rng)]
                } else {
                    uv
                };
                let uv = [
                    uv[0].clamp(-0.5, cam.width as f64 - 0.5),
                    uv[1].clamp(-0.5, cam.height as f64 - 0.5),
                ];
                correspondences.push(Correspondence {
                    uv,
                    vertex: vi,
                    confidence: 1.0,
                });
            }
            let mask = mask.morph(noise.mask_px);
            views[v].push(FrameObservation {
                view: cam.id.clone(),
                t,
                mask,
                depth: Some(depth),
                keypoints,
                correspondences,
            });
        }
    }
    Ok(Sequence {
        rig: rig.clone(),
        fps: 15.0,
        views,
    })
}
