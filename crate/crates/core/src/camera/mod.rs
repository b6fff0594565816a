//! Pinhole cameras, depth lifting and mesh rasterization.
//!
//! Pixel `(i, j)` (column, row) has its center at continuous coordinate
//! `(i, j)`. Camera frame: x right, y down, z forward. World frame: z up.

mod image;
mod raster;

pub use image::{DepthImage, Image, Mask};
pub use raster::{rasterize_silhouette, render_depth, render_depth_map};

use crate::error::{Error, Result};
use crate::linalg::{det3, lift3, lift_mat, mat_mul, mat_vec, transpose, Mat3, Rigid, Vec3};
use crate::real::Real;
use serde::{Deserialize, Serialize};

/// Points at or closer than this camera-frame depth are invalid.
pub const Z_NEAR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World → camera rotation, row-major.
    pub rotation: Mat3<f64>,
    pub translation: [f64; 3],
    /// Meters per stored depth integer.
    pub depth_unit: f64,
}

/// Continuous pixel coordinate plus camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected<T> {
    pub uv: [T; 2],
    pub depth: T,
    pub valid: bool,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(Error::InvalidCamera {
                id: self.id.clone(),
                msg: msg.to_string(),
            })
        };
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be at least 1");
        }
        if !(self.depth_unit > 0.0) {
            return bad("depth unit must be positive");
        }
        let r = &self.rotation;
        let rtr = mat_mul(&transpose(r), r);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                if (rtr[i][j] - e).abs() > 1e-6 {
                    return bad("rotation is not orthonormal");
                }
            }
        }
        if (det3(r) - 1.0).abs() > 1e-6 {
            return bad("rotation determinant is not +1");
        }
        Ok(())
    }

    pub fn world_to_cam(&self) -> Rigid<f64> {
        Rigid {
            rot: self.rotation,
            trans: self.translation,
        }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> [f64; 3] {
        self.world_to_cam().inverse().trans
    }

    /// Camera looking from `eye` at `target` with world +z as up.
    pub fn look_at(id: impl Into<String>, eye: [f64; 3], target: [f64; 3], intr: [f64; 4], size: (u32, u32)) -> Self {
        let f = normalize([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]]);
        let up = [0.0, 0.0, 1.0];
        let x = normalize(cross(f, up));
        let y = cross(f, x);
        let rotation = [x, y, f];
        let t = mat_vec(&rotation, eye);
        Camera {
            id: id.into(),
            fx: intr[0],
            fy: intr[1],
            cx: intr[2],
            cy: intr[3],
            width: size.0,
            height: size.1,
            rotation,
            translation: [-t[0], -t[1], -t[2]],
            depth_unit: 0.001,
        }
    }

    #[inline]
    pub fn project_point<T: Real>(&self, p: Vec3<T>) -> Projected<T> {
        let r = &self.rotation;
        let t = &self.translation;
        let xc = T::affine(T::lit(t[0]), &r[0], &p);
        let yc = T::affine(T::lit(t[1]), &r[1], &p);
        let zc = T::affine(T::lit(t[2]), &r[2], &p);
        let valid = zc.value() > Z_NEAR;
        let inv = if valid { zc.recip() } else { T::one() };
        Projected {
            uv: [
                xc * inv * T::lit(self.fx) + T::lit(self.cx),
                yc * inv * T::lit(self.fy) + T::lit(self.cy),
            ],
            depth: zc,
            valid,
        }
    }

    /// World point at camera-frame depth `z` behind pixel coordinate `uv`.
    pub fn unproject(&self, uv: [f64; 2], z: f64) -> [f64; 3] {
        let xc = [(uv[0] - self.cx) * z / self.fx, (uv[1] - self.cy) * z / self.fy, z];
        self.world_to_cam().inverse().apply(xc)
    }

    pub fn lift_rotation<T: Real>(&self) -> (Mat3<T>, Vec3<T>) {
        (lift_mat(&self.rotation), lift3(self.translation))
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    crate::linalg::cross3(a, b)
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Projects a point set; behind-camera points are flagged invalid.
pub fn project<T: Real>(cam: &Camera, points: &[Vec3<T>]) -> Vec<Projected<T>> {
    points.iter().map(|&p| cam.project_point(p)).collect()
}

/// Lifts every masked pixel with nonzero depth to a world point.
pub fn backproject(cam: &Camera, depth: &DepthImage, mask: &Mask) -> Result<Vec<[f64; 3]>> {
    if depth.width != mask.width || depth.height != mask.height {
        return Err(Error::Dimension(format!(
            "depth {}x{} vs mask {}x{}",
            depth.width, depth.height, mask.width, mask.height
        )));
    }
    let mut out = Vec::new();
    for j in 0..mask.height {
        for i in 0..mask.width {
            if !mask.get(i, j) {
                continue;
            }
            let d = depth.get(i, j);
            if d == 0 {
                continue;
            }
            out.push(cam.unproject([i as f64, j as f64], d as f64 * cam.depth_unit));
        }
    }
    Ok(out)
}

/// Ordered camera list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub id: String,
    pub cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Config("camera rig is empty".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for c in &self.cameras {
            c.validate()?;
            if !ids.insert(c.id.as_str()) {
                return Err(Error::InvalidCamera {
                    id: c.id.clone(),
                    msg: "duplicate camera id".into(),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity3;

    pub(crate) fn origin_camera() -> Camera {
        Camera {
            id: "0".into(),
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 50.0,
            width: 101,
            height: 101,
            rotation: identity3(),
            translation: [0.0; 3],
            depth_unit: 0.001,
        }
    }

    #[test]
    fn principal_ray_and_offset() {
        let cam = origin_camera();
        let p = cam.project_point([0.0, 0.0, 1.0]);
        assert_eq!(p.uv, [50.0, 50.0]);
        assert!(p.valid);
        let p = cam.project_point([0.5, 0.0, 1.0]);
        assert_eq!(p.uv, [100.0, 50.0]);
        assert!(!cam.project_point([0.0, 0.0, -1.0]).valid);
        assert!(!cam.project_point([0.0, 0.0, 0.0]).valid);
    }

    #[test]
    fn backproject_empty_and_center_pixel() {
        let cam = origin_camera();
        let mut mask = Mask::new(101, 101, false);
        let mut depth = DepthImage::new(101, 101, 0);
        assert!(backproject(&cam, &depth, &mask).unwrap().is_empty());
        mask.set(50, 50, true);
        depth.set(50, 50, 1500);
        let pts = backproject(&cam, &depth, &mask).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0][2] - 1.5).abs() < 1e-12 && pts[0][0].abs() < 1e-12 && pts[0][1].abs() < 1e-12);
        // missing depth pixel skipped
        mask.set(10, 10, true);
        assert_eq!(backproject(&cam, &depth, &mask).unwrap().len(), 1);
        let small = DepthImage::new(3, 3, 0);
        assert!(matches!(backproject(&cam, &small, &mask), Err(Error::Dimension(_))));
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let cam = Camera::look_at("a", [2.5, 0.0, 0.45], [0.0, 0.0, 0.45], [300.0, 300.0, 160.0, 120.0], (320, 240));
        cam.validate().unwrap();
        let p = cam.project_point::<f64>([0.0, 0.0, 0.45]);
        assert!((p.uv[0] - 160.0).abs() < 1e-9 && (p.uv[1] - 120.0).abs() < 1e-9);
        assert!((p.depth - 2.5).abs() < 1e-12);
        // world up maps to image up (decreasing row)
        assert!(cam.project_point([0.0, 0.0, 0.6]).uv[1] < 120.0);
        let c = cam.center();
        assert!((c[0] - 2.5).abs() < 1e-12 && (c[2] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn invalid_cameras_are_rejected() {
        let mut cam = origin_camera();
        cam.fx = 0.0;
        assert!(cam.validate().is_err());
        let mut cam = origin_camera();
        cam.rotation[0][0] = -1.0;
        assert!(cam.validate().is_err());
        let rig = CameraRig {
            id: "r".into(),
            cameras: vec![origin_camera(), origin_camera()],
        };
        assert!(rig.validate().is_err());
    }

    fn closest_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
        use crate::linalg::{add3, dot3, scale3, sub3};
        let (ab, ac, ap) = (sub3(b, a), sub3(c, a), sub3(p, a));
        let (d1, d2) = (dot3(ab, ap), dot3(ac, ap));
        if d1 <= 0.0 && d2 <= 0.0 {
            return a;
        }
        let bp = sub3(p, b);
        let (d3, d4) = (dot3(ab, bp), dot3(ac, bp));
        if d3 >= 0.0 && d4 <= d3 {
            return b;
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            return add3(a, scale3(ab, d1 / (d1 - d3)));
        }
        let cp = sub3(p, c);
        let (d5, d6) = (dot3(ab, cp), dot3(ac, cp));
        if d6 >= 0.0 && d5 <= d6 {
            return c;
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            return add3(a, scale3(ac, d2 / (d2 - d6)));
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            return add3(b, scale3(sub3(c, b), w));
        }
        let den = 1.0 / (va + vb + vc);
        add3(a, add3(scale3(ab, vb * den), scale3(ac, vc * den)))
    }

    fn synth_scene() -> (Camera, Vec<[f64; 3]>, Vec<[u32; 3]>) {
        let cap = crate::synth::generate(&crate::synth::SynthSpec {
            frames: 2,
            cameras: 1,
            noise: crate::synth::NoiseSpec::none(),
            ..Default::default()
        })
        .unwrap();
        let mesh = crate::model::pose_state(&cap.model, &cap.truth.state, 1).unwrap();
        (cap.sequence.rig.cameras[0].clone(), mesh.vertices, cap.model.faces.clone())
    }

    #[test]
    fn rendered_depth_backprojects_onto_the_surface() {
        let (cam, verts, faces) = synth_scene();
        let mask = rasterize_silhouette(&cam, &verts, &faces);
        let depth = render_depth(&cam, &verts, &faces);
        let pts = backproject(&cam, &depth, &mask).unwrap();
        assert!(pts.len() > 500);
        for p in &pts {
            let d = faces
                .iter()
                .map(|f| {
                    let q = closest_on_triangle(*p, verts[f[0] as usize], verts[f[1] as usize], verts[f[2] as usize]);
                    crate::linalg::norm3(crate::linalg::sub3(*p, q))
                })
                .fold(f64::INFINITY, f64::min);
            assert!(d < 2.0 * cam.depth_unit, "point {p:?} is {d} from the mesh");
        }
    }

    #[test]
    fn silhouette_matches_depth_coverage() {
        let (cam, verts, faces) = synth_scene();
        let mask = rasterize_silhouette(&cam, &verts, &faces);
        let depth = render_depth(&cam, &verts, &faces);
        assert!(mask.count() > 0);
        for (m, d) in mask.data.iter().zip(&depth.data) {
            assert_eq!(*m, *d > 0);
        }
    }

    #[test]
    fn silhouette_is_rigidly_invariant() {
        let (cam, verts, faces) = synth_scene();
        let g = crate::linalg::Rigid {
            rot: crate::linalg::axis_angle([0.3, -0.2, 0.9], 0.8),
            trans: [0.4, -1.0, 0.2],
        };
        let moved: Vec<[f64; 3]> = verts.iter().map(|&v| g.apply(v)).collect();
        let w2c = cam.world_to_cam().compose(&g.inverse());
        let cam2 = Camera {
            rotation: w2c.rot,
            translation: w2c.trans,
            ..cam.clone()
        };
        let a = rasterize_silhouette(&cam, &verts, &faces);
        let b = rasterize_silhouette(&cam2, &moved, &faces);
        let differ = a.data.iter().zip(&b.data).filter(|(x, y)| x != y).count();
        // only pixels whose centers sit on an edge may flip
        assert!(differ * 200 < a.count(), "{differ} of {} differ", a.count());
    }

    #[test]
    fn project_unproject_round_trip() {
        let (cam, verts, _) = synth_scene();
        for &v in verts.iter().step_by(7) {
            let q = cam.project_point(v);
            assert!(q.valid);
            let back = cam.unproject(q.uv, q.depth);
            assert!(crate::linalg::norm3(crate::linalg::sub3(back, v)) < 1e-9);
        }
    }

    #[test]
    fn fronto_parallel_plane_stores_its_depth() {
        let cam = origin_camera();
        let verts = [[-1.0, -1.0, 2.0], [1.0, -1.0, 2.0], [1.0, 1.0, 2.0], [-1.0, 1.0, 2.0]];
        let faces = [[0, 1, 2], [0, 2, 3]];
        let depth = render_depth(&cam, &verts, &faces);
        assert!(depth.data.iter().all(|&d| d == 2000));
    }
}
