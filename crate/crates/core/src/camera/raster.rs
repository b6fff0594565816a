use super::{Camera, DepthImage, Image, Mask, Z_NEAR};

struct Tri {
    p: [[f64; 2]; 3],
    inv_z: [f64; 3],
}

fn project_tris(cam: &Camera, vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> Vec<Tri> {
    let proj: Vec<_> = vertices.iter().map(|&v| cam.project_point(v)).collect();
    faces
        .iter()
        .filter_map(|f| {
            let q = [proj[f[0] as usize], proj[f[1] as usize], proj[f[2] as usize]];
            if q.iter().any(|x| !x.valid || x.depth <= Z_NEAR) {
                return None;
            }
            Some(Tri {
                p: [q[0].uv, q[1].uv, q[2].uv],
                inv_z: [1.0 / q[0].depth, 1.0 / q[1].depth, 1.0 / q[2].depth],
            })
        })
        .collect()
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Calls `hit(i, j, 1/z)` for every pixel center covered by the triangle.
/// Coverage is tested at pixel centers; both windings are accepted.
fn scan(t: &Tri, width: u32, height: u32, mut hit: impl FnMut(u32, u32, f64)) {
    let [a, b, c] = t.p;
    let area = edge(a, b, c);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let lo_x = a[0].min(b[0]).min(c[0]).ceil().max(0.0);
    let hi_x = a[0].max(b[0]).max(c[0]).floor().min(width as f64 - 1.0);
    let lo_y = a[1].min(b[1]).min(c[1]).ceil().max(0.0);
    let hi_y = a[1].max(b[1]).max(c[1]).floor().min(height as f64 - 1.0);
    if lo_x > hi_x || lo_y > hi_y {
        return;
    }
    let inv_area = 1.0 / area;
    for j in lo_y as u32..=hi_y as u32 {
        for i in lo_x as u32..=hi_x as u32 {
            let p = [i as f64, j as f64];
            let w0 = edge(b, c, p) * inv_area;
            let w1 = edge(c, a, p) * inv_area;
            let w2 = edge(a, b, p) * inv_area;
            if w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 {
                hit(i, j, w0 * t.inv_z[0] + w1 * t.inv_z[1] + w2 * t.inv_z[2]);
            }
        }
    }
}

/// Binary silhouette of a triangle mesh.
pub fn rasterize_silhouette(cam: &Camera, vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> Mask {
    let mut mask = Mask::new(cam.width, cam.height, false);
    for t in project_tris(cam, vertices, faces) {
        scan(&t, cam.width, cam.height, |i, j, _| mask.set(i, j, true));
    }
    mask
}

/// Nearest-surface camera-frame depth in meters; `+inf` where uncovered.
pub fn render_depth_map(cam: &Camera, vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> Image<f64> {
    let mut inv = Image::new(cam.width, cam.height, 0.0f64);
    for t in project_tris(cam, vertices, faces) {
        scan(&t, cam.width, cam.height, |i, j, iz| {
            if iz > inv.get(i, j) {
                inv.set(i, j, iz);
            }
        });
    }
    Image {
        width: inv.width,
        height: inv.height,
        data: inv.data.iter().map(|&iz| if iz > 0.0 { 1.0 / iz } else { f64::INFINITY }).collect(),
    }
}

/// Integer depth image in units of `cam.depth_unit`; 0 where uncovered.
/// Covered pixels store at least 1 and saturate at `u16::MAX`.
pub fn render_depth(cam: &Camera, vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> DepthImage {
    let z = render_depth_map(cam, vertices, faces);
    Image {
        width: z.width,
        height: z.height,
        data: z
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
    }
}
