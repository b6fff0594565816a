//! Area-weighted surface sampling with leg-region boost.
//!
//! Sampling is split into a *plan* (face choice and barycentric weights,
//! drawn from constant areas) and its application to vertex positions, so a
//! fixed plan is a linear, differentiable map of the posed vertices.

use super::assets::BodyModel;
use super::posing::PosedMesh;
use crate::error::{Error, Result};
use crate::linalg::{cross3, norm3, sub3, Vec3};
use crate::real::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePlan {
    pub faces: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
}

pub fn face_areas(vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> Vec<f64> {
    faces
        .iter()
        .map(|f| {
            let a = vertices[f[0] as usize];
            let b = vertices[f[1] as usize];
            let c = vertices[f[2] as usize];
            0.5 * norm3(cross3(sub3(b, a), sub3(c, a)))
        })
        .collect()
}

/// Draws `n` (face, barycentric) pairs with probability proportional to
/// `area · (leg_boost if leg face else 1)`.
pub fn plan_samples(areas: &[f64], is_leg: impl Fn(usize) -> bool, n: usize, leg_boost: f64, seed: u64) -> Result<SurfacePlan> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    if !(leg_boost >= 1.0) {
        return Err(Error::Config(format!("leg boost must be >= 1, got {leg_boost}")));
    }
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for (f, &a) in areas.iter().enumerate() {
        acc += if is_leg(f) { a * leg_boost } else { a };
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidAssets("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut faces = Vec::with_capacity(n);
    let mut bary = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random::<f64>() * acc;
        let f = cdf.partition_point(|&c| c <= x).min(areas.len() - 1);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        faces.push(f as u32);
        bary.push([1.0 - r1, r1 * (1.0 - r2), r1 * r2]);
    }
    Ok(SurfacePlan { faces, bary })
}

impl SurfacePlan {
    pub fn apply<T: Real>(&self, vertices: &[Vec3<T>], faces: &[[u32; 3]]) -> Vec<Vec3<T>> {
        self.faces
            .iter()
            .zip(&self.bary)
            .map(|(&f, b)| {
                let tri = faces[f as usize];
                let mut p = [T::zero(); 3];
                for (c, slot) in p.iter_mut().enumerate() {
                    let xs = [
                        vertices[tri[0] as usize][c],
                        vertices[tri[1] as usize][c],
                        vertices[tri[2] as usize][c],
                    ];
                    *slot = T::affine(T::zero(), b, &xs);
                }
                p
            })
            .collect()
    }
}

/// Plan drawn from the canonical template's face areas.
pub fn template_plan(model: &BodyModel, n: usize, leg_boost: f64, seed: u64) -> Result<SurfacePlan> {
    plan_samples(&model.template_areas, |f| model.is_leg_face(f), n, leg_boost, seed)
}

/// `n` seeded area-weighted samples on a posed mesh.
pub fn sample_surface(model: &BodyModel, mesh: &PosedMesh<f64>, n: usize, leg_boost: f64, seed: u64) -> Result<Vec<[f64; 3]>> {
    let areas = face_areas(&mesh.vertices, &model.assets.faces);
    let plan = plan_samples(&areas, |f| model.is_leg_face(f), n, leg_boost, seed)?;
    Ok(plan.apply(&mesh.vertices, &model.assets.faces))
}
