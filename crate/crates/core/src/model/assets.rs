//! Static template data of the articulated body model.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Number of shape coefficients.
pub const SHAPE_DIM: usize = 30;
/// Maximum joint influences per vertex.
pub const MAX_INFLUENCES: usize = 4;

/// Where a model keypoint is read from on the posed mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Anchor {
    Joint(u32),
    Vertex(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointDef {
    pub name: String,
    pub anchor: Anchor,
}

/// Gaussian prior with dense row-major covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
}

impl GaussianPrior {
    pub fn standard(mean: Vec<f64>) -> Self {
        let n = mean.len();
        let mut covariance = vec![0.0; n * n];
        for i in 0..n {
            covariance[i * n + i] = 1.0;
        }
        GaussianPrior { mean, covariance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Σ⁻¹ via Cholesky. Fails when Σ is not positive definite.
    pub fn precision(&self, what: &str) -> Result<Precision> {
        let n = self.dim();
        if self.covariance.len() != n * n {
            return Err(Error::InvalidAssets(format!(
                "{what} covariance has {} entries, expected {}",
                self.covariance.len(),
                n * n
            )));
        }
        let cov = DMatrix::from_row_slice(n, n, &self.covariance);
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (cov[(i, j)], cov[(j, i)]);
                if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::InvalidAssets(format!("{what} covariance is not symmetric at ({i},{j})")));
                }
            }
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::InvalidAssets(format!("{what} covariance failed Cholesky factorization")))?;
        let inv = chol.inverse();
        let mut dense = vec![0.0; n * n];
        let mut diagonal = true;
        for i in 0..n {
            for j in 0..n {
                dense[i * n + j] = inv[(i, j)];
                if i != j && inv[(i, j)] != 0.0 {
                    diagonal = false;
                }
            }
        }
        Ok(Precision { dim: n, dense, diagonal })
    }
}

/// Precomputed inverse covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Precision {
    pub dim: usize,
    pub dense: Vec<f64>,
    pub diagonal: bool,
}

impl Precision {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.dense[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.dense[i * self.dim + i]).collect()
    }
}

/// Sparse row-stochastic skinning matrix, `MAX_INFLUENCES` slots per vertex.
/// Unused slots carry weight 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinWeights {
    pub joints: Vec<[u32; MAX_INFLUENCES]>,
    pub weights: Vec<[f64; MAX_INFLUENCES]>,
}

/// Canonical mesh, skeleton, skinning, shape space and annotation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateAssets {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
    pub joint_names: Vec<String>,
    pub rest_joints: Vec<[f64; 3]>,
    /// Parent joint index; `-1` marks the root.
    pub parent: Vec<i32>,
    pub skin: SkinWeights,
    /// `SHAPE_DIM` vertex displacement fields.
    pub shape_basis: Vec<Vec<[f64; 3]>>,
    /// Matching joint displacement fields (rest joints move with the shape).
    pub joint_shape_basis: Vec<Vec<[f64; 3]>>,
    pub shape_prior: GaussianPrior,
    pub pose_prior: GaussianPrior,
    /// Per-coefficient weights of the limb proportion penalty; zero marks a
    /// coefficient that is not limb-related.
    pub limb_weights: Vec<f64>,
    pub keypoints: Vec<KeypointDef>,
    pub foot_pairs: Vec<(u32, u32)>,
    pub foot_joints: Vec<u32>,
    pub leg_faces: Vec<u32>,
}

impl TemplateAssets {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn joint_count(&self) -> usize {
        self.rest_joints.len()
    }

    pub fn root(&self) -> usize {
        self.parent.iter().position(|&p| p < 0).unwrap_or(0)
    }

    /// Checks every structural invariant and returns a topological joint
    /// order (parents before children).
    pub fn validate(&self) -> Result<Vec<usize>> {
        let bad = |m: String| Err(Error::InvalidAssets(m));
        let nv = self.vertices.len();
        let nj = self.rest_joints.len();
        if nv == 0 || nj == 0 {
            return bad("empty mesh or skeleton".into());
        }
        if self.vertices.iter().flatten().any(|x| !x.is_finite())
            || self.rest_joints.iter().flatten().any(|x| !x.is_finite())
        {
            return bad("non-finite vertex or joint position".into());
        }
        if let Some((i, _)) = self
            .faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&v| v as usize >= nv))
        {
            return bad(format!("face {i} references a vertex out of range"));
        }
        if self.parent.len() != nj || self.joint_names.len() != nj {
            return bad(format!("parent/name tables must have {nj} entries"));
        }
        let roots: Vec<usize> = (0..nj).filter(|&j| self.parent[j] < 0).collect();
        if roots.len() != 1 {
            return bad(format!("skeleton must have exactly one root, found {}", roots.len()));
        }
        for (j, &p) in self.parent.iter().enumerate() {
            if p >= nj as i32 || p == j as i32 {
                return bad(format!("joint {j} has invalid parent {p}"));
            }
        }
        // topological order by repeated relaxation; a cycle leaves joints unplaced
        let mut order = vec![roots[0]];
        let mut placed = vec![false; nj];
        placed[roots[0]] = true;
        let mut head = 0;
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); nj];
        for (j, &p) in self.parent.iter().enumerate() {
            if p >= 0 {
                children[p as usize].push(j);
            }
        }
        while head < order.len() {
            let j = order[head];
            head += 1;
            for &c in &children[j] {
                if !placed[c] {
                    placed[c] = true;
                    order.push(c);
                }
            }
        }
        if order.len() != nj {
            return bad("parent array contains a cycle or disconnected joints".into());
        }
        if self.skin.joints.len() != nv || self.skin.weights.len() != nv {
            return bad(format!("skinning tables must have {nv} rows"));
        }
        for (i, (js, ws)) in self.skin.joints.iter().zip(&self.skin.weights).enumerate() {
            let mut sum = 0.0;
            for (&j, &w) in js.iter().zip(ws) {
                if !(w >= 0.0) || !w.is_finite() {
                    return bad(format!("vertex {i} has a negative or non-finite skin weight"));
                }
                if w > 0.0 && j as usize >= nj {
                    return bad(format!("vertex {i} skinned to joint {j} out of range"));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return bad(format!("skin weights of vertex {i} sum to {sum}"));
            }
        }
        if self.shape_basis.len() != SHAPE_DIM || self.joint_shape_basis.len() != SHAPE_DIM {
            return bad(format!("shape basis must have {SHAPE_DIM} components"));
        }
        if self.shape_basis.iter().any(|b| b.len() != nv) || self.joint_shape_basis.iter().any(|b| b.len() != nj) {
            return bad("shape basis component has wrong length".into());
        }
        if self.shape_prior.dim() != SHAPE_DIM {
            return bad(format!("shape prior must have dimension {SHAPE_DIM}"));
        }
        if self.pose_prior.dim() != 6 * nj {
            return bad(format!("pose prior must have dimension {}", 6 * nj));
        }
        if self.limb_weights.len() != SHAPE_DIM || self.limb_weights.iter().any(|&w| !(w >= 0.0)) {
            return bad(format!("limb weight vector must have {SHAPE_DIM} nonnegative entries"));
        }
        for k in &self.keypoints {
            let ok = match k.anchor {
                Anchor::Joint(j) => (j as usize) < nj,
                Anchor::Vertex(v) => (v as usize) < nv,
            };
            if !ok {
                return bad(format!("keypoint `{}` anchor out of range", k.name));
            }
        }
        if self
            .foot_pairs
            .iter()
            .any(|&(a, b)| a as usize >= nj || b as usize >= nj)
            || self.foot_joints.iter().any(|&j| j as usize >= nj)
        {
            return bad("foot table joint index out of range".into());
        }
        if self.leg_faces.iter().any(|&f| f as usize >= self.faces.len()) {
            return bad("leg face index out of range".into());
        }
        Ok(order)
    }
}

/// Validated assets plus derived tables shared by every posing call.
#[derive(Debug, Clone)]
pub struct BodyModel {
    pub assets: TemplateAssets,
    pub(crate) order: Vec<usize>,
    pub(crate) shape_precision: Precision,
    pub(crate) pose_precision: Precision,
    /// Per-face flag: face belongs to a leg.
    pub(crate) leg_face: Vec<bool>,
    /// Shape basis transposed to `[(vertex * 3 + axis) * SHAPE_DIM + k]`.
    pub(crate) vertex_basis_t: Vec<f64>,
    pub(crate) joint_basis_t: Vec<f64>,
    pub(crate) template_areas: Vec<f64>,
}

fn transpose_basis(basis: &[Vec<[f64; 3]>], rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * 3 * SHAPE_DIM];
    for (k, field) in basis.iter().enumerate() {
        for (i, d) in field.iter().enumerate() {
            for c in 0..3 {
                out[(i * 3 + c) * SHAPE_DIM + k] = d[c];
            }
        }
    }
    out
}

impl BodyModel {
    pub fn new(assets: TemplateAssets) -> Result<Self> {
        let order = assets.validate()?;
        let shape_precision = assets.shape_prior.precision("shape prior")?;
        let pose_precision = assets.pose_prior.precision("pose prior")?;
        let mut leg_face = vec![false; assets.faces.len()];
        for &f in &assets.leg_faces {
            leg_face[f as usize] = true;
        }
        let vertex_basis_t = transpose_basis(&assets.shape_basis, assets.vertex_count());
        let joint_basis_t = transpose_basis(&assets.joint_shape_basis, assets.joint_count());
        let template_areas = super::sampling::face_areas(&assets.vertices, &assets.faces);
        Ok(BodyModel {
            template_areas,
            assets,
            order,
            shape_precision,
            pose_precision,
            leg_face,
            vertex_basis_t,
            joint_basis_t,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.assets.joint_count()
    }

    pub fn pose_dim(&self) -> usize {
        6 * self.joint_count()
    }

    pub fn is_leg_face(&self, f: usize) -> bool {
        self.leg_face[f]
    }
}

impl std::ops::Deref for BodyModel {
    type Target = TemplateAssets;
    fn deref(&self) -> &TemplateAssets {
        &self.assets
    }
}
