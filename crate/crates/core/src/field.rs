//! Time-conditioned parameter field: a smooth embedding of the frame index
//! fed to two small tanh networks that output per-frame translation,
//! orientation and joint rotations.

use crate::error::{Error, Result};
use crate::model::{FramePose, ROT6D_IDENTITY};
use crate::real::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const BANDS: usize = 4;
pub const EMBED_DIM: usize = 1 + 2 * BANDS;
pub const TR_HIDDEN: usize = 16;
pub const THETA_HIDDEN: usize = 64;
pub const TR_OUT: usize = 9;
const INIT_STD: f64 = 1e-2;

/// `[t̂, sin(2π t̂), cos(2π t̂), …, sin(8π t̂), cos(8π t̂)]` with `t̂ = t/(T−1)`.
pub fn embed(t: usize, frames: usize) -> [f64; EMBED_DIM] {
    let th = if frames <= 1 { 0.0 } else { t as f64 / (frames - 1) as f64 };
    embed_normalized(th)
}

pub fn embed_normalized(th: f64) -> [f64; EMBED_DIM] {
    let mut e = [0.0; EMBED_DIM];
    e[0] = th;
    for k in 1..=BANDS {
        let a = 2.0 * std::f64::consts::PI * k as f64 * th;
        e[2 * k - 1] = a.sin();
        e[2 * k] = a.cos();
    }
    e
}

/// Fully connected tanh network stored as one flat parameter vector.
///
/// Layout per hidden layer: weights (out × in, row-major) then biases. The
/// output layer has weights only, followed by the output bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths from input to output, e.g. `[9, 16, 16, 9]`.
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        let n = sizes.len();
        let mut c = 0;
        for l in 0..n - 1 {
            c += sizes[l] * sizes[l + 1];
            if l + 2 < n {
                c += sizes[l + 1];
            }
        }
        c + sizes[n - 1]
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::Dimension(format!("bad layer sizes {:?}", self.sizes)));
        }
        if self.params.len() != Self::param_count(&self.sizes) {
            return Err(Error::Dimension(format!(
                "layer sizes {:?} need {} parameters, got {}",
                self.sizes,
                Self::param_count(&self.sizes),
                self.params.len()
            )));
        }
        if self.params.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("non-finite network weight".into()));
        }
        Ok(())
    }

    /// Output bias slice.
    pub fn bias(&self) -> &[f64] {
        &self.params[self.params.len() - self.output_dim()..]
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        let n = self.params.len() - self.output_dim();
        &mut self.params[n..]
    }

    /// Final-layer weight slice.
    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        let n = self.sizes.len();
        let w = self.sizes[n - 2] * self.sizes[n - 1];
        let end = self.params.len() - self.output_dim();
        &mut self.params[end - w..end]
    }
}

/// Evaluates a network with parameters `params` (possibly on the tape) at a
/// constant input.
pub fn eval_mlp<T: Real>(sizes: &[usize], params: &[T], input: &[f64]) -> Vec<T> {
    debug_assert_eq!(params.len(), Mlp::param_count(sizes));
    debug_assert_eq!(input.len(), sizes[0]);
    let n = sizes.len();
    let mut at = 0;
    let mut h: Vec<T> = Vec::new();
    for l in 0..n - 1 {
        let (i, o) = (sizes[l], sizes[l + 1]);
        let w = &params[at..at + i * o];
        at += i * o;
        let hidden = l + 2 < n;
        let b = if hidden {
            let b = &params[at..at + o];
            at += o;
            Some(b)
        } else {
            None
        };
        let mut next = Vec::with_capacity(o);
        for r in 0..o {
            let row = &w[r * i..(r + 1) * i];
            let z = if l == 0 {
                T::affine(b.map_or(T::zero(), |b| b[r]), input, row)
            } else {
                let d = T::dot(row, &h);
                match b {
                    Some(b) => d + b[r],
                    None => d,
                }
            };
            next.push(if hidden { z.tanh() } else { z });
        }
        h = next;
    }
    let bias = &params[at..];
    h.iter().zip(bias).map(|(&x, &b)| x + b).collect()
}

/// The two networks ψ = (net_TR, net_θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldWeights {
    pub tr: Mlp,
    pub theta: Mlp,
}

impl FieldWeights {
    pub fn joint_count(&self) -> usize {
        self.theta.output_dim() / 6
    }

    pub fn validate(&self, joints: usize) -> Result<()> {
        self.tr.validate()?;
        self.theta.validate()?;
        if self.tr.input_dim() != EMBED_DIM || self.theta.input_dim() != EMBED_DIM {
            return Err(Error::Dimension("field input must match the time embedding".into()));
        }
        if self.tr.output_dim() != TR_OUT {
            return Err(Error::Dimension(format!("translation/orientation net outputs {}", self.tr.output_dim())));
        }
        if self.theta.output_dim() != 6 * joints {
            return Err(Error::Dimension(format!(
                "pose net outputs {} values for {joints} joints",
                self.theta.output_dim()
            )));
        }
        Ok(())
    }
}

/// Frame pose from network parameters that may live on the tape.
pub fn eval_field_with<T: Real>(tr: (&[usize], &[T]), theta: (&[usize], &[T]), embedding: &[f64]) -> FramePose<T> {
    let a = eval_mlp(tr.0, tr.1, embedding);
    let theta = eval_mlp(theta.0, theta.1, embedding);
    FramePose {
        theta,
        translation: [a[0], a[1], a[2]],
        orientation: [a[3], a[4], a[5], a[6], a[7], a[8]],
    }
}

/// `(θ_t, γ_t, φ_t)` for frame `t` of a `frames`-long sequence.
pub fn eval_field(psi: &FieldWeights, t: usize, frames: usize) -> FramePose<f64> {
    eval_field_at(psi, embed(t, frames))
}

pub fn eval_field_at(psi: &FieldWeights, e: [f64; EMBED_DIM]) -> FramePose<f64> {
    eval_field_with((&psi.tr.sizes, &psi.tr.params), (&psi.theta.sizes, &psi.theta.params), &e)
}

fn init_mlp(rng: &mut ChaCha8Rng, sizes: Vec<usize>, bias: &[f64]) -> Mlp {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut params = Vec::with_capacity(Mlp::param_count(&sizes));
    let n = sizes.len();
    for l in 0..n - 1 {
        let (i, o) = (sizes[l], sizes[l + 1]);
        if l + 2 < n {
            params.extend((0..i * o).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, o));
        } else {
            params.extend(std::iter::repeat_n(0.0, i * o));
        }
    }
    params.extend_from_slice(bias);
    Mlp { sizes, params }
}

/// Fresh field whose output is exactly its bias at every frame: the rest
/// pose, and either the supplied coarse `(γ̄, φ̄)` or the identity placement.
pub fn init_field(seed: u64, joints: usize, coarse: Option<([f64; 3], [f64; 6])>) -> FieldWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, p) = coarse.unwrap_or(([0.0; 3], ROT6D_IDENTITY));
    let tr_bias: Vec<f64> = g.iter().chain(&p).copied().collect();
    let tr = init_mlp(&mut rng, vec![EMBED_DIM, TR_HIDDEN, TR_HIDDEN, TR_OUT], &tr_bias);
    let theta = init_mlp(
        &mut rng,
        vec![EMBED_DIM, THETA_HIDDEN, THETA_HIDDEN, 6 * joints],
        &ROT6D_IDENTITY.repeat(joints),
    );
    FieldWeights { tr, theta }
}
