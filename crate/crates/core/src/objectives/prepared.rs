use super::Sequence;
use crate::camera::backproject;
use crate::error::{Error, Result};
use crate::nn::KdTree;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sampling sizes used by the point-based terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    /// Surface samples drawn from the model per evaluation.
    pub samples: usize,
    /// Sampling density multiplier on leg faces.
    pub leg_boost: f64,
    /// Maximum foreground pixels kept per mask.
    pub mask_cap: usize,
    /// Maximum lifted depth points kept per frame.
    pub depth_cap: usize,
    /// Keypoints below this confidence are ignored.
    pub keypoint_threshold: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            samples: 1500,
            leg_boost: 4.0,
            mask_cap: 4000,
            depth_cap: 4000,
            keypoint_threshold: 0.3,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.mask_cap == 0 || self.depth_cap == 0 {
            return Err(Error::Config("sample counts and caps must be at least 1".into()));
        }
        if !(self.leg_boost >= 1.0) {
            return Err(Error::Config("leg boost must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.keypoint_threshold) {
            return Err(Error::Config("keypoint threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Search structures for one view at one frame.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    /// Foreground pixel coordinates; `None` for an empty mask.
    pub mask: Option<KdTree<2>>,
    /// Lifted masked depth; `None` without usable depth.
    pub depth: Option<KdTree<3>>,
}

fn subsample<P: Copy>(pts: Vec<P>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<P> {
    if pts.len() <= cap {
        return pts;
    }
    let mut idx = sample(rng, pts.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pts[i]).collect()
}

/// Builds `[view][frame]` search structures. Depth is lifted only when
/// `use_depth` is set.
pub fn prepare(seq: &Sequence, use_depth: bool, cfg: &SampleConfig, seed: u64) -> Result<Vec<Vec<PreparedFrame>>> {
    let mut out = Vec::with_capacity(seq.views.len());
    for (v, (cam, obs)) in seq.rig.cameras.iter().zip(&seq.views).enumerate() {
        let mut frames = Vec::with_capacity(obs.len());
        for o in obs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((v as u64) << 32) ^ o.t as u64);
            let px = subsample(o.mask.foreground(), cfg.mask_cap, &mut rng);
            let mask = (!px.is_empty()).then(|| KdTree::new(px));
            if mask.is_none() {
                log::warn!("view `{}` frame {}: empty mask, mask term skipped", o.view, o.t);
            }
            let depth = match (&o.depth, use_depth) {
                (Some(d), true) => {
                    let pts = subsample(backproject(cam, d, &o.mask)?, cfg.depth_cap, &mut rng);
                    if pts.is_empty() {
                        log::warn!("view `{}` frame {}: no masked depth, depth term skipped", o.view, o.t);
                    }
                    (!pts.is_empty()).then(|| KdTree::new(pts))
                }
                _ => None,
            };
            frames.push(PreparedFrame { mask, depth });
        }
        out.push(frames);
    }
    Ok(out)
}
