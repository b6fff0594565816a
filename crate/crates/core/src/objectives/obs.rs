use crate::camera::{CameraRig, DepthImage, Mask};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointObs {
    pub uv: [f64; 2],
    pub confidence: f64,
    pub present: bool,
}

impl KeypointObs {
    pub fn absent() -> Self {
        KeypointObs {
            uv: [0.0; 2],
            confidence: 0.0,
            present: false,
        }
    }
}

/// Pixel to template-vertex correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub uv: [f64; 2],
    pub vertex: u32,
    pub confidence: f64,
}

/// Everything observed by one camera at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub view: String,
    pub t: usize,
    pub mask: Mask,
    pub depth: Option<DepthImage>,
    pub keypoints: Vec<KeypointObs>,
    pub correspondences: Vec<Correspondence>,
}

impl FrameObservation {
    pub fn validate(&self, vertices: usize, keypoints: usize) -> Result<()> {
        let at = || format!("view `{}` frame {}", self.view, self.t);
        if let Some(d) = &self.depth {
            if !d.same_size(&self.mask) {
                return Err(Error::Dimension(format!("{}: depth and mask sizes differ", at())));
            }
        }
        if self.keypoints.len() != keypoints {
            return Err(Error::Dimension(format!(
                "{}: {} keypoints, model has {keypoints}",
                at(),
                self.keypoints.len()
            )));
        }
        let (w, h) = (self.mask.width as f64, self.mask.height as f64);
        let inside = |uv: [f64; 2]| uv[0] >= -0.5 && uv[1] >= -0.5 && uv[0] <= w - 0.5 && uv[1] <= h - 0.5;
        for k in &self.keypoints {
            if !(0.0..=1.0).contains(&k.confidence) {
                return Err(Error::InvalidState(format!("{}: keypoint confidence out of [0,1]", at())));
            }
            if k.present && !inside(k.uv) {
                return Err(Error::InvalidState(format!("{}: keypoint outside the image", at())));
            }
        }
        for c in &self.correspondences {
            if c.vertex as usize >= vertices || !(0.0..=1.0).contains(&c.confidence) || !inside(c.uv) {
                return Err(Error::InvalidState(format!("{}: invalid correspondence", at())));
            }
        }
        Ok(())
    }
}

/// Which inputs a fit may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "sv-rgb")]
    SvRgb,
    #[serde(rename = "sv-rgbd")]
    SvRgbd,
    #[serde(rename = "mv-rgb")]
    MvRgb,
    #[serde(rename = "mv-rgbd")]
    MvRgbd,
}

impl Setting {
    pub fn multi_view(self) -> bool {
        matches!(self, Setting::MvRgb | Setting::MvRgbd)
    }

    pub fn uses_depth(self) -> bool {
        matches!(self, Setting::SvRgbd | Setting::MvRgbd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::SvRgb => "sv-rgb",
            Setting::SvRgbd => "sv-rgbd",
            Setting::MvRgb => "mv-rgb",
            Setting::MvRgbd => "mv-rgbd",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sv-rgb" => Setting::SvRgb,
            "sv-rgbd" => Setting::SvRgbd,
            "mv-rgb" => Setting::MvRgb,
            "mv-rgbd" => Setting::MvRgbd,
            _ => return Err(Error::Config(format!("unknown setting `{s}`"))),
        })
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A multi-view sequence: `views[v][t]` observed by `rig.cameras[v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub rig: CameraRig,
    pub fps: f64,
    pub views: Vec<Vec<FrameObservation>>,
}

impl Sequence {
    pub fn frames(&self) -> usize {
        self.views.first().map_or(0, |v| v.len())
    }

    pub fn has_depth(&self) -> bool {
        self.views.iter().flatten().all(|o| o.depth.is_some()) && !self.views.is_empty()
    }

    /// Keeps only the views with the given indices, in order.
    pub fn select_views(&self, keep: &[usize]) -> Result<Sequence> {
        let mut cams = Vec::new();
        let mut views = Vec::new();
        for &v in keep {
            let cam = self
                .rig
                .cameras
                .get(v)
                .ok_or_else(|| Error::Config(format!("view index {v} out of range")))?;
            cams.push(cam.clone());
            views.push(self.views[v].clone());
        }
        Ok(Sequence {
            rig: CameraRig {
                id: self.rig.id.clone(),
                cameras: cams,
            },
            fps: self.fps,
            views,
        })
    }

    pub fn validate(&self, vertices: usize, keypoints: usize) -> Result<()> {
        self.rig.validate()?;
        if self.views.len() != self.rig.cameras.len() {
            return Err(Error::Dimension(format!(
                "{} cameras but {} observation streams",
                self.rig.cameras.len(),
                self.views.len()
            )));
        }
        let t = self.frames();
        for (cam, obs) in self.rig.cameras.iter().zip(&self.views) {
            if obs.len() != t {
                return Err(Error::Missing(format!(
                    "view `{}` has {} frames, expected {t}",
                    cam.id,
                    obs.len()
                )));
            }
            for (i, o) in obs.iter().enumerate() {
                if o.t != i || o.view != cam.id {
                    return Err(Error::InvalidState(format!("view `{}` frame {i} is out of order", cam.id)));
                }
                if o.mask.width != cam.width || o.mask.height != cam.height {
                    return Err(Error::Dimension(format!(
                        "view `{}` frame {i}: mask is {}x{}, camera is {}x{}",
                        cam.id, o.mask.width, o.mask.height, cam.width, cam.height
                    )));
                }
                o.validate(vertices, keypoints)?;
            }
        }
        Ok(())
    }
}
