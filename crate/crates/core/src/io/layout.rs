//! Sequence directory:
//!
//! ```text
//! cameras.json            camera rig
//! meta.json               {"frames", "fps", "setting"}
//! view_<id>/mask/%06d.png     8-bit, 0 or 255
//! view_<id>/depth/%06d.png    16-bit, units of the camera's depth_unit (optional)
//! view_<id>/keypoints.json    [{"t", "keypoints": [...]}]
//! view_<id>/cse.json          [{"t", "correspondences": [...]}]
//! ```
//!
//! An `rgb/` directory may sit next to `mask/`; it is not read.

use super::{io_err, read_json, write_json};
use crate::camera::{CameraRig, DepthImage, Mask};
use crate::error::{Error, Result};
use crate::objectives::{Correspondence, FrameObservation, KeypointObs, Sequence, Setting};
use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub frames: usize,
    pub fps: f64,
    /// The setting the capture supports, if recorded.
    #[serde(default)]
    pub setting: Option<Setting>,
}

#[derive(Serialize, Deserialize)]
struct KeypointFrame {
    t: usize,
    keypoints: Vec<KeypointObs>,
}

#[derive(Serialize, Deserialize)]
struct CseFrame {
    t: usize,
    correspondences: Vec<Correspondence>,
}

pub fn frame_file(t: usize) -> String {
    format!("{t:06}.png")
}

pub fn view_dir(root: &Path, id: &str) -> PathBuf {
    root.join(format!("view_{id}"))
}

pub fn save_sequence(root: &Path, seq: &Sequence, setting: Option<Setting>) -> Result<()> {
    seq.rig.validate()?;
    write_json(&root.join("cameras.json"), &seq.rig)?;
    let meta = SequenceMeta {
        frames: seq.frames(),
        fps: seq.fps,
        setting,
    };
    write_json(&root.join("meta.json"), &meta)?;
    for (cam, obs) in seq.rig.cameras.iter().zip(&seq.views) {
        let dir = view_dir(root, &cam.id);
        for sub in ["mask", "depth"] {
            let d = dir.join(sub);
            if sub == "mask" || obs.iter().any(|o| o.depth.is_some()) {
                std::fs::create_dir_all(&d).map_err(io_err(&d))?;
            }
        }
        for o in obs {
            let mask: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
                o.mask.width,
                o.mask.height,
                o.mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
            )
            .ok_or_else(|| Error::Dimension(format!("view `{}` frame {}: mask buffer size", cam.id, o.t)))?;
            save_png(&dir.join("mask").join(frame_file(o.t)), DynamicImage::ImageLuma8(mask))?;
            if let Some(d) = &o.depth {
                let depth: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(d.width, d.height, d.data.clone())
                    .ok_or_else(|| Error::Dimension(format!("view `{}` frame {}: depth buffer size", cam.id, o.t)))?;
                save_png(&dir.join("depth").join(frame_file(o.t)), DynamicImage::ImageLuma16(depth))?;
            }
        }
        let kps: Vec<KeypointFrame> = obs
            .iter()
            .map(|o| KeypointFrame {
                t: o.t,
                keypoints: o.keypoints.clone(),
            })
            .collect();
        write_json(&dir.join("keypoints.json"), &kps)?;
        let cse: Vec<CseFrame> = obs
            .iter()
            .map(|o| CseFrame {
                t: o.t,
                correspondences: o.correspondences.clone(),
            })
            .collect();
        write_json(&dir.join("cse.json"), &cse)?;
    }
    Ok(())
}

fn save_png(path: &Path, img: DynamicImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Image {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

/// Loads a sequence directory. Every absent frame file is collected and
/// reported in one `Missing` error.
pub fn load_sequence(root: &Path) -> Result<(Sequence, SequenceMeta)> {
    let rig: CameraRig = read_json(&root.join("cameras.json"))?;
    rig.validate()?;
    let meta: SequenceMeta = read_json(&root.join("meta.json"))?;
    let meta_file = root.join("meta.json").display().to_string();
    if meta.frames == 0 {
        return Err(Error::schema(meta_file, "frames", "must be positive"));
    }
    if !(meta.fps > 0.0) || !meta.fps.is_finite() {
        return Err(Error::schema(meta_file, "fps", "must be positive"));
    }
    let n = meta.frames;
    let mut missing = Vec::new();
    let mut views = Vec::new();
    for cam in &rig.cameras {
        let dir = view_dir(root, &cam.id);
        let name = format!("view_{}", cam.id);
        if !dir.is_dir() {
            missing.push(format!("{name}/ (entire view)"));
            continue;
        }
        for sub in ["mask", "depth"] {
            let extra = extra_frames(&dir.join(sub), n);
            if !extra.is_empty() {
                return Err(Error::Dimension(format!(
                    "view `{}`: {sub}/ has frames {:?} beyond the {n} declared in meta.json",
                    cam.id, extra
                )));
            }
        }
        let kps = load_indexed(&dir.join("keypoints.json"), n, &name, &mut missing, |f: KeypointFrame| {
            (f.t, f.keypoints)
        })?;
        let cse = load_indexed(&dir.join("cse.json"), n, &name, &mut missing, |f: CseFrame| {
            (f.t, f.correspondences)
        })?;
        let has_depth = dir.join("depth").is_dir();
        let mut obs = Vec::with_capacity(n);
        for t in 0..n {
            let mask_path = dir.join("mask").join(frame_file(t));
            let depth_path = dir.join("depth").join(frame_file(t));
            let mut complete = true;
            if !mask_path.is_file() {
                missing.push(format!("{name}/mask/{}", frame_file(t)));
                complete = false;
            }
            if has_depth && !depth_path.is_file() {
                missing.push(format!("{name}/depth/{}", frame_file(t)));
                complete = false;
            }
            if !complete || !missing.is_empty() {
                continue;
            }
            let mask = load_mask(&mask_path, cam.width, cam.height)?;
            let depth = if has_depth {
                Some(load_depth(&depth_path, cam.width, cam.height)?)
            } else {
                None
            };
            obs.push(FrameObservation {
                view: cam.id.clone(),
                t,
                mask,
                depth,
                keypoints: kps[t].clone().unwrap_or_default(),
                correspondences: cse[t].clone().unwrap_or_default(),
            });
        }
        views.push(obs);
    }
    if !missing.is_empty() {
        return Err(Error::Missing(format!(
            "{} item(s) absent under {}: {}",
            missing.len(),
            root.display(),
            missing.join(", ")
        )));
    }
    Ok((
        Sequence {
            rig,
            fps: meta.fps,
            views,
        },
        meta,
    ))
}

/// Frame indices of PNGs in `dir` at or beyond `frames`.
fn extra_frames(dir: &Path, frames: usize) -> Vec<usize> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut out: Vec<usize> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".png")?.parse().ok()
        })
        .filter(|&t| t >= frames)
        .collect();
    out.sort_unstable();
    out
}

fn load_indexed<R: serde::de::DeserializeOwned, V>(
    path: &Path,
    frames: usize,
    view: &str,
    missing: &mut Vec<String>,
    split: impl Fn(R) -> (usize, V),
) -> Result<Vec<Option<V>>> {
    let file = path.file_name().and_then(|f| f.to_str()).unwrap_or("?");
    let mut out: Vec<Option<V>> = (0..frames).map(|_| None).collect();
    if !path.is_file() {
        missing.push(format!("{view}/{file}"));
        return Ok(out);
    }
    let rows: Vec<R> = read_json(path)?;
    for (k, r) in rows.into_iter().enumerate() {
        let (t, v) = split(r);
        let slot = out.get_mut(t).ok_or_else(|| {
            Error::schema(
                path.display().to_string(),
                format!("[{k}].t"),
                format!("frame {t} is beyond the {frames} declared in meta.json"),
            )
        })?;
        if slot.is_some() {
            return Err(Error::schema(path.display().to_string(), format!("[{k}].t"), format!("frame {t} repeats")));
        }
        *slot = Some(v);
    }
    for (t, v) in out.iter().enumerate() {
        if v.is_none() {
            missing.push(format!("{view}/{file} frame {t}"));
        }
    }
    Ok(out)
}

fn open(path: &Path, w: u32, h: u32) -> Result<DynamicImage> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    if img.width() != w || img.height() != h {
        return Err(Error::Image {
            path: path.display().to_string(),
            msg: format!("size {}x{} does not match the camera's {w}x{h}", img.width(), img.height()),
        });
    }
    Ok(img)
}

fn load_mask(path: &Path, w: u32, h: u32) -> Result<Mask> {
    let DynamicImage::ImageLuma8(img) = open(path, w, h)? else {
        return Err(Error::Image {
            path: path.display().to_string(),
            msg: "masks must be 8-bit grayscale".into(),
        });
    };
    let mut data = Vec::with_capacity(img.len());
    for &v in img.as_raw() {
        match v {
            0 => data.push(false),
            255 => data.push(true),
            _ => {
                return Err(Error::Image {
                    path: path.display().to_string(),
                    msg: format!("mask value {v}, expected 0 or 255"),
                })
            }
        }
    }
    Ok(Mask { width: w, height: h, data })
}

fn load_depth(path: &Path, w: u32, h: u32) -> Result<DepthImage> {
    let DynamicImage::ImageLuma16(img) = open(path, w, h)? else {
        return Err(Error::Image {
            path: path.display().to_string(),
            msg: "depth must be 16-bit grayscale".into(),
        });
    };
    Ok(DepthImage {
        width: w,
        height: h,
        data: img.into_raw(),
    })
}
