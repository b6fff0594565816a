//! On-disk formats: sequence directories, JSON documents and exports.

mod export;
mod layout;

pub use export::{joints_csv, obj_string, stage_logs_csv, write_mesh_sequence};
pub use layout::{frame_file, load_sequence, save_sequence, view_dir, SequenceMeta};

use crate::error::{Error, Result};
use crate::model::TemplateAssets;
use crate::pipeline::MotionSolution;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::Path;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a JSON document. Type errors name the offending field.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let json = |source| Error::Json {
        path: path.display().to_string(),
        source,
    };
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            Error::schema(path.display().to_string(), field, inner.to_string())
        } else {
            json(inner)
        }
    })?;
    de.end().map_err(json)?;
    Ok(value)
}

/// Writes pretty JSON, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load_assets(path: &Path) -> Result<TemplateAssets> {
    let a: TemplateAssets = read_json(path)?;
    a.validate()?;
    Ok(a)
}

pub fn save_assets(path: &Path, assets: &TemplateAssets) -> Result<()> {
    write_json(path, assets)
}

pub fn load_solution(path: &Path) -> Result<MotionSolution> {
    read_json(path)
}

pub fn save_solution(path: &Path, solution: &MotionSolution) -> Result<()> {
    write_json(path, solution)
}

#[cfg(test)]
mod tests;
