use super::io_err;
use crate::error::Result;
use crate::model::{pose_mesh, BodyModel};
use crate::objectives::TERM_NAMES;
use crate::pipeline::{MotionSolution, StageLog};
use std::fmt::Write;
use std::path::{Path, PathBuf};

/// Wavefront OBJ text with 1-based face indices.
pub fn obj_string(vertices: &[[f64; 3]], faces: &[[u32; 3]]) -> String {
    let mut s = String::with_capacity(40 * (vertices.len() + faces.len()));
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// Writes `mesh_%06d.obj` for every frame of a solution.
pub fn write_mesh_sequence(dir: &Path, model: &BodyModel, solution: &MotionSolution) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Vec::with_capacity(solution.len());
    for (t, pose) in solution.frames.iter().enumerate() {
        let mesh = pose_mesh(model, &solution.beta, solution.scale, pose)?;
        let path = dir.join(format!("mesh_{t:06}.obj"));
        std::fs::write(&path, obj_string(&mesh.vertices, &model.assets.faces)).map_err(io_err(&path))?;
        out.push(path);
    }
    Ok(out)
}

/// One row per frame and joint: `frame,joint,name,x,y,z`.
pub fn joints_csv(model: &BodyModel, solution: &MotionSolution) -> String {
    let mut s = String::from("frame,joint,name,x,y,z\n");
    for (t, joints) in solution.joints.iter().enumerate() {
        for (j, p) in joints.iter().enumerate() {
            let name = model.assets.joint_names.get(j).map_or("", |n| n.as_str());
            let _ = writeln!(s, "{t},{j},{name},{},{},{}", p[0], p[1], p[2]);
        }
    }
    s
}

/// Per-step losses: `stage,step,loss` followed by the seven unweighted terms.
pub fn stage_logs_csv(logs: &[StageLog]) -> String {
    let mut s = String::from("stage,step,loss");
    for name in TERM_NAMES {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for log in logs {
        let mut done = log.skipped.iter().peekable();
        let mut step = 0;
        for (loss, terms) in log.loss.iter().zip(&log.terms) {
            while done.next_if(|&&k| k == step).is_some() {
                step += 1;
            }
            let _ = write!(s, "{},{step},{loss}", log.stage);
            for x in terms {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
            step += 1;
        }
    }
    s
}
