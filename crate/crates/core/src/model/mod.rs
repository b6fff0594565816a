//! Parametric articulated body model.

mod assets;
mod kinematics;
mod posing;
mod sampling;

pub use assets::{
    Anchor, BodyModel, GaussianPrior, KeypointDef, Precision, SkinWeights, TemplateAssets, MAX_INFLUENCES, SHAPE_DIM,
};
pub use kinematics::{
    forward_kinematics, forward_kinematics_with, rot6d_to_matrix, shaped_joints, shaped_vertices, FramePose,
    ROT6D_IDENTITY,
};
pub use posing::{keypoint_positions, pose_joints, pose_mesh, pose_state, BodyState, PosedMesh};
pub use sampling::{face_areas, plan_samples, sample_surface, template_plan, SurfacePlan};

#[cfg(test)]
mod tests;
