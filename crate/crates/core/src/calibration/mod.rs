//! Pitch template, distance maps, correspondence initialization and per-frame
//! chamfer refinement of broadcast cameras.

mod distance;
mod edges;
mod init;
mod refine;
mod template;

pub use distance::{build_distance_map, DistanceMap, EdgeSet};
pub use edges::{extract_edges, sobel_magnitude};
pub use init::{fit_homography, init_camera_from_correspondences, reprojection_rmse, Correspondence};
pub use refine::{chamfer_objective, refine_camera, RefineConfig, Refinement};
pub use template::{sample_template_points, FieldMarkings, FieldTemplate, Primitive};

use nalgebra::Point3;

use crate::error::Error;
use crate::geometry::Camera;

/// Cameras solved before a sequence failed, plus the failure tagged with its frame.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SequenceFailure {
    pub solved: Vec<Camera>,
    #[source]
    pub error: Error,
}

/// How the first frame of a sequence is initialized.
#[derive(Debug, Clone)]
pub enum SequenceStart {
    Camera(Camera),
    Correspondences(Vec<Correspondence>),
}

/// Calibrates every frame, warm-starting each from the previous solution.
///
/// Frame 0 is initialized from `first_frame_pairs`.
pub fn calibrate_sequence(
    frames: &[EdgeSet],
    first_frame_pairs: &[Correspondence],
    template_points: &[Point3<f64>],
    config: &RefineConfig,
) -> Result<Vec<Camera>, SequenceFailure> {
    calibrate_sequence_from(
        frames,
        &SequenceStart::Correspondences(first_frame_pairs.to_vec()),
        template_points,
        config,
    )
}

/// [`calibrate_sequence`] with an explicit first-frame initialization.
pub fn calibrate_sequence_from(
    frames: &[EdgeSet],
    start: &SequenceStart,
    template_points: &[Point3<f64>],
    config: &RefineConfig,
) -> Result<Vec<Camera>, SequenceFailure> {
    let mut solved: Vec<Camera> = Vec::with_capacity(frames.len());
    if frames.is_empty() {
        return Err(SequenceFailure {
            solved,
            error: Error::InvalidInput("no frames to calibrate".into()),
        });
    }
    for (k, edges) in frames.iter().enumerate() {
        let step = || -> crate::Result<Camera> {
            let init = match (solved.last(), start) {
                (Some(prev), _) => prev.clone(),
                (None, SequenceStart::Camera(c)) => c.clone(),
                (None, SequenceStart::Correspondences(pairs)) => {
                    init_camera_from_correspondences(pairs, edges.image_size())?
                }
            };
            let dmap = build_distance_map(edges)?;
            Ok(refine_camera(&init, &dmap, template_points, config)?.camera)
        };
        match step() {
            Ok(camera) => solved.push(camera),
            Err(e) => {
                return Err(SequenceFailure {
                    solved,
                    error: e.at_frame(k),
                })
            }
        }
    }
    Ok(solved)
}
