//! End-to-end reconstruction over a manifest of per-frame inputs.
//!
//! Stages run in order: calibrate, track, segment, lift, mesh and smooth.
//! Each stage has a checkpoint format in the output directory so it can be
//! rerun on its own; [`run_pipeline`] chains them in memory and writes every
//! checkpoint plus a report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::{Rgb, RgbImage};
use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_sequence_from, extract_edges, sample_template_points, sobel_magnitude,
    Correspondence, EdgeSet, FieldTemplate, RefineConfig, SequenceStart,
};
use crate::depthmesh::{
    build_mesh, decode_depth, lift_billboard_at, Billboard, CropFrame, DepthMap, PlayerMesh, PLANE_CLASS,
};
use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::grid::{Grid, Mask};
use crate::io::{self, ObjObject};
use crate::segmentation::{
    skeleton_pixels, AnchorSet, SegmentConfig, SolveConfig, ANCHOR_BACKGROUND, ANCHOR_FREE, ANCHOR_OTHER,
    ANCHOR_PLAYER, DEFAULT_BONES,
};
use crate::tracking::{merge_tracks, refine_boxes, Detection, MergeConfig, Pose, RefineBoxesConfig, Track};
use crate::trajectory::{smooth_trajectory, TrajectoryProblem};

/// Tunable parameters of every stage. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    /// Spacing of template samples used for calibration, in meters.
    pub template_spacing: f64,
    pub smoothing_sigma: f64,
    pub min_visible_fraction: f64,
    /// Sobel threshold used when a frame has no edge map.
    pub edge_threshold: f64,
    pub padding: f64,
    /// Background anchors keep at least this many pixels from the person mask.
    pub background_margin: usize,
    pub min_height: f64,
    pub max_height: f64,
    pub dist_thresh: f64,
    pub frame_window: usize,
    pub tau: f64,
    pub solve_tolerance: f64,
    pub discontinuity: f64,
    pub smoothness: f64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            template_spacing: 0.5,
            smoothing_sigma: 1.0,
            min_visible_fraction: 0.25,
            edge_threshold: 1.0,
            padding: 0.1,
            background_margin: 3,
            min_height: 1.0,
            max_height: 2.5,
            dist_thresh: 50.0,
            frame_window: 10,
            tau: 0.5,
            solve_tolerance: 1e-6,
            discontinuity: 0.1,
            smoothness: 1.0,
            workers: 0,
        }
    }
}

impl Params {
    pub fn refine(&self) -> RefineConfig {
        RefineConfig {
            smoothing_sigma: self.smoothing_sigma,
            min_visible_fraction: self.min_visible_fraction,
            ..RefineConfig::default()
        }
    }

    pub fn refine_boxes(&self) -> RefineBoxesConfig {
        RefineBoxesConfig {
            padding: self.padding,
            height_range: (self.min_height, self.max_height),
        }
    }

    pub fn merge(&self) -> MergeConfig {
        MergeConfig {
            dist_thresh: self.dist_thresh,
            frame_window: self.frame_window,
        }
    }

    pub fn segment(&self) -> SegmentConfig {
        SegmentConfig {
            tau: self.tau,
            solve: SolveConfig {
                tolerance: self.solve_tolerance,
                max_sweeps: None,
            },
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
    }
}

/// Input files of one frame. Relative paths are resolved against the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInputs {
    pub image: PathBuf,
    /// Binary edge map; derived from the image when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    /// Detector boxes with poses as JSON lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    /// Person segmentation mask; everything counts as person when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Depth-class maps aligned with the detection lines, each spanning the
    /// refined box of its detection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_maps: Vec<Option<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub frames: Vec<FrameInputs>,
    /// Initial camera for frame 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<PathBuf>,
    /// Field-to-image correspondences for frame 0, used when no camera is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondences: Option<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub params: Params,
}

impl SceneManifest {
    /// Reads a manifest and makes its paths absolute relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: SceneManifest = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for f in &mut m.frames {
            fix(&mut f.image);
            for p in [&mut f.edges, &mut f.detections, &mut f.mask].into_iter().flatten() {
                fix(p);
            }
            for p in f.class_maps.iter_mut().flatten() {
                fix(p);
            }
        }
        for p in [&mut m.camera, &mut m.correspondences].into_iter().flatten() {
            fix(p);
        }
        fix(&mut m.output);
        Ok(m)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Checks that every referenced input exists.
    pub fn validate(&self) -> Result<()> {
        if self.camera.is_none() && self.correspondences.is_none() {
            return Err(Error::InvalidInput("manifest needs a camera or correspondences".into()));
        }
        let mut paths: Vec<&PathBuf> = self.camera.iter().chain(&self.correspondences).collect();
        for f in &self.frames {
            paths.push(&f.image);
            paths.extend(f.edges.iter().chain(&f.detections).chain(&f.mask));
            paths.extend(f.class_maps.iter().flatten());
        }
        match paths.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound))),
            None => Ok(()),
        }
    }
}

/// A per-frame or per-player failure that did not stop the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track: Option<usize>,
    pub message: String,
    /// Fatal errors leave frames without a result and fail the run.
    pub fatal: bool,
}

impl StageError {
    fn new(stage: &str, frame: Option<usize>, track: Option<usize>, e: impl ToString) -> Self {
        Self {
            stage: stage.into(),
            frame,
            track,
            message: e.to_string(),
            fatal: false,
        }
    }
}

/// Edge points of a frame, from its edge map or the image gradient.
pub fn load_edges(frame: &FrameInputs, params: &Params) -> Result<EdgeSet> {
    match &frame.edges {
        Some(p) => Ok(EdgeSet::from_mask(&io::read_mask(p)?)),
        None => {
            let gray = io::rgb_to_gray(&io::read_rgb(&frame.image)?);
            let people = frame.mask.as_deref().map(io::read_mask).transpose()?;
            Ok(extract_edges(&gray, params.edge_threshold, people.as_ref()))
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Calibration {
    /// One entry per frame; `None` after a failure.
    pub cameras: Vec<Option<Camera>>,
    pub errors: Vec<StageError>,
}

/// Calibrates the sequence, warm-starting each frame from the previous one.
pub fn calibrate_frames(manifest: &SceneManifest) -> Result<Calibration> {
    let params = &manifest.params;
    let start = match (&manifest.camera, &manifest.correspondences) {
        (Some(c), _) => SequenceStart::Camera(io::read_json::<Camera>(c)?),
        (None, Some(p)) => SequenceStart::Correspondences(io::read_json::<Vec<Correspondence>>(p)?),
        (None, None) => return Err(Error::InvalidInput("manifest needs a camera or correspondences".into())),
    };
    let edges = params
        .pool()?
        .install(|| manifest.frames.par_iter().map(|f| load_edges(f, params)).collect::<Result<Vec<_>>>())?;
    let points = sample_template_points(&FieldTemplate::default(), params.template_spacing);
    let mut out = Calibration::default();
    match calibrate_sequence_from(&edges, &start, &points, &params.refine()) {
        Ok(cams) => out.cameras = cams.into_iter().map(Some).collect(),
        Err(failure) => {
            let frame = failure.solved.len();
            out.cameras = failure.solved.into_iter().map(Some).collect();
            out.cameras.resize(manifest.frames.len(), None);
            let mut e = StageError::new("calibrate", Some(frame), None, failure.error);
            e.fatal = true;
            out.errors.push(e);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackCounts {
    /// Detection lines carrying a pose.
    pub detections_in: usize,
    pub tracked: usize,
    pub empty_poses: usize,
    pub implausible: usize,
    pub unmatched_boxes: usize,
}

impl TrackCounts {
    pub fn dropped(&self) -> usize {
        self.empty_poses + self.implausible
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tracking {
    pub tracks: Vec<Track>,
    pub counts: TrackCounts,
}

/// Detection lines of a frame; missing files mean no detections.
pub fn load_detections(frame: &FrameInputs) -> Result<Vec<Detection>> {
    frame.detections.as_deref().map(io::read_jsonl).transpose().map(Option::unwrap_or_default)
}

/// Refines every frame's detections and merges them into tracks.
pub fn track_frames(manifest: &SceneManifest, cameras: &[Option<Camera>]) -> Result<Tracking> {
    let params = &manifest.params;
    let mut counts = TrackCounts::default();
    let mut all = Vec::new();
    for (k, frame) in manifest.frames.iter().enumerate() {
        let lines = load_detections(frame)?;
        let size = image::image_dimensions(&frame.image).map_err(|e| Error::format(&frame.image, e.to_string()))?;
        let size = crate::geometry::ImageSize::new(size.0, size.1);
        let boxes: Vec<_> = lines.iter().map(|d| d.bbox).collect();
        let poses: Vec<Pose> = lines.iter().map(|d| d.keypoints.clone()).collect();
        let camera = cameras.get(k).and_then(|c| c.as_ref());
        let refined = refine_boxes(k, &boxes, &poses, size, camera, &params.refine_boxes());
        counts.detections_in += poses.len();
        counts.empty_poses += refined.empty_poses;
        counts.implausible += refined.implausible;
        counts.unmatched_boxes += refined.unmatched_boxes;
        all.extend(refined.detections);
    }
    let tracks = merge_tracks(&all, &params.merge())?;
    counts.tracked = tracks.iter().map(|t| t.detections.len()).sum();
    Ok(Tracking { tracks, counts })
}

/// Segmentation of one tracked detection over its box.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerMask {
    pub frame: usize,
    pub track: usize,
    /// Top-left pixel of the mask in the frame.
    pub origin: [usize; 2],
    pub mask: Mask,
}

fn detections_by_frame(tracks: &[Track], frames: usize) -> Vec<Vec<(usize, &Detection)>> {
    let mut by_frame = vec![Vec::new(); frames];
    for t in tracks {
        for d in &t.detections {
            if d.frame < frames {
                by_frame[d.frame].push((t.id, d));
            }
        }
    }
    by_frame
}

fn shifted(pose: &Pose, x0: usize, y0: usize) -> Pose {
    let o = Vector2::new(x0 as f64, y0 as f64);
    pose.iter()
        .map(|(k, v)| (k.clone(), crate::tracking::Keypoint::new(v.position - o, v.confidence)))
        .collect()
}

fn segment_one(
    det: &Detection,
    others: &[&Detection],
    image: &Grid<[f64; 3]>,
    boundaries: &Grid<f64>,
    people: &Mask,
    near_people: &Mask,
    config: &SegmentConfig,
) -> Result<([usize; 2], Mask)> {
    let size = crate::geometry::ImageSize::new(image.width() as u32, image.height() as u32);
    let (x0, y0, x1, y1) = det.bbox.pixel_range(size);
    let (w, h) = (x1 - x0, y1 - y0);
    if w == 0 || h == 0 {
        return Err(Error::EmptyPlayer);
    }
    let people = people.crop(x0, y0, w, h);
    let mut labels = near_people.crop(x0, y0, w, h).map(|&p| if p { ANCHOR_FREE } else { ANCHOR_BACKGROUND });
    for o in others {
        for (x, y) in skeleton_pixels(&shifted(&o.keypoints, x0, y0), &DEFAULT_BONES, w, h) {
            labels.set(x, y, ANCHOR_OTHER);
        }
    }
    for (x, y) in skeleton_pixels(&shifted(&det.keypoints, x0, y0), &DEFAULT_BONES, w, h) {
        labels.set(x, y, ANCHOR_PLAYER);
    }
    let anchors = AnchorSet::from_labels(labels)?;
    let seg = crate::segmentation::segment_player(
        &image.crop(x0, y0, w, h),
        &boundaries.crop(x0, y0, w, h),
        &anchors,
        &people,
        config,
    )?;
    Ok(([x0, y0], seg.mask))
}

/// Association-field segmentation of every tracked detection.
pub fn segment_frames(manifest: &SceneManifest, tracks: &[Track]) -> Result<(Vec<PlayerMask>, Vec<StageError>)> {
    let params = &manifest.params;
    let config = params.segment();
    let by_frame = detections_by_frame(tracks, manifest.frames.len());
    let results = params.pool()?.install(|| {
        manifest
            .frames
            .par_iter()
            .zip(&by_frame)
            .enumerate()
            .map(|(k, (frame, dets))| -> Result<Vec<std::result::Result<PlayerMask, StageError>>> {
                if dets.is_empty() {
                    return Ok(Vec::new());
                }
                let rgb = io::read_rgb(&frame.image)?;
                let image = io::rgb_to_grid(&rgb);
                let boundaries = sobel_magnitude(&io::rgb_to_gray(&rgb)).map(|v| (v / 4.0).min(1.0));
                let people = match &frame.mask {
                    Some(p) => io::read_mask(p)?,
                    None => Grid::new(image.width(), image.height(), true),
                };
                image.ensure_same_dims(&people)?;
                let near_people = people.dilate(params.background_margin);
                Ok(dets
                    .iter()
                    .map(|&(id, det)| {
                        let others: Vec<&Detection> =
                            dets.iter().filter(|(o, _)| *o != id).map(|(_, d)| *d).collect();
                        segment_one(det, &others, &image, &boundaries, &people, &near_people, &config)
                            .map(|(origin, mask)| PlayerMask {
                                frame: k,
                                track: id,
                                origin,
                                mask,
                            })
                            .map_err(|e| StageError::new("segment", Some(k), Some(id), e))
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(split(results.into_iter().flatten()))
}

fn split<T>(items: impl Iterator<Item = std::result::Result<T, StageError>>) -> (Vec<T>, Vec<StageError>) {
    let (mut ok, mut err) = (Vec::new(), Vec::new());
    for r in items {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => err.push(e),
        }
    }
    (ok, err)
}

/// Metric depth of one player with its texture.
#[derive(Debug, Clone)]
pub struct PlayerLift {
    pub frame: usize,
    pub track: usize,
    pub billboard: Billboard,
    /// Valid only on decoded pixels inside the player mask.
    pub depth: DepthMap,
    pub texture: RgbImage,
}

/// Bilinear color at a continuous frame position.
fn sample_rgb(img: &RgbImage, p: &Vector2<f64>) -> Rgb<u8> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x = (p.x - 0.5).clamp(0.0, w - 1.0);
    let y = (p.y - 0.5).clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let v = |xx, yy| img.get_pixel(xx, yy).0[c] as f64;
        let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
        let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
        *o = (top * (1.0 - fy) + bottom * fy).round() as u8;
    }
    Rgb(out)
}

/// Texture covering a crop grid at `factor` texels per cell.
pub fn crop_texture(img: &RgbImage, crop: &CropFrame, width: usize, height: usize, factor: usize) -> RgbImage {
    let f = factor as f64;
    RgbImage::from_fn((width * factor) as u32, (height * factor) as u32, |a, b| {
        let cell = Vector2::new((a as f64 + 0.5) / f, (b as f64 + 0.5) / f);
        sample_rgb(img, &(crop.origin + cell.component_mul(&crop.scale)))
    })
}

const TEXTURE_FACTOR: usize = 4;

fn lift_one(
    camera: &Camera,
    det: &Detection,
    classes: Option<Grid<u8>>,
    mask: Option<&PlayerMask>,
    image: &RgbImage,
) -> Result<(Billboard, DepthMap, RgbImage)> {
    let billboard = lift_billboard_at(camera, &det.ground_contact())?;
    let classes = classes.unwrap_or_else(|| {
        let (x0, y0, x1, y1) = det.bbox.pixel_range(camera.image_size);
        Grid::new((x1 - x0).max(1), (y1 - y0).max(1), PLANE_CLASS)
    });
    let (w, h) = classes.dims();
    let crop = CropFrame::spanning(&det.bbox, w, h);
    let mut depth = decode_depth(&classes, &billboard, camera, crop);
    if let Some(m) = mask {
        for y in 0..h {
            for x in 0..w {
                let p = crop.frame_pixel(x, y);
                let (u, v) = (p.x.floor() - m.origin[0] as f64, p.y.floor() - m.origin[1] as f64);
                let inside = u >= 0.0
                    && v >= 0.0
                    && (u as usize) < m.mask.width()
                    && (v as usize) < m.mask.height()
                    && *m.mask.get(u as usize, v as usize);
                if !inside {
                    depth.valid.set(x, y, false);
                }
            }
        }
    }
    if depth.valid.count() == 0 {
        return Err(Error::EmptyPlayer);
    }
    let texture = crop_texture(image, &crop, w, h, TEXTURE_FACTOR);
    Ok((billboard, depth, texture))
}

/// Billboards, decoded depth maps and textures of every tracked detection.
pub fn lift_players(
    manifest: &SceneManifest,
    cameras: &[Option<Camera>],
    tracks: &[Track],
    masks: &[PlayerMask],
) -> Result<(Vec<PlayerLift>, Vec<StageError>)> {
    let by_frame = detections_by_frame(tracks, manifest.frames.len());
    let mask_of: BTreeMap<(usize, usize), &PlayerMask> = masks.iter().map(|m| ((m.frame, m.track), m)).collect();
    let results = manifest.params.pool()?.install(|| {
        manifest
            .frames
            .par_iter()
            .zip(&by_frame)
            .enumerate()
            .map(|(k, (frame, dets))| -> Result<Vec<std::result::Result<PlayerLift, StageError>>> {
                if dets.is_empty() {
                    return Ok(Vec::new());
                }
                let Some(camera) = cameras.get(k).and_then(|c| c.as_ref()) else {
                    return Ok(dets
                        .iter()
                        .map(|(id, _)| Err(StageError::new("lift", Some(k), Some(*id), "frame has no camera")))
                        .collect());
                };
                let image = io::read_rgb(&frame.image)?;
                let mut out = Vec::new();
                for &(id, det) in dets {
                    let classes = match det.source.and_then(|i| frame.class_maps.get(i).cloned().flatten()) {
                        Some(p) => Some(io::read_labels(&p)?),
                        None => None,
                    };
                    out.push(
                        lift_one(camera, det, classes, mask_of.get(&(k, id)).copied(), &image)
                            .map(|(billboard, depth, texture)| PlayerLift {
                                frame: k,
                                track: id,
                                billboard,
                                depth,
                                texture,
                            })
                            .map_err(|e| StageError::new("lift", Some(k), Some(id), e)),
                    );
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(split(results.into_iter().flatten()))
}

fn texture_name(frame: usize, track: usize) -> String {
    format!("textures/f{frame:04}_t{track:03}.png")
}

/// Meshes of every lifted player, grouped by frame.
pub fn mesh_players(
    cameras: &[Option<Camera>],
    lifts: &[PlayerLift],
    discontinuity: f64,
) -> (BTreeMap<usize, Vec<PlayerMesh>>, Vec<StageError>) {
    let mut meshes: BTreeMap<usize, Vec<PlayerMesh>> = BTreeMap::new();
    let mut errors = Vec::new();
    for lift in lifts {
        let Some(camera) = cameras.get(lift.frame).and_then(|c| c.as_ref()) else {
            errors.push(StageError::new("mesh", Some(lift.frame), Some(lift.track), "frame has no camera"));
            continue;
        };
        match build_mesh(&lift.depth, &lift.depth.valid, camera, discontinuity) {
            Ok(mut mesh) => {
                mesh.name = format!("player_{:03}", lift.track);
                mesh.texture = Some(texture_name(lift.frame, lift.track));
                meshes.entry(lift.frame).or_default().push(mesh);
            }
            Err(e) => errors.push(StageError::new("mesh", Some(lift.frame), Some(lift.track), e)),
        }
    }
    (meshes, errors)
}

/// Writes one OBJ holding the field quad and every mesh as a named object,
/// with an MTL next to it whose player materials reference the mesh textures.
pub fn export_obj(meshes: &[PlayerMesh], template: &FieldTemplate, path: &Path) -> Result<()> {
    let (hl, hw) = (template.half_length(), template.half_width());
    let field = ObjObject {
        name: "field".into(),
        material: Some("field".into()),
        vertices: vec![[-hl, 0.0, -hw], [hl, 0.0, -hw], [hl, 0.0, hw], [-hl, 0.0, hw]],
        uvs: Vec::new(),
        // Counter-clockwise seen from above.
        faces: vec![[0, 2, 1], [0, 3, 2]],
    };
    let mut objects = vec![field];
    let mut mtl = String::from("newmtl field\nKd 0.2 0.5 0.2\n");
    for m in meshes {
        let material = format!("{}_mat", m.name);
        mtl.push_str(&format!("\nnewmtl {material}\nKd 1 1 1\n"));
        if let Some(t) = &m.texture {
            mtl.push_str(&format!("map_Kd {t}\n"));
        }
        objects.push(ObjObject {
            name: m.name.clone(),
            material: Some(material),
            vertices: m.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            uvs: m.uvs.iter().map(|t| [t.x, 1.0 - t.y]).collect(),
            faces: m.faces.clone(),
        });
    }
    let mtl_path = path.with_extension("mtl");
    let mtl_name = mtl_path.file_name().map(|n| n.to_string_lossy().into_owned());
    io::write_string(&mtl_path, &mtl)?;
    io::write_obj(path, &objects, mtl_name.as_deref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerTrajectory {
    pub id: usize,
    pub start_frame: usize,
    /// Smoothed lifted box centers from `start_frame` to the track's last frame.
    pub trajectory: Vec<[f64; 3]>,
    /// Lifted ground contact of each observed frame.
    pub ground_points: BTreeMap<usize, [f64; 3]>,
}

/// Lifted box centers of each track, smoothed over the track's frame span.
pub fn smooth_tracks(
    cameras: &[Option<Camera>],
    tracks: &[Track],
    smoothness: f64,
) -> (Vec<PlayerTrajectory>, Vec<StageError>) {
    let results = tracks.iter().map(|t| {
        let start = t.detections.first().map_or(0, |d| d.frame);
        let end = t.detections.last().map_or(0, |d| d.frame);
        let mut observations = BTreeMap::new();
        let mut ground_points = BTreeMap::new();
        for d in &t.detections {
            let Some(cam) = cameras.get(d.frame).and_then(|c| c.as_ref()) else { continue };
            let lifted = lift_billboard_at(cam, &d.ground_contact()).and_then(|b| {
                let center = Vector2::new(d.bbox.x + d.bbox.w / 2.0, d.bbox.y + d.bbox.h / 2.0);
                Ok((b.ground_point, b.point_at(cam, &center)?))
            });
            if let Ok((g, c)) = lifted {
                ground_points.insert(d.frame, [g.x, g.y, g.z]);
                observations.insert(d.frame - start, [c.x, c.y, c.z]);
            }
        }
        let problem = TrajectoryProblem {
            n_frames: end - start + 1,
            observations,
            smoothness,
        };
        smooth_trajectory(&problem)
            .map(|s| PlayerTrajectory {
                id: t.id,
                start_frame: start,
                trajectory: s.trajectory,
                ground_points,
            })
            .map_err(|e| StageError::new("smooth", None, Some(t.id), e))
    });
    split(results)
}

/// Counts and errors of a run. Identical inputs give an identical report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub calibrated_frames: usize,
    pub detections: TrackCounts,
    pub tracks: usize,
    pub masks: usize,
    pub lifted: usize,
    pub meshes: usize,
    pub mesh_vertices: usize,
    pub trajectories: usize,
    pub errors: Vec<StageError>,
}

impl RunReport {
    pub fn fatal_errors(&self) -> usize {
        self.errors.iter().filter(|e| e.fatal).count()
    }
}

/// Output file layout under the manifest's output directory.
pub mod layout {
    use std::path::{Path, PathBuf};

    pub fn cameras(out: &Path) -> PathBuf {
        out.join("cameras.json")
    }

    pub fn tracks(out: &Path) -> PathBuf {
        out.join("tracks.json")
    }

    pub fn masks_index(out: &Path) -> PathBuf {
        out.join("masks").join("index.json")
    }

    pub fn mask(out: &Path, frame: usize, track: usize) -> PathBuf {
        out.join("masks").join(format!("f{frame:04}_t{track:03}.png"))
    }

    pub fn lifts_index(out: &Path) -> PathBuf {
        out.join("depth").join("index.json")
    }

    pub fn depth(out: &Path, frame: usize, track: usize) -> PathBuf {
        out.join("depth").join(format!("f{frame:04}_t{track:03}.pfm"))
    }

    pub fn meshes(out: &Path) -> PathBuf {
        out.join("meshes")
    }

    pub fn frame_obj(out: &Path, frame: usize) -> PathBuf {
        meshes(out).join(format!("frame_{frame:04}.obj"))
    }

    pub fn trajectory(out: &Path, id: usize) -> PathBuf {
        out.join("trajectories").join(format!("player_{id:03}.json"))
    }

    pub fn report(out: &Path) -> PathBuf {
        out.join("report.json")
    }

    pub fn timings(out: &Path) -> PathBuf {
        out.join("timings.json")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaskRecord {
    frame: usize,
    track: usize,
    origin: [usize; 2],
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LiftRecord {
    frame: usize,
    track: usize,
    billboard: Billboard,
    crop: CropFrame,
    depth: String,
    texture: String,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn write_cameras(out: &Path, cameras: &[Option<Camera>]) -> Result<()> {
    io::write_json(&layout::cameras(out), cameras)
}

pub fn read_cameras(out: &Path) -> Result<Vec<Option<Camera>>> {
    io::read_json(&layout::cameras(out))
}

pub fn write_tracks(out: &Path, tracks: &[Track]) -> Result<()> {
    io::write_json(&layout::tracks(out), tracks)
}

pub fn read_tracks(out: &Path) -> Result<Vec<Track>> {
    io::read_json(&layout::tracks(out))
}

pub fn write_masks(out: &Path, masks: &[PlayerMask]) -> Result<()> {
    let mut index = Vec::new();
    for m in masks {
        let path = layout::mask(out, m.frame, m.track);
        io::write_mask(&path, &m.mask)?;
        index.push(MaskRecord {
            frame: m.frame,
            track: m.track,
            origin: m.origin,
            file: file_name(&path),
        });
    }
    io::write_json(&layout::masks_index(out), &index)
}

pub fn read_masks(out: &Path) -> Result<Vec<PlayerMask>> {
    let index_path = layout::masks_index(out);
    let index: Vec<MaskRecord> = io::read_json(&index_path)?;
    let dir = index_path.parent().expect("index has a parent");
    index
        .into_iter()
        .map(|r| {
            Ok(PlayerMask {
                frame: r.frame,
                track: r.track,
                origin: r.origin,
                mask: io::read_mask(&dir.join(&r.file))?,
            })
        })
        .collect()
}

pub fn write_lifts(out: &Path, lifts: &[PlayerLift]) -> Result<()> {
    let mut index = Vec::new();
    for l in lifts {
        let depth_path = layout::depth(out, l.frame, l.track);
        let values = Grid::from_fn(l.depth.width(), l.depth.height(), |x, y| l.depth.get(x, y).unwrap_or(0.0));
        io::write_pfm(&depth_path, &values)?;
        let texture = texture_name(l.frame, l.track);
        io::write_rgb(&layout::meshes(out).join(&texture), &l.texture)?;
        index.push(LiftRecord {
            frame: l.frame,
            track: l.track,
            billboard: l.billboard,
            crop: l.depth.crop,
            depth: file_name(&depth_path),
            texture,
        });
    }
    io::write_json(&layout::lifts_index(out), &index)
}

pub fn read_lifts(out: &Path) -> Result<Vec<PlayerLift>> {
    let index_path = layout::lifts_index(out);
    let index: Vec<LiftRecord> = io::read_json(&index_path)?;
    let dir = index_path.parent().expect("index has a parent");
    index
        .into_iter()
        .map(|r| {
            Ok(PlayerLift {
                frame: r.frame,
                track: r.track,
                billboard: r.billboard,
                depth: DepthMap::from_values(io::read_pfm(&dir.join(&r.depth))?, r.crop),
                texture: io::read_rgb(&layout::meshes(out).join(&r.texture))?,
            })
        })
        .collect()
}

/// One OBJ per frame with a camera; frames without players hold only the field.
pub fn write_meshes(
    out: &Path,
    frames: usize,
    cameras: &[Option<Camera>],
    meshes: &BTreeMap<usize, Vec<PlayerMesh>>,
) -> Result<usize> {
    let template = FieldTemplate::default();
    let mut written = 0;
    for k in 0..frames {
        if cameras.get(k).is_none_or(|c| c.is_none()) {
            continue;
        }
        let list = meshes.get(&k).map(Vec::as_slice).unwrap_or(&[]);
        export_obj(list, &template, &layout::frame_obj(out, k))?;
        written += 1;
    }
    Ok(written)
}

pub fn write_trajectories(out: &Path, trajectories: &[PlayerTrajectory]) -> Result<()> {
    for t in trajectories {
        io::write_json(&layout::trajectory(out, t.id), t)?;
    }
    Ok(())
}

/// Stage durations in seconds, kept apart from the deterministic report.
pub type Timings = BTreeMap<String, f64>;

/// Runs every stage and writes all outputs under the manifest's output directory.
pub fn run_pipeline(manifest: &SceneManifest) -> Result<(RunReport, Timings)> {
    manifest.validate()?;
    let out = &manifest.output;
    let mut timings = Timings::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Timings| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let mut report = RunReport {
        frames: manifest.frames.len(),
        ..RunReport::default()
    };

    let calibration = calibrate_frames(manifest)?;
    let cameras = calibration.cameras;
    report.errors.extend(calibration.errors);
    report.calibrated_frames = cameras.iter().flatten().count();
    write_cameras(out, &cameras)?;
    lap("calibrate", &mut timings);

    let tracking = track_frames(manifest, &cameras)?;
    report.detections = tracking.counts.clone();
    report.tracks = tracking.tracks.len();
    write_tracks(out, &tracking.tracks)?;
    lap("track", &mut timings);

    let (masks, errors) = segment_frames(manifest, &tracking.tracks)?;
    report.masks = masks.len();
    report.errors.extend(errors);
    write_masks(out, &masks)?;
    lap("segment", &mut timings);

    let (lifts, errors) = lift_players(manifest, &cameras, &tracking.tracks, &masks)?;
    report.lifted = lifts.len();
    report.errors.extend(errors);
    write_lifts(out, &lifts)?;
    lap("lift", &mut timings);

    let (meshes, errors) = mesh_players(&cameras, &lifts, manifest.params.discontinuity);
    report.meshes = meshes.values().map(Vec::len).sum();
    report.mesh_vertices = meshes.values().flatten().map(|m| m.vertices.len()).sum();
    report.errors.extend(errors);
    write_meshes(out, manifest.frames.len(), &cameras, &meshes)?;
    lap("export", &mut timings);

    let (trajectories, errors) = smooth_tracks(&cameras, &tracking.tracks, manifest.params.smoothness);
    report.trajectories = trajectories.len();
    report.errors.extend(errors);
    write_trajectories(out, &trajectories)?;
    lap("smooth", &mut timings);

    io::write_json(&layout::report(out), &report)?;
    io::write_json(&layout::timings(out), &timings)?;
    Ok((report, timings))
}
