//! File-level entry points behind the command-line subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::depthmesh::{CropFrame, DepthMap};
use crate::error::{Error, Result};
use crate::extract::{extract_pairs, Capture, ExtractConfig};
use crate::gamecam::{recover_game_camera, GameCamConfig, GameCamParams, NdcCapture};
use crate::geometry::{Camera, GlCamera};
use crate::grid::Grid;
use crate::io;
use crate::metrics::{iou, st_rmse, EvalPair};
use crate::pipeline::{self, layout, Calibration, PlayerTrajectory, SceneManifest, TrackCounts};
use crate::synth::{SequenceConfig, SynthSequence};
use crate::trajectory::{smooth_trajectory, TrajectoryProblem};

/// Renders a synthetic sequence into `dir` and returns its manifest path.
pub fn synth(dir: &Path, seed: u64, config: &SequenceConfig, with_captures: bool) -> Result<PathBuf> {
    SynthSequence::generate(seed, config)?.write(dir, with_captures)
}

pub fn calibrate(manifest: &SceneManifest) -> Result<Calibration> {
    manifest.validate()?;
    let calibration = pipeline::calibrate_frames(manifest)?;
    pipeline::write_cameras(&manifest.output, &calibration.cameras)?;
    Ok(calibration)
}

pub fn track(manifest: &SceneManifest) -> Result<TrackCounts> {
    let cameras = pipeline::read_cameras(&manifest.output)?;
    let tracking = pipeline::track_frames(manifest, &cameras)?;
    pipeline::write_tracks(&manifest.output, &tracking.tracks)?;
    Ok(tracking.counts)
}

/// Writes player masks; returns how many were produced and the per-player failures.
pub fn segment(manifest: &SceneManifest) -> Result<(usize, Vec<pipeline::StageError>)> {
    let tracks = pipeline::read_tracks(&manifest.output)?;
    let (masks, errors) = pipeline::segment_frames(manifest, &tracks)?;
    pipeline::write_masks(&manifest.output, &masks)?;
    Ok((masks.len(), errors))
}

pub fn lift(manifest: &SceneManifest) -> Result<(usize, Vec<pipeline::StageError>)> {
    let out = &manifest.output;
    let cameras = pipeline::read_cameras(out)?;
    let tracks = pipeline::read_tracks(out)?;
    let masks = if layout::masks_index(out).exists() {
        pipeline::read_masks(out)?
    } else {
        Vec::new()
    };
    let (lifts, errors) = pipeline::lift_players(manifest, &cameras, &tracks, &masks)?;
    pipeline::write_lifts(out, &lifts)?;
    Ok((lifts.len(), errors))
}

/// Meshes lifted players and writes one OBJ per calibrated frame.
pub fn export(manifest: &SceneManifest) -> Result<(usize, Vec<pipeline::StageError>)> {
    let out = &manifest.output;
    let cameras = pipeline::read_cameras(out)?;
    let lifts = pipeline::read_lifts(out)?;
    let (meshes, errors) = pipeline::mesh_players(&cameras, &lifts, manifest.params.discontinuity);
    let written = pipeline::write_meshes(out, manifest.frames.len(), &cameras, &meshes)?;
    Ok((written, errors))
}

pub fn smooth(manifest: &SceneManifest) -> Result<(Vec<PlayerTrajectory>, Vec<pipeline::StageError>)> {
    let out = &manifest.output;
    let cameras = pipeline::read_cameras(out)?;
    let tracks = pipeline::read_tracks(out)?;
    let (trajectories, errors) = pipeline::smooth_tracks(&cameras, &tracks, manifest.params.smoothness);
    pipeline::write_trajectories(out, &trajectories)?;
    Ok((trajectories, errors))
}

/// Smooths a standalone problem file into a trajectory file.
pub fn smooth_file(input: &Path, output: &Path) -> Result<()> {
    let problem: TrajectoryProblem = io::read_json(input)?;
    io::write_json(output, &smooth_trajectory(&problem)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub image: String,
    pub depth: String,
    /// `[x, y, w, h]` in the source frame.
    pub bbox: [usize; 4],
    pub cluster: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub pairs: Vec<PairRecord>,
    pub dropped_pixels: usize,
    pub player_points: usize,
    pub noise_points: usize,
}

/// Crops training pairs out of one capture: `{stem}_img_{k}.png`,
/// `{stem}_depth_{k}.pfm` (0 outside the player) and `{stem}_pairs.json`.
pub fn extract(
    color: &Path,
    ndc_depth: &Path,
    glcam: &Path,
    out_dir: &Path,
    stem: &str,
    config: &ExtractConfig,
) -> Result<ExtractSummary> {
    let glcam: GlCamera = io::read_json(glcam)?;
    let capture = Capture::new(io::read_rgb(color)?, io::read_pfm(ndc_depth)?, glcam)?;
    let extraction = extract_pairs(&capture, config)?;
    let mut pairs = Vec::new();
    for (k, pair) in extraction.pairs.iter().enumerate() {
        let image = format!("{stem}_img_{k}.png");
        let depth = format!("{stem}_depth_{k}.pfm");
        io::write_rgb(&out_dir.join(&image), &pair.image)?;
        let values = Grid::from_fn(pair.depth.width(), pair.depth.height(), |x, y| pair.depth.get(x, y).unwrap_or(0.0));
        io::write_pfm(&out_dir.join(&depth), &values)?;
        pairs.push(PairRecord {
            image,
            depth,
            bbox: pair.bbox,
            cluster: pair.cluster,
            points: pair.points,
        });
    }
    let summary = ExtractSummary {
        pairs,
        dropped_pixels: extraction.dropped_pixels,
        player_points: extraction.player_points,
        noise_points: extraction.noise_points,
    };
    io::write_json(&out_dir.join(format!("{stem}_pairs.json")), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub st_rmse: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub mean_st_rmse: Option<f64>,
    pub mean_iou: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn row<'a>(rows: &'a mut BTreeMap<String, EvalRow>, name: &str) -> &'a mut EvalRow {
    rows.entry(name.to_string()).or_insert_with(|| EvalRow {
        name: name.to_string(),
        st_rmse: None,
        iou: None,
    })
}

fn stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == ext) {
            if let Some(s) = path.file_stem() {
                out.push(s.to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Compares every `.pfm` depth map (values <= 0 are invalid) and `.png` mask
/// in `truth_dir` with the same-named file in `pred_dir`, and writes a CSV.
pub fn eval(pred_dir: &Path, truth_dir: &Path, csv: &Path) -> Result<EvalSummary> {
    let mut rows: BTreeMap<String, EvalRow> = BTreeMap::new();
    for name in stems(truth_dir, "pfm")? {
        let load = |dir: &Path| {
            io::read_pfm(&dir.join(format!("{name}.pfm"))).map(|g| DepthMap::from_values(g, CropFrame::default()))
        };
        let (truth, pred) = (load(truth_dir)?, load(pred_dir)?);
        row(&mut rows, &name).st_rmse = Some(st_rmse(&EvalPair::new(&pred, &truth))?);
    }
    for name in stems(truth_dir, "png")? {
        let file = format!("{name}.png");
        let score = iou(&io::read_mask(&pred_dir.join(&file))?, &io::read_mask(&truth_dir.join(&file))?)?;
        row(&mut rows, &name).iou = Some(score);
    }
    let rows: Vec<EvalRow> = rows.into_values().collect();
    let summary = EvalSummary {
        mean_st_rmse: mean(rows.iter().filter_map(|r| r.st_rmse)),
        mean_iou: mean(rows.iter().filter_map(|r| r.iou)),
        rows,
    };
    let cell = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut text = String::from("name,st_rmse,iou\n");
    for r in &summary.rows {
        text.push_str(&format!("{},{},{}\n", r.name, cell(r.st_rmse), cell(r.iou)));
    }
    text.push_str(&format!("mean,{},{}\n", cell(summary.mean_st_rmse), cell(summary.mean_iou)));
    io::write_string(csv, &text)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameCamOutput {
    pub glcam: GlCamera,
    pub params: GameCamParams,
    pub objective: f64,
    pub ground_cost: f64,
    pub player_cost: f64,
    pub iterations: usize,
}

/// Recovers a raster camera from a depth buffer (PFM), a label image
/// (1 ground, 2 player) and a field-calibrated pinhole camera.
pub fn gamecam(depth: &Path, labels: &Path, aux: &Path, player_weight: f64, output: &Path) -> Result<GameCamOutput> {
    let capture = NdcCapture::from_labels(io::read_pfm(depth)?, &io::read_labels(labels)?)?;
    let aux: Camera = io::read_json(aux)?;
    let init = GameCamParams::from_aux(&aux, 1.0, 1000.0);
    let r = recover_game_camera(&capture, &aux, &init, player_weight, &GameCamConfig::default())?;
    let out = GameCamOutput {
        glcam: r.glcam,
        params: r.params,
        objective: r.objective,
        ground_cost: r.ground_cost,
        player_cost: r.player_cost,
        iterations: r.iterations,
    };
    io::write_json(output, &out)?;
    Ok(out)
}
