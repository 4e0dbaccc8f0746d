//! Training-pair extraction from captured game frames: unproject the depth
//! buffer, keep points standing on the field, cluster them into players and
//! crop color and metric depth around each cluster.

use std::collections::HashMap;

use image::{imageops, RgbImage};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::depthmesh::{CropFrame, DepthMap};
use crate::error::{Error, Result};
use crate::geometry::{pixel_center, world_to_ndc, GlCamera};
use crate::grid::Grid;

/// Color and depth buffers of one captured frame with its raster camera.
#[derive(Debug, Clone)]
pub struct Capture {
    pub color: RgbImage,
    pub ndc_depth: Grid<f64>,
    pub glcam: GlCamera,
}

impl Capture {
    pub fn new(color: RgbImage, ndc_depth: Grid<f64>, glcam: GlCamera) -> Result<Self> {
        let dims = (color.width() as usize, color.height() as usize);
        if dims != ndc_depth.dims() {
            return Err(Error::Dimension {
                expected: ndc_depth.dims(),
                actual: dims,
            });
        }
        let size = glcam.image_size;
        if dims != (size.width as usize, size.height as usize) {
            return Err(Error::Dimension {
                expected: (size.width as usize, size.height as usize),
                actual: dims,
            });
        }
        Ok(Self { color, ndc_depth, glcam })
    }

    /// Same capture with rows reversed, for buffers stored bottom row first.
    pub fn flipped_vertical(&self) -> Self {
        Self {
            color: imageops::flip_vertical(&self.color),
            ndc_depth: self.ndc_depth.flip_vertical(),
            glcam: self.glcam.clone(),
        }
    }
}

/// World point recovered from one buffer pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Point3<f64>,
    pub pixel: (usize, usize),
}

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    /// Pixels whose depth could not be unprojected.
    pub dropped: usize,
}

/// One world point per buffer pixel, in row-major pixel order.
pub fn extract_point_cloud(capture: &Capture) -> Result<PointCloud> {
    let unprojector = capture.glcam.unprojector()?;
    let mut cloud = PointCloud::default();
    for (x, y, &d) in capture.ndc_depth.iter_xy() {
        match unprojector.unproject(&pixel_center(x, y), d) {
            Ok(position) if position.coords.iter().all(|v| v.is_finite()) => {
                cloud.points.push(CloudPoint { position, pixel: (x, y) })
            }
            _ => cloud.dropped += 1,
        }
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    pub half_length: f64,
    pub half_width: f64,
    /// Points at or below this height count as ground.
    pub ground_eps: f64,
}

impl Default for FieldBounds {
    fn default() -> Self {
        Self {
            half_length: 52.5,
            half_width: 34.0,
            ground_eps: 0.05,
        }
    }
}

impl FieldBounds {
    pub fn keeps(&self, p: &Point3<f64>) -> bool {
        p.x.abs() <= self.half_length && p.z.abs() <= self.half_width && p.y > self.ground_eps
    }
}

/// Points above the ground and inside the field boundary.
pub fn filter_players(points: &[CloudPoint], bounds: &FieldBounds) -> Vec<CloudPoint> {
    points.iter().filter(|p| bounds.keeps(&p.position)).copied().collect()
}

/// Density clustering: `None` marks noise, clusters are numbered in discovery order.
///
/// Neighborhoods are closed balls of radius `eps` and include the point itself.
pub fn dbscan(points: &[Point3<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0 && min_pts >= 1, "dbscan needs eps > 0 and min_pts >= 1");
    let cell = |p: &Point3<f64>| {
        (
            (p.x / eps).floor() as i64,
            (p.y / eps).floor() as i64,
            (p.z / eps).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        let (cx, cy, cz) = cell(&points[i]);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(members) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend(
                            members
                                .iter()
                                .filter(|&&j| (points[j] - points[i]).norm_squared() <= eps2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    };

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < min_pts {
            continue;
        }
        let id = next;
        next += 1;
        labels[i] = Some(id);
        let mut stack = seeds;
        while let Some(j) = stack.pop() {
            if labels[j].is_none() {
                labels[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let reach = neighbors(j);
            if reach.len() >= min_pts {
                stack.extend(reach.into_iter().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
    }
    labels
}

/// Aligned color and metric depth crops of one clustered player.
#[derive(Debug, Clone)]
pub struct CropPair {
    pub image: RgbImage,
    /// Camera-space depth, valid exactly on the cluster's pixels.
    pub depth: DepthMap,
    /// `[x, y, w, h]` in source-frame pixels.
    pub bbox: [usize; 4],
    pub cluster: usize,
    pub points: usize,
}

/// Crops the capture around each cluster's projected points plus `margin` pixels.
pub fn emit_crop_pairs(
    capture: &Capture,
    points: &[CloudPoint],
    labels: &[Option<usize>],
    margin: usize,
) -> Vec<CropPair> {
    let (w, h) = capture.ndc_depth.dims();
    let mut members: Vec<Vec<((usize, usize), f64)>> = Vec::new();
    for (p, label) in points.iter().zip(labels) {
        let Some(c) = *label else { continue };
        if members.len() <= c {
            members.resize(c + 1, Vec::new());
        }
        let Ok(sample) = world_to_ndc(&capture.glcam, &p.position) else {
            continue;
        };
        let (u, v) = (sample.pixel.x.floor(), sample.pixel.y.floor());
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            continue;
        }
        members[c].push(((u as usize, v as usize), capture.glcam.eye_depth(&p.position)));
    }
    let mut pairs = Vec::new();
    for (cluster, pixels) in members.into_iter().enumerate() {
        if pixels.is_empty() {
            log::warn!("cluster {cluster} projects outside the frame, skipped");
            continue;
        }
        let x0 = pixels.iter().map(|p| p.0 .0).min().unwrap().saturating_sub(margin);
        let y0 = pixels.iter().map(|p| p.0 .1).min().unwrap().saturating_sub(margin);
        let x1 = (pixels.iter().map(|p| p.0 .0).max().unwrap() + margin).min(w - 1);
        let y1 = (pixels.iter().map(|p| p.0 .1).max().unwrap() + margin).min(h - 1);
        let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut depth = DepthMap::invalid(cw, ch, CropFrame::at(pixel_center(x0, y0) - pixel_center(0, 0)));
        for &((u, v), z) in &pixels {
            depth.depth.set(u - x0, v - y0, z);
            depth.valid.set(u - x0, v - y0, true);
        }
        let image = imageops::crop_imm(&capture.color, x0 as u32, y0 as u32, cw as u32, ch as u32).to_image();
        pairs.push(CropPair {
            image,
            depth,
            bbox: [x0, y0, cw, ch],
            cluster,
            points: pixels.len(),
        });
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub bounds: FieldBounds,
    pub eps: f64,
    pub min_pts: usize,
    pub margin: usize,
    /// Treat buffers as stored bottom row first.
    pub flip_y: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            bounds: FieldBounds::default(),
            eps: 0.5,
            min_pts: 20,
            margin: 10,
            flip_y: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub pairs: Vec<CropPair>,
    pub dropped_pixels: usize,
    pub player_points: usize,
    pub noise_points: usize,
}

/// Point cloud, field filter, clustering and cropping in one call.
pub fn extract_pairs(capture: &Capture, config: &ExtractConfig) -> Result<Extraction> {
    let flipped;
    let capture = if config.flip_y {
        flipped = capture.flipped_vertical();
        &flipped
    } else {
        capture
    };
    let cloud = extract_point_cloud(capture)?;
    let players = filter_players(&cloud.points, &config.bounds);
    let positions: Vec<Point3<f64>> = players.iter().map(|p| p.position).collect();
    let labels = dbscan(&positions, config.eps, config.min_pts);
    let noise_points = labels.iter().filter(|l| l.is_none()).count();
    Ok(Extraction {
        pairs: emit_crop_pairs(capture, &players, &labels, config.margin),
        dropped_pixels: cloud.dropped,
        player_points: players.len(),
        noise_points,
    })
}
