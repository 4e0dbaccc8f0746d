//! Pose-based refinement of detector boxes and greedy merging of detections
//! into per-player tracks by neck-keypoint proximity.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::depthmesh::lift_billboard_at;
use crate::error::{Error, Result};
use crate::geometry::{Camera, ImageSize};

pub const NECK: &str = "neck";
const ANKLES: [&str; 2] = ["left_ankle", "right_ankle"];

/// Axis-aligned pixel box, serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.x && p.x <= self.x1() && p.y >= self.y && p.y <= self.y1()
    }

    pub fn bottom_center(&self) -> Vector2<f64> {
        Vector2::new(self.x + self.w / 2.0, self.y1())
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1().min(other.x1()) - self.x.max(other.x);
        let h = self.y1().min(other.y1()) - self.y.max(other.y);
        w.max(0.0) * h.max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let i = self.intersection_area(other);
        let u = self.area() + other.area() - i;
        if u > 0.0 {
            i / u
        } else {
            0.0
        }
    }

    /// Integer pixel range `[x0, x1) x [y0, y1)` covered by the box, clipped to the image.
    pub fn pixel_range(&self, size: ImageSize) -> (usize, usize, usize, usize) {
        let clip = |v: f64, hi: u32| v.clamp(0.0, hi as f64);
        let x0 = clip(self.x.floor(), size.width) as usize;
        let y0 = clip(self.y.floor(), size.height) as usize;
        let x1 = clip(self.x1().ceil(), size.width) as usize;
        let y1 = clip(self.y1().ceil(), size.height) as usize;
        (x0, y0, x1.max(x0), y1.max(y0))
    }
}

/// Image position and confidence, serialized as `[u, v, c]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint {
    pub position: Vector2<f64>,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(position: Vector2<f64>, confidence: f64) -> Self {
        Self { position, confidence }
    }
}

impl From<[f64; 3]> for Keypoint {
    fn from(v: [f64; 3]) -> Self {
        Self {
            position: Vector2::new(v[0], v[1]),
            confidence: v[2],
        }
    }
}

impl From<Keypoint> for [f64; 3] {
    fn from(k: Keypoint) -> Self {
        [k.position.x, k.position.y, k.confidence]
    }
}

pub type Pose = BTreeMap<String, Keypoint>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    pub bbox: BBox,
    pub keypoints: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player_id: Option<usize>,
    /// Position of the originating pose in its frame's input list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

impl Detection {
    pub fn neck(&self) -> Option<Vector2<f64>> {
        self.keypoints.get(NECK).map(|k| k.position)
    }

    /// Where the player touches the field: the ankle midpoint when both
    /// ankles are detected, else the lowest confident keypoint, else the box
    /// bottom center.
    pub fn ground_contact(&self) -> Vector2<f64> {
        let ankles: Vec<_> = ANKLES
            .iter()
            .filter_map(|n| self.keypoints.get(*n).filter(|k| k.confidence > 0.0))
            .collect();
        if ankles.len() == 2 {
            return (ankles[0].position + ankles[1].position) / 2.0;
        }
        confident(&self.keypoints)
            .max_by(|a, b| a.y.total_cmp(&b.y))
            .unwrap_or_else(|| self.bbox.bottom_center())
    }
}

fn confident(pose: &Pose) -> impl Iterator<Item = Vector2<f64>> + '_ {
    pose.values().filter(|k| k.confidence > 0.0).map(|k| k.position)
}

/// Tight box around a pose's confident keypoints.
pub fn keypoint_extent(pose: &Pose) -> Option<BBox> {
    let mut it = confident(pose).peekable();
    it.peek()?;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in it {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    Some(BBox::from_corners(x0, y0, x1, y1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineBoxesConfig {
    /// Fraction of the keypoint extent added on every side.
    pub padding: f64,
    /// Plausible lifted player heights in meters, applied when a camera is given.
    pub height_range: (f64, f64),
}

impl Default for RefineBoxesConfig {
    fn default() -> Self {
        Self {
            padding: 0.1,
            height_range: (1.0, 2.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefinedFrame {
    pub detections: Vec<Detection>,
    /// Detector boxes that no pose was assigned to.
    pub unmatched_boxes: usize,
    /// Poses without any confident keypoint.
    pub empty_poses: usize,
    /// Detections removed by the height filter.
    pub implausible: usize,
}

/// Metric height of a detection standing on the field.
pub fn lifted_height(camera: &Camera, det: &Detection) -> Result<f64> {
    let extent = keypoint_extent(&det.keypoints).unwrap_or(det.bbox);
    let billboard = lift_billboard_at(camera, &det.ground_contact())?;
    let top = billboard.point_at(camera, &Vector2::new(extent.x + extent.w / 2.0, extent.y))?;
    Ok(top.y)
}

/// Replaces detector boxes by padded keypoint boxes, one detection per pose.
///
/// Each pose goes to the box containing most of its confident keypoints
/// (ties: smaller box, then lower index); poses inside no box still become
/// detections. With a camera, detections whose lifted height falls outside
/// the configured range are dropped.
pub fn refine_boxes(
    frame: usize,
    boxes: &[BBox],
    poses: &[Pose],
    image_size: ImageSize,
    camera: Option<&Camera>,
    config: &RefineBoxesConfig,
) -> RefinedFrame {
    let mut out = RefinedFrame::default();
    let mut used = vec![false; boxes.len()];
    for (index, pose) in poses.iter().enumerate() {
        let Some(extent) = keypoint_extent(pose) else {
            out.empty_poses += 1;
            continue;
        };
        let best = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (i, confident(pose).filter(|p| b.contains(p)).count(), b.area()))
            .filter(|&(_, n, _)| n > 0)
            .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)));
        if let Some((i, _, _)) = best {
            used[i] = true;
        }
        let pad_x = config.padding * extent.w;
        let pad_y = config.padding * extent.h;
        let w = image_size.width as f64;
        let h = image_size.height as f64;
        let x0 = (extent.x - pad_x).clamp(0.0, w - 1.0);
        let y0 = (extent.y - pad_y).clamp(0.0, h - 1.0);
        let x1 = (extent.x1() + pad_x).clamp(x0 + 1.0, w);
        let y1 = (extent.y1() + pad_y).clamp(y0 + 1.0, h);
        let det = Detection {
            frame,
            bbox: BBox::from_corners(x0, y0, x1, y1),
            keypoints: pose.clone(),
            player_id: None,
            source: Some(index),
        };
        if let Some(cam) = camera {
            let plausible = lifted_height(cam, &det)
                .map(|hgt| (config.height_range.0..=config.height_range.1).contains(&hgt))
                .unwrap_or(false);
            if !plausible {
                out.implausible += 1;
                continue;
            }
        }
        out.detections.push(det);
    }
    out.unmatched_boxes = used.iter().filter(|u| !**u).count();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: usize,
    pub detections: Vec<Detection>,
}

impl Track {
    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.detections.iter().map(|d| d.frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    /// Merge only when neck distance is strictly below this, in pixels.
    pub dist_thresh: f64,
    /// Maximum frame gap between the end of one track and the start of the next.
    pub frame_window: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            dist_thresh: 50.0,
            frame_window: 10,
        }
    }
}

/// Greedily links detections into tracks, closest admissible pair first.
///
/// Every detection starts as its own track. A pair (A, B) is admissible when
/// B starts 1 to `frame_window` frames after A ends and the neck keypoints
/// at A's end and B's start are closer than `dist_thresh`. Ties are broken by
/// earlier end frame, then lower detection index. Merging never changes the
/// distance of any other candidate pair, so one sweep over the candidate
/// links sorted by that order performs the repeated global-closest merge.
pub fn merge_tracks(detections: &[Detection], config: &MergeConfig) -> Result<Vec<Track>> {
    let necks = detections
        .iter()
        .map(|d| {
            d.neck().ok_or_else(|| Error::MalformedDetection {
                frame: d.frame,
                reason: "missing neck keypoint".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::new();
    for (a, da) in detections.iter().enumerate() {
        for (b, db) in detections.iter().enumerate() {
            let gap = db.frame as i64 - da.frame as i64;
            if gap <= 0 || gap > config.frame_window as i64 {
                continue;
            }
            let dist = (necks[a] - necks[b]).norm();
            if dist < config.dist_thresh {
                candidates.push((dist, da.frame, a, b));
            }
        }
    }
    candidates.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
            .then(x.3.cmp(&y.3))
    });

    let n = detections.len();
    let mut next = vec![None; n];
    let mut has_prev = vec![false; n];
    for (_, _, a, b) in candidates {
        if next[a].is_none() && !has_prev[b] {
            next[a] = Some(b);
            has_prev[b] = true;
        }
    }

    let mut heads: Vec<usize> = (0..n).filter(|&i| !has_prev[i]).collect();
    heads.sort_by_key(|&i| (detections[i].frame, i));
    Ok(heads
        .into_iter()
        .enumerate()
        .map(|(id, head)| {
            let mut chain = Vec::new();
            let mut cur = Some(head);
            while let Some(i) = cur {
                let mut d = detections[i].clone();
                d.player_id = Some(id);
                chain.push(d);
                cur = next[i];
            }
            Track { id, detections: chain }
        })
        .collect())
}
