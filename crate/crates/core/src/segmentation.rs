//! Per-player association field over a crop, solved with anchor constraints
//! and thresholded into a mask.
//!
//! Every free pixel takes the affinity-weighted average of its 8 neighbors,
//! so the field interpolates between player anchors (0), background anchors
//! (1) and other-player anchors (2).

use std::collections::VecDeque;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::tracking::Pose;

pub const ANCHOR_PLAYER: u8 = 0;
pub const ANCHOR_BACKGROUND: u8 = 1;
pub const ANCHOR_OTHER: u8 = 2;
pub const ANCHOR_FREE: u8 = 255;

/// Neighbor offsets, in the order used by [`Affinity`] rows.
pub const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Limbs rasterized into skeleton anchors when both endpoints are present.
pub const DEFAULT_BONES: [(&str, &str); 9] = [
    ("head", "neck"),
    ("neck", "left_shoulder"),
    ("neck", "right_shoulder"),
    ("neck", "hip"),
    ("hip", "left_knee"),
    ("hip", "right_knee"),
    ("left_knee", "left_ankle"),
    ("right_knee", "right_ankle"),
    ("left_ankle", "right_ankle"),
];

pub type Rgb = [f64; 3];

/// Row-normalized 8-neighbor affinities. Missing neighbors have weight zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    width: usize,
    height: usize,
    raw: Vec<[f64; 8]>,
    weights: Vec<[f64; 8]>,
}

impl Affinity {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Weight of neighbor `k` of pixel `(x, y)` before row normalization.
    pub fn raw(&self, x: usize, y: usize, k: usize) -> f64 {
        self.raw[y * self.width + x][k]
    }

    pub fn weight(&self, x: usize, y: usize, k: usize) -> f64 {
        self.weights[y * self.width + x][k]
    }

    fn neighbor(&self, x: usize, y: usize, k: usize) -> Option<usize> {
        let (dx, dy) = NEIGHBORS[k];
        let nx = x.checked_add_signed(dx).filter(|&v| v < self.width)?;
        let ny = y.checked_add_signed(dy).filter(|&v| v < self.height)?;
        Some(ny * self.width + nx)
    }

    /// `(neighbor index, normalized weight)` pairs of a flat pixel index.
    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (x, y) = (i % self.width, i / self.width);
        (0..8).filter_map(move |k| self.neighbor(x, y, k).map(|j| (j, self.weights[i][k])))
    }

    fn average(&self, i: usize, o: &[f64]) -> f64 {
        self.row(i).map(|(j, w)| w * o[j]).sum()
    }
}

/// Affinity `exp(-|I_p - I_q|^2) * exp(-G_p^2)` over 8-neighborhoods, row-normalized.
pub fn build_affinity(image: &Grid<Rgb>, edges: &Grid<f64>) -> Result<Affinity> {
    image.ensure_same_dims(edges)?;
    let (width, height) = image.dims();
    let mut affinity = Affinity {
        width,
        height,
        raw: vec![[0.0; 8]; width * height],
        weights: vec![[0.0; 8]; width * height],
    };
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let ip = image.get(x, y);
            let g = edges.get(x, y);
            let mut row = [0.0; 8];
            for (k, w) in row.iter_mut().enumerate() {
                if let Some(j) = affinity.neighbor(x, y, k) {
                    let iq = &image.as_slice()[j];
                    let d2: f64 = (0..3).map(|c| (ip[c] - iq[c]).powi(2)).sum();
                    *w = (-d2).exp() * (-g * g).exp();
                }
            }
            let total: f64 = row.iter().sum();
            affinity.raw[i] = row;
            if total > 0.0 {
                affinity.weights[i] = row.map(|w| w / total);
            }
        }
    }
    Ok(affinity)
}

/// Fixed field values: player 0, background 1, other players 2.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    labels: Grid<u8>,
}

impl AnchorSet {
    /// Label image with 0 player, 1 background, 2 other player, 255 free.
    pub fn from_labels(labels: Grid<u8>) -> Result<Self> {
        if let Some((x, y, v)) = labels.iter_xy().find(|(_, _, &v)| v > ANCHOR_OTHER && v != ANCHOR_FREE) {
            return Err(Error::InvalidInput(format!("anchor label {v} at ({x}, {y})")));
        }
        if !labels.as_slice().contains(&ANCHOR_PLAYER) {
            return Err(Error::InvalidInput("no player anchors".into()));
        }
        Ok(Self { labels })
    }

    pub fn from_pixels(
        width: usize,
        height: usize,
        player: &[(usize, usize)],
        other: &[(usize, usize)],
        background: &[(usize, usize)],
    ) -> Result<Self> {
        let mut labels = Grid::new(width, height, ANCHOR_FREE);
        for (set, value) in [(player, ANCHOR_PLAYER), (other, ANCHOR_OTHER), (background, ANCHOR_BACKGROUND)] {
            for &(x, y) in set {
                if x >= width || y >= height {
                    return Err(Error::InvalidInput(format!("anchor ({x}, {y}) outside {width}x{height}")));
                }
                let current = *labels.get(x, y);
                if current != ANCHOR_FREE && current != value {
                    return Err(Error::InvalidInput(format!("pixel ({x}, {y}) has two anchor values")));
                }
                labels.set(x, y, value);
            }
        }
        Self::from_labels(labels)
    }

    pub fn labels(&self) -> &Grid<u8> {
        &self.labels
    }

    pub fn value(&self, x: usize, y: usize) -> Option<f64> {
        anchor_value(*self.labels.get(x, y))
    }
}

fn anchor_value(label: u8) -> Option<f64> {
    (label != ANCHOR_FREE).then_some(label as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationField {
    pub values: Grid<f64>,
    pub sweeps: usize,
    /// Largest `|o_p - sum_q w_pq o_q|` over free pixels at exit.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub tolerance: f64,
    /// Sweep budget; `None` allows `10 * H * W`.
    pub max_sweeps: Option<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_sweeps: None,
        }
    }
}

/// Gauss-Seidel solve of `o_p = sum_q w_pq o_q` on free pixels with anchors fixed.
///
/// This zeroes every free-pixel residual, which is the minimum of the squared
/// energy. Free values start from the nearest anchor to shorten the solve.
pub fn solve_association(affinity: &Affinity, anchors: &AnchorSet, config: &SolveConfig) -> Result<AssociationField> {
    let (w, h) = anchors.labels.dims();
    if (w, h) != (affinity.width, affinity.height) {
        return Err(Error::Dimension {
            expected: (affinity.width, affinity.height),
            actual: (w, h),
        });
    }
    let labels = anchors.labels.as_slice();
    let mut o = vec![0.0; w * h];
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    for (i, &l) in labels.iter().enumerate() {
        if let Some(v) = anchor_value(l) {
            o[i] = v;
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for (j, wt) in affinity.row(i).collect::<Vec<_>>() {
            // Reachability follows edges that carry weight in either direction.
            if !seen[j] && (wt > 0.0 || affinity.row(j).any(|(k, wk)| k == i && wk > 0.0)) {
                seen[j] = true;
                o[j] = o[i];
                queue.push_back(j);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::UnanchoredRegion { x: i % w, y: i / w });
    }

    let free: Vec<usize> = (0..w * h).filter(|&i| labels[i] == ANCHOR_FREE).collect();
    let residual_of = |o: &[f64]| free.iter().map(|&i| (o[i] - affinity.average(i, o)).abs()).fold(0.0, f64::max);
    let budget = config.max_sweeps.unwrap_or(10 * w * h);
    let mut residual = residual_of(&o);
    let mut sweeps = 0;
    while residual >= config.tolerance {
        if sweeps >= budget {
            return Err(Error::Convergence { residual, sweeps });
        }
        for &i in &free {
            o[i] = affinity.average(i, &o);
        }
        sweeps += 1;
        residual = residual_of(&o);
    }
    Ok(AssociationField {
        values: Grid::from_vec(w, h, o)?,
        sweeps,
        residual,
    })
}

/// Pixels with `o_p <= tau`.
pub fn threshold_mask(field: &Grid<f64>, tau: f64) -> Mask {
    field.map(|&o| o <= tau)
}

/// Pixelwise AND.
pub fn combine_masks(m_o: &Mask, m_cnn: &Mask) -> Result<Mask> {
    m_o.ensure_same_dims(m_cnn)?;
    Grid::from_vec(
        m_o.width(),
        m_o.height(),
        m_o.as_slice().iter().zip(m_cnn.as_slice()).map(|(a, b)| *a && *b).collect(),
    )
}

/// Pixels on the segments between connected keypoints, plus every keypoint.
///
/// Keypoints are in the same pixel coordinates as the grid; anything outside
/// `width x height` is dropped.
pub fn skeleton_pixels(pose: &Pose, bones: &[(&str, &str)], width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut push = |p: Vector2<f64>| {
        if p.x >= 0.0 && p.y >= 0.0 && (p.x as usize) < width && (p.y as usize) < height {
            out.push((p.x as usize, p.y as usize));
        }
    };
    for kp in pose.values() {
        push(kp.position);
    }
    for (a, b) in bones {
        let (Some(a), Some(b)) = (pose.get(*a), pose.get(*b)) else {
            continue;
        };
        let steps = (b.position - a.position).abs().max().ceil().max(1.0) as usize * 2;
        for s in 0..=steps {
            push(a.position.lerp(&b.position, s as f64 / steps as f64));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConfig {
    pub tau: f64,
    pub solve: SolveConfig,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            solve: SolveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub field: AssociationField,
    pub m_o: Mask,
    pub mask: Mask,
}

/// Association field, its threshold and the product with the external mask.
pub fn segment_player(
    image: &Grid<Rgb>,
    edges: &Grid<f64>,
    anchors: &AnchorSet,
    m_cnn: &Mask,
    config: &SegmentConfig,
) -> Result<Segmentation> {
    let affinity = build_affinity(image, edges)?;
    let field = solve_association(&affinity, anchors, &config.solve)?;
    let m_o = threshold_mask(&field.values, config.tau);
    let mask = combine_masks(&m_o, m_cnn)?;
    Ok(Segmentation { field, m_o, mask })
}
