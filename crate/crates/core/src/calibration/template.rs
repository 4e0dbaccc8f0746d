//! Planar pitch template: touchlines, goal lines, halfway line, circles, boxes and arcs.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One marking primitive lying in the `y = 0` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Line {
        start: Point3<f64>,
        end: Point3<f64>,
    },
    /// Points `center + radius (cos a, 0, sin a)` for `a` from `start_angle` to `end_angle`.
    Arc {
        center: Point3<f64>,
        radius: f64,
        start_angle: f64,
        end_angle: f64,
    },
}

impl Primitive {
    pub fn length(&self) -> f64 {
        match self {
            Primitive::Line { start, end } => (end - start).norm(),
            Primitive::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => radius * (end_angle - start_angle).abs(),
        }
    }

    /// Point at normalized arc-length parameter `s` in `[0, 1]`.
    pub fn point_at(&self, s: f64) -> Point3<f64> {
        match self {
            Primitive::Line { start, end } => start + (end - start) * s,
            Primitive::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let a = start_angle + (end_angle - start_angle) * s;
                Point3::new(center.x + radius * a.cos(), 0.0, center.z + radius * a.sin())
            }
        }
    }

    /// Number of points `sample` returns: `ceil(length / spacing) + 1`.
    pub fn sample_count(&self, spacing: f64) -> usize {
        let intervals = (self.length() / spacing - 1e-9).ceil().max(0.0) as usize;
        intervals + 1
    }

    /// Evenly spaced points including both endpoints, no gap wider than `spacing`.
    pub fn sample(&self, spacing: f64) -> Vec<Point3<f64>> {
        let n = self.sample_count(spacing);
        if n == 1 {
            return vec![self.point_at(0.0)];
        }
        let intervals = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let mut p = self.point_at(i as f64 / intervals);
                p.y = 0.0;
                p
            })
            .collect()
    }

    fn mirrored(&self, mx: f64, mz: f64) -> Primitive {
        match self {
            Primitive::Line { start, end } => Primitive::Line {
                start: Point3::new(start.x * mx, 0.0, start.z * mz),
                end: Point3::new(end.x * mx, 0.0, end.z * mz),
            },
            Primitive::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                let map = |a: f64| f64::atan2(a.sin() * mz, a.cos() * mx);
                Primitive::Arc {
                    center: Point3::new(center.x * mx, 0.0, center.z * mz),
                    radius: *radius,
                    start_angle: map(*start_angle),
                    end_angle: map(*start_angle) + (end_angle - start_angle) * mx * mz,
                }
            }
        }
    }

    fn endpoints_on_ground(&self) -> bool {
        match self {
            Primitive::Line { start, end } => start.y == 0.0 && end.y == 0.0,
            Primitive::Arc { center, radius, .. } => center.y == 0.0 && *radius > 0.0,
        }
    }
}

/// Marking dimensions in meters (standard values by default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMarkings {
    pub penalty_area_depth: f64,
    pub penalty_area_width: f64,
    pub goal_area_depth: f64,
    pub goal_area_width: f64,
    pub center_circle_radius: f64,
    pub penalty_spot_distance: f64,
    pub penalty_arc_radius: f64,
    pub corner_arc_radius: f64,
}

impl Default for FieldMarkings {
    fn default() -> Self {
        Self {
            penalty_area_depth: 16.5,
            penalty_area_width: 40.32,
            goal_area_depth: 5.5,
            goal_area_width: 18.32,
            center_circle_radius: 9.15,
            penalty_spot_distance: 11.0,
            penalty_arc_radius: 9.15,
            corner_arc_radius: 1.0,
        }
    }
}

/// Pitch centered at the origin: `x` along the length, `z` along the width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TemplateRecord")]
pub struct FieldTemplate {
    pub length: f64,
    pub width: f64,
    pub segments: Vec<Primitive>,
}

#[derive(Deserialize)]
struct TemplateRecord {
    length: f64,
    width: f64,
    #[serde(default)]
    markings: Option<FieldMarkings>,
    #[serde(default)]
    segments: Option<Vec<Primitive>>,
}

impl TryFrom<TemplateRecord> for FieldTemplate {
    type Error = Error;

    fn try_from(r: TemplateRecord) -> Result<Self> {
        match r.segments {
            Some(segments) => FieldTemplate::custom(r.length, r.width, segments),
            None => FieldTemplate::with_markings(r.length, r.width, r.markings.unwrap_or_default()),
        }
    }
}

impl Default for FieldTemplate {
    fn default() -> Self {
        Self::with_markings(105.0, 68.0, FieldMarkings::default()).expect("default pitch")
    }
}

impl FieldTemplate {
    pub fn with_markings(length: f64, width: f64, m: FieldMarkings) -> Result<Self> {
        if !(length > 0.0 && width > 0.0) {
            return Err(Error::InvalidInput("pitch dimensions must be positive".into()));
        }
        let hl = length / 2.0;
        let hw = width / 2.0;
        let p = |x: f64, z: f64| Point3::new(x, 0.0, z);
        let line = |a: Point3<f64>, b: Point3<f64>| Primitive::Line { start: a, end: b };
        let mut s = vec![
            line(p(-hl, -hw), p(hl, -hw)),
            line(p(-hl, hw), p(hl, hw)),
            line(p(-hl, -hw), p(-hl, hw)),
            line(p(hl, -hw), p(hl, hw)),
            line(p(0.0, -hw), p(0.0, hw)),
        ];
        for q in 0..4 {
            let a0 = q as f64 * FRAC_PI_2;
            s.push(Primitive::Arc {
                center: Point3::origin(),
                radius: m.center_circle_radius,
                start_angle: a0,
                end_angle: a0 + FRAC_PI_2,
            });
        }
        // Boxes and the penalty arc for the goal at x = -hl; the other end is mirrored.
        let mut half = Vec::new();
        for (depth, box_width) in [
            (m.penalty_area_depth, m.penalty_area_width),
            (m.goal_area_depth, m.goal_area_width),
        ] {
            let bz = box_width / 2.0;
            let front = -hl + depth;
            half.push(line(p(front, -bz), p(front, bz)));
            half.push(line(p(-hl, -bz), p(front, -bz)));
            half.push(line(p(-hl, bz), p(front, bz)));
        }
        let spot = -hl + m.penalty_spot_distance;
        let reach = (m.penalty_area_depth - m.penalty_spot_distance) / m.penalty_arc_radius;
        if reach.abs() < 1.0 {
            let alpha = reach.acos();
            half.push(Primitive::Arc {
                center: p(spot, 0.0),
                radius: m.penalty_arc_radius,
                start_angle: -alpha,
                end_angle: alpha,
            });
        }
        s.extend(half.iter().map(|h| h.mirrored(1.0, 1.0)));
        s.extend(half.iter().map(|h| h.mirrored(-1.0, 1.0)));
        if m.corner_arc_radius > 0.0 {
            for (cx, cz, a0) in [
                (-hl, -hw, 0.0),
                (hl, -hw, FRAC_PI_2),
                (hl, hw, PI),
                (-hl, hw, 3.0 * FRAC_PI_2),
            ] {
                s.push(Primitive::Arc {
                    center: p(cx, cz),
                    radius: m.corner_arc_radius,
                    start_angle: a0,
                    end_angle: a0 + FRAC_PI_2,
                });
            }
        }
        Self::custom(length, width, s)
    }

    pub fn custom(length: f64, width: f64, segments: Vec<Primitive>) -> Result<Self> {
        if let Some(bad) = segments.iter().position(|s| !s.endpoints_on_ground()) {
            return Err(Error::InvalidInput(format!("segment {bad} does not lie in y = 0")));
        }
        Ok(Self {
            length,
            width,
            segments,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    /// Image of the template under `x -> mx x`, `z -> mz z`.
    pub fn mirrored(&self, mx: f64, mz: f64) -> FieldTemplate {
        FieldTemplate {
            length: self.length,
            width: self.width,
            segments: self.segments.iter().map(|s| s.mirrored(mx, mz)).collect(),
        }
    }
}

/// Points along every primitive, at most `spacing` apart, endpoints included.
pub fn sample_template_points(template: &FieldTemplate, spacing: f64) -> Vec<Point3<f64>> {
    assert!(spacing > 0.0, "spacing must be positive");
    template
        .segments
        .iter()
        .flat_map(|s| s.sample(spacing))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_meter_segment_fenceposts() {
        let seg = Primitive::Line {
            start: Point3::new(0.0, 0.0, 0.0),
            end: Point3::new(10.0, 0.0, 0.0),
        };
        let pts = seg.sample(1.0);
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[0], Point3::new(0.0, 0.0, 0.0));
        assert!((pts[10] - Point3::new(10.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn all_points_on_ground() {
        let pts = sample_template_points(&FieldTemplate::default(), 0.5);
        assert!(pts.iter().all(|p| p.y == 0.0));
    }

    #[test]
    fn count_matches_closed_form() {
        let t = FieldTemplate::default();
        let spacing = 0.5;
        let expected: usize = t
            .segments
            .iter()
            .map(|s| (s.length() / spacing).ceil() as usize + 1)
            .sum();
        assert_eq!(sample_template_points(&t, spacing).len(), expected);
    }

    #[test]
    fn gaps_never_exceed_spacing() {
        for seg in &FieldTemplate::default().segments {
            let pts = seg.sample(0.7);
            for w in pts.windows(2) {
                assert!((w[1] - w[0]).norm() <= 0.7 + 1e-9);
            }
        }
    }

    #[test]
    fn default_template_is_symmetric() {
        let t = FieldTemplate::default();
        let pts = sample_template_points(&t, 0.5);
        for (mx, mz) in [(-1.0, 1.0), (1.0, -1.0)] {
            for p in &pts {
                let m = Point3::new(p.x * mx, 0.0, p.z * mz);
                let nearest = pts.iter().map(|q| (q - m).norm()).fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-9, "mirror of {p} missing ({nearest})");
            }
        }
    }

    #[test]
    fn sampling_commutes_with_mirroring() {
        let t = FieldTemplate::default();
        let spacing = 0.5;
        let mirrored_points: Vec<_> = sample_template_points(&t, spacing)
            .into_iter()
            .map(|p| Point3::new(-p.x, 0.0, p.z))
            .collect();
        let points_of_mirror = sample_template_points(&t.mirrored(-1.0, 1.0), spacing);
        assert_eq!(mirrored_points.len(), points_of_mirror.len());
        for (a, b) in mirrored_points.iter().zip(&points_of_mirror) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn json_with_and_without_segments() {
        let t: FieldTemplate = serde_json::from_str(r#"{"length": 100, "width": 64}"#).unwrap();
        assert_eq!(t.length, 100.0);
        assert!(!t.segments.is_empty());
        let custom: FieldTemplate = serde_json::from_str(
            r#"{"length": 10, "width": 5, "segments": [{"line": {"start": [0,0,0], "end": [1,0,0]}}]}"#,
        )
        .unwrap();
        assert_eq!(custom.segments.len(), 1);
        let bad = serde_json::from_str::<FieldTemplate>(
            r#"{"length": 10, "width": 5, "segments": [{"line": {"start": [0,1,0], "end": [1,0,0]}}]}"#,
        );
        assert!(bad.is_err());
        let round: FieldTemplate = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(round, t);
    }
}
