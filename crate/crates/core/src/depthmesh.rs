//! Billboard lifting, the plane-relative quantized depth codec, metric depth
//! maps and textured player meshes.
//!
//! A depth class encodes the signed camera-z offset of a pixel from the
//! player's billboard plane: 49 bins of 2 cm centered on the plane, with
//! positive offsets behind the plane, plus a background class.

use nalgebra::{Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pixel_center, Camera};
use crate::grid::{Grid, Mask};
use crate::tracking::BBox;

pub const BIN_SIZE: f64 = 0.02;
pub const PLANE_CLASS: u8 = 24;
pub const MAX_DEPTH_CLASS: u8 = 48;
pub const BACKGROUND_CLASS: u8 = 49;

/// Per-pixel depth class in `0..=49`.
pub type ClassMap = Grid<u8>;

/// Vertical plane through a player's ground point, facing the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Billboard {
    pub ground_point: Point3<f64>,
    /// Horizontal unit normal pointing toward the camera.
    pub normal: Vector3<f64>,
    /// Camera-space depth of the ground point.
    pub z0: f64,
}

impl Billboard {
    /// Intersection of a pixel's ray with the plane, if it lies in front of the camera.
    pub fn point_at(&self, camera: &Camera, pixel: &Vector2<f64>) -> Result<Point3<f64>> {
        let ray = camera.ray(pixel);
        let denom = ray.direction().dot(&self.normal);
        if denom.abs() < 1e-12 {
            return Err(Error::ParallelRay);
        }
        let s = (self.ground_point - ray.origin).dot(&self.normal) / denom;
        if s <= 0.0 {
            return Err(Error::IntersectionBehindCamera);
        }
        Ok(ray.at(s))
    }

    /// Camera-space depth of the plane seen through `pixel`.
    pub fn plane_depth(&self, camera: &Camera, pixel: &Vector2<f64>) -> Option<f64> {
        self.point_at(camera, pixel).ok().map(|p| camera.depth_of(&p))
    }
}

/// Billboard standing on the field point seen at the bottom center of `bbox`.
pub fn lift_billboard(camera: &Camera, bbox: &BBox) -> Result<Billboard> {
    lift_billboard_at(camera, &bbox.bottom_center())
}

/// Billboard standing on the field point seen at `ground_pixel`.
pub fn lift_billboard_at(camera: &Camera, ground_pixel: &Vector2<f64>) -> Result<Billboard> {
    let ground_point = camera.ray_ground_intersect(ground_pixel)?;
    let toward = camera.center() - ground_point;
    let horizontal = Vector3::new(toward.x, 0.0, toward.z);
    let len = horizontal.norm();
    if len < 1e-9 {
        return Err(Error::InvalidCamera("camera is directly above the ground point".into()));
    }
    Ok(Billboard {
        ground_point,
        normal: horizontal / len,
        z0: camera.depth_of(&ground_point),
    })
}

/// Placement of a crop grid inside the full frame.
///
/// Crop pixel `(i, j)` has its center at `origin + scale * (i + 0.5, j + 0.5)`
/// in frame pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropFrame {
    pub origin: Vector2<f64>,
    pub scale: Vector2<f64>,
}

impl Default for CropFrame {
    fn default() -> Self {
        Self {
            origin: Vector2::zeros(),
            scale: Vector2::new(1.0, 1.0),
        }
    }
}

impl CropFrame {
    pub fn at(origin: Vector2<f64>) -> Self {
        Self {
            origin,
            ..Self::default()
        }
    }

    /// Crop of `width x height` cells spanning `bbox`.
    pub fn spanning(bbox: &BBox, width: usize, height: usize) -> Self {
        Self {
            origin: Vector2::new(bbox.x, bbox.y),
            scale: Vector2::new(bbox.w / width as f64, bbox.h / height as f64),
        }
    }

    pub fn frame_pixel(&self, x: usize, y: usize) -> Vector2<f64> {
        self.origin + pixel_center(x, y).component_mul(&self.scale)
    }
}

/// Metric camera-space depth with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub depth: Grid<f64>,
    pub valid: Mask,
    pub crop: CropFrame,
}

impl DepthMap {
    pub fn new(depth: Grid<f64>, valid: Mask, crop: CropFrame) -> Result<Self> {
        depth.ensure_same_dims(&valid)?;
        for (x, y, &v) in valid.iter_xy() {
            let d = *depth.get(x, y);
            if v && !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidDepth(d));
            }
        }
        Ok(Self { depth, valid, crop })
    }

    /// Depth map valid wherever the value is finite and positive.
    pub fn from_values(depth: Grid<f64>, crop: CropFrame) -> Self {
        let valid = depth.map(|d| d.is_finite() && *d > 0.0);
        Self { depth, valid, crop }
    }

    pub fn invalid(width: usize, height: usize, crop: CropFrame) -> Self {
        Self {
            depth: Grid::new(width, height, 0.0),
            valid: Grid::new(width, height, false),
            crop,
        }
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.valid.get(x, y).then(|| *self.depth.get(x, y))
    }
}

/// Class of a signed offset from the plane (positive = behind it).
pub fn offset_class(delta: f64) -> u8 {
    ((delta / BIN_SIZE).round() + PLANE_CLASS as f64).clamp(0.0, MAX_DEPTH_CLASS as f64) as u8
}

/// Offset represented by a depth class, `None` for background.
pub fn class_offset(class: u8) -> Option<f64> {
    (class <= MAX_DEPTH_CLASS).then_some((class as f64 - PLANE_CLASS as f64) * BIN_SIZE)
}

/// Quantizes a depth map against the per-pixel billboard plane depth.
pub fn encode_depth(depth: &DepthMap, billboard: &Billboard, camera: &Camera) -> ClassMap {
    Grid::from_fn(depth.width(), depth.height(), |x, y| {
        let Some(z) = depth.get(x, y) else {
            return BACKGROUND_CLASS;
        };
        match billboard.plane_depth(camera, &depth.crop.frame_pixel(x, y)) {
            Some(plane) => offset_class(z - plane),
            None => BACKGROUND_CLASS,
        }
    })
}

/// Applies class offsets to the billboard plane depth seen through each crop pixel.
///
/// Pixels whose ray misses the plane are left invalid.
pub fn decode_depth(classes: &ClassMap, billboard: &Billboard, camera: &Camera, crop: CropFrame) -> DepthMap {
    let mut out = DepthMap::invalid(classes.width(), classes.height(), crop);
    for (x, y, &c) in classes.iter_xy() {
        let Some(offset) = class_offset(c) else { continue };
        let Some(plane) = billboard.plane_depth(camera, &crop.frame_pixel(x, y)) else {
            continue;
        };
        let z = plane + offset;
        if z > 0.0 {
            out.depth.set(x, y, z);
            out.valid.set(x, y, true);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlayerMesh {
    pub name: String,
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Texture coordinates with `v` growing downward in the crop image.
    pub uvs: Vec<Vector2<f64>>,
    /// File name of the texture image, relative to the mesh file.
    pub texture: Option<String>,
}

/// One vertex per valid masked pixel, two triangles per fully valid 2x2 block.
///
/// Triangles whose corner depths differ by more than `discontinuity_thresh`
/// meters are skipped, as are triangles with (near) zero area. Faces wind
/// counter-clockwise as seen from the camera.
pub fn build_mesh(depth: &DepthMap, mask: &Mask, camera: &Camera, discontinuity_thresh: f64) -> Result<PlayerMesh> {
    depth.depth.ensure_same_dims(mask)?;
    let (w, h) = depth.depth.dims();
    let mut index = Grid::new(w, h, None);
    let mut mesh = PlayerMesh::default();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) {
                continue;
            }
            let Some(z) = depth.get(x, y) else { continue };
            let p = camera.unproject(&depth.crop.frame_pixel(x, y), z)?;
            index.set(x, y, Some(mesh.vertices.len()));
            mesh.vertices.push(p);
            mesh.uvs.push(Vector2::new((x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64));
        }
    }
    if mesh.vertices.is_empty() {
        return Err(Error::EmptyPlayer);
    }
    let z_of = |i: usize, x: usize, y: usize| -> (usize, f64) { (i, *depth.depth.get(x, y)) };
    let emit = |corners: &[Option<(usize, f64)>; 3], faces: &mut Vec<[usize; 3]>| {
        let [Some(a), Some(b), Some(c)] = *corners else { return };
        let zs = [a.1, b.1, c.1];
        let spread = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - zs.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > discontinuity_thresh {
            return;
        }
        let (pa, pb, pc) = (mesh.vertices[a.0], mesh.vertices[b.0], mesh.vertices[c.0]);
        if 0.5 * (pb - pa).cross(&(pc - pa)).norm() < 1e-12 {
            return;
        }
        faces.push([a.0, b.0, c.0]);
    };
    let mut faces = Vec::new();
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let at = |xx: usize, yy: usize| index.get(xx, yy).map(|i| z_of(i, xx, yy));
            let (a, b, c, d) = (at(x, y), at(x + 1, y), at(x, y + 1), at(x + 1, y + 1));
            match [a, b, c, d].iter().filter(|v| v.is_some()).count() {
                4 => {
                    emit(&[a, c, b], &mut faces);
                    emit(&[b, c, d], &mut faces);
                }
                3 => {
                    let tri = match (a, b, c, d) {
                        (None, ..) => [b, c, d],
                        (_, None, ..) => [a, c, d],
                        (_, _, None, _) => [a, d, b],
                        _ => [a, c, b],
                    };
                    emit(&tri, &mut faces);
                }
                _ => {}
            }
        }
    }
    mesh.faces = faces;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageSize;

    fn broadcast() -> Camera {
        Camera::look_at(
            Point3::new(0.0, 18.0, -70.0),
            Point3::new(5.0, 0.0, 10.0),
            Vector3::y(),
            1500.0,
            ImageSize::new(1280, 720),
        )
        .unwrap()
    }

    #[test]
    fn lifting_recovers_known_ground_point() {
        let cam = broadcast();
        let g = Point3::new(10.0, 0.0, 20.0);
        let px = cam.project(&g).unwrap();
        let bbox = BBox::new(px.x - 15.0, px.y - 80.0, 30.0, 80.0);
        let b = lift_billboard(&cam, &bbox).unwrap();
        assert!((b.ground_point - g).norm() < 1e-3);
        assert_eq!(b.normal.y, 0.0);
        assert!((b.normal.norm() - 1.0).abs() < 1e-12);
        assert!((b.z0 - cam.depth_of(&g)).abs() < 1e-9);
        assert!(b.normal.dot(&(cam.center() - g)) > 0.0);
    }

    #[test]
    fn lifting_above_horizon_fails() {
        let cam = broadcast();
        assert!(lift_billboard_at(&cam, &Vector2::new(640.0, 0.0)).is_err());
    }

    #[test]
    fn class_examples() {
        assert_eq!(offset_class(0.0), 24);
        assert_eq!(offset_class(0.02), 25);
        assert_eq!(offset_class(-0.02), 23);
        assert_eq!(offset_class(5.0), 48);
        assert_eq!(offset_class(-5.0), 0);
        assert_eq!(class_offset(49), None);
        assert!((class_offset(0).unwrap() + 0.48).abs() < 1e-12);
        assert!((class_offset(48).unwrap() - 0.48).abs() < 1e-12);
    }

    fn player_setup() -> (Camera, Billboard, CropFrame) {
        let cam = broadcast();
        let g = Point3::new(10.0, 0.0, 20.0);
        let px = cam.project(&g).unwrap();
        let b = lift_billboard_at(&cam, &px).unwrap();
        (cam, b, CropFrame::at(Vector2::new(px.x - 8.0, px.y - 40.0)))
    }

    #[test]
    fn plane_classes_decode_to_plane_depth() {
        let (cam, b, crop) = player_setup();
        let classes = Grid::new(16, 40, PLANE_CLASS);
        let d = decode_depth(&classes, &b, &cam, crop);
        for (x, y, _) in classes.iter_xy() {
            let expected = b.plane_depth(&cam, &crop.frame_pixel(x, y)).unwrap();
            assert_eq!(d.get(x, y), Some(expected));
        }
        let bg = decode_depth(&Grid::new(4, 4, BACKGROUND_CLASS), &b, &cam, crop);
        assert_eq!(bg.valid.count(), 0);
    }

    #[test]
    fn codec_round_trips() {
        let (cam, b, crop) = player_setup();
        for c in 0..=MAX_DEPTH_CLASS {
            let classes = Grid::new(3, 3, c);
            let d = decode_depth(&classes, &b, &cam, crop);
            assert_eq!(encode_depth(&d, &b, &cam), classes);
        }
        let mut k = 0;
        let depth = Grid::from_fn(16, 40, |x, y| {
            k += 1;
            let delta = -0.48 + 0.96 * (k as f64 / 640.0);
            b.plane_depth(&cam, &crop.frame_pixel(x, y)).unwrap() + delta
        });
        let dm = DepthMap::from_values(depth, crop);
        let back = decode_depth(&encode_depth(&dm, &b, &cam), &b, &cam, crop);
        for (x, y, _) in dm.depth.iter_xy() {
            assert!((back.get(x, y).unwrap() - dm.get(x, y).unwrap()).abs() <= 0.01 + 1e-9);
        }
    }

    fn flat_depth(w: usize, h: usize, z: f64) -> DepthMap {
        DepthMap::from_values(Grid::new(w, h, z), CropFrame::at(Vector2::new(600.0, 300.0)))
    }

    #[test]
    fn two_by_two_block_gives_two_triangles() {
        let cam = broadcast();
        let d = flat_depth(2, 2, 50.0);
        let m = build_mesh(&d, &Grid::new(2, 2, true), &cam, 0.1).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.len(), 2);
        assert_eq!(m.uvs.len(), 4);
        for (v, (x, y)) in m.vertices.iter().zip([(0, 0), (1, 0), (0, 1), (1, 1)]) {
            let px = cam.project(v).unwrap();
            assert!((px - d.crop.frame_pixel(x, y)).norm() < 1e-6);
        }
    }

    #[test]
    fn single_pixel_has_no_faces() {
        let cam = broadcast();
        let mut mask = Grid::new(2, 2, false);
        mask.set(1, 1, true);
        let m = build_mesh(&flat_depth(2, 2, 50.0), &mask, &cam, 0.1).unwrap();
        assert_eq!((m.vertices.len(), m.faces.len()), (1, 0));
    }

    #[test]
    fn deep_corner_drops_touching_triangles() {
        let cam = broadcast();
        let mut d = flat_depth(2, 2, 50.0);
        d.depth.set(1, 1, 50.5);
        let m = build_mesh(&d, &Grid::new(2, 2, true), &cam, 0.1).unwrap();
        assert_eq!(m.faces, vec![[0, 2, 1]]);
    }

    #[test]
    fn three_valid_corners_give_one_triangle() {
        let cam = broadcast();
        let mut mask = Grid::new(2, 2, true);
        mask.set(0, 0, false);
        let m = build_mesh(&flat_depth(2, 2, 50.0), &mask, &cam, 0.1).unwrap();
        assert_eq!(m.faces.len(), 1);
    }

    #[test]
    fn empty_player_rejected() {
        let cam = broadcast();
        let r = build_mesh(&flat_depth(2, 2, 50.0), &Grid::new(2, 2, false), &cam, 0.1);
        assert!(matches!(r, Err(Error::EmptyPlayer)));
    }
}
