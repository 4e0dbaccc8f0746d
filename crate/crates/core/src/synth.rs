//! Synthetic broadcast scenes with exact ground truth.
//!
//! Players are axis-aligned boxes standing on the pitch. All randomness is
//! drawn from a seeded ChaCha stream, so a seed fully determines a scene.

use image::{Rgb, RgbImage};
use nalgebra::{Point3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use std::path::{Path, PathBuf};

use crate::calibration::{sample_template_points, Correspondence, EdgeSet, FieldTemplate};
use crate::depthmesh::{lift_billboard_at, offset_class, Billboard, ClassMap, CropFrame, BACKGROUND_CLASS};
use crate::error::{Error, Result};
use crate::extract::Capture;
use crate::geometry::{pixel_center, rotation_matrix, rotation_vector, Camera, GlCamera, ImageSize, Ray};
use crate::grid::{Grid, Mask};
use crate::io;
use crate::pipeline::{FrameInputs, Params, SceneManifest};
use crate::tracking::{refine_boxes, BBox, Detection, Keypoint, Pose, RefineBoxesConfig};

/// Label values shared with label-image files.
pub const LABEL_OTHER: u8 = 0;
pub const LABEL_GROUND: u8 = 1;
pub const LABEL_PLAYER: u8 = 2;

/// A box-shaped player: footprint center on the pitch and extents in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPlayer {
    /// `(x, z)` of the footprint center.
    pub ground: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub depth_extent: f64,
}

impl BoxPlayer {
    pub fn ground_point(&self) -> Point3<f64> {
        Point3::new(self.ground[0], 0.0, self.ground[1])
    }

    pub fn min_corner(&self) -> Point3<f64> {
        Point3::new(
            self.ground[0] - self.width / 2.0,
            0.0,
            self.ground[1] - self.depth_extent / 2.0,
        )
    }

    pub fn max_corner(&self) -> Point3<f64> {
        Point3::new(
            self.ground[0] + self.width / 2.0,
            self.height,
            self.ground[1] + self.depth_extent / 2.0,
        )
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let (a, b) = (self.min_corner(), self.max_corner());
        let mut out = [Point3::origin(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Point3::new(
                if i & 1 == 0 { a.x } else { b.x },
                if i & 2 == 0 { a.y } else { b.y },
                if i & 4 == 0 { a.z } else { b.z },
            );
        }
        out
    }

    /// Ray parameter of the first intersection with the box, if any.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        let d = ray.direction();
        let mut t_min = 0.0f64;
        let mut t_max = f64::INFINITY;
        for axis in 0..3 {
            let o = ray.origin[axis];
            if d[axis].abs() < 1e-15 {
                if o < lo[axis] || o > hi[axis] {
                    return None;
                }
                continue;
            }
            let t1 = (lo[axis] - o) / d[axis];
            let t2 = (hi[axis] - o) / d[axis];
            t_min = t_min.max(t1.min(t2));
            t_max = t_max.min(t1.max(t2));
            if t_min > t_max {
                return None;
            }
        }
        (t_min > 0.0).then_some(t_min)
    }

    /// Whether a point lies on the box surface within `tol`.
    pub fn on_surface(&self, p: &Point3<f64>, tol: f64) -> bool {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        let inside = (0..3).all(|a| p[a] >= lo[a] - tol && p[a] <= hi[a] + tol);
        let on_face = (0..3).any(|a| (p[a] - lo[a]).abs() <= tol || (p[a] - hi[a]).abs() <= tol);
        inside && on_face
    }
}

/// Edge-map corruption.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeNoise {
    /// Probability of discarding each edge pixel.
    pub dropout: f64,
    /// Standard deviation of the pixel jitter applied before rasterization.
    pub jitter_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub camera: Camera,
    pub glcam: GlCamera,
    pub players: Vec<BoxPlayer>,
    pub template: FieldTemplate,
    pub noise: EdgeNoise,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub image_size: ImageSize,
    pub num_players: usize,
    pub z_near: f64,
    pub z_far: f64,
    pub player_height: (f64, f64),
    /// Minimum footprint-center spacing between players in meters.
    pub min_separation: f64,
    pub noise: EdgeNoise,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            image_size: ImageSize::new(1280, 720),
            num_players: 0,
            z_near: 1.0,
            z_far: 1000.0,
            player_height: (1.6, 2.0),
            min_separation: 2.5,
            noise: EdgeNoise::default(),
        }
    }
}

/// A main-camera view from the stand: behind one touchline, elevated, looking at the pitch.
pub fn random_broadcast_camera(rng: &mut impl Rng, image_size: ImageSize) -> Camera {
    let target = Point3::new(rng.random_range(-30.0..30.0), 0.0, rng.random_range(-8.0..8.0));
    let eye = Point3::new(
        0.3 * target.x + rng.random_range(-5.0..5.0),
        rng.random_range(15.0..25.0),
        -34.0 - rng.random_range(25.0..40.0),
    );
    let focal = rng.random_range(1.0..1.25) * image_size.width as f64;
    Camera::look_at(eye, target, Vector3::y(), focal, image_size).expect("broadcast camera")
}

impl SynthScene {
    pub fn random(seed: u64, config: &SceneConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let camera = random_broadcast_camera(&mut rng, config.image_size);
        let glcam = GlCamera::from_camera(&camera, config.z_near, config.z_far)?;
        let template = FieldTemplate::default();
        let players = place_players(&mut rng, &camera, &template, config)?;
        Ok(Self {
            camera,
            glcam,
            players,
            template,
            noise: config.noise,
            seed,
        })
    }

    /// Scene around a given camera.
    pub fn with_camera(camera: Camera, seed: u64, config: &SceneConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glcam = GlCamera::from_camera(&camera, config.z_near, config.z_far)?;
        let template = FieldTemplate::default();
        let players = place_players(&mut rng, &camera, &template, config)?;
        Ok(Self {
            camera,
            glcam,
            players,
            template,
            noise: config.noise,
            seed,
        })
    }
}

/// Pixel bounding box `[x0, y0, x1, y1]` of a player's projected corners.
pub fn projected_box(camera: &Camera, player: &BoxPlayer) -> Option<[f64; 4]> {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in player.corners() {
        let p = camera.project(&c).ok()?;
        b[0] = b[0].min(p.x);
        b[1] = b[1].min(p.y);
        b[2] = b[2].max(p.x);
        b[3] = b[3].max(p.y);
    }
    Some(b)
}

fn place_players(
    rng: &mut ChaCha8Rng,
    camera: &Camera,
    template: &FieldTemplate,
    config: &SceneConfig,
) -> Result<Vec<BoxPlayer>> {
    let size = config.image_size;
    let mut players: Vec<BoxPlayer> = Vec::new();
    let mut boxes: Vec<[f64; 4]> = Vec::new();
    let mut attempts = 0;
    while players.len() < config.num_players {
        attempts += 1;
        if attempts > 20_000 {
            return Err(Error::EmptyRender(format!(
                "could only place {} of {} players",
                players.len(),
                config.num_players
            )));
        }
        let px = Vector2::new(
            rng.random_range(0.1..0.9) * size.width as f64,
            rng.random_range(0.25..0.9) * size.height as f64,
        );
        let Ok(g) = camera.ray_ground_intersect(&px) else {
            continue;
        };
        let player = BoxPlayer {
            ground: [g.x, g.z],
            width: rng.random_range(0.45..0.6),
            height: rng.random_range(config.player_height.0..config.player_height.1),
            depth_extent: rng.random_range(0.25..0.4),
        };
        if g.x.abs() > template.half_length() - 1.0 || g.z.abs() > template.half_width() - 1.0 {
            continue;
        }
        if players.iter().any(|q| {
            (q.ground[0] - g.x).hypot(q.ground[1] - g.z) < config.min_separation
        }) {
            continue;
        }
        let Some(b) = projected_box(camera, &player) else {
            continue;
        };
        if b[0] < 2.0 || b[1] < 2.0 || b[2] > size.width as f64 - 2.0 || b[3] > size.height as f64 - 2.0 {
            continue;
        }
        let pad = 3.0;
        if boxes.iter().any(|o| {
            b[0] - pad < o[2] && o[0] < b[2] + pad && b[1] - pad < o[3] && o[1] < b[3] + pad
        }) {
            continue;
        }
        players.push(player);
        boxes.push(b);
    }
    Ok(players)
}

/// Rasterized projection of the pitch markings with optional jitter and dropout.
pub fn render_edges(scene: &SynthScene) -> Result<EdgeSet> {
    render_edges_for(&scene.camera, &scene.template, scene.noise, scene.seed)
}

pub fn render_edges_for(
    camera: &Camera,
    template: &FieldTemplate,
    noise: EdgeNoise,
    seed: u64,
) -> Result<EdgeSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let size = camera.image_size;
    let jitter = Normal::new(0.0, noise.jitter_sigma.max(0.0)).expect("normal");
    let mut mask: Mask = Grid::new(size.width as usize, size.height as usize, false);
    for p in sample_template_points(template, 0.02) {
        let Ok(mut px) = camera.project(&p) else {
            continue;
        };
        if noise.jitter_sigma > 0.0 {
            px += Vector2::new(jitter.sample(&mut rng), jitter.sample(&mut rng));
        }
        if size.contains(&px) {
            mask.set(px.x as usize, px.y as usize, true);
        }
    }
    if noise.dropout > 0.0 {
        for v in mask.as_mut_slice() {
            if *v && rng.random::<f64>() < noise.dropout {
                *v = false;
            }
        }
    }
    let edges = EdgeSet::from_mask(&mask);
    if edges.is_empty() {
        return Err(Error::EmptyRender("no pitch markings in view".into()));
    }
    Ok(edges)
}

/// Ground-truth buffers of a rendered scene.
#[derive(Debug, Clone)]
pub struct NdcRender {
    pub capture: Capture,
    /// `LABEL_GROUND`, `LABEL_PLAYER` or `LABEL_OTHER` per pixel.
    pub labels: Grid<u8>,
    /// Index of the player visible at each pixel.
    pub player_ids: Grid<Option<usize>>,
    /// Camera-space depth per pixel (infinite where nothing is hit).
    pub eye_depth: Grid<f64>,
}

pub fn player_color(index: usize) -> Rgb<u8> {
    let h = (index as u32).wrapping_mul(2_654_435_761);
    Rgb([
        60 + (h & 0x7f) as u8 + 60,
        (h >> 8 & 0x7f) as u8 + 40,
        (h >> 16 & 0x7f) as u8 + 100,
    ])
}

const GRASS: Rgb<u8> = Rgb([40, 130, 50]);
const LINE: Rgb<u8> = Rgb([235, 235, 235]);
const STAND: Rgb<u8> = Rgb([90, 90, 100]);

fn near_marking(p: &Point3<f64>, template: &FieldTemplate, half_width: f64) -> bool {
    use crate::calibration::Primitive;
    template.segments.iter().any(|s| match s {
        Primitive::Line { start, end } => {
            let d = end - start;
            let t = ((p - start).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            (p - (start + d * t)).norm() <= half_width
        }
        Primitive::Arc {
            center,
            radius,
            start_angle,
            end_angle,
        } => {
            let v = p - center;
            if ((v.x * v.x + v.z * v.z).sqrt() - radius).abs() > half_width {
                return false;
            }
            let (lo, hi) = if start_angle <= end_angle {
                (*start_angle, *end_angle)
            } else {
                (*end_angle, *start_angle)
            };
            let mut a = v.z.atan2(v.x);
            while a < lo {
                a += std::f64::consts::TAU;
            }
            a <= hi + 1e-9
        }
    })
}

/// Ray-casts the ground plane and player boxes into a depth buffer.
pub fn render_ndc(scene: &SynthScene) -> NdcRender {
    let cam = &scene.camera;
    let size = cam.image_size;
    let (w, h) = (size.width as usize, size.height as usize);
    let mut labels = Grid::new(w, h, LABEL_OTHER);
    let mut player_ids = Grid::new(w, h, None);
    let mut depth = Grid::new(w, h, 1.0);
    let mut eye_depth = Grid::new(w, h, f64::INFINITY);
    let mut color = RgbImage::from_pixel(w as u32, h as u32, STAND);
    let n = scene.glcam.z_near;
    let f = scene.glcam.z_far;
    for y in 0..h {
        for x in 0..w {
            let px = pixel_center(x, y);
            let Some((s, who)) = cast(cam, &scene.players, &px) else { continue };
            let ray = cam.ray(&px);
            let point = ray.at(s);
            let z = cam.depth_of(&point);
            if !(n..=f).contains(&z) {
                continue;
            }
            let z_ndc = (f + n) / (f - n) - 2.0 * f * n / ((f - n) * z);
            depth.set(x, y, 0.5 * z_ndc + 0.5);
            eye_depth.set(x, y, z);
            match who {
                Some(i) => {
                    labels.set(x, y, LABEL_PLAYER);
                    player_ids.set(x, y, Some(i));
                    color.put_pixel(x as u32, y as u32, player_color(i));
                }
                None => {
                    labels.set(x, y, LABEL_GROUND);
                    let c = if near_marking(&Point3::new(point.x, 0.0, point.z), &scene.template, 0.06) {
                        LINE
                    } else {
                        GRASS
                    };
                    color.put_pixel(x as u32, y as u32, c);
                }
            }
        }
    }
    NdcRender {
        capture: Capture {
            color,
            ndc_depth: depth,
            glcam: scene.glcam.clone(),
        },
        labels,
        player_ids,
        eye_depth,
    }
}

/// First hit of a pixel ray: the ray parameter and the player index, `None` for the ground.
pub fn cast(camera: &Camera, players: &[BoxPlayer], pixel: &Vector2<f64>) -> Option<(f64, Option<usize>)> {
    let ray = camera.ray(pixel);
    let d = ray.direction();
    let mut best = None;
    if d.y < -1e-12 {
        let s = -ray.origin.y / d.y;
        if s > 0.0 {
            best = Some((s, None));
        }
    }
    for (i, p) in players.iter().enumerate() {
        if let Some(s) = p.intersect(&ray) {
            if best.is_none_or(|(b, _): (f64, Option<usize>)| s < b) {
                best = Some((s, Some(i)));
            }
        }
    }
    best
}

/// Skeleton keypoints of a box player, on the vertical plane through its
/// footprint center spanned by the camera's horizontal right direction.
pub fn box_pose(camera: &Camera, player: &BoxPlayer) -> Result<Pose> {
    let r = camera.rotation_matrix();
    let right = Vector3::new(r[(0, 0)], 0.0, r[(0, 2)]);
    let right = right.try_normalize(1e-9).unwrap_or_else(Vector3::x);
    let (w, h) = (player.width, player.height);
    let g = player.ground_point();
    let joints = [
        ("head", 0.0, 0.93),
        ("neck", 0.0, 0.82),
        ("left_shoulder", -0.4, 0.8),
        ("right_shoulder", 0.4, 0.8),
        ("hip", 0.0, 0.5),
        ("left_knee", -0.2, 0.27),
        ("right_knee", 0.2, 0.27),
        ("left_ankle", -0.2, 0.0),
        ("right_ankle", 0.2, 0.0),
    ];
    let mut pose = Pose::new();
    for (name, lateral, up) in joints {
        let p = g + right * (lateral * w) + Vector3::y() * (up * h);
        pose.insert(name.to_string(), Keypoint::new(camera.project(&p)?, 1.0));
    }
    Ok(pose)
}

/// Class map a perfect depth network would output for player `index`.
pub fn true_class_map(
    camera: &Camera,
    players: &[BoxPlayer],
    index: usize,
    billboard: &Billboard,
    crop: &CropFrame,
    width: usize,
    height: usize,
) -> ClassMap {
    Grid::from_fn(width, height, |x, y| {
        let px = crop.frame_pixel(x, y);
        match cast(camera, players, &px) {
            Some((s, Some(i))) if i == index => {
                let z = camera.depth_of(&camera.ray(&px).at(s));
                match billboard.plane_depth(camera, &px) {
                    Some(plane) => offset_class(z - plane),
                    None => BACKGROUND_CLASS,
                }
            }
            _ => BACKGROUND_CLASS,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceConfig {
    pub frames: usize,
    pub scene: SceneConfig,
    /// Camera yaw added per frame, in degrees.
    pub pan_per_frame: f64,
    /// Player speed range in meters per frame.
    pub speed: (f64, f64),
    /// Resolution of the emitted class maps.
    pub class_map_size: usize,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            frames: 10,
            scene: SceneConfig {
                num_players: 4,
                ..SceneConfig::default()
            },
            pan_per_frame: 0.15,
            speed: (0.05, 0.2),
            class_map_size: 64,
        }
    }
}

/// A panning camera over players walking in straight lines.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub cameras: Vec<Camera>,
    /// Players per frame; index `i` is the same player in every frame.
    pub players: Vec<Vec<BoxPlayer>>,
    pub template: FieldTemplate,
    pub config: SequenceConfig,
    pub seed: u64,
}

/// Ground truth written next to a synthetic sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceTruth {
    pub cameras: Vec<Camera>,
    pub players: Vec<Vec<BoxPlayer>>,
}

fn yawed(camera: &Camera, degrees: f64) -> Result<Camera> {
    let r = camera.rotation_matrix() * rotation_matrix(&Vector3::new(0.0, degrees.to_radians(), 0.0));
    let t = -(r * camera.center().coords);
    Camera::with_principal_point(camera.focal, rotation_vector(&r), t, camera.principal_point, camera.image_size)
}

fn boxes_fit(camera: &Camera, players: &[BoxPlayer], template: &FieldTemplate) -> bool {
    let size = camera.image_size;
    let mut boxes: Vec<[f64; 4]> = Vec::new();
    for p in players {
        if p.ground[0].abs() > template.half_length() - 1.0 || p.ground[1].abs() > template.half_width() - 1.0 {
            return false;
        }
        let Some(b) = projected_box(camera, p) else { return false };
        if b[0] < 2.0 || b[1] < 2.0 || b[2] > size.width as f64 - 2.0 || b[3] > size.height as f64 - 2.0 {
            return false;
        }
        // Keep boxes apart by more than the padding the refined detections add.
        let pad = 0.25 * (b[3] - b[1]);
        if boxes.iter().any(|o| b[0] - pad < o[2] && o[0] < b[2] + pad && b[1] < o[3] && o[1] < b[3]) {
            return false;
        }
        boxes.push(b);
    }
    true
}

impl SynthSequence {
    pub fn generate(seed: u64, config: &SequenceConfig) -> Result<Self> {
        if config.frames == 0 {
            return Err(Error::InvalidInput("sequence needs at least one frame".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let template = FieldTemplate::default();
        for _ in 0..200 {
            let camera0 = random_broadcast_camera(&mut rng, config.scene.image_size);
            let cameras = (0..config.frames)
                .map(|k| yawed(&camera0, config.pan_per_frame * k as f64))
                .collect::<Result<Vec<_>>>()?;
            let Ok(start) = place_players(&mut rng, &camera0, &template, &config.scene) else {
                continue;
            };
            let velocities: Vec<Vector2<f64>> = start
                .iter()
                .map(|_| {
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    let speed = rng.random_range(config.speed.0..=config.speed.1);
                    Vector2::new(angle.cos(), angle.sin()) * speed
                })
                .collect();
            let players: Vec<Vec<BoxPlayer>> = (0..config.frames)
                .map(|k| {
                    start
                        .iter()
                        .zip(&velocities)
                        .map(|(p, v)| BoxPlayer {
                            ground: [p.ground[0] + v.x * k as f64, p.ground[1] + v.y * k as f64],
                            ..*p
                        })
                        .collect()
                })
                .collect();
            if cameras.iter().zip(&players).all(|(c, ps)| boxes_fit(c, ps, &template)) {
                return Ok(Self {
                    cameras,
                    players,
                    template,
                    config: config.clone(),
                    seed,
                });
            }
        }
        Err(Error::EmptyRender("could not place players that stay in view".into()))
    }

    pub fn frames(&self) -> usize {
        self.cameras.len()
    }

    pub fn scene(&self, frame: usize) -> Result<SynthScene> {
        let camera = self.cameras[frame].clone();
        Ok(SynthScene {
            glcam: GlCamera::from_camera(&camera, self.config.scene.z_near, self.config.scene.z_far)?,
            camera,
            players: self.players[frame].clone(),
            template: self.template.clone(),
            noise: self.config.scene.noise,
            seed: self.seed.wrapping_add(frame as u64),
        })
    }

    pub fn truth(&self) -> SequenceTruth {
        SequenceTruth {
            cameras: self.cameras.clone(),
            players: self.players.clone(),
        }
    }

    /// Exact image-to-field correspondences for frame 0 on a 3x3 pixel grid.
    pub fn correspondences(&self) -> Vec<Correspondence> {
        let cam = &self.cameras[0];
        let size = cam.image_size;
        let mut out = Vec::new();
        for fy in [0.45, 0.7, 0.95] {
            for fx in [0.05, 0.5, 0.95] {
                let pixel = Vector2::new(fx * size.width as f64, fy * size.height as f64);
                if let Ok(world) = cam.ray_ground_intersect(&pixel) {
                    out.push(Correspondence { world, pixel });
                }
            }
        }
        out
    }

    /// Writes frames, edge maps, detections, person masks, class maps, a
    /// manifest and the ground truth. Returns the manifest path.
    ///
    /// With `with_captures`, each frame also gets its depth buffer, pixel
    /// labels, raster camera and pinhole camera under `captures/`.
    pub fn write(&self, dir: &Path, with_captures: bool) -> Result<PathBuf> {
        let mut frames = Vec::new();
        for k in 0..self.frames() {
            let scene = self.scene(k)?;
            let camera = &scene.camera;
            let render = render_ndc(&scene);
            let edges = render_edges(&scene)?;
            let stem = format!("{k:04}");
            let rel = |sub: &str, ext: &str| PathBuf::from(sub).join(format!("{stem}.{ext}"));
            io::write_rgb(&dir.join(rel("images", "png")), &render.capture.color)?;
            io::write_mask(&dir.join(rel("edges", "png")), &edges.to_mask())?;
            io::write_mask(&dir.join(rel("masks", "png")), &render.labels.map(|&l| l == LABEL_PLAYER))?;

            let mut lines = Vec::new();
            for p in &scene.players {
                let b = projected_box(camera, p).ok_or(Error::EmptyRender("player behind camera".into()))?;
                lines.push(Detection {
                    frame: k,
                    bbox: BBox::from_corners(b[0], b[1], b[2], b[3]),
                    keypoints: box_pose(camera, p)?,
                    player_id: None,
                    source: None,
                });
            }
            io::write_jsonl(&dir.join(rel("detections", "jsonl")), &lines)?;

            let boxes: Vec<BBox> = lines.iter().map(|d| d.bbox).collect();
            let poses: Vec<Pose> = lines.iter().map(|d| d.keypoints.clone()).collect();
            let refined = refine_boxes(k, &boxes, &poses, camera.image_size, None, &RefineBoxesConfig::default());
            let n = self.config.class_map_size;
            let mut class_maps = vec![None; lines.len()];
            for det in &refined.detections {
                let i = det.source.expect("refined detections carry their source");
                let billboard = lift_billboard_at(camera, &det.ground_contact())?;
                let crop = CropFrame::spanning(&det.bbox, n, n);
                let classes = true_class_map(camera, &scene.players, i, &billboard, &crop, n, n);
                let path = PathBuf::from("class_maps").join(format!("{stem}_{i:02}.png"));
                io::write_labels(&dir.join(&path), &classes)?;
                class_maps[i] = Some(path);
            }
            if with_captures {
                let cap = PathBuf::from("captures");
                io::write_pfm(&dir.join(cap.join(format!("{stem}_depth.pfm"))), &render.capture.ndc_depth)?;
                io::write_labels(&dir.join(cap.join(format!("{stem}_labels.png"))), &render.labels)?;
                io::write_json(&dir.join(cap.join(format!("{stem}_glcam.json"))), &scene.glcam)?;
                io::write_json(&dir.join(cap.join(format!("{stem}_camera.json"))), camera)?;
            }
            frames.push(FrameInputs {
                image: rel("images", "png"),
                edges: Some(rel("edges", "png")),
                detections: Some(rel("detections", "jsonl")),
                mask: Some(rel("masks", "png")),
                class_maps,
            });
        }
        io::write_json(&dir.join("correspondences.json"), &self.correspondences())?;
        io::write_json(&dir.join("truth.json"), &self.truth())?;
        let manifest = SceneManifest {
            frames,
            camera: None,
            correspondences: Some(PathBuf::from("correspondences.json")),
            output: PathBuf::from("out"),
            params: Params::default(),
        };
        let path = dir.join("manifest.json");
        io::write_json(&path, &manifest)?;
        Ok(path)
    }
}
