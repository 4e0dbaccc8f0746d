//! Recovery of a game engine's modelview and projection matrices from a
//! captured depth buffer, a ground/player labeling and a calibrated auxiliary
//! camera of the same frame.
//!
//! Ground pixels are pinned to the field plane where the auxiliary camera's
//! rays meet it; player pixels must unproject to points the auxiliary camera
//! sees at the same pixel.

use nalgebra::{DVector, Matrix3, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    gl_projection, modelview_from_pose, pixel_center, project_camera_space, rotation_matrix, Camera, GlCamera,
    ImageSize,
};
use crate::grid::Grid;
use crate::lsq::{levenberg_marquardt, LeastSquaresProblem, LmConfig};
use crate::synth::{LABEL_GROUND, LABEL_PLAYER};

pub use crate::geometry::pixel_to_ndc;

/// Weight of the player term used for game captures.
pub const DEFAULT_PLAYER_WEIGHT: f64 = 0.01;

/// A captured depth buffer with labeled pixels, addressed as `(x, y)` indices.
#[derive(Debug, Clone, PartialEq)]
pub struct NdcCapture {
    pub depth: Grid<f64>,
    pub ground_pixels: Vec<(usize, usize)>,
    pub player_pixels: Vec<(usize, usize)>,
}

impl NdcCapture {
    pub fn new(depth: Grid<f64>, ground_pixels: Vec<(usize, usize)>, player_pixels: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(v) = depth.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidDepth(*v));
        }
        let (w, h) = depth.dims();
        let inside = |&(x, y): &(usize, usize)| x < w && y < h;
        if !ground_pixels.iter().chain(&player_pixels).all(inside) {
            return Err(Error::InvalidInput("labeled pixel outside the depth buffer".into()));
        }
        let mut seen = Grid::new(w, h, false);
        for &(x, y) in &ground_pixels {
            seen.set(x, y, true);
        }
        if player_pixels.iter().any(|&(x, y)| *seen.get(x, y)) {
            return Err(Error::InvalidInput("ground and player pixels overlap".into()));
        }
        Ok(Self {
            depth,
            ground_pixels,
            player_pixels,
        })
    }

    /// Splits a label image (1 = ground, 2 = player, anything else ignored).
    pub fn from_labels(depth: Grid<f64>, labels: &Grid<u8>) -> Result<Self> {
        depth.ensure_same_dims(labels)?;
        let mut ground = Vec::new();
        let mut player = Vec::new();
        for (x, y, &l) in labels.iter_xy() {
            match l {
                LABEL_GROUND => ground.push((x, y)),
                LABEL_PLAYER => player.push((x, y)),
                _ => {}
            }
        }
        Self::new(depth, ground, player)
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize::new(self.depth.width() as u32, self.depth.height() as u32)
    }
}

/// The nine unknowns of a raster camera with a centered principal point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameCamParams {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
    pub focal: f64,
    pub z_near: f64,
    pub z_far: f64,
}

impl GameCamParams {
    /// Pose and focal length of `aux` with the given clip planes.
    pub fn from_aux(aux: &Camera, z_near: f64, z_far: f64) -> Self {
        Self {
            rotation: aux.rotation,
            translation: aux.translation,
            focal: aux.focal,
            z_near,
            z_far,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::InvalidCamera(format!("focal must be positive, got {}", self.focal)));
        }
        if !(0.0 < self.z_near && self.z_near < self.z_far && self.z_far.is_finite()) {
            return Err(Error::InvalidFrustum(format!(
                "need 0 < z_near < z_far, got {}, {}",
                self.z_near, self.z_far
            )));
        }
        Ok(())
    }

    pub fn to_glcam(&self, image_size: ImageSize) -> Result<GlCamera> {
        self.validate()?;
        GlCamera::new(
            modelview_from_pose(&self.rotation, &self.translation),
            gl_projection(self.focal, image_size, self.z_near, self.z_far)?,
            self.z_near,
            self.z_far,
            image_size,
        )
    }

    fn to_vector(self) -> DVector<f64> {
        let r = self.rotation;
        let t = self.translation;
        DVector::from_vec(vec![
            r.x,
            r.y,
            r.z,
            t.x,
            t.y,
            t.z,
            self.focal.ln(),
            self.z_near.ln(),
            (self.z_far - self.z_near).ln(),
        ])
    }

    fn from_vector(p: &DVector<f64>) -> Self {
        let z_near = p[7].exp();
        Self {
            rotation: Vector3::new(p[0], p[1], p[2]),
            translation: Vector3::new(p[3], p[4], p[5]),
            focal: p[6].exp(),
            z_near,
            z_far: z_near + p[8].exp(),
        }
    }
}

/// World points where the auxiliary camera's rays through ground pixels meet the field.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTargets {
    /// Pixel index and target for every ray that reached the ground.
    pub targets: Vec<((usize, usize), Point3<f64>)>,
    /// Rays parallel to the field or meeting it behind the camera.
    pub dropped: usize,
}

pub fn ground_targets(aux: &Camera, ground_pixels: &[(usize, usize)]) -> GroundTargets {
    let mut targets = Vec::with_capacity(ground_pixels.len());
    let mut dropped = 0;
    for &(x, y) in ground_pixels {
        match aux.ray_ground_intersect(&pixel_center(x, y)) {
            Ok(p) => targets.push(((x, y), p)),
            Err(_) => dropped += 1,
        }
    }
    GroundTargets { targets, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameCamConfig {
    pub min_ground_pixels: usize,
    pub min_player_pixels: usize,
    /// Per-set cap; larger sets are subsampled with a uniform stride.
    pub max_pixels_per_set: usize,
    pub lm: LmConfig,
}

impl Default for GameCamConfig {
    fn default() -> Self {
        Self {
            min_ground_pixels: 100,
            min_player_pixels: 20,
            max_pixels_per_set: 5000,
            lm: LmConfig {
                relative_tolerance: 1e-12,
                ..LmConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameCamRecovery {
    pub glcam: GlCamera,
    pub params: GameCamParams,
    pub initial_objective: f64,
    pub objective: f64,
    /// Sum of squared ground residuals at the solution, in square meters.
    pub ground_cost: f64,
    /// Unweighted sum of squared player reprojection errors, in square pixels.
    pub player_cost: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub dropped_targets: usize,
}

/// Inverts a raster camera in closed form for many pixels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FastUnprojector {
    rotation_t: Matrix3<f64>,
    center: Vector3<f64>,
    focal: f64,
    principal_point: Vector2<f64>,
    z_near: f64,
    z_far: f64,
}

impl FastUnprojector {
    pub(crate) fn new(p: &GameCamParams, image_size: ImageSize) -> Self {
        let r = rotation_matrix(&p.rotation);
        Self {
            rotation_t: r.transpose(),
            center: -(r.transpose() * p.translation),
            focal: p.focal,
            principal_point: image_size.center(),
            z_near: p.z_near,
            z_far: p.z_far,
        }
    }

    /// Same result as multiplying by `M_mv^-1 M_proj^-1` and dividing by `w`.
    pub(crate) fn unproject(&self, pixel: &Vector2<f64>, buffer_depth: f64) -> Vector3<f64> {
        let (n, f) = (self.z_near, self.z_far);
        let z_ndc = 2.0 * buffer_depth - 1.0;
        let z = 2.0 * n * f / (f + n - z_ndc * (f - n));
        let xy = (pixel - self.principal_point) * (z / self.focal);
        self.rotation_t * Vector3::new(xy.x, xy.y, z) + self.center
    }
}

fn strided<T: Copy>(items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap || cap == 0 {
        return items.to_vec();
    }
    let stride = items.len().div_ceil(cap);
    items.iter().step_by(stride).copied().collect()
}

struct GameCamProblem<'a> {
    aux: &'a Camera,
    image_size: ImageSize,
    /// Pixel center, buffer depth and target point.
    ground: Vec<(Vector2<f64>, f64, Point3<f64>)>,
    /// Pixel center and buffer depth.
    player: Vec<(Vector2<f64>, f64)>,
    player_weight: f64,
}

impl GameCamProblem<'_> {
    fn costs(&self, p: &DVector<f64>) -> Option<(f64, f64)> {
        let r = self.residuals_split(p)?;
        let g = r.rows(0, 3 * self.ground.len()).norm_squared();
        Some((g, self.unweighted_player(p)?))
    }

    fn unweighted_player(&self, p: &DVector<f64>) -> Option<f64> {
        let un = FastUnprojector::new(&GameCamParams::from_vector(p), self.image_size);
        let r_aux = self.aux.rotation_matrix();
        let mut sum = 0.0;
        for (px, d) in &self.player {
            let x = un.unproject(px, *d);
            let y = project_camera_space(self.aux.focal, &self.aux.principal_point, &(r_aux * x + self.aux.translation)).ok()?;
            sum += (y - px).norm_squared();
        }
        Some(sum)
    }

    fn residuals_split(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let params = GameCamParams::from_vector(p);
        if !params.focal.is_finite() || !params.z_far.is_finite() || params.z_near <= 0.0 {
            return None;
        }
        let un = FastUnprojector::new(&params, self.image_size);
        let r_aux = self.aux.rotation_matrix();
        let w = self.player_weight.sqrt();
        let mut out = DVector::zeros(3 * self.ground.len() + 2 * self.player.len());
        for (k, (px, d, target)) in self.ground.iter().enumerate() {
            let x = un.unproject(px, *d);
            out.fixed_rows_mut::<3>(3 * k).copy_from(&(x - target.coords));
        }
        let base = 3 * self.ground.len();
        for (k, (px, d)) in self.player.iter().enumerate() {
            let x = un.unproject(px, *d);
            // The auxiliary projection is a full perspective projection, divide included.
            let y = project_camera_space(self.aux.focal, &self.aux.principal_point, &(r_aux * x + self.aux.translation)).ok()?;
            out.fixed_rows_mut::<2>(base + 2 * k).copy_from(&(w * (y - px)));
        }
        Some(out)
    }
}

impl LeastSquaresProblem for GameCamProblem<'_> {
    fn num_params(&self) -> usize {
        9
    }

    fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        self.residuals_split(p)
    }

    fn step_sizes(&self, p: &DVector<f64>) -> DVector<f64> {
        let tscale = Vector3::new(p[3], p[4], p[5]).norm().max(1.0);
        DVector::from_vec(vec![1e-6, 1e-6, 1e-6, 1e-6 * tscale, 1e-6 * tscale, 1e-6 * tscale, 1e-6, 1e-6, 1e-6])
    }
}

/// Minimizes the ground-plane and player-reprojection energy over the nine camera unknowns.
///
/// `player_weight` scales the squared player reprojection errors (pixels)
/// against the squared ground errors (meters).
pub fn recover_game_camera(
    capture: &NdcCapture,
    aux: &Camera,
    init: &GameCamParams,
    player_weight: f64,
    config: &GameCamConfig,
) -> Result<GameCamRecovery> {
    init.validate()?;
    if !(player_weight.is_finite() && player_weight >= 0.0) {
        return Err(Error::InvalidInput(format!("player weight must be non-negative, got {player_weight}")));
    }
    let size = capture.image_size();
    if aux.image_size != size {
        return Err(Error::Dimension {
            expected: (size.width as usize, size.height as usize),
            actual: (aux.image_size.width as usize, aux.image_size.height as usize),
        });
    }
    let targets = ground_targets(aux, &capture.ground_pixels);
    if targets.targets.len() < config.min_ground_pixels {
        return Err(Error::InvalidInput(format!(
            "{} usable ground pixels, need {}",
            targets.targets.len(),
            config.min_ground_pixels
        )));
    }
    if capture.player_pixels.len() < config.min_player_pixels {
        return Err(Error::InvalidInput(format!(
            "{} player pixels, need {}",
            capture.player_pixels.len(),
            config.min_player_pixels
        )));
    }
    let ground = strided(&targets.targets, config.max_pixels_per_set)
        .into_iter()
        .map(|((x, y), t)| (pixel_center(x, y), *capture.depth.get(x, y), t))
        .collect();
    let player = strided(&capture.player_pixels, config.max_pixels_per_set)
        .into_iter()
        .map(|(x, y)| (pixel_center(x, y), *capture.depth.get(x, y)))
        .collect();
    let mut problem = GameCamProblem {
        aux,
        image_size: size,
        ground,
        player,
        player_weight,
    };
    let solution = levenberg_marquardt(&mut problem, init.to_vector(), &config.lm)?;
    let params = GameCamParams::from_vector(&solution.params);
    let glcam = params.to_glcam(size).map_err(|_| Error::SingularCamera)?;
    let (ground_cost, player_cost) = problem
        .costs(&solution.params)
        .ok_or_else(|| Error::Diverged("residuals undefined at the solution".into()))?;
    Ok(GameCamRecovery {
        glcam,
        params,
        initial_objective: solution.initial_objective,
        objective: solution.objective,
        ground_cost,
        player_cost,
        history: solution.history,
        iterations: solution.iterations,
        dropped_targets: targets.dropped,
    })
}
