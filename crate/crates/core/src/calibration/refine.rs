//! Per-frame camera refinement against a squared distance map.
//!
//! Minimizes the sum of distance-map values at the projections of template
//! points, over focal length, rotation and translation.

use nalgebra::{DVector, Point3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{project_camera_space, rotation_matrix, Camera};
use crate::lsq::{levenberg_marquardt, LeastSquaresProblem, LmConfig};

use super::distance::DistanceMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Gaussian blur applied to the distance map used during optimization.
    pub smoothing_sigma: f64,
    /// Minimum fraction of template points the initial camera must see.
    pub min_visible_fraction: f64,
    pub lm: LmConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            smoothing_sigma: 1.0,
            min_visible_fraction: 0.25,
            lm: LmConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub camera: Camera,
    /// Objective of the initial camera on the unsmoothed map.
    pub initial_objective: f64,
    /// Objective of the returned camera on the unsmoothed map.
    pub objective: f64,
    /// Smoothed-map objective after each accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
}

pub(crate) fn camera_params(c: &Camera) -> DVector<f64> {
    DVector::from_vec(vec![
        c.focal,
        c.rotation.x,
        c.rotation.y,
        c.rotation.z,
        c.translation.x,
        c.translation.y,
        c.translation.z,
    ])
}

/// Projects points with a parameter vector, `None` for points behind the camera.
fn project_all(
    p: &DVector<f64>,
    pp: &Vector2<f64>,
    points: &[Point3<f64>],
) -> Vec<Option<Vector2<f64>>> {
    let r = rotation_matrix(&Vector3::new(p[1], p[2], p[3]));
    let t = Vector3::new(p[4], p[5], p[6]);
    points
        .iter()
        .map(|x| project_camera_space(p[0], pp, &(r * x.coords + t)).ok())
        .collect()
}

/// Sum of `D(T(p; w))` over the template points that land inside the image.
pub fn chamfer_objective(camera: &Camera, dmap: &DistanceMap, points: &[Point3<f64>]) -> (f64, usize) {
    objective_with(&camera_params(camera), &camera.principal_point, dmap, points)
}

fn objective_with(
    p: &DVector<f64>,
    pp: &Vector2<f64>,
    dmap: &DistanceMap,
    points: &[Point3<f64>],
) -> (f64, usize) {
    let size = dmap.image_size();
    let mut sum = 0.0;
    let mut visible = 0;
    for px in project_all(p, pp, points).into_iter().flatten() {
        if size.contains(&px) {
            sum += dmap.sample(&px);
            visible += 1;
        }
    }
    (sum, visible)
}

/// One optimization stage: a fixed map and a fixed set of contributing points.
///
/// Points that drift out of the image read the map at the nearest border
/// position, so the stage objective is continuous and neither rewards nor
/// penalizes leaving the frame.
struct ChamferProblem<'a> {
    dmap: &'a DistanceMap,
    points: Vec<Point3<f64>>,
    principal_point: Vector2<f64>,
    model: ResidualModel,
    /// Cauchy scale in pixels; `None` reads the map values directly.
    robust_scale: Option<f64>,
    /// When set, only focal length and rotation vary and the camera stays at this center.
    center: Option<Vector3<f64>>,
}

/// How each point is linearized. Both models minimize the same stage objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ResidualModel {
    /// Square root of the map value: wide basin, slow final convergence.
    Distance,
    /// Half the map gradient: near an edge the map is locally `|x - e|^2`, so
    /// this is the offset to the edge and gives Newton-quality steps.
    Offset,
}

impl<'a> ChamferProblem<'a> {
    fn new(
        dmap: &'a DistanceMap,
        all_points: &[Point3<f64>],
        p: &DVector<f64>,
        principal_point: Vector2<f64>,
        model: ResidualModel,
    ) -> Self {
        let size = dmap.image_size();
        let points = project_all(p, &principal_point, all_points)
            .into_iter()
            .zip(all_points)
            .filter_map(|(px, x)| px.filter(|px| size.contains(px)).map(|_| *x))
            .collect();
        Self {
            dmap,
            points,
            principal_point,
            model,
            robust_scale: None,
            center: None,
        }
    }

    /// Pins the camera center, leaving focal length and rotation free.
    fn pan_tilt_zoom(mut self, p: &DVector<f64>) -> Self {
        let r = rotation_matrix(&Vector3::new(p[1], p[2], p[3]));
        self.center = Some(-(r.transpose() * Vector3::new(p[4], p[5], p[6])));
        self
    }

    fn reduce(&self, p: &DVector<f64>) -> DVector<f64> {
        match self.center {
            Some(_) => p.rows(0, 4).into_owned(),
            None => p.clone(),
        }
    }

    fn expand(&self, p: &DVector<f64>) -> DVector<f64> {
        match self.center {
            Some(c) => {
                let r = rotation_matrix(&Vector3::new(p[1], p[2], p[3]));
                let t = -(r * c);
                DVector::from_vec(vec![p[0], p[1], p[2], p[3], t.x, t.y, t.z])
            }
            None => p.clone(),
        }
    }

    fn cost(&self, x: &Vector2<f64>) -> f64 {
        let d = self.dmap.sample(x);
        match self.robust_scale {
            Some(c) => c * c * (d / (c * c)).ln_1p(),
            None => d,
        }
    }

    fn projections(&self, p: &DVector<f64>) -> Option<Vec<Vector2<f64>>> {
        if p[0] <= 0.0 {
            return None;
        }
        project_all(&self.expand(p), &self.principal_point, &self.points).into_iter().collect()
    }

    fn gradient(&self, x: &Vector2<f64>) -> Vector2<f64> {
        let dx = Vector2::new(1.0, 0.0);
        let dy = Vector2::new(0.0, 1.0);
        Vector2::new(
            0.5 * (self.dmap.sample(&(x + dx)) - self.dmap.sample(&(x - dx))),
            0.5 * (self.dmap.sample(&(x + dy)) - self.dmap.sample(&(x - dy))),
        )
    }
}

impl LeastSquaresProblem for ChamferProblem<'_> {
    fn num_params(&self) -> usize {
        if self.center.is_some() {
            4
        } else {
            7
        }
    }

    fn residuals(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        let px = self.projections(p)?;
        Some(match self.model {
            ResidualModel::Distance => DVector::from_iterator(px.len(), px.iter().map(|x| self.cost(x).sqrt())),
            ResidualModel::Offset => DVector::from_iterator(
                2 * px.len(),
                px.iter().flat_map(|x| {
                    let g = 0.5 * self.gradient(x);
                    [g.x, g.y]
                }),
            ),
        })
    }

    fn objective(&self, p: &DVector<f64>) -> Option<f64> {
        Some(self.projections(p)?.iter().map(|x| self.cost(x)).sum())
    }

    fn step_sizes(&self, p: &DVector<f64>) -> DVector<f64> {
        let p = self.expand(p);
        let tscale = Vector3::new(p[4], p[5], p[6]).norm().max(1.0);
        DVector::from_vec(vec![
            1e-4 * p[0],
            1e-5,
            1e-5,
            1e-5,
            1e-5 * tscale,
            1e-5 * tscale,
            1e-5 * tscale,
        ])
        .rows(0, self.num_params())
        .into_owned()
    }
}

/// Refines a camera so that projected template points fall on edges.
///
/// A coarse-to-fine pass over increasingly sharp blurs of the map brings the
/// camera into the basin of the configured smoothing level, where the final
/// stages run with the visible point set frozen.
pub fn refine_camera(
    init: &Camera,
    dmap: &DistanceMap,
    template_points: &[Point3<f64>],
    config: &RefineConfig,
) -> Result<Refinement> {
    let (initial_objective, visible) = chamfer_objective(init, dmap, template_points);
    let required = ((template_points.len() as f64) * config.min_visible_fraction).ceil() as usize;
    if visible == 0 || visible < required {
        return Err(Error::InsufficientVisibility { visible, required });
    }
    if !initial_objective.is_finite() {
        return Err(Error::Diverged("initial objective is not finite".into()));
    }
    let unchanged = |history: Vec<f64>| Refinement {
        camera: init.clone(),
        initial_objective,
        objective: initial_objective,
        history,
        iterations: 0,
    };
    if initial_objective <= 1e-12 * visible as f64 {
        return Ok(unchanged(vec![initial_objective]));
    }

    let pp = init.principal_point;
    let mut params = camera_params(init);
    let mut iterations = 0;
    let coarse: Vec<f64> = [8.0, 4.0, 2.0]
        .into_iter()
        .map(|k| k * config.smoothing_sigma.max(0.5))
        .collect();
    for sigma in coarse {
        let blurred = dmap.smoothed(sigma);
        // The blurred stages keep the camera center fixed: a free center lets
        // the whole template collapse onto a single edge near the horizon.
        let mut problem =
            ChamferProblem::new(&blurred, template_points, &params, pp, ResidualModel::Distance).pan_tilt_zoom(&params);
        // Points far from every edge usually have no counterpart in the frame.
        problem.robust_scale = Some(3.0 * sigma);
        if problem.points.is_empty() {
            break;
        }
        let reduced = problem.reduce(&params);
        let stage = levenberg_marquardt(&mut problem, reduced, &config.lm)?;
        iterations += stage.iterations;
        params = problem.expand(&stage.params);
    }

    let smooth = dmap.smoothed(config.smoothing_sigma);
    let mut problem = ChamferProblem::new(&smooth, template_points, &params, pp, ResidualModel::Distance);
    if problem.points.is_empty() {
        return Ok(unchanged(vec![initial_objective]));
    }
    let first = levenberg_marquardt(&mut problem, params, &config.lm)?;
    problem.model = ResidualModel::Offset;
    let second = levenberg_marquardt(&mut problem, first.params, &config.lm)?;
    let mut history = first.history;
    history.extend_from_slice(&second.history[1..]);
    iterations += first.iterations + second.iterations;

    let p = &second.params;
    let camera = Camera::with_principal_point(
        p[0],
        Vector3::new(p[1], p[2], p[3]),
        Vector3::new(p[4], p[5], p[6]),
        pp,
        init.image_size,
    )
    .map_err(|e| Error::Diverged(e.to_string()))?;
    let (objective, _) = chamfer_objective(&camera, dmap, template_points);
    if !objective.is_finite() {
        return Err(Error::Diverged("final objective is not finite".into()));
    }
    if objective > initial_objective {
        return Ok(unchanged(history));
    }
    Ok(Refinement {
        camera,
        initial_objective,
        objective,
        history,
        iterations,
    })
}
