//! Independent reference implementations and scenario drivers shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Point3, Rotation3, Unit, Vector2, Vector3};
use pitchrecon::calibration::{build_distance_map, refine_camera, sample_template_points, RefineConfig};
use pitchrecon::extract::{extract_pairs, Capture, ExtractConfig};
use pitchrecon::gamecam::{recover_game_camera, GameCamConfig, GameCamParams, NdcCapture};
use pitchrecon::geometry::{pixel_center, rotation_angle_between, rotation_vector, Camera};
use pitchrecon::grid::Grid;
use pitchrecon::synth::{render_edges, render_ndc, SceneConfig, SynthScene};
use pitchrecon::tracking::{Detection, Keypoint, BBox, NECK};
use pitchrecon::ImageSize;
use rand::Rng;

/// Rotates a camera about its center by `degrees` around a random axis and
/// scales its focal length by `1 +- focal_frac`.
pub fn perturb(camera: &Camera, degrees: f64, focal_frac: f64, rng: &mut impl Rng) -> Camera {
    let axis = Unit::new_normalize(Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ));
    let r = Rotation3::from_axis_angle(&axis, degrees.to_radians()).matrix() * camera.rotation_matrix();
    let t = -(r * camera.center().coords);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    Camera::with_principal_point(
        camera.focal * (1.0 + sign * focal_frac),
        rotation_vector(&r),
        t,
        camera.principal_point,
        camera.image_size,
    )
    .unwrap()
}

pub struct CalibrationCase {
    pub rotation_deg: f64,
    pub focal_rel: f64,
}

/// Refines a 2 degree / 2% perturbation of a synthetic scene's camera.
pub fn calibration_case(seed: u64, jitter: f64, rng: &mut impl Rng) -> CalibrationCase {
    let mut config = SceneConfig::default();
    config.noise.jitter_sigma = jitter;
    let scene = SynthScene::random(seed, &config).unwrap();
    let dmap = build_distance_map(&render_edges(&scene).unwrap()).unwrap();
    let points = sample_template_points(&scene.template, 0.5);
    let init = perturb(&scene.camera, 2.0, 0.02, rng);
    let fit = refine_camera(&init, &dmap, &points, &RefineConfig::default()).unwrap();
    CalibrationCase {
        rotation_deg: rotation_angle_between(&fit.camera.rotation_matrix(), &scene.camera.rotation_matrix())
            .to_degrees(),
        focal_rel: (fit.camera.focal / scene.camera.focal - 1.0).abs(),
    }
}

pub struct GameCamCase {
    /// Largest distance between recovered and true player points, in meters.
    pub player_error: f64,
    pub initial_objective: f64,
    pub objective: f64,
    /// Sum of squared ground errors at the solution, in square meters.
    pub ground_cost: f64,
    pub ground_pixels: usize,
}

/// Recovers a perturbed raster camera from a rendered capture with the given player weight.
pub fn gamecam_case(seed: u64, player_weight: f64, rng: &mut impl Rng) -> GameCamCase {
    let config = SceneConfig {
        image_size: ImageSize::new(640, 360),
        num_players: 6,
        z_near: rng.random_range(0.3..2.0),
        z_far: rng.random_range(300.0..2000.0),
        ..SceneConfig::default()
    };
    let scene = SynthScene::random(seed, &config).unwrap();
    let render = render_ndc(&scene);
    let capture = NdcCapture::from_labels(render.capture.ndc_depth.clone(), &render.labels).unwrap();
    let truth = GameCamParams::from_aux(&scene.camera, config.z_near, config.z_far);
    let mut jiggle = |v: f64| v * (1.0 + if rng.random::<bool>() { 0.05 } else { -0.05 });
    let mut init = truth;
    init.rotation = init.rotation.map(&mut jiggle);
    init.translation = init.translation.map(&mut jiggle);
    init.focal = jiggle(init.focal);
    init.z_near = jiggle(init.z_near);
    init.z_far = jiggle(init.z_far);

    let fit = recover_game_camera(&capture, &scene.camera, &init, player_weight, &GameCamConfig::default()).unwrap();
    let true_unproject = scene.glcam.unprojector().unwrap();
    let fit_unproject = fit.glcam.unprojector().unwrap();
    let mut player_error = 0.0f64;
    for &(x, y) in &capture.player_pixels {
        let d = *capture.depth.get(x, y);
        let a = true_unproject.unproject(&pixel_center(x, y), d).unwrap();
        let b = fit_unproject.unproject(&pixel_center(x, y), d).unwrap();
        player_error = player_error.max((a - b).norm());
    }
    GameCamCase {
        player_error,
        initial_objective: fit.initial_objective,
        objective: fit.objective,
        ground_cost: fit.ground_cost,
        ground_pixels: capture.ground_pixels.len(),
    }
}

/// Association field from a dense least-squares solve of the free-pixel
/// residuals, with weights evaluated straight from the affinity formula.
pub fn dense_association(image: &Grid<[f64; 3]>, edges: &Grid<f64>, labels: &Grid<u8>) -> Grid<f64> {
    let (w, h) = image.dims();
    let idx = |x: usize, y: usize| y * w + x;
    let free: Vec<usize> = (0..w * h).filter(|&i| labels.as_slice()[i] == 255).collect();
    let column: BTreeMap<usize, usize> = free.iter().enumerate().map(|(c, &i)| (i, c)).collect();
    let n = free.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (row, &i) in free.iter().enumerate() {
        let (x, y) = (i % w, i / w);
        let mut weights = Vec::new();
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (qx, qy) = (x as i64 + dx, y as i64 + dy);
                if (dx, dy) == (0, 0) || qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                    continue;
                }
                let (qx, qy) = (qx as usize, qy as usize);
                let ip = image.get(x, y);
                let iq = image.get(qx, qy);
                let d2: f64 = (0..3).map(|c| (ip[c] - iq[c]).powi(2)).sum();
                let g = *edges.get(x, y);
                weights.push((idx(qx, qy), (-d2).exp() * (-g * g).exp()));
            }
        }
        let total: f64 = weights.iter().map(|p| p.1).sum();
        a[(row, row)] += 1.0;
        for (j, wt) in weights {
            let wt = wt / total;
            match column.get(&j) {
                Some(&c) => a[(row, c)] -= wt,
                None => b[row] += wt * labels.as_slice()[j] as f64,
            }
        }
    }
    let solution = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
    let mut out = labels.map(|&l| l as f64);
    for (row, &i) in free.iter().enumerate() {
        out.as_mut_slice()[i] = solution[row];
    }
    out
}

/// Smoothing energy and its gradient evaluated term by term.
pub fn trajectory_energy(
    x: &[[f64; 3]],
    observations: &BTreeMap<usize, [f64; 3]>,
    smoothness: f64,
) -> (f64, Vec<[f64; 3]>) {
    let mut e = 0.0;
    let mut g = vec![[0.0; 3]; x.len()];
    for (&t, d) in observations {
        for c in 0..3 {
            let r = x[t][c] - d[c];
            e += r * r;
            g[t][c] += 2.0 * r;
        }
    }
    for t in 1..x.len().saturating_sub(1) {
        for c in 0..3 {
            let s = x[t - 1][c] - 2.0 * x[t][c] + x[t + 1][c];
            e += smoothness * s * s;
            g[t - 1][c] += 2.0 * smoothness * s;
            g[t][c] -= 4.0 * smoothness * s;
            g[t + 1][c] += 2.0 * smoothness * s;
        }
    }
    (e, g)
}

/// Minimizes the smoothing energy by restarted conjugate-gradient descent on
/// its gradient, starting from zero.
pub fn descent_trajectory(n: usize, observations: &BTreeMap<usize, [f64; 3]>, smoothness: f64) -> Vec<[f64; 3]> {
    let flat = |v: &[[f64; 3]]| DVector::from_iterator(3 * v.len(), v.iter().flatten().copied());
    let unflat = |v: &DVector<f64>| (0..n).map(|t| [v[3 * t], v[3 * t + 1], v[3 * t + 2]]).collect::<Vec<_>>();
    let grad = |x: &DVector<f64>| flat(&trajectory_energy(&unflat(x), observations, smoothness).1);
    let mut x = DVector::zeros(3 * n);
    for _ in 0..50 {
        let mut g = grad(&x);
        let mut d = -g.clone();
        for _ in 0..3 * n {
            if g.norm() < 1e-13 {
                return unflat(&x);
            }
            // The energy is quadratic, so the Hessian-vector product is a gradient difference.
            let hd = grad(&d) - grad(&DVector::zeros(3 * n));
            let curvature = d.dot(&hd);
            if curvature <= 0.0 {
                break;
            }
            let step = -g.dot(&d) / curvature;
            x += &d * step;
            let g_new = grad(&x);
            let beta = (g_new.dot(&g_new) / g.dot(&g)).max(0.0);
            d = -&g_new + d * beta;
            g = g_new;
        }
    }
    unflat(&x)
}

/// Track merging by repeatedly joining the globally closest admissible pair
/// of whole tracks, recomputed after every merge.
pub fn naive_merge(detections: &[Detection], dist_thresh: f64, window: usize) -> Vec<Vec<usize>> {
    let mut tracks: Vec<Vec<usize>> = (0..detections.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<((f64, usize, usize, usize), usize, usize)> = None;
        for (ia, a) in tracks.iter().enumerate() {
            for (ib, b) in tracks.iter().enumerate() {
                let (end, start) = (&detections[*a.last().unwrap()], &detections[b[0]]);
                let gap = start.frame as i64 - end.frame as i64;
                if ia == ib || gap < 1 || gap > window as i64 {
                    continue;
                }
                let dist = (end.neck().unwrap() - start.neck().unwrap()).norm();
                if dist >= dist_thresh {
                    continue;
                }
                let key = (dist, end.frame, *a.last().unwrap(), b[0]);
                if best.as_ref().is_none_or(|(k, ..)| {
                    key.0.total_cmp(&k.0).then(key.1.cmp(&k.1)).then(key.2.cmp(&k.2)).then(key.3.cmp(&k.3)).is_lt()
                }) {
                    best = Some((key, ia, ib));
                }
            }
        }
        let Some((_, ia, ib)) = best else { break };
        let tail = tracks[ib].clone();
        tracks[ia].extend(tail);
        tracks.remove(ib);
    }
    tracks.sort_by_key(|t| (detections[t[0]].frame, t[0]));
    tracks
}

pub fn neck_detection(frame: usize, x: f64, y: f64) -> Detection {
    Detection {
        frame,
        bbox: BBox::new(x - 10.0, y - 5.0, 20.0, 60.0),
        keypoints: [(NECK.to_string(), Keypoint::new(Vector2::new(x, y), 1.0))].into_iter().collect(),
        player_id: None,
        source: None,
    }
}

/// Density clusters by brute force: core points from all-pairs distances,
/// clusters from the transitive closure of the core adjacency matrix.
pub struct ClosureClusters {
    pub core: Vec<bool>,
    /// Core-point equivalence: `reach[i][j]` when i and j share a cluster.
    pub reach: Vec<Vec<bool>>,
    pub neighbors: Vec<Vec<usize>>,
}

pub fn closure_clusters(points: &[Point3<f64>], eps: f64, min_pts: usize) -> ClosureClusters {
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| (points[i] - points[j]).norm() <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for &j in &neighbors[i] {
            reach[i][j] = core[i] && core[j];
        }
        reach[i][i] = core[i];
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    ClosureClusters { core, reach, neighbors }
}

/// Crop pairs extracted from a rendered scene with `k` players.
pub fn extraction_count(seed: u64, k: usize) -> usize {
    let config = SceneConfig {
        num_players: k,
        ..SceneConfig::default()
    };
    let scene = SynthScene::random(seed, &config).unwrap();
    let render = render_ndc(&scene);
    let capture = Capture::new(render.capture.color, render.capture.ndc_depth, scene.glcam).unwrap();
    extract_pairs(&capture, &ExtractConfig::default()).unwrap().pairs.len()
}
