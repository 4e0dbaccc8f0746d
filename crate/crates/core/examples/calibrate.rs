//! Refines a perturbed camera against rendered field-line edges.

use pitchrecon::calibration::{build_distance_map, refine_camera, sample_template_points, RefineConfig};
use pitchrecon::geometry::{rotation_angle_between, rotation_vector};
use pitchrecon::synth::{render_edges, SceneConfig, SynthScene};
use pitchrecon::Camera;

fn main() -> pitchrecon::Result<()> {
    let scene = SynthScene::random(7, &SceneConfig::default())?;
    let truth = &scene.camera;
    let dmap = build_distance_map(&render_edges(&scene)?)?;
    let points = sample_template_points(&scene.template, 0.5);

    let tilt = nalgebra::Rotation3::from_euler_angles(0.02, -0.015, 0.0).into_inner();
    let r = tilt * truth.rotation_matrix();
    let start = Camera::with_principal_point(
        truth.focal * 1.03,
        rotation_vector(&r),
        -(r * truth.center().coords),
        truth.principal_point,
        truth.image_size,
    )?;

    let fit = refine_camera(&start, &dmap, &points, &RefineConfig::default())?;
    let error = |c: &Camera| rotation_angle_between(&c.rotation_matrix(), &truth.rotation_matrix()).to_degrees();
    println!("objective {:.1} -> {:.1} in {} iterations", fit.initial_objective, fit.objective, fit.iterations);
    println!("rotation error {:.3} -> {:.3} deg", error(&start), error(&fit.camera));
    println!("focal {:.1} -> {:.1} (true {:.1})", start.focal, fit.camera.focal, truth.focal);
    Ok(())
}
