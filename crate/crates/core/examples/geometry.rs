//! Projects a field point through a broadcast camera and back.

use nalgebra::{Point3, Vector3};
use pitchrecon::geometry::{ndc_to_world, world_to_ndc};
use pitchrecon::{Camera, GlCamera, ImageSize};

fn main() -> pitchrecon::Result<()> {
    let size = ImageSize::new(1280, 720);
    let camera = Camera::look_at(Point3::new(0.0, 20.0, -60.0), Point3::origin(), Vector3::y(), 1400.0, size)?;
    let spot = Point3::new(11.0, 0.0, 0.0);
    let pixel = camera.project(&spot)?;
    let back = camera.ray_ground_intersect(&pixel)?;
    println!("penalty spot at pixel ({:.2}, {:.2}), back on the field at {back}", pixel.x, pixel.y);

    let gl = GlCamera::from_camera(&camera, 1.0, 1000.0)?;
    let sample = world_to_ndc(&gl, &spot)?;
    let lifted = ndc_to_world(&gl, &sample.pixel, sample.depth)?;
    println!(
        "buffer depth {:.6}, eye depth {:.3} m, recovered {lifted}",
        sample.depth,
        gl.linear_depth(sample.depth)
    );
    Ok(())
}
