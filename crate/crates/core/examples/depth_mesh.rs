//! Encodes a player's depth as billboard offsets, decodes it and meshes the result.

use pitchrecon::depthmesh::{build_mesh, decode_depth, lift_billboard_at, CropFrame, BACKGROUND_CLASS};
use pitchrecon::synth::{projected_box, true_class_map, SceneConfig, SynthScene};
use pitchrecon::tracking::BBox;

fn main() -> pitchrecon::Result<()> {
    let config = SceneConfig {
        num_players: 1,
        ..SceneConfig::default()
    };
    let scene = SynthScene::random(5, &config)?;
    let camera = &scene.camera;
    let player = &scene.players[0];

    let [x0, y0, x1, y1] = projected_box(camera, player).expect("player in view");
    let bbox = BBox::from_corners(x0.floor(), y0.floor(), x1.ceil(), y1.ceil());
    let (w, h) = (bbox.w as usize, bbox.h as usize);
    let crop = CropFrame::spanning(&bbox, w, h);
    let billboard = lift_billboard_at(camera, &camera.project(&player.ground_point())?)?;

    let classes = true_class_map(camera, &scene.players, 0, &billboard, &crop, w, h);
    let depth = decode_depth(&classes, &billboard, camera, crop);
    let mask = classes.map(|&c| c != BACKGROUND_CLASS);
    let mesh = build_mesh(&depth, &mask, camera, 0.1)?;
    println!("crop {w}x{h}, {} player pixels", mask.count());
    println!("mesh: {} vertices, {} faces", mesh.vertices.len(), mesh.faces.len());
    Ok(())
}
