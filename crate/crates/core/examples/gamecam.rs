//! Recovers a game engine camera from a depth capture and a calibrated pinhole camera.

use pitchrecon::gamecam::{recover_game_camera, GameCamConfig, GameCamParams, NdcCapture, DEFAULT_PLAYER_WEIGHT};
use pitchrecon::synth::{render_ndc, SceneConfig, SynthScene};
use pitchrecon::ImageSize;

fn main() -> pitchrecon::Result<()> {
    let config = SceneConfig {
        image_size: ImageSize::new(640, 360),
        num_players: 6,
        z_near: 0.5,
        z_far: 800.0,
        ..SceneConfig::default()
    };
    let scene = SynthScene::random(11, &config)?;
    let render = render_ndc(&scene);
    let capture = NdcCapture::from_labels(render.capture.ndc_depth.clone(), &render.labels)?;

    // The engine's clip planes are unknown; start from generic ones.
    let init = GameCamParams::from_aux(&scene.camera, 1.0, 1000.0);
    let fit = recover_game_camera(&capture, &scene.camera, &init, DEFAULT_PLAYER_WEIGHT, &GameCamConfig::default())?;
    println!("objective {:.3e} -> {:.3e} after {} iterations", fit.initial_objective, fit.objective, fit.iterations);
    println!(
        "clip planes ({:.3}, {:.1}), true ({}, {})",
        fit.params.z_near, fit.params.z_far, config.z_near, config.z_far
    );
    println!("focal {:.2}, true {:.2}", fit.params.focal, scene.camera.focal);
    Ok(())
}
