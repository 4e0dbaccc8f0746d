//! Cuts color and depth training pairs out of a rendered capture.

use pitchrecon::extract::{extract_pairs, ExtractConfig};
use pitchrecon::synth::{render_ndc, SceneConfig, SynthScene};
use pitchrecon::ImageSize;

fn main() -> pitchrecon::Result<()> {
    let config = SceneConfig {
        image_size: ImageSize::new(640, 360),
        num_players: 5,
        ..SceneConfig::default()
    };
    let scene = SynthScene::random(2, &config)?;
    let render = render_ndc(&scene);
    let extraction = extract_pairs(&render.capture, &ExtractConfig::default())?;
    println!(
        "{} player points, {} noise points, {} pairs",
        extraction.player_points,
        extraction.noise_points,
        extraction.pairs.len()
    );
    for pair in &extraction.pairs {
        let [x, y, w, h] = pair.bbox;
        println!("cluster {}: {} points, crop {w}x{h} at ({x}, {y})", pair.cluster, pair.points);
    }
    Ok(())
}
