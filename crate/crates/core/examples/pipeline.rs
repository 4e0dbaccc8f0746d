//! Renders a short synthetic sequence and runs every stage on it.

use pitchrecon::pipeline::{run_pipeline, SceneManifest};
use pitchrecon::synth::{SequenceConfig, SynthSequence};

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("pitchrecon-example");
    let mut config = SequenceConfig {
        frames: 4,
        ..SequenceConfig::default()
    };
    config.scene.num_players = 3;
    let manifest = SynthSequence::generate(1, &config)?.write(&dir, false)?;

    let (report, timings) = run_pipeline(&SceneManifest::load(&manifest)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("{}", serde_json::to_string_pretty(&timings)?);
    println!("outputs in {}", dir.display());
    Ok(())
}
