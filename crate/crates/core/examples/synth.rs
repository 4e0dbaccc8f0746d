//! Writes a synthetic input bundle with ground truth, ready for the `pitchrecon` binary.

use pitchrecon::synth::{SequenceConfig, SynthSequence};

fn main() -> pitchrecon::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pitchrecon-synth"));
    let mut config = SequenceConfig::default();
    config.scene.num_players = 4;
    let sequence = SynthSequence::generate(0, &config)?;
    let manifest = sequence.write(&dir, true)?;
    for (k, camera) in sequence.cameras.iter().enumerate() {
        println!("frame {k}: focal {:.1}, center {}", camera.focal, camera.center());
    }
    println!("manifest at {}", manifest.display());
    Ok(())
}
