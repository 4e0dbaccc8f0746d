//! Builds detections from synthetic poses and links them into tracks.

use pitchrecon::synth::{box_pose, SequenceConfig, SynthSequence};
use pitchrecon::tracking::{merge_tracks, refine_boxes, BBox, MergeConfig, RefineBoxesConfig};

fn main() -> pitchrecon::Result<()> {
    let mut config = SequenceConfig {
        frames: 8,
        ..SequenceConfig::default()
    };
    config.scene.num_players = 4;
    let sequence = SynthSequence::generate(3, &config)?;

    let mut detections = Vec::new();
    for (frame, camera) in sequence.cameras.iter().enumerate() {
        let poses = sequence.players[frame]
            .iter()
            .map(|p| box_pose(camera, p))
            .collect::<pitchrecon::Result<Vec<_>>>()?;
        // A coarse detector box for every player, plus one spurious box.
        let mut boxes: Vec<BBox> = poses
            .iter()
            .filter_map(pitchrecon::tracking::keypoint_extent)
            .collect();
        boxes.push(BBox::new(5.0, 5.0, 20.0, 40.0));
        let refined = refine_boxes(frame, &boxes, &poses, camera.image_size, Some(camera), &RefineBoxesConfig::default());
        println!(
            "frame {frame}: {} detections, {} unmatched boxes",
            refined.detections.len(),
            refined.unmatched_boxes
        );
        detections.extend(refined.detections);
    }

    for track in merge_tracks(&detections, &MergeConfig::default())? {
        let frames: Vec<usize> = track.frames().collect();
        println!("track {}: frames {frames:?}", track.id);
    }
    Ok(())
}
