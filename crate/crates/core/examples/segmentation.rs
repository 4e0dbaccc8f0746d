//! Separates a disc from its background with anchored association.

use pitchrecon::segmentation::{segment_player, AnchorSet, SegmentConfig};
use pitchrecon::{Grid, Mask};

fn main() -> pitchrecon::Result<()> {
    let (w, h) = (64, 48);
    let inside = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 - 32.0, y as f64 - 24.0);
        dx * dx + dy * dy < 15.0 * 15.0
    };
    let image = Grid::from_fn(w, h, |x, y| if inside(x, y) { [0.95, 0.9, 0.9] } else { [0.05, 0.4, 0.05] });
    let edges = Grid::from_fn(w, h, |x, y| {
        let boundary = [(0isize, 1isize), (1, 0), (0, -1), (-1, 0)].iter().any(|(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && inside(nx as usize, ny as usize) != inside(x, y)
        });
        if boundary { 1.0 } else { 0.0 }
    });

    // A stick figure inside the disc, as a pose skeleton would give.
    let player: Vec<_> = (20..45).map(|x| (x, 24)).chain((12..37).map(|y| (32, y))).collect();
    let border: Vec<_> = (0..w)
        .flat_map(|x| [(x, 0), (x, h - 1)])
        .chain((0..h).flat_map(|y| [(0, y), (w - 1, y)]))
        .collect();
    let anchors = AnchorSet::from_pixels(w, h, &player, &[], &border)?;
    let everywhere = Mask::new(w, h, true);

    let seg = segment_player(&image, &edges, &anchors, &everywhere, &SegmentConfig::default())?;
    let truth = Grid::from_fn(w, h, |x, y| inside(x, y));
    let agree = seg.mask.as_slice().iter().zip(truth.as_slice()).filter(|(a, b)| a == b).count();
    println!("{} sweeps, residual {:.1e}", seg.field.sweeps, seg.field.residual);
    println!("{} of {} pixels agree with the disc", agree, w * h);
    Ok(())
}
