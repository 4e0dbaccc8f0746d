//! Scores a predicted depth map and mask against references.

use pitchrecon::depthmesh::{CropFrame, DepthMap};
use pitchrecon::metrics::{iou, st_rmse, EvalPair};
use pitchrecon::{Grid, Mask};

fn main() -> pitchrecon::Result<()> {
    let truth = Grid::from_fn(16, 16, |x, y| 20.0 + 0.01 * (x + y) as f64);
    // Off by a global scale, then also by a bump in one corner.
    let predicted = truth.map(|&z| 0.5 * z);
    let mut bumped = predicted.clone();
    bumped.set(0, 0, predicted.get(0, 0) + 0.05);

    let crop = CropFrame::default();
    let truth = DepthMap::from_values(truth, crop);
    for (name, p) in [("scaled", predicted), ("bumped", bumped)] {
        let p = DepthMap::from_values(p, crop);
        println!("{name}: st-RMSE {:.2e}", st_rmse(&EvalPair::new(&p, &truth))?);
    }

    let a = Mask::from_fn(16, 16, |x, _| x < 10);
    let b = Mask::from_fn(16, 16, |x, _| x >= 5);
    println!("IoU {:.3}", iou(&a, &b)?);
    Ok(())
}
