//! Fills gaps in a noisy player track with a smooth trajectory.

use std::collections::BTreeMap;

use pitchrecon::trajectory::{smooth_trajectory, TrajectoryProblem};

fn main() -> pitchrecon::Result<()> {
    let observations: BTreeMap<usize, [f64; 3]> = [0, 1, 2, 5, 6, 9]
        .into_iter()
        .map(|k| {
            let t = k as f64;
            let wobble = if k % 2 == 0 { 0.05 } else { -0.05 };
            (k, [t * 0.8 + wobble, 0.0, 3.0 - 0.2 * t])
        })
        .collect();
    let problem = TrajectoryProblem::new(10, observations);
    let smoothed = smooth_trajectory(&problem)?;
    for (k, p) in smoothed.trajectory.iter().enumerate() {
        let seen = if problem.observations.contains_key(&k) { "observed" } else { "filled" };
        println!("frame {k}: ({:.3}, {:.3}) {seen}", p[0], p[2]);
    }
    println!("energy {:.4}", problem.energy(&smoothed.trajectory));
    Ok(())
}
