//! Trajectory smoothing: a data term on observed frames plus squared second
//! differences, solved exactly with a banded Cholesky factorization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryProblem {
    pub n_frames: usize,
    /// Observed positions keyed by frame.
    pub observations: BTreeMap<usize, [f64; 3]>,
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
}

fn default_smoothness() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory: Vec<[f64; 3]>,
}

impl TrajectoryProblem {
    pub fn new(n_frames: usize, observations: BTreeMap<usize, [f64; 3]>) -> Self {
        Self {
            n_frames,
            observations,
            smoothness: default_smoothness(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::InvalidInput("trajectory needs at least one frame".into()));
        }
        if self.observations.is_empty() {
            return Err(Error::Unconstrained);
        }
        if !(self.smoothness.is_finite() && self.smoothness >= 0.0) {
            return Err(Error::InvalidInput(format!("smoothness weight {}", self.smoothness)));
        }
        for (&t, p) in &self.observations {
            if t >= self.n_frames {
                return Err(Error::InvalidInput(format!("observation at frame {t} beyond {} frames", self.n_frames)));
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite observation at frame {t}")));
            }
        }
        Ok(())
    }

    /// `E = sum_{t in M} |X_t - D_t|^2 + w sum_t |X_{t-1} - 2 X_t + X_{t+1}|^2`.
    pub fn energy(&self, x: &[[f64; 3]]) -> f64 {
        let data: f64 = self
            .observations
            .iter()
            .map(|(&t, d)| (0..3).map(|c| (x[t][c] - d[c]).powi(2)).sum::<f64>())
            .sum();
        let smooth: f64 = x
            .windows(3)
            .map(|w| (0..3).map(|c| (w[0][c] - 2.0 * w[1][c] + w[2][c]).powi(2)).sum::<f64>())
            .sum();
        data + self.smoothness * smooth
    }

    /// Symmetric pentadiagonal normal matrix as `[diag, first off-diagonal, second off-diagonal]` bands.
    fn normal_bands(&self) -> [Vec<f64>; 3] {
        let n = self.n_frames;
        let mut bands = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for &t in self.observations.keys() {
            bands[0][t] += 1.0;
        }
        let w = self.smoothness;
        for t in 1..n.saturating_sub(1) {
            let idx = [t - 1, t, t + 1];
            let coef = [1.0, -2.0, 1.0];
            for a in 0..3 {
                for b in a..3 {
                    bands[b - a][idx[a]] += w * coef[a] * coef[b];
                }
            }
        }
        bands
    }

    fn rhs(&self, c: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.n_frames];
        for (&t, d) in &self.observations {
            b[t] = d[c];
        }
        b
    }

    /// Largest entry of `A X - S D` over all coordinates.
    pub fn normal_residual(&self, x: &[[f64; 3]]) -> f64 {
        let bands = self.normal_bands();
        let n = self.n_frames;
        let mut worst = 0.0f64;
        for c in 0..3 {
            let b = self.rhs(c);
            for i in 0..n {
                let mut ax = bands[0][i] * x[i][c];
                for k in 1..=2 {
                    if i >= k {
                        ax += bands[k][i - k] * x[i - k][c];
                    }
                    if i + k < n {
                        ax += bands[k][i] * x[i + k][c];
                    }
                }
                worst = worst.max((ax - b[i]).abs());
            }
        }
        worst
    }
}

/// Band Cholesky factor `A = L L^T` with `L` stored as three bands.
struct BandCholesky {
    l: [Vec<f64>; 3],
}

impl BandCholesky {
    fn factor(a: &[Vec<f64>; 3]) -> Option<Self> {
        let n = a[0].len();
        let mut l = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            // Row i of L has entries at columns i-2, i-1, i.
            if i >= 2 {
                l[2][i - 2] = a[2][i - 2] / l[0][i - 2];
            }
            if i >= 1 {
                let mut s = a[1][i - 1];
                if i >= 2 {
                    s -= l[2][i - 2] * l[1][i - 2];
                }
                l[1][i - 1] = s / l[0][i - 1];
            }
            let mut d = a[0][i];
            if i >= 1 {
                d -= l[1][i - 1].powi(2);
            }
            if i >= 2 {
                d -= l[2][i - 2].powi(2);
            }
            if !(d > 1e-12 * a[0][i].abs().max(1.0)) {
                return None;
            }
            l[0][i] = d.sqrt();
        }
        Some(Self { l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let l = &self.l;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            if i >= 1 {
                s -= l[1][i - 1] * y[i - 1];
            }
            if i >= 2 {
                s -= l[2][i - 2] * y[i - 2];
            }
            y[i] = s / l[0][i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= l[1][i] * x[i + 1];
            }
            if i + 2 < n {
                s -= l[2][i] * x[i + 2];
            }
            x[i] = s / l[0][i];
        }
        x
    }
}

/// Exact minimizer of the smoothing energy, per coordinate.
///
/// A single observation leaves the linear part of the motion free; the
/// constant trajectory through it is returned.
pub fn smooth_trajectory(problem: &TrajectoryProblem) -> Result<Trajectory> {
    problem.validate()?;
    if problem.observations.len() == 1 {
        let d = *problem.observations.values().next().expect("one observation");
        return Ok(Trajectory {
            trajectory: vec![d; problem.n_frames],
        });
    }
    let chol = BandCholesky::factor(&problem.normal_bands()).ok_or(Error::Unconstrained)?;
    let mut trajectory = vec![[0.0; 3]; problem.n_frames];
    for c in 0..3 {
        for (t, v) in chol.solve(&problem.rhs(c)).into_iter().enumerate() {
            trajectory[t][c] = v;
        }
    }
    Ok(Trajectory { trajectory })
}
