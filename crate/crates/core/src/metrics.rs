//! Depth and mask evaluation: scale-invariant log RMSE and intersection over union.

use crate::depthmesh::DepthMap;
use crate::error::{Error, Result};
use crate::grid::Mask;

/// Predicted and reference depth over a set of evaluated pixels.
#[derive(Debug, Clone)]
pub struct EvalPair<'a> {
    pub predicted: &'a DepthMap,
    pub truth: &'a DepthMap,
    /// Pixels to evaluate; defaults to where both maps are valid.
    pub mask: Option<&'a Mask>,
}

impl<'a> EvalPair<'a> {
    pub fn new(predicted: &'a DepthMap, truth: &'a DepthMap) -> Self {
        Self {
            predicted,
            truth,
            mask: None,
        }
    }

    fn log_differences(&self) -> Result<Vec<f64>> {
        self.predicted.depth.ensure_same_dims(&self.truth.depth)?;
        if let Some(m) = self.mask {
            self.predicted.depth.ensure_same_dims(m)?;
        }
        let mut d = Vec::new();
        for (x, y, &p) in self.predicted.depth.iter_xy() {
            let selected = match self.mask {
                Some(m) => *m.get(x, y),
                None => *self.predicted.valid.get(x, y) && *self.truth.valid.get(x, y),
            };
            if !selected {
                continue;
            }
            let g = *self.truth.depth.get(x, y);
            for v in [p, g] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidDepth(v));
                }
            }
            d.push(p.ln() - g.ln());
        }
        if d.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        Ok(d)
    }
}

/// Standard deviation of `log(pred) - log(gt)` over the evaluated pixels.
pub fn st_rmse(pair: &EvalPair) -> Result<f64> {
    let d = pair.log_differences()?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// `|A and B| / |A or B|`, 1 when both are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthmesh::CropFrame;
    use crate::grid::Grid;

    fn depth(values: Vec<f64>) -> DepthMap {
        DepthMap::from_values(Grid::from_vec(values.len(), 1, values).unwrap(), CropFrame::default())
    }

    #[test]
    fn identical_and_scaled_are_zero() {
        let gt = depth(vec![1.0, 2.0, 3.5, 10.0]);
        assert_eq!(st_rmse(&EvalPair::new(&gt, &gt)).unwrap(), 0.0);
        let scaled = depth(vec![2.0, 4.0, 7.0, 20.0]);
        assert!(st_rmse(&EvalPair::new(&scaled, &gt)).unwrap() < 1e-12);
    }

    #[test]
    fn four_pixel_instance() {
        let gt = depth(vec![1.0, 1.0, 1.0, 1.0]);
        let pred = depth(vec![1.0, std::f64::consts::E, 1.0, std::f64::consts::E]);
        // d = [0, 1, 0, 1]: mean 0.5, mean square 0.5, variance 0.25.
        assert!((st_rmse(&EvalPair::new(&pred, &gt)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluation_errors() {
        let a = depth(vec![0.0, 0.0]);
        assert!(matches!(st_rmse(&EvalPair::new(&a, &a)), Err(Error::EmptyEvaluation)));
        let b = depth(vec![1.0, 1.0]);
        let all = Grid::new(2, 1, true);
        let pair = EvalPair {
            predicted: &a,
            truth: &b,
            mask: Some(&all),
        };
        assert!(matches!(st_rmse(&pair), Err(Error::InvalidDepth(_))));
    }

    #[test]
    fn iou_fixtures() {
        let block = |x0: usize| Grid::from_fn(5, 3, |x, y| (x0..x0 + 2).contains(&x) && y < 2);
        assert_eq!(iou(&block(0), &block(0)).unwrap(), 1.0);
        assert_eq!(iou(&block(0), &block(3)).unwrap(), 0.0);
        assert_eq!(iou(&block(0), &block(1)).unwrap(), 2.0 / 6.0);
        let empty = Grid::new(5, 3, false);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert!(iou(&empty, &Grid::new(3, 5, false)).is_err());
    }
}
