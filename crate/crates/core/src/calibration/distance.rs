//! Edge point sets and exact squared Euclidean distance maps.
//!
//! Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`; distance values live at pixel
//! centers and are measured between pixel centers.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{pixel_center, ImageSize};
use crate::grid::{Grid, Mask};

/// Edge points in continuous pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    points: Vec<Vector2<f64>>,
    image_size: ImageSize,
}

impl EdgeSet {
    /// Keeps only points inside `[0, W) x [0, H)`.
    pub fn new(points: Vec<Vector2<f64>>, image_size: ImageSize) -> Self {
        let points = points.into_iter().filter(|p| image_size.contains(p)).collect();
        Self { points, image_size }
    }

    /// Edge pixels of a binary mask, as pixel centers.
    pub fn from_mask(mask: &Mask) -> Self {
        let size = ImageSize::new(mask.width() as u32, mask.height() as u32);
        let points = mask
            .iter_xy()
            .filter(|(_, _, &v)| v)
            .map(|(x, y, _)| pixel_center(x, y))
            .collect();
        Self {
            points,
            image_size: size,
        }
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn image_size(&self) -> ImageSize {
        self.image_size
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn to_mask(&self) -> Mask {
        let mut mask = Grid::new(self.image_size.width as usize, self.image_size.height as usize, false);
        for p in &self.points {
            mask.set(p.x as usize, p.y as usize, true);
        }
        mask
    }
}

/// Squared distance (in pixels^2) from each pixel center to the nearest edge pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    values: Grid<f64>,
}

impl DistanceMap {
    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize::new(self.values.width() as u32, self.values.height() as u32)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        *self.values.get(x, y)
    }

    /// Bilinear read at a continuous pixel coordinate, clamped to the image.
    pub fn sample(&self, p: &Vector2<f64>) -> f64 {
        let w = self.values.width();
        let h = self.values.height();
        let fx = (p.x - 0.5).clamp(0.0, (w - 1) as f64);
        let fy = (p.y - 0.5).clamp(0.0, (h - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ax = fx - x0 as f64;
        let ay = fy - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - ax) + self.at(x1, y0) * ax;
        let bottom = self.at(x0, y1) * (1.0 - ax) + self.at(x1, y1) * ax;
        top * (1.0 - ay) + bottom * ay
    }

    /// Separable Gaussian blur with clamped borders.
    pub fn smoothed(&self, sigma: f64) -> DistanceMap {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let (w, h) = self.values.dims();
        let r = radius as usize;
        let src = self.values.as_slice();
        let mut tmp = vec![0.0; w * h];
        tmp.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
            let row = &src[y * w..(y + 1) * w];
            let padded: Vec<f64> = (0..w + 2 * r)
                .map(|i| row[i.saturating_sub(r).min(w - 1)])
                .collect();
            for (x, o) in out.iter_mut().enumerate() {
                *o = kernel.iter().zip(&padded[x..]).map(|(k, v)| k * v).sum();
            }
        });
        let mut values = vec![0.0; w * h];
        values.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
            for (k, weight) in kernel.iter().enumerate() {
                let sy = (y + k).saturating_sub(r).min(h - 1);
                for (o, v) in out.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                    *o += weight * v;
                }
            }
        });
        DistanceMap {
            values: Grid::from_vec(w, h, values).expect("blur preserves dimensions"),
        }
    }
}

/// Exact squared Euclidean distance transform of an edge set.
pub fn build_distance_map(edges: &EdgeSet) -> Result<DistanceMap> {
    if edges.is_empty() {
        return Err(Error::EmptyEdges);
    }
    let w = edges.image_size.width as usize;
    let h = edges.image_size.height as usize;
    let big = ((w * w + h * h) as f64) * 4.0 + 1.0;
    let mut f = Grid::new(w, h, big);
    for p in &edges.points {
        f.set(p.x as usize, p.y as usize, 0.0);
    }
    let mut scratch = Scratch::new(w.max(h));
    let mut column = vec![0.0; h];
    let mut out = vec![0.0; w.max(h)];
    for x in 0..w {
        for y in 0..h {
            column[y] = *f.get(x, y);
        }
        lower_envelope(&column, &mut out[..h], &mut scratch);
        for y in 0..h {
            f.set(x, y, out[y]);
        }
    }
    let mut row = vec![0.0; w];
    for y in 0..h {
        row.copy_from_slice(f.row(y));
        lower_envelope(&row, &mut out[..w], &mut scratch);
        for x in 0..w {
            f.set(x, y, out[x]);
        }
    }
    Ok(DistanceMap { values: f })
}

struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }
}

/// One-dimensional squared distance transform: `out[q] = min_p (q - p)^2 + f[p]`.
fn lower_envelope(f: &[f64], out: &mut [f64], s: &mut Scratch) {
    let n = f.len();
    let (v, z) = (&mut s.v, &mut s.z);
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let intersect = |p: usize| {
            ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
        };
        let mut sq = intersect(v[k]);
        while sq <= z[k] {
            k -= 1;
            sq = intersect(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = sq;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(edges: &EdgeSet) -> Grid<f64> {
        let size = edges.image_size();
        let pix: Vec<(i64, i64)> = edges.points().iter().map(|p| (p.x as i64, p.y as i64)).collect();
        Grid::from_fn(size.width as usize, size.height as usize, |x, y| {
            pix.iter()
                .map(|&(ex, ey)| ((x as i64 - ex).pow(2) + (y as i64 - ey).pow(2)) as f64)
                .fold(f64::INFINITY, f64::min)
        })
    }

    #[test]
    fn single_point_examples() {
        let edges = EdgeSet::new(vec![Vector2::new(10.0, 10.0)], ImageSize::new(32, 32));
        let d = build_distance_map(&edges).unwrap();
        assert_eq!(d.at(10, 10), 0.0);
        assert_eq!(d.at(13, 10), 9.0);
        assert_eq!(d.at(13, 14), 25.0);
    }

    #[test]
    fn empty_edges_rejected() {
        let edges = EdgeSet::new(vec![], ImageSize::new(8, 8));
        assert!(matches!(build_distance_map(&edges), Err(Error::EmptyEdges)));
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..40 {
            let n = 1 + trial % 17;
            let pts = (0..n)
                .map(|_| Vector2::new(rng.random_range(0.0..64.0), rng.random_range(0.0..64.0)))
                .collect();
            let edges = EdgeSet::new(pts, ImageSize::new(64, 64));
            let fast = build_distance_map(&edges).unwrap();
            assert_eq!(fast.values(), &brute_force(&edges));
        }
    }

    #[test]
    fn non_square_images() {
        let edges = EdgeSet::new(vec![Vector2::new(0.5, 0.5), Vector2::new(40.2, 3.7)], ImageSize::new(41, 5));
        let fast = build_distance_map(&edges).unwrap();
        assert_eq!(fast.values(), &brute_force(&edges));
    }

    #[test]
    fn bilinear_sampling_hits_pixel_centers() {
        let edges = EdgeSet::new(vec![Vector2::new(4.5, 4.5)], ImageSize::new(10, 10));
        let d = build_distance_map(&edges).unwrap();
        assert_eq!(d.sample(&Vector2::new(4.5, 4.5)), 0.0);
        assert_eq!(d.sample(&Vector2::new(6.5, 4.5)), 4.0);
        // halfway between values 0 and 1
        assert!((d.sample(&Vector2::new(5.0, 4.5)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn smoothing_preserves_constant_maps() {
        let edges = EdgeSet::new(vec![Vector2::new(2.0, 2.0)], ImageSize::new(5, 5));
        let d = build_distance_map(&edges).unwrap();
        let s = d.smoothed(1.0);
        assert!(s.values().as_slice().iter().all(|v| *v >= 0.0));
        assert!(s.at(2, 2) > 0.0);
    }

    #[test]
    fn mask_round_trip() {
        let edges = EdgeSet::new(vec![Vector2::new(1.5, 2.5), Vector2::new(3.5, 0.5)], ImageSize::new(4, 4));
        let again = EdgeSet::from_mask(&edges.to_mask());
        assert_eq!(again.len(), 2);
    }
}
