//! Camera initialization from plane-to-image correspondences.

use nalgebra::{DMatrix, Matrix3, Point3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, rotation_vector, Camera, ImageSize};

/// A pitch point (on `y = 0`) and the pixel where it is observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub world: Point3<f64>,
    pub pixel: Vector2<f64>,
}

/// Similarity transform that centers points and scales their mean distance to sqrt(2).
fn normalizer(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let spread = points.iter().map(|p| (p - mean).norm()).sum::<f64>() / n;
    let s = if spread > 0.0 { 2f64.sqrt() / spread } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mean.x, 0.0, s, -s * mean.y, 0.0, 0.0, 1.0)
}

fn apply(h: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = h * p.push(1.0);
    q.xy() / q.z
}

fn collinear(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, scale: f64) -> bool {
    let area = (b - a).perp(&(c - a)).abs();
    area <= 1e-9 * scale * scale
}

/// Normalized direct linear transform for the homography taking `src` to `dst`.
pub fn fit_homography(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Result<Matrix3<f64>> {
    let n = src.len();
    if n < 4 || dst.len() != n {
        return Err(Error::DegenerateCorrespondences(format!(
            "need at least 4 correspondences, got {n}"
        )));
    }
    let scale = src.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let all_collinear = (2..n).all(|k| collinear(&src[0], &src[1], &src[k], scale));
    let any_triple = n == 4
        && (0..4).any(|skip| {
            let t: Vec<_> = (0..4).filter(|&i| i != skip).map(|i| &src[i]).collect();
            collinear(t[0], t[1], t[2], scale)
        });
    if all_collinear || any_triple {
        return Err(Error::DegenerateCorrespondences("world points are collinear".into()));
    }
    let ts = normalizer(src);
    let td = normalizer(dst);
    let mut a = DMatrix::zeros(2 * n, 9);
    for i in 0..n {
        let s = apply(&ts, &src[i]);
        let d = apply(&td, &dst[i]);
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r0 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        let r1 = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let (second, largest) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[8]]);
    if second <= 1e-12 * largest {
        return Err(Error::DegenerateCorrespondences("homography is not well determined".into()));
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().expect("similarity is invertible");
    Ok(td_inv * hn * ts)
}

/// Focal length, rotation and translation from four or more ground correspondences.
///
/// The principal point is taken as the image center.
pub fn init_camera_from_correspondences(pairs: &[Correspondence], image_size: ImageSize) -> Result<Camera> {
    let src: Vec<_> = pairs.iter().map(|c| Vector2::new(c.world.x, c.world.z)).collect();
    let dst: Vec<_> = pairs.iter().map(|c| c.pixel).collect();
    let h = fit_homography(&src, &dst)?;

    let c = image_size.center();
    let shift = Matrix3::new(1.0, 0.0, -c.x, 0.0, 1.0, -c.y, 0.0, 0.0, 1.0);
    let a = shift * h;
    let (h1, h2) = (a.column(0), a.column(1));
    // Unknown w = 1/f^2 from r1 . r3 = 0 and |r1| = |r3|.
    let c1 = h1[0] * h2[0] + h1[1] * h2[1];
    let d1 = h1[2] * h2[2];
    let c2 = h1[0] * h1[0] + h1[1] * h1[1] - h2[0] * h2[0] - h2[1] * h2[1];
    let d2 = h1[2] * h1[2] - h2[2] * h2[2];
    let denom = c1 * c1 + c2 * c2;
    let w = if denom > 0.0 { -(c1 * d1 + c2 * d2) / denom } else { -1.0 };
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::DegenerateCorrespondences(
            "focal length estimate is not positive".into(),
        ));
    }
    let focal = 1.0 / w.sqrt();
    let k_inv = Matrix3::new(1.0 / focal, 0.0, 0.0, 0.0, 1.0 / focal, 0.0, 0.0, 0.0, 1.0);
    let m = k_inv * a;
    let (m1, m3, mt) = (m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned());
    let mut lambda = 2.0 / (m1.norm() + m3.norm());
    if mt.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = m1 * lambda;
    let r3 = m3 * lambda;
    let r2 = r3.cross(&r1);
    let rot = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r3]));

    // Translation by linear least squares on the pinhole equations with R and f fixed.
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for pair in pairs {
        let rx = rot * pair.world.coords;
        let du = pair.pixel.x - c.x;
        let dv = pair.pixel.y - c.y;
        // du (rx.z + tz) - f (rx.x + tx) = 0 and likewise for v.
        let rows = [
            (Vector3::new(-focal, 0.0, du), focal * rx.x - du * rx.z),
            (Vector3::new(0.0, -focal, dv), focal * rx.y - dv * rx.z),
        ];
        for (row, rhs) in rows {
            ata += row * row.transpose();
            atb += row * rhs;
        }
    }
    let t = ata
        .try_inverse()
        .map(|inv| inv * atb)
        .unwrap_or_else(|| mt * lambda);
    let camera = Camera::new(focal, rotation_vector(&rot), t, image_size)?;
    if pairs.iter().any(|p| camera.depth_of(&p.world) <= 0.0) {
        return Err(Error::DegenerateCorrespondences(
            "recovered camera sees correspondences behind it".into(),
        ));
    }
    Ok(camera)
}

/// Root-mean-square reprojection error in pixels.
pub fn reprojection_rmse(camera: &Camera, pairs: &[Correspondence]) -> f64 {
    let sum: f64 = pairs
        .iter()
        .map(|p| match camera.project(&p.world) {
            Ok(px) => (px - p.pixel).norm_squared(),
            Err(_) => f64::INFINITY,
        })
        .sum();
    (sum / pairs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn broadcast_camera() -> Camera {
        Camera::look_at(
            Point3::new(5.0, 20.0, -70.0),
            Point3::new(10.0, 0.0, 0.0),
            Vector3::y(),
            1500.0,
            ImageSize::new(1280, 720),
        )
        .unwrap()
    }

    fn pairs_for(camera: &Camera, world: &[Point3<f64>]) -> Vec<Correspondence> {
        world
            .iter()
            .map(|w| Correspondence {
                world: *w,
                pixel: camera.project(w).unwrap(),
            })
            .collect()
    }

    #[test]
    fn exact_four_points_recover_focal() {
        let cam = broadcast_camera();
        let world = [
            Point3::new(-10.0, 0.0, -20.16),
            Point3::new(36.0, 0.0, -20.16),
            Point3::new(36.0, 0.0, 20.16),
            Point3::new(0.0, 0.0, 9.15),
        ];
        let pairs = pairs_for(&cam, &world);
        let est = init_camera_from_correspondences(&pairs, cam.image_size).unwrap();
        assert!((est.focal - cam.focal).abs() / cam.focal < 0.01, "{}", est.focal);
        assert!(reprojection_rmse(&est, &pairs) <= 2.0);
    }

    #[test]
    fn collinear_points_rejected() {
        let cam = broadcast_camera();
        let world: Vec<_> = (0..5).map(|i| Point3::new(i as f64 * 5.0, 0.0, 0.0)).collect();
        let pairs = pairs_for(&cam, &world);
        assert!(matches!(
            init_camera_from_correspondences(&pairs, cam.image_size),
            Err(Error::DegenerateCorrespondences(_))
        ));
    }

    #[test]
    fn three_of_four_collinear_rejected() {
        let cam = broadcast_camera();
        let world = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(10.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 10.0),
        ];
        let pairs = pairs_for(&cam, &world);
        assert!(init_camera_from_correspondences(&pairs, cam.image_size).is_err());
    }

    #[test]
    fn noisy_eight_points_monte_carlo() {
        let cam = broadcast_camera();
        let world = [
            Point3::new(-20.0, 0.0, -34.0),
            Point3::new(20.0, 0.0, -34.0),
            Point3::new(0.0, 0.0, -9.15),
            Point3::new(0.0, 0.0, 9.15),
            Point3::new(36.0, 0.0, -20.16),
            Point3::new(36.0, 0.0, 20.16),
            Point3::new(47.0, 0.0, -9.16),
            Point3::new(-15.0, 0.0, 25.0),
        ];
        let clean = pairs_for(&cam, &world);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut total = 0.0;
        for _ in 0..100 {
            let noisy: Vec<_> = clean
                .iter()
                .map(|c| Correspondence {
                    world: c.world,
                    pixel: c.pixel + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)),
                })
                .collect();
            let est = init_camera_from_correspondences(&noisy, cam.image_size).unwrap();
            let rmse = reprojection_rmse(&est, &noisy);
            assert!(rmse <= 3.0, "rmse {rmse}");
            total += rmse;
        }
        assert!(total / 100.0 < 3.0);
    }
}
