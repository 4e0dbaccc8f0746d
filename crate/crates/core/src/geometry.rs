//! Pinhole and raster-pipeline camera models.
//!
//! World frame is right-handed with `y` up and the pitch in the `y = 0` plane.
//! Pinhole camera space has `x` right, `y` down and `z` forward, so image rows
//! grow downward. The raster (OpenGL-style) eye space looks down `-z` with `y`
//! up; NDC `y` is therefore `1 - 2v/H` for a pixel row coordinate `v`.
//! Buffer depth is `0.5 * z_ndc + 0.5`.

use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, UnitQuaternion, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image extent in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    pub fn num_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl From<[u32; 2]> for ImageSize {
    fn from(v: [u32; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<ImageSize> for [u32; 2] {
    fn from(s: ImageSize) -> Self {
        [s.width, s.height]
    }
}

/// Center of pixel `(x, y)` in continuous image coordinates.
#[inline]
pub fn pixel_center(x: usize, y: usize) -> Vector2<f64> {
    Vector2::new(x as f64 + 0.5, y as f64 + 0.5)
}

/// Rotation matrix for an axis-angle vector.
pub fn rotation_matrix(rotation: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_scaled_axis(*rotation).into_inner()
}

/// Axis-angle vector with angle in `[0, pi]` for a rotation matrix.
pub fn rotation_vector(matrix: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(nearest_rotation(matrix)));
    // Keep the scalar part non-negative so the angle stays in [0, pi].
    let q = if q.w < 0.0 { UnitQuaternion::new_unchecked(-q.into_inner()) } else { q };
    let imag = q.imag();
    let s = imag.norm();
    if s < 1e-300 {
        return Vector3::zeros();
    }
    imag * (2.0 * s.atan2(q.w) / s)
}

/// Nearest rotation (in Frobenius norm) to an arbitrary 3x3 matrix.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Angle in radians between two rotations.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a * b.transpose();
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos()
}

/// Pinhole broadcast camera: `X_cam = R X + t`, `u = c + f (x/z, y/z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub focal: f64,
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
    pub principal_point: Vector2<f64>,
    pub image_size: ImageSize,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    focal: f64,
    rotation: [f64; 3],
    translation: [f64; 3],
    principal_point: [f64; 2],
    image_size: ImageSize,
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Self> {
        Camera::with_principal_point(
            r.focal,
            r.rotation.into(),
            r.translation.into(),
            r.principal_point.into(),
            r.image_size,
        )
    }
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        CameraRecord {
            focal: c.focal,
            rotation: c.rotation.into(),
            translation: c.translation.into(),
            principal_point: c.principal_point.into(),
            image_size: c.image_size,
        }
    }
}

/// Camera ray in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Result<Self> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput("ray direction must be nonzero".into()));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    pub fn at(&self, s: f64) -> Point3<f64> {
        self.origin + self.direction * s
    }
}

impl Camera {
    /// Camera with the principal point at the image center.
    pub fn new(
        focal: f64,
        rotation: Vector3<f64>,
        translation: Vector3<f64>,
        image_size: ImageSize,
    ) -> Result<Self> {
        Self::with_principal_point(focal, rotation, translation, image_size.center(), image_size)
    }

    pub fn with_principal_point(
        focal: f64,
        rotation: Vector3<f64>,
        translation: Vector3<f64>,
        principal_point: Vector2<f64>,
        image_size: ImageSize,
    ) -> Result<Self> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(Error::InvalidCamera(format!("focal must be positive, got {focal}")));
        }
        if image_size.width == 0 || image_size.height == 0 {
            return Err(Error::InvalidCamera("image size must be positive".into()));
        }
        if !(rotation.iter().chain(translation.iter()).chain(principal_point.iter()))
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidCamera("non-finite pose".into()));
        }
        Ok(Self {
            focal,
            rotation: canonical_rotation(rotation),
            translation,
            principal_point,
            image_size,
        })
    }

    /// Camera at `eye` looking at `target`; `up` disambiguates roll.
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        focal: f64,
        image_size: ImageSize,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("up vector parallel to view direction".into()))?;
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye.coords);
        Self::new(focal, rotation_vector(&r), t, image_size)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rotation_matrix(&self.rotation)
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation_matrix().transpose() * self.translation))
    }

    pub fn to_camera_space(&self, point: &Point3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * point.coords + self.translation
    }

    /// Camera-space depth of a world point.
    pub fn depth_of(&self, point: &Point3<f64>) -> f64 {
        self.to_camera_space(point).z
    }

    pub fn project(&self, point: &Point3<f64>) -> Result<Vector2<f64>> {
        let pc = self.to_camera_space(point);
        project_camera_space(self.focal, &self.principal_point, &pc)
    }

    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Point3<f64>> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidDepth(depth));
        }
        let pc = Vector3::new(
            (pixel.x - self.principal_point.x) / self.focal * depth,
            (pixel.y - self.principal_point.y) / self.focal * depth,
            depth,
        );
        Ok(Point3::from(
            self.rotation_matrix().transpose() * (pc - self.translation),
        ))
    }

    /// World-space ray through a continuous pixel coordinate.
    pub fn ray(&self, pixel: &Vector2<f64>) -> Ray {
        let d = Vector3::new(
            (pixel.x - self.principal_point.x) / self.focal,
            (pixel.y - self.principal_point.y) / self.focal,
            1.0,
        );
        Ray {
            origin: self.center(),
            direction: (self.rotation_matrix().transpose() * d).normalize(),
        }
    }

    pub fn ray_ground_intersect(&self, pixel: &Vector2<f64>) -> Result<Point3<f64>> {
        ray_ground_intersect(self, pixel)
    }
}

fn canonical_rotation(r: Vector3<f64>) -> Vector3<f64> {
    if r.norm() < std::f64::consts::PI {
        r
    } else {
        rotation_vector(&rotation_matrix(&r))
    }
}

#[inline]
pub(crate) fn project_camera_space(
    focal: f64,
    principal_point: &Vector2<f64>,
    pc: &Vector3<f64>,
) -> Result<Vector2<f64>> {
    if pc.z <= 1e-9 {
        return Err(Error::BehindCamera { z: pc.z });
    }
    Ok(Vector2::new(
        principal_point.x + focal * pc.x / pc.z,
        principal_point.y + focal * pc.y / pc.z,
    ))
}

pub fn project(camera: &Camera, point: &Point3<f64>) -> Result<Vector2<f64>> {
    camera.project(point)
}

pub fn unproject(camera: &Camera, pixel: &Vector2<f64>, depth: f64) -> Result<Point3<f64>> {
    camera.unproject(pixel, depth)
}

/// Intersection of a pixel's ray with the ground plane `y = 0`.
///
/// The returned point has `y` set to exactly zero.
pub fn ray_ground_intersect(camera: &Camera, pixel: &Vector2<f64>) -> Result<Point3<f64>> {
    let ray = camera.ray(pixel);
    let dy = ray.direction.y;
    if dy.abs() < 1e-9 {
        return Err(Error::ParallelRay);
    }
    let s = -ray.origin.y / dy;
    if s <= 0.0 {
        return Err(Error::IntersectionBehindCamera);
    }
    let p = ray.at(s);
    Ok(Point3::new(p.x, 0.0, p.z))
}

/// Symmetric perspective projection matrix for a pinhole of `focal` pixels.
pub fn gl_projection(focal: f64, image_size: ImageSize, z_near: f64, z_far: f64) -> Result<Matrix4<f64>> {
    if !(focal.is_finite() && focal > 0.0) {
        return Err(Error::InvalidFrustum(format!("focal must be positive, got {focal}")));
    }
    if !(z_near.is_finite() && z_far.is_finite() && 0.0 < z_near && z_near < z_far) {
        return Err(Error::InvalidFrustum(format!(
            "need 0 < z_near < z_far, got {z_near}, {z_far}"
        )));
    }
    if image_size.width == 0 || image_size.height == 0 {
        return Err(Error::InvalidFrustum("empty image".into()));
    }
    let w = image_size.width as f64;
    let h = image_size.height as f64;
    let mut m = Matrix4::zeros();
    m[(0, 0)] = 2.0 * focal / w;
    m[(1, 1)] = 2.0 * focal / h;
    m[(2, 2)] = -(z_far + z_near) / (z_far - z_near);
    m[(2, 3)] = -2.0 * z_far * z_near / (z_far - z_near);
    m[(3, 2)] = -1.0;
    Ok(m)
}

/// Flip from pinhole camera axes (y down, z forward) to raster eye axes.
pub fn pinhole_to_eye() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, 1.0))
}

/// Modelview + projection pair of a raster graphics pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GlCameraRecord", into = "GlCameraRecord")]
pub struct GlCamera {
    pub modelview: Matrix4<f64>,
    pub projection: Matrix4<f64>,
    pub z_near: f64,
    pub z_far: f64,
    pub image_size: ImageSize,
}

#[derive(Serialize, Deserialize)]
struct GlCameraRecord {
    modelview: Vec<f64>,
    projection: Vec<f64>,
    z_near: f64,
    z_far: f64,
    image_size: ImageSize,
}

fn matrix_from_row_major(v: &[f64]) -> Result<Matrix4<f64>> {
    if v.len() != 16 {
        return Err(Error::InvalidCamera(format!("expected 16 matrix entries, got {}", v.len())));
    }
    Ok(Matrix4::from_row_slice(v))
}

fn row_major(m: &Matrix4<f64>) -> Vec<f64> {
    (0..4).flat_map(|r| (0..4).map(move |c| m[(r, c)])).collect()
}

impl TryFrom<GlCameraRecord> for GlCamera {
    type Error = Error;

    fn try_from(r: GlCameraRecord) -> Result<Self> {
        GlCamera::new(
            matrix_from_row_major(&r.modelview)?,
            matrix_from_row_major(&r.projection)?,
            r.z_near,
            r.z_far,
            r.image_size,
        )
    }
}

impl From<GlCamera> for GlCameraRecord {
    fn from(c: GlCamera) -> Self {
        GlCameraRecord {
            modelview: row_major(&c.modelview),
            projection: row_major(&c.projection),
            z_near: c.z_near,
            z_far: c.z_far,
            image_size: c.image_size,
        }
    }
}

const PERSPECTIVE_SLOTS: [(usize, usize); 5] = [(0, 0), (1, 1), (2, 2), (2, 3), (3, 2)];

impl GlCamera {
    pub fn new(
        modelview: Matrix4<f64>,
        projection: Matrix4<f64>,
        z_near: f64,
        z_far: f64,
        image_size: ImageSize,
    ) -> Result<Self> {
        if !(0.0 < z_near && z_near < z_far && z_far.is_finite()) {
            return Err(Error::InvalidFrustum(format!(
                "need 0 < z_near < z_far, got {z_near}, {z_far}"
            )));
        }
        let r = modelview.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidCamera("modelview rotation is not orthonormal".into()));
        }
        if modelview.fixed_view::<1, 4>(3, 0) != Matrix4::<f64>::identity().fixed_view::<1, 4>(3, 0) {
            return Err(Error::InvalidCamera("modelview bottom row must be [0 0 0 1]".into()));
        }
        for r in 0..4 {
            for c in 0..4 {
                let expected_nonzero = PERSPECTIVE_SLOTS.contains(&(r, c));
                if expected_nonzero != (projection[(r, c)] != 0.0) {
                    return Err(Error::InvalidCamera(format!(
                        "projection entry ({r},{c}) breaks the perspective sparsity pattern"
                    )));
                }
            }
        }
        Ok(Self {
            modelview,
            projection,
            z_near,
            z_far,
            image_size,
        })
    }

    /// Raster camera equivalent to a pinhole camera with a centered principal point.
    pub fn from_camera(camera: &Camera, z_near: f64, z_far: f64) -> Result<Self> {
        if (camera.principal_point - camera.image_size.center()).amax() > 1e-6 {
            return Err(Error::InvalidCamera(
                "raster cameras require a centered principal point".into(),
            ));
        }
        let projection = gl_projection(camera.focal, camera.image_size, z_near, z_far)?;
        Self::new(
            modelview_from_pose(&camera.rotation, &camera.translation),
            projection,
            z_near,
            z_far,
            camera.image_size,
        )
    }

    pub fn view_projection(&self) -> Matrix4<f64> {
        self.projection * self.modelview
    }

    /// Precomputes `M_mv^-1 M_proj^-1` for repeated unprojection.
    pub fn unprojector(&self) -> Result<NdcUnprojector> {
        let p_inv = self.projection.try_inverse().ok_or(Error::SingularCamera)?;
        let mv_inv = self.modelview.try_inverse().ok_or(Error::SingularCamera)?;
        Ok(NdcUnprojector {
            inverse: mv_inv * p_inv,
            image_size: self.image_size,
        })
    }

    /// Camera-space (positive forward) depth of a world point.
    pub fn eye_depth(&self, point: &Point3<f64>) -> f64 {
        -(self.modelview * point.to_homogeneous()).z
    }

    /// Linear depth for a buffer value.
    pub fn linear_depth(&self, buffer_depth: f64) -> f64 {
        let z_ndc = 2.0 * buffer_depth - 1.0;
        let (n, f) = (self.z_near, self.z_far);
        2.0 * n * f / (f + n - z_ndc * (f - n))
    }
}

/// `diag(1, -1, -1, 1) [R | t]` for a pinhole pose.
pub fn modelview_from_pose(rotation: &Vector3<f64>, translation: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation_matrix(rotation));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
    pinhole_to_eye() * m
}

/// Maps a pixel coordinate and buffer depth to homogeneous-free NDC.
pub fn pixel_to_ndc(pixel: &Vector2<f64>, depth: f64, image_size: ImageSize) -> Result<Vector3<f64>> {
    if !(0.0..=1.0).contains(&depth) {
        return Err(Error::InvalidDepth(depth));
    }
    Ok(Vector3::new(
        2.0 * pixel.x / image_size.width as f64 - 1.0,
        1.0 - 2.0 * pixel.y / image_size.height as f64,
        2.0 * depth - 1.0,
    ))
}

/// Projection of a world point into the raster pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdcSample {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

pub fn world_to_ndc(glcam: &GlCamera, point: &Point3<f64>) -> Result<NdcSample> {
    let clip = glcam.view_projection() * point.to_homogeneous();
    if clip.w <= 1e-12 {
        return Err(Error::BehindCamera { z: clip.w });
    }
    let ndc = clip.xyz() / clip.w;
    let size = glcam.image_size;
    Ok(NdcSample {
        pixel: Vector2::new(
            (ndc.x + 1.0) * size.width as f64 / 2.0,
            (1.0 - ndc.y) * size.height as f64 / 2.0,
        ),
        depth: 0.5 * ndc.z + 0.5,
    })
}

pub fn ndc_to_world(glcam: &GlCamera, pixel: &Vector2<f64>, ndc_depth: f64) -> Result<Point3<f64>> {
    glcam.unprojector()?.unproject(pixel, ndc_depth)
}

/// Cached inverse of a raster camera.
#[derive(Debug, Clone)]
pub struct NdcUnprojector {
    inverse: Matrix4<f64>,
    image_size: ImageSize,
}

impl NdcUnprojector {
    pub fn unproject(&self, pixel: &Vector2<f64>, ndc_depth: f64) -> Result<Point3<f64>> {
        let ndc = pixel_to_ndc(pixel, ndc_depth, self.image_size)?;
        let h = self.inverse * ndc.push(1.0);
        if h.w.abs() < 1e-12 || !h.w.is_finite() {
            return Err(Error::DegenerateUnprojection { w: h.w });
        }
        Ok(Point3::from(h.xyz() / h.w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_camera() -> Camera {
        Camera::with_principal_point(
            100.0,
            Vector3::zeros(),
            Vector3::zeros(),
            Vector2::new(320.0, 240.0),
            ImageSize::new(640, 480),
        )
        .unwrap()
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
        let r = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        Camera::new(rng.random_range(300.0..3000.0), r, t, ImageSize::new(1280, 720)).unwrap()
    }

    #[test]
    fn project_identity_examples() {
        let cam = identity_camera();
        let p = cam.project(&Point3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(p, Vector2::new(320.0, 240.0));
        let p = cam.project(&Point3::new(1.0, 0.0, 5.0)).unwrap();
        assert!((p - Vector2::new(340.0, 240.0)).norm() < 1e-12);
    }

    #[test]
    fn project_behind_camera_fails() {
        let cam = identity_camera();
        assert!(matches!(cam.project(&Point3::new(0.0, 0.0, 0.0)), Err(Error::BehindCamera { .. })));
        assert!(matches!(cam.project(&Point3::new(0.0, 0.0, -1.0)), Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn unproject_identity_examples() {
        let cam = identity_camera();
        let p = cam.unproject(&Vector2::new(320.0, 240.0), 5.0).unwrap();
        assert!((p - Point3::new(0.0, 0.0, 5.0)).norm() < 1e-12);
        let p = cam.unproject(&Vector2::new(340.0, 240.0), 5.0).unwrap();
        assert!((p - Point3::new(1.0, 0.0, 5.0)).norm() < 1e-12);
        assert!(matches!(cam.unproject(&Vector2::new(0.0, 0.0), 0.0), Err(Error::InvalidDepth(_))));
    }

    #[test]
    fn project_unproject_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let cam = random_camera(&mut rng);
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let depth = rng.random_range(0.5..200.0);
            let x = cam.unproject(&px, depth).unwrap();
            assert!((cam.depth_of(&x) - depth).abs() < 1e-9);
            assert!((cam.project(&x).unwrap() - px).norm() < 1e-6);
        }
    }

    #[test]
    fn rotation_matrices_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let m = rotation_matrix(&r);
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn rotation_is_canonicalized() {
        let cam = Camera::new(100.0, Vector3::new(0.0, 4.0, 0.0), Vector3::zeros(), ImageSize::new(10, 10)).unwrap();
        assert!(cam.rotation.norm() < std::f64::consts::PI);
        assert!((cam.rotation_matrix() - rotation_matrix(&Vector3::new(0.0, 4.0, 0.0))).amax() < 1e-12);
    }

    #[test]
    fn downward_camera_hits_origin() {
        let cam = Camera::look_at(
            Point3::new(0.0, 10.0, 0.0),
            Point3::origin(),
            Vector3::z(),
            500.0,
            ImageSize::new(640, 480),
        )
        .unwrap();
        let p = ray_ground_intersect(&cam, &cam.principal_point).unwrap();
        assert!(p.coords.norm() < 1e-9);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn upward_camera_fails() {
        let cam = Camera::look_at(
            Point3::new(0.0, 10.0, 0.0),
            Point3::new(0.0, 20.0, 10.0),
            Vector3::y(),
            500.0,
            ImageSize::new(640, 480),
        )
        .unwrap();
        assert!(matches!(
            ray_ground_intersect(&cam, &cam.principal_point),
            Err(Error::IntersectionBehindCamera)
        ));
    }

    #[test]
    fn horizontal_ray_is_parallel() {
        let cam = Camera::look_at(
            Point3::new(0.0, 10.0, 0.0),
            Point3::new(0.0, 10.0, 10.0),
            Vector3::y(),
            500.0,
            ImageSize::new(640, 480),
        )
        .unwrap();
        assert!(matches!(ray_ground_intersect(&cam, &cam.principal_point), Err(Error::ParallelRay)));
    }

    #[test]
    fn gl_projection_near_far_mapping() {
        let size = ImageSize::new(640, 480);
        let p = gl_projection(500.0, size, 0.5, 300.0).unwrap();
        for (z, expected) in [(0.5, -1.0), (300.0, 1.0)] {
            let clip = p * Vector4::new(0.0, 0.0, -z, 1.0);
            assert!((clip.z / clip.w - expected).abs() < 1e-12);
        }
        assert!(gl_projection(500.0, size, 0.0, 1.0).is_err());
        assert!(gl_projection(500.0, size, 2.0, 1.0).is_err());
        assert!(gl_projection(-1.0, size, 1.0, 2.0).is_err());
    }

    #[test]
    fn matrix_path_matches_pinhole() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let cam = random_camera(&mut rng);
            let gl = GlCamera::from_camera(&cam, 0.1, 1000.0).unwrap();
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let x = cam.unproject(&px, rng.random_range(1.0..500.0)).unwrap();
            let s = world_to_ndc(&gl, &x).unwrap();
            assert!((s.pixel - cam.project(&x).unwrap()).norm() < 1e-6);
        }
    }

    #[test]
    fn ndc_round_trip_and_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let cam = random_camera(&mut rng);
            let (n, f) = (rng.random_range(0.1..2.0), rng.random_range(100.0..2000.0));
            let gl = GlCamera::from_camera(&cam, n, f).unwrap();
            let px = Vector2::new(rng.random_range(0.0..1280.0), rng.random_range(0.0..720.0));
            let x = cam.unproject(&px, rng.random_range(n..f.min(300.0))).unwrap();
            let s = world_to_ndc(&gl, &x).unwrap();
            let back = ndc_to_world(&gl, &s.pixel, s.depth).unwrap();
            assert!((back - x).norm() < 1e-6, "{}", (back - x).norm());

            let near = ndc_to_world(&gl, &px, 0.0).unwrap();
            assert!((cam.depth_of(&near) - n).abs() < 1e-6);
            let far = ndc_to_world(&gl, &px, 1.0).unwrap();
            assert!((cam.depth_of(&far) - f).abs() < 1e-3);
        }
    }

    #[test]
    fn glcamera_rejects_bad_matrices() {
        let size = ImageSize::new(64, 64);
        let p = gl_projection(50.0, size, 1.0, 10.0).unwrap();
        let mut skew = Matrix4::identity();
        skew[(0, 1)] = 0.5;
        assert!(GlCamera::new(skew, p, 1.0, 10.0, size).is_err());
        let mut q = p;
        q[(0, 2)] = 0.1;
        assert!(GlCamera::new(Matrix4::identity(), q, 1.0, 10.0, size).is_err());
        assert!(GlCamera::new(Matrix4::identity(), p, 1.0, 10.0, size).is_ok());
    }

    #[test]
    fn json_schemas() {
        let cam = identity_camera();
        let v: serde_json::Value = serde_json::to_value(&cam).unwrap();
        assert_eq!(v["principal_point"], serde_json::json!([320.0, 240.0]));
        assert_eq!(v["image_size"], serde_json::json!([640, 480]));
        let back: Camera = serde_json::from_value(v).unwrap();
        assert_eq!(back, cam);

        let gl = GlCamera::from_camera(&identity_camera_centered(), 1.0, 100.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&gl).unwrap();
        assert_eq!(v["modelview"].as_array().unwrap().len(), 16);
        assert_eq!(v["projection"][14], serde_json::json!(-1.0));
        let back: GlCamera = serde_json::from_value(v).unwrap();
        assert_eq!(back, gl);
    }

    fn identity_camera_centered() -> Camera {
        Camera::new(100.0, Vector3::zeros(), Vector3::zeros(), ImageSize::new(640, 480)).unwrap()
    }

    #[test]
    fn pixel_to_ndc_conventions() {
        let size = ImageSize::new(640, 480);
        assert_eq!(pixel_to_ndc(&Vector2::new(0.0, 0.0), 0.0, size).unwrap(), Vector3::new(-1.0, 1.0, -1.0));
        assert_eq!(pixel_to_ndc(&size.center(), 0.5, size).unwrap(), Vector3::zeros());
        assert!(pixel_to_ndc(&size.center(), 1.5, size).is_err());
    }
}
