//! Pinhole camera model, rigid camera-from-world transforms and LiDAR depth
//! rendering.
//!
//! Depth is always the camera-frame `z` coordinate, never the ray length, so
//! that [`image_to_world`] is an exact inverse of
//! `camera_to_image ∘ world_to_camera`.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use thiserror::Error;

/// Tolerance used when validating the rotation block of an extrinsic matrix.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("stride must be at least 1")]
    InvalidStride,
}

/// Intrinsics and extrinsics of a single rectified pinhole camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraCalibration {
    /// Builds a calibration from intrinsics and a row-major 4×4
    /// camera-from-world matrix, validating every invariant.
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        cam_from_world: [f64; 16],
    ) -> Result<Self, GeometryError> {
        let invalid = |msg: String| Err(GeometryError::InvalidCalibration(msg));
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return invalid(format!("focal lengths must be positive (fx={fx}, fy={fy})"));
        }
        if width == 0 || height == 0 {
            return invalid("image size must be non-zero".into());
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return invalid(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            ));
        }
        if cam_from_world.iter().any(|v| !v.is_finite()) {
            return invalid("extrinsic matrix has non-finite entries".into());
        }
        let m = Matrix4::from_row_slice(&cam_from_world);
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return invalid(format!("bottom row must be [0 0 0 1], got {bottom:?}"));
        }
        let rotation: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho_err > ROTATION_TOLERANCE {
            return invalid(format!("rotation is not orthonormal (error {ortho_err:e})"));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return invalid(format!("rotation determinant is {det}, expected +1"));
        }
        let translation = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        })
    }

    /// Identity extrinsics: the camera frame coincides with the world frame.
    pub fn with_identity_pose(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let mut m = [0.0; 16];
        m[0] = 1.0;
        m[5] = 1.0;
        m[10] = 1.0;
        m[15] = 1.0;
        Self::new(fx, fy, cx, cy, width, height, m)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Row-major 4×4 camera-from-world matrix.
    pub fn cam_from_world(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x, //
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y, //
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z, //
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Camera center expressed in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// World-frame direction of the ray through pixel `(u, v)`, scaled so its
    /// camera-frame `z` component is exactly 1. Marching `t` along it gives a
    /// point at depth `t`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let dir_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        self.rotation.transpose() * dir_cam
    }

    /// Grid dimensions of this camera at feature stride `stride`.
    pub fn grid_size(&self, stride: u32) -> (usize, usize) {
        ((self.width / stride) as usize, (self.height / stride) as usize)
    }
}

/// Applies the rigid camera-from-world transform, `R·p + t`.
pub fn world_to_camera(p: &Point3<f64>, calib: &CameraCalibration) -> Point3<f64> {
    Point3::from(calib.rotation * p.coords + calib.translation)
}

/// Projects a camera-frame point to pixel coordinates. No bounds clamp is
/// applied; callers filter out-of-image results.
pub fn camera_to_image(
    pc: &Point3<f64>,
    calib: &CameraCalibration,
) -> Result<(f64, f64, f64), GeometryError> {
    if !(pc.z > 0.0) {
        return Err(GeometryError::BehindCamera(pc.z));
    }
    let u = calib.fx * pc.x / pc.z + calib.cx;
    let v = calib.fy * pc.y / pc.z + calib.cy;
    Ok((u, v, pc.z))
}

/// Back-projects pixel `(u, v)` at camera-frame depth `depth` into the world.
pub fn image_to_world(
    u: f64,
    v: f64,
    depth: f64,
    calib: &CameraCalibration,
) -> Result<Point3<f64>, GeometryError> {
    if !(depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    let pc = Vector3::new(
        (u - calib.cx) * depth / calib.fx,
        (v - calib.cy) * depth / calib.fy,
        depth,
    );
    Ok(Point3::from(calib.rotation.transpose() * (pc - calib.translation)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Point3<f64>,
    pub intensity: f64,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self {
            position: Point3::new(x, y, z),
            intensity,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| {
            p.position.iter().all(|c| c.is_finite()) && p.intensity.is_finite()
        })
    }
}

/// LiDAR depth rendered into the feature grid. A depth of `0.0` means no
/// sample landed in that pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl SparseDepthMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.depth.is_empty() {
            0.0
        } else {
            self.valid_count() as f64 / self.depth.len() as f64
        }
    }
}

/// Z-buffers a point cloud into a sparse depth map at feature stride
/// `stride`. The nearest return wins when several points share a pixel.
pub fn render_sparse_depth(
    cloud: &PointCloud,
    calib: &CameraCalibration,
    stride: u32,
) -> Result<SparseDepthMap, GeometryError> {
    if stride == 0 {
        return Err(GeometryError::InvalidStride);
    }
    let (gw, gh) = calib.grid_size(stride);
    let mut map = SparseDepthMap::empty(gw, gh);
    let (w, h) = (calib.width as f64, calib.height as f64);
    let s = stride as f64;
    for point in &cloud.points {
        let pc = world_to_camera(&point.position, calib);
        let Ok((u, v, depth)) = camera_to_image(&pc, calib) else {
            continue;
        };
        if !(u >= 0.0 && u < w && v >= 0.0 && v < h) {
            continue;
        }
        let (gu, gv) = ((u / s).floor() as usize, (v / s).floor() as usize);
        // Trailing pixels of a width not divisible by the stride have no cell.
        if gu >= gw || gv >= gh {
            continue;
        }
        let slot = &mut map.depth[gv * gw + gu];
        if *slot == 0.0 || depth < *slot {
            *slot = depth;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simple_calib() -> CameraCalibration {
        CameraCalibration::with_identity_pose(100.0, 100.0, 200.0, 100.0, 400, 200).unwrap()
    }

    #[test]
    fn identity_extrinsics_pass_points_through() {
        let calib = simple_calib();
        let p = world_to_camera(&Point3::new(1.0, 2.0, 3.0), &calib);
        assert_eq!(p, Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn pure_translation() {
        let mut m = CameraCalibration::with_identity_pose(1.0, 1.0, 0.0, 0.0, 4, 4)
            .unwrap()
            .cam_from_world();
        m[11] = 5.0;
        let calib = CameraCalibration::new(1.0, 1.0, 0.0, 0.0, 4, 4, m).unwrap();
        assert_eq!(
            world_to_camera(&Point3::origin(), &calib),
            Point3::new(0.0, 0.0, 5.0)
        );
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let calib = CameraCalibration::with_identity_pose(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap();
        let (u, v, d) = camera_to_image(&Point3::new(0.0, 0.0, 2.0), &calib).unwrap();
        assert_eq!((u, v, d), (0.0, 0.0, 2.0));
    }

    #[test]
    fn pinhole_formula() {
        let (u, v, d) = camera_to_image(&Point3::new(1.0, 0.0, 2.0), &simple_calib()).unwrap();
        assert_eq!((u, v, d), (250.0, 100.0, 2.0));
    }

    #[test]
    fn behind_camera_is_rejected() {
        let calib = simple_calib();
        assert!(matches!(
            camera_to_image(&Point3::new(0.0, 0.0, 0.0), &calib),
            Err(GeometryError::BehindCamera(_))
        ));
        assert!(camera_to_image(&Point3::new(0.0, 0.0, -1.0), &calib).is_err());
    }

    #[test]
    fn principal_ray_back_projects_onto_axis() {
        let calib = simple_calib();
        let p = image_to_world(200.0, 100.0, 7.5, &calib).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 7.5));
        assert!(matches!(
            image_to_world(1.0, 1.0, 0.0, &calib),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn round_trip_fixed_point() {
        let calib = simple_calib();
        let p = Point3::new(10.0, -4.0, 7.0);
        let (u, v, d) = camera_to_image(&world_to_camera(&p, &calib), &calib).unwrap();
        let back = image_to_world(u, v, d, &calib).unwrap();
        assert_abs_diff_eq!((back - p).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn calibration_validation() {
        let ok = simple_calib().cam_from_world();
        assert!(CameraCalibration::new(0.0, 1.0, 1.0, 1.0, 4, 4, ok).is_err());
        assert!(CameraCalibration::new(1.0, 1.0, 4.0, 1.0, 4, 4, ok).is_err());
        let mut skew = ok;
        skew[1] = 0.1;
        assert!(CameraCalibration::new(1.0, 1.0, 1.0, 1.0, 4, 4, skew).is_err());
        // reflection: orthonormal but determinant -1
        let mut mirror = ok;
        mirror[0] = -1.0;
        assert!(CameraCalibration::new(1.0, 1.0, 1.0, 1.0, 4, 4, mirror).is_err());
        let mut bottom = ok;
        bottom[12] = 1.0;
        assert!(CameraCalibration::new(1.0, 1.0, 1.0, 1.0, 4, 4, bottom).is_err());
    }

    #[test]
    fn sparse_depth_of_empty_cloud_is_empty() {
        let map = render_sparse_depth(&PointCloud::default(), &simple_calib(), 4).unwrap();
        assert_eq!((map.width, map.height), (100, 50));
        assert_eq!(map.valid_fraction(), 0.0);
    }

    #[test]
    fn z_buffer_keeps_nearest_return() {
        let calib = simple_calib();
        let cloud = PointCloud::new(vec![
            LidarPoint::new(0.0, 0.0, 9.0, 0.5),
            LidarPoint::new(0.0, 0.0, 4.0, 0.5),
            LidarPoint::new(0.0, 0.0, -3.0, 0.5),
        ]);
        let map = render_sparse_depth(&cloud, &calib, 4).unwrap();
        assert_eq!(map.get(50, 25), 4.0);
        assert_eq!(map.valid_count(), 1);
    }

    #[test]
    fn off_image_points_are_dropped() {
        let calib = simple_calib();
        // u = 100 * 10 / 1 + 200 far right of the 400 px image
        let cloud = PointCloud::new(vec![LidarPoint::new(10.0, 0.0, 1.0, 0.2)]);
        let map = render_sparse_depth(&cloud, &calib, 1).unwrap();
        assert_eq!(map.valid_count(), 0);
        assert_eq!(
            render_sparse_depth(&cloud, &calib, 0),
            Err(GeometryError::InvalidStride)
        );
    }
}
