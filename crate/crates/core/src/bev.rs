//! Lifting selected camera features into 3D, range filtering, BEV max
//! pooling and LiDAR BEV rasterization.

use std::cmp::Ordering;

use nalgebra::Point3;
use thiserror::Error;

use crate::depthfill::DenseDepthMap;
use crate::geometry::{image_to_world, CameraCalibration, PointCloud};
use crate::heatmap::SelectedPixel;

/// Channels produced by [`rasterize_lidar_bev`].
pub const LIDAR_BEV_CHANNELS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BevError {
    #[error("invalid BEV grid config: {0}")]
    InvalidConfig(String),
    #[error("point ({x}, {y}, {z}) lies outside the BEV grid")]
    PointOutOfRange { x: f64, y: f64, z: f64 },
    #[error("grid {left:?} does not match grid {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("feature length {actual} differs from {expected}")]
    FeatureLength { expected: usize, actual: usize },
}

/// A camera feature lifted to world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePseudoPoint {
    pub position: Point3<f64>,
    pub feature: Vec<f32>,
    pub class_id: usize,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevGridConfig {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub z_range: (f64, f64),
    pub cell_size: f64,
}

impl Default for BevGridConfig {
    fn default() -> Self {
        Self {
            x_range: (-54.0, 54.0),
            y_range: (-54.0, 54.0),
            z_range: (-5.0, 3.0),
            cell_size: 0.6,
        }
    }
}

impl BevGridConfig {
    /// Cell counts along x and y. Fails unless both extents are integral
    /// multiples of the cell size.
    pub fn dims(&self) -> Result<(usize, usize), BevError> {
        let bad = |m: String| Err(BevError::InvalidConfig(m));
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return bad(format!("cell_size must be positive, got {}", self.cell_size));
        }
        let mut counts = [0usize; 2];
        for (i, (name, (lo, hi))) in [("x", self.x_range), ("y", self.y_range)]
            .into_iter()
            .enumerate()
        {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("{name}_range [{lo}, {hi}] is not well ordered"));
            }
            let n = (hi - lo) / self.cell_size;
            let rounded = n.round();
            if (n - rounded).abs() > 1e-9 * n.max(1.0) || rounded < 1.0 {
                return bad(format!(
                    "{name} extent {} is not a multiple of cell size {}",
                    hi - lo,
                    self.cell_size
                ));
            }
            counts[i] = rounded as usize;
        }
        let (zlo, zhi) = self.z_range;
        if !(zlo < zhi) {
            return bad(format!("z_range [{zlo}, {zhi}] is not well ordered"));
        }
        Ok((counts[0], counts[1]))
    }

    /// Closed-lower, open-upper containment test on all three axes.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let within = |x: f64, (lo, hi): (f64, f64)| x >= lo && x < hi;
        within(p.x, self.x_range) && within(p.y, self.y_range) && within(p.z, self.z_range)
    }

    /// Cell `(ix, iy)` for a point, or `None` outside the grid.
    pub fn cell_of(&self, p: &Point3<f64>, nx: usize, ny: usize) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let ix = ((p.x - self.x_range.0) / self.cell_size).floor() as usize;
        let iy = ((p.y - self.y_range.0) / self.cell_size).floor() as usize;
        // floor can land on nx for x just below the upper bound
        Some((ix.min(nx - 1), iy.min(ny - 1)))
    }
}

/// Dense BEV grid, cell-major with `channels` values per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFeatureGrid {
    pub nx: usize,
    pub ny: usize,
    pub channels: usize,
    pub values: Vec<f32>,
    pub occupancy: Vec<u32>,
}

impl BevFeatureGrid {
    pub fn zeros(nx: usize, ny: usize, channels: usize) -> Self {
        Self {
            nx,
            ny,
            channels,
            values: vec![0.0; nx * ny * channels],
            occupancy: vec![0; nx * ny],
        }
    }

    #[inline]
    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &[f32] {
        let start = self.cell_index(ix, iy) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn occupancy_at(&self, ix: usize, iy: usize) -> u32 {
        self.occupancy[self.cell_index(ix, iy)]
    }

    pub fn occupied_cells(&self) -> usize {
        self.occupancy.iter().filter(|o| **o > 0).count()
    }

    pub fn total_occupancy(&self) -> u64 {
        self.occupancy.iter().map(|o| *o as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LiftStats {
    pub lifted: usize,
    /// Pixels skipped because they fall outside the interpolation range.
    pub guard_dropped: usize,
    /// Pixels skipped because they index outside the depth map.
    pub out_of_bounds: usize,
}

/// Back-projects each selected pixel's center through its completed depth.
/// Pixels outside the interpolation range are skipped and counted.
pub fn lift_pixels(
    selected: &[SelectedPixel],
    dd: &DenseDepthMap,
    calib: &CameraCalibration,
    stride: u32,
) -> (Vec<FeaturePseudoPoint>, LiftStats) {
    lift_pixels_owned(selected.to_vec(), dd, calib, stride)
}

/// Same as [`lift_pixels`] but consumes the selection, moving feature
/// vectors instead of cloning them.
pub fn lift_pixels_owned(
    selected: Vec<SelectedPixel>,
    dd: &DenseDepthMap,
    calib: &CameraCalibration,
    stride: u32,
) -> (Vec<FeaturePseudoPoint>, LiftStats) {
    let mut stats = LiftStats::default();
    let mut out = Vec::with_capacity(selected.len());
    let s = stride as f64;
    for px in selected {
        if px.u >= dd.width || px.v >= dd.height {
            stats.out_of_bounds += 1;
            continue;
        }
        let depth = dd.get(px.u, px.v);
        if !dd.is_in_range(px.u, px.v) || !(depth > 0.0 && depth.is_finite()) {
            stats.guard_dropped += 1;
            continue;
        }
        let u = (px.u as f64 + 0.5) * s;
        let v = (px.v as f64 + 0.5) * s;
        let position = image_to_world(u, v, depth, calib).expect("depth checked positive");
        out.push(FeaturePseudoPoint {
            position,
            feature: px.feature,
            class_id: px.class_id,
            score: px.score,
        });
        stats.lifted += 1;
    }
    (out, stats)
}

pub fn range_filter(pts: Vec<FeaturePseudoPoint>, cfg: &BevGridConfig) -> Vec<FeaturePseudoPoint> {
    pts.into_iter().filter(|p| cfg.contains(&p.position)).collect()
}

/// Channel-wise maximum under IEEE total order, so pooling is independent of
/// input order even for signed zeros.
#[inline]
fn total_max(a: f32, b: f32) -> f32 {
    match a.total_cmp(&b) {
        Ordering::Less => b,
        _ => a,
    }
}

/// Max-pools pseudo-point features into BEV cells. Every point must already
/// lie inside the grid.
pub fn bev_max_pool(
    pts: &[FeaturePseudoPoint],
    cfg: &BevGridConfig,
    channels: usize,
) -> Result<BevFeatureGrid, BevError> {
    let (nx, ny) = cfg.dims()?;
    let mut grid = BevFeatureGrid::zeros(nx, ny, channels);
    for p in pts {
        if p.feature.len() != channels {
            return Err(BevError::FeatureLength {
                expected: channels,
                actual: p.feature.len(),
            });
        }
        let (ix, iy) = cfg.cell_of(&p.position, nx, ny).ok_or(BevError::PointOutOfRange {
            x: p.position.x,
            y: p.position.y,
            z: p.position.z,
        })?;
        let cell = grid.cell_index(ix, iy);
        let slot = &mut grid.values[cell * channels..(cell + 1) * channels];
        if grid.occupancy[cell] == 0 {
            slot.copy_from_slice(&p.feature);
        } else {
            for (s, &f) in slot.iter_mut().zip(&p.feature) {
                *s = total_max(*s, f);
            }
        }
        grid.occupancy[cell] += 1;
    }
    Ok(grid)
}

/// Hand-crafted LiDAR BEV features per cell: `log1p(count)`, max z, mean
/// intensity, mean z. Points outside the detection range are ignored.
pub fn rasterize_lidar_bev(cloud: &PointCloud, cfg: &BevGridConfig) -> Result<BevFeatureGrid, BevError> {
    let (nx, ny) = cfg.dims()?;
    let cells = nx * ny;
    let mut count = vec![0u32; cells];
    let mut max_z = vec![f64::NEG_INFINITY; cells];
    let mut sum_i = vec![0.0f64; cells];
    let mut sum_z = vec![0.0f64; cells];
    for p in &cloud.points {
        let Some((ix, iy)) = cfg.cell_of(&p.position, nx, ny) else {
            continue;
        };
        let c = iy * nx + ix;
        count[c] += 1;
        max_z[c] = max_z[c].max(p.position.z);
        sum_i[c] += p.intensity;
        sum_z[c] += p.position.z;
    }
    let mut grid = BevFeatureGrid::zeros(nx, ny, LIDAR_BEV_CHANNELS);
    for c in 0..cells {
        if count[c] == 0 {
            continue;
        }
        let n = count[c] as f64;
        let slot = &mut grid.values[c * LIDAR_BEV_CHANNELS..(c + 1) * LIDAR_BEV_CHANNELS];
        slot[0] = n.ln_1p() as f32;
        slot[1] = max_z[c] as f32;
        slot[2] = (sum_i[c] / n) as f32;
        slot[3] = (sum_z[c] / n) as f32;
        grid.occupancy[c] = count[c];
    }
    Ok(grid)
}

/// Channel concatenation, camera channels first.
pub fn concat_bev(camera: &BevFeatureGrid, lidar: &BevFeatureGrid) -> Result<BevFeatureGrid, BevError> {
    if (camera.nx, camera.ny) != (lidar.nx, lidar.ny) {
        return Err(BevError::DimensionMismatch {
            left: (camera.nx, camera.ny),
            right: (lidar.nx, lidar.ny),
        });
    }
    let channels = camera.channels + lidar.channels;
    let cells = camera.nx * camera.ny;
    let mut values = Vec::with_capacity(cells * channels);
    for c in 0..cells {
        values.extend_from_slice(&camera.values[c * camera.channels..(c + 1) * camera.channels]);
        values.extend_from_slice(&lidar.values[c * lidar.channels..(c + 1) * lidar.channels]);
    }
    let occupancy = camera
        .occupancy
        .iter()
        .zip(&lidar.occupancy)
        .map(|(a, b)| *a.max(b))
        .collect();
    Ok(BevFeatureGrid {
        nx: camera.nx,
        ny: camera.ny,
        channels,
        values,
        occupancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LidarPoint;

    fn pp(x: f64, y: f64, z: f64, feature: &[f32]) -> FeaturePseudoPoint {
        FeaturePseudoPoint {
            position: Point3::new(x, y, z),
            feature: feature.to_vec(),
            class_id: 0,
            score: 1.0,
        }
    }

    #[test]
    fn default_grid_dims() {
        assert_eq!(BevGridConfig::default().dims().unwrap(), (180, 180));
        let cfg = BevGridConfig {
            cell_size: 0.075,
            ..Default::default()
        };
        assert_eq!(cfg.dims().unwrap(), (1440, 1440));
        let bad = BevGridConfig {
            cell_size: 0.7,
            ..Default::default()
        };
        assert!(bad.dims().is_err());
    }

    #[test]
    fn range_bounds_are_half_open() {
        let cfg = BevGridConfig::default();
        let kept = range_filter(
            vec![
                pp(0.0, 0.0, 0.0, &[1.0]),
                pp(54.0, 0.0, 0.0, &[1.0]),
                pp(-54.0, -54.0, -5.0, &[1.0]),
                pp(0.0, 0.0, 3.0, &[1.0]),
            ],
            &cfg,
        );
        let xs: Vec<_> = kept.iter().map(|p| p.position.x).collect();
        assert_eq!(xs, vec![0.0, -54.0]);
    }

    #[test]
    fn singleton_cell_holds_its_feature() {
        let cfg = BevGridConfig::default();
        let grid = bev_max_pool(&[pp(0.1, 0.1, 0.0, &[1.0, 2.0, 3.0])], &cfg, 3).unwrap();
        assert_eq!(grid.cell(90, 90), &[1.0, 2.0, 3.0]);
        assert_eq!(grid.occupancy_at(90, 90), 1);
        assert_eq!(grid.occupied_cells(), 1);
    }

    #[test]
    fn pooling_takes_channelwise_max() {
        let cfg = BevGridConfig::default();
        let grid = bev_max_pool(
            &[pp(0.1, 0.1, 0.0, &[1.0, 3.0]), pp(0.2, 0.3, 1.0, &[2.0, 2.0])],
            &cfg,
            2,
        )
        .unwrap();
        assert_eq!(grid.cell(90, 90), &[2.0, 3.0]);
        assert_eq!(grid.occupancy_at(90, 90), 2);
    }

    #[test]
    fn negative_features_are_not_clamped_to_zero() {
        let cfg = BevGridConfig::default();
        let grid = bev_max_pool(&[pp(0.0, 0.0, 0.0, &[-1.0])], &cfg, 1).unwrap();
        assert_eq!(grid.cell(90, 90), &[-1.0]);
    }

    #[test]
    fn pooling_rejects_out_of_range_points() {
        let cfg = BevGridConfig::default();
        assert!(matches!(
            bev_max_pool(&[pp(60.0, 0.0, 0.0, &[1.0])], &cfg, 1),
            Err(BevError::PointOutOfRange { .. })
        ));
        assert!(matches!(
            bev_max_pool(&[pp(0.0, 0.0, 0.0, &[1.0, 2.0])], &cfg, 1),
            Err(BevError::FeatureLength { .. })
        ));
    }

    #[test]
    fn lidar_single_point_statistics() {
        let cfg = BevGridConfig::default();
        let cloud = PointCloud::new(vec![LidarPoint::new(0.0, 0.0, 1.0, 0.5)]);
        let grid = rasterize_lidar_bev(&cloud, &cfg).unwrap();
        assert_eq!(grid.cell(90, 90), &[(1.0f64).ln_1p() as f32, 1.0, 0.5, 1.0]);
        assert_eq!(grid.occupied_cells(), 1);
        let empty = rasterize_lidar_bev(&PointCloud::default(), &cfg).unwrap();
        assert!(empty.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn concatenation_puts_camera_first() {
        let mut cam = BevFeatureGrid::zeros(2, 1, 2);
        cam.values = vec![1.0, 2.0, 3.0, 4.0];
        cam.occupancy = vec![1, 0];
        let mut lidar = BevFeatureGrid::zeros(2, 1, 4);
        lidar.values = (10..18).map(|v| v as f32).collect();
        lidar.occupancy = vec![0, 5];
        let fused = concat_bev(&cam, &lidar).unwrap();
        assert_eq!(fused.channels, 6);
        assert_eq!(fused.cell(0, 0), &[1.0, 2.0, 10.0, 11.0, 12.0, 13.0]);
        assert_eq!(fused.cell(1, 0), &[3.0, 4.0, 14.0, 15.0, 16.0, 17.0]);
        assert_eq!(fused.occupancy, vec![1, 5]);

        let zero_cam = BevFeatureGrid::zeros(2, 1, 2);
        let fused = concat_bev(&zero_cam, &lidar).unwrap();
        for ix in 0..2 {
            assert_eq!(&fused.cell(ix, 0)[2..], lidar.cell(ix, 0));
        }
        assert!(concat_bev(&BevFeatureGrid::zeros(3, 1, 2), &lidar).is_err());
    }

    #[test]
    fn lifting_on_the_principal_ray() {
        let calib = CameraCalibration::with_identity_pose(100.0, 100.0, 202.0, 102.0, 404, 204).unwrap();
        // grid pixel (50, 25) at stride 4 has center (202, 102)
        let mut dd = DenseDepthMap::masked(101, 51, 300.0);
        let idx = 25 * 101 + 50;
        dd.depth[idx] = 10.0;
        dd.in_range[idx] = true;
        let sel = vec![
            SelectedPixel {
                u: 50,
                v: 25,
                class_id: 3,
                score: 0.8,
                feature: vec![0.5, -1.0],
            },
            SelectedPixel {
                u: 0,
                v: 0,
                class_id: 0,
                score: 0.9,
                feature: vec![0.0, 0.0],
            },
        ];
        let (pts, stats) = lift_pixels(&sel, &dd, &calib, 4);
        assert_eq!(stats, LiftStats { lifted: 1, guard_dropped: 1, out_of_bounds: 0 });
        assert_eq!(pts[0].position, Point3::new(0.0, 0.0, 10.0));
        assert_eq!(pts[0].feature, vec![0.5, -1.0]);
        assert_eq!((pts[0].class_id, pts[0].score), (3, 0.8));
        let (owned, owned_stats) = lift_pixels_owned(sel, &dd, &calib, 4);
        assert_eq!((owned, owned_stats), (pts, stats));
    }

    #[test]
    fn sentinel_depth_is_outside_the_detection_range() {
        let calib = CameraCalibration::with_identity_pose(100.0, 100.0, 200.0, 100.0, 400, 200).unwrap();
        let p = image_to_world(0.0, 0.0, 300.0, &calib).unwrap();
        assert!(!BevGridConfig::default().contains(&p));
    }
}
