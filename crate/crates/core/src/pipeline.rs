//! Frame orchestration: per-camera depth completion, keypoint-gated
//! selection and lifting, BEV pooling, LiDAR rasterization and fusion.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{apply_to_cloud, replay_on_pseudo_points, AugmentationParams};
use crate::bev::{
    bev_max_pool, concat_bev, lift_pixels_owned, range_filter, rasterize_lidar_bev, BevError,
    BevFeatureGrid, BevGridConfig, FeaturePseudoPoint,
};
use crate::depthfill::{ipbasic_complete, DenseDepthMap, DepthError, DepthFillConfig};
use crate::geometry::{render_sparse_depth, CameraCalibration, GeometryError, PointCloud};
use crate::simscene::SimulatedFrame;
use crate::heatmap::{select_pixels, validate_threshold, FeatureMap, HeatmapError, KeypointHeatmap};

#[derive(Debug, Error)]
pub enum CameraStageError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame has no cameras")]
    NoCameras,
    #[error("camera {name}: {source}")]
    Camera {
        name: String,
        #[source]
        source: CameraStageError,
    },
    #[error(transparent)]
    Threshold(#[from] HeatmapError),
    #[error(transparent)]
    Bev(#[from] BevError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error("need at least 3 timing repetitions, got {0}")]
    TooFewRepetitions(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraInput {
    pub name: String,
    pub calib: CameraCalibration,
    pub heatmap: KeypointHeatmap,
    pub features: FeatureMap,
    /// Replaces LiDAR-seeded completion, e.g. with ground-truth depth.
    pub depth_override: Option<DenseDepthMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub cloud: PointCloud,
    pub cameras: Vec<CameraInput>,
    pub grid: BevGridConfig,
    pub depth_fill: DepthFillConfig,
    pub augmentation: Option<AugmentationParams>,
    pub threshold: f32,
}

impl FrameInput {
    /// Shared grid stride of every camera.
    pub fn stride(&self) -> u32 {
        self.cameras.first().map_or(1, |c| c.heatmap.stride)
    }

    /// Feature channels, taken from the first camera.
    pub fn feature_channels(&self) -> usize {
        self.cameras.first().map_or(0, |c| c.features.channels)
    }

    /// Wraps a simulated frame with default grid and depth settings. With
    /// `use_gt_depth`, each camera's exact depth replaces completion.
    pub fn from_simulated(frame: SimulatedFrame, use_gt_depth: bool, threshold: f32) -> Self {
        let cameras = frame
            .cameras
            .into_iter()
            .map(|c| CameraInput {
                name: c.name,
                calib: c.calib,
                heatmap: c.heatmap,
                features: c.features,
                depth_override: use_gt_depth.then_some(c.depth_gt),
            })
            .collect();
        Self {
            cloud: frame.cloud,
            cameras,
            grid: BevGridConfig::default(),
            depth_fill: DepthFillConfig::default(),
            augmentation: None,
            threshold,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        validate_threshold(self.threshold)?;
        self.depth_fill.validate()?;
        self.grid.dims()?;
        let first = self.cameras.first().ok_or(PipelineError::NoCameras)?;
        let (stride, channels) = (first.heatmap.stride, first.features.channels);
        for cam in &self.cameras {
            let fail = |msg: String| {
                Err(PipelineError::Camera {
                    name: cam.name.clone(),
                    source: CameraStageError::Shape(msg),
                })
            };
            if cam.heatmap.stride != stride {
                return fail(format!("stride {} differs from {stride}", cam.heatmap.stride));
            }
            if cam.features.channels != channels {
                return fail(format!(
                    "{} feature channels, expected {channels}",
                    cam.features.channels
                ));
            }
            let grid = cam.calib.grid_size(stride);
            if (cam.heatmap.width, cam.heatmap.height) != grid {
                return fail(format!(
                    "heatmap is {}x{}, calibration implies {}x{}",
                    cam.heatmap.width, cam.heatmap.height, grid.0, grid.1
                ));
            }
            if (cam.features.width, cam.features.height) != grid {
                return fail(format!(
                    "feature map is {}x{}, calibration implies {}x{}",
                    cam.features.width, cam.features.height, grid.0, grid.1
                ));
            }
            if let Some(dd) = &cam.depth_override {
                if (dd.width, dd.height) != grid {
                    return fail(format!(
                        "depth map is {}x{}, calibration implies {}x{}",
                        dd.width, dd.height, grid.0, grid.1
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-frame counters and wall times. `selected = lifted + guard_dropped`
/// and `lifted = pooled + range_dropped` hold exactly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameStats {
    pub threshold: f32,
    pub selected_per_camera: Vec<usize>,
    pub selected: usize,
    pub lifted: usize,
    /// Selected pixels outside the interpolation range.
    pub guard_dropped: usize,
    /// Lifted pseudo-points outside the detection range.
    pub range_dropped: usize,
    pub pooled: usize,
    pub occupied_cells: usize,
    pub depth_ms: f64,
    pub select_ms: f64,
    pub lift_ms: f64,
    pub pool_ms: f64,
    pub lidar_ms: f64,
    pub fuse_ms: f64,
}

impl FrameStats {
    /// Selection, lifting and pooling time; depth completion excluded.
    pub fn projection_ms(&self) -> f64 {
        self.select_ms + self.lift_ms + self.pool_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub camera: BevFeatureGrid,
    pub lidar: BevFeatureGrid,
    pub fused: BevFeatureGrid,
    pub stats: FrameStats,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn camera_error(cam: &CameraInput) -> impl Fn(CameraStageError) -> PipelineError + '_ {
    move |source| PipelineError::Camera {
        name: cam.name.clone(),
        source,
    }
}

/// Completed depth for one camera. A camera that receives no LiDAR return
/// gets a fully masked map, so nothing it selects is lifted.
pub fn camera_depth(
    cloud: &PointCloud,
    cam: &CameraInput,
    cfg: &DepthFillConfig,
    stride: u32,
) -> Result<DenseDepthMap, CameraStageError> {
    if let Some(dd) = &cam.depth_override {
        return Ok(dd.clone());
    }
    let sparse = render_sparse_depth(cloud, &cam.calib, stride)?;
    match ipbasic_complete(&sparse, cfg) {
        Err(DepthError::EmptyDepth) => Ok(DenseDepthMap::masked(
            sparse.width,
            sparse.height,
            cfg.sentinel_depth,
        )),
        other => Ok(other?),
    }
}

/// Depth completion for every camera, run in parallel; output order follows
/// camera order.
pub fn complete_all_depths(fi: &FrameInput) -> Result<Vec<DenseDepthMap>, PipelineError> {
    let stride = fi.stride();
    fi.cameras
        .par_iter()
        .map(|cam| camera_depth(&fi.cloud, cam, &fi.depth_fill, stride).map_err(camera_error(cam)))
        .collect()
}

struct Projection {
    camera: BevFeatureGrid,
    stats: FrameStats,
}

/// Selection through pooling for one threshold, cameras in order.
fn project(
    fi: &FrameInput,
    depths: &[DenseDepthMap],
    threshold: f32,
) -> Result<Projection, PipelineError> {
    let stride = fi.stride();
    let mut stats = FrameStats {
        threshold,
        ..Default::default()
    };
    let mut points: Vec<FeaturePseudoPoint> = Vec::new();
    for (cam, dd) in fi.cameras.iter().zip(depths) {
        let t0 = Instant::now();
        let selected = select_pixels(&cam.heatmap, &cam.features, threshold)
            .map_err(|e| camera_error(cam)(e.into()))?;
        stats.select_ms += elapsed_ms(t0);
        stats.selected_per_camera.push(selected.len());
        stats.selected += selected.len();

        let t1 = Instant::now();
        let (lifted, lift_stats) = lift_pixels_owned(selected, dd, &cam.calib, stride);
        stats.lift_ms += elapsed_ms(t1);
        stats.lifted += lift_stats.lifted;
        stats.guard_dropped += lift_stats.guard_dropped + lift_stats.out_of_bounds;
        points.extend(lifted);
    }

    let t2 = Instant::now();
    if let Some(params) = &fi.augmentation {
        if !params.is_identity() {
            points = replay_on_pseudo_points(points, params);
        }
    }
    let kept = range_filter(points, &fi.grid);
    stats.pooled = kept.len();
    stats.range_dropped = stats.lifted - stats.pooled;
    let camera = bev_max_pool(&kept, &fi.grid, fi.feature_channels())?;
    stats.pool_ms = elapsed_ms(t2);
    stats.occupied_cells = camera.occupied_cells();
    Ok(Projection { camera, stats })
}

/// Runs one frame end to end. Depth is always completed from the
/// unaugmented cloud; the augmentation, when present, is applied to the
/// cloud for LiDAR rasterization and replayed on the pseudo-points before
/// range filtering.
pub fn fuse_frame(fi: &FrameInput) -> Result<FrameOutput, PipelineError> {
    fi.validate()?;
    let t0 = Instant::now();
    let depths = complete_all_depths(fi)?;
    let depth_ms = elapsed_ms(t0);

    let Projection { camera, mut stats } = project(fi, &depths, fi.threshold)?;
    stats.depth_ms = depth_ms;

    let t1 = Instant::now();
    let lidar = match &fi.augmentation {
        Some(params) if !params.is_identity() => {
            rasterize_lidar_bev(&apply_to_cloud(&fi.cloud, params), &fi.grid)?
        }
        _ => rasterize_lidar_bev(&fi.cloud, &fi.grid)?,
    };
    stats.lidar_ms = elapsed_ms(t1);

    let t2 = Instant::now();
    let fused = concat_bev(&camera, &lidar)?;
    stats.fuse_ms = elapsed_ms(t2);

    Ok(FrameOutput {
        camera,
        lidar,
        fused,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f32,
    pub pixels: usize,
    /// Median selection + lifting + pooling time.
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Threshold-independent depth completion, measured once.
    pub depth_ms: f64,
    pub rows: Vec<SweepRow>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Projection latency and pixel count per threshold, rows in input order.
pub fn threshold_sweep(
    fi: &FrameInput,
    thresholds: &[f32],
    repetitions: usize,
) -> Result<SweepReport, PipelineError> {
    for &t in thresholds {
        validate_threshold(t)?;
    }
    if repetitions < 3 {
        return Err(PipelineError::TooFewRepetitions(repetitions));
    }
    fi.validate()?;
    let t0 = Instant::now();
    let depths = complete_all_depths(fi)?;
    let depth_ms = elapsed_ms(t0);

    let mut rows = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let mut times = Vec::with_capacity(repetitions);
        let mut pixels = 0;
        for _ in 0..repetitions {
            let start = Instant::now();
            let proj = project(fi, &depths, threshold)?;
            times.push(elapsed_ms(start));
            pixels = proj.stats.selected;
        }
        rows.push(SweepRow {
            threshold,
            pixels,
            latency_ms: median(times),
        });
    }
    Ok(SweepReport { depth_ms, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depthfill::SENTINEL_DEPTH;
    use crate::geometry::LidarPoint;
    use crate::simscene::camera_looking_along;
    use nalgebra::Point3;

    fn tiny_frame(threshold: f32) -> FrameInput {
        let calib = camera_looking_along(0.0, Point3::origin(), 8.0, 16, 16);
        let mut heatmap = KeypointHeatmap::zeros(4, 4, 2, 4);
        heatmap.set(1, 2, 2, 0.9);
        heatmap.set(0, 1, 1, 0.3);
        let mut features = FeatureMap::zeros(4, 4, 3);
        features.set(0, 2, 2, 7.0);
        let mut depth = DenseDepthMap::masked(4, 4, SENTINEL_DEPTH);
        depth.depth[2 * 4 + 2] = 10.0;
        depth.in_range[2 * 4 + 2] = true;
        FrameInput {
            cloud: PointCloud::new(vec![LidarPoint::new(10.0, 0.0, 0.0, 0.5)]),
            cameras: vec![CameraInput {
                name: "front".into(),
                calib,
                heatmap,
                features,
                depth_override: Some(depth),
            }],
            grid: BevGridConfig::default(),
            depth_fill: DepthFillConfig::default(),
            augmentation: None,
            threshold,
        }
    }

    #[test]
    fn stage_counts_are_consistent() {
        let out = fuse_frame(&tiny_frame(0.2)).unwrap();
        let s = &out.stats;
        assert_eq!(s.selected, 2);
        assert_eq!(s.selected_per_camera, vec![2]);
        assert_eq!((s.lifted, s.guard_dropped), (1, 1));
        assert_eq!((s.pooled, s.range_dropped), (1, 0));
        assert_eq!(out.camera.total_occupancy(), 1);
        assert_eq!(out.fused.channels, 3 + 4);
        assert_eq!(out.lidar.total_occupancy(), 1);
    }

    #[test]
    fn threshold_above_one_is_rejected() {
        assert!(matches!(fuse_frame(&tiny_frame(1.1)), Err(PipelineError::Threshold(_))));
        assert!(threshold_sweep(&tiny_frame(0.5), &[1.1], 3).is_err());
        assert!(matches!(
            threshold_sweep(&tiny_frame(0.5), &[0.5], 2),
            Err(PipelineError::TooFewRepetitions(2))
        ));
    }

    #[test]
    fn shape_errors_name_the_camera() {
        let mut fi = tiny_frame(0.5);
        fi.cameras[0].features = FeatureMap::zeros(3, 4, 3);
        let err = fuse_frame(&fi).unwrap_err();
        assert!(err.to_string().starts_with("camera front:"), "{err}");
        fi.cameras.clear();
        assert!(matches!(fuse_frame(&fi), Err(PipelineError::NoCameras)));
    }

    #[test]
    fn identity_augmentation_is_bit_identical() {
        let plain = fuse_frame(&tiny_frame(0.0)).unwrap();
        let mut fi = tiny_frame(0.0);
        fi.augmentation = Some(AugmentationParams::identity());
        let aug = fuse_frame(&fi).unwrap();
        assert_eq!(plain.fused, aug.fused);
        assert_eq!(plain.camera, aug.camera);
    }

    #[test]
    fn sweep_rows_follow_input_order() {
        let report = threshold_sweep(&tiny_frame(0.0), &[0.5, 0.0, 0.2], 3).unwrap();
        let pixels: Vec<_> = report.rows.iter().map(|r| r.pixels).collect();
        assert_eq!(pixels, vec![1, 16, 2]);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
