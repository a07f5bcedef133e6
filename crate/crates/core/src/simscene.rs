//! Synthetic scenes standing in for real sensor data and neural backbones.
//!
//! Scenes are yaw-rotated boxes over an optional ground plane. From a scene
//! this module ray-casts a multi-beam LiDAR sweep, renders exact per-pixel
//! depth, and splats Gaussian keypoint heatmaps plus matching feature maps
//! for any pinhole camera.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::depthfill::DenseDepthMap;
use crate::geometry::{camera_to_image, world_to_camera, CameraCalibration, LidarPoint, PointCloud};
use crate::heatmap::{FeatureMap, KeypointHeatmap};
use crate::rng::{standard_normal, uniform, unit_f64};

pub const BOX_INTENSITY: f64 = 0.5;
pub const GROUND_INTENSITY: f64 = 0.2;
/// Minimum splat value for a box to claim a pixel in the feature map.
pub const FEATURE_SUPPORT: f64 = 0.01;
/// Boxes whose center is nearer than this (camera z) are not splatted.
pub const MIN_VISIBLE_DEPTH: f64 = 0.1;

const RAY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("box {index}: {message}")]
    InvalidBox { index: usize, message: String },
    #[error("invalid LiDAR config: {0}")]
    InvalidLidar(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBox {
    pub center: Point3<f64>,
    /// Length (local x), width (local y), height (z), metres.
    pub size: [f64; 3],
    pub yaw: f64,
    pub class_id: usize,
}

impl SceneBox {
    fn local(&self, p: &Point3<f64>) -> Vector3<f64> {
        let d = p - self.center;
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    fn local_dir(&self, d: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let [l, w, h] = self.size.map(|v| v / 2.0);
        let (s, c) = self.yaw.sin_cos();
        let mut out = [Point3::origin(); 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let lx = if i & 1 == 0 { -l } else { l };
            let ly = if i & 2 == 0 { -w } else { w };
            let lz = if i & 4 == 0 { -h } else { h };
            *corner = self.center + Vector3::new(c * lx - s * ly, s * lx + c * ly, lz);
        }
        out
    }

    /// Distance from `p` to the box surface, for points near it.
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        let q = self.local(p);
        let half = self.size.map(|v| v / 2.0);
        let outside = Vector3::new(
            (q.x.abs() - half[0]).max(0.0),
            (q.y.abs() - half[1]).max(0.0),
            (q.z.abs() - half[2]).max(0.0),
        );
        let inside = (q.x.abs() - half[0])
            .max(q.y.abs() - half[1])
            .max(q.z.abs() - half[2])
            .min(0.0);
        outside.norm() + inside.abs()
    }

    /// Slab intersection; returns the smallest ray parameter `t > 0`.
    /// `dir` need not be unit length.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.local(origin);
        let d = self.local_dir(dir);
        let half = self.size.map(|v| v / 2.0);
        let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
        for axis in 0..3 {
            if d[axis] == 0.0 {
                if o[axis].abs() > half[axis] {
                    return None;
                }
                continue;
            }
            let t1 = (-half[axis] - o[axis]) / d[axis];
            let t2 = (half[axis] - o[axis]) / d[axis];
            t_near = t_near.max(t1.min(t2));
            t_far = t_far.min(t1.max(t2));
        }
        if t_near > t_far || t_far <= RAY_EPS {
            return None;
        }
        Some(if t_near > RAY_EPS { t_near } else { t_far })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneSpec {
    pub boxes: Vec<SceneBox>,
    pub ground_z: Option<f64>,
    /// Half-width of the square ground patch; unbounded when `None`.
    pub extent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Box(usize),
    Ground,
}

impl SceneSpec {
    pub fn validate(&self, num_classes: usize) -> Result<(), SceneError> {
        for (index, b) in self.boxes.iter().enumerate() {
            let bad = |message: String| Err(SceneError::InvalidBox { index, message });
            if b.size.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad(format!("sizes must be positive, got {:?}", b.size));
            }
            if b.center.iter().any(|c| !c.is_finite()) || !b.yaw.is_finite() {
                return bad("non-finite pose".into());
            }
            if b.class_id >= num_classes {
                return bad(format!("class {} >= {num_classes} classes", b.class_id));
            }
        }
        Ok(())
    }

    /// Nearest surface hit along `origin + t·dir`, `t > 0`.
    pub fn cast_ray(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, Surface)> {
        let mut best: Option<(f64, Surface)> = None;
        for (i, b) in self.boxes.iter().enumerate() {
            if let Some(t) = b.intersect(origin, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, Surface::Box(i)));
                }
            }
        }
        if let Some(gz) = self.ground_z {
            if dir.z < 0.0 && origin.z > gz {
                let t = (gz - origin.z) / dir.z;
                let hit = origin + dir * t;
                let inside = self
                    .extent
                    .is_none_or(|e| hit.x.abs() <= e && hit.y.abs() <= e);
                if inside && best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, Surface::Ground));
                }
            }
        }
        best
    }

    /// Parses the line format `box cx cy cz sx sy sz yaw class`,
    /// `ground z`, `extent e`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let mut scene = SceneSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let keyword = tokens.next().unwrap_or_default();
            let values: Vec<&str> = tokens.collect();
            let err = |message: String| SceneError::Parse { line, message };
            let nums = |n: usize| -> Result<Vec<f64>, SceneError> {
                if values.len() != n {
                    return Err(err(format!(
                        "`{keyword}` takes {n} values, found {}",
                        values.len()
                    )));
                }
                values
                    .iter()
                    .map(|v| v.parse::<f64>().map_err(|e| err(format!("bad number {v:?}: {e}"))))
                    .collect()
            };
            match keyword {
                "box" => {
                    if values.len() != 8 {
                        return Err(err(format!("`box` takes 8 values, found {}", values.len())));
                    }
                    let v: Vec<f64> = values[..7]
                        .iter()
                        .map(|v| v.parse::<f64>().map_err(|e| err(format!("bad number {v:?}: {e}"))))
                        .collect::<Result<_, _>>()?;
                    let class_id = values[7]
                        .parse::<usize>()
                        .map_err(|e| err(format!("bad class {:?}: {e}", values[7])))?;
                    scene.boxes.push(SceneBox {
                        center: Point3::new(v[0], v[1], v[2]),
                        size: [v[3], v[4], v[5]],
                        yaw: v[6],
                        class_id,
                    });
                }
                "ground" => scene.ground_z = Some(nums(1)?[0]),
                "extent" => {
                    let e = nums(1)?[0];
                    if !(e > 0.0) {
                        return Err(err(format!("extent must be positive, got {e}")));
                    }
                    scene.extent = Some(e);
                }
                other => return Err(err(format!("unknown keyword {other:?}"))),
            }
        }
        Ok(scene)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(g) = self.ground_z {
            let _ = writeln!(out, "ground {g:?}");
        }
        if let Some(e) = self.extent {
            let _ = writeln!(out, "extent {e:?}");
        }
        for b in &self.boxes {
            let _ = writeln!(
                out,
                "box {:?} {:?} {:?} {:?} {:?} {:?} {:?} {}",
                b.center.x, b.center.y, b.center.z, b.size[0], b.size[1], b.size[2], b.yaw, b.class_id
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarConfig {
    pub beam_elevations: Vec<f64>,
    pub azimuth_resolution: f64,
    pub max_range: f64,
    pub origin: Point3<f64>,
    pub range_noise_std: f64,
}

impl Default for LidarConfig {
    /// A 32-beam spinning sensor: elevations evenly spread over
    /// [-30.67°, +10.67°], 0.2° azimuth steps, 80 m range.
    fn default() -> Self {
        Self::uniform_beams(32, -30.67, 10.67, 0.2, 80.0)
    }
}

impl LidarConfig {
    pub fn uniform_beams(
        beams: usize,
        min_elevation_deg: f64,
        max_elevation_deg: f64,
        azimuth_resolution_deg: f64,
        max_range: f64,
    ) -> Self {
        let beam_elevations = (0..beams)
            .map(|i| {
                let f = if beams > 1 { i as f64 / (beams - 1) as f64 } else { 0.5 };
                (min_elevation_deg + f * (max_elevation_deg - min_elevation_deg)).to_radians()
            })
            .collect();
        Self {
            beam_elevations,
            azimuth_resolution: azimuth_resolution_deg.to_radians(),
            max_range,
            origin: Point3::origin(),
            range_noise_std: 0.0,
        }
    }

    pub fn azimuth_steps(&self) -> usize {
        (TAU / self.azimuth_resolution).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidLidar(m.into()));
        if self.beam_elevations.is_empty() {
            return bad("at least one beam required");
        }
        if !(self.max_range > 0.0) {
            return bad("max range must be positive");
        }
        if !(self.azimuth_resolution > 0.0 && self.azimuth_resolution <= TAU) {
            return bad("azimuth resolution must be in (0, 2π]");
        }
        if !(self.range_noise_std >= 0.0) {
            return bad("range noise must be >= 0");
        }
        Ok(())
    }

    /// Unit direction of ray `(beam, step)`.
    pub fn ray_direction(&self, beam: usize, step: usize) -> Vector3<f64> {
        let el = self.beam_elevations[beam];
        let az = step as f64 * self.azimuth_resolution;
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// Casts every `(beam, azimuth)` ray, beam-major. Rays with no hit inside
/// `max_range` produce no point.
pub fn raycast_lidar(scene: &SceneSpec, lc: &LidarConfig, seed: u64) -> Result<PointCloud, SceneError> {
    lc.validate()?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut points = Vec::new();
    for beam in 0..lc.beam_elevations.len() {
        for step in 0..lc.azimuth_steps() {
            let dir = lc.ray_direction(beam, step);
            let Some((t, surface)) = scene.cast_ray(&lc.origin, &dir) else {
                continue;
            };
            if t > lc.max_range {
                continue;
            }
            let range = if lc.range_noise_std > 0.0 {
                (t + lc.range_noise_std * standard_normal(&mut rng)).max(RAY_EPS)
            } else {
                t
            };
            let p = lc.origin + dir * range;
            let intensity = match surface {
                Surface::Box(_) => BOX_INTENSITY,
                Surface::Ground => GROUND_INTENSITY,
            };
            points.push(LidarPoint {
                position: p,
                intensity,
            });
        }
    }
    Ok(PointCloud::new(points))
}

/// Exact camera-frame depth through every grid pixel center. Pixels that
/// see nothing are masked out at `sentinel`.
pub fn render_depth(scene: &SceneSpec, calib: &CameraCalibration, stride: u32, sentinel: f64) -> DenseDepthMap {
    let (gw, gh) = calib.grid_size(stride);
    let mut out = DenseDepthMap::masked(gw, gh, sentinel);
    let origin = calib.center();
    let s = stride as f64;
    for v in 0..gh {
        for u in 0..gw {
            // camera-z of the direction is 1, so the ray parameter is depth
            let dir = calib.pixel_ray((u as f64 + 0.5) * s, (v as f64 + 0.5) * s);
            if let Some((t, _)) = scene.cast_ray(&origin, &dir) {
                out.depth[v * gw + u] = t;
                out.in_range[v * gw + u] = true;
            }
        }
    }
    out
}

/// A box as seen by one camera: its splat center on the grid and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    pub box_index: usize,
    pub class_id: usize,
    pub grid_u: usize,
    pub grid_v: usize,
    pub sigma: f64,
    /// Camera-frame depth of the box center.
    pub depth: f64,
}

impl Splat {
    #[inline]
    pub fn value_at(&self, u: usize, v: usize) -> f64 {
        let du = u as f64 - self.grid_u as f64;
        let dv = v as f64 - self.grid_v as f64;
        (-(du * du + dv * dv) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Boxes whose centers lie in front of the camera and inside the image.
/// The splat width is `max(1, diagonal / 6)` grid pixels, where the
/// diagonal is that of the projected corners' bounding rectangle.
pub fn visible_splats(scene: &SceneSpec, calib: &CameraCalibration, stride: u32) -> Vec<Splat> {
    let (gw, gh) = calib.grid_size(stride);
    let s = stride as f64;
    let mut out = Vec::new();
    for (box_index, b) in scene.boxes.iter().enumerate() {
        let pc = world_to_camera(&b.center, calib);
        if pc.z < MIN_VISIBLE_DEPTH {
            continue;
        }
        let Ok((u, v, depth)) = camera_to_image(&pc, calib) else {
            continue;
        };
        if !(u >= 0.0 && v >= 0.0 && u < calib.width as f64 && v < calib.height as f64) {
            continue;
        }
        let (grid_u, grid_v) = ((u / s).floor() as usize, (v / s).floor() as usize);
        if grid_u >= gw || grid_v >= gh {
            continue;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for corner in b.corners() {
            let cc = world_to_camera(&corner, calib);
            if let (true, Ok((cu, cv, _))) = (cc.z >= MIN_VISIBLE_DEPTH, camera_to_image(&cc, calib)) {
                lo = [lo[0].min(cu / s), lo[1].min(cv / s)];
                hi = [hi[0].max(cu / s), hi[1].max(cv / s)];
            }
        }
        let diagonal = if lo[0].is_finite() {
            ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
        } else {
            0.0
        };
        out.push(Splat {
            box_index,
            class_id: b.class_id,
            grid_u,
            grid_v,
            sigma: (diagonal / 6.0).max(1.0),
            depth,
        });
    }
    out
}

/// Gaussian keypoint heatmap: one splat per visible box in its class
/// channel, elementwise max where splats overlap.
pub fn render_heatmap(
    scene: &SceneSpec,
    calib: &CameraCalibration,
    stride: u32,
    num_classes: usize,
) -> Result<KeypointHeatmap, SceneError> {
    scene.validate(num_classes)?;
    let (gw, gh) = calib.grid_size(stride);
    let mut hm = KeypointHeatmap::zeros(gw, gh, num_classes, stride);
    for splat in visible_splats(scene, calib, stride) {
        for v in 0..gh {
            for u in 0..gw {
                let g = splat.value_at(u, v) as f32;
                if g > hm.get(splat.class_id, u, v) {
                    hm.set(splat.class_id, u, v, g);
                }
            }
        }
    }
    Ok(hm)
}

/// Box whose splat dominates pixel `(u, v)`: the largest splat value, ties
/// going to the nearer box, then the lower index. `None` below
/// [`FEATURE_SUPPORT`].
pub fn dominant_splat(splats: &[Splat], u: usize, v: usize) -> Option<&Splat> {
    let mut best: Option<(f64, &Splat)> = None;
    for sp in splats {
        let g = sp.value_at(u, v);
        let better = match best {
            None => true,
            Some((bg, bs)) => g > bg || (g == bg && sp.depth < bs.depth),
        };
        if better {
            best = Some((g, sp));
        }
    }
    best.filter(|(g, _)| *g >= FEATURE_SUPPORT).map(|(_, sp)| sp)
}

/// Stand-in deep features with `num_classes + 2` channels: a one-hot of the
/// dominant box's class followed by normalized pixel-center coordinates.
pub fn render_features(
    scene: &SceneSpec,
    calib: &CameraCalibration,
    stride: u32,
    num_classes: usize,
) -> Result<FeatureMap, SceneError> {
    scene.validate(num_classes)?;
    let (gw, gh) = calib.grid_size(stride);
    let splats = visible_splats(scene, calib, stride);
    let mut fm = FeatureMap::zeros(gw, gh, num_classes + 2);
    let s = stride as f64;
    for v in 0..gh {
        for u in 0..gw {
            if let Some(sp) = dominant_splat(&splats, u, v) {
                fm.set(sp.class_id, u, v, 1.0);
            }
            fm.set(num_classes, u, v, ((u as f64 + 0.5) * s / calib.width as f64) as f32);
            fm.set(num_classes + 1, u, v, ((v as f64 + 0.5) * s / calib.height as f64) as f32);
        }
    }
    Ok(fm)
}

/// Evenly spaced horizontal cameras looking outward, like a surround rig.
#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    pub num_cameras: usize,
    pub width: u32,
    pub height: u32,
    pub horizontal_fov_deg: f64,
    /// Distance of each camera center from the vertical axis.
    pub mount_radius: f64,
    pub mount_height: f64,
}

impl Default for RigConfig {
    /// Six 800×448 cameras, 60° horizontal field of view each.
    fn default() -> Self {
        Self {
            num_cameras: 6,
            width: 800,
            height: 448,
            horizontal_fov_deg: 60.0,
            mount_radius: 0.5,
            mount_height: -0.3,
        }
    }
}

impl RigConfig {
    pub fn cameras(&self) -> Vec<CameraCalibration> {
        let f = (self.width as f64 / 2.0) / (self.horizontal_fov_deg.to_radians() / 2.0).tan();
        (0..self.num_cameras)
            .map(|k| {
                let yaw = TAU * k as f64 / self.num_cameras as f64;
                camera_looking_along(
                    yaw,
                    Point3::new(
                        self.mount_radius * yaw.cos(),
                        self.mount_radius * yaw.sin(),
                        self.mount_height,
                    ),
                    f,
                    self.width,
                    self.height,
                )
            })
            .collect()
    }
}

/// Level camera at `position` whose optical axis points along world yaw
/// `yaw` (x right, y down, z forward in the camera frame).
pub fn camera_looking_along(
    yaw: f64,
    position: Point3<f64>,
    focal: f64,
    width: u32,
    height: u32,
) -> CameraCalibration {
    let (s, c) = yaw.sin_cos();
    let rows = [[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]];
    let mut m = [0.0; 16];
    for (r, row) in rows.iter().enumerate() {
        m[r * 4..r * 4 + 3].copy_from_slice(row);
        m[r * 4 + 3] = -(row[0] * position.x + row[1] * position.y + row[2] * position.z);
    }
    m[15] = 1.0;
    CameraCalibration::new(
        focal,
        focal,
        width as f64 / 2.0,
        height as f64 / 2.0,
        width,
        height,
        m,
    )
    .expect("level camera is a valid calibration")
}

/// Footprint of a nuScenes-like object class (length, width, height).
pub const CLASS_SIZES: [[f64; 3]; 10] = [
    [4.6, 1.9, 1.7],  // car
    [6.9, 2.5, 2.8],  // truck
    [6.4, 2.8, 3.2],  // construction vehicle
    [11.0, 2.9, 3.5], // bus
    [12.0, 2.9, 3.9], // trailer
    [0.5, 2.5, 1.0],  // barrier
    [2.1, 0.8, 1.5],  // motorcycle
    [1.7, 0.6, 1.3],  // bicycle
    [0.7, 0.7, 1.8],  // pedestrian
    [0.4, 0.4, 1.0],  // traffic cone
];

/// Rough share of each class among annotated objects in urban driving
/// data: cars and pedestrians dominate, large vehicles are rare.
pub const CLASS_FREQUENCIES: [f64; 10] = [0.43, 0.08, 0.013, 0.014, 0.02, 0.13, 0.01, 0.01, 0.19, 0.08];

/// Random scene layout parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGenConfig {
    pub num_objects: usize,
    pub num_classes: usize,
    pub distance: (f64, f64),
    pub ground_z: f64,
    pub extent: f64,
    /// Minimum BEV gap between object footprints (metres).
    pub clearance: f64,
    /// Relative class frequencies; classes past the end are never drawn.
    pub class_weights: Vec<f64>,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            num_objects: 30,
            num_classes: 10,
            distance: (8.0, 50.0),
            ground_z: -1.8,
            extent: 60.0,
            clearance: 1.0,
            class_weights: CLASS_FREQUENCIES.to_vec(),
        }
    }
}

/// Places objects uniformly in azimuth and distance around the origin,
/// resting on the ground, without overlapping footprints. Placement gives up
/// on an object after a bounded number of attempts.
pub fn random_scene(seed: u64, cfg: &SceneGenConfig) -> SceneSpec {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut boxes: Vec<SceneBox> = Vec::with_capacity(cfg.num_objects);
    let classes = cfg.num_classes.clamp(1, CLASS_SIZES.len());
    let weights: Vec<f64> = (0..classes)
        .map(|c| cfg.class_weights.get(c).copied().unwrap_or(0.0).max(0.0))
        .collect();
    let total: f64 = weights.iter().sum();
    let pick_class = |x: f64| -> usize {
        if !(total > 0.0) {
            return ((x * classes as f64) as usize).min(classes - 1);
        }
        let mut acc = 0.0;
        for (c, w) in weights.iter().enumerate() {
            acc += w / total;
            if x < acc {
                return c;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    };
    for _ in 0..cfg.num_objects {
        for _attempt in 0..64 {
            let class_id = pick_class(unit_f64(&mut rng));
            let size = CLASS_SIZES[class_id];
            let az = uniform(&mut rng, -PI, PI);
            let dist = uniform(&mut rng, cfg.distance.0, cfg.distance.1);
            let yaw = uniform(&mut rng, -PI, PI);
            let center = Point3::new(dist * az.cos(), dist * az.sin(), cfg.ground_z + size[2] / 2.0);
            let radius = 0.5 * size[0].hypot(size[1]);
            let clear = boxes.iter().all(|b| {
                let other = 0.5 * b.size[0].hypot(b.size[1]);
                (b.center.xy() - center.xy()).norm() > radius + other + cfg.clearance
            });
            if clear {
                boxes.push(SceneBox {
                    center,
                    size,
                    yaw,
                    class_id,
                });
                break;
            }
        }
    }
    SceneSpec {
        boxes,
        ground_z: Some(cfg.ground_z),
        extent: Some(cfg.extent),
    }
}

/// Everything the simulator produces for one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCamera {
    pub name: String,
    pub calib: CameraCalibration,
    pub heatmap: KeypointHeatmap,
    pub features: FeatureMap,
    pub depth_gt: DenseDepthMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrame {
    pub cloud: PointCloud,
    pub cameras: Vec<SimulatedCamera>,
}

/// Ray-casts the LiDAR sweep and renders heatmap, features and exact depth
/// for every camera (named `cam0`, `cam1`, ...).
pub fn simulate_frame(
    scene: &SceneSpec,
    cameras: &[CameraCalibration],
    lc: &LidarConfig,
    seed: u64,
    stride: u32,
    num_classes: usize,
    sentinel: f64,
) -> Result<SimulatedFrame, SceneError> {
    scene.validate(num_classes)?;
    let cloud = raycast_lidar(scene, lc, seed)?;
    let cameras = cameras
        .iter()
        .enumerate()
        .map(|(i, calib)| {
            Ok(SimulatedCamera {
                name: format!("cam{i}"),
                calib: calib.clone(),
                heatmap: render_heatmap(scene, calib, stride, num_classes)?,
                features: render_features(scene, calib, stride, num_classes)?,
                depth_gt: render_depth(scene, calib, stride, sentinel),
            })
        })
        .collect::<Result<_, SceneError>>()?;
    Ok(SimulatedFrame { cloud, cameras })
}
