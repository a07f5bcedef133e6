//! Replay-exact global augmentation shared by LiDAR points and camera
//! pseudo-points.
//!
//! Parameters are sampled once per frame, applied to the point cloud, and
//! replayed on pseudo-points through the very same [`AugmentationParams::apply`]
//! so both modalities stay aligned bit-for-bit.
//!
//! Transform order is fixed: flip_x (negate y), flip_y (negate x), uniform
//! scale about the origin, rotation about +z, translation.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use nalgebra::Point3;
use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::bev::FeaturePseudoPoint;
use crate::geometry::PointCloud;
use crate::rng::{standard_normal, unit_f64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("invalid augmentation range: {0}")]
    InvalidRange(String),
    #[error("malformed augmentation record: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationParams {
    pub flip_x: bool,
    pub flip_y: bool,
    pub scale: f64,
    pub rotation_z: f64,
    pub translation: [f64; 3],
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl AugmentationParams {
    pub fn identity() -> Self {
        Self {
            flip_x: false,
            flip_y: false,
            scale: 1.0,
            rotation_z: 0.0,
            translation: [0.0; 3],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Transforms one point. Neutral steps are skipped entirely so identity
    /// parameters reproduce their input bit-for-bit.
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        let (mut x, mut y, mut z) = (p.x, p.y, p.z);
        if self.flip_x {
            y = -y;
        }
        if self.flip_y {
            x = -x;
        }
        if self.scale != 1.0 {
            x *= self.scale;
            y *= self.scale;
            z *= self.scale;
        }
        if self.rotation_z != 0.0 {
            let (s, c) = self.rotation_z.sin_cos();
            (x, y) = (c * x - s * y, s * x + c * y);
        }
        let [tx, ty, tz] = self.translation;
        if tx != 0.0 {
            x += tx;
        }
        if ty != 0.0 {
            y += ty;
        }
        if tz != 0.0 {
            z += tz;
        }
        Point3::new(x, y, z)
    }

    /// Undoes [`apply`](Self::apply) step by step in reverse order.
    pub fn apply_inverse(&self, p: &Point3<f64>) -> Point3<f64> {
        let [tx, ty, tz] = self.translation;
        let (mut x, mut y, mut z) = (p.x - tx, p.y - ty, p.z - tz);
        if self.rotation_z != 0.0 {
            let (s, c) = self.rotation_z.sin_cos();
            (x, y) = (c * x + s * y, -s * x + c * y);
        }
        if self.scale != 1.0 {
            x /= self.scale;
            y /= self.scale;
            z /= self.scale;
        }
        if self.flip_y {
            x = -x;
        }
        if self.flip_x {
            y = -y;
        }
        Point3::new(x, y, z)
    }

    /// Parameters of the inverse transform, expressed in the same
    /// flip → scale → rotate → translate order.
    ///
    /// A single reflection conjugates a rotation into its inverse while a
    /// double reflection (a half turn) commutes with it, which fixes the sign
    /// of the inverse angle.
    pub fn inverse(&self) -> Self {
        let single_flip = self.flip_x != self.flip_y;
        let rotation_z = if single_flip { self.rotation_z } else { -self.rotation_z };
        let inv_scale = 1.0 / self.scale;
        let [tx, ty, tz] = self.translation;
        // -(1/s) · F · R(-θ) · t
        let (s, c) = (-self.rotation_z).sin_cos();
        let (mut rx, mut ry) = (c * tx - s * ty, s * tx + c * ty);
        if self.flip_x {
            ry = -ry;
        }
        if self.flip_y {
            rx = -rx;
        }
        Self {
            flip_x: self.flip_x,
            flip_y: self.flip_y,
            scale: inv_scale,
            rotation_z,
            translation: [-rx * inv_scale, -ry * inv_scale, -tz * inv_scale],
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(AugmentError::InvalidRange(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !self.rotation_z.is_finite() || self.translation.iter().any(|t| !t.is_finite()) {
            return Err(AugmentError::InvalidRange("non-finite rotation or translation".into()));
        }
        Ok(())
    }
}

/// Single-line record `flip_x,flip_y,scale,rotation_z,tx,ty,tz`. Floats use
/// shortest round-trip formatting so parsing reproduces them exactly.
impl fmt::Display for AugmentationParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [tx, ty, tz] = self.translation;
        write!(
            f,
            "{},{},{:?},{:?},{:?},{:?},{:?}",
            self.flip_x as u8, self.flip_y as u8, self.scale, self.rotation_z, tx, ty, tz
        )
    }
}

impl FromStr for AugmentationParams {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = s.trim().split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(AugmentError::Parse(format!(
                "expected 7 comma-separated fields, found {}",
                fields.len()
            )));
        }
        let flag = |s: &str| match s {
            "0" | "false" => Ok(false),
            "1" | "true" => Ok(true),
            other => Err(AugmentError::Parse(format!("bad flag {other:?}"))),
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| AugmentError::Parse(format!("bad number {s:?}: {e}")))
        };
        let params = Self {
            flip_x: flag(fields[0])?,
            flip_y: flag(fields[1])?,
            scale: num(fields[2])?,
            rotation_z: num(fields[3])?,
            translation: [num(fields[4])?, num(fields[5])?, num(fields[6])?],
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationRanges {
    pub flip_probability: f64,
    pub scale: (f64, f64),
    /// Rotation is drawn from `[-rotation_bound, rotation_bound]`.
    pub rotation_bound: f64,
    pub translation_std: [f64; 3],
}

impl Default for AugmentationRanges {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            scale: (0.95, 1.05),
            rotation_bound: FRAC_PI_4,
            translation_std: [0.5; 3],
        }
    }
}

impl AugmentationRanges {
    /// Ranges that always produce the identity transform.
    pub fn degenerate() -> Self {
        Self {
            flip_probability: 0.0,
            scale: (1.0, 1.0),
            rotation_bound: 0.0,
            translation_std: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidRange(m));
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return bad(format!("flip probability {} outside [0, 1]", self.flip_probability));
        }
        let (lo, hi) = self.scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale interval [{lo}, {hi}] must be positive and ordered"));
        }
        if !(self.rotation_bound >= 0.0 && self.rotation_bound.is_finite()) {
            return bad(format!("rotation bound {} must be >= 0", self.rotation_bound));
        }
        if self.translation_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("translation std must be >= 0".into());
        }
        Ok(())
    }
}

/// Draws parameters from a SplitMix64 stream seeded with `seed`.
///
/// Draw order is fixed: flip_x, flip_y, scale, rotation (one `u64` each),
/// then tx, ty, tz (two `u64`s each, Box–Muller). Every field consumes its
/// draws even when its range is degenerate, so the stream layout never
/// depends on the ranges.
pub fn sample_params(seed: u64, ranges: &AugmentationRanges) -> Result<AugmentationParams, AugmentError> {
    ranges.validate()?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let flip_x = unit_f64(&mut rng) < ranges.flip_probability;
    let flip_y = unit_f64(&mut rng) < ranges.flip_probability;
    let (lo, hi) = ranges.scale;
    let scale = lo + (hi - lo) * unit_f64(&mut rng);
    let rotation_z = ranges.rotation_bound * (2.0 * unit_f64(&mut rng) - 1.0);
    let mut translation = [0.0; 3];
    for (t, std) in translation.iter_mut().zip(ranges.translation_std) {
        *t = std * standard_normal(&mut rng);
    }
    // -0.0 from a zero-width range would break identity detection downstream
    let clean = |x: f64| if x == 0.0 { 0.0 } else { x };
    Ok(AugmentationParams {
        flip_x,
        flip_y,
        scale,
        rotation_z: clean(rotation_z),
        translation: translation.map(clean),
    })
}

pub fn apply_to_points(points: &[Point3<f64>], params: &AugmentationParams) -> Vec<Point3<f64>> {
    points.iter().map(|p| params.apply(p)).collect()
}

/// Augments a LiDAR cloud; intensities are untouched.
pub fn apply_to_cloud(cloud: &PointCloud, params: &AugmentationParams) -> PointCloud {
    let mut out = cloud.clone();
    for p in &mut out.points {
        p.position = params.apply(&p.position);
    }
    out
}

/// Replays the cloud's augmentation on camera pseudo-points. Features,
/// classes and scores are carried through unchanged.
pub fn replay_on_pseudo_points(
    mut pts: Vec<FeaturePseudoPoint>,
    params: &AugmentationParams,
) -> Vec<FeaturePseudoPoint> {
    for p in &mut pts {
        p.position = params.apply(&p.position);
    }
    pts
}
