//! Run settings with key-value file overrides.
//!
//! One `key value...` pair per line; `#` starts a comment. Unknown keys are
//! errors so typos do not silently fall back to defaults.

use std::str::FromStr;

use nalgebra::Point3;
use thiserror::Error;

use crate::augment::AugmentationRanges;
use crate::bev::BevGridConfig;
use crate::depthfill::{DepthFillConfig, KernelShape};
use crate::io::key_values;
use crate::simscene::{LidarConfig, RigConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub stride: u32,
    pub threshold: f32,
    pub num_classes: usize,
    pub repetitions: usize,
    pub grid: BevGridConfig,
    pub depth_fill: DepthFillConfig,
    pub augmentation: AugmentationRanges,
    pub rig: RigConfig,
    pub lidar_beams: usize,
    /// Lowest and highest beam elevation, degrees.
    pub lidar_elevation_deg: (f64, f64),
    pub lidar_azimuth_deg: f64,
    pub lidar_max_range: f64,
    pub lidar_range_noise: f64,
    pub lidar_origin: [f64; 3],
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            stride: 4,
            threshold: 0.1,
            num_classes: 10,
            repetitions: 5,
            grid: BevGridConfig::default(),
            depth_fill: DepthFillConfig::default(),
            augmentation: AugmentationRanges::default(),
            rig: RigConfig::default(),
            lidar_beams: 32,
            lidar_elevation_deg: (-30.67, 10.67),
            lidar_azimuth_deg: 0.2,
            lidar_max_range: 80.0,
            lidar_range_noise: 0.0,
            lidar_origin: [0.0; 3],
        }
    }
}

fn parse_one<T: FromStr>(line: usize, key: &str, vals: &[String]) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    parse_n::<T, 1>(line, key, vals).map(|[v]| v)
}

fn parse_n<T: FromStr, const N: usize>(line: usize, key: &str, vals: &[String]) -> Result<[T; N], ConfigError>
where
    T::Err: std::fmt::Display,
{
    let err = |message: String| ConfigError::Parse { line, message };
    if vals.len() != N {
        return Err(err(format!("`{key}` takes {N} value(s), found {}", vals.len())));
    }
    let parsed = vals
        .iter()
        .map(|v| v.parse::<T>().map_err(|e| err(format!("`{key}`: bad value {v:?}: {e}"))))
        .collect::<Result<Vec<T>, _>>()?;
    parsed
        .try_into()
        .map_err(|_| err(format!("`{key}` takes {N} value(s)")))
}

fn parse_bool(line: usize, key: &str, vals: &[String]) -> Result<bool, ConfigError> {
    match parse_one::<String>(line, key, vals)?.as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::Parse {
            line,
            message: format!("`{key}`: expected a boolean, found {other:?}"),
        }),
    }
}

impl Settings {
    pub fn lidar(&self) -> LidarConfig {
        let (lo, hi) = self.lidar_elevation_deg;
        let mut lc = LidarConfig::uniform_beams(self.lidar_beams, lo, hi, self.lidar_azimuth_deg, self.lidar_max_range);
        lc.range_noise_std = self.lidar_range_noise;
        lc.origin = Point3::from(self.lidar_origin);
        lc
    }

    /// Applies every override in `text` on top of `self`.
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), ConfigError> {
        for (line, key, vals) in key_values(text) {
            self.set(line, &key, &vals)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut s = Self::default();
        s.apply_overrides(text)?;
        s.validate()?;
        Ok(s)
    }

    fn set(&mut self, line: usize, key: &str, vals: &[String]) -> Result<(), ConfigError> {
        let pair = |v: [f64; 2]| (v[0], v[1]);
        match key {
            "seed" => self.seed = parse_one(line, key, vals)?,
            "stride" => self.stride = parse_one(line, key, vals)?,
            "threshold" => self.threshold = parse_one(line, key, vals)?,
            "num_classes" => self.num_classes = parse_one(line, key, vals)?,
            "repetitions" => self.repetitions = parse_one(line, key, vals)?,
            "cell_size" => self.grid.cell_size = parse_one(line, key, vals)?,
            "x_range" => self.grid.x_range = pair(parse_n(line, key, vals)?),
            "y_range" => self.grid.y_range = pair(parse_n(line, key, vals)?),
            "z_range" => self.grid.z_range = pair(parse_n(line, key, vals)?),
            "dilation_shape" => {
                let name: String = parse_one(line, key, vals)?;
                self.depth_fill.dilation_shape = KernelShape::parse(&name).ok_or_else(|| ConfigError::Parse {
                    line,
                    message: format!("unknown kernel shape {name:?}"),
                })?;
            }
            "dilation_size" => self.depth_fill.dilation_size = parse_one(line, key, vals)?,
            "closure_size" => self.depth_fill.closure_size = parse_one(line, key, vals)?,
            "large_hole_fill" => self.depth_fill.large_hole_fill = parse_bool(line, key, vals)?,
            "blur_size" => self.depth_fill.blur_size = parse_one(line, key, vals)?,
            "blur_range_sigma" => self.depth_fill.blur_range_sigma = parse_one(line, key, vals)?,
            "max_gap" => self.depth_fill.max_gap = parse_one(line, key, vals)?,
            "max_depth" => self.depth_fill.max_depth = parse_one(line, key, vals)?,
            "sentinel_depth" => self.depth_fill.sentinel_depth = parse_one(line, key, vals)?,
            "flip_probability" => self.augmentation.flip_probability = parse_one(line, key, vals)?,
            "scale_range" => self.augmentation.scale = pair(parse_n(line, key, vals)?),
            "rotation_bound" => self.augmentation.rotation_bound = parse_one(line, key, vals)?,
            "translation_std" => self.augmentation.translation_std = parse_n(line, key, vals)?,
            "num_cameras" => self.rig.num_cameras = parse_one(line, key, vals)?,
            "image_width" => self.rig.width = parse_one(line, key, vals)?,
            "image_height" => self.rig.height = parse_one(line, key, vals)?,
            "horizontal_fov" => self.rig.horizontal_fov_deg = parse_one(line, key, vals)?,
            "mount_radius" => self.rig.mount_radius = parse_one(line, key, vals)?,
            "mount_height" => self.rig.mount_height = parse_one(line, key, vals)?,
            "lidar_beams" => self.lidar_beams = parse_one(line, key, vals)?,
            "lidar_elevation" => self.lidar_elevation_deg = pair(parse_n(line, key, vals)?),
            "lidar_azimuth_resolution" => self.lidar_azimuth_deg = parse_one(line, key, vals)?,
            "lidar_max_range" => self.lidar_max_range = parse_one(line, key, vals)?,
            "lidar_range_noise" => self.lidar_range_noise = parse_one(line, key, vals)?,
            "lidar_origin" => self.lidar_origin = parse_n(line, key, vals)?,
            other => {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.num_classes == 0 {
            return bad("num_classes must be >= 1".into());
        }
        if self.repetitions < 3 {
            return bad(format!("repetitions must be >= 3, got {}", self.repetitions));
        }
        if self.rig.num_cameras == 0 || self.rig.width == 0 || self.rig.height == 0 {
            return bad("camera rig needs at least one non-empty camera".into());
        }
        if !(self.rig.horizontal_fov_deg > 0.0 && self.rig.horizontal_fov_deg < 180.0) {
            return bad("horizontal_fov must be in (0, 180)".into());
        }
        self.grid.dims().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.depth_fill.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.augmentation.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.lidar().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let s = Settings::default();
        s.validate().unwrap();
        assert_eq!(s.grid.dims().unwrap(), (180, 180));
        assert_eq!(s.lidar().beam_elevations.len(), 32);
        assert_eq!(s.lidar().azimuth_steps(), 1800);
    }

    #[test]
    fn overrides_apply() {
        let s = Settings::from_text(
            "# tuned\nstride 8\ncell_size 0.3\nx_range -30 30\ndilation_shape cross\nlarge_hole_fill false\n\
             translation_std 0.1 0.2 0\nlidar_elevation -20 5 # degrees\n",
        )
        .unwrap();
        assert_eq!(s.stride, 8);
        assert_eq!(s.grid.cell_size, 0.3);
        assert_eq!(s.grid.x_range, (-30.0, 30.0));
        assert_eq!(s.depth_fill.dilation_shape, KernelShape::Cross);
        assert!(!s.depth_fill.large_hole_fill);
        assert_eq!(s.augmentation.translation_std, [0.1, 0.2, 0.0]);
        assert_eq!(s.lidar_elevation_deg, (-20.0, 5.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        match Settings::from_text("stride 4\nbogus 1\n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match Settings::from_text("\n\nx_range 1\n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Settings::from_text("threshold 1.5"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Settings::from_text("cell_size 0.7"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Settings::from_text("blur_size 4"), Err(ConfigError::Invalid(_))));
    }
}
