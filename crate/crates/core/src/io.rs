//! On-disk formats. Everything binary is little-endian `f32`:
//!
//! * `CFFT` tensor: magic, `u32` rank (1..=4), `u32` dims slowest first,
//!   then the row-major payload.
//! * `CFFP` point cloud: magic, `u32` count, then `x y z intensity` per point.
//!
//! In-memory geometry is `f64`, so values written through these formats are
//! rounded to the nearest `f32`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Point3;
use thiserror::Error;

use crate::bev::{BevFeatureGrid, BevGridConfig, FeaturePseudoPoint};
use crate::depthfill::DenseDepthMap;
use crate::geometry::{CameraCalibration, LidarPoint, PointCloud};
use crate::heatmap::{FeatureMap, KeypointHeatmap};

pub const TENSOR_MAGIC: &[u8; 4] = b"CFFT";
pub const CLOUD_MAGIC: &[u8; 4] = b"CFFP";
pub const MAX_RANK: usize = 4;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("rank {0} outside 1..=4")]
    BadRank(usize),
    #[error("payload holds {actual} bytes, header implies {expected}")]
    Size { expected: usize, actual: usize },
    #[error("expected shape {expected}, found {found:?}")]
    Shape { expected: String, found: Vec<usize> },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// A dense `f32` tensor as stored in a `CFFT` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, FormatError> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(FormatError::BadRank(dims.len()));
        }
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(FormatError::Size {
                expected: expected * 4,
                actual: data.len() * 4,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = bytes;
        check_magic(&mut r, TENSOR_MAGIC)?;
        let rank = read_u32(&mut r)? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(FormatError::BadRank(rank));
        }
        let dims = (0..rank)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let count: usize = dims.iter().product();
        let data = read_f32s(r, count)?;
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        Self::from_bytes(&fs::read(path)?)
    }

    fn expect_rank(&self, rank: usize, what: &str) -> Result<(), FormatError> {
        if self.dims.len() != rank {
            return Err(FormatError::Shape {
                expected: what.into(),
                found: self.dims.clone(),
            });
        }
        Ok(())
    }
}

fn check_magic(r: &mut &[u8], magic: &[u8; 4]) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&found).into_owned(),
        });
    }
    Ok(())
}

fn read_u32(r: &mut &[u8]) -> Result<u32, FormatError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(payload: &[u8], count: usize) -> Result<Vec<f32>, FormatError> {
    if payload.len() != count * 4 {
        return Err(FormatError::Size {
            expected: count * 4,
            actual: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn cloud_to_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 16 * cloud.len());
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in &cloud.points {
        for x in [p.position.x, p.position.y, p.position.z, p.intensity] {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn cloud_from_bytes(bytes: &[u8]) -> Result<PointCloud, FormatError> {
    let mut r = bytes;
    check_magic(&mut r, CLOUD_MAGIC)?;
    let count = read_u32(&mut r)? as usize;
    let values = read_f32s(r, count * 4)?;
    let points = values
        .chunks_exact(4)
        .map(|c| LidarPoint::new(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64))
        .collect();
    Ok(PointCloud::new(points))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), FormatError> {
    fs::write(path, cloud_to_bytes(cloud))?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<PointCloud, FormatError> {
    cloud_from_bytes(&fs::read(path)?)
}

/// `[2, H, W]`: depth plane, then the in-range mask as 0/1.
pub fn depth_to_tensor(dd: &DenseDepthMap) -> Tensor {
    let mut data: Vec<f32> = dd.depth.iter().map(|&d| d as f32).collect();
    data.extend(dd.in_range.iter().map(|&m| if m { 1.0 } else { 0.0 }));
    Tensor {
        dims: vec![2, dd.height, dd.width],
        data,
    }
}

pub fn depth_from_tensor(t: &Tensor) -> Result<DenseDepthMap, FormatError> {
    t.expect_rank(3, "[2, H, W]")?;
    if t.dims[0] != 2 {
        return Err(FormatError::Shape {
            expected: "[2, H, W]".into(),
            found: t.dims.clone(),
        });
    }
    let (h, w) = (t.dims[1], t.dims[2]);
    let (depth, mask) = t.data.split_at(w * h);
    DenseDepthMap::from_parts(
        w,
        h,
        depth.iter().map(|&d| d as f64).collect(),
        mask.iter().map(|&m| m != 0.0).collect(),
    )
    .map_err(|e| FormatError::Invalid(e.to_string()))
}

/// `[K, H, W]`, class-planar.
pub fn heatmap_to_tensor(hm: &KeypointHeatmap) -> Tensor {
    Tensor {
        dims: vec![hm.num_classes, hm.height, hm.width],
        data: hm.scores().to_vec(),
    }
}

/// The stride is not stored in the tensor and must be supplied.
pub fn heatmap_from_tensor(t: &Tensor, stride: u32) -> Result<KeypointHeatmap, FormatError> {
    t.expect_rank(3, "[K, H, W]")?;
    KeypointHeatmap::from_scores(t.dims[2], t.dims[1], t.dims[0], stride, t.data.clone())
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

/// `[C, H, W]`, channel-planar.
pub fn features_to_tensor(fm: &FeatureMap) -> Tensor {
    Tensor {
        dims: vec![fm.channels, fm.height, fm.width],
        data: fm.values().to_vec(),
    }
}

pub fn features_from_tensor(t: &Tensor) -> Result<FeatureMap, FormatError> {
    t.expect_rank(3, "[C, H, W]")?;
    FeatureMap::from_values(t.dims[2], t.dims[1], t.dims[0], t.data.clone())
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

/// `[ny, nx, C + 1]`: the cell features followed by the occupancy count.
pub fn bev_to_tensor(grid: &BevFeatureGrid) -> Tensor {
    let c = grid.channels;
    let mut data = Vec::with_capacity(grid.nx * grid.ny * (c + 1));
    for (cell, &occ) in grid.occupancy.iter().enumerate() {
        data.extend_from_slice(&grid.values[cell * c..(cell + 1) * c]);
        data.push(occ as f32);
    }
    Tensor {
        dims: vec![grid.ny, grid.nx, c + 1],
        data,
    }
}

pub fn bev_from_tensor(t: &Tensor) -> Result<BevFeatureGrid, FormatError> {
    t.expect_rank(3, "[ny, nx, C + 1]")?;
    let (ny, nx, c1) = (t.dims[0], t.dims[1], t.dims[2]);
    if c1 == 0 {
        return Err(FormatError::Shape {
            expected: "[ny, nx, C + 1]".into(),
            found: t.dims.clone(),
        });
    }
    let mut grid = BevFeatureGrid::zeros(nx, ny, c1 - 1);
    for (cell, chunk) in t.data.chunks_exact(c1).enumerate() {
        grid.values[cell * (c1 - 1)..(cell + 1) * (c1 - 1)].copy_from_slice(&chunk[..c1 - 1]);
        let occ = chunk[c1 - 1];
        if !(occ >= 0.0 && occ.fract() == 0.0) {
            return Err(FormatError::Invalid(format!("cell {cell}: occupancy {occ}")));
        }
        grid.occupancy[cell] = occ as u32;
    }
    Ok(grid)
}

/// Sidecar text recording the grid geometry of a BEV tensor.
pub fn bev_header(cfg: &BevGridConfig, channels: usize) -> String {
    format!(
        "x_range {:?} {:?}\ny_range {:?} {:?}\nz_range {:?} {:?}\ncell_size {:?}\nchannels {channels}\n",
        cfg.x_range.0, cfg.x_range.1, cfg.y_range.0, cfg.y_range.1, cfg.z_range.0, cfg.z_range.1, cfg.cell_size
    )
}

pub fn parse_bev_header(text: &str) -> Result<(BevGridConfig, usize), FormatError> {
    let mut cfg = BevGridConfig::default();
    let mut channels = None;
    for (line, key, vals) in key_values(text) {
        let nums = parse_f64s(&vals, line)?;
        let want = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(FormatError::Parse {
                    line,
                    message: format!("`{key}` takes {n} values"),
                })
            }
        };
        match key.as_str() {
            "x_range" => {
                want(2)?;
                cfg.x_range = (nums[0], nums[1]);
            }
            "y_range" => {
                want(2)?;
                cfg.y_range = (nums[0], nums[1]);
            }
            "z_range" => {
                want(2)?;
                cfg.z_range = (nums[0], nums[1]);
            }
            "cell_size" => {
                want(1)?;
                cfg.cell_size = nums[0];
            }
            "channels" => {
                want(1)?;
                channels = Some(nums[0] as usize);
            }
            other => {
                return Err(FormatError::Parse {
                    line,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
    }
    let channels = channels.ok_or_else(|| FormatError::Invalid("header lacks `channels`".into()))?;
    Ok((cfg, channels))
}

/// `[N, 5 + C]` rows of `x y z class score feature...`.
pub fn pseudo_points_to_tensor(pts: &[FeaturePseudoPoint], channels: usize) -> Result<Tensor, FormatError> {
    let mut data = Vec::with_capacity(pts.len() * (5 + channels));
    for (i, p) in pts.iter().enumerate() {
        if p.feature.len() != channels {
            return Err(FormatError::Invalid(format!(
                "pseudo-point {i} has {} channels, expected {channels}",
                p.feature.len()
            )));
        }
        data.extend([
            p.position.x as f32,
            p.position.y as f32,
            p.position.z as f32,
            p.class_id as f32,
            p.score,
        ]);
        data.extend_from_slice(&p.feature);
    }
    Ok(Tensor {
        dims: vec![pts.len(), 5 + channels],
        data,
    })
}

pub fn pseudo_points_from_tensor(t: &Tensor) -> Result<Vec<FeaturePseudoPoint>, FormatError> {
    t.expect_rank(2, "[N, 5 + C]")?;
    let width = t.dims[1];
    if width < 5 {
        return Err(FormatError::Shape {
            expected: "[N, 5 + C]".into(),
            found: t.dims.clone(),
        });
    }
    if width == 0 || t.dims[0] == 0 {
        return Ok(Vec::new());
    }
    t.data
        .chunks_exact(width)
        .enumerate()
        .map(|(i, row)| {
            if !(row[3] >= 0.0 && row[3].fract() == 0.0) {
                return Err(FormatError::Invalid(format!("row {i}: class {}", row[3])));
            }
            Ok(FeaturePseudoPoint {
                position: Point3::new(row[0] as f64, row[1] as f64, row[2] as f64),
                class_id: row[3] as usize,
                score: row[4],
                feature: row[5..].to_vec(),
            })
        })
        .collect()
}

/// Non-empty, non-comment lines as `(line number, key, values)`.
pub fn key_values(text: &str) -> Vec<(usize, String, Vec<String>)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let content = raw.split('#').next().unwrap_or("").trim();
            let mut tokens = content.split_whitespace();
            let key = tokens.next()?.to_string();
            Some((i + 1, key, tokens.map(str::to_string).collect()))
        })
        .collect()
}

fn parse_f64s(vals: &[String], line: usize) -> Result<Vec<f64>, FormatError> {
    vals.iter()
        .map(|v| {
            v.parse::<f64>().map_err(|e| FormatError::Parse {
                line,
                message: format!("bad number {v:?}: {e}"),
            })
        })
        .collect()
}

/// Calibration text: `fx`, `fy`, `cx`, `cy`, `width`, `height` and a
/// 16-value row-major `cam_from_world` matrix, one key per line.
pub fn calibration_to_text(c: &CameraCalibration) -> String {
    let m = c.cam_from_world();
    let matrix: Vec<String> = m.iter().map(|x| format!("{x:?}")).collect();
    format!(
        "fx {:?}\nfy {:?}\ncx {:?}\ncy {:?}\nwidth {}\nheight {}\ncam_from_world {}\n",
        c.fx,
        c.fy,
        c.cx,
        c.cy,
        c.width,
        c.height,
        matrix.join(" ")
    )
}

pub fn calibration_from_text(text: &str) -> Result<CameraCalibration, FormatError> {
    let mut scalars = [None::<f64>; 6];
    let names = ["fx", "fy", "cx", "cy", "width", "height"];
    let mut matrix = None;
    for (line, key, vals) in key_values(text) {
        let nums = parse_f64s(&vals, line)?;
        if key == "cam_from_world" {
            let m: [f64; 16] = nums.try_into().map_err(|v: Vec<f64>| FormatError::Parse {
                line,
                message: format!("cam_from_world takes 16 values, found {}", v.len()),
            })?;
            matrix = Some(m);
            continue;
        }
        let slot = names.iter().position(|n| *n == key).ok_or_else(|| FormatError::Parse {
            line,
            message: format!("unknown key {key:?}"),
        })?;
        if nums.len() != 1 {
            return Err(FormatError::Parse {
                line,
                message: format!("`{key}` takes 1 value"),
            });
        }
        scalars[slot] = Some(nums[0]);
    }
    let mut get = |i: usize| scalars[i].take().ok_or_else(|| FormatError::Invalid(format!("missing `{}`", names[i])));
    let (fx, fy, cx, cy, w, h) = (get(0)?, get(1)?, get(2)?, get(3)?, get(4)?, get(5)?);
    let dim = |x: f64, name: &str| {
        if x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as u32)
        } else {
            Err(FormatError::Invalid(format!("`{name}` must be a positive integer, got {x}")))
        }
    };
    let matrix = matrix.ok_or_else(|| FormatError::Invalid("missing `cam_from_world`".into()))?;
    CameraCalibration::new(fx, fy, cx, cy, dim(w, "width")?, dim(h, "height")?, matrix)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

/// Binary PGM of per-cell occupancy, row `iy = ny - 1` first so +y points
/// up. Counts saturate at 255.
pub fn occupancy_pgm(grid: &BevFeatureGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    for iy in (0..grid.ny).rev() {
        for ix in 0..grid.nx {
            out.push(grid.occupancy_at(ix, iy).min(255) as u8);
        }
    }
    out
}
