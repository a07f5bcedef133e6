//! Dense depth from sparse LiDAR samples.
//!
//! Two completers are provided: an exact nearest-neighbour baseline and a
//! morphological completer in the IP-Basic style. Both honour the
//! interpolation-range guard: pixels farther than `max_gap` (Chebyshev) from
//! every LiDAR sample are masked out and carry [`SENTINEL_DEPTH`], which lies
//! far outside the BEV detection range.

use thiserror::Error;

use crate::geometry::SparseDepthMap;

/// Depth assigned to pixels outside the interpolation range.
pub const SENTINEL_DEPTH: f64 = 300.0;
/// Inversion constant; must exceed every LiDAR return.
pub const DEFAULT_MAX_DEPTH: f64 = 100.0;
pub const DEFAULT_MAX_GAP: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("sparse depth map has no valid samples")]
    EmptyDepth,
    #[error("invalid depth-fill config: {0}")]
    InvalidConfig(String),
    #[error("depth buffer has {actual} values, expected {expected}")]
    BadLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelShape {
    Full,
    Diamond,
    Cross,
}

impl KernelShape {
    pub fn name(self) -> &'static str {
        match self {
            KernelShape::Full => "full",
            KernelShape::Diamond => "diamond",
            KernelShape::Cross => "cross",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(KernelShape::Full),
            "diamond" => Some(KernelShape::Diamond),
            "cross" => Some(KernelShape::Cross),
            _ => None,
        }
    }

    /// Offsets `(du, dv)` covered by an odd `size × size` kernel.
    fn offsets(self, size: usize) -> Vec<(isize, isize)> {
        let r = (size / 2) as isize;
        let mut out = Vec::new();
        for dv in -r..=r {
            for du in -r..=r {
                let keep = match self {
                    KernelShape::Full => true,
                    KernelShape::Diamond => du.abs() + dv.abs() <= r,
                    KernelShape::Cross => du == 0 || dv == 0,
                };
                if keep {
                    out.push((du, dv));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthFillConfig {
    pub dilation_shape: KernelShape,
    pub dilation_size: usize,
    pub closure_size: usize,
    pub large_hole_fill: bool,
    pub blur_size: usize,
    /// Range sigma (metres) of the blur; infinite gives a plain Gaussian.
    pub blur_range_sigma: f64,
    pub max_gap: usize,
    pub max_depth: f64,
    pub sentinel_depth: f64,
}

impl Default for DepthFillConfig {
    fn default() -> Self {
        Self {
            dilation_shape: KernelShape::Diamond,
            dilation_size: 5,
            closure_size: 5,
            large_hole_fill: true,
            blur_size: 5,
            blur_range_sigma: f64::INFINITY,
            max_gap: DEFAULT_MAX_GAP,
            max_depth: DEFAULT_MAX_DEPTH,
            sentinel_depth: SENTINEL_DEPTH,
        }
    }
}

impl DepthFillConfig {
    pub fn validate(&self) -> Result<(), DepthError> {
        let bad = |m: String| Err(DepthError::InvalidConfig(m));
        for (name, k) in [
            ("dilation_size", self.dilation_size),
            ("closure_size", self.closure_size),
            ("blur_size", self.blur_size),
        ] {
            if k < 3 || k % 2 == 0 {
                return bad(format!("{name} must be odd and >= 3, got {k}"));
            }
        }
        if self.max_gap < 1 {
            return bad("max_gap must be >= 1".into());
        }
        if !(self.max_depth > 0.0 && self.max_depth.is_finite()) {
            return bad(format!("max_depth must be positive, got {}", self.max_depth));
        }
        if !(self.sentinel_depth > 0.0 && self.sentinel_depth.is_finite()) {
            return bad(format!("sentinel_depth must be positive, got {}", self.sentinel_depth));
        }
        if !(self.blur_range_sigma > 0.0) {
            return bad("blur_range_sigma must be positive".into());
        }
        Ok(())
    }
}

/// Per-pixel metric depth plus the interpolation-range mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub in_range: Vec<bool>,
}

impl DenseDepthMap {
    /// A map with every pixel masked out at `sentinel`.
    pub fn masked(width: usize, height: usize, sentinel: f64) -> Self {
        Self {
            width,
            height,
            depth: vec![sentinel; width * height],
            in_range: vec![false; width * height],
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        in_range: Vec<bool>,
    ) -> Result<Self, DepthError> {
        let expected = width * height;
        for len in [depth.len(), in_range.len()] {
            if len != expected {
                return Err(DepthError::BadLength {
                    expected,
                    actual: len,
                });
            }
        }
        Ok(Self {
            width,
            height,
            depth,
            in_range,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    #[inline]
    pub fn is_in_range(&self, u: usize, v: usize) -> bool {
        self.in_range[v * self.width + u]
    }

    pub fn in_range_count(&self) -> usize {
        self.in_range.iter().filter(|m| **m).count()
    }
}

/// Marks pixels whose Chebyshev distance to the nearest valid sample is at
/// most `max_gap`.
pub fn interpolation_mask(sd: &SparseDepthMap, max_gap: usize) -> Vec<bool> {
    let (w, h) = (sd.width, sd.height);
    let valid: Vec<bool> = sd.depth.iter().map(|d| *d > 0.0).collect();
    // The Chebyshev ball is a square, so the dilation separates into a row
    // pass followed by a column pass.
    let rows = dilate_line(&valid, w, h, max_gap, true);
    dilate_line(&rows, w, h, max_gap, false)
}

/// 1-D binary dilation by radius `r` along rows (`horizontal`) or columns.
fn dilate_line(src: &[bool], w: usize, h: usize, r: usize, horizontal: bool) -> Vec<bool> {
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let at = |line: usize, i: usize| {
        if horizontal {
            line * w + i
        } else {
            i * w + line
        }
    };
    let mut out = vec![false; w * h];
    let mut dist = vec![usize::MAX; len];
    for line in 0..lines {
        let mut last = None;
        for i in 0..len {
            if src[at(line, i)] {
                last = Some(i);
            }
            dist[i] = last.map_or(usize::MAX, |l| i - l);
        }
        last = None;
        for i in (0..len).rev() {
            if src[at(line, i)] {
                last = Some(i);
            }
            let d = last.map_or(usize::MAX, |l| l - i).min(dist[i]);
            out[at(line, i)] = d <= r;
        }
    }
    out
}

/// Nearest-neighbour completion: every in-range pixel takes the depth of the
/// Euclidean-nearest valid pixel (ties: smaller `v`, then smaller `u`).
pub fn nn_complete(sd: &SparseDepthMap, cfg: &DepthFillConfig) -> Result<DenseDepthMap, DepthError> {
    cfg.validate()?;
    if sd.valid_count() == 0 {
        return Err(DepthError::EmptyDepth);
    }
    let (w, h) = (sd.width, sd.height);
    let mask = interpolation_mask(sd, cfg.max_gap);
    let mut out = DenseDepthMap::masked(w, h, cfg.sentinel_depth);
    for v in 0..h {
        for u in 0..w {
            let idx = v * w + u;
            if !mask[idx] {
                continue;
            }
            // In range guarantees a source within Chebyshev radius max_gap.
            let (_, _, _, depth) = nearest_source(sd, u, v).expect("in-range pixel has a source");
            out.depth[idx] = depth;
            out.in_range[idx] = true;
        }
    }
    Ok(out)
}

/// Ring search outward in Chebyshev radius; stops once no unvisited ring can
/// hold a closer (or equally close, earlier) source.
fn nearest_source(sd: &SparseDepthMap, u: usize, v: usize) -> Option<(i64, usize, usize, f64)> {
    let (w, h) = (sd.width as i64, sd.height as i64);
    let (ui, vi) = (u as i64, v as i64);
    let mut best: Option<(i64, usize, usize, f64)> = None;
    let max_r = w.max(h);
    let consider = |nu: i64, nv: i64, best: &mut Option<(i64, usize, usize, f64)>| {
        if nu < 0 || nv < 0 || nu >= w || nv >= h {
            return;
        }
        let d = sd.get(nu as usize, nv as usize);
        if d <= 0.0 {
            return;
        }
        let d2 = (nu - ui).pow(2) + (nv - vi).pow(2);
        let cand = (d2, nv as usize, nu as usize, d);
        let better = match best {
            None => true,
            Some(b) => (cand.0, cand.1, cand.2) < (b.0, b.1, b.2),
        };
        if better {
            *best = Some(cand);
        }
    };
    for r in 0..=max_r {
        if let Some(b) = best {
            if r * r > b.0 {
                break;
            }
        }
        if r == 0 {
            consider(ui, vi, &mut best);
            continue;
        }
        for du in -r..=r {
            consider(ui + du, vi - r, &mut best);
            consider(ui + du, vi + r, &mut best);
        }
        for dv in (-r + 1)..r {
            consider(ui - r, vi + dv, &mut best);
            consider(ui + r, vi + dv, &mut best);
        }
    }
    best
}

/// Morphological completion in inverted-depth space.
///
/// Steps: invert (`d → max_depth − d`), dilate into holes, close small holes,
/// optionally fill large holes column-wise, blur the filled pixels, invert
/// back. Neither the fills nor the blur write to LiDAR sample pixels, so
/// source depths come out unchanged.
pub fn ipbasic_complete(
    sd: &SparseDepthMap,
    cfg: &DepthFillConfig,
) -> Result<DenseDepthMap, DepthError> {
    cfg.validate()?;
    if sd.valid_count() == 0 {
        return Err(DepthError::EmptyDepth);
    }
    let (w, h) = (sd.width, sd.height);
    let mask = interpolation_mask(sd, cfg.max_gap);

    // (1) inversion; empty pixels hold 0, so max-filters prefer near surfaces
    let mut inv: Vec<f64> = sd
        .depth
        .iter()
        .map(|&d| if d > 0.0 && d < cfg.max_depth { cfg.max_depth - d } else { 0.0 })
        .collect();

    // (2) dilation into empty pixels
    let dilated = grey_dilate(&inv, w, h, &cfg.dilation_shape.offsets(cfg.dilation_size));
    fill_empty(&mut inv, &dilated, &mask);

    // (3) small-hole closure
    let full = KernelShape::Full.offsets(cfg.closure_size);
    let closed = grey_erode(&grey_dilate(&inv, w, h, &full), w, h, &full);
    fill_empty(&mut inv, &closed, &mask);

    // (4) large holes: extend along columns, then a wide dilation for the rest
    if cfg.large_hole_fill {
        let extended = column_extend(&inv, w, h);
        fill_empty(&mut inv, &extended, &mask);
        let wide = KernelShape::Full.offsets(2 * cfg.max_gap + 1);
        let dilated = grey_dilate(&inv, w, h, &wide);
        fill_empty(&mut inv, &dilated, &mask);
    }

    // (5) blur
    let source: Vec<bool> = sd.depth.iter().map(|&d| d > 0.0 && d < cfg.max_depth).collect();
    let inv = bilateral_blur(&inv, &source, w, h, cfg.blur_size, cfg.blur_range_sigma);

    // (6) inversion back, applying the guard
    let mut out = DenseDepthMap::masked(w, h, cfg.sentinel_depth);
    for idx in 0..w * h {
        if source[idx] {
            // skip the inversion round trip so samples stay bit-exact
            out.depth[idx] = sd.depth[idx];
            out.in_range[idx] = true;
        } else if mask[idx] && inv[idx] > 0.0 {
            out.depth[idx] = cfg.max_depth - inv[idx];
            out.in_range[idx] = true;
        }
    }
    Ok(out)
}

fn fill_empty(dst: &mut [f64], src: &[f64], mask: &[bool]) {
    for ((d, &s), &m) in dst.iter_mut().zip(src).zip(mask) {
        if *d <= 0.0 && m && s > 0.0 {
            *d = s;
        }
    }
}

fn grey_dilate(src: &[f64], w: usize, h: usize, offsets: &[(isize, isize)]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut m = 0.0f64;
            for &(du, dv) in offsets {
                let (nu, nv) = (u as isize + du, v as isize + dv);
                if nu >= 0 && nv >= 0 && (nu as usize) < w && (nv as usize) < h {
                    m = m.max(src[nv as usize * w + nu as usize]);
                }
            }
            out[v * w + u] = m;
        }
    }
    out
}

/// Grey erosion; out-of-image neighbours are ignored (border never erodes).
fn grey_erode(src: &[f64], w: usize, h: usize, offsets: &[(isize, isize)]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut m = f64::INFINITY;
            for &(du, dv) in offsets {
                let (nu, nv) = (u as isize + du, v as isize + dv);
                if nu >= 0 && nv >= 0 && (nu as usize) < w && (nv as usize) < h {
                    m = m.min(src[nv as usize * w + nu as usize]);
                }
            }
            out[v * w + u] = m;
        }
    }
    out
}

/// Each empty pixel takes the nearest filled value in its column; equal
/// distances above and below prefer the nearer surface (larger inverse).
fn column_extend(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = src.to_vec();
    let mut above = vec![(usize::MAX, 0.0); h];
    for u in 0..w {
        let mut last = None;
        for v in 0..h {
            let x = src[v * w + u];
            if x > 0.0 {
                last = Some((v, x));
            }
            above[v] = last.map_or((usize::MAX, 0.0), |(lv, lx)| (v - lv, lx));
        }
        let mut last = None;
        for v in (0..h).rev() {
            let x = src[v * w + u];
            if x > 0.0 {
                last = Some((v, x));
                continue;
            }
            let below = last.map_or((usize::MAX, 0.0), |(lv, lx)| (lv - v, lx));
            let a = above[v];
            out[v * w + u] = match a.0.cmp(&below.0) {
                std::cmp::Ordering::Less => a.1,
                std::cmp::Ordering::Greater => below.1,
                std::cmp::Ordering::Equal => a.1.max(below.1),
            };
        }
    }
    out
}

/// Bilateral blur over valid (positive) pixels. Empty pixels neither
/// contribute nor receive values; `fixed` pixels contribute but keep theirs.
fn bilateral_blur(src: &[f64], fixed: &[bool], w: usize, h: usize, size: usize, range_sigma: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    // OpenCV's default sigma for a given aperture.
    let sigma = 0.3 * ((size as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    let spatial: Vec<(isize, isize, f64)> = (-r..=r)
        .flat_map(|dv| (-r..=r).map(move |du| (du, dv)))
        .map(|(du, dv)| {
            let d2 = (du * du + dv * dv) as f64;
            (du, dv, (-d2 / (2.0 * sigma * sigma)).exp())
        })
        .collect();
    let inv_2r2 = 1.0 / (2.0 * range_sigma * range_sigma);
    let mut out = src.to_vec();
    for v in 0..h {
        for u in 0..w {
            let c = src[v * w + u];
            if c <= 0.0 || fixed[v * w + u] {
                continue;
            }
            let (mut acc, mut norm) = (0.0, 0.0);
            for &(du, dv, ws) in &spatial {
                let (nu, nv) = (u as isize + du, v as isize + dv);
                if nu < 0 || nv < 0 || nu as usize >= w || nv as usize >= h {
                    continue;
                }
                let x = src[nv as usize * w + nu as usize];
                if x <= 0.0 {
                    continue;
                }
                let wt = ws * (-(x - c) * (x - c) * inv_2r2).exp();
                acc += wt * x;
                norm += wt;
            }
            out[v * w + u] = acc / norm;
        }
    }
    out
}
