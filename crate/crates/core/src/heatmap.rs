//! Keypoint heatmap decoding: threshold selection, 8-neighbour peaks and
//! feature gathering.
//!
//! Heatmaps and feature maps are stored channel-planar (`[channel][v][u]`),
//! the layout a detection head produces.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("heatmap grid {heatmap:?} does not match feature grid {features:?}")]
    DimensionMismatch {
        heatmap: (usize, usize),
        features: (usize, usize),
    },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f32),
    #[error("{what} has {actual} values, expected {expected}")]
    BadLength {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("heatmap score {0} outside [0, 1]")]
    ScoreOutOfRange(f32),
    #[error("feature map contains a non-finite value")]
    NonFiniteFeature,
}

/// Per-class score grid at feature stride.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointHeatmap {
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub stride: u32,
    scores: Vec<f32>,
}

impl KeypointHeatmap {
    pub fn zeros(width: usize, height: usize, num_classes: usize, stride: u32) -> Self {
        Self {
            width,
            height,
            num_classes,
            stride,
            scores: vec![0.0; width * height * num_classes],
        }
    }

    /// Wraps class-planar scores, checking length and the `[0, 1]` range.
    pub fn from_scores(
        width: usize,
        height: usize,
        num_classes: usize,
        stride: u32,
        scores: Vec<f32>,
    ) -> Result<Self, HeatmapError> {
        let expected = width * height * num_classes;
        if scores.len() != expected {
            return Err(HeatmapError::BadLength {
                what: "heatmap",
                expected,
                actual: scores.len(),
            });
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(HeatmapError::ScoreOutOfRange(*bad));
        }
        Ok(Self {
            width,
            height,
            num_classes,
            stride,
            scores,
        })
    }

    #[inline]
    pub fn get(&self, class: usize, u: usize, v: usize) -> f32 {
        self.scores[(class * self.height + v) * self.width + u]
    }

    /// Sets a score. Values are clamped into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, class: usize, u: usize, v: usize, score: f32) {
        self.scores[(class * self.height + v) * self.width + u] = score.clamp(0.0, 1.0);
    }

    pub fn channel(&self, class: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.scores[class * n..(class + 1) * n]
    }

    pub fn scores(&self) -> &[f32] {
        &self.scores
    }

    pub fn max_score(&self) -> f32 {
        self.scores.iter().copied().fold(0.0, f32::max)
    }
}

/// Deep-feature grid aligned with a [`KeypointHeatmap`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            values: vec![0.0; width * height * channels],
        }
    }

    pub fn from_values(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f32>,
    ) -> Result<Self, HeatmapError> {
        let expected = width * height * channels;
        if values.len() != expected {
            return Err(HeatmapError::BadLength {
                what: "feature map",
                expected,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HeatmapError::NonFiniteFeature);
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    #[inline]
    pub fn get(&self, channel: usize, u: usize, v: usize) -> f32 {
        self.values[(channel * self.height + v) * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, u: usize, v: usize, value: f32) {
        self.values[(channel * self.height + v) * self.width + u] = value;
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// The C-vector at grid location `(u, v)`.
    pub fn gather(&self, u: usize, v: usize) -> Vec<f32> {
        let plane = self.width * self.height;
        let offset = v * self.width + u;
        (0..self.channels)
            .map(|c| self.values[c * plane + offset])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedPixel {
    pub u: usize,
    pub v: usize,
    pub class_id: usize,
    pub score: f32,
    pub feature: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub u: usize,
    pub v: usize,
    pub class_id: usize,
    pub score: f32,
}

pub fn validate_threshold(threshold: f32) -> Result<(), HeatmapError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(HeatmapError::InvalidThreshold(threshold))
    }
}

/// Selects every grid pixel whose class-max score is `>= threshold`, in
/// row-major order, gathering the aligned feature vector. Class ties resolve
/// to the lowest class index.
pub fn select_pixels(
    hm: &KeypointHeatmap,
    fm: &FeatureMap,
    threshold: f32,
) -> Result<Vec<SelectedPixel>, HeatmapError> {
    validate_threshold(threshold)?;
    if (hm.width, hm.height) != (fm.width, fm.height) {
        return Err(HeatmapError::DimensionMismatch {
            heatmap: (hm.width, hm.height),
            features: (fm.width, fm.height),
        });
    }
    let plane = hm.width * hm.height;
    if plane == 0 || hm.num_classes == 0 {
        return Ok(Vec::new());
    }

    // Class-max pass over whole planes keeps the inner loop branch-light.
    let mut best = hm.channel(0).to_vec();
    let mut arg = vec![0u32; plane];
    for class in 1..hm.num_classes {
        for ((b, a), &s) in best.iter_mut().zip(arg.iter_mut()).zip(hm.channel(class)) {
            if s > *b {
                *b = s;
                *a = class as u32;
            }
        }
    }

    let selected = best
        .iter()
        .enumerate()
        .filter(|(_, &score)| score >= threshold)
        .map(|(idx, &score)| {
            let (u, v) = (idx % hm.width, idx / hm.width);
            SelectedPixel {
                u,
                v,
                class_id: arg[idx] as usize,
                score,
                feature: fm.gather(u, v),
            }
        })
        .collect();
    Ok(selected)
}

/// Returns, per class channel, every pixel strictly greater than all of its
/// in-bounds 8-neighbours. Plateaus yield no peak, and neither does a zero
/// score (an isolated 1×1 grid of zeros has no detection). Output is ordered
/// by class, then row-major.
pub fn extract_peaks(hm: &KeypointHeatmap) -> Vec<Peak> {
    let (w, h) = (hm.width, hm.height);
    let mut peaks = Vec::new();
    for class in 0..hm.num_classes {
        let ch = hm.channel(class);
        for v in 0..h {
            for u in 0..w {
                let center = ch[v * w + u];
                if center <= 0.0 {
                    continue;
                }
                let v_lo = v.saturating_sub(1);
                let v_hi = (v + 1).min(h - 1);
                let u_lo = u.saturating_sub(1);
                let u_hi = (u + 1).min(w - 1);
                let mut is_peak = true;
                'scan: for nv in v_lo..=v_hi {
                    for nu in u_lo..=u_hi {
                        if (nu, nv) != (u, v) && ch[nv * w + nu] >= center {
                            is_peak = false;
                            break 'scan;
                        }
                    }
                }
                if is_peak {
                    peaks.push(Peak {
                        u,
                        v,
                        class_id: class,
                        score: center,
                    });
                }
            }
        }
    }
    peaks
}
