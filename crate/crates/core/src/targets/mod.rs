//! Training targets for the anchor location, orientation, and shape
//! branches, generated from ground-truth boxes alone.

mod codec;
mod generate;

pub use codec::{box_delta_decode, box_delta_encode, cell_center, shape_decode, shape_encode, BoxDelta};
pub use generate::{assign_level, enumerate_candidates, generate_targets, TargetDiagnostic, TargetOutput};

use crate::error::{invalid_input, Result};
use crate::grid::Grid;

/// Strides of the four pyramid levels used by default.
pub const DEFAULT_STRIDES: [u32; 4] = [4, 8, 16, 32];
/// Shape scale factor: a zero shape offset decodes to `k * stride` pixels.
pub const DEFAULT_K: f64 = 5.0;
/// Strides that also sample the long aspect ratios.
pub const DEFAULT_LONG_STRIDES: [u32; 2] = [4, 8];

/// One pyramid level: its stride, shape scale factor, and grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpec {
    pub stride: u32,
    pub k: f64,
    pub grid_w: usize,
    pub grid_h: usize,
    pub long_ratios_enabled: bool,
}

impl LevelSpec {
    pub fn new(stride: u32, k: f64, grid_w: usize, grid_h: usize, long_ratios_enabled: bool) -> Result<Self> {
        if stride == 0 {
            return Err(invalid_input("stride must be positive"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid_input(format!("scale factor k must be positive, got {k}")));
        }
        if grid_w == 0 || grid_h == 0 {
            return Err(invalid_input(format!("empty grid {grid_w}x{grid_h}")));
        }
        Ok(Self {
            stride,
            k,
            grid_w,
            grid_h,
            long_ratios_enabled,
        })
    }

    /// Level covering an image of the given pixel size.
    pub fn for_image(stride: u32, k: f64, image_w: u32, image_h: u32, long_ratios_enabled: bool) -> Result<Self> {
        if stride == 0 {
            return Err(invalid_input("stride must be positive"));
        }
        Self::new(
            stride,
            k,
            image_w.div_ceil(stride) as usize,
            image_h.div_ceil(stride) as usize,
            long_ratios_enabled,
        )
    }

    pub fn stride_f64(&self) -> f64 {
        f64::from(self.stride)
    }

    /// `k * s`, the size a zero shape offset decodes to.
    pub fn base_size(&self) -> f64 {
        self.k * self.stride_f64()
    }

    pub fn cells(&self) -> usize {
        self.grid_w * self.grid_h
    }
}

/// The default four-level pyramid for an image, long ratios on strides 4
/// and 8.
pub fn default_levels(image_w: u32, image_h: u32) -> Result<Vec<LevelSpec>> {
    DEFAULT_STRIDES
        .iter()
        .map(|&s| LevelSpec::for_image(s, DEFAULT_K, image_w, image_h, DEFAULT_LONG_STRIDES.contains(&s)))
        .collect()
}

/// Scale pair of the positive shrink region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkParams {
    pub sigma1: f64,
    pub sigma2: f64,
}

impl ShrinkParams {
    pub fn new(sigma1: f64, sigma2: f64) -> Result<Self> {
        let ok = |s: f64| s > 0.0 && s <= 1.0;
        if !(ok(sigma1) && ok(sigma2)) {
            return Err(invalid_input(format!(
                "shrink scales must lie in (0, 1], got ({sigma1}, {sigma2})"
            )));
        }
        Ok(Self { sigma1, sigma2 })
    }
}

impl Default for ShrinkParams {
    fn default() -> Self {
        Self {
            sigma1: 0.4,
            sigma2: 0.5,
        }
    }
}

/// Sampled anchor scales and aspect ratios used to approximate the
/// IoU-optimal anchor shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCandidateSet {
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub long_ratios: Vec<f64>,
}

impl ShapeCandidateSet {
    pub fn new(scales: Vec<f64>, ratios: Vec<f64>, long_ratios: Vec<f64>) -> Result<Self> {
        let all = scales.iter().chain(&ratios).chain(&long_ratios);
        if all.clone().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid_input("candidate scales and ratios must be positive"));
        }
        if scales.is_empty() || ratios.is_empty() {
            return Err(invalid_input("candidate set needs at least one scale and one ratio"));
        }
        Ok(Self {
            scales,
            ratios,
            long_ratios,
        })
    }
}

impl Default for ShapeCandidateSet {
    fn default() -> Self {
        Self {
            scales: vec![8.0, 16.0, 32.0, 64.0],
            ratios: vec![1.0, 2.0, 4.0],
            long_ratios: vec![3.0, 5.0, 7.0],
        }
    }
}

/// Location label of a cell. The discriminants are the serialized bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LocationClass {
    Negative = 0,
    Positive = 1,
    Ignore = 255,
}

impl LocationClass {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Negative),
            1 => Some(Self::Positive),
            255 => Some(Self::Ignore),
            _ => None,
        }
    }
}

/// Targets for one pyramid level.
///
/// `orientation` holds normalized angles in `[0, 1]` on non-negative cells
/// and NaN elsewhere. `shape_dw`/`shape_dh` are meaningful only where
/// `shape_valid` is set, which is exactly the positive cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaps {
    pub level: LevelSpec,
    pub location: Grid<LocationClass>,
    pub orientation: Grid<f64>,
    pub shape_dw: Grid<f64>,
    pub shape_dh: Grid<f64>,
    pub shape_valid: Grid<bool>,
}

impl TargetMaps {
    /// All-negative maps for a level.
    pub fn empty(level: LevelSpec) -> Self {
        let (w, h) = (level.grid_w, level.grid_h);
        Self {
            level,
            location: Grid::filled(w, h, LocationClass::Negative),
            orientation: Grid::filled(w, h, f64::NAN),
            shape_dw: Grid::filled(w, h, 0.0),
            shape_dh: Grid::filled(w, h, 0.0),
            shape_valid: Grid::filled(w, h, false),
        }
    }

    /// `(positive, ignore, negative)` cell counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for v in self.location.as_slice() {
            match v {
                LocationClass::Positive => c.0 += 1,
                LocationClass::Ignore => c.1 += 1,
                LocationClass::Negative => c.2 += 1,
            }
        }
        c
    }

    pub fn positive_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.location
            .iter_cells()
            .filter(|(_, _, c)| **c == LocationClass::Positive)
            .map(|(i, j, _)| (i, j))
    }
}
