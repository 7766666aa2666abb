//! Uniform scalar quantization of packed features.

use crate::error::{Error, Result};
use crate::grid::HashGrid;
use crate::prune::PackedFeatures;

/// Largest symbol magnitude the entropy coder accepts.
pub const MAX_SYMBOL_MAGNITUDE: i64 = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    /// Features stored verbatim as little-endian `f32`.
    Raw,
    /// Features rounded to a multiple of the step and entropy coded.
    Quantized,
}

impl QuantMode {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            QuantMode::Raw => 0,
            QuantMode::Quantized => 1,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(QuantMode::Raw),
            1 => Some(QuantMode::Quantized),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    mode: QuantMode,
    step: f64,
}

impl QuantParams {
    pub fn quantized(step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::QuantStep(step));
        }
        Ok(QuantParams {
            mode: QuantMode::Quantized,
            step,
        })
    }

    pub fn raw() -> Self {
        QuantParams {
            mode: QuantMode::Raw,
            step: 0.0,
        }
    }

    pub fn mode(&self) -> QuantMode {
        self.mode
    }

    /// Quantization step; zero in raw mode.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// The value a decoder reconstructs for `value`.
    pub fn reconstruct(&self, value: f64) -> Result<f64> {
        match self.mode {
            QuantMode::Raw => to_f32(value, 0).map(f64::from),
            QuantMode::Quantized => {
                quantize_value(value, self.step).map(|s| dequantize_value(s, self.step))
            }
        }
    }

    /// Applies `reconstruct` to every scalar of `grid`.
    pub fn reconstruct_grid(&self, grid: &HashGrid) -> Result<HashGrid> {
        let f = grid.config().feature_dim();
        let mut tables = Vec::with_capacity(grid.config().levels());
        for table in grid.tables() {
            let mut out = Vec::with_capacity(table.len());
            for (i, &v) in table.iter().enumerate() {
                out.push(self.reconstruct(v).map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NonFinite { row: i / f },
                    e => e,
                })?);
            }
            tables.push(out);
        }
        HashGrid::new(grid.config().clone(), tables)
    }
}

pub(crate) fn to_f32(value: f64, row: usize) -> Result<f32> {
    let v = value as f32;
    if !v.is_finite() {
        return Err(Error::NonFinite { row });
    }
    Ok(v)
}

/// Nearest multiple of `step`, ties away from zero.
pub fn quantize_value(value: f64, step: f64) -> Result<i32> {
    let s = (value / step).round();
    if !(s.abs() <= MAX_SYMBOL_MAGNITUDE as f64) {
        return Err(Error::DynamicRange {
            symbol: if s.is_nan() { i64::MAX } else { s as i64 },
        });
    }
    Ok(s as i32)
}

pub fn dequantize_value(symbol: i32, step: f64) -> f64 {
    f64::from(symbol) * step
}

/// Per-level symbol sequences, row-major within each level.
pub fn quantize(features: &PackedFeatures, step: f64) -> Result<Vec<Vec<i32>>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::QuantStep(step));
    }
    (0..features.levels())
        .map(|l| {
            features
                .level(l)
                .iter()
                .map(|&v| quantize_value(v, step))
                .collect()
        })
        .collect()
}

pub fn dequantize(symbols: &[Vec<i32>], step: f64, feature_dim: usize) -> Result<PackedFeatures> {
    let levels = symbols
        .iter()
        .map(|level| level.iter().map(|&s| dequantize_value(s, step)).collect())
        .collect();
    PackedFeatures::new(feature_dim, levels)
}
