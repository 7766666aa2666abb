//! On-disk point sets and grids, and run reports.
//!
//! Point files store `f64` coordinates so encoder and decoder hash identical
//! positions. Grid files store `f32` features.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::codec::bitstream::Reader;
use crate::error::{Error, Result};
use crate::grid::{GridConfig, HashGrid, PointSet};
use crate::prune::ValidityMask;

pub const POINTS_MAGIC: [u8; 4] = *b"HGPT";
pub const GRID_MAGIC: [u8; 4] = *b"HGRD";
pub const POINTS_VERSION: u16 = 1;
pub const GRID_VERSION: u16 = 1;

const POINTS_HEADER_LEN: usize = 4 + 2 + 1 + 8;

fn check_magic_version(r: &mut Reader<'_>, magic: [u8; 4], version: u16) -> Result<()> {
    let found: [u8; 4] = r.take(4)?.try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    let v = r.u16()?;
    if v != version {
        return Err(Error::Version {
            expected: version,
            found: v,
        });
    }
    Ok(())
}

pub fn points_to_bytes(points: &PointSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(POINTS_HEADER_LEN + points.coords().len() * 8);
    out.extend_from_slice(&POINTS_MAGIC);
    out.extend_from_slice(&POINTS_VERSION.to_le_bytes());
    out.push(points.dims() as u8);
    out.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for v in points.coords() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn points_from_bytes(bytes: &[u8]) -> Result<PointSet> {
    let mut r = Reader::new(bytes);
    check_magic_version(&mut r, POINTS_MAGIC, POINTS_VERSION)?;
    let dims = r.u8()? as usize;
    let count = r.u64()?;
    let expected = count
        .checked_mul(dims as u64 * 8)
        .and_then(|n| n.checked_add(POINTS_HEADER_LEN as u64))
        .ok_or_else(|| Error::Corrupt(format!("point count {count} overflows")))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after {count} points",
            actual - expected
        )));
    }
    let coords: Vec<f64> = r
        .take(r.remaining())?
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    PointSet::new(dims, coords)
}

pub fn save_points(points: &PointSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, points_to_bytes(points))?;
    Ok(())
}

pub fn load_points(path: impl AsRef<Path>) -> Result<PointSet> {
    points_from_bytes(&fs::read(path)?)
}

fn grid_header_len(config: &GridConfig) -> usize {
    4 + 2 + 1 + 1 + 4 + 2 + 4 * config.levels() + 4 * config.dims()
}

/// Serializes `grid`; every value must survive conversion to `f32`.
pub fn grid_to_bytes(grid: &HashGrid) -> Result<Vec<u8>> {
    let c = grid.config();
    let mut out =
        Vec::with_capacity(grid_header_len(c) + c.levels() * c.table_len() * 4);
    out.extend_from_slice(&GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.push(c.dims() as u8);
    out.push(c.levels() as u8);
    out.extend_from_slice(&c.table_size().to_le_bytes());
    out.extend_from_slice(&(c.feature_dim() as u16).to_le_bytes());
    for r in c.resolutions() {
        out.extend_from_slice(&r.to_le_bytes());
    }
    for p in c.primes() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for table in grid.tables() {
        for (i, &v) in table.iter().enumerate() {
            let x = v as f32;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    row: i / c.feature_dim(),
                });
            }
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn grid_from_bytes(bytes: &[u8]) -> Result<HashGrid> {
    let mut r = Reader::new(bytes);
    check_magic_version(&mut r, GRID_MAGIC, GRID_VERSION)?;
    let dims = r.u8()? as usize;
    let levels = r.u8()? as usize;
    let table_size = r.u32()?;
    let feature_dim = r.u16()? as usize;
    let resolutions = r.u32s(levels)?;
    let primes = r.u32s(dims)?;
    let config =
        GridConfig::new(dims, resolutions, table_size, feature_dim)?.with_primes(&primes)?;
    let expected = levels * config.table_len() * 4;
    if r.remaining() != expected {
        return Err(Error::Shape(format!(
            "grid data holds {} bytes, config requires {expected}",
            r.remaining()
        )));
    }
    let data = r.take(expected)?;
    let tables = data
        .chunks_exact(config.table_len() * 4)
        .map(|t| {
            t.chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
                .collect()
        })
        .collect();
    HashGrid::new(config, tables)
}

pub fn save_grid(grid: &HashGrid, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, grid_to_bytes(grid)?)?;
    Ok(())
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<HashGrid> {
    grid_from_bytes(&fs::read(path)?)
}

/// Per-level size accounting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub resolution: u32,
    pub table_size: u32,
    pub valid_count: u32,
    pub valid_ratio: f64,
    /// Bytes when every row is coded.
    pub raw_bytes: u64,
    /// Bytes when only valid rows are coded.
    pub pruned_bytes: u64,
    pub reduction_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTotals {
    pub table_rows: u64,
    pub valid_count: u64,
    pub mean_valid_ratio: f64,
    pub raw_bytes: u64,
    pub pruned_bytes: u64,
    pub reduction_percent: f64,
    /// Full serialized stream sizes, when streams were produced.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_stream_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned_stream_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub levels: Vec<LevelStats>,
    pub totals: ReportTotals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    /// Aligned table for terminals.
    Text,
    /// One JSON object per line.
    Records,
}

fn reduction_percent(raw: u64, pruned: u64) -> f64 {
    if raw == 0 {
        0.0
    } else {
        100.0 * (1.0 - pruned as f64 / raw as f64)
    }
}

impl RunReport {
    /// Builds a report from measured per-level byte counts.
    pub fn new(
        config: &GridConfig,
        mask: &ValidityMask,
        raw_bytes: &[u64],
        pruned_bytes: &[u64],
    ) -> Result<Self> {
        mask.check_config(config)?;
        if raw_bytes.len() != config.levels() || pruned_bytes.len() != config.levels() {
            return Err(Error::Shape("one byte count per level is required".into()));
        }
        let levels: Vec<LevelStats> = (0..config.levels())
            .map(|l| LevelStats {
                level: l,
                resolution: config.resolution(l),
                table_size: config.table_size(),
                valid_count: mask.valid_counts()[l],
                valid_ratio: mask.valid_ratio(l),
                raw_bytes: raw_bytes[l],
                pruned_bytes: pruned_bytes[l],
                reduction_percent: reduction_percent(raw_bytes[l], pruned_bytes[l]),
            })
            .collect();
        let raw: u64 = raw_bytes.iter().sum();
        let pruned: u64 = pruned_bytes.iter().sum();
        let totals = ReportTotals {
            table_rows: u64::from(config.table_size()) * config.levels() as u64,
            valid_count: mask.total_valid(),
            mean_valid_ratio: mask.mean_valid_ratio(),
            raw_bytes: raw,
            pruned_bytes: pruned,
            reduction_percent: reduction_percent(raw, pruned),
            raw_stream_bytes: None,
            pruned_stream_bytes: None,
        };
        Ok(RunReport { levels, totals })
    }

    /// Sizes implied by raw `f32` storage, with no coder in the loop.
    pub fn from_storage(config: &GridConfig, mask: &ValidityMask) -> Result<Self> {
        let row_bytes = config.feature_dim() as u64 * 4;
        let raw = vec![u64::from(config.table_size()) * row_bytes; config.levels()];
        let pruned: Vec<u64> = mask
            .valid_counts()
            .iter()
            .map(|&c| u64::from(c) * row_bytes)
            .collect();
        Self::new(config, mask, &raw, &pruned)
    }

    pub fn with_stream_sizes(mut self, raw: u64, pruned: u64) -> Self {
        self.totals.raw_stream_bytes = Some(raw);
        self.totals.pruned_stream_bytes = Some(pruned);
        self
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5} {:>10} {:>10} {:>10} {:>9} {:>12} {:>12} {:>10}",
            "level", "resolution", "table", "valid", "ratio", "raw_bytes", "pruned_bytes", "reduction"
        );
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{:>5} {:>10} {:>10} {:>10} {:>9.5} {:>12} {:>12} {:>9.2}%",
                l.level,
                l.resolution,
                l.table_size,
                l.valid_count,
                l.valid_ratio,
                l.raw_bytes,
                l.pruned_bytes,
                l.reduction_percent
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            s,
            "{:>5} {:>10} {:>10} {:>10} {:>9.5} {:>12} {:>12} {:>9.2}%",
            "total", "", t.table_rows, t.valid_count, t.mean_valid_ratio, t.raw_bytes, t.pruned_bytes,
            t.reduction_percent
        );
        if let (Some(raw), Some(pruned)) = (t.raw_stream_bytes, t.pruned_stream_bytes) {
            let _ = writeln!(
                s,
                "stream bytes: unpruned {raw}, pruned {pruned} ({:.2}% smaller)",
                reduction_percent(raw, pruned)
            );
        }
        s
    }

    /// JSON lines: one `"record": "level"` object per level, then one
    /// `"record": "total"` object.
    pub fn to_records(&self) -> String {
        #[derive(Serialize)]
        struct Tagged<'a, T> {
            record: &'static str,
            #[serde(flatten)]
            body: &'a T,
        }
        let mut s = String::new();
        for l in &self.levels {
            s.push_str(&serde_json::to_string(&Tagged { record: "level", body: l }).unwrap());
            s.push('\n');
        }
        s.push_str(
            &serde_json::to_string(&Tagged {
                record: "total",
                body: &self.totals,
            })
            .unwrap(),
        );
        s.push('\n');
        s
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.to_text(),
            ReportFormat::Records => self.to_records(),
        }
    }
}
