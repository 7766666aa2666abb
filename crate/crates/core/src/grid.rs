//! Multi-resolution hash grid: configuration, query positions, spatial
//! hashing and d-linear interpolation.
//!
//! A point is scaled into the lattice of each level, the `2^d` corners of the
//! cell containing it are hashed into that level's feature table, and the
//! corner rows are blended with product weights. Every level uses the hash,
//! including coarse levels whose lattice would fit in the table densely.

use arrayvec::ArrayVec;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Highest supported spatial dimensionality.
pub const MAX_DIMS: usize = 3;
/// Upper bound on corners per cell (`2^MAX_DIMS`).
pub const MAX_CORNERS: usize = 1 << MAX_DIMS;

/// Per-axis hash multipliers. The first axis is left unscrambled.
pub const DEFAULT_PRIMES: [u32; MAX_DIMS] = [1, 2_654_435_761, 805_459_861];

/// Hyperparameters of a multi-resolution hash grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridConfig {
    dims: usize,
    resolutions: Vec<u32>,
    table_size: u32,
    feature_dim: usize,
    primes: ArrayVec<u32, MAX_DIMS>,
}

impl GridConfig {
    /// Builds a config with the default per-axis primes.
    pub fn new(
        dims: usize,
        resolutions: Vec<u32>,
        table_size: u32,
        feature_dim: usize,
    ) -> Result<Self> {
        if !(1..=MAX_DIMS).contains(&dims) {
            return Err(Error::Config(format!("dims must be 1, 2 or 3, got {dims}")));
        }
        let primes = DEFAULT_PRIMES[..dims].iter().copied().collect();
        let config = GridConfig {
            dims,
            resolutions,
            table_size,
            feature_dim,
            primes,
        };
        config.validate()?;
        Ok(config)
    }

    /// Resolutions growing geometrically from `base` to `max` over `levels`
    /// levels, rounded to the nearest integer.
    pub fn geometric(
        dims: usize,
        levels: usize,
        base: u32,
        max: u32,
        table_size: u32,
        feature_dim: usize,
    ) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if base == 0 || max < base {
            return Err(Error::Config(format!(
                "geometric resolutions need 1 <= base <= max, got base {base}, max {max}"
            )));
        }
        let resolutions = if levels == 1 {
            vec![base]
        } else {
            let growth = (f64::from(max).ln() - f64::from(base).ln()) / (levels - 1) as f64;
            (0..levels)
                .map(|l| {
                    if l == levels - 1 {
                        max
                    } else {
                        (f64::from(base) * (growth * l as f64).exp()).round() as u32
                    }
                })
                .collect()
        };
        Self::new(dims, resolutions, table_size, feature_dim)
    }

    /// Replaces the per-axis hash multipliers.
    pub fn with_primes(mut self, primes: &[u32]) -> Result<Self> {
        if primes.len() != self.dims {
            return Err(Error::Config(format!(
                "expected {} primes, got {}",
                self.dims,
                primes.len()
            )));
        }
        self.primes = primes.iter().copied().collect();
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let levels = self.resolutions.len();
        if levels == 0 || levels > u8::MAX as usize {
            return Err(Error::Config(format!("levels must be in 1..=255, got {levels}")));
        }
        if self.resolutions.iter().any(|&r| r == 0) {
            return Err(Error::Config("every resolution must be >= 1".into()));
        }
        if self.resolutions.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("resolutions must be non-decreasing".into()));
        }
        if self.table_size < 2 || !self.table_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "table_size must be a power of two >= 2, got {}",
                self.table_size
            )));
        }
        if self.feature_dim == 0 || self.feature_dim > u16::MAX as usize {
            return Err(Error::Config(format!(
                "feature_dim must be in 1..=65535, got {}",
                self.feature_dim
            )));
        }
        if self.primes.len() != self.dims {
            return Err(Error::Config("primes length must equal dims".into()));
        }
        if self.primes.iter().any(|p| p % 2 == 0) {
            return Err(Error::Config("primes must be odd".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn levels(&self) -> usize {
        self.resolutions.len()
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn resolution(&self, level: usize) -> u32 {
        self.resolutions[level]
    }

    pub fn table_size(&self) -> u32 {
        self.table_size
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Corners per cell, `2^dims`.
    pub fn corners(&self) -> usize {
        1 << self.dims
    }

    /// Scalars in one level's table.
    pub fn table_len(&self) -> usize {
        self.table_size as usize * self.feature_dim
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<()> {
        if level >= self.levels() {
            return Err(Error::Shape(format!(
                "level {level} out of range for a {}-level grid",
                self.levels()
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box that maps scene coordinates onto the unit lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    min: ArrayVec<f64, MAX_DIMS>,
    max: ArrayVec<f64, MAX_DIMS>,
}

impl BoundingBox {
    pub fn new(min: &[f64], max: &[f64]) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                actual: max.len(),
            });
        }
        if !(1..=MAX_DIMS).contains(&min.len()) {
            return Err(Error::Config(format!(
                "bounding box must have 1 to 3 axes, got {}",
                min.len()
            )));
        }
        for (axis, (&lo, &hi)) in min.iter().zip(max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(Error::DegenerateBox {
                    axis,
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(BoundingBox {
            min: min.iter().copied().collect(),
            max: max.iter().copied().collect(),
        })
    }

    /// Tight box around a point set. Fails on any axis where every point
    /// shares the same coordinate.
    pub fn enclosing(points: &PointSet) -> Result<Self> {
        Self::enclosing_padded(points, 0.0)
    }

    /// Like [`BoundingBox::enclosing`], but zero-width axes are widened by
    /// `pad` in both directions.
    pub fn enclosing_padded(points: &PointSet, pad: f64) -> Result<Self> {
        let d = points.dims();
        let mut lo = [f64::INFINITY; MAX_DIMS];
        let mut hi = [f64::NEG_INFINITY; MAX_DIMS];
        for p in points.iter() {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        for k in 0..d {
            if hi[k] <= lo[k] {
                lo[k] -= pad;
                hi[k] += pad;
            }
        }
        Self::new(&lo[..d], &hi[..d])
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims()
            && point
                .iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: point.len(),
            });
        }
        for (axis, &x) in point.iter().enumerate() {
            let (lo, hi) = (self.min[axis], self.max[axis]);
            // Also rejects NaN.
            if !(x >= lo && x <= hi) {
                return Err(Error::OutOfBounds {
                    point: None,
                    axis,
                    value: x,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// Fixed query positions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dims: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dims: usize, coords: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_DIMS).contains(&dims) {
            return Err(Error::Config(format!("dims must be 1, 2 or 3, got {dims}")));
        }
        if coords.is_empty() || coords.len() % dims != 0 {
            return Err(Error::Shape(format!(
                "{} coordinates do not form a non-empty set of {dims}-d points",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: i / dims });
        }
        Ok(PointSet { dims, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dims: usize, rows: &[R]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(dims, coords)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dims..(index + 1) * self.dims]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dims)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Verifies every point lies inside `bbox`, reporting the first offender.
    pub fn check_within(&self, bbox: &BoundingBox) -> Result<()> {
        if bbox.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: bbox.dims(),
            });
        }
        for (i, p) in self.iter().enumerate() {
            bbox.check_point(p).map_err(|e| e.at_point(i))?;
        }
        Ok(())
    }
}

/// Integer lattice vertex at some level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexCoord(ArrayVec<u32, MAX_DIMS>);

impl VertexCoord {
    pub fn new(coords: &[u32]) -> Self {
        VertexCoord(coords.iter().copied().collect())
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }
}

impl std::ops::Deref for VertexCoord {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

/// Maps a scene-space point into `[0, resolution]` per axis.
pub fn scale_position(
    point: &[f64],
    bbox: &BoundingBox,
    resolution: u32,
) -> Result<ArrayVec<f64, MAX_DIMS>> {
    if resolution == 0 {
        return Err(Error::Config("resolution must be >= 1".into()));
    }
    bbox.check_point(point)?;
    let r = f64::from(resolution);
    Ok(point
        .iter()
        .zip(bbox.min.iter().zip(&bbox.max))
        .map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo) * r)
        .collect())
}

/// Lower corner of the cell containing `scaled`, clamped so the upper corner
/// stays on the lattice.
fn cell_base(scaled: &[f64], resolution: u32) -> Result<ArrayVec<u32, MAX_DIMS>> {
    if resolution == 0 {
        return Err(Error::Config("resolution must be >= 1".into()));
    }
    let r = f64::from(resolution);
    scaled
        .iter()
        .enumerate()
        .map(|(axis, &s)| {
            if !(s >= 0.0 && s <= r) {
                return Err(Error::OutOfBounds {
                    point: None,
                    axis,
                    value: s,
                    lo: 0.0,
                    hi: r,
                });
            }
            Ok((s.floor() as u32).min(resolution - 1))
        })
        .collect()
}

/// The `2^d` corners of the cell holding `scaled`. Corner `i` offsets axis
/// `k` by bit `k` of `i`.
pub fn corner_vertices(
    scaled: &[f64],
    resolution: u32,
) -> Result<ArrayVec<VertexCoord, MAX_CORNERS>> {
    let base = cell_base(scaled, resolution)?;
    let d = base.len();
    Ok((0..1usize << d)
        .map(|delta| {
            VertexCoord(
                base.iter()
                    .enumerate()
                    .map(|(k, &b)| b + ((delta >> k) & 1) as u32)
                    .collect(),
            )
        })
        .collect())
}

fn weights_from_base(scaled: &[f64], base: &[u32]) -> ArrayVec<f64, MAX_CORNERS> {
    let frac: ArrayVec<f64, MAX_DIMS> = scaled
        .iter()
        .zip(base)
        .map(|(&s, &b)| s - f64::from(b))
        .collect();
    (0..1usize << frac.len())
        .map(|delta| {
            frac.iter().enumerate().fold(1.0f64, |w, (k, &t)| {
                if (delta >> k) & 1 == 1 {
                    w * t
                } else {
                    w * (1.0 - t)
                }
            })
        })
        .collect()
}

/// Interpolation weights of the corners returned by [`corner_vertices`], in
/// the same order.
pub fn corner_weights(scaled: &[f64], resolution: u32) -> Result<ArrayVec<f64, MAX_CORNERS>> {
    let base = cell_base(scaled, resolution)?;
    Ok(weights_from_base(scaled, &base))
}

/// XOR of per-axis products (wrapping at 32 bits), reduced modulo the table
/// size.
#[inline]
pub fn hash_vertex(vertex: &[u32], primes: &[u32], table_size: u32) -> u32 {
    debug_assert!(table_size.is_power_of_two());
    let h = vertex
        .iter()
        .zip(primes)
        .fold(0u32, |acc, (&v, &p)| acc ^ v.wrapping_mul(p));
    h & (table_size - 1)
}

/// Read access to per-level feature rows.
pub trait FeatureSource {
    fn config(&self) -> &GridConfig;
    fn row(&self, level: usize, index: u32) -> &[f64];
}

/// Feature tables, one dense `table_size x feature_dim` array per level.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid {
    config: GridConfig,
    tables: Vec<Vec<f64>>,
}

impl HashGrid {
    pub fn new(config: GridConfig, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.len() != config.levels() {
            return Err(Error::Shape(format!(
                "expected {} tables, got {}",
                config.levels(),
                tables.len()
            )));
        }
        let f = config.feature_dim();
        for (level, table) in tables.iter().enumerate() {
            if table.len() != config.table_len() {
                return Err(Error::Shape(format!(
                    "level {level} table has {} scalars, expected {}",
                    table.len(),
                    config.table_len()
                )));
            }
            if let Some(i) = table.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row: i / f });
            }
        }
        Ok(HashGrid { config, tables })
    }

    /// Grid whose every row equals `fill`.
    pub fn filled(config: GridConfig, fill: &[f64]) -> Result<Self> {
        if fill.len() != config.feature_dim() {
            return Err(Error::Shape(format!(
                "fill has {} scalars, expected {}",
                fill.len(),
                config.feature_dim()
            )));
        }
        let table: Vec<f64> = fill
            .iter()
            .copied()
            .cycle()
            .take(config.table_len())
            .collect();
        let tables = vec![table; config.levels()];
        Self::new(config, tables)
    }

    pub fn zeros(config: GridConfig) -> Self {
        let tables = vec![vec![0.0; config.table_len()]; config.levels()];
        HashGrid { config, tables }
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn table(&self, level: usize) -> &[f64] {
        &self.tables[level]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub fn row(&self, level: usize, index: u32) -> &[f64] {
        let f = self.config.feature_dim;
        let start = index as usize * f;
        &self.tables[level][start..start + f]
    }

    pub fn set_row(&mut self, level: usize, index: u32, values: &[f64]) -> Result<()> {
        self.config.check_level(level)?;
        if index >= self.config.table_size {
            return Err(Error::Shape(format!("row {index} out of range")));
        }
        if values.len() != self.config.feature_dim {
            return Err(Error::Shape(format!(
                "row has {} scalars, expected {}",
                values.len(),
                self.config.feature_dim
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: index as usize,
            });
        }
        let f = self.config.feature_dim;
        let start = index as usize * f;
        self.tables[level][start..start + f].copy_from_slice(values);
        Ok(())
    }

    /// Applies `f` to every scalar; the result must stay finite.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let tables = self
            .tables
            .iter()
            .map(|t| t.iter().map(|&x| f(x)).collect())
            .collect();
        Self::new(self.config.clone(), tables)
    }
}

impl FeatureSource for HashGrid {
    fn config(&self) -> &GridConfig {
        &self.config
    }

    fn row(&self, level: usize, index: u32) -> &[f64] {
        HashGrid::row(self, level, index)
    }
}

/// d-linear interpolation at one level, reading rows through `source` and
/// writing the blended features into `out`.
pub fn interpolate_with<S: FeatureSource + ?Sized>(
    source: &S,
    level: usize,
    point: &[f64],
    bbox: &BoundingBox,
    out: &mut [f64],
) -> Result<()> {
    let config = source.config();
    config.check_level(level)?;
    if point.len() != config.dims() {
        return Err(Error::DimensionMismatch {
            expected: config.dims(),
            actual: point.len(),
        });
    }
    if out.len() != config.feature_dim() {
        return Err(Error::Shape(format!(
            "output has {} slots, expected {}",
            out.len(),
            config.feature_dim()
        )));
    }
    let resolution = config.resolution(level);
    let scaled = scale_position(point, bbox, resolution)?;
    let corners = corner_vertices(&scaled, resolution)?;
    // corners[0] is the clamped base cell.
    let weights = weights_from_base(&scaled, &corners[0]);

    out.fill(0.0);
    for (corner, &weight) in corners.iter().zip(&weights) {
        let index = hash_vertex(corner, config.primes(), config.table_size());
        for (acc, &v) in out.iter_mut().zip(source.row(level, index)) {
            *acc += weight * v;
        }
    }
    Ok(())
}

/// Interpolated feature vector of `point` at `level`.
pub fn interpolate(
    grid: &HashGrid,
    level: usize,
    point: &[f64],
    bbox: &BoundingBox,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.config().feature_dim()];
    interpolate_with(grid, level, point, bbox, &mut out)?;
    Ok(out)
}

/// Dense `N x L x F` interpolation output.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    points: usize,
    levels: usize,
    feature_dim: usize,
    values: Vec<f64>,
}

impl Interpolated {
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn row(&self, point: usize, level: usize) -> &[f64] {
        let start = (point * self.levels + level) * self.feature_dim;
        &self.values[start..start + self.feature_dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Interpolated) -> bool {
        self.points == other.points
            && self.levels == other.levels
            && self.feature_dim == other.feature_dim
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Interpolated) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Interpolates every point at every level. Points are evaluated in parallel;
/// the result does not depend on scheduling.
pub fn interpolate_all(
    grid: &HashGrid,
    points: &PointSet,
    bbox: &BoundingBox,
) -> Result<Interpolated> {
    let config = grid.config();
    if points.dims() != config.dims() {
        return Err(Error::DimensionMismatch {
            expected: config.dims(),
            actual: points.dims(),
        });
    }
    points.check_within(bbox)?;
    let (levels, f) = (config.levels(), config.feature_dim());
    let mut values = vec![0.0; points.len() * levels * f];
    values
        .par_chunks_mut(levels * f)
        .enumerate()
        .try_for_each(|(i, block)| {
            let p = points.point(i);
            for (level, out) in block.chunks_exact_mut(f).enumerate() {
                interpolate_with(grid, level, p, bbox, out).map_err(|e| e.at_point(i))?;
            }
            Ok::<_, Error>(())
        })?;
    Ok(Interpolated {
        points: points.len(),
        levels,
        feature_dim: f,
        values,
    })
}
