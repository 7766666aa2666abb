//! Validity masks over hash-table rows, and packing of the valid rows.
//!
//! A row is valid at a level when at least one query point has a cell corner
//! that hashes to it. Only valid rows are ever read by interpolation over the
//! query points, so the remaining rows can be dropped and later refilled with
//! anything.

use std::cell::RefCell;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    hash_vertex, interpolate_with, BoundingBox, FeatureSource, GridConfig, HashGrid, PointSet,
    MAX_DIMS,
};

/// Per-level bitset of valid table rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    table_size: u32,
    levels: Vec<FixedBitSet>,
    counts: Vec<u32>,
}

impl ValidityMask {
    /// Wraps raw per-level bitsets. Every level must mark at least one row.
    pub fn from_bitsets(table_size: u32, levels: Vec<FixedBitSet>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Shape("mask needs at least one level".into()));
        }
        let mut counts = Vec::with_capacity(levels.len());
        for (level, bits) in levels.iter().enumerate() {
            if bits.len() != table_size as usize {
                return Err(Error::Shape(format!(
                    "level {level} bitset has {} bits, expected {table_size}",
                    bits.len()
                )));
            }
            let count = bits.count_ones(..) as u32;
            if count == 0 {
                return Err(Error::EmptyLevel { level });
            }
            counts.push(count);
        }
        Ok(ValidityMask {
            table_size,
            levels,
            counts,
        })
    }

    /// Mask with every row of every level marked valid.
    pub fn full(config: &GridConfig) -> Self {
        let mut bits = FixedBitSet::with_capacity(config.table_size() as usize);
        bits.insert_range(..);
        ValidityMask {
            table_size: config.table_size(),
            levels: vec![bits; config.levels()],
            counts: vec![config.table_size(); config.levels()],
        }
    }

    pub fn table_size(&self) -> u32 {
        self.table_size
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> &FixedBitSet {
        &self.levels[level]
    }

    pub fn is_valid(&self, level: usize, index: u32) -> bool {
        self.levels[level].contains(index as usize)
    }

    pub fn valid_counts(&self) -> &[u32] {
        &self.counts
    }

    /// Valid row indices at `level`, ascending.
    pub fn valid_indices(&self, level: usize) -> impl Iterator<Item = u32> + '_ {
        self.levels[level].ones().map(|i| i as u32)
    }

    pub fn valid_ratio(&self, level: usize) -> f64 {
        f64::from(self.counts[level]) / f64::from(self.table_size)
    }

    pub fn mean_valid_ratio(&self) -> f64 {
        (0..self.levels()).map(|l| self.valid_ratio(l)).sum::<f64>() / self.levels() as f64
    }

    pub fn total_valid(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// First `(level, index)` at which the two masks disagree.
    pub fn first_difference(&self, other: &ValidityMask) -> Option<(usize, u32)> {
        for (level, (a, b)) in self.levels.iter().zip(&other.levels).enumerate() {
            if let Some(i) = a.symmetric_difference(b).next() {
                return Some((level, i as u32));
            }
        }
        None
    }

    pub(crate) fn check_config(&self, config: &GridConfig) -> Result<()> {
        if self.table_size != config.table_size() || self.levels() != config.levels() {
            return Err(Error::Config(format!(
                "mask shape {} levels x {} rows does not match grid {} levels x {} rows",
                self.levels(),
                self.table_size,
                config.levels(),
                config.table_size()
            )));
        }
        Ok(())
    }
}

fn empty_bitsets(config: &GridConfig) -> Vec<FixedBitSet> {
    vec![FixedBitSet::with_capacity(config.table_size() as usize); config.levels()]
}

fn check_inputs(points: &PointSet, config: &GridConfig, bbox: &BoundingBox) -> Result<()> {
    if points.dims() != config.dims() {
        return Err(Error::DimensionMismatch {
            expected: config.dims(),
            actual: points.dims(),
        });
    }
    points.check_within(bbox)
}

/// Marks the hashed corners of every point's cell at every level.
fn mark_point(point: &[f64], config: &GridConfig, bbox: &BoundingBox, bits: &mut [FixedBitSet]) {
    let d = config.dims();
    let (lo, hi) = (bbox.min(), bbox.max());
    let mut base = [0u32; MAX_DIMS];
    let mut vertex = [0u32; MAX_DIMS];
    for (level, set) in bits.iter_mut().enumerate() {
        let r = config.resolution(level);
        for k in 0..d {
            let t = (point[k] - lo[k]) / (hi[k] - lo[k]) * f64::from(r);
            base[k] = (t.floor() as u32).min(r - 1);
        }
        for delta in 0..1u32 << d {
            for k in 0..d {
                vertex[k] = base[k] + ((delta >> k) & 1);
            }
            let index = hash_vertex(&vertex[..d], config.primes(), config.table_size());
            set.insert(index as usize);
        }
    }
}

/// Valid rows per level for the given query points. Evaluated in parallel;
/// the union is order-independent.
pub fn compute_validity(
    points: &PointSet,
    config: &GridConfig,
    bbox: &BoundingBox,
) -> Result<ValidityMask> {
    check_inputs(points, config, bbox)?;
    let bits = points
        .coords()
        .par_chunks(points.dims())
        .fold(
            || empty_bitsets(config),
            |mut acc, p| {
                mark_point(p, config, bbox, &mut acc);
                acc
            },
        )
        .reduce(
            || empty_bitsets(config),
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.union_with(y);
                }
                a
            },
        );
    ValidityMask::from_bitsets(config.table_size(), bits)
}

/// Feature source that serves zero rows and records every row requested.
#[derive(Debug)]
pub struct AccessRecorder<'a> {
    config: &'a GridConfig,
    zero_row: Vec<f64>,
    touched: RefCell<Vec<FixedBitSet>>,
}

impl<'a> AccessRecorder<'a> {
    pub fn new(config: &'a GridConfig) -> Self {
        AccessRecorder {
            config,
            zero_row: vec![0.0; config.feature_dim()],
            touched: RefCell::new(empty_bitsets(config)),
        }
    }

    /// Number of distinct rows read so far, summed over levels.
    pub fn touched_count(&self) -> usize {
        self.touched.borrow().iter().map(|b| b.count_ones(..)).sum()
    }

    pub fn into_bitsets(self) -> Vec<FixedBitSet> {
        self.touched.into_inner()
    }
}

impl FeatureSource for AccessRecorder<'_> {
    fn config(&self) -> &GridConfig {
        self.config
    }

    fn row(&self, level: usize, index: u32) -> &[f64] {
        self.touched.borrow_mut()[level].insert(index as usize);
        &self.zero_row
    }
}

/// Reference mask obtained by running interpolation over every point and
/// recording which rows it reads.
pub fn touched_indices_oracle(
    points: &PointSet,
    config: &GridConfig,
    bbox: &BoundingBox,
) -> Result<ValidityMask> {
    check_inputs(points, config, bbox)?;
    let recorder = AccessRecorder::new(config);
    let mut out = vec![0.0; config.feature_dim()];
    for (i, p) in points.iter().enumerate() {
        for level in 0..config.levels() {
            interpolate_with(&recorder, level, p, bbox, &mut out).map_err(|e| e.at_point(i))?;
        }
    }
    ValidityMask::from_bitsets(config.table_size(), recorder.into_bitsets())
}

/// Valid rows of each level, in ascending table-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedFeatures {
    feature_dim: usize,
    levels: Vec<Vec<f64>>,
}

impl PackedFeatures {
    pub fn new(feature_dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Shape("feature_dim must be >= 1".into()));
        }
        for (level, rows) in levels.iter().enumerate() {
            if rows.len() % feature_dim != 0 {
                return Err(Error::Shape(format!(
                    "level {level} holds {} scalars, not a multiple of {feature_dim}",
                    rows.len()
                )));
            }
        }
        Ok(PackedFeatures {
            feature_dim,
            levels,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> &[f64] {
        &self.levels[level]
    }

    pub fn rows(&self, level: usize) -> usize {
        self.levels[level].len() / self.feature_dim
    }

    pub fn total_scalars(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn into_levels(self) -> Vec<Vec<f64>> {
        self.levels
    }
}

/// Copies the valid rows out of `grid`.
pub fn pack(grid: &HashGrid, mask: &ValidityMask) -> Result<PackedFeatures> {
    let config = grid.config();
    mask.check_config(config)?;
    let levels = (0..config.levels())
        .map(|level| {
            let mut rows =
                Vec::with_capacity(mask.valid_counts()[level] as usize * config.feature_dim());
            for index in mask.valid_indices(level) {
                rows.extend_from_slice(grid.row(level, index));
            }
            rows
        })
        .collect();
    PackedFeatures::new(config.feature_dim(), levels)
}

/// Scatters packed rows back to their table positions; every other row is
/// set to `fill`.
pub fn unpack(
    packed: &PackedFeatures,
    mask: &ValidityMask,
    config: &GridConfig,
    fill: &[f64],
) -> Result<HashGrid> {
    mask.check_config(config)?;
    let f = config.feature_dim();
    if packed.feature_dim() != f || packed.levels() != config.levels() {
        return Err(Error::Shape(format!(
            "packed features are {} levels x {} wide, grid expects {} x {f}",
            packed.levels(),
            packed.feature_dim(),
            config.levels()
        )));
    }
    for level in 0..config.levels() {
        let expected = mask.valid_counts()[level] as usize;
        if packed.rows(level) != expected {
            return Err(Error::CountMismatch {
                level,
                expected,
                actual: packed.rows(level),
            });
        }
    }
    let mut grid = HashGrid::filled(config.clone(), fill)?;
    for level in 0..config.levels() {
        for (index, row) in mask.valid_indices(level).zip(packed.level(level).chunks_exact(f)) {
            grid.set_row(level, index, row)?;
        }
    }
    Ok(grid)
}

/// `unpack` with the all-zero fill.
pub fn unpack_zero(
    packed: &PackedFeatures,
    mask: &ValidityMask,
    config: &GridConfig,
) -> Result<HashGrid> {
    unpack(packed, mask, config, &vec![0.0; config.feature_dim()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::interpolate_all;

    fn unit_box(d: usize) -> BoundingBox {
        BoundingBox::new(&vec![0.0; d], &vec![1.0; d]).unwrap()
    }

    fn ramp_grid(config: &GridConfig) -> HashGrid {
        let tables = (0..config.levels())
            .map(|l| {
                (0..config.table_len())
                    .map(|i| (i as f64 + 0.5) * 0.01 + l as f64)
                    .collect()
            })
            .collect();
        HashGrid::new(config.clone(), tables).unwrap()
    }

    #[test]
    fn single_point_marks_four_corners() {
        let config = GridConfig::new(2, vec![4, 8, 16], 1 << 20, 1).unwrap();
        let points = PointSet::new(2, vec![0.3, 0.7]).unwrap();
        let mask = compute_validity(&points, &config, &unit_box(2)).unwrap();
        assert_eq!(mask.valid_counts(), &[4, 4, 4]);
    }

    #[test]
    fn worked_example_bits() {
        // (1.5, 2.25) in lattice units at R = 4.
        let config = GridConfig::new(2, vec![4], 16, 1).unwrap();
        let bbox = BoundingBox::new(&[0.0, 0.0], &[4.0, 4.0]).unwrap();
        let points = PointSet::new(2, vec![1.5, 2.25]).unwrap();
        let mask = compute_validity(&points, &config, &bbox).unwrap();
        // 2*pi_2 mod 2^32 = 1013904226, 3*pi_2 mod 2^32 = 3668339987.
        let expected: Vec<u32> = vec![
            (1 ^ 1_013_904_226u32) & 15,
            (2 ^ 1_013_904_226u32) & 15,
            (1 ^ 3_668_339_987u32) & 15,
            (2 ^ 3_668_339_987u32) & 15,
        ];
        let mut expected_sorted = expected.clone();
        expected_sorted.sort_unstable();
        expected_sorted.dedup();
        assert_eq!(mask.valid_indices(0).collect::<Vec<_>>(), expected_sorted);
    }

    #[test]
    fn saturating_lattice_marks_every_row() {
        // 17x17 vertices touched at R = 16 against a 64-row table.
        let config = GridConfig::new(2, vec![16], 64, 1).unwrap();
        let mut coords = Vec::new();
        for i in 0..16 {
            for j in 0..16 {
                coords.push((i as f64 + 0.5) / 16.0);
                coords.push((j as f64 + 0.5) / 16.0);
            }
        }
        let points = PointSet::new(2, coords).unwrap();
        let mask = compute_validity(&points, &config, &unit_box(2)).unwrap();
        assert_eq!(mask.valid_counts(), &[64]);
    }

    #[test]
    fn fresh_recorder_is_empty() {
        let config = GridConfig::new(3, vec![4, 8], 256, 2).unwrap();
        let recorder = AccessRecorder::new(&config);
        assert_eq!(recorder.touched_count(), 0);
        assert!(recorder.into_bitsets().iter().all(|b| b.count_ones(..) == 0));
    }

    #[test]
    fn oracle_matches_on_small_case() {
        let config = GridConfig::new(3, vec![2, 5, 11], 128, 1).unwrap();
        let points =
            PointSet::new(3, vec![0.1, 0.2, 0.3, 0.9, 0.9, 0.1, 1.0, 1.0, 1.0, 0.0, 0.5, 0.25])
                .unwrap();
        let bbox = unit_box(3);
        assert_eq!(
            compute_validity(&points, &config, &bbox).unwrap(),
            touched_indices_oracle(&points, &config, &bbox).unwrap()
        );
    }

    #[test]
    fn out_of_bounds_point_reports_index_and_axis() {
        let config = GridConfig::new(2, vec![4], 16, 1).unwrap();
        let points = PointSet::new(2, vec![0.5, 0.5, 0.2, 1.2]).unwrap();
        for result in [
            compute_validity(&points, &config, &unit_box(2)),
            touched_indices_oracle(&points, &config, &unit_box(2)),
        ] {
            match result {
                Err(Error::OutOfBounds { point, axis, .. }) => {
                    assert_eq!((point, axis), (Some(1), 1));
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn full_mask_packs_everything() {
        let config = GridConfig::new(2, vec![4, 8], 32, 3).unwrap();
        let grid = ramp_grid(&config);
        let packed = pack(&grid, &ValidityMask::full(&config)).unwrap();
        assert_eq!(packed.into_levels(), grid.tables().to_vec());
    }

    #[test]
    fn single_bit_packs_one_row() {
        let config = GridConfig::new(1, vec![4, 8], 32, 2).unwrap();
        let grid = ramp_grid(&config);
        let mut bits = vec![FixedBitSet::with_capacity(32); 2];
        bits[0].insert(3);
        bits[1].insert(17);
        let mask = ValidityMask::from_bitsets(32, bits).unwrap();
        let packed = pack(&grid, &mask).unwrap();
        assert_eq!(packed.level(0), grid.row(0, 3));
        assert_eq!(packed.level(1), grid.row(1, 17));
        assert_eq!(packed.total_scalars(), 4);
    }

    #[test]
    fn empty_level_rejected() {
        let mut bits = vec![FixedBitSet::with_capacity(16); 2];
        bits[0].insert(1);
        assert!(matches!(
            ValidityMask::from_bitsets(16, bits),
            Err(Error::EmptyLevel { level: 1 })
        ));
    }

    #[test]
    fn unpack_restores_valid_rows_and_fills_rest() {
        let config = GridConfig::new(2, vec![3, 6], 64, 2).unwrap();
        let grid = ramp_grid(&config);
        let points = PointSet::new(2, vec![0.2, 0.2, 0.8, 0.4]).unwrap();
        let mask = compute_validity(&points, &config, &unit_box(2)).unwrap();
        let restored = unpack_zero(&pack(&grid, &mask).unwrap(), &mask, &config).unwrap();
        for level in 0..2 {
            for i in 0..64 {
                if mask.is_valid(level, i) {
                    assert_eq!(restored.row(level, i), grid.row(level, i));
                } else {
                    assert_eq!(restored.row(level, i), &[0.0, 0.0]);
                }
            }
        }
    }

    #[test]
    fn fill_value_does_not_change_inference() {
        let config = GridConfig::new(3, vec![4, 9, 20], 256, 2).unwrap();
        let grid = ramp_grid(&config);
        let points = PointSet::new(3, vec![0.1, 0.5, 0.9, 0.33, 0.34, 0.35, 1.0, 0.0, 0.5])
            .unwrap();
        let bbox = unit_box(3);
        let mask = compute_validity(&points, &config, &bbox).unwrap();
        let packed = pack(&grid, &mask).unwrap();
        let zero = unpack(&packed, &mask, &config, &[0.0, 0.0]).unwrap();
        let big = unpack(&packed, &mask, &config, &[999.0, 999.0]).unwrap();
        let a = interpolate_all(&zero, &points, &bbox).unwrap();
        let b = interpolate_all(&big, &points, &bbox).unwrap();
        let c = interpolate_all(&grid, &points, &bbox).unwrap();
        assert!(a.bit_eq(&b));
        assert!(a.bit_eq(&c));
    }

    #[test]
    fn unpack_count_mismatch_names_level() {
        let config = GridConfig::new(1, vec![2, 4], 16, 1).unwrap();
        let mask = ValidityMask::full(&config);
        let packed = PackedFeatures::new(1, vec![vec![0.0; 16], vec![0.0; 15]]).unwrap();
        assert!(matches!(
            unpack_zero(&packed, &mask, &config),
            Err(Error::CountMismatch {
                level: 1,
                expected: 16,
                actual: 15
            })
        ));
    }

    #[test]
    fn pack_shape_mismatch() {
        let config = GridConfig::new(1, vec![2, 4], 16, 1).unwrap();
        let other = GridConfig::new(1, vec![2, 4], 32, 1).unwrap();
        assert!(matches!(
            pack(&HashGrid::zeros(config), &ValidityMask::full(&other)),
            Err(Error::Config(_))
        ));
    }
}
