#![allow(dead_code)]

use hashgrid_prune::synth::random_grid;
use hashgrid_prune::{BoundingBox, GridConfig, HashGrid, PointSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One randomized (grid, points, box) case.
pub struct Case {
    pub seed: u64,
    pub grid: HashGrid,
    pub points: PointSet,
    pub bbox: BoundingBox,
}

impl Case {
    pub fn config(&self) -> &GridConfig {
        self.grid.config()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random config: dims 1-3, levels 1-8, table 2^4-2^16, features 1-4.
pub fn random_config(rng: &mut ChaCha8Rng) -> GridConfig {
    let dims = rng.gen_range(1..=3);
    let levels = rng.gen_range(1..=8);
    let log_t = rng.gen_range(4..=16);
    let feature_dim = rng.gen_range(1..=4);
    let mut resolutions: Vec<u32> = (0..levels).map(|_| rng.gen_range(1..=600)).collect();
    resolutions.sort_unstable();
    GridConfig::new(dims, resolutions, 1 << log_t, feature_dim).unwrap()
}

pub fn random_bbox(rng: &mut ChaCha8Rng, dims: usize) -> BoundingBox {
    let min: Vec<f64> = (0..dims).map(|_| rng.gen_range(-50.0..50.0)).collect();
    let max: Vec<f64> = min.iter().map(|&m| m + rng.gen_range(0.01..100.0)).collect();
    BoundingBox::new(&min, &max).unwrap()
}

/// Clustered points inside `bbox`, with some exact boundary points and
/// duplicates mixed in.
pub fn random_points(rng: &mut ChaCha8Rng, bbox: &BoundingBox, n: usize) -> PointSet {
    let d = bbox.dims();
    let (lo, hi) = (bbox.min().to_vec(), bbox.max().to_vec());
    let clusters = rng.gen_range(1..=5);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..d).map(|k| rng.gen_range(lo[k]..=hi[k])).collect())
        .collect();
    let spread: f64 = rng.gen_range(0.005..0.5);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let row = match rng.gen_range(0..20) {
            0 => (0..d).map(|k| if rng.gen() { lo[k] } else { hi[k] }).collect(),
            1 if i > 0 => rows[rng.gen_range(0..i)].clone(),
            _ => {
                let c = &centres[rng.gen_range(0..clusters)];
                (0..d)
                    .map(|k| {
                        let w = (hi[k] - lo[k]) * spread;
                        (c[k] + rng.gen_range(-w..=w)).clamp(lo[k], hi[k])
                    })
                    .collect()
            }
        };
        rows.push(row);
    }
    rows.shuffle(rng);
    PointSet::from_rows(d, &rows).unwrap()
}

/// Case with N drawn log-uniformly from 1..=max_points.
pub fn random_case(seed: u64, max_points: usize) -> Case {
    let mut rng = rng(seed);
    let config = random_config(&mut rng);
    let bbox = random_bbox(&mut rng, config.dims());
    let log_max = (max_points as f64).ln();
    let n = (rng.gen_range(0.0..=log_max).exp().round() as usize).clamp(1, max_points);
    let points = random_points(&mut rng, &bbox, n);
    let grid = random_grid(&config, seed ^ 0x9E37_79B9_7F4A_7C15);
    Case {
        seed,
        grid,
        points,
        bbox,
    }
}

/// Copy of `grid` with every row outside `keep` replaced by random values.
pub fn scramble_invalid_rows(
    grid: &HashGrid,
    mask: &hashgrid_prune::ValidityMask,
    seed: u64,
) -> HashGrid {
    let mut rng = rng(seed);
    let mut out = grid.clone();
    let f = grid.config().feature_dim();
    for level in 0..grid.config().levels() {
        for i in 0..grid.config().table_size() {
            if !mask.is_valid(level, i) {
                let row: Vec<f64> = (0..f).map(|_| rng.gen_range(-1e3..1e3)).collect();
                out.set_row(level, i, &row).unwrap();
            }
        }
    }
    out
}
