mod common;

use hashgrid_prune::{
    corner_vertices, corner_weights, hash_vertex, interpolate, interpolate_all, scale_position,
    BoundingBox, GridConfig, HashGrid, PointSet,
};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::seq::SliceRandom;

/// Hash evaluated with arbitrary-precision integers: each product reduced
/// modulo 2^32, XORed, then reduced modulo the table size.
fn hash_bigint(vertex: &[u32], primes: &[u32], table_size: u32) -> u32 {
    let word = BigUint::from(1u64 << 32);
    let h = vertex
        .iter()
        .zip(primes)
        .map(|(&v, &p)| (BigUint::from(v) * BigUint::from(p)) % &word)
        .fold(BigUint::from(0u32), |acc, x| acc ^ x);
    let r = h % BigUint::from(table_size);
    r.to_u32_digits().first().copied().unwrap_or(0)
}

#[test]
fn hash_worked_example_against_bigint() {
    let primes = [1u32, 2_654_435_761];
    assert_eq!(hash_bigint(&[1, 1], &primes, 16), 0);
    assert_eq!(hash_vertex(&[1, 1], &primes, 16), 0);
    assert_eq!(hash_bigint(&[1, 0], &primes, 16), 1);
    assert_eq!(hash_vertex(&[0, 0], &primes, 16), 0);
}

fn primes_strategy(dims: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(any::<u32>().prop_map(|p| p | 1), dims - 1).prop_map(|rest| {
        let mut v = vec![1];
        v.extend(rest);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn hash_matches_bigint_and_stays_in_table(
        (vertex, primes) in (1usize..=3).prop_flat_map(|d| (
            prop::collection::vec(0u32..=(1 << 20), d),
            primes_strategy(d),
        )),
        log_t in 1u32..=22,
    ) {
        let t = 1u32 << log_t;
        let h = hash_vertex(&vertex, &primes, t);
        prop_assert!(h < t);
        prop_assert_eq!(h, hash_bigint(&vertex, &primes, t));
        prop_assert_eq!(h, hash_vertex(&vertex, &primes, t));
    }
}

proptest! {
    #[test]
    fn corners_are_distinct_and_on_lattice(
        (scaled, r) in (1usize..=3, 1u32..=1000).prop_flat_map(|(d, r)| (
            prop::collection::vec(0.0..=f64::from(r), d),
            Just(r),
        ))
    ) {
        let corners = corner_vertices(&scaled, r).unwrap();
        prop_assert_eq!(corners.len(), 1 << scaled.len());
        let mut sorted: Vec<_> = corners.iter().cloned().collect();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), corners.len());
        for c in &corners {
            prop_assert!(c.iter().all(|&x| x <= r));
        }
    }

    #[test]
    fn weights_partition_unity(
        (scaled, r) in (1usize..=3, 1u32..=1000).prop_flat_map(|(d, r)| (
            prop::collection::vec(0.0..=f64::from(r), d),
            Just(r),
        ))
    ) {
        let w = corner_weights(&scaled, r).unwrap();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn scale_is_affine(
        a in prop::collection::vec(0.0f64..=1.0, 3),
        b in prop::collection::vec(0.0f64..=1.0, 3),
        alpha in 0.0f64..=1.0,
        r in 1u32..=4096,
    ) {
        let bbox = BoundingBox::new(&[-3.0, 0.5, 100.0], &[7.0, 0.75, 2100.0]).unwrap();
        let to_scene = |u: &[f64]| -> Vec<f64> {
            u.iter()
                .zip(bbox.min().iter().zip(bbox.max()))
                .map(|(&t, (&lo, &hi))| (lo + t * (hi - lo)).clamp(lo, hi))
                .collect()
        };
        let (pa, pb) = (to_scene(&a), to_scene(&b));
        let mix: Vec<f64> = pa
            .iter()
            .zip(&pb)
            .zip(bbox.min().iter().zip(bbox.max()))
            .map(|((&x, &y), (&lo, &hi))| (alpha * x + (1.0 - alpha) * y).clamp(lo, hi))
            .collect();
        let sa = scale_position(&pa, &bbox, r).unwrap();
        let sb = scale_position(&pb, &bbox, r).unwrap();
        let sm = scale_position(&mix, &bbox, r).unwrap();
        for k in 0..3 {
            let lin = alpha * sa[k] + (1.0 - alpha) * sb[k];
            prop_assert!((sm[k] - lin).abs() <= 1e-9 * f64::from(r).max(1.0),
                "axis {k}: {} vs {lin}", sm[k]);
        }
    }
}

#[test]
fn integer_lattice_points_read_their_row_exactly() {
    let mut rng = common::rng(11);
    for d in 1..=3usize {
        for r in [1u32, 2, 3, 7, 16] {
            let config = GridConfig::new(d, vec![r], 64, 3).unwrap();
            let grid = hashgrid_prune::synth::random_grid(&config, u64::from(r) * 10 + d as u64);
            let rf = f64::from(r);
            let bbox = BoundingBox::new(&vec![0.0; d], &vec![rf; d]).unwrap();
            for _ in 0..50 {
                let v: Vec<u32> = (0..d).map(|_| rand::Rng::gen_range(&mut rng, 0..=r)).collect();
                let p: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
                let out = interpolate(&grid, 0, &p, &bbox).unwrap();
                let row = grid.row(0, hash_vertex(&v, config.primes(), 64));
                for (a, b) in out.iter().zip(row) {
                    assert_eq!(a.to_bits(), b.to_bits(), "d={d} r={r} v={v:?}");
                }
            }
        }
    }
}

#[test]
fn batch_matches_single_queries_bit_exactly() {
    for seed in 0..10 {
        let case = common::random_case(seed, 500);
        let all = interpolate_all(&case.grid, &case.points, &case.bbox).unwrap();
        for (i, p) in case.points.iter().enumerate() {
            for level in 0..case.config().levels() {
                let single = interpolate(&case.grid, level, p, &case.bbox).unwrap();
                let batch = all.row(i, level);
                assert!(single.iter().zip(batch).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }
}

#[test]
fn batch_is_equivariant_under_permutation_and_duplication() {
    for seed in 20..30 {
        let case = common::random_case(seed, 2000);
        let d = case.points.dims();
        let base = interpolate_all(&case.grid, &case.points, &case.bbox).unwrap();

        let mut order: Vec<usize> = (0..case.points.len()).collect();
        order.shuffle(&mut common::rng(seed + 1000));
        order.push(order[0]);
        let rows: Vec<&[f64]> = order.iter().map(|&i| case.points.point(i)).collect();
        let permuted = PointSet::from_rows(d, &rows).unwrap();
        let out = interpolate_all(&case.grid, &permuted, &case.bbox).unwrap();
        for (j, &i) in order.iter().enumerate() {
            for level in 0..case.config().levels() {
                let (a, b) = (out.row(j, level), base.row(i, level));
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}

#[test]
fn single_point_batch_equals_per_level_calls() {
    let config = GridConfig::new(3, vec![2, 5, 9, 33], 256, 2).unwrap();
    let grid: HashGrid = hashgrid_prune::synth::random_grid(&config, 1);
    let bbox = BoundingBox::new(&[0.0; 3], &[1.0; 3]).unwrap();
    let points = PointSet::new(3, vec![0.3, 0.61, 0.99]).unwrap();
    let all = interpolate_all(&grid, &points, &bbox).unwrap();
    for level in 0..4 {
        assert_eq!(all.row(0, level), interpolate(&grid, level, points.point(0), &bbox).unwrap());
    }
}
