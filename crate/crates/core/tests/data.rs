mod common;

use common::{assert_within, binomial_band, Moments};
use diffgan_core::data::{fmt_real, read_csv, write_csv};
use diffgan_core::{coverage, GaussGrid};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mass of a standard 2-D normal inside radius `k`: the chi-square(2) CDF.
fn chi2_2dof_cdf(k: f64) -> f64 {
    1.0 - (-k * k / 2.0).exp()
}

#[test]
fn degenerate_sampling() {
    let grid = GaussGrid::grid25(0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(grid.sample(0, &mut rng).nrows(), 0);
    let pts = grid.sample(500, &mut rng);
    for row in pts.rows() {
        assert!(grid.centers.contains(&[row[0], row[1]]));
    }
}

#[test]
fn component_frequencies_are_multinomial() {
    let grid = GaussGrid::default();
    let n = 1_000_000;
    let pts = grid.sample(n, &mut ChaCha8Rng::seed_from_u64(21));
    let mut counts = [0usize; 25];
    for row in pts.rows() {
        counts[grid.nearest([row[0], row[1]]).0] += 1;
    }
    let p = 1.0 / 25.0;
    for (i, &c) in counts.iter().enumerate() {
        let freq = c as f64 / n as f64;
        assert!((freq - p).abs() <= binomial_band(p, n as f64), "mode {i}: {freq}");
    }
}

#[test]
fn sample_moments() {
    let grid = GaussGrid::default();
    let pts = grid.sample(200_000, &mut ChaCha8Rng::seed_from_u64(8));
    let center_var = (16.0 + 4.0 + 0.0 + 4.0 + 16.0) / 5.0;
    for axis in pts.axis_iter(Axis(1)) {
        let mut m = Moments::default();
        axis.iter().for_each(|&v| m.push(v));
        assert_within("mean", m.mean(), 0.0, m.mean_se(), 3.0);
        assert_within("variance", m.variance(), center_var + 0.05 * 0.05, m.variance_se(), 3.0);
    }
}

#[test]
fn coverage_examples() {
    let grid = GaussGrid::default();
    let centers = Array2::from_shape_fn((25, 2), |(i, j)| grid.centers[i][j]);
    let r = coverage(centers.view(), &grid, 3.0).unwrap();
    assert_eq!((r.modes_covered, r.high_quality_fraction), (25, 1.0));

    let one = Array2::from_shape_fn((100, 2), |(_, j)| grid.centers[7][j]);
    let r = coverage(one.view(), &grid, 3.0).unwrap();
    assert_eq!(r.modes_covered, 1);
    assert_eq!(r.counts[7], 100);

    let empty = Array2::<f64>::zeros((0, 2));
    let r = coverage(empty.view(), &grid, 3.0).unwrap();
    assert_eq!((r.modes_covered, r.high_quality_fraction, r.num_samples), (0, 0.0, 0));

    assert!(coverage(one.view(), &grid, 0.0).is_err());
    assert!(coverage(Array2::<f64>::zeros((3, 3)).view(), &grid, 3.0).is_err());
}

#[test]
fn ground_truth_coverage_matches_chi_square() {
    let grid = GaussGrid::default();
    let n = 100_000;
    let pts = grid.sample(n, &mut ChaCha8Rng::seed_from_u64(99));
    let r = coverage(pts.view(), &grid, 3.0).unwrap();
    assert!(r.modes_covered >= 24);
    assert_eq!(r.counts.iter().sum::<usize>() as f64 / n as f64, r.high_quality_fraction);
    let p = chi2_2dof_cdf(3.0);
    assert!((r.high_quality_fraction - p).abs() <= binomial_band(p, n as f64), "{} vs {p}", r.high_quality_fraction);
}

#[test]
fn csv_edge_cases() {
    assert_eq!(read_csv("".as_bytes()).unwrap().nrows(), 0);
    let err = read_csv("1,2\n3,4\n5,x\n".as_bytes()).unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
    let err = read_csv("1,2\n3\n".as_bytes()).unwrap_err().to_string();
    assert!(err.contains('2'), "{err}");
    assert_eq!(fmt_real(1e-300).parse::<f64>().unwrap(), 1e-300);
    assert_eq!(fmt_real(0.25), "0.25");
}

proptest! {
    #[test]
    fn coverage_is_permutation_invariant(seed in any::<u64>(), n in 0usize..400, k in 0.5f64..40.0) {
        let grid = GaussGrid::grid25(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = grid.sample(n, &mut rng);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled = pts.select(Axis(0), &order);
        let a = coverage(pts.view(), &grid, k).unwrap();
        let b = coverage(shuffled.view(), &grid, k).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_is_exact(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 0..60)) {
        let n = values.len() / 2;
        let pts = Array2::from_shape_vec((n, 2), values[..2 * n].to_vec()).unwrap();
        let mut buf = Vec::new();
        write_csv(pts.view(), &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.shape(), pts.shape());
        for (a, b) in back.iter().zip(pts.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
