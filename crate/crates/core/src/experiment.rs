//! Seeded end-to-end runs shared by the command-line tool and the acceptance tests.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{coverage, CoverageReport, GaussGrid};
use crate::error::{Error, Result};
use crate::trainer::{sample_generator, train, GanConfig, TrainOutput};

/// Points drawn from the target mixture before training starts.
pub const DEFAULT_DATA_SIZE: usize = 100_000;
/// Generated points scored after training.
pub const DEFAULT_EVAL_SAMPLES: usize = 10_000;

/// Seed of the training-set stream for a run seeded with `seed`.
pub fn data_seed(seed: u64) -> u64 {
    seed ^ 0xDA7A
}

/// Seed of the post-training sampling stream.
pub fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(1000)
}

pub fn grid_dataset(grid: &GaussGrid, n: usize, seed: u64) -> Array2<f64> {
    grid.sample(n, &mut ChaCha8Rng::seed_from_u64(data_seed(seed)))
}

/// `n` draws from `N(mean, std^2 I)`.
pub fn gaussian_dataset(mean: &[f64], std: f64, n: usize, seed: u64) -> Result<Array2<f64>> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::Param(format!("std must be >= 0, got {std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(data_seed(seed));
    Ok(Array2::from_shape_fn((n, mean.len()), |(_, j)| mean[j] + std * rng.sample::<f64, _>(StandardNormal)))
}

/// Adds `sigma * N(0, I)` to every coordinate, drawing from its own stream.
pub fn add_noise(points: ArrayView2<f64>, sigma: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0015E);
    points.mapv(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Sample standard deviation of each column (divisor `n - 1`).
pub fn column_std(points: ArrayView2<f64>) -> Vec<f64> {
    if points.nrows() < 2 {
        return vec![0.0; points.ncols()];
    }
    points.std_axis(Axis(0), 1.0).to_vec()
}

/// A finished training run with its evaluation samples.
#[derive(Debug, Clone)]
pub struct Run {
    pub output: TrainOutput,
    pub samples: Array2<f64>,
}

/// Trains on `dataset` and draws `eval_samples` generated points.
pub fn run(dataset: ArrayView2<f64>, config: &GanConfig, eval_samples: usize) -> Result<Run> {
    let output = train(dataset, config)?;
    let samples =
        sample_generator(&output.generator, eval_samples, &mut ChaCha8Rng::seed_from_u64(eval_seed(config.seed)))?;
    Ok(Run { output, samples })
}

/// A run on the 25-Gaussians scored for mode coverage.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub run: Run,
    pub coverage: CoverageReport,
}

pub fn run_grid(
    config: &GanConfig,
    grid: &GaussGrid,
    data_size: usize,
    eval_samples: usize,
    k_sigma: f64,
) -> Result<GridRun> {
    let dataset = grid_dataset(grid, data_size, config.seed);
    let run = run(dataset.view(), config, eval_samples)?;
    let coverage = coverage(run.samples.view(), grid, k_sigma)?;
    Ok(GridRun { run, coverage })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datasets_are_seeded() {
        let g = GaussGrid::default();
        assert_eq!(grid_dataset(&g, 50, 3), grid_dataset(&g, 50, 3));
        assert_ne!(grid_dataset(&g, 50, 3), grid_dataset(&g, 50, 4));
        let a = gaussian_dataset(&[3.0, 3.0], 0.0, 10, 1).unwrap();
        assert!(a.iter().all(|&v| v == 3.0));
        assert!(gaussian_dataset(&[0.0], -1.0, 1, 1).is_err());
    }

    #[test]
    fn column_std_small_cases() {
        assert_eq!(column_std(Array2::zeros((1, 2)).view()), vec![0.0, 0.0]);
        let x = ndarray::array![[0.0, 1.0], [2.0, 1.0]];
        let s = column_std(x.view());
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-15 && s[1] == 0.0);
    }

    #[test]
    fn zero_step_grid_run() {
        let config = GanConfig { total_steps: 0, hidden: vec![8], ..Default::default() };
        let r = run_grid(&config, &GaussGrid::default(), 100, 500, 3.0).unwrap();
        assert_eq!(r.run.samples.dim(), (500, 2));
        assert_eq!(r.coverage.num_samples, 500);
        assert!(r.run.output.trace.records.is_empty());
    }
}
