//! Shared fixtures for the criterion benches in `benches/`.

use diffgan_core::{DenseNet, GanConfig, GaussGrid};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal batch of shape `rows x cols`.
pub fn normal_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || r.sample(rand_distr::StandardNormal))
}

/// The default discriminator shape, 3-128-128-1.
pub fn discriminator(seed: u64) -> DenseNet {
    DenseNet::new(&[3, 128, 128, 1], &mut rng(seed)).expect("valid sizes")
}

/// The default generator shape, 2-128-128-2.
pub fn generator(seed: u64) -> DenseNet {
    DenseNet::new(&[2, 128, 128, 2], &mut rng(seed)).expect("valid sizes")
}

pub fn grid_data(n: usize) -> Array2<f64> {
    GaussGrid::default().sample(n, &mut rng(0))
}

pub fn default_config() -> GanConfig {
    GanConfig::default()
}
