//! Finite-difference checks of the hand-written gradients.
//!
//! The reference values here only ever call forward passes
//! ([`DenseNet::forward`], [`DiffusionSchedule::diffuse`]), so they are
//! independent of the backward code they check.
//!
//! Each derivative uses the five-point stencil
//! `(f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h`. The step is the largest of
//! [`STEPS`] for which every stencil point keeps the leaky-ReLU activation
//! pattern of the center, so the difference never straddles a kink while
//! keeping rounding error (which grows like `1/h`) small.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::net::{cond_batch, DenseNet};
use crate::schedule::DiffusionSchedule;
use crate::trainer::{generator_objective, softplus};

/// Candidate steps, tried from largest to smallest.
pub const STEPS: [f64; 5] = [1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
/// Denominator floor of the relative error, so that gradients that are
/// zero up to rounding do not produce spurious large ratios.
pub const REL_ERR_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

impl GradCheck {
    const EMPTY: Self = Self { max_rel_err: 0.0, checked: 0 };

    fn merge(self, other: Self) -> Self {
        Self { max_rel_err: self.max_rel_err.max(other.max_rel_err), checked: self.checked + other.checked }
    }
}

/// Derivative at 0 of `eval`, which returns the objective and the activation
/// pattern at a displacement. Falls back to the smallest step when every
/// candidate crosses a kink.
pub fn stencil_derivative<F>(mut eval: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, Vec<bool>)>,
{
    let (_, center) = eval(0.0)?;
    let mut last = 0.0;
    for &h in &STEPS {
        let mut same = true;
        let mut f = [0.0; 4];
        for (slot, k) in f.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
            let (v, pattern) = eval(k * h)?;
            same &= pattern == center;
            *slot = v;
        }
        last = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h);
        if same {
            break;
        }
    }
    Ok(last)
}

/// `sum(out_grad .* net(x))` and the activation pattern at `x`.
fn net_objective(net: &DenseNet, x: ArrayView2<f64>, out_grad: ArrayView2<f64>) -> Result<(f64, Vec<bool>)> {
    let (y, cache) = net.forward(x)?;
    Ok(((&y * &out_grad).sum(), cache.activation_pattern()))
}

/// Compares [`DenseNet::backward`] on `sum(out_grad .* net(x))` against
/// finite differences, for every parameter and every input entry.
pub fn check_net(net: &DenseNet, x: ArrayView2<f64>, out_grad: ArrayView2<f64>) -> Result<GradCheck> {
    let (_, cache) = net.forward(x)?;
    let (grads, input_grad) = net.backward(&cache, out_grad)?;

    let mut worst = 0.0f64;
    let analytic = grads.flatten();
    let mut probe = net.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = stencil_derivative(|d| {
            probe.nudge_param(i, d);
            let r = net_objective(&probe, x, out_grad);
            probe.nudge_param(i, -d);
            r
        })?;
        worst = worst.max(relative_error(a, numeric));
    }

    let mut shifted = x.to_owned();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        let numeric = stencil_derivative(|d| {
            shifted[[r, c]] = orig + d;
            let res = net_objective(net, shifted.view(), out_grad);
            shifted[[r, c]] = orig;
            res
        })?;
        worst = worst.max(relative_error(input_grad[[r, c]], numeric));
    }
    Ok(GradCheck { max_rel_err: worst, checked: analytic.len() + x.len() })
}

/// Forward-only evaluation of the generator objective, with the activation
/// patterns of both networks.
fn generator_loss_forward(
    generator: &DenseNet,
    discriminator: &DenseNet,
    schedule: &DiffusionSchedule,
    z: ArrayView2<f64>,
    ts: &[usize],
    eps: ArrayView2<f64>,
    t_max: usize,
) -> Result<(f64, Vec<bool>)> {
    let (x, g_cache) = generator.forward(z)?;
    let mut y = Array2::zeros(x.dim());
    for (i, &t) in ts.iter().enumerate() {
        let row = schedule.diffuse(&x.row(i).to_vec(), t, &eps.row(i).to_vec())?;
        y.row_mut(i).assign(&ndarray::Array1::from(row));
    }
    let (logits, d_cache) = discriminator.forward(cond_batch(y.view(), ts, t_max)?.view())?;
    let loss = logits.iter().map(|&l| softplus(-l)).sum::<f64>() / ts.len() as f64;
    let mut pattern = g_cache.activation_pattern();
    pattern.extend(d_cache.activation_pattern());
    Ok((loss, pattern))
}

/// Checks the generator gradient of
/// `mean softplus(-D(cond(diffuse(G(z), t, eps), t)))` end to end.
pub fn check_generator_path(
    generator: &DenseNet,
    discriminator: &DenseNet,
    schedule: &DiffusionSchedule,
    z: ArrayView2<f64>,
    ts: &[usize],
    eps: ArrayView2<f64>,
    t_max: usize,
) -> Result<GradCheck> {
    let (_, grads, _) = generator_objective(generator, discriminator, schedule, z, ts, eps, Some(t_max))?;
    let analytic = grads.flatten();
    let mut probe = generator.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = stencil_derivative(|d| {
            probe.nudge_param(i, d);
            let r = generator_loss_forward(&probe, discriminator, schedule, z, ts, eps, t_max);
            probe.nudge_param(i, -d);
            r
        })?;
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(GradCheck { max_rel_err: worst, checked: analytic.len() })
}

/// Outcome of [`run_suite`] for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub seed: u64,
    pub isolated: GradCheck,
    pub end_to_end: GradCheck,
}

/// The standard gradient suite for one seed: isolated checks on a 2-8-8-1
/// net, a generator-shaped 2-16-16-2 net and a discriminator-shaped
/// 3-16-16-1 net, then the generator-through-diffusion path at each of
/// `timesteps`. Parameters are drawn from `[-0.5, 0.5]`.
pub fn run_suite(seed: u64, schedule: &DiffusionSchedule, t_max: usize, timesteps: &[usize]) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 4;
    let mut isolated = GradCheck::EMPTY;
    for sizes in [&[2, 8, 8, 1][..], &[2, 16, 16, 2], &[3, 16, 16, 1]] {
        let net = DenseNet::uniform(sizes, 0.5, &mut rng)?;
        let x = normal(batch, sizes[0], &mut rng);
        let g = normal(batch, *sizes.last().unwrap(), &mut rng);
        isolated = isolated.merge(check_net(&net, x.view(), g.view())?);
    }

    let generator = DenseNet::uniform(&[2, 16, 16, 2], 0.5, &mut rng)?;
    let discriminator = DenseNet::uniform(&[3, 16, 16, 1], 0.5, &mut rng)?;
    let mut end_to_end = GradCheck::EMPTY;
    for &t in timesteps {
        let z = normal(batch, 2, &mut rng);
        let eps = normal(batch, 2, &mut rng);
        let ts = vec![t; batch];
        end_to_end = end_to_end.merge(check_generator_path(
            &generator,
            &discriminator,
            schedule,
            z.view(),
            &ts,
            eps.view(),
            t_max,
        )?);
    }
    Ok(SuiteResult { seed, isolated, end_to_end })
}

fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_is_exact_on_cubics() {
        // The five-point stencil has no truncation error up to degree 4.
        let d = stencil_derivative(|x| Ok((3.0 * x * x * x - x * x + 2.0 * x + 1.0, vec![]))).unwrap();
        assert!((d - 2.0).abs() < 1e-11);
    }

    #[test]
    fn stencil_shrinks_the_step_near_a_kink() {
        // |x - 5e-4| has slope -1 at 0; a 1e-3 step would straddle the kink.
        let d = stencil_derivative(|x| {
            let u = x - 5e-4;
            Ok((u.abs(), vec![u > 0.0]))
        })
        .unwrap();
        assert!((d + 1.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-2).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
