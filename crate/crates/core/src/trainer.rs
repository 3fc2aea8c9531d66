//! Alternating GAN training on diffusion-noised inputs.
//!
//! Each step draws per-sample timesteps from the exploration list, diffuses
//! both real and generated samples, and feeds `(y, t / t_max)` to the
//! discriminator. The generator is updated through the reparameterized
//! diffusion, so its gradient picks up the `sqrt(alpha_bar_t)` factor. Every
//! `update_interval` steps the maximum timestep is adjusted from the sign
//! statistic of the discriminator on diffused real samples.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::fmt_real;
use crate::error::{Error, Result};
use crate::net::{cond_batch, AdamConfig, AdamState, DenseNet, Gradients};
use crate::schedule::{DiffusionSchedule, ScheduleParams};
use crate::tsampler::{PolicyParams, TimestepPolicy};

/// Which discriminator objective to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// `D(y, t)`: the timestep feature is visible to the discriminator.
    Conditioned,
    /// `D(y)`: the timestep feature is held at zero.
    Unconditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub batch_size: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub schedule: ScheduleParams,
    pub policy: PolicyParams,
    pub g_adam: AdamConfig,
    pub d_adam: AdamConfig,
    /// `false` gives the plain GAN baseline (`t = 0` everywhere).
    pub diffusion_enabled: bool,
    pub loss_variant: LossVariant,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            total_steps: 20_000,
            seed: 1,
            latent_dim: 2,
            hidden: vec![128, 128],
            schedule: ScheduleParams::default(),
            policy: PolicyParams::default(),
            g_adam: AdamConfig::default(),
            d_adam: AdamConfig::default(),
            diffusion_enabled: true,
            loss_variant: LossVariant::Conditioned,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Param("batch_size must be at least 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Param("latent_dim must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Param("hidden widths must be positive".into()));
        }
        self.policy.validate()?;
        if self.policy.t_max > self.schedule.t_max_cap {
            return Err(Error::Param(format!(
                "policy t_max {} exceeds schedule length {}",
                self.policy.t_max, self.schedule.t_max_cap
            )));
        }
        for adam in [&self.g_adam, &self.d_adam] {
            if !(adam.lr >= 0.0
                && (0.0..1.0).contains(&adam.beta1)
                && (0.0..1.0).contains(&adam.beta2)
                && adam.eps > 0.0)
            {
                return Err(Error::Param(format!("invalid optimizer settings {adam:?}")));
            }
        }
        Ok(())
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input).chain(self.hidden.iter().copied()).chain(std::iter::once(output)).collect()
    }
}

/// One row per `T` update window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Maximum timestep after the update.
    pub t: usize,
    pub r_d: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_real_mean: f64,
    pub d_fake_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_HEADER: &str = "step,T,r_d,d_loss,g_loss,d_real_mean,d_fake_mean";

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.step,
                r.t,
                fmt_real(r.r_d),
                fmt_real(r.d_loss),
                fmt_real(r.g_loss),
                fmt_real(r.d_real_mean),
                fmt_real(r.d_fake_mean)
            ));
        }
        out
    }

    /// The `step,T,r_d` subset.
    pub fn schedule_csv(&self) -> String {
        let mut out = String::from("step,T,r_d\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.step, r.t, fmt_real(r.r_d)));
        }
        out
    }
}

/// `log(1 + exp(x))`, stable for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    crate::analytic::softplus(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `mean(softplus(-real)) + mean(softplus(fake))`.
pub fn d_loss(real_logits: &[f64], fake_logits: &[f64]) -> Result<f64> {
    if real_logits.is_empty() || fake_logits.is_empty() {
        return Err(Error::Usage("discriminator loss needs non-empty batches".into()));
    }
    Ok(mean(real_logits.iter().map(|&l| softplus(-l))) + mean(fake_logits.iter().map(|&l| softplus(l))))
}

/// Non-saturating generator loss `mean(softplus(-fake))`.
pub fn g_loss(fake_logits: &[f64]) -> Result<f64> {
    if fake_logits.is_empty() {
        return Err(Error::Usage("generator loss needs a non-empty batch".into()));
    }
    Ok(mean(fake_logits.iter().map(|&l| softplus(-l))))
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len() as f64;
    it.sum::<f64>() / n
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Diffuses each row of `x` to its own timestep in place.
fn diffuse_rows(schedule: &DiffusionSchedule, x: &mut Array2<f64>, ts: &[usize], eps: &Array2<f64>) -> Result<()> {
    for ((mut row, &t), e) in x.rows_mut().into_iter().zip(ts).zip(eps.rows()) {
        schedule.diffuse_in_place(
            row.as_slice_mut().expect("standard layout"),
            t,
            e.as_slice().expect("standard layout"),
        )?;
    }
    Ok(())
}

/// Generator objective `mean softplus(-D(cond(diffuse(G(z), t, eps), t)))`
/// and its gradient in the generator parameters.
///
/// `t_feature_max` is the normaliser of the timestep feature; `None` holds
/// the feature at zero (unconditioned discriminator).
pub fn generator_objective(
    generator: &DenseNet,
    discriminator: &DenseNet,
    schedule: &DiffusionSchedule,
    z: ArrayView2<f64>,
    ts: &[usize],
    eps: ArrayView2<f64>,
    t_feature_max: Option<usize>,
) -> Result<(f64, Gradients, Vec<f64>)> {
    let m = z.nrows();
    let (x_fake, g_cache) = generator.forward(z)?;
    if eps.dim() != x_fake.dim() {
        return Err(Error::shape(format!("{:?}", x_fake.dim()), format!("{:?}", eps.dim())));
    }
    let mut y = x_fake;
    diffuse_rows(schedule, &mut y, ts, &eps.to_owned())?;
    let d_in = disc_input(y.view(), ts, t_feature_max)?;
    let (logits, d_cache) = discriminator.forward(d_in.view())?;
    let logits: Vec<f64> = logits.column(0).to_vec();
    let loss = g_loss(&logits)?;

    let out_grad = Array2::from_shape_fn((m, 1), |(i, _)| -sigmoid(-logits[i]) / m as f64);
    let (_, d_input_grad) = discriminator.backward(&d_cache, out_grad.view())?;
    let d = y.ncols();
    let mut x_grad = d_input_grad.slice(s![.., ..d]).to_owned();
    for (mut row, &t) in x_grad.rows_mut().into_iter().zip(ts) {
        row *= schedule.signal_scale(t)?;
    }
    let (grads, _) = generator.backward(&g_cache, x_grad.view())?;
    Ok((loss, grads, logits))
}

fn disc_input(y: ArrayView2<f64>, ts: &[usize], t_feature_max: Option<usize>) -> Result<Array2<f64>> {
    match t_feature_max {
        Some(t_max) => cond_batch(y, ts, t_max),
        None => cond_batch(y, &vec![0; ts.len()], 1),
    }
}

#[derive(Debug, Clone, Default)]
struct Window {
    steps: usize,
    d_loss: f64,
    g_loss: f64,
    d_real: f64,
    d_fake: f64,
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: GanConfig,
    pub generator: DenseNet,
    pub discriminator: DenseNet,
    pub g_opt: AdamState,
    pub d_opt: AdamState,
    pub policy: TimestepPolicy,
    pub schedule: DiffusionSchedule,
    pub step: usize,
    pub trace: TrainTrace,
    window: Window,
}

impl TrainState {
    /// Initializes generator, discriminator and policy from `rng`, in that order.
    pub fn new<R: Rng + ?Sized>(config: GanConfig, data_dim: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if data_dim == 0 {
            return Err(Error::Param("data dimension must be positive".into()));
        }
        let schedule = config.schedule.build()?;
        let generator = DenseNet::new(&config.sizes(config.latent_dim, data_dim), rng)?;
        let discriminator = DenseNet::new(&config.sizes(data_dim + 1, 1), rng)?;
        let policy = TimestepPolicy::new(config.policy, rng)?;
        Ok(Self {
            g_opt: AdamState::new(&generator, config.g_adam),
            d_opt: AdamState::new(&discriminator, config.d_adam),
            config,
            generator,
            discriminator,
            policy,
            schedule,
            step: 0,
            trace: TrainTrace::default(),
            window: Window::default(),
        })
    }

    fn t_feature_max(&self) -> Option<usize> {
        match self.config.loss_variant {
            LossVariant::Conditioned => Some(self.config.policy.t_max),
            LossVariant::Unconditioned => None,
        }
    }

    fn draw_ts<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<usize> {
        if self.config.diffusion_enabled {
            self.policy.draw_t(rng, m)
        } else {
            vec![0; m]
        }
    }

    /// One iteration of the alternating update.
    ///
    /// Random draws are consumed in a fixed order: Step I latent batch, data
    /// indices, timesteps, real noise, fake noise; Step II latent batch,
    /// timesteps, noise; then the exploration-list refresh on update steps.
    /// Timesteps and noise are skipped when diffusion is disabled.
    pub fn train_step<R: Rng + ?Sized>(&mut self, data: ArrayView2<f64>, rng: &mut R) -> Result<()> {
        let m = self.config.batch_size;
        let d = self.generator.output_dim();
        if data.nrows() == 0 {
            return Err(Error::Data("training set is empty".into()));
        }
        if data.ncols() != d {
            return Err(Error::shape(format!("{d} data columns"), data.ncols()));
        }
        let diffusion = self.config.diffusion_enabled;
        let t_feature = self.t_feature_max();

        // Step I: discriminator
        let z = normal_matrix(m, self.config.latent_dim, rng);
        let mut fake = self.generator.predict(z.view())?;
        let mut real = Array2::zeros((m, d));
        for mut row in real.rows_mut() {
            row.assign(&data.row(rng.random_range(0..data.nrows())));
        }
        let ts = self.draw_ts(rng, m);
        if diffusion {
            let eps_real = normal_matrix(m, d, rng);
            let eps_fake = normal_matrix(m, d, rng);
            diffuse_rows(&self.schedule, &mut real, &ts, &eps_real)?;
            diffuse_rows(&self.schedule, &mut fake, &ts, &eps_fake)?;
        }
        let mut batch = disc_input(real.view(), &ts, t_feature)?;
        batch.append(Axis(0), disc_input(fake.view(), &ts, t_feature)?.view()).expect("same width");
        let (logits, cache) = self.discriminator.forward(batch.view())?;
        let logits = logits.column(0);
        let (real_logits, fake_logits) = (logits.slice(s![..m]).to_vec(), logits.slice(s![m..]).to_vec());
        let d_loss_value = d_loss(&real_logits, &fake_logits)?;
        let out_grad = Array2::from_shape_fn((2 * m, 1), |(i, _)| {
            if i < m {
                -sigmoid(-real_logits[i]) / m as f64
            } else {
                sigmoid(fake_logits[i - m]) / m as f64
            }
        });
        let (d_grads, _) = self.discriminator.backward(&cache, out_grad.view())?;
        let real_probs: Vec<f64> = real_logits.iter().map(|&l| sigmoid(l)).collect();
        let fake_prob_mean = mean(fake_logits.iter().map(|&l| sigmoid(l)));
        if !d_loss_value.is_finite() || !d_grads.is_finite() {
            return Err(self.abort("discriminator", d_loss_value, f64::NAN));
        }
        self.d_opt.apply(&mut self.discriminator, &d_grads)?;

        // Step II: generator, through the diffusion reparameterization
        let z = normal_matrix(m, self.config.latent_dim, rng);
        let ts = self.draw_ts(rng, m);
        let eps = if diffusion { normal_matrix(m, d, rng) } else { Array2::zeros((m, d)) };
        let (g_loss_value, g_grads, _) = generator_objective(
            &self.generator,
            &self.discriminator,
            &self.schedule,
            z.view(),
            &ts,
            eps.view(),
            t_feature,
        )?;
        if !g_loss_value.is_finite() || !g_grads.is_finite() {
            return Err(self.abort("generator", d_loss_value, g_loss_value));
        }
        self.g_opt.apply(&mut self.generator, &g_grads)?;

        // Step III: adaptive T
        self.policy.observe_d(&real_probs)?;
        self.window.steps += 1;
        self.window.d_loss += d_loss_value;
        self.window.g_loss += g_loss_value;
        self.window.d_real += mean(real_probs.iter().copied());
        self.window.d_fake += fake_prob_mean;
        self.step += 1;
        if self.step.is_multiple_of(self.config.policy.update_interval) {
            let r_d = if diffusion { self.policy.update_t(rng) } else { self.policy.take_window() };
            let w = std::mem::take(&mut self.window);
            let k = w.steps as f64;
            self.trace.records.push(TraceRecord {
                step: self.step,
                t: self.policy.t_current(),
                r_d,
                d_loss: w.d_loss / k,
                g_loss: w.g_loss / k,
                d_real_mean: w.d_real / k,
                d_fake_mean: w.d_fake / k,
            });
        }
        Ok(())
    }

    fn abort(&mut self, which: &str, d_loss: f64, g_loss: f64) -> Error {
        let record = TraceRecord {
            step: self.step + 1,
            t: self.policy.t_current(),
            r_d: self.policy.r_d(),
            d_loss,
            g_loss,
            d_real_mean: f64::NAN,
            d_fake_mean: f64::NAN,
        };
        self.trace.records.push(record);
        Error::Numeric(format!(
            "{which} update produced non-finite values at step {} (T={}, d_loss={d_loss}, g_loss={g_loss})",
            self.step + 1,
            self.policy.t_current()
        ))
    }

    /// `n` generator samples from fresh latent draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        sample_generator(&self.generator, n, rng)
    }
}

pub fn sample_generator<R: Rng + ?Sized>(generator: &DenseNet, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    let z = normal_matrix(n, generator.input_dim(), rng);
    generator.predict(z.view())
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub generator: DenseNet,
    pub discriminator: DenseNet,
    pub trace: TrainTrace,
    pub final_t: usize,
}

/// Runs `config.total_steps` iterations on `dataset` with minibatches drawn
/// uniformly with replacement. Deterministic for a fixed seed.
pub fn train(dataset: ArrayView2<f64>, config: &GanConfig) -> Result<TrainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let state = train_with(dataset, config, &mut rng)?;
    Ok(TrainOutput {
        final_t: state.policy.t_current(),
        generator: state.generator,
        discriminator: state.discriminator,
        trace: state.trace,
    })
}

/// Like [`train`] but drawing from a caller-owned random source and returning the full state.
pub fn train_with<R: Rng + ?Sized>(dataset: ArrayView2<f64>, config: &GanConfig, rng: &mut R) -> Result<TrainState> {
    if dataset.nrows() == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut state = TrainState::new(config.clone(), dataset.ncols(), rng)?;
    for _ in 0..config.total_steps {
        state.train_step(dataset, rng)?;
    }
    Ok(state)
}
