//! Flag groups and how they layer over a JSON config.

use std::path::{Path, PathBuf};

use clap::Args;
use diffgan_core::{Error, GanConfig, LossVariant, Result, SamplingMode};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Random seed. Falls back to the config file, then to 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// JSON file with a (possibly partial) training config. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScheduleArgs {
    /// Length of the beta table.
    #[arg(long)]
    pub t_max_cap: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    /// Noise scale multiplying the Gaussian perturbation.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PolicyArgs {
    /// Timestep distribution: priority or uniform.
    #[arg(long)]
    pub mode: Option<SamplingMode>,
    #[arg(long)]
    pub t_min: Option<usize>,
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Starting maximum timestep (defaults to t_min).
    #[arg(long)]
    pub t_init: Option<usize>,
    /// Step size of each adjustment of T.
    #[arg(long)]
    pub c_step: Option<usize>,
    #[arg(long)]
    pub d_target: Option<f64>,
    /// Training steps between adjustments of T.
    #[arg(long)]
    pub update_interval: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Learning rate for both networks.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub g_lr: Option<f64>,
    #[arg(long)]
    pub d_lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Train the plain GAN baseline without diffusion.
    #[arg(long)]
    pub no_diffusion: bool,
    /// Hide the timestep from the discriminator.
    #[arg(long)]
    pub unconditioned: bool,
}

/// Reads the JSON config (if any), then applies the seed and flag overrides.
pub fn load(common: &CommonArgs) -> Result<GanConfig> {
    let mut config = match &common.config {
        Some(path) => read_config(path)?,
        None => GanConfig { seed: DEFAULT_SEED, ..Default::default() },
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn read_config(path: &Path) -> Result<GanConfig> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    // Metadata files nest the training config under "config"; accept both layouts.
    let inner = match value.get("config") {
        Some(c) if c.is_object() => c.clone(),
        _ => value,
    };
    serde_json::from_value(inner).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
}

impl ScheduleArgs {
    pub fn apply(&self, config: &mut GanConfig) {
        let s = &mut config.schedule;
        set(&mut s.t_max_cap, self.t_max_cap);
        set(&mut s.beta_start, self.beta_start);
        set(&mut s.beta_end, self.beta_end);
        set(&mut s.sigma, self.sigma);
    }
}

impl PolicyArgs {
    pub fn apply(&self, config: &mut GanConfig) {
        let p = &mut config.policy;
        set(&mut p.mode, self.mode);
        set(&mut p.t_min, self.t_min);
        set(&mut p.t_max, self.t_max);
        if self.t_init.is_some() {
            p.t_init = self.t_init;
        }
        set(&mut p.c_step, self.c_step);
        set(&mut p.d_target, self.d_target);
        set(&mut p.update_interval, self.update_interval);
    }
}

impl TrainArgs {
    pub fn apply(&self, config: &mut GanConfig) {
        set(&mut config.total_steps, self.steps);
        set(&mut config.batch_size, self.batch_size);
        set(&mut config.latent_dim, self.latent_dim);
        set(&mut config.hidden, self.hidden.clone());
        for adam in [&mut config.g_adam, &mut config.d_adam] {
            set(&mut adam.lr, self.lr);
            set(&mut adam.beta1, self.beta1);
            set(&mut adam.beta2, self.beta2);
            set(&mut adam.eps, self.adam_eps);
        }
        set(&mut config.g_adam.lr, self.g_lr);
        set(&mut config.d_adam.lr, self.d_lr);
        if self.no_diffusion {
            config.diffusion_enabled = false;
        }
        if self.unconditioned {
            config.loss_variant = LossVariant::Unconditioned;
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
