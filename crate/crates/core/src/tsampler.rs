//! Self-paced control of the maximum diffusion step.
//!
//! Every `update_interval` minibatches the policy looks at the fraction of
//! diffused real samples the discriminator is confident about,
//! `r_d = mean(sign(D - 0.5))`, and moves `T` by `sign(r_d - d_target) * C`.
//! Per-sample timesteps are drawn from a frozen 64-entry exploration list
//! (32 zeros followed by 32 draws from `p_pi`) that is refreshed after each
//! update.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EPL_LEN: usize = 64;
pub const EPL_ZEROS: usize = 32;

/// Shape of the timestep distribution `p_pi` over `1..=T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Uniform,
    /// Weight proportional to `t`.
    Priority,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "priority" => Ok(Self::Priority),
            other => Err(Error::Param(format!("unknown sampling mode {other:?}"))),
        }
    }
}

/// Mixing weights over timesteps `1..=t_max`; entry `i` is the weight of `t = i + 1`.
pub fn pi_weights(t_max: usize, mode: SamplingMode) -> Result<Vec<f64>> {
    if t_max == 0 {
        return Err(Error::range("T", 0, ">= 1"));
    }
    Ok(match mode {
        SamplingMode::Uniform => vec![1.0 / t_max as f64; t_max],
        SamplingMode::Priority => {
            let total = (t_max * (t_max + 1) / 2) as f64;
            (1..=t_max).map(|t| t as f64 / total).collect()
        }
    })
}

/// Tunables of the adaptive schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    pub mode: SamplingMode,
    pub t_min: usize,
    pub t_max: usize,
    /// Initial `T`; clamped into `[t_min, t_max]`. Defaults to `t_min`.
    pub t_init: Option<usize>,
    pub c_step: usize,
    pub d_target: f64,
    pub update_interval: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            mode: SamplingMode::Priority,
            t_min: 5,
            t_max: 1000,
            t_init: None,
            c_step: 2,
            d_target: 0.6,
            update_interval: 4,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_min == 0 || self.t_min > self.t_max {
            return Err(Error::Param(format!(
                "need 1 <= t_min <= t_max, got t_min={}, t_max={}",
                self.t_min, self.t_max
            )));
        }
        if self.c_step == 0 {
            return Err(Error::Param("C must be a positive integer".into()));
        }
        if !(-1.0..=1.0).contains(&self.d_target) {
            return Err(Error::Param(format!("d_target must lie in [-1, 1], got {}", self.d_target)));
        }
        if self.update_interval == 0 {
            return Err(Error::Param("update_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Adaptive maximum-timestep state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepPolicy {
    params: PolicyParams,
    t_current: usize,
    epl: [usize; EPL_LEN],
    rd_sum: i64,
    rd_count: u64,
}

impl TimestepPolicy {
    /// Creates the policy and draws the first exploration list.
    pub fn new<R: Rng + ?Sized>(params: PolicyParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let t_current = params.t_init.unwrap_or(params.t_min).clamp(params.t_min, params.t_max);
        let mut policy = Self { params, t_current, epl: [0; EPL_LEN], rd_sum: 0, rd_count: 0 };
        policy.resample_epl(rng);
        Ok(policy)
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn t_current(&self) -> usize {
        self.t_current
    }

    pub fn epl(&self) -> &[usize; EPL_LEN] {
        &self.epl
    }

    /// Overwrites the exploration list. Used by tests and replay tooling.
    pub fn set_epl(&mut self, epl: [usize; EPL_LEN]) {
        self.epl = epl;
    }

    pub fn pending_count(&self) -> u64 {
        self.rd_count
    }

    /// Mean sign over the current window, 0 when nothing was observed.
    pub fn r_d(&self) -> f64 {
        if self.rd_count == 0 {
            0.0
        } else {
            self.rd_sum as f64 / self.rd_count as f64
        }
    }

    /// Refills the list with 32 zeros followed by 32 draws from `p_pi(T)`.
    pub fn resample_epl<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let weights = pi_weights(self.t_current, self.params.mode).expect("t_current >= t_min >= 1");
        let dist = WeightedIndex::new(&weights).expect("weights are positive and finite");
        self.epl[..EPL_ZEROS].fill(0);
        for slot in &mut self.epl[EPL_ZEROS..] {
            *slot = dist.sample(rng) + 1;
        }
    }

    /// `m` uniform draws with replacement from the exploration list.
    pub fn draw_t<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<usize> {
        (0..m).map(|_| self.epl[rng.random_range(0..EPL_LEN)]).collect()
    }

    /// Accumulates `sign(d - 0.5)` over discriminator probabilities on diffused real samples.
    pub fn observe_d(&mut self, d_probs: &[f64]) -> Result<()> {
        if let Some(bad) = d_probs.iter().find(|d| !d.is_finite()) {
            return Err(Error::Data(format!("non-finite discriminator output {bad}")));
        }
        for &d in d_probs {
            self.rd_sum += sign(d - 0.5) as i64;
        }
        self.rd_count += d_probs.len() as u64;
        Ok(())
    }

    /// Applies `T <- clamp(T + sign(r_d - d_target) * C)`, resets the window,
    /// and redraws the exploration list. Returns the `r_d` that was used.
    pub fn update_t<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let r_d = self.take_window();
        let step = sign(r_d - self.params.d_target) as i64 * self.params.c_step as i64;
        let next = (self.t_current as i64 + step).clamp(self.params.t_min as i64, self.params.t_max as i64);
        self.t_current = next as usize;
        self.resample_epl(rng);
        r_d
    }

    /// Returns the window's `r_d` and clears the accumulator without moving `T`.
    pub fn take_window(&mut self) -> f64 {
        let r_d = self.r_d();
        self.rd_sum = 0;
        self.rd_count = 0;
        r_d
    }
}

/// Sign with `sign(0) = 0`.
fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}
