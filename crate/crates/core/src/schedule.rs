//! Linear variance schedule and forward diffusion of data vectors.
//!
//! The schedule stores `beta_t` for `t = 1..=t_max_cap` together with the
//! cumulative signal retention `alpha_bar_t = prod_{s <= t} (1 - beta_s)`.
//! A data vector diffused to step `t` has the closed-form marginal
//!
//! ```text
//! y = sqrt(alpha_bar_t) * x + sqrt(1 - alpha_bar_t) * sigma * eps,   eps ~ N(0, I)
//! ```
//!
//! and `t = 0` leaves the data untouched.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the linear schedule, as they appear in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    pub t_max_cap: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sigma: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { t_max_cap: 1000, beta_start: 1e-4, beta_end: 0.02, sigma: 0.05 }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.t_max_cap, self.beta_start, self.beta_end, self.sigma)
    }
}

/// Precomputed diffusion constants. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    t_max_cap: usize,
    beta_start: f64,
    beta_end: f64,
    sigma: f64,
    // index 0 is a placeholder so that betas[t] is beta_t
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// Builds the linear schedule with `betas[1] = beta_start` and
    /// `betas[t_max_cap] = beta_end`.
    pub fn new(t_max_cap: usize, beta_start: f64, beta_end: f64, sigma: f64) -> Result<Self> {
        if t_max_cap == 0 {
            return Err(Error::Param("t_max_cap must be at least 1".into()));
        }
        if !(beta_start.is_finite() && beta_end.is_finite() && sigma.is_finite()) {
            return Err(Error::Param(format!(
                "non-finite schedule parameter (beta_start={beta_start}, beta_end={beta_end}, sigma={sigma})"
            )));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Param(format!(
                "need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
            )));
        }
        if sigma <= 0.0 {
            return Err(Error::Param(format!("sigma must be positive, got {sigma}")));
        }

        let mut betas = Vec::with_capacity(t_max_cap + 1);
        betas.push(0.0);
        let span = (t_max_cap - 1).max(1) as f64;
        for t in 1..=t_max_cap {
            let frac = (t - 1) as f64 / span;
            betas.push(if t == t_max_cap && t_max_cap > 1 {
                beta_end
            } else {
                beta_start + (beta_end - beta_start) * frac
            });
        }

        // Running product kept as an unevaluated double-double sum.
        let mut alpha_bars = Vec::with_capacity(t_max_cap + 1);
        alpha_bars.push(1.0);
        let mut acc = DoubleDouble::ONE;
        for &beta in &betas[1..] {
            acc = acc.mul(DoubleDouble::one_minus(beta));
            alpha_bars.push(acc.to_f64());
        }

        Ok(Self { t_max_cap, beta_start, beta_end, sigma, betas, alpha_bars })
    }

    pub fn t_max_cap(&self) -> usize {
        self.t_max_cap
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            t_max_cap: self.t_max_cap,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            sigma: self.sigma,
        }
    }

    /// `beta_t` for `t` in `1..=t_max_cap`.
    pub fn beta(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.t_max_cap {
            return Err(Error::range("t", t, format!("1..={}", self.t_max_cap)));
        }
        Ok(self.betas[t])
    }

    /// `alpha_bar_t` for `t` in `0..=t_max_cap`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alpha_bars[t])
    }

    /// Betas indexed by timestep; entry 0 is an unused zero.
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Signal scale `sqrt(alpha_bar_t)`, also the Jacobian of [`Self::diffuse`] in `x`.
    pub fn signal_scale(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar(t)?.sqrt())
    }

    /// Noise standard deviation `sqrt(1 - alpha_bar_t) * sigma`.
    pub fn noise_scale(&self, t: usize) -> Result<f64> {
        Ok((1.0 - self.alpha_bar(t)?).sqrt() * self.sigma)
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t > self.t_max_cap {
            return Err(Error::range("t", t, format!("0..={}", self.t_max_cap)));
        }
        Ok(())
    }

    /// Closed-form forward diffusion of `x` to step `t` with the given
    /// standard-normal draw `eps`.
    pub fn diffuse(&self, x: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.diffuse_in_place(&mut out, t, eps)?;
        Ok(out)
    }

    pub fn diffuse_in_place(&self, x: &mut [f64], t: usize, eps: &[f64]) -> Result<()> {
        self.check_t(t)?;
        if x.len() != eps.len() {
            return Err(Error::shape(format!("eps of length {}", x.len()), format!("length {}", eps.len())));
        }
        if t == 0 {
            return Ok(());
        }
        let a = self.alpha_bars[t].sqrt();
        let b = (1.0 - self.alpha_bars[t]).sqrt() * self.sigma;
        for (xi, &e) in x.iter_mut().zip(eps) {
            *xi = a * *xi + b * e;
        }
        Ok(())
    }

    /// Applies `t` one-step kernels
    /// `x_s = sqrt(1 - beta_s) x_{s-1} + sqrt(beta_s) sigma eps_s`
    /// with fresh noise each step. Distributionally equal to [`Self::diffuse`].
    pub fn diffuse_chain<R: Rng + ?Sized>(&self, x: &[f64], t: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.check_t(t)?;
        let mut out = x.to_vec();
        for s in 1..=t {
            let beta = self.betas[s];
            let keep = (1.0 - beta).sqrt();
            let noise = beta.sqrt() * self.sigma;
            for xi in out.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *xi = keep * *xi + noise * e;
            }
        }
        Ok(out)
    }
}

/// Minimal double-double arithmetic for the cumulative product.
#[derive(Debug, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    fn one_minus(beta: f64) -> Self {
        let s = 1.0 - beta;
        let bb = s - 1.0;
        let err = (1.0 - (s - bb)) + (-beta - bb);
        Self { hi: s, lo: err }
    }

    fn mul(self, other: Self) -> Self {
        let p = self.hi * other.hi;
        let mut e = self.hi.mul_add(other.hi, -p);
        e += self.hi * other.lo + self.lo * other.hi;
        let hi = p + e;
        let lo = e - (hi - p);
        Self { hi, lo }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}
