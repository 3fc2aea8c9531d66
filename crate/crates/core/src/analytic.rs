//! Closed-form laboratory for the two-parameter toy problem.
//!
//! Real data is `(0, z)` and generated data is `(theta, z)` with
//! `z ~ Unif(0, 1)`. Without noise the JS divergence jumps from 0 to `ln 2`
//! as soon as `theta != 0`. After diffusing both to step `t` the first
//! coordinates become `N(0, b_t)` and `N(a_t theta, b_t)` with
//! `a_t = sqrt(alpha_bar_t)` and `b_t = (1 - alpha_bar_t) sigma^2`. The
//! second coordinate has the same density under both models, so it cancels
//! from every log-ratio and the divergence is a 1-D integral.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::schedule::DiffusionSchedule;

const LN_2: f64 = std::f64::consts::LN_2;

/// Unaccounted tail mass tolerated by the quadrature route.
pub const MAX_TAIL_MASS: f64 = 1e-10;

/// Diffusion constants of the toy problem at one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParams {
    pub theta: f64,
    pub t: usize,
    /// `sqrt(alpha_bar_t)`
    pub a_t: f64,
    /// `(1 - alpha_bar_t) sigma^2`
    pub b_t: f64,
}

impl ToyParams {
    pub fn new(theta: f64, t: usize, schedule: &DiffusionSchedule) -> Result<Self> {
        let alpha_bar = schedule.alpha_bar(t)?;
        Ok(Self { theta, t, a_t: alpha_bar.sqrt(), b_t: (1.0 - alpha_bar) * schedule.sigma() * schedule.sigma() })
    }

    /// Mean of the generated component, `a_t theta`.
    pub fn shift(&self) -> f64 {
        self.a_t * self.theta
    }

    /// Log density ratio `log p_r(y) - log p_g(y)`.
    pub fn log_ratio(&self, y: f64) -> f64 {
        let mu = self.shift();
        mu * (mu - 2.0 * y) / (2.0 * self.b_t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ClosedForm => "closed_form",
            Self::Quadrature => "quadrature",
            Self::MonteCarlo => "monte_carlo",
        }
    }
}

/// How [`jsd_diffused`] evaluates the divergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JsdMethod {
    /// Composite Gauss–Legendre with `n` nodes per panel.
    Quadrature { nodes: usize },
    /// `samples` draws from each component.
    MonteCarlo { samples: usize, seed: u64 },
}

/// A divergence value in nats with estimator metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsdEstimate {
    pub value: f64,
    pub method: EstimatorKind,
    pub nodes_or_samples: usize,
    /// Standard error, zero for deterministic methods.
    pub std_err: f64,
}

/// Divergence between the undiffused toy distributions.
pub fn jsd_original(theta: f64) -> f64 {
    if theta == 0.0 {
        0.0
    } else {
        LN_2
    }
}

pub fn wasserstein_reference(theta: f64) -> f64 {
    theta.abs()
}

/// `log(1 + exp(x))` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// JS divergence between the diffused toy distributions at step `t >= 1`.
pub fn jsd_diffused(theta: f64, t: usize, schedule: &DiffusionSchedule, method: JsdMethod) -> Result<JsdEstimate> {
    if t == 0 {
        return Err(Error::range("t", 0, format!("1..={}", schedule.t_max_cap())));
    }
    if !theta.is_finite() {
        return Err(Error::Param(format!("theta must be finite, got {theta}")));
    }
    let toy = ToyParams::new(theta, t, schedule)?;
    match method {
        JsdMethod::Quadrature { nodes } => jsd_quadrature(&toy, nodes, 8.0),
        JsdMethod::MonteCarlo { samples, seed } => jsd_monte_carlo(&toy, samples, seed),
    }
}

/// Quadrature over the union of `+-half_width` standard deviations around
/// both means. Fails when the mass left outside exceeds [`MAX_TAIL_MASS`]
/// or the adaptive refinement does not converge.
pub fn jsd_quadrature(toy: &ToyParams, nodes: usize, half_width: f64) -> Result<JsdEstimate> {
    if nodes < 16 {
        return Err(Error::range("nodes", nodes, ">= 16"));
    }
    let sd = toy.b_t.sqrt();
    let mu = toy.shift();
    if mu == 0.0 {
        return Ok(JsdEstimate {
            value: 0.0,
            method: EstimatorKind::Quadrature,
            nodes_or_samples: nodes,
            std_err: 0.0,
        });
    }

    // Work in standard units u around an anchor (one of the two means) so
    // that rounding of the absolute coordinate never enters the integrand.
    // Each window is (anchor, u_lo, u_hi) with y = anchor + sd * u.
    let (lo_c, hi_c) = if mu < 0.0 { (mu, 0.0) } else { (0.0, mu) };
    let gap = (hi_c - lo_c) / sd;
    let windows: Vec<(f64, f64, f64)> = if gap <= 2.0 * half_width {
        vec![(lo_c, -half_width, gap + half_width)]
    } else {
        vec![(lo_c, -half_width, half_width), (hi_c, -half_width, half_width)]
    };

    // Mass of each component outside the integration windows. The integrand
    // is bounded by (p + q) ln2 / 2, so this bounds the neglected part.
    let tail_one = |center: f64| -> f64 {
        let inside: f64 =
            windows.iter().map(|&(anchor, a, b)| normal_mass(center, sd, anchor + sd * a, anchor + sd * b)).sum();
        (1.0 - inside).max(0.0)
    };
    let tail = 0.5 * LN_2 * (tail_one(0.0) + tail_one(mu));
    if tail > MAX_TAIL_MASS {
        return Err(Error::Precision(format!("{tail:.3e} of divergence mass lies outside +-{half_width} sd windows")));
    }

    let gl = GaussLegendre::new(nodes);
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let shift = -mu / sd;
    let mut value = 0.0;
    for &(anchor, a, b) in &windows {
        let kp = anchor / sd;
        let kq = (anchor - mu) / sd;
        let integrand = |u: f64| {
            let zp = kp + u;
            let zq = kq + u;
            // log p - log q
            let lr = 0.5 * shift * (zp + zq);
            let p = inv_sqrt_2pi * (-0.5 * zp * zp).exp();
            let q = inv_sqrt_2pi * (-0.5 * zq * zq).exp();
            0.5 * p * (LN_2 - softplus(-lr)) + 0.5 * q * (LN_2 - softplus(lr))
        };
        let panels = (b - a).ceil().max(1.0) as usize;
        let r = gl.adaptive(&integrand, a, b, panels, 1e-14, 40);
        if !r.converged {
            return Err(Error::Precision(format!(
                "adaptive quadrature did not converge on [{}, {}] (error estimate {:.3e})",
                anchor + sd * a,
                anchor + sd * b,
                r.error_estimate
            )));
        }
        value += r.value;
    }
    Ok(JsdEstimate { value, method: EstimatorKind::Quadrature, nodes_or_samples: nodes, std_err: 0.0 })
}

fn normal_mass(center: f64, sd: f64, a: f64, b: f64) -> f64 {
    let z = |x: f64| (x - center) / (sd * std::f64::consts::SQRT_2);
    0.5 * (erfc(z(a)) - erfc(z(b)))
}

/// Averages the two log-ratio terms over draws from each component.
pub fn jsd_monte_carlo(toy: &ToyParams, samples: usize, seed: u64) -> Result<JsdEstimate> {
    if samples < 16 {
        return Err(Error::range("samples", samples, ">= 16"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = toy.b_t.sqrt();
    let mu = toy.shift();
    let mut real = Welford::default();
    let mut fake = Welford::default();
    for _ in 0..samples {
        let e: f64 = rng.sample(StandardNormal);
        real.push(LN_2 - softplus(-toy.log_ratio(sd * e)));
        let e: f64 = rng.sample(StandardNormal);
        fake.push(LN_2 - softplus(toy.log_ratio(mu + sd * e)));
    }
    let n = samples as f64;
    Ok(JsdEstimate {
        value: 0.5 * (real.mean + fake.mean),
        method: EstimatorKind::MonteCarlo,
        nodes_or_samples: samples,
        std_err: 0.5 * ((real.variance() + fake.variance()) / n).sqrt(),
    })
}

#[derive(Debug, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Optimal discriminator `p_r / (p_r + p_g)` at `y` for step `t >= 1`.
pub fn optimal_discriminator(y: f64, theta: f64, t: usize, schedule: &DiffusionSchedule) -> Result<f64> {
    if t == 0 {
        return Err(Error::range("t", 0, format!("1..={}", schedule.t_max_cap())));
    }
    let toy = ToyParams::new(theta, t, schedule)?;
    Ok(optimal_discriminator_at(&toy, y))
}

/// Same as [`optimal_discriminator`] for precomputed constants. The result
/// is kept strictly inside `(0, 1)`.
pub fn optimal_discriminator_at(toy: &ToyParams, y: f64) -> f64 {
    let lr = toy.log_ratio(y);
    let d = if lr >= 0.0 {
        1.0 / (1.0 + (-lr).exp())
    } else {
        let e = lr.exp();
        e / (1.0 + e)
    };
    d.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Joint and per-timestep conditional mass tables on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJointSpec {
    /// Mixture weights over timesteps.
    pub weights: Vec<f64>,
    /// `real[t][y] = p(y | t)`
    pub real: Vec<Vec<f64>>,
    /// `fake[t][y] = p_g(y | t)`
    pub fake: Vec<Vec<f64>>,
}

impl DiscreteJointSpec {
    pub fn validate(&self) -> Result<()> {
        let steps = self.weights.len();
        if steps == 0 || self.real.len() != steps || self.fake.len() != steps {
            return Err(Error::Data(format!(
                "need one conditional table per weight: {} weights, {} real, {} fake",
                steps,
                self.real.len(),
                self.fake.len()
            )));
        }
        check_mass("weights", &self.weights)?;
        let support = self.real[0].len();
        for table in self.real.iter().chain(&self.fake) {
            if table.len() != support {
                return Err(Error::Data(format!("conditional table has {} entries, expected {support}", table.len())));
            }
            check_mass("conditional table", table)?;
        }
        Ok(())
    }

    /// Random tables on `support` points and `steps` timesteps.
    pub fn random<R: Rng + ?Sized>(support: usize, steps: usize, rng: &mut R) -> Self {
        let mut simplex = |k: usize| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect::<Vec<_>>()
        };
        let weights = simplex(steps);
        let real = (0..steps).map(|_| simplex(support)).collect();
        let fake = (0..steps).map(|_| simplex(support)).collect();
        Self { weights, real, fake }
    }
}

fn check_mass(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Data(format!("{name} has negative or non-finite entries")));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Data(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// JS divergence between two mass functions on the same support.
pub fn jsd_discrete(p: &[f64], q: &[f64]) -> f64 {
    let half_kl = |a: f64, b: f64| if a > 0.0 { 0.5 * a * (2.0 * a / (a + b)).ln() } else { 0.0 };
    p.iter().zip(q).map(|(&a, &b)| half_kl(a, b) + half_kl(b, a)).sum()
}

/// Returns `(JSD of the joints over (y, t), sum_t pi_t JSD of the conditionals)`,
/// both by exact enumeration.
pub fn jsd_joint_equality(spec: &DiscreteJointSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let joint = |tables: &[Vec<f64>]| -> Vec<f64> {
        spec.weights.iter().zip(tables).flat_map(|(&w, table)| table.iter().map(move |&m| w * m)).collect()
    };
    let lhs = jsd_discrete(&joint(&spec.real), &joint(&spec.fake));
    let rhs =
        spec.weights.iter().zip(spec.real.iter().zip(&spec.fake)).map(|(&w, (p, q))| w * jsd_discrete(p, q)).sum();
    Ok((lhs, rhs))
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub fn theta_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect(),
    }
}
