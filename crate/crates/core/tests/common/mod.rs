#![allow(dead_code)]

/// Streaming mean, variance and fourth central moment.
#[derive(Debug, Default, Clone)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn count(&self) -> f64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }

    pub fn mean_se(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn variance_se(&self) -> f64 {
        let mu4 = self.m4 / self.n;
        let s2 = self.m2 / self.n;
        ((mu4 - s2 * s2) / self.n).sqrt()
    }
}

/// `|value - expected| <= k * se`, with a message on failure.
pub fn assert_within(what: &str, value: f64, expected: f64, se: f64, k: f64) {
    assert!((value - expected).abs() <= k * se, "{what}: got {value}, expected {expected} +- {k} x {se}");
}

/// Three-sigma binomial band around `p` for `n` trials.
pub fn binomial_band(p: f64, n: f64) -> f64 {
    3.0 * (p * (1.0 - p) / n).sqrt()
}
