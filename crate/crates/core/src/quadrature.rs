//! Gauss–Legendre rules and an adaptive composite integrator.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Roots of `P_n` are found by Newton iteration from the Chebyshev-like
/// initial guess `cos(pi (i - 1/4) / (n + 1/2))`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed rule mapped onto arbitrary intervals, with recursive bisection
/// until the one-panel and two-half-panel estimates agree.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
    pub converged: bool,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn panel<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
    }

    /// Integrates over `[a, b]` split into `initial_panels` equal pieces, each
    /// refined until its halves agree to `tol * width / (b - a)` or to within
    /// rounding of the panel value.
    pub fn adaptive<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        a: f64,
        b: f64,
        initial_panels: usize,
        tol: f64,
        max_depth: u32,
    ) -> Integral {
        let mut total = Integral { value: 0.0, error_estimate: 0.0, panels: 0, converged: true };
        if b <= a {
            return total;
        }
        let pieces = initial_panels.max(1);
        let width = (b - a) / pieces as f64;
        for k in 0..pieces {
            let lo = a + width * k as f64;
            let hi = if k + 1 == pieces { b } else { lo + width };
            let whole = self.panel(f, lo, hi);
            self.refine(f, lo, hi, whole, tol / pieces as f64, max_depth, &mut total);
        }
        total
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32, acc: &mut Integral) {
        let mid = 0.5 * (a + b);
        let left = self.panel(f, a, mid);
        let right = self.panel(f, mid, b);
        let err = (left + right - whole).abs();
        // Below this the two estimates differ only by rounding.
        let floor = 32.0 * f64::EPSILON * (left.abs() + right.abs());
        let tol = tol.max(floor);
        if err <= tol || depth == 0 {
            if err > tol {
                acc.converged = false;
            }
            acc.value += left + right;
            acc.error_estimate += err;
            acc.panels += 2;
            return;
        }
        self.refine(f, a, mid, left, 0.5 * tol, depth - 1, acc);
        self.refine(f, mid, b, right, 0.5 * tol, depth - 1, acc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_small_rules() {
        let (x, w) = gauss_legendre(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);

        let (x, w) = gauss_legendre(3);
        let r = 0.6f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && x[1] == 0.0);
        assert!((w[0] - 5.0 / 9.0).abs() < 1e-15 && (w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_two_and_integrate_polynomials_exactly() {
        for n in [1, 4, 16, 33, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
            // x^(2n-2) integrates to 2 / (2n-1)
            let k = 2 * n - 2;
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            assert!((got - 2.0 / (k as f64 + 1.0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn adaptive_gaussian_integral() {
        let gl = GaussLegendre::new(16);
        let f = |x: f64| (-0.5 * x * x).exp();
        let r = gl.adaptive(&f, -12.0, 12.0, 4, 1e-14, 30);
        assert!(r.converged);
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }
}
