use diffgan_core::analytic::{
    jsd_discrete, jsd_joint_equality, jsd_monte_carlo, jsd_quadrature, optimal_discriminator_at, theta_grid,
    DiscreteJointSpec, EstimatorKind, ToyParams,
};
use diffgan_core::{
    jsd_diffused, jsd_original, optimal_discriminator, wasserstein_reference, DiffusionSchedule, JsdMethod,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{LN_2, PI};

const QUAD: JsdMethod = JsdMethod::Quadrature { nodes: 32 };

fn pixel() -> DiffusionSchedule {
    DiffusionSchedule::new(1000, 1e-4, 0.02, 0.05).unwrap()
}

fn quad(theta: f64, t: usize) -> f64 {
    jsd_diffused(theta, t, &pixel(), QUAD).unwrap().value
}

/// Composite Simpson in standard units for two unit-variance normals
/// separated by `d`. Plain fixed grid, nothing shared with the library.
fn simpson_oracle(d: f64) -> f64 {
    let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
    let (lo, hi) = (d.min(0.0) - 12.0, d.max(0.0) + 12.0);
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let f = |u: f64| {
        let p = phi(u);
        let q = phi(u - d);
        let m = 0.5 * (p + q);
        let term = |a: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
        0.5 * (term(p) + term(q))
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn original_and_reference_examples() {
    assert_eq!(jsd_original(0.0), 0.0);
    assert_eq!(jsd_original(0.3), LN_2);
    assert_eq!(jsd_original(-5.0), LN_2);
    assert_eq!(wasserstein_reference(0.0), 0.0);
    assert_eq!(wasserstein_reference(2.0), 2.0);
    assert_eq!(wasserstein_reference(-0.7), 0.7);
}

#[test]
fn identical_distributions_have_zero_divergence() {
    for t in [1, 50, 200, 800, 1000] {
        let v = jsd_diffused(0.0, t, &pixel(), QUAD).unwrap();
        assert!(v.value.abs() <= 1e-10, "t={t}: {}", v.value);
        assert_eq!(v.method, EstimatorKind::Quadrature);
    }
}

#[test]
fn disjoint_limit_reaches_ln2() {
    let toy = ToyParams { theta: 50.0, t: 1, a_t: 1.0, b_t: 1.0 };
    let v = jsd_quadrature(&toy, 32, 8.0).unwrap().value;
    assert!((v - LN_2).abs() <= 1e-6, "{v}");
}

#[test]
fn quadrature_matches_simpson_oracle() {
    let s = pixel();
    for (theta, t) in [(0.5, 200), (1.0, 800), (0.01, 1), (-0.2, 50), (1e-3, 1), (0.3, 1000)] {
        let toy = ToyParams::new(theta, t, &s).unwrap();
        let d = toy.shift() / toy.b_t.sqrt();
        let got = quad(theta, t);
        let oracle = simpson_oracle(d.abs());
        assert!((got - oracle).abs() <= 1e-10, "theta={theta} t={t}: {got} vs {oracle}");
    }
}

#[test]
fn quadrature_agrees_with_monte_carlo() {
    let s = pixel();
    for theta in [0.02, 0.05] {
        let toy = ToyParams::new(theta, 200, &s).unwrap();
        let q = jsd_quadrature(&toy, 32, 8.0).unwrap();
        let mc = jsd_monte_carlo(&toy, 10_000_000, 7).unwrap();
        assert_eq!(mc.method, EstimatorKind::MonteCarlo);
        assert!(mc.std_err > 0.0);
        assert!((q.value - mc.value).abs() <= 3.0 * mc.std_err, "{} vs {} +- {}", q.value, mc.value, mc.std_err);
    }
}

/// At theta = 0.5 the means sit about 14 standard deviations apart. The
/// deficit below ln 2 lives where a draw lands roughly once in 1e12, so
/// the sampled standard error collapses and only an absolute gap is
/// meaningful.
#[test]
fn monte_carlo_saturates_when_well_separated() {
    let s = pixel();
    let toy = ToyParams::new(0.5, 200, &s).unwrap();
    let q = jsd_quadrature(&toy, 32, 8.0).unwrap();
    let mc = jsd_monte_carlo(&toy, 10_000_000, 7).unwrap();
    assert!((q.value - mc.value).abs() <= 3.0 * mc.std_err + 1e-10, "{} vs {}", q.value, mc.value);
}

#[test]
fn estimator_preconditions() {
    let s = pixel();
    assert!(jsd_diffused(0.5, 0, &s, QUAD).is_err());
    assert!(jsd_diffused(0.5, 1001, &s, QUAD).is_err());
    assert!(jsd_diffused(f64::NAN, 10, &s, QUAD).is_err());
    assert!(jsd_diffused(0.5, 10, &s, JsdMethod::Quadrature { nodes: 8 }).is_err());
    assert!(jsd_diffused(0.5, 10, &s, JsdMethod::MonteCarlo { samples: 4, seed: 0 }).is_err());
}

#[test]
fn smoothing_is_monotone_in_t() {
    for theta in [0.1, 0.5, 1.0, -0.4] {
        let values: Vec<f64> = [1, 50, 200, 800].iter().map(|&t| quad(theta, t)).collect();
        for w in values.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "theta={theta}: {values:?}");
        }
    }
}

#[test]
fn diffused_divergence_has_no_jump() {
    let grid = theta_grid(2001, -1.0, 1.0);
    for t in [1, 50, 200, 800] {
        let values: Vec<f64> = grid.iter().map(|&th| quad(th, t)).collect();
        let max_step = values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(max_step < 0.5 * LN_2, "t={t}: adjacent change {max_step}");
        assert!(values.iter().all(|&v| (-1e-12..=LN_2 + 1e-9).contains(&v)));
    }
    let h = 1e-3;
    assert_eq!(jsd_original(h) - jsd_original(0.0), LN_2);
}

#[test]
fn optimal_discriminator_examples() {
    let s = pixel();
    for t in [1, 50, 800] {
        let toy = ToyParams::new(0.7, t, &s).unwrap();
        assert_eq!(optimal_discriminator(toy.shift() / 2.0, 0.7, t, &s).unwrap(), 0.5);
        for y in [-3.0, 0.0, 0.2, 4.0] {
            assert_eq!(optimal_discriminator(y, 0.0, t, &s).unwrap(), 0.5);
        }
    }
    assert!(optimal_discriminator(0.0, 1.0, 0, &s).is_err());

    let toy = ToyParams { theta: 1.0, t: 1, a_t: 0.9, b_t: 0.01 };
    let density = |y: f64, m: f64| (-(y - m) * (y - m) / (2.0 * 0.01)).exp() / (2.0 * PI * 0.01).sqrt();
    for y in [0.0, 0.3, 0.45, 0.6, 1.0] {
        let (pr, pg) = (density(y, 0.0), density(y, 0.9));
        let oracle = pr / (pr + pg);
        let got = optimal_discriminator_at(&toy, y);
        assert!((got - oracle).abs() <= 1e-12 * oracle.max(1e-3), "y={y}: {got} vs {oracle}");
    }
}

#[test]
fn joint_equality_examples() {
    let p = vec![0.2, 0.3, 0.5];
    let q = vec![0.6, 0.1, 0.3];
    let same = DiscreteJointSpec {
        weights: vec![0.4, 0.6],
        real: vec![p.clone(), q.clone()],
        fake: vec![p.clone(), q.clone()],
    };
    assert_eq!(jsd_joint_equality(&same).unwrap(), (0.0, 0.0));

    let single = DiscreteJointSpec { weights: vec![1.0], real: vec![p.clone()], fake: vec![q.clone()] };
    let (lhs, rhs) = jsd_joint_equality(&single).unwrap();
    let plain = jsd_discrete(&p, &q);
    assert!((lhs - plain).abs() <= 1e-15 && (rhs - plain).abs() <= 1e-15);

    let spec = DiscreteJointSpec::random(5, 3, &mut ChaCha8Rng::seed_from_u64(3));
    let (lhs, rhs) = jsd_joint_equality(&spec).unwrap();
    assert!((lhs - rhs).abs() <= 1e-12);

    let bad = DiscreteJointSpec {
        weights: vec![0.5, 0.6],
        real: vec![p.clone(), p.clone()],
        fake: vec![q.clone(), q.clone()],
    };
    assert!(jsd_joint_equality(&bad).is_err());
    let ragged = DiscreteJointSpec { weights: vec![1.0], real: vec![p], fake: vec![vec![0.5, 0.5]] };
    assert!(jsd_joint_equality(&ragged).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergence_is_symmetric_and_bounded(theta in -3.0f64..3.0, t in 1usize..=1000) {
        let a = quad(theta, t);
        let b = quad(-theta, t);
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((-1e-12..=LN_2 + 1e-9).contains(&a));
    }

    #[test]
    fn discriminator_stays_inside_unit_interval(y in -1e3f64..1e3, theta in -10.0f64..10.0, t in 1usize..=1000) {
        let d = optimal_discriminator(y, theta, t, &pixel()).unwrap();
        prop_assert!(d > 0.0 && d < 1.0);
    }

    #[test]
    fn joint_equality_holds(support in 1usize..=8, steps in 1usize..=5, seed in any::<u64>()) {
        let spec = DiscreteJointSpec::random(support, steps, &mut ChaCha8Rng::seed_from_u64(seed));
        let (lhs, rhs) = jsd_joint_equality(&spec).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
        prop_assert!((-1e-15..=LN_2 + 1e-12).contains(&lhs));
    }
}
