mod common;

use common::binomial_band;
use diffgan_core::tsampler::{EPL_LEN, EPL_ZEROS};
use diffgan_core::{pi_weights, PolicyParams, SamplingMode, TimestepPolicy};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn policy(t_init: usize, mode: SamplingMode) -> TimestepPolicy {
    let params = PolicyParams { mode, t_min: 1, t_init: Some(t_init), ..Default::default() };
    TimestepPolicy::new(params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

#[test]
fn weight_examples() {
    let w = pi_weights(3, SamplingMode::Priority).unwrap();
    let expect = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
    for (a, b) in w.iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(pi_weights(4, SamplingMode::Uniform).unwrap(), vec![0.25; 4]);
    assert_eq!(pi_weights(1, SamplingMode::Priority).unwrap(), vec![1.0]);
    assert!(pi_weights(0, SamplingMode::Uniform).is_err());
}

#[test]
fn weights_sum_to_one_for_every_length() {
    for mode in [SamplingMode::Uniform, SamplingMode::Priority] {
        for t in 1..=1000 {
            let w = pi_weights(t, mode).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "T={t}");
        }
    }
}

#[test]
fn single_step_list() {
    let p = policy(1, SamplingMode::Priority);
    assert!(p.epl()[..EPL_ZEROS].iter().all(|&t| t == 0));
    assert!(p.epl()[EPL_ZEROS..].iter().all(|&t| t == 1));
}

#[test]
fn priority_frequency_matches_multinomial() {
    let mut p = policy(10, SamplingMode::Priority);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let resamples = 100_000;
    let mut hits = 0u64;
    for _ in 0..resamples {
        p.resample_epl(&mut rng);
        hits += p.epl()[EPL_ZEROS..].iter().filter(|&&t| t == 10).count() as u64;
    }
    let n = (resamples * (EPL_LEN - EPL_ZEROS)) as f64;
    let freq = hits as f64 / n;
    let expect = 10.0 / 55.0;
    assert!((freq - expect).abs() <= binomial_band(expect, n), "{freq} vs {expect}");
}

#[test]
fn draws_from_half_zero_list() {
    let mut p = policy(5, SamplingMode::Uniform);
    let mut epl = [0; EPL_LEN];
    epl[EPL_ZEROS..].fill(5);
    p.set_epl(epl);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = 100_000;
    let draws = p.draw_t(&mut rng, m);
    assert!(draws.iter().all(|&t| t == 0 || t == 5));
    let frac = draws.iter().filter(|&&t| t == 5).count() as f64 / m as f64;
    assert!((frac - 0.5).abs() <= binomial_band(0.5, m as f64));

    p.set_epl([0; EPL_LEN]);
    assert!(p.draw_t(&mut rng, 1000).iter().all(|&t| t == 0));
    assert!(p.draw_t(&mut rng, 0).is_empty());
}

#[test]
fn observe_examples() {
    let mut p = policy(5, SamplingMode::Priority);
    p.observe_d(&[0.9; 8]).unwrap();
    assert_eq!(p.take_window(), 1.0);
    p.observe_d(&[0.5; 8]).unwrap();
    assert_eq!(p.take_window(), 0.0);
    p.observe_d(&[0.9, 0.9, 0.1, 0.9]).unwrap();
    assert_eq!(p.take_window(), 0.5);
    assert!(p.observe_d(&[0.2, f64::NAN]).is_err());
}

/// Drives one update with a window whose `r_d` is exactly `r`.
fn push_window(p: &mut TimestepPolicy, signs: &[f64], rng: &mut ChaCha8Rng) -> (f64, usize) {
    let probs: Vec<f64> = signs.iter().map(|&s| 0.5 + 0.4 * s).collect();
    p.observe_d(&probs).unwrap();
    let r = p.update_t(rng);
    (r, p.t_current())
}

#[test]
fn update_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = PolicyParams { t_init: Some(10), ..Default::default() };
    let mut p = TimestepPolicy::new(params, &mut rng).unwrap();
    assert_eq!(push_window(&mut p, &[1.0; 4], &mut rng), (1.0, 12));
    // four positives and one negative give exactly 0.6
    assert_eq!(push_window(&mut p, &[1.0, 1.0, 1.0, 1.0, -1.0], &mut rng), (0.6, 12));

    let params = PolicyParams { t_init: Some(1000), ..Default::default() };
    let mut p = TimestepPolicy::new(params, &mut rng).unwrap();
    assert_eq!(push_window(&mut p, &[1.0; 4], &mut rng).1, 1000);
}

#[test]
fn scripted_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = PolicyParams::default();
    let (t_min, t_max, c) = (params.t_min, params.t_max, params.c_step);

    let mut p = TimestepPolicy::new(params, &mut rng).unwrap();
    for k in 1..=600 {
        let (_, t) = push_window(&mut p, &[1.0; 16], &mut rng);
        assert_eq!(t, (t_min + k * c).min(t_max));
    }
    for k in 1..=600 {
        let (_, t) = push_window(&mut p, &[-1.0; 16], &mut rng);
        assert_eq!(t, t_max.saturating_sub(k * c).max(t_min));
    }
}

proptest! {
    #[test]
    fn list_layout_after_resample(t in 1usize..=1000, uniform in any::<bool>(), seed in any::<u64>()) {
        let mode = if uniform { SamplingMode::Uniform } else { SamplingMode::Priority };
        let mut p = policy(t, mode);
        p.resample_epl(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(p.epl()[..EPL_ZEROS].iter().all(|&x| x == 0));
        prop_assert!(p.epl()[EPL_ZEROS..].iter().all(|&x| (1..=t).contains(&x)));
    }

    #[test]
    fn window_is_order_independent(probs in prop::collection::vec(0.0f64..=1.0, 0..200), seed in any::<u64>()) {
        let mut a = policy(7, SamplingMode::Priority);
        let mut b = a.clone();
        a.observe_d(&probs).unwrap();
        let mut shuffled = probs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mid = shuffled.len() / 2;
        b.observe_d(&shuffled[..mid]).unwrap();
        b.observe_d(&shuffled[mid..]).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(a.update_t(&mut r1), b.update_t(&mut r2));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn t_stays_in_bounds(signs in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), 1..300), t_min in 1usize..50, extra in 0usize..100, c in 1usize..8) {
        let params = PolicyParams { t_min, t_max: t_min + extra, c_step: c, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = TimestepPolicy::new(params, &mut rng).unwrap();
        let mut expect = t_min as i64;
        for s in signs {
            let (r, t) = push_window(&mut p, &[s], &mut rng);
            let dir = if r > 0.6 { 1 } else if r < 0.6 { -1 } else { 0 };
            expect = (expect + dir * c as i64).clamp(t_min as i64, (t_min + extra) as i64);
            prop_assert_eq!(t as i64, expect);
        }
    }
}
