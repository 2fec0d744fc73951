use std::f64::consts::PI;

use ddtrack_core::channel::{cfr_from_paths, paths_for_window, synthesize_cfr, OfdmParams, Path};
use ddtrack_core::rng::rng_from;
use ddtrack_core::scene::{GainRange, Scene, SceneGenerator, Target, Vec3};
use ddtrack_core::{Complex64, SPEED_OF_LIGHT};
use proptest::prelude::*;

fn scene(targets: Vec<Target>) -> Scene {
    Scene {
        tx_pos: Vec3::new(0.0, 0.0, 0.0),
        rx_pos: Vec3::new(100.0, 0.0, 0.0),
        carrier_freq: 5e9,
        noise_power: None,
        los_gain_db: None,
        rng_seed: 3,
        targets,
    }
}

fn target(pos: Vec3, v_kmh: Vec3, label: usize) -> Target {
    Target { initial_pos: pos, velocity: v_kmh, gain_db: 0.0, gain_range_db: None, label }
}

fn generator() -> SceneGenerator {
    SceneGenerator {
        area_size: 100.0,
        tx_height: 10.0,
        rx_height: 10.0,
        target_height: 1.5,
        min_clearance: 10.0,
        min_baseline: 30.0,
        speed_min_kmh: 10.0,
        speed_max_kmh: 15.0,
        carrier_freq: 5e9,
        noise_power: Some(1e-3),
        los_gain_db: Some(0.0),
        target_gains: vec![GainRange { min_db: -1.36, max_db: 33.98 }, GainRange { min_db: 3.44, max_db: 32.97 }],
    }
}

#[test]
fn position_matches_arithmetic() {
    let s = scene(vec![target(Vec3::new(50.0, 50.0, 0.0), Vec3::new(-10.0, -10.0, 0.0), 0)]);
    let p = s.target_position(0, 15.0).unwrap();
    let expected = 50.0 - 10.0 / 3.6 * 15.0;
    assert!((p.x - expected).abs() < 1e-12 && (p.y - expected).abs() < 1e-12 && p.z == 0.0);
    assert_eq!(s.target_position(0, 0.0).unwrap(), Vec3::new(50.0, 50.0, 0.0));
}

#[test]
fn symmetric_crossing_has_zero_doppler() {
    let s = scene(vec![target(Vec3::new(50.0, 50.0, 0.0), Vec3::new(36.0, 0.0, 0.0), 0)]);
    assert!(s.ground_truth(0, 0.0).unwrap().doppler.abs() < 1e-9);
}

#[test]
fn stationary_target_is_constant() {
    let s = scene(vec![target(Vec3::new(20.0, 30.0, 0.0), Vec3::ZERO, 0)]);
    let a = s.ground_truth(0, 0.0).unwrap();
    let b = s.ground_truth(0, 7.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.doppler, 0.0);
}

#[test]
fn invalid_target_index() {
    let s = scene(vec![target(Vec3::new(20.0, 30.0, 0.0), Vec3::ZERO, 0)]);
    assert!(s.ground_truth(1, 0.0).is_err());
}

#[test]
fn generation_is_reproducible() {
    let g = generator();
    let a = g.generate(&mut rng_from(11, &[1]));
    let b = g.generate(&mut rng_from(11, &[1]));
    let c = g.generate(&mut rng_from(12, &[1]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    a.validate().unwrap();
    for t in &a.targets {
        let v = t.velocity.norm();
        assert!((10.0..=15.0).contains(&v), "speed {v}");
    }
}

proptest! {
    #[test]
    fn doppler_is_delay_derivative(
        tx in prop::array::uniform3(-50.0f64..50.0),
        rx in prop::array::uniform3(-50.0f64..50.0),
        p in prop::array::uniform3(-50.0f64..50.0),
        v in prop::array::uniform3(-20.0f64..20.0),
        t in 0.0f64..15.0,
    ) {
        let (tx, rx, p) = (Vec3::from(tx), Vec3::from(rx), Vec3::from(p));
        let pt = p + Vec3::from(v) * (t / 3.6);
        prop_assume!((tx - rx).norm() > 1.0 && (pt - tx).norm() > 1.0 && (pt - rx).norm() > 1.0);
        let s = Scene { tx_pos: tx, rx_pos: rx, ..scene(vec![target(p, Vec3::from(v), 0)]) };
        let d = 1e-6;
        let gt = s.ground_truth(0, t).unwrap();
        let plus = s.ground_truth(0, t + d).unwrap().delay;
        let minus = s.ground_truth(0, (t - d).max(0.0)).unwrap().delay;
        let step = if t >= d { 2.0 * d } else { t + d };
        let fd = -s.carrier_freq * (plus - minus) / step;
        // scale for near-zero Dopplers: the largest possible magnitude
        let scale = gt.doppler.abs().max(s.carrier_freq * Vec3::from(v).norm() / 3.6 / SPEED_OF_LIGHT * 1e-2);
        prop_assert!((gt.doppler - fd).abs() <= 1e-4 * scale, "nu {} fd {}", gt.doppler, fd);
        prop_assert!(gt.delay >= s.baseline_delay());
    }
}

fn desk() -> OfdmParams {
    OfdmParams::new(60e3, 32, 32, 32, 4)
}

#[test]
fn last_window_ends_at_total_symbols() {
    for (gap, n) in [(1400, 1400), (700, 1400), (2000, 1400)] {
        let p = OfdmParams::new(15e3, 64, n, gap, 30);
        let last = p.window_indices(29).unwrap();
        assert_eq!(last.end - 1, 29 * gap + n - 1);
        assert_eq!(last.end, p.total_symbols());
        assert_eq!(p.windows_overlap(), gap < n);
    }
    assert!(OfdmParams::new(15e3, 64, 1400, 1400, 30).window_indices(30).is_err());
}

#[test]
fn reference_numerology_resolutions() {
    let p = OfdmParams::new(15e3, 1024, 1400, 7500, 30);
    assert!((p.delay_resolution() * 1e9 - 65.1).abs() < 0.05);
    assert!((p.doppler_resolution() - 10.714).abs() < 1e-3);
}

#[test]
fn no_paths_give_zero_cfr() {
    let cfr = cfr_from_paths(&[], &desk(), 1).unwrap();
    assert!(cfr.data.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
}

#[test]
fn delay_ramp_matches_direct_formula() {
    let p = desk();
    let path = Path { gain: Complex64::new(0.5, -0.3), delay: 10.0 * p.delay_resolution(), doppler: 3.0 * p.doppler_resolution() };
    let k = 2;
    let cfr = cfr_from_paths(&[path], &p, k).unwrap();
    for n in 0..p.n_subcarriers {
        for m in 0..p.symbols_per_window {
            let t = ((k * p.window_gap + m) as f64) * p.symbol_duration;
            let f = n as f64 * p.subcarrier_spacing;
            let phase = -2.0 * PI * f * path.delay + 2.0 * PI * path.doppler * t;
            let expect = path.gain * Complex64::from_polar(1.0, phase);
            assert!((cfr.get(n, m) - expect).norm() < 1e-10);
        }
    }
}

#[test]
fn noise_is_deterministic_per_window() {
    let mut s = generator().generate(&mut rng_from(5, &[]));
    s.noise_power = Some(0.1);
    let p = desk();
    assert_eq!(synthesize_cfr(&s, &p, 1).unwrap(), synthesize_cfr(&s, &p, 1).unwrap());
    assert_ne!(synthesize_cfr(&s, &p, 1).unwrap().data, synthesize_cfr(&s, &p, 2).unwrap().data);
    let clean = cfr_from_paths(&paths_for_window(&s, &p, 1).unwrap(), &p, 1).unwrap();
    let noisy = synthesize_cfr(&s, &p, 1).unwrap();
    let power: f64 = clean.data.iter().zip(&noisy.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / clean.data.len() as f64;
    assert!((power - 0.1).abs() < 0.03, "empirical noise power {power}");
}

fn arb_path() -> impl Strategy<Value = Path> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.0f64..4e-6, -300.0f64..300.0).prop_map(|(re, im, delay, doppler)| Path {
        gain: Complex64::new(re, im),
        delay,
        doppler,
    })
}

proptest! {
    #[test]
    fn cfr_is_linear_and_bounded(a in prop::collection::vec(arb_path(), 0..4), b in prop::collection::vec(arb_path(), 0..4)) {
        let p = desk();
        let ha = cfr_from_paths(&a, &p, 1).unwrap();
        let hb = cfr_from_paths(&b, &p, 1).unwrap();
        let both: Vec<Path> = a.iter().chain(&b).copied().collect();
        let hab = cfr_from_paths(&both, &p, 1).unwrap();
        let bound: f64 = both.iter().map(|q| q.gain.norm()).sum();
        for i in 0..hab.data.len() {
            prop_assert!((hab.data[i] - ha.data[i] - hb.data[i]).norm() < 1e-9);
            prop_assert!(hab.data[i].norm() <= bound * (1.0 + 1e-12) + 1e-12);
        }
    }
}

#[test]
fn paths_update_between_windows() {
    let s = scene(vec![target(Vec3::new(30.0, 40.0, 0.0), Vec3::new(15.0, 0.0, 0.0), 0)]);
    let p = OfdmParams::new(60e3, 32, 32, 32, 4);
    let a = paths_for_window(&s, &p, 0).unwrap();
    let b = paths_for_window(&s, &p, 1).unwrap();
    let gt = s.ground_truth(0, p.window_start_time(1)).unwrap();
    assert_ne!(a[0].delay, b[0].delay);
    assert_eq!(b[0].delay, gt.delay);
    assert_eq!(b[0].doppler, gt.doppler);
}
