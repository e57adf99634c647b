mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socsim::trace::{pchip_resample, DeviceTrace, Pchip, RawSample};
use support::reference_pchip;

/// Irregularly spaced monotone series inside [0, 100].
fn monotone_series(rng: &mut ChaCha8Rng) -> (Vec<i64>, Vec<f64>) {
    let n = rng.random_range(10..=200);
    let mut ts = vec![0i64];
    for _ in 1..n {
        let last = *ts.last().unwrap();
        ts.push(last + rng.random_range(60..=3600));
    }
    let steps: Vec<f64> = (1..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() }).collect();
    let total: f64 = steps.iter().sum::<f64>().max(1e-9);
    let (lo, hi) = (rng.random_range(0.0..40.0), rng.random_range(60.0..100.0));
    let rising = rng.random_bool(0.5);
    let mut ys = vec![if rising { lo } else { hi }];
    for s in steps {
        let dy = s / total * (hi - lo);
        let last = *ys.last().unwrap();
        ys.push(if rising { last + dy } else { last - dy });
    }
    (ts, ys)
}

#[test]
fn resampled_grid_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let (ts, ys) = monotone_series(&mut rng);
        let trace = DeviceTrace::raw("r", ts.iter().zip(&ys).map(|(&t, &y)| RawSample::new(t, y)).collect());
        let out = pchip_resample(&trace, 600).unwrap();

        let xs: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
        let d = reference_pchip::derivatives(&xs, &ys);
        assert_eq!(out.samples.len() as i64, ts[ts.len() - 1] / 600 + 1);
        for s in &out.samples {
            let want = reference_pchip::evaluate(&xs, &ys, &d, s.timestamp as f64);
            assert!((s.battery_level - want).abs() < 1e-6, "case {case} t={}: {} vs {want}", s.timestamp, s.battery_level);

            let i = xs.partition_point(|&x| x <= s.timestamp as f64).clamp(1, xs.len() - 1);
            let (a, b) = (ys[i - 1].min(ys[i]), ys[i - 1].max(ys[i]));
            assert!(s.battery_level >= a - 1e-9 && s.battery_level <= b + 1e-9, "case {case}: overshoot");
        }

        let interp = Pchip::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((interp.eval(*x) - y).abs() < 1e-9);
        }
    }
}

#[test]
fn reference_agrees_on_slopes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (ts, ys) = monotone_series(&mut rng);
        let xs: Vec<f64> = ts.iter().map(|&t| t as f64).collect();
        let ours = Pchip::new(&xs, &ys).unwrap();
        for (a, b) in ours.slopes().iter().zip(reference_pchip::derivatives(&xs, &ys)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-6));
        }
    }
}

#[test]
fn non_monotone_knots_follow_reference() {
    let xs = [0.0, 1.0, 2.5, 3.0, 5.0, 6.0];
    let ys = [10.0, 30.0, 20.0, 20.0, 80.0, 5.0];
    let ours = Pchip::new(&xs, &ys).unwrap();
    let d = reference_pchip::derivatives(&xs, &ys);
    for k in 0..=600 {
        let x = k as f64 * 0.01;
        assert!((ours.eval(x) - reference_pchip::evaluate(&xs, &ys, &d, x)).abs() < 1e-9, "x={x}");
    }
}
