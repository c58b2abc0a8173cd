use manhattan_cell::distributions::{InterArrival, InterArrivalSpec};
use manhattan_cell::renewal::{sample_palm_renewal, sample_stationary_renewal};
use manhattan_cell::rng::{stream, substream};
use manhattan_cell::stats::{ks_test, quantize};
use manhattan_cell::validation::{covering_gap, forward_recurrence, renewal_intensity};
use proptest::prelude::*;

fn law(spec: InterArrivalSpec) -> InterArrival {
    InterArrival::new(spec).unwrap()
}

#[test]
fn exponential_count_is_poisson() {
    let d = law(InterArrivalSpec::Exponential { rate: 1.0 });
    let r = sample_stationary_renewal(&d, 500.0, &mut stream(1)).unwrap();
    let n = r.len() as f64;
    assert!((n - 1000.0).abs() <= 4.0 * 1000f64.sqrt(), "{n}");
}

#[test]
fn intensity_is_inverse_mean() {
    for (i, spec) in [
        InterArrivalSpec::Exponential { rate: 2.0 },
        InterArrivalSpec::TruncatedGaussian { mu: 1.0, sigma: 0.5 },
        InterArrivalSpec::Deterministic { mu: 0.7 },
    ]
    .into_iter()
    .enumerate()
    {
        let d = law(spec);
        let est = renewal_intensity(&d, 100.0, 1_000, &mut substream(2, &[i as u64])).unwrap();
        let target = 1.0 / d.mean();
        assert!(((est - target) / target).abs() < 0.01, "{spec:?}: {est} vs {target}");
    }
}

#[test]
fn palm_first_gap_has_the_gap_law() {
    let d = law(InterArrivalSpec::Exponential { rate: 1.0 });
    let mut rng = stream(3);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let r = sample_palm_renewal(&d, 30.0, &mut rng).unwrap();
        sum += r.next_after(0.0).unwrap();
    }
    assert!((sum / n as f64 - 1.0).abs() < 0.01);
}

#[test]
fn waiting_time_paradox() {
    let d = law(InterArrivalSpec::TruncatedGaussian { mu: 1.0, sigma: 0.5 });
    let mut rng = stream(4);
    let gaps: Vec<f64> = (0..100_000)
        .filter_map(|_| covering_gap(&sample_stationary_renewal(&d, 10.0, &mut rng).unwrap()))
        .collect();
    let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let target = d.second_moment() / d.mean();
    assert!(((m - target) / target).abs() < 0.01, "{m} vs {target}");
    assert!(m > d.mean() * 1.1);
}

#[test]
fn forward_recurrence_is_stationary() {
    let d = law(InterArrivalSpec::TruncatedGaussian { mu: 1.0, sigma: 0.1 });
    let mut rng = stream(5);
    let sample = |t: f64, rng: &mut _| -> Vec<f64> {
        (0..10_000)
            .map(|_| quantize(forward_recurrence(&sample_stationary_renewal(&d, 10.0, rng).unwrap(), t).unwrap()))
            .collect()
    };
    let a = sample(0.0, &mut rng);
    let b = sample(3.7, &mut rng);
    assert!(ks_test(&a, &b, 0.01).passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn realizations_are_sorted_and_inside(rate in 0.2f64..5.0, w in 0.5f64..50.0, seed in any::<u64>()) {
        let d = law(InterArrivalSpec::Exponential { rate });
        let s = sample_stationary_renewal(&d, w, &mut stream(seed)).unwrap();
        let p = sample_palm_renewal(&d, w, &mut stream(seed)).unwrap();
        for r in [&s, &p] {
            prop_assert!(r.points.windows(2).all(|g| g[1] > g[0]));
            prop_assert!(r.points.iter().all(|x| x.abs() <= w));
        }
        prop_assert!(p.contains_zero());
        prop_assert_eq!(s, sample_stationary_renewal(&d, w, &mut stream(seed)).unwrap());
    }
}
