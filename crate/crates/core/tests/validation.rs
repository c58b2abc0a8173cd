use manhattan_cell::renewal::{sample_palm_renewal, sample_stationary_renewal};
use manhattan_cell::rng::RandomStream;
use manhattan_cell::streets::{GridLaws, ManhattanGrid};
use manhattan_cell::distributions::InterArrivalSpec;
use manhattan_cell::validation::{grid_recentring, grid_recentring_checks, run_suite, Suite, ValidationOptions};
use manhattan_cell::Error;
use rand::Rng;

fn asymmetric() -> GridLaws {
    GridLaws::new(InterArrivalSpec::Exponential { rate: 3.0 }, InterArrivalSpec::Deterministic { mu: 1.0 }).unwrap()
}

#[test]
fn every_suite_passes() {
    let report = run_suite(Suite::All, &ValidationOptions::default()).unwrap();
    let failed: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
    assert!(failed.is_empty(), "{failed:?}");
    let mut buf = Vec::new();
    report.write_json_lines(&mut buf).unwrap();
    let lines: Vec<serde_json::Value> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), report.checks.len() + 1);
}

#[test]
fn correct_palm_sampler_passes_recentring() {
    let opts = ValidationOptions { seed: 4, ks_samples: 5_000 };
    assert!(grid_recentring("asym", &asymmetric(), &opts, 99).unwrap().iter().all(|c| c.passed));
}

#[test]
fn swapped_branch_weights_are_caught() {
    // Negative control: pick the horizontal branch with gamma_v / gamma instead of gamma_h / gamma.
    let laws = asymmetric();
    let w = 10.0 * laws.horizontal.mean().max(laws.vertical.mean());
    let wrong = |rng: &mut RandomStream| -> Result<ManhattanGrid, Error> {
        let on_horizontal = rng.random::<f64>() > laws.horizontal_weight();
        let (horizontal_ys, vertical_xs) = if on_horizontal {
            (sample_palm_renewal(&laws.horizontal, w, rng)?, sample_stationary_renewal(&laws.vertical, w, rng)?)
        } else {
            (sample_stationary_renewal(&laws.horizontal, w, rng)?, sample_palm_renewal(&laws.vertical, w, rng)?)
        };
        Ok(ManhattanGrid { vertical_xs, horizontal_ys, window_half_width: w })
    };
    let opts = ValidationOptions { seed: 4, ks_samples: 5_000 };
    let checks = grid_recentring_checks("swapped", &laws, &opts, 99, wrong).unwrap();
    assert!(checks.iter().any(|c| !c.passed));
}

#[test]
fn stationary_grid_is_not_palm() {
    let laws = asymmetric();
    let w = 10.0 * laws.horizontal.mean().max(laws.vertical.mean());
    let opts = ValidationOptions { seed: 5, ks_samples: 5_000 };
    let checks = grid_recentring_checks("stationary", &laws, &opts, 98, |rng| {
        manhattan_cell::streets::sample_manhattan(&laws, w, rng)
    })
    .unwrap();
    assert!(checks.iter().any(|c| !c.passed));
}

#[test]
fn unknown_suite() {
    assert!(matches!("bogus".parse::<Suite>(), Err(Error::UnknownSuite(_))));
    assert_eq!("graph".parse::<Suite>().unwrap(), Suite::Graph);
}
