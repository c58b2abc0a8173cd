use manhattan_cell::distributions::InterArrivalSpec;
use manhattan_cell::geometry::{Point, Rect};
use manhattan_cell::rng::stream;
use manhattan_cell::streets::{
    sample_manhattan, sample_manhattan_palm, sample_nested, sample_nested_palm, total_length, GridLaws, NestedLaws,
    Orientation, PalmBranch, Provenance, StreetLaws, StreetModel, StreetSystem,
};
use proptest::prelude::*;

fn det(mu: f64) -> InterArrivalSpec {
    InterArrivalSpec::Deterministic { mu }
}

fn exp(rate: f64) -> InterArrivalSpec {
    InterArrivalSpec::Exponential { rate }
}

fn lattice_nested() -> NestedLaws {
    NestedLaws {
        main: GridLaws::new(det(10.0), det(10.0)).unwrap(),
        side: GridLaws::new(det(1.0), det(1.0)).unwrap(),
    }
}

#[test]
fn intensities_of_the_examples() {
    let i = GridLaws::new(exp(0.5), det(1.0)).unwrap().intensities();
    assert_eq!((i.gamma_h, i.gamma_v, i.gamma), (0.5, 1.0, 1.5));
    let i = lattice_nested().intensities();
    assert!((i.gamma - 0.2).abs() < 1e-15);
    assert!((i.gamma_1 - 2.0).abs() < 1e-15);
    assert!((i.gamma_bar - 2.2).abs() < 1e-12);
}

/// Street length inside [0, 1]^2 by a direct per-line formula.
fn unit_square_length(streets: &StreetSystem) -> f64 {
    let clip = Rect::new(0.0, 0.0, 1.0, 1.0);
    total_length(&streets.segments(&clip))
}

#[test]
fn street_length_per_unit_area_matches_gamma() {
    let laws = GridLaws::new(exp(1.0), InterArrivalSpec::TruncatedGaussian { mu: 0.5, sigma: 0.2 }).unwrap();
    let mut rng = stream(1);
    let n = 10_000;
    let total: f64 = (0..n)
        .map(|_| unit_square_length(&StreetSystem::Manhattan(sample_manhattan(&laws, 2.0, &mut rng).unwrap())))
        .sum();
    let gamma = laws.intensities().gamma;
    assert!(((total / n as f64 - gamma) / gamma).abs() < 0.01);
}

#[test]
fn nested_street_length_matches_gamma_bar() {
    let laws = NestedLaws {
        main: GridLaws::new(det(10.0), det(10.0)).unwrap(),
        side: GridLaws::new(exp(1.0), exp(1.0)).unwrap(),
    };
    let mut rng = stream(2);
    let n = 1_000;
    let w = 15.0;
    let total: f64 = (0..n)
        .map(|_| {
            let s = StreetSystem::Nested(sample_nested(&laws, w, &mut rng).unwrap());
            total_length(&s.segments(&s.window()))
        })
        .sum();
    let per_area = total / n as f64 / (4.0 * w * w);
    let target = laws.intensities().gamma_bar;
    assert!(((per_area - target) / target).abs() < 0.015, "{per_area} vs {target}");
}

#[test]
fn poisson_line_count() {
    // Exponential gaps: horizontal line count in the window is Poisson(2 W rate).
    let laws = GridLaws::new(exp(0.5), exp(0.5)).unwrap();
    let mut rng = stream(3);
    let n = 20_000;
    let counts: Vec<f64> = (0..n)
        .map(|_| sample_manhattan(&laws, 10.0, &mut rng).unwrap().horizontal_ys.len() as f64)
        .collect();
    let m = counts.iter().sum::<f64>() / n as f64;
    let v = counts.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (n as f64 - 1.0);
    assert!((m - 10.0).abs() < 0.1 && (v - 10.0).abs() < 0.5, "{m} {v}");
}

#[test]
fn branch_frequencies() {
    let runs = 100_000;
    let ten = GridLaws::new(det(0.1), det(1.0)).unwrap();
    let mut rng = stream(4);
    let h = (0..runs)
        .filter(|_| sample_manhattan_palm(&ten, 1.0, &mut rng).unwrap().1 == PalmBranch::OnHorizontal)
        .count();
    assert!((h as f64 / runs as f64 - 10.0 / 11.0).abs() < 0.01);

    let laws = lattice_nested();
    let main = (0..runs)
        .filter(|_| {
            let (g, _) = sample_nested_palm(&laws, 1.0, &mut rng).unwrap();
            g.main.has_street_through_origin()
        })
        .count();
    assert!((main as f64 / runs as f64 - 0.2 / 2.2).abs() < 0.01);
}

#[test]
fn side_branch_origin_is_inside_its_block() {
    let laws = NestedLaws {
        main: GridLaws::new(exp(0.1), exp(0.1)).unwrap(),
        side: GridLaws::new(exp(1.0), exp(1.0)).unwrap(),
    };
    let mut rng = stream(5);
    let mut seen = 0;
    while seen < 200 {
        let (g, branch) = sample_nested_palm(&laws, 30.0, &mut rng).unwrap();
        if !matches!(branch, manhattan_cell::streets::NestedBranch::Side(_)) {
            continue;
        }
        seen += 1;
        assert!(!g.main.has_street_through_origin());
        let b = &g.blocks[g.block_containing(Point::ORIGIN).unwrap()];
        assert!(b.rect.x0 < 0.0 && b.rect.x1 > 0.0 && b.rect.y0 < 0.0 && b.rect.y1 > 0.0);
        assert!(b.vertical_xs.contains(&0.0) || b.horizontal_ys.contains(&0.0));
    }
}

#[test]
fn nested_lattice_blocks() {
    let mut rng = stream(6);
    let g = sample_nested(&lattice_nested(), 15.0, &mut rng).unwrap();
    let interior: Vec<_> = g
        .blocks
        .iter()
        .filter(|b| (b.rect.width() - 10.0).abs() < 1e-9 && (b.rect.height() - 10.0).abs() < 1e-9)
        .collect();
    assert!(!interior.is_empty());
    for b in interior {
        let inner = |c: &[f64], lo: f64, hi: f64| c.iter().filter(|&&x| x > lo && x < hi).count();
        let nx = inner(&b.vertical_xs, b.rect.x0, b.rect.x1);
        let ny = inner(&b.horizontal_ys, b.rect.y0, b.rect.y1);
        assert!((9..=10).contains(&nx) && (9..=10).contains(&ny), "{nx} {ny}");
    }
}

#[test]
fn side_segments_stay_in_their_blocks() {
    let laws = NestedLaws {
        main: GridLaws::new(exp(0.2), det(7.0)).unwrap(),
        side: GridLaws::new(exp(1.0), det(0.8)).unwrap(),
    };
    let mut rng = stream(7);
    for _ in 0..20 {
        let (g, _) = sample_nested_palm(&laws, 20.0, &mut rng).unwrap();
        let s = StreetSystem::Nested(g.clone());
        for seg in s.segments(&s.window()).iter().filter(|s| s.provenance == Provenance::Side) {
            let inside_some = g.blocks.iter().any(|b| b.rect.contains(seg.start) && b.rect.contains(seg.end));
            assert!(inside_some, "{seg:?}");
            let crosses_main = match seg.orientation {
                Orientation::Horizontal => g.main.vertical_xs.points.iter().any(|&x| x > seg.start.x && x < seg.end.x),
                Orientation::Vertical => g.main.horizontal_ys.points.iter().any(|&y| y > seg.start.y && y < seg.end.y),
            };
            assert!(!crosses_main, "{seg:?}");
        }
    }
}

#[test]
fn segment_length_matches_direct_formula() {
    let laws = GridLaws::new(exp(1.3), InterArrivalSpec::TruncatedGaussian { mu: 1.0, sigma: 0.4 }).unwrap();
    let mut rng = stream(8);
    for _ in 0..100 {
        let g = sample_manhattan(&laws, 10.0, &mut rng).unwrap();
        let clip = Rect::new(-3.3, -1.7, 4.1, 2.9);
        let direct = g.vertical_xs.points.iter().filter(|&&x| x >= clip.x0 && x <= clip.x1).count() as f64
            * clip.height()
            + g.horizontal_ys.points.iter().filter(|&&y| y >= clip.y0 && y <= clip.y1).count() as f64 * clip.width();
        let got = total_length(&StreetSystem::Manhattan(g).segments(&clip));
        assert!(((got - direct) / direct).abs() < 1e-9);
    }
}

#[test]
fn street_model_json() {
    let m: StreetModel = serde_json::from_str(
        r#"{"type": "nested", "horizontal": {"kind": "deterministic", "mu": 10},
            "vertical": {"kind": "deterministic", "mu": 10},
            "side_horizontal": {"kind": "exponential", "rate": 1}}"#,
    )
    .unwrap();
    let laws = StreetLaws::new(&m).unwrap();
    assert!((laws.intensities().gamma_1 - 2.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn palm_origin_always_on_a_street(rate_h in 0.1f64..5.0, mu_v in 0.1f64..5.0, seed in any::<u64>()) {
        let laws = StreetLaws::new(&StreetModel::Nested {
            horizontal: exp(rate_h / 10.0),
            vertical: det(mu_v * 10.0),
            side_horizontal: Some(exp(rate_h)),
            side_vertical: Some(det(mu_v)),
        }).unwrap();
        let (s, _) = laws.sample_palm(40.0, &mut stream(seed)).unwrap();
        prop_assert!(s.contains_point(Point::ORIGIN));
        let plain = GridLaws::new(exp(rate_h), det(mu_v)).unwrap();
        let (g, _) = sample_manhattan_palm(&plain, 5.0, &mut stream(seed)).unwrap();
        prop_assert!(g.has_street_through_origin());
    }
}
