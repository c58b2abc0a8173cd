//! Fixed-seed statistical checks of every stage of the pipeline.
//!
//! Each suite returns a list of [`Check`]s; a report is printed as one JSON
//! object per line.

use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::cell::{clip_half_plane, voronoi_cell_at_origin, ConvexCell};
use crate::cox::sample_cox;
use crate::distributions::{InterArrival, InterArrivalSpec};
use crate::error::{Error, Result};
use crate::estimator::{default_r_grid, Experiment, ExperimentConfig, WindowSize};
use crate::geometry::{Point, Rect};
use crate::graph::{build_graph, build_graph_from_segments, cell_profiles, node_distances, StreetGraph};
use crate::renewal::{sample_palm_renewal, sample_stationary_renewal, Flavor, RenewalRealization};
use crate::rng::{substream, RandomStream};
use crate::stats::{ks_test, mean_stderr, quantize, KsOutcome};
use crate::streets::{
    sample_manhattan, sample_manhattan_palm, sample_nested, sample_nested_palm, total_length, GridLaws,
    ManhattanGrid, NestedLaws, Segment, StreetLaws, StreetModel, StreetSystem,
};

/// Significance level of every KS check.
pub const KS_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Renewal,
    Palm,
    Cox,
    Cell,
    Graph,
    Estimator,
    All,
}

impl Suite {
    pub const MODULES: [Suite; 6] = [
        Suite::Renewal,
        Suite::Palm,
        Suite::Cox,
        Suite::Cell,
        Suite::Graph,
        Suite::Estimator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Renewal => "renewal",
            Suite::Palm => "palm",
            Suite::Cox => "cox",
            Suite::Cell => "cell",
            Suite::Graph => "graph",
            Suite::Estimator => "estimator",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::MODULES
            .iter()
            .chain(std::iter::once(&Suite::All))
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// One pass/fail line: `|value - target| <= tolerance` unless stated otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn within(suite: &'static str, name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: (value - target).abs() <= tolerance,
            value,
            target,
            tolerance,
        }
    }

    /// KS statistic against its critical value.
    pub fn ks(suite: &'static str, name: impl Into<String>, outcome: KsOutcome) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: outcome.passed(),
            value: outcome.statistic,
            target: 0.0,
            tolerance: outcome.critical,
        }
    }

    /// A predicate; `value` is the number of violations.
    pub fn holds(suite: &'static str, name: impl Into<String>, violations: usize) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: violations == 0,
            value: violations as f64,
            target: 0.0,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// One JSON object per check, then a summary object.
    pub fn write_json_lines<W: Write>(&self, out: &mut W) -> Result<()> {
        for c in &self.checks {
            writeln!(out, "{}", serde_json::to_string(c)?)?;
        }
        let summary = serde_json::json!({
            "summary": {
                "checks": self.checks.len(),
                "failed": self.failures().count(),
                "passed": self.all_passed(),
            }
        });
        writeln!(out, "{summary}")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Sample size per side of every KS comparison.
    pub ks_samples: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            seed: 1,
            ks_samples: 10_000,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &ValidationOptions) -> Result<Report> {
    let mut checks = Vec::new();
    let suites: Vec<Suite> = match suite {
        Suite::All => Suite::MODULES.to_vec(),
        s => vec![s],
    };
    for s in suites {
        checks.extend(match s {
            Suite::Renewal => renewal_checks(opts)?,
            Suite::Palm => palm_checks(opts)?,
            Suite::Cox => cox_checks(opts)?,
            Suite::Cell => cell_checks(opts)?,
            Suite::Graph => graph_checks(opts)?,
            Suite::Estimator => estimator_checks(opts)?,
            Suite::All => unreachable!(),
        });
    }
    Ok(Report { checks })
}

fn law(spec: InterArrivalSpec) -> Result<InterArrival> {
    InterArrival::new(spec)
}

fn exponential(rate: f64) -> InterArrivalSpec {
    InterArrivalSpec::Exponential { rate }
}

fn deterministic(mu: f64) -> InterArrivalSpec {
    InterArrivalSpec::Deterministic { mu }
}

fn truncated_gaussian(mu: f64, sigma: f64) -> InterArrivalSpec {
    InterArrivalSpec::TruncatedGaussian { mu, sigma }
}

fn quantized_ks(a: &[f64], b: &[f64]) -> KsOutcome {
    let qa: Vec<f64> = a.iter().map(|&x| quantize(x)).collect();
    let qb: Vec<f64> = b.iter().map(|&x| quantize(x)).collect();
    ks_test(&qa, &qb, KS_ALPHA)
}

fn spec_label(spec: &InterArrivalSpec) -> String {
    match *spec {
        InterArrivalSpec::Deterministic { mu } => format!("deterministic({mu})"),
        InterArrivalSpec::Exponential { rate } => format!("exponential({rate})"),
        InterArrivalSpec::TruncatedGaussian { mu, sigma } => format!("truncated_gaussian({mu},{sigma})"),
    }
}

// ---------------------------------------------------------------- renewal

/// Mean number of stationary arrivals per unit length over `reps` windows.
pub fn renewal_intensity(dist: &InterArrival, w: f64, reps: usize, rng: &mut RandomStream) -> Result<f64> {
    let mut count = 0usize;
    for _ in 0..reps {
        count += sample_stationary_renewal(dist, w, rng)?.len();
    }
    Ok(count as f64 / (reps as f64 * 2.0 * w))
}

/// Length of the stationary gap covering the origin.
pub fn covering_gap(r: &RenewalRealization) -> Option<f64> {
    Some(r.next_after(0.0)? - r.prev_before(0.0)?)
}

/// Distance from `t` to the next arrival.
pub fn forward_recurrence(r: &RenewalRealization, t: f64) -> Option<f64> {
    r.next_after(t).map(|a| a - t)
}

pub fn renewal_checks(opts: &ValidationOptions) -> Result<Vec<Check>> {
    const S: &str = "renewal";
    let mut checks = Vec::new();
    let k = opts.ks_samples;

    for (i, spec) in [exponential(1.0), truncated_gaussian(1.0, 0.25), deterministic(1.0)]
        .into_iter()
        .enumerate()
    {
        let dist = law(spec)?;
        let mut rng = substream(opts.seed, &[1, i as u64]);
        let est = renewal_intensity(&dist, 100.0, 1_000, &mut rng)?;
        let target = dist.intensity();
        checks.push(Check::within(
            S,
            format!("stationary_intensity/{}", spec_label(&spec)),
            est,
            target,
            0.01 * target,
        ));
    }

    for (i, spec) in [exponential(1.0), truncated_gaussian(1.0, 0.5)].into_iter().enumerate() {
        let dist = law(spec)?;
        let mut rng = substream(opts.seed, &[2, i as u64]);
        let w = 20.0 * dist.mean();
        let mut gaps = Vec::with_capacity(k);
        while gaps.len() < k {
            let r = sample_palm_renewal(&dist, w, &mut rng)?;
            if let Some(g) = r.next_after(0.0) {
                gaps.push(g);
            }
        }
        let iid: Vec<f64> = (0..k).map(|_| dist.sample(&mut rng)).collect();
        checks.push(Check::ks(
            S,
            format!("palm_gap_law/{}", spec_label(&spec)),
            quantized_ks(&gaps, &iid),
        ));
    }

    for (i, spec) in [exponential(1.0), truncated_gaussian(1.0, 0.5)].into_iter().enumerate() {
        let dist = law(spec)?;
        let mut rng = substream(opts.seed, &[3, i as u64]);
        let w = 15.0 * dist.mean();
        let mut sum = 0.0;
        let mut n = 0usize;
        while n < 100_000 {
            let r = sample_stationary_renewal(&dist, w, &mut rng)?;
            if let Some(g) = covering_gap(&r) {
                sum += g;
                n += 1;
            }
        }
        let target = dist.length_biased_mean();
        checks.push(Check::within(
            S,
            format!("covering_gap_mean/{}", spec_label(&spec)),
            sum / n as f64,
            target,
            0.01 * target,
        ));
    }

    {
        let dist = law(truncated_gaussian(1.0, 0.25))?;
        let mut rng = substream(opts.seed, &[4]);
        let w = 10.0;
        let probe = 0.37 * w;
        let mut at_zero = Vec::with_capacity(k);
        let mut at_probe = Vec::with_capacity(k);
        while at_zero.len() < k {
            let r = sample_stationary_renewal(&dist, w, &mut rng)?;
            if let Some(d) = forward_recurrence(&r, 0.0) {
                at_zero.push(d);
            }
        }
        while at_probe.len() < k {
            let r = sample_stationary_renewal(&dist, w, &mut rng)?;
            if let Some(d) = forward_recurrence(&r, probe) {
                at_probe.push(d);
            }
        }
        checks.push(Check::ks(
            S,
            "stationarity/forward_recurrence",
            quantized_ks(&at_zero, &at_probe),
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------- palm

/// Distances from `c` to the nearest coordinate strictly above and strictly
/// below it, capped at `cap`.
fn neighbour_gaps(coords: &[f64], c: f64, cap: f64) -> (f64, f64) {
    let i = coords.partition_point(|&x| x <= c);
    let above = coords.get(i).map_or(cap, |&x| (x - c).min(cap));
    let j = coords.partition_point(|&x| x < c);
    let below = j.checked_sub(1).map_or(cap, |j| (c - coords[j]).min(cap));
    (above, below)
}

/// Nearest vertical line right and left of `p`, nearest horizontal line above
/// and below, each excluding a line through `p`.
pub fn grid_functionals(grid: &ManhattanGrid, p: Point, cap: f64) -> [f64; 4] {
    let (right, left) = neighbour_gaps(&grid.vertical_xs.points, p.x, cap);
    let (up, down) = neighbour_gaps(&grid.horizontal_ys.points, p.y, cap);
    [right, left, up, down]
}

/// Distance to the main grid, and to the nearest street segment not through `p`.
pub fn nested_functionals(main: &ManhattanGrid, segments: &[Segment], p: Point, cap: f64) -> [f64; 2] {
    let to_main = main
        .vertical_xs
        .points
        .iter()
        .map(|&x| (x - p.x).abs())
        .chain(main.horizontal_ys.points.iter().map(|&y| (y - p.y).abs()))
        .fold(cap, f64::min);
    let to_other = segments
        .iter()
        .filter(|s| !s.contains(p))
        .map(|s| s.distance_to(p))
        .fold(cap, f64::min);
    [to_main, to_other]
}

fn poisson(mean: f64, rng: &mut RandomStream) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

/// Functionals at length-uniform street points of stationary grids, recentred.
///
/// Each realization contributes `Poisson(|S ∩ B| / E|S ∩ B|)` points of the
/// central box `B`, which makes every contribution exactly Palm distributed.
pub fn recentred_grid_samples(laws: &GridLaws, k: usize, cap: f64, rng: &mut RandomStream) -> Result<Vec<[f64; 4]>> {
    let b = 2.0 * cap;
    let w = b + cap;
    let expected = 4.0 * b * b * laws.intensities().gamma;
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let grid = sample_manhattan(laws, w, rng)?;
        let inside = |c: &[f64]| -> Vec<f64> { c.iter().copied().filter(|x| x.abs() <= b).collect() };
        let xs = inside(&grid.vertical_xs.points);
        let ys = inside(&grid.horizontal_ys.points);
        let lines = xs.len() + ys.len();
        let m = poisson(2.0 * b * lines as f64 / expected, rng);
        for _ in 0..m {
            let idx = rng.random_range(0..lines);
            let s = rng.random_range(-b..b);
            let p = if idx < xs.len() {
                Point::new(xs[idx], s)
            } else {
                Point::new(s, ys[idx - xs.len()])
            };
            out.push(grid_functionals(&grid, p, cap));
        }
    }
    out.truncate(k);
    Ok(out)
}

/// Functionals at the origin of grids drawn by `palm`.
pub fn palm_grid_samples<F>(k: usize, cap: f64, rng: &mut RandomStream, mut palm: F) -> Result<Vec<[f64; 4]>>
where
    F: FnMut(&mut RandomStream) -> Result<ManhattanGrid>,
{
    (0..k)
        .map(|_| Ok(grid_functionals(&palm(rng)?, Point::ORIGIN, cap)))
        .collect()
}

const GRID_FUNCTIONALS: [&str; 4] = ["right", "left", "up", "down"];

/// KS comparison, per functional, of recentred stationary grids against the
/// output of `palm`.
pub fn grid_recentring_checks<F>(label: &str, laws: &GridLaws, opts: &ValidationOptions, stream_tag: u64, palm: F) -> Result<Vec<Check>>
where
    F: FnMut(&mut RandomStream) -> Result<ManhattanGrid>,
{
    let cap = 10.0 * laws.horizontal.mean().max(laws.vertical.mean());
    let mut rng = substream(opts.seed, &[20, stream_tag]);
    let stationary = recentred_grid_samples(laws, opts.ks_samples, cap, &mut rng)?;
    let palm = palm_grid_samples(opts.ks_samples, cap, &mut rng, palm)?;
    Ok((0..4)
        .map(|f| {
            let a: Vec<f64> = stationary.iter().map(|s| s[f]).collect();
            let b: Vec<f64> = palm.iter().map(|s| s[f]).collect();
            Check::ks("palm", format!("recentring/{label}/{}", GRID_FUNCTIONALS[f]), quantized_ks(&a, &b))
        })
        .collect())
}

pub fn grid_recentring(label: &str, laws: &GridLaws, opts: &ValidationOptions, stream_tag: u64) -> Result<Vec<Check>> {
    let cap = 10.0 * laws.horizontal.mean().max(laws.vertical.mean());
    grid_recentring_checks(label, laws, opts, stream_tag, |rng| {
        sample_manhattan_palm(laws, cap, rng).map(|(g, _)| g)
    })
}

pub fn recentred_nested_samples(laws: &NestedLaws, k: usize, cap: f64, rng: &mut RandomStream) -> Result<Vec<[f64; 2]>> {
    let b = 2.0 * cap;
    let w = b + cap;
    let expected = 4.0 * b * b * laws.intensities().gamma_bar;
    let central = Rect::square(b);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let streets = StreetSystem::Nested(sample_nested(laws, w, rng)?);
        let local = streets.segments(&central);
        let m = poisson(total_length(&local) / expected, rng);
        if m == 0 {
            continue;
        }
        let all = streets.segments(&streets.window());
        let mut cumulative = Vec::with_capacity(local.len());
        let mut acc = 0.0;
        for s in &local {
            acc += s.length();
            cumulative.push(acc);
        }
        for _ in 0..m {
            let u = rng.random::<f64>() * acc;
            let i = cumulative.partition_point(|&c| c <= u).min(local.len() - 1);
            let p = local[i].point_at(rng.random::<f64>() * local[i].length());
            out.push(nested_functionals(streets.main(), &all, p, cap));
        }
    }
    out.truncate(k);
    Ok(out)
}

pub fn palm_nested_samples(laws: &NestedLaws, k: usize, cap: f64, rng: &mut RandomStream) -> Result<Vec<[f64; 2]>> {
    (0..k)
        .map(|_| {
            let (grid, _) = sample_nested_palm(laws, cap, rng)?;
            let streets = StreetSystem::Nested(grid);
            let all = streets.segments(&streets.window());
            Ok(nested_functionals(streets.main(), &all, Point::ORIGIN, cap))
        })
        .collect()
}

pub fn nested_recentring(label: &str, laws: &NestedLaws, opts: &ValidationOptions, stream_tag: u64) -> Result<Vec<Check>> {
    let cap = 1.5 * laws.main.horizontal.mean().max(laws.main.vertical.mean());
    let mut rng = substream(opts.seed, &[21, stream_tag]);
    let stationary = recentred_nested_samples(laws, opts.ks_samples, cap, &mut rng)?;
    let palm = palm_nested_samples(laws, opts.ks_samples, cap, &mut rng)?;
    Ok(["to_main", "to_other_street"]
        .iter()
        .enumerate()
        .map(|(f, name)| {
            let a: Vec<f64> = stationary.iter().map(|s| s[f]).collect();
            let b: Vec<f64> = palm.iter().map(|s| s[f]).collect();
            Check::ks("palm", format!("recentring/{label}/{name}"), quantized_ks(&a, &b))
        })
        .collect())
}

/// Street models used by the recentring checks.
pub fn palm_test_models() -> Result<(GridLaws, GridLaws, NestedLaws)> {
    let plain = GridLaws::new(truncated_gaussian(1.0, 0.25), truncated_gaussian(1.0, 0.25))?;
    let asymmetric = GridLaws::new(exponential(3.0), deterministic(1.0))?;
    let nested = NestedLaws {
        main: GridLaws::new(truncated_gaussian(10.0, 3.0), truncated_gaussian(10.0, 3.0))?,
        side: GridLaws::new(exponential(1.0), exponential(1.0))?,
    };
    Ok((plain, asymmetric, nested))
}

/// Fraction of `runs` Palm draws for which `hit` holds.
fn branch_frequency(runs: usize, rng: &mut RandomStream, mut hit: impl FnMut(&mut RandomStream) -> Result<bool>) -> Result<f64> {
    let mut n = 0usize;
    for _ in 0..runs {
        if hit(rng)? {
            n += 1;
        }
    }
    Ok(n as f64 / runs as f64)
}

pub fn palm_checks(opts: &ValidationOptions) -> Result<Vec<Check>> {
    const S: &str = "palm";
    let (plain, asymmetric, nested) = palm_test_models()?;
    let mut checks = Vec::new();
    checks.extend(grid_recentring("plain", &plain, opts, 0)?);
    checks.extend(grid_recentring("asymmetric", &asymmetric, opts, 1)?);
    checks.extend(nested_recentring("nested", &nested, opts, 2)?);

    let runs = 100_000;
    let equal = GridLaws::new(exponential(1.0), exponential(1.0))?;
    let mut rng = substream(opts.seed, &[22, 0]);
    let f = branch_frequency(runs, &mut rng, |rng| {
        Ok(sample_manhattan_palm(&equal, 1.0, rng)?.0.horizontal_ys.contains_zero())
    })?;
    checks.push(Check::within(S, "branch_frequency/equal", f, 0.5, 0.01));

    let ten = GridLaws::new(deterministic(0.1), deterministic(1.0))?;
    let mut rng = substream(opts.seed, &[22, 1]);
    let f = branch_frequency(runs, &mut rng, |rng| {
        Ok(sample_manhattan_palm(&ten, 1.0, rng)?.0.horizontal_ys.contains_zero())
    })?;
    checks.push(Check::within(S, "branch_frequency/ratio_10", f, 10.0 / 11.0, 0.01));

    let lattice = NestedLaws {
        main: GridLaws::new(deterministic(10.0), deterministic(10.0))?,
        side: GridLaws::new(deterministic(1.0), deterministic(1.0))?,
    };
    let mut rng = substream(opts.seed, &[22, 2]);
    let f = branch_frequency(runs, &mut rng, |rng| {
        let (g, _) = sample_nested_palm(&lattice, 1.0, rng)?;
        Ok(g.main.has_street_through_origin())
    })?;
    checks.push(Check::within(S, "branch_frequency/nested_main", f, 0.2 / 2.2, 0.01));

    let mut off = 0usize;
    let mut rng = substream(opts.seed, &[22, 3]);
    for laws in [&plain, &asymmetric] {
        for _ in 0..1_000 {
            let (g, _) = sample_manhattan_palm(laws, 5.0, &mut rng)?;
            off += usize::from(!StreetSystem::Manhattan(g).contains_point(Point::ORIGIN));
        }
    }
    for _ in 0..200 {
        let (g, _) = sample_nested_palm(&nested, 25.0, &mut rng)?;
        off += usize::from(!StreetSystem::Nested(g).contains_point(Point::ORIGIN));
    }
    checks.push(Check::holds(S, "origin_on_street", off));
    Ok(checks)
}

// ---------------------------------------------------------------- cox

pub fn cox_checks(opts: &ValidationOptions) -> Result<Vec<Check>> {
    const S: &str = "cox";
    let mut checks = Vec::new();

    let seg = [Segment::horizontal(0.0, 0.0, 10.0, crate::streets::Provenance::Main)];
    let mut rng = substream(opts.seed, &[30]);
    let counts: Vec<f64> = (0..100_000)
        .map(|_| sample_cox(&seg, 0.5, &mut rng).map(|p| p.len() as f64))
        .collect::<Result<_>>()?;
    let (mean, _) = mean_stderr(&counts);
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (counts.len() as f64 - 1.0);
    checks.push(Check::within(S, "poisson_mean", mean, 5.0, 0.05));
    checks.push(Check::within(S, "poisson_variance", var, 5.0, 0.15));

    let lattice = StreetLaws::new(&StreetModel::Manhattan {
        horizontal: deterministic(1.0),
        vertical: deterministic(1.0),
    })?;
    let mut rng = substream(opts.seed, &[31]);
    let (mut got, mut want) = (0.0, 0.0);
    for _ in 0..10_000 {
        let streets = lattice.sample_stationary(20.0, &mut rng)?;
        let segs = streets.segments(&streets.window());
        want += 0.02 * total_length(&segs);
        got += sample_cox(&segs, 0.02, &mut rng)?.len() as f64;
    }
    checks.push(Check::within(S, "campbell/lattice", got / want, 1.0, 0.01));

    // Coincident side and main streets must carry points only once.
    let nested = StreetLaws::new(&StreetModel::Nested {
        horizontal: deterministic(5.0),
        vertical: deterministic(5.0),
        side_horizontal: Some(deterministic(1.0)),
        side_vertical: Some(deterministic(1.0)),
    })?;
    let mut rng = substream(opts.seed, &[32]);
    let (mut got, mut want) = (0.0, 0.0);
    for _ in 0..5_000 {
        let streets = nested.sample_stationary(10.0, &mut rng)?;
        let segs = streets.segments(&streets.window());
        want += 0.1 * total_length(&segs);
        got += sample_cox(&segs, 0.1, &mut rng)?.len() as f64;
    }
    checks.push(Check::within(S, "campbell/merged_overlaps", got / want, 1.0, 0.01));

    let family = [
        Segment::horizontal(0.0, 0.0, 4.0, crate::streets::Provenance::Main),
        Segment::vertical(10.0, 0.0, 6.0, crate::streets::Provenance::Main),
    ];
    let mut rng = substream(opts.seed, &[33]);
    let n = 10_000;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let p = sample_cox(&family, 0.5, &mut rng)?;
        let a = p.segment_of.iter().filter(|&&s| s == 0).count() as f64;
        pairs.push((a, p.len() as f64 - a));
    }
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / (n as f64 - 1.0);
    // Under independence the covariance has standard deviation sqrt(2 * 3 / n).
    checks.push(Check::within(S, "disjoint_independence", cov, 0.0, 3.0 * (6.0 / n as f64).sqrt()));
    Ok(checks)
}

// ---------------------------------------------------------------- cell

/// A Cox pattern around a Palm origin together with its certified cell.
#[derive(Debug, Clone)]
pub struct CellInstance {
    pub points: Vec<Point>,
    pub window: f64,
    pub cell: ConvexCell,
}

/// `count` certified cells on Palm exponential grids.
pub fn random_cell_instances(count: usize, seed: u64) -> Result<Vec<CellInstance>> {
    let laws = StreetLaws::new(&StreetModel::Manhattan {
        horizontal: exponential(1.0),
        vertical: exponential(1.0),
    })?;
    let lambda = 0.2;
    let w = 20.0;
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        let mut rng = substream(seed, &[40, attempt]);
        attempt += 1;
        let (streets, _) = laws.sample_palm(w, &mut rng)?;
        let pattern = sample_cox(&streets.segments(&streets.window()), lambda, &mut rng)?;
        let cell = voronoi_cell_at_origin(&pattern.points, w)?;
        if cell.bounded_certificate {
            out.push(CellInstance {
                points: pattern.points,
                window: w,
                cell,
            });
        }
    }
    Ok(out)
}

/// Points that can be nearer than the origin to some point of the box `r`.
fn relevant_points(points: &[Point], radius: f64) -> Vec<Point> {
    points.iter().copied().filter(|p| p.norm() <= 2.0 * radius).collect()
}

fn origin_is_nearest(p: Point, others: &[Point], tol: f64) -> bool {
    let d0 = p.norm_sq();
    others.iter().all(|&y| d0 <= (p - y).norm_sq() + tol)
}

/// Probe points inside the cell whose nearest pattern point is not the origin.
pub fn nearest_neighbour_violations(inst: &CellInstance, probes: usize, rng: &mut RandomStream) -> usize {
    let bbox = inst.cell.bounding_box();
    let near = relevant_points(&inst.points, inst.cell.circumradius);
    let mut bad = 0;
    let mut taken = 0;
    while taken < probes {
        let p = Point::new(rng.random_range(bbox.x0..bbox.x1), rng.random_range(bbox.y0..bbox.y1));
        if !inst.cell.contains(p) {
            continue;
        }
        taken += 1;
        if !origin_is_nearest(p, &near, 1e-9) {
            bad += 1;
        }
    }
    bad
}

/// Cell area by counting pixel centres of a `res x res` raster of the
/// bounding box that are at least as close to the origin as to any point.
pub fn raster_area(inst: &CellInstance, res: usize) -> f64 {
    let bbox = inst.cell.bounding_box();
    let near = relevant_points(&inst.points, inst.cell.circumradius);
    let dx = bbox.width() / res as f64;
    let dy = bbox.height() / res as f64;
    let inside: usize = (0..res)
        .into_par_iter()
        .map(|i| {
            let y = bbox.y0 + (i as f64 + 0.5) * dy;
            (0..res)
                .filter(|&j| {
                    let p = Point::new(bbox.x0 + (j as f64 + 0.5) * dx, y);
                    origin_is_nearest(p, &near, 0.0)
                })
                .count()
        })
        .sum();
    inside as f64 * dx * dy
}

/// The window clipped by every bisector in the given order, without early stop.
pub fn clip_in_order(points: &[Point], w: f64) -> Vec<Point> {
    let mut poly = vec![
        Point::new(-w, -w),
        Point::new(w, -w),
        Point::new(w, w),
        Point::new(-w, w),
    ];
    for &p in points {
        poly = clip_half_plane(&poly, p, 0.5 * p.norm_sq());
    }
    poly
}

/// Largest distance from a vertex of one polygon to the nearest vertex of the other.
pub fn vertex_set_distance(a: &[Point], b: &[Point]) -> f64 {
    let one_way = |a: &[Point], b: &[Point]| {
        a.iter()
            .map(|p| b.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

pub fn cell_checks(opts: &ValidationOptions) -> Result<Vec<Check>> {
    const S: &str = "cell";
    let instances = random_cell_instances(100, opts.seed)?;
    let mut rng = substream(opts.seed, &[41]);

    let nn_bad: usize = instances
        .iter()
        .map(|inst| nearest_neighbour_violations(inst, 1_000, &mut rng))
        .sum();

    let mut worst_area = 0.0_f64;
    for inst in &instances {
        let rel = (raster_area(inst, 1_000) / inst.cell.area() - 1.0).abs();
        worst_area = worst_area.max(rel);
    }

    let mut vertex_bad = 0;
    for inst in &instances {
        for v in &inst.cell.vertices {
            let d0 = v.norm();
            let nearest = inst.points.iter().map(|y| v.dist(*y)).fold(f64::INFINITY, f64::min);
            if d0 > nearest + 1e-9 {
                vertex_bad += 1;
            }
        }
    }

    let mut worst_order = 0.0_f64;
    for inst in instances.iter().take(20) {
        let near = relevant_points(&inst.points, inst.cell.circumradius);
        let mut sorted = near.clone();
        sorted.sort_by(|a, b| a.norm_sq().total_cmp(&b.norm_sq()));
        let reference = clip_in_order(&sorted, inst.window);
        for _ in 0..5 {
            let mut shuffled = near.clone();
            shuffled.shuffle(&mut rng);
            let poly = clip_in_order(&shuffled, inst.window);
            worst_order = worst_order.max(vertex_set_distance(&reference, &poly));
        }
        worst_order = worst_order.max(vertex_set_distance(&reference, &inst.cell.vertices));
    }

    Ok(vec![
        Check::holds(S, "probe_nearest_neighbour", nn_bad),
        Check::within(S, "raster_area_relative_error", worst_area, 0.0, 0.005),
        Check::holds(S, "vertex_equidistance", vertex_bad),
        Check::within(S, "clipping_order", worst_order, 0.0, 1e-12),
    ])
}

// ---------------------------------------------------------------- graph

fn line(points: Vec<f64>, w: f64) -> RenewalRealization {
    RenewalRealization {
        points,
        window_half_width: w,
        flavor: Flavor::Stationary,
    }
}

/// Unit lattice through `y = 0` with vertical lines at `phase + k`.
pub fn lattice_with_phase(phase: f64, w: f64) -> StreetSystem {
    let n = w.floor() as i64;
    let xs: Vec<f64> = (-n - 1..=n + 1).map(|k| k as f64 + phase).filter(|x| x.abs() <= w).collect();
    let ys: Vec<f64> = (-n..=n).map(|k| k as f64).collect();
    StreetSystem::Manhattan(ManhattanGrid {
        vertical_xs: line(xs, w),
        horizontal_ys: line(ys, w),
        window_half_width: w,
    })
}

/// Level count at `r` inside the unclipped window cell.
pub fn lattice_level_count(phase: f64, r: f64) -> Result<usize> {
    let streets = lattice_with_phase(phase, 10.0);
    let graph = build_graph(&streets)?;
    let dist = node_distances(&graph);
    let cell = voronoi_cell_at_origin(&[], 10.0)?;
    Ok(cell_profiles(&graph, &dist, &cell).iter().map(|p| p.count_at(r)).sum())
}

/// Shortest-path length at a street point `p` of the graph.
pub fn distance_at(graph: &StreetGraph, dist: &[f64], p: Point) -> Option<f64> {
    graph
        .edges
        .iter()
        .filter_map(|e| {
            let (a, b) = (graph.nodes[e.u], graph.nodes[e.v]);
            let on = if a.y == b.y {
                p.y == a.y && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x)
            } else {
                p.x == a.x && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
            };
            on.then(|| (dist[e.u] + p.dist(a)).min(dist[e.v] + p.dist(b)))
        })
        .reduce(f64::min)
}

/// Distances on the whole window against distances on the streets clipped to
/// the cell's bounding box, for a grid with rare vertical streets.
pub fn restricted_distance_comparison(seed: u64) -> Result<(usize, usize)> {
    let laws = StreetLaws::new(&StreetModel::Manhattan {
        horizontal: deterministic(1.0),
        vertical: deterministic(20.0),
    })?;
    let mut rng = substream(seed, &[50]);
    let w = 60.0;
    let (streets, _) = loop {
        let (s, b) = laws.sample_palm(w, &mut rng)?;
        if b == crate::streets::PalmBranch::OnHorizontal {
            break (s, b);
        }
    };
    let pattern = sample_cox(&streets.segments(&streets.window()), 0.02, &mut rng)?;
    let cell = voronoi_cell_at_origin(&pattern.points, w)?;
    let full = build_graph(&streets)?;
    let full_dist = node_distances(&full);
    let restricted = build_graph_from_segments(&streets.segments(&cell.bounding_box()), Point::ORIGIN)?;
    let restricted_dist = node_distances(&restricted);

    let (mut shorter, mut longer) = (0, 0);
    for (i, p) in restricted.nodes.iter().enumerate() {
        let Some(d) = distance_at(&full, &full_dist, *p) else {
            continue;
        };
        if restricted_dist[i] < d - 1e-9 {
            shorter += 1;
        }
        if restricted_dist[i] > d + 1e-9 {
            longer += 1;
        }
    }
    Ok((shorter, longer))
}

pub fn graph_checks(opts: &ValidationOptions) -> Result<Vec<Check>> {
    const S: &str = "graph";
    let mut checks = Vec::new();

    let nested = StreetLaws::new(&StreetModel::Nested {
        horizontal: truncated_gaussian(10.0, 3.0),
        vertical: exponential(0.1),
        side_horizontal: Some(exponential(1.0)),
        side_vertical: Some(truncated_gaussian(1.0, 0.5)),
    })?;
    let mut rng = substream(opts.seed, &[51]);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let (streets, _) = nested.sample_palm(30.0, &mut rng)?;
        let g = build_graph(&streets)?;
        let seg = total_length(&streets.segments(&streets.window()));
        worst = worst.max((g.total_length() / seg - 1.0).abs());
    }
    checks.push(Check::within(S, "edge_length_bookkeeping", worst, 0.0, 1e-9));

    let plain = StreetLaws::new(&StreetModel::Manhattan {
        horizontal: exponential(1.0),
        vertical: truncated_gaussian(1.0, 0.5),
    })?;
    let mut rng = substream(opts.seed, &[52]);
    let mut bad = 0;
    for _ in 0..10 {
        let (streets, _) = plain.sample_palm(20.0, &mut rng)?;
        let g = build_graph(&streets)?;
        let d = node_distances(&g);
        for _ in 0..100 {
            let i = rng.random_range(0..g.nodes.len());
            let p = g.nodes[i];
            let l1 = p.x.abs() + p.y.abs();
            if d[i] < l1 - 1e-9 || d[i] < p.norm() - 1e-9 {
                bad += 1;
            }
        }
    }
    checks.push(Check::holds(S, "distance_metric_bounds", bad));

    checks.push(Check::within(S, "lattice_count/mid_segment", lattice_level_count(0.5, 0.2)? as f64, 2.0, 0.0));
    checks.push(Check::within(S, "lattice_count/near_crossing", lattice_level_count(0.1, 0.2)? as f64, 4.0, 0.0));
    let mut bad = 0;
    for k in 1..50 {
        let r = 0.5 * k as f64 / 50.0;
        if lattice_level_count(0.0, r)? != 4 {
            bad += 1;
        }
    }
    checks.push(Check::holds(S, "lattice_count/at_crossing", bad));

    // Co-area: integral over r of the level count equals the street length in the cell.
    let laws = StreetLaws::new(&StreetModel::Manhattan {
        horizontal: exponential(1.0),
        vertical: exponential(1.0),
    })?;
    let mut rng = substream(opts.seed, &[53]);
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let (streets, _) = laws.sample_palm(20.0, &mut rng)?;
        let pattern = sample_cox(&streets.segments(&streets.window()), 0.2, &mut rng)?;
        let cell = voronoi_cell_at_origin(&pattern.points, 20.0)?;
        let g = build_graph(&streets)?;
        let d = node_distances(&g);
        let profiles = cell_profiles(&g, &d, &cell);
        let length: f64 = profiles.iter().map(|p| p.clipped_length()).sum();
        let top = profiles
            .iter()
            .flat_map(|p| p.breakpoints())
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let steps = 100_000;
        let h = top / steps as f64;
        let integral: f64 = (0..steps)
            .map(|k| {
                let r = (k as f64 + 0.5) * h;
                profiles.iter().map(|p| p.count_at(r)).sum::<usize>() as f64 * h
            })
            .sum();
        worst = worst.max((integral / length - 1.0).abs());
    }
    checks.push(Check::within(S, "co_area", worst, 0.0, 1e-3));

    let (shorter, longer) = restricted_distance_comparison(opts.seed)?;
    checks.push(Check::holds(S, "restricted_never_shorter", shorter));
    checks.push(Check::within(S, "restricted_strictly_longer_somewhere", f64::from(longer > 0), 1.0, 0.0));
    Ok(checks)
}

// ---------------------------------------------------------------- estimator

pub fn lattice_experiment(lambda: f64, n: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        streets: StreetModel::Manhattan {
            horizontal: deterministic(1.0),
            vertical: deterministic(1.0),
        },
        lambda,
        window: WindowSize::AUTO,
        r_grid: default_r_grid(4.0, 400),
        n,
        master_seed: seed,
    }
}

pub fn estimate_with_threads(config: &ExperimentConfig, threads: usize) -> Result<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let experiment = Experiment::new(config)?;
    Ok(pool.install(|| experiment.estimate())?.to_csv_string())
}

pub fn estimator_checks(opts: &ValidationOptions) -> Result<Vec<Check>> {
    const S: &str = "estimator";
    let mut checks = Vec::new();

    let small = lattice_experiment(0.02, 64, opts.seed);
    let one = estimate_with_threads(&small, 1)?;
    let four = estimate_with_threads(&small, 4)?;
    checks.push(Check::holds(S, "thread_independence", usize::from(one != four)));

    let config = lattice_experiment(0.02, 1_000, opts.seed);
    let set = Experiment::new(&config)?.simulate()?;
    let est = set.density(&config.r_grid);
    let negative = est.f_hat.iter().filter(|f| **f < 0.0).count();
    checks.push(Check::holds(S, "nonnegative", negative));
    checks.push(Check::within(S, "rejection_rate", set.rejection_rate, 0.0, 0.001));
    let mass = set.total_mass();
    checks.push(Check::within(S, "total_mass", mass.mean, 1.0, 3.0 * mass.stderr));

    let near_zero: Vec<f64> = default_r_grid(0.05, 5);
    let base = set.mean_density(&near_zero);
    let doubled_cfg = lattice_experiment(0.04, 1_000, opts.seed.wrapping_add(1));
    let doubled = Experiment::new(&doubled_cfg)?.simulate()?.mean_density(&near_zero);
    let ratio = doubled.mean / base.mean;
    let ratio_se = ratio * ((doubled.stderr / doubled.mean).powi(2) + (base.stderr / base.mean).powi(2)).sqrt();
    checks.push(Check::within(S, "lambda_linearity", ratio, 2.0, 3.0 * ratio_se));
    Ok(checks)
}
