//! Monte Carlo estimation of the typical shortest-path-length density.
//!
//! One replication samples a Palm street system, a Cox pattern on it, the
//! Voronoi cell of the origin and the street graph; it then records, for every
//! edge piece inside the cell, the shortest-path-length profile along that
//! piece. The density estimate at `r` is `lambda / n` times the total number of
//! cell points at path length exactly `r`.
//!
//! Replication `i` draws from its own stream derived from `(master_seed, i,
//! attempt)`. Counts are accumulated as integers, so the output does not depend
//! on how replications are scheduled across threads.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{voronoi_cell_at_origin, ConvexCell};
use crate::cox::{sample_cox, PointPattern};
use crate::error::{Error, Result};
use crate::graph::{build_graph, cell_profiles, level_counts, node_distances, EdgeDistanceProfile, StreetGraph};
use crate::rng::{derive_seed, substream, RandomStream};
use crate::stats::mean_stderr;
use crate::streets::{PalmBranch, StreetLaws, StreetModel, StreetSystem};

/// Certificate failures beyond this fraction of replications abort the run.
pub const MAX_REJECTION_RATE: f64 = 0.05;

/// Attempts per replication, each with a doubled window.
pub const MAX_ATTEMPTS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSize {
    Fixed(f64),
    Auto(AutoKeyword),
}

impl WindowSize {
    pub const AUTO: WindowSize = WindowSize::Auto(AutoKeyword::Auto);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub streets: StreetModel,
    pub lambda: f64,
    pub window: WindowSize,
    pub r_grid: Vec<f64>,
    pub n: usize,
    pub master_seed: u64,
}

/// `points` equally spaced values on `(0, r_max]`.
pub fn default_r_grid(r_max: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| r_max * k as f64 / points as f64).collect()
}

/// Rough linear size of the typical cell, `1 / sqrt(lambda gamma)`.
pub fn cell_scale(lambda: f64, gamma: f64) -> f64 {
    1.0 / (lambda * gamma).sqrt()
}

/// Validated experiment, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub laws: StreetLaws,
    pub lambda: f64,
    pub window: f64,
    pub r_grid: Vec<f64>,
    pub n: usize,
    pub master_seed: u64,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let laws = StreetLaws::new(&config.streets)?;
        if !(config.lambda.is_finite() && config.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", config.lambda));
        }
        if config.n == 0 {
            return bad("n must be at least 1".into());
        }
        if config.r_grid.is_empty()
            || config.r_grid[0] <= 0.0
            || config.r_grid.windows(2).any(|w| w[1] <= w[0])
            || config.r_grid.iter().any(|r| !r.is_finite())
        {
            return bad("r_grid must be positive and strictly increasing".into());
        }
        let r_max = *config.r_grid.last().unwrap();
        let scale = cell_scale(config.lambda, laws.street_intensity());
        let window = match config.window {
            WindowSize::Auto(_) => r_max.max(10.0 * scale) + 2.0 * laws.max_mean_gap(),
            WindowSize::Fixed(w) => {
                if !(w.is_finite() && w > 0.0) {
                    return bad(format!("window_half_width must be positive, got {w}"));
                }
                if r_max + scale > w {
                    return bad(format!(
                        "window_half_width {w} too small: r_max {r_max} plus cell scale {scale:.3} exceeds it"
                    ));
                }
                w
            }
        };
        Ok(Experiment {
            laws,
            lambda: config.lambda,
            window,
            r_grid: config.r_grid.clone(),
            n: config.n,
            master_seed: config.master_seed,
        })
    }

    /// One typical cell with everything needed to inspect it. Certificate
    /// failures are resampled with a doubled window from a fresh substream.
    pub fn typical_cell(&self, index: u64) -> Result<TypicalCell> {
        let mut w = self.window;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = substream(self.master_seed, &[index, attempt as u64]);
            let (streets, branch) = self.laws.sample_palm(w, &mut rng)?;
            let pattern = sample_cox(&streets.segments(&streets.window()), self.lambda, &mut rng)?;
            let cell = voronoi_cell_at_origin(&pattern.points, w)?;
            if cell.bounded_certificate {
                let graph = build_graph(&streets)?;
                let distances = node_distances(&graph);
                let profiles = cell_profiles(&graph, &distances, &cell);
                return Ok(TypicalCell {
                    streets,
                    branch,
                    pattern,
                    cell,
                    graph,
                    distances,
                    profiles,
                    rejections: attempt,
                    window: w,
                });
            }
            w *= 2.0;
        }
        Err(Error::RejectionRate {
            rate: 1.0,
            limit: MAX_REJECTION_RATE,
            suggested_window: w,
        })
    }

    pub fn replicate(&self, index: u64) -> Result<Replication> {
        let t = self.typical_cell(index)?;
        Ok(Replication {
            profiles: t.profiles,
            branch: t.branch,
            rejections: t.rejections,
            circumradius: t.cell.circumradius,
        })
    }

    fn check_rejections(&self, rejected: usize) -> Result<f64> {
        let rate = rejected as f64 / self.n as f64;
        if rate > MAX_REJECTION_RATE {
            return Err(Error::RejectionRate {
                rate,
                limit: MAX_REJECTION_RATE,
                suggested_window: 2.0 * self.window,
            });
        }
        Ok(rate)
    }

    /// All replications with their profiles retained.
    pub fn simulate(&self) -> Result<ReplicationSet> {
        let replications = (0..self.n as u64)
            .into_par_iter()
            .map(|i| self.replicate(i))
            .collect::<Result<Vec<_>>>()?;
        let rejected = replications.iter().filter(|r| r.rejections > 0).count();
        let rejection_rate = self.check_rejections(rejected)?;
        Ok(ReplicationSet {
            lambda: self.lambda,
            window: self.window,
            rejection_rate,
            replications,
        })
    }

    /// Density estimate on the configured grid without retaining profiles.
    pub fn estimate(&self) -> Result<DensityEstimate> {
        let per_rep = (0..self.n as u64)
            .into_par_iter()
            .map(|i| {
                let rep = self.replicate(i)?;
                Ok((level_counts(&rep.profiles, &self.r_grid), rep.rejections > 0))
            })
            .collect::<Result<Vec<_>>>()?;
        let rejected = per_rep.iter().filter(|(_, r)| *r).count();
        let rejection_rate = self.check_rejections(rejected)?;
        Ok(DensityEstimate::from_counts(
            self.lambda,
            &self.r_grid,
            per_rep.iter().map(|(c, _)| c.as_slice()),
            self.n,
            rejection_rate,
        ))
    }
}

/// Full output of one typical-cell sample.
#[derive(Debug, Clone)]
pub struct TypicalCell {
    pub streets: StreetSystem,
    pub branch: PalmBranch,
    pub pattern: PointPattern,
    pub cell: ConvexCell,
    pub graph: StreetGraph,
    pub distances: Vec<f64>,
    pub profiles: Vec<EdgeDistanceProfile>,
    pub rejections: u32,
    /// Window half-width actually used.
    pub window: f64,
}

/// Profiles of one typical cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub profiles: Vec<EdgeDistanceProfile>,
    pub branch: PalmBranch,
    /// Number of discarded attempts before this one.
    pub rejections: u32,
    pub circumradius: f64,
}

impl Replication {
    pub fn count_at(&self, r: f64) -> u32 {
        self.profiles.iter().map(|p| p.count_at(r) as u32).sum()
    }

    /// Street length inside the cell with path length `<= a`.
    pub fn length_within(&self, a: f64) -> f64 {
        self.profiles.iter().map(|p| p.length_within(a)).sum()
    }

    pub fn street_length(&self) -> f64 {
        self.profiles.iter().map(|p| p.clipped_length()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub r_grid: Vec<f64>,
    pub f_hat: Vec<f64>,
    /// NaN when fewer than two replications are available.
    pub stderr: Vec<f64>,
    pub n_used: usize,
    pub rejection_rate: f64,
}

impl DensityEstimate {
    fn from_counts<'a>(
        lambda: f64,
        r_grid: &[f64],
        counts: impl Iterator<Item = &'a [u32]>,
        n: usize,
        rejection_rate: f64,
    ) -> Self {
        let mut sum = vec![0u64; r_grid.len()];
        let mut sum_sq = vec![0u64; r_grid.len()];
        for c in counts {
            for (k, &v) in c.iter().enumerate() {
                sum[k] += v as u64;
                sum_sq[k] += (v as u64) * (v as u64);
            }
        }
        let nf = n as f64;
        let f_hat = sum.iter().map(|&s| lambda * s as f64 / nf).collect();
        let stderr = sum
            .iter()
            .zip(&sum_sq)
            .map(|(&s, &q)| {
                if n < 2 {
                    return f64::NAN;
                }
                // Exact integer centring keeps the result order-independent.
                let centred = (q as f64) - (s as f64) * (s as f64) / nf;
                let var = (centred / (nf - 1.0)).max(0.0);
                lambda * (var / nf).sqrt()
            })
            .collect();
        DensityEstimate {
            r_grid: r_grid.to_vec(),
            f_hat,
            stderr,
            n_used: n,
            rejection_rate,
        }
    }

    /// CSV with header `r,f_hat,stderr,n`; an undefined standard error is
    /// written as an empty field.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "r,f_hat,stderr,n")?;
        for k in 0..self.r_grid.len() {
            let se = if self.stderr[k].is_finite() {
                format!("{:.16e}", self.stderr[k])
            } else {
                String::new()
            };
            writeln!(
                out,
                "{:.16e},{:.16e},{},{}",
                self.r_grid[k], self.f_hat[k], se, self.n_used
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Replications kept in memory for statistics beyond the grid density.
#[derive(Debug, Clone)]
pub struct ReplicationSet {
    pub lambda: f64,
    pub window: f64,
    pub rejection_rate: f64,
    pub replications: Vec<Replication>,
}

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let (mean, stderr) = mean_stderr(values);
        Estimate { mean, stderr }
    }

    pub fn lower(&self, k: f64) -> f64 {
        self.mean - k * self.stderr
    }

    pub fn upper(&self, k: f64) -> f64 {
        self.mean + k * self.stderr
    }
}

impl ReplicationSet {
    pub fn n(&self) -> usize {
        self.replications.len()
    }

    pub fn density(&self, r_grid: &[f64]) -> DensityEstimate {
        let counts: Vec<Vec<u32>> = self
            .replications
            .iter()
            .map(|r| level_counts(&r.profiles, r_grid))
            .collect();
        DensityEstimate::from_counts(
            self.lambda,
            r_grid,
            counts.iter().map(Vec::as_slice),
            self.n(),
            self.rejection_rate,
        )
    }

    /// Mean and standard error of a per-replication statistic.
    pub fn statistic(&self, f: impl Fn(&Replication) -> f64) -> Estimate {
        let values: Vec<f64> = self.replications.iter().map(f).collect();
        Estimate::from_values(&values)
    }

    /// `f_hat(at - delta) - f_hat(at + delta)` with a paired standard error.
    pub fn jump(&self, at: f64, delta: f64) -> Estimate {
        let lambda = self.lambda;
        self.statistic(|r| lambda * (r.count_at(at - delta) as f64 - r.count_at(at + delta) as f64))
    }

    /// Average of `f_hat` over the given distances, paired across replications.
    pub fn mean_density(&self, rs: &[f64]) -> Estimate {
        let lambda = self.lambda;
        let k = rs.len() as f64;
        self.statistic(|rep| lambda * rs.iter().map(|&r| rep.count_at(r) as f64).sum::<f64>() / k)
    }

    /// Integral of `f_hat` over `[0, a]`.
    pub fn mass_within(&self, a: f64) -> Estimate {
        let lambda = self.lambda;
        self.statistic(|r| lambda * r.length_within(a))
    }

    /// Integral of `f_hat` over `(a, inf)`.
    pub fn tail_mass(&self, a: f64) -> Estimate {
        let lambda = self.lambda;
        self.statistic(|r| lambda * (r.street_length() - r.length_within(a)))
    }

    pub fn total_mass(&self) -> Estimate {
        self.mass_within(f64::INFINITY)
    }

    /// Median of the pooled shortest-path-length distribution.
    pub fn median(&self) -> f64 {
        let total: f64 = self.replications.iter().map(Replication::street_length).sum();
        let target = 0.5 * total;
        let mut hi = self
            .replications
            .iter()
            .flat_map(|r| r.profiles.iter().flat_map(|p| p.breakpoints()))
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let within: f64 = self.replications.iter().map(|r| r.length_within(mid)).sum();
            if within < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn horizontal_fraction(&self) -> f64 {
        let h = self
            .replications
            .iter()
            .filter(|r| r.branch == PalmBranch::OnHorizontal)
            .count();
        h as f64 / self.n() as f64
    }

    /// Draws from the typical shortest-path-length law: a length-uniform point
    /// of the pooled cell streets.
    pub fn spl_draws(&self, k: usize, rng: &mut RandomStream) -> Vec<f64> {
        let pieces: Vec<&EdgeDistanceProfile> = self
            .replications
            .iter()
            .flat_map(|r| r.profiles.iter())
            .filter(|p| p.clipped_length() > 0.0)
            .collect();
        let mut cumulative = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            acc += p.clipped_length();
            cumulative.push(acc);
        }
        (0..k)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let i = cumulative.partition_point(|&c| c <= u).min(pieces.len() - 1);
                let p = pieces[i];
                let t = p.t_lo + rng.random::<f64>() * p.clipped_length();
                p.value_at(t)
            })
            .collect()
    }
}

pub fn estimate_spl_density(config: &ExperimentConfig) -> Result<DensityEstimate> {
    Experiment::new(config)?.estimate()
}

/// Small-`r` lattice density for mesh size `l`, neglecting the cell:
/// `2 lambda + 4 lambda r / l` on `[0, l)` and `12 lambda r / l - 6 lambda` on `[l, 2 l)`.
pub fn lattice_oracle_density(r: f64, lambda: f64, l: f64) -> Result<f64> {
    if !(r >= 0.0 && r < 2.0 * l) {
        return Err(Error::OutOfRange { r, limit: 2.0 * l });
    }
    let s = r / l;
    Ok(if s < 1.0 {
        2.0 * lambda + 4.0 * lambda * s
    } else {
        12.0 * lambda * s - 6.0 * lambda
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymmetryReport {
    pub rho: f64,
    pub symmetric: DensityEstimate,
    pub asymmetric: DensityEstimate,
    /// Median of the symmetric baseline.
    pub median: f64,
    /// Tail threshold, three times the symmetric median.
    pub threshold: f64,
    pub tail_symmetric: Estimate,
    pub tail_asymmetric: Estimate,
    /// Fraction of asymmetric replications with the origin on a horizontal street.
    pub horizontal_fraction: f64,
    /// KS statistic between resampled draws of the two arms.
    pub ks_statistic: f64,
    pub ks_critical: f64,
}

impl AsymmetryReport {
    /// Asymmetric tail above the baseline with non-overlapping 3-stderr bands.
    pub fn heavier_tail(&self) -> bool {
        self.tail_asymmetric.lower(3.0) > self.tail_symmetric.upper(3.0)
    }
}

/// Rescales a Manhattan model to `gamma_h / gamma_v = rho` at unchanged total
/// street intensity.
pub fn asymmetric_model(model: &StreetModel, rho: f64) -> Result<StreetModel> {
    let StreetModel::Manhattan { horizontal, vertical } = model else {
        return Err(Error::InvalidParameter(
            "asymmetry experiment needs a manhattan street model".into(),
        ));
    };
    if !(rho.is_finite() && rho >= 1.0) {
        return Err(Error::InvalidParameter(format!("rho must be >= 1, got {rho}")));
    }
    let laws = StreetLaws::new(model)?;
    let i = laws.intensities();
    let target_h = i.gamma * rho / (1.0 + rho);
    let target_v = i.gamma / (1.0 + rho);
    Ok(StreetModel::Manhattan {
        horizontal: horizontal.scaled(i.gamma_h / target_h),
        vertical: vertical.scaled(i.gamma_v / target_v),
    })
}

/// Runs the configured model at `gamma_h / gamma_v = rho` and its baseline at
/// the same total intensity and `lambda`.
pub fn asymmetry_experiment(config: &ExperimentConfig, rho: f64) -> Result<AsymmetryReport> {
    let asym_model = asymmetric_model(&config.streets, rho)?;
    let baseline_model = asymmetric_model(&config.streets, 1.0)?;
    let mut sym_cfg = config.clone();
    sym_cfg.streets = baseline_model;
    sym_cfg.master_seed = derive_seed(config.master_seed, &[1]);
    let mut asym_cfg = config.clone();
    asym_cfg.streets = asym_model;
    asym_cfg.master_seed = derive_seed(config.master_seed, &[2]);

    let sym = Experiment::new(&sym_cfg)?.simulate()?;
    let asym = Experiment::new(&asym_cfg)?.simulate()?;
    let median = sym.median();
    let threshold = 3.0 * median;

    let mut rng = substream(config.master_seed, &[3]);
    let draws = 5_000.min(config.n.max(1) * 50);
    let a = sym.spl_draws(draws, &mut rng);
    let b = asym.spl_draws(draws, &mut rng);
    let ks = crate::stats::ks_test(&a, &b, 0.01);

    Ok(AsymmetryReport {
        rho,
        symmetric: sym.density(&config.r_grid),
        asymmetric: asym.density(&config.r_grid),
        median,
        threshold,
        tail_symmetric: sym.tail_mass(threshold),
        tail_asymmetric: asym.tail_mass(threshold),
        horizontal_fraction: asym.horizontal_fraction(),
        ks_statistic: ks.statistic,
        ks_critical: ks.critical,
    })
}
