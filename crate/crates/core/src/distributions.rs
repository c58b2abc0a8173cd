//! Inter-arrival laws for the street-coordinate renewal processes.
//!
//! [`InterArrivalSpec`] is the plain, serializable description. [`InterArrival`]
//! is the validated law with its moments and, for the truncated Gaussian, the
//! tabulated inverse CDF of the length-biased density `x g(x) / E[I]`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Number of knots in the length-biased inverse-CDF table.
pub const LENGTH_BIASED_KNOTS: usize = 1 << 16;

/// Below this acceptance probability the truncated Gaussian switches from
/// rejection to inverse-CDF sampling.
const REJECTION_MIN_ACCEPT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterArrivalSpec {
    Deterministic { mu: f64 },
    Exponential { rate: f64 },
    /// `N(mu, sigma^2)` conditioned on being nonnegative.
    TruncatedGaussian { mu: f64, sigma: f64 },
}

impl InterArrivalSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            InterArrivalSpec::Deterministic { mu } => {
                if !(mu.is_finite() && mu > 0.0) {
                    return bad(format!("deterministic gap must be positive, got {mu}"));
                }
            }
            InterArrivalSpec::Exponential { rate } => {
                if !(rate.is_finite() && rate > 0.0) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            InterArrivalSpec::TruncatedGaussian { mu, sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return bad(format!("truncated gaussian needs sigma > 0, got {sigma}"));
                }
                if !mu.is_finite() || std_normal_cdf(mu / sigma) <= 0.0 {
                    return bad(format!(
                        "truncated gaussian (mu={mu}, sigma={sigma}) has no mass on (0, inf)"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Same law with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            InterArrivalSpec::Deterministic { mu } => InterArrivalSpec::Deterministic { mu: mu * factor },
            InterArrivalSpec::Exponential { rate } => InterArrivalSpec::Exponential { rate: rate / factor },
            InterArrivalSpec::TruncatedGaussian { mu, sigma } => InterArrivalSpec::TruncatedGaussian {
                mu: mu * factor,
                sigma: sigma * factor,
            },
        }
    }
}

/// `E[I]` of a spec.
pub fn mean_interarrival(spec: &InterArrivalSpec) -> Result<f64> {
    spec.validate()?;
    Ok(match *spec {
        InterArrivalSpec::Deterministic { mu } => mu,
        InterArrivalSpec::Exponential { rate } => 1.0 / rate,
        InterArrivalSpec::TruncatedGaussian { mu, sigma } => truncated_gaussian_moment(mu, sigma, 1),
    })
}

/// Validated inter-arrival law, cheap to share between threads.
#[derive(Debug, Clone)]
pub struct InterArrival {
    spec: InterArrivalSpec,
    mean: f64,
    second_moment: f64,
    table: Option<Arc<LengthBiasedTable>>,
}

impl InterArrival {
    pub fn new(spec: InterArrivalSpec) -> Result<Self> {
        spec.validate()?;
        let (mean, second_moment, table) = match spec {
            InterArrivalSpec::Deterministic { mu } => (mu, mu * mu, None),
            InterArrivalSpec::Exponential { rate } => (1.0 / rate, 2.0 / (rate * rate), None),
            InterArrivalSpec::TruncatedGaussian { mu, sigma } => (
                truncated_gaussian_moment(mu, sigma, 1),
                truncated_gaussian_moment(mu, sigma, 2),
                Some(Arc::new(LengthBiasedTable::truncated_gaussian(mu, sigma))),
            ),
        };
        Ok(InterArrival {
            spec,
            mean,
            second_moment,
            table,
        })
    }

    pub fn spec(&self) -> &InterArrivalSpec {
        &self.spec
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Mean of the length-biased law, `E[I^2] / E[I]`.
    pub fn length_biased_mean(&self) -> f64 {
        self.second_moment / self.mean
    }

    /// Line intensity of a renewal process with this gap law.
    pub fn intensity(&self) -> f64 {
        1.0 / self.mean
    }

    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        match self.spec {
            InterArrivalSpec::Deterministic { mu } => mu,
            InterArrivalSpec::Exponential { rate } => {
                let e: f64 = rng.sample(Exp1);
                e / rate
            }
            InterArrivalSpec::TruncatedGaussian { mu, sigma } => sample_truncated_gaussian(mu, sigma, rng),
        }
    }

    /// Draw from the length-biased density `x g(x) / E[I]`.
    pub fn sample_length_biased(&self, rng: &mut RandomStream) -> f64 {
        match self.spec {
            InterArrivalSpec::Deterministic { mu } => mu,
            InterArrivalSpec::Exponential { rate } => {
                // Gamma(2, 1/rate).
                let a: f64 = rng.sample(Exp1);
                let b: f64 = rng.sample(Exp1);
                (a + b) / rate
            }
            InterArrivalSpec::TruncatedGaussian { .. } => self
                .table
                .as_ref()
                .expect("truncated gaussian always carries a table")
                .sample(rng),
        }
    }
}

pub fn sample_interarrival(spec: &InterArrivalSpec, rng: &mut RandomStream) -> Result<f64> {
    Ok(InterArrival::new(*spec)?.sample(rng))
}

pub fn sample_length_biased(spec: &InterArrivalSpec, rng: &mut RandomStream) -> Result<f64> {
    Ok(InterArrival::new(*spec)?.sample_length_biased(rng))
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn sample_truncated_gaussian(mu: f64, sigma: f64, rng: &mut RandomStream) -> f64 {
    let accept = std_normal_cdf(mu / sigma);
    if accept >= REJECTION_MIN_ACCEPT {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = mu + sigma * z;
            if x >= 0.0 {
                return x;
            }
        }
    }
    // z >= -mu/sigma via the lower tail: z = -Phi^{-1}(w), w ~ U(0, Phi(mu/sigma)].
    let w = (1.0 - rng.random::<f64>()) * accept;
    let z = -std_normal_quantile(w);
    (mu + sigma * z).max(0.0)
}

/// Five-point Gauss-Legendre rule on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
];

/// `E[I^k]` of the truncated Gaussian by composite Gauss-Legendre quadrature.
fn truncated_gaussian_moment(mu: f64, sigma: f64, k: i32) -> f64 {
    let lo = (mu - 14.0 * sigma).max(0.0);
    let hi = mu.max(0.0) + 14.0 * sigma;
    let panel = sigma / 8.0;
    let panels = ((hi - lo) / panel).ceil().max(1.0) as usize;
    let h = (hi - lo) / panels as f64;
    let density = |x: f64| {
        let z = (x - mu) / sigma;
        (-0.5 * z * z).exp()
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for p in 0..panels {
        let c = lo + (p as f64 + 0.5) * h;
        for &(node, weight) in &GL5 {
            let x = c + 0.5 * h * node;
            let g = weight * density(x);
            num += g * x.powi(k);
            den += g;
        }
    }
    num / den
}

/// Cumulative trapezoid table of `x g(x)` for inverse-CDF sampling.
#[derive(Debug)]
struct LengthBiasedTable {
    lo: f64,
    step: f64,
    cumulative: Vec<f64>,
}

impl LengthBiasedTable {
    fn truncated_gaussian(mu: f64, sigma: f64) -> Self {
        let lo = (mu - 10.0 * sigma).max(0.0);
        let hi = mu.max(0.0) + 10.0 * sigma;
        let step = (hi - lo) / (LENGTH_BIASED_KNOTS - 1) as f64;
        let weight = |x: f64| {
            let z = (x - mu) / sigma;
            x * (-0.5 * z * z).exp()
        };
        let mut cumulative = Vec::with_capacity(LENGTH_BIASED_KNOTS);
        cumulative.push(0.0);
        let mut prev = weight(lo);
        for k in 1..LENGTH_BIASED_KNOTS {
            let w = weight(lo + k as f64 * step);
            let last = *cumulative.last().unwrap();
            cumulative.push(last + 0.5 * step * (prev + w));
            prev = w;
        }
        LengthBiasedTable { lo, step, cumulative }
    }

    fn sample(&self, rng: &mut RandomStream) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let target = rng.random::<f64>() * total;
        // First knot with cumulative > target; the draw lies in the cell before it.
        let upper = self
            .cumulative
            .partition_point(|&c| c <= target)
            .clamp(1, self.cumulative.len() - 1);
        let (c0, c1) = (self.cumulative[upper - 1], self.cumulative[upper]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        self.lo + self.step * ((upper - 1) as f64 + frac)
    }
}
