//! Stationary and Palm renewal processes on a window `[-w, w]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::InterArrival;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Upper bound on generated arrivals per realization.
pub const RUNAWAY_CAP: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Stationary,
    /// Seen from a typical arrival: `0` is always an arrival.
    Palm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalRealization {
    pub points: Vec<f64>,
    pub window_half_width: f64,
    pub flavor: Flavor,
}

impl RenewalRealization {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains_zero(&self) -> bool {
        self.points.binary_search_by(|p| p.total_cmp(&0.0)).is_ok()
    }

    /// Gaps between consecutive arrivals.
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    /// First arrival strictly greater than `t`.
    pub fn next_after(&self, t: f64) -> Option<f64> {
        let i = self.points.partition_point(|&p| p <= t);
        self.points.get(i).copied()
    }

    /// Last arrival strictly smaller than `t`.
    pub fn prev_before(&self, t: f64) -> Option<f64> {
        let i = self.points.partition_point(|&p| p < t);
        i.checked_sub(1).map(|i| self.points[i])
    }
}

fn check_window(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("window half-width must be positive, got {w}")))
    }
}

/// Extends `start` by iid gaps in direction `sign` until the first arrival
/// strictly beyond `w` in absolute value.
fn extend(
    dist: &InterArrival,
    start: f64,
    sign: f64,
    w: f64,
    out: &mut Vec<f64>,
    budget: &mut usize,
    rng: &mut RandomStream,
) -> Result<()> {
    let mut t = start;
    out.push(t);
    while sign * t <= w {
        if *budget == 0 {
            return Err(Error::Runaway { cap: RUNAWAY_CAP });
        }
        *budget -= 1;
        t += sign * dist.sample(rng);
        out.push(t);
    }
    Ok(())
}

fn assemble(mut left: Vec<f64>, right: Vec<f64>, w: f64, flavor: Flavor) -> RenewalRealization {
    left.reverse();
    left.extend(right);
    left.retain(|&p| (-w..=w).contains(&p));
    left.dedup();
    RenewalRealization {
        points: left,
        window_half_width: w,
        flavor,
    }
}

/// Stationary renewal process: the gap covering the origin is length-biased and
/// split by a uniform mark into `(U I*, (1 - U) I*)`; every other gap is iid.
pub fn sample_stationary_renewal(dist: &InterArrival, w: f64, rng: &mut RandomStream) -> Result<RenewalRealization> {
    check_window(w)?;
    let covering = dist.sample_length_biased(rng);
    let u: f64 = rng.random();
    let mut budget = RUNAWAY_CAP;
    let mut right = Vec::new();
    let mut left = Vec::new();
    extend(dist, u * covering, 1.0, w, &mut right, &mut budget, rng)?;
    extend(dist, (u - 1.0) * covering, -1.0, w, &mut left, &mut budget, rng)?;
    Ok(assemble(left, right, w, Flavor::Stationary))
}

/// Palm version: an arrival at `0` and iid gaps on both sides.
pub fn sample_palm_renewal(dist: &InterArrival, w: f64, rng: &mut RandomStream) -> Result<RenewalRealization> {
    check_window(w)?;
    let mut budget = RUNAWAY_CAP;
    let mut right = Vec::new();
    let mut left = Vec::new();
    extend(dist, 0.0, 1.0, w, &mut right, &mut budget, rng)?;
    let first_left = -dist.sample(rng);
    extend(dist, first_left, -1.0, w, &mut left, &mut budget, rng)?;
    Ok(assemble(left, right, w, Flavor::Palm))
}

pub fn sample_renewal(
    dist: &InterArrival,
    w: f64,
    flavor: Flavor,
    rng: &mut RandomStream,
) -> Result<RenewalRealization> {
    match flavor {
        Flavor::Stationary => sample_stationary_renewal(dist, w, rng),
        Flavor::Palm => sample_palm_renewal(dist, w, rng),
    }
}
