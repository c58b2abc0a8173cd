//! Poisson points with linear intensity `lambda` along a street system.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::rng::RandomStream;
use crate::streets::Segment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub points: Vec<Point>,
    pub lambda: f64,
    /// Index into the carrier segment list, one per point.
    pub segment_of: Vec<usize>,
}

impl PointPattern {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per segment of length `L`, `Poisson(lambda L)` points placed uniformly.
///
/// The origin is never added here.
pub fn sample_cox(segments: &[Segment], lambda: f64, rng: &mut RandomStream) -> Result<PointPattern> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let mut points = Vec::new();
    let mut segment_of = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        let mean = lambda * seg.length();
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .sample(rng) as usize;
        for _ in 0..count {
            let t = rng.random::<f64>() * seg.length();
            points.push(seg.point_at(t));
            segment_of.push(k);
        }
    }
    Ok(PointPattern {
        points,
        lambda,
        segment_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::streets::Provenance;

    #[test]
    fn empty_carrier() {
        let p = sample_cox(&[], 1.0, &mut stream(0)).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn points_lie_on_their_segments() {
        let segs = vec![
            Segment::horizontal(0.3, -2.0, 2.0, Provenance::Main),
            Segment::vertical(-1.0, -2.0, 2.0, Provenance::Side),
        ];
        let p = sample_cox(&segs, 5.0, &mut stream(4)).unwrap();
        assert!(!p.is_empty());
        for (pt, &k) in p.points.iter().zip(&p.segment_of) {
            assert!(segs[k].distance_to(*pt) <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(sample_cox(&[], 0.0, &mut stream(0)).is_err());
    }
}
