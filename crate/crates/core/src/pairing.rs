//! Geometric query/map pair selection.
//!
//! A query is compared against every map image; a pair qualifies when the
//! camera centers are at most `max_dist` apart and the lines of sight differ
//! by at most `max_ang`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::grid::SpatialGrid;
use crate::model::ImageRecord;
use crate::scalar::{lit, to_f64, Real};

pub const DEFAULT_MAX_DIST_M: f64 = 1.0;
pub const DEFAULT_MAX_ANG_RAD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PairingError {
    #[error("line-of-sight vector is not unit length (norm {0})")]
    NotUnit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCandidate {
    pub query_id: String,
    pub map_id: String,
    /// Camera center distance in meters.
    pub center_dist: f64,
    /// Angle between the optical axes in radians.
    pub angular_sep: f64,
}

impl PairCandidate {
    /// Distances between a query and a map image, regardless of thresholds.
    pub fn between(query: &ImageRecord, map: &ImageRecord) -> Self {
        candidate(query, map)
    }

    pub fn key(&self) -> String {
        format!("{}__{}", self.query_id, self.map_id)
    }
}

/// Angle between two unit vectors, `acos(clamp(a·b))`.
pub fn angular_separation<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> Result<T, PairingError> {
    for v in [a, b] {
        let n = v.norm();
        if !((n - T::one()).abs() <= lit(1e-6)) {
            return Err(PairingError::NotUnit(to_f64(n)));
        }
    }
    let c = a.dot(b).clamp(-T::one(), T::one());
    Ok(c.acos())
}

fn candidate(q: &ImageRecord, m: &ImageRecord) -> PairCandidate {
    let center_dist = (q.pose.position - m.pose.position).norm();
    // los() is normalised, so the unit check cannot fail
    let angular_sep = angular_separation(&q.pose.los(), &m.pose.los()).unwrap_or(std::f64::consts::PI);
    PairCandidate { query_id: q.id.clone(), map_id: m.id.clone(), center_dist, angular_sep }
}

fn sort_pairs(pairs: &mut [PairCandidate]) {
    pairs.sort_by(|a, b| {
        a.query_id
            .cmp(&b.query_id)
            .then(a.center_dist.total_cmp(&b.center_dist))
            .then_with(|| a.map_id.cmp(&b.map_id))
    });
}

/// Reference O(|Q|·|M|) scan.
pub fn select_pairs(
    queries: &[&ImageRecord],
    maps: &[&ImageRecord],
    max_dist: f64,
    max_ang: f64,
) -> Vec<PairCandidate> {
    let mut out = Vec::new();
    for q in queries {
        for m in maps {
            let c = candidate(q, m);
            if c.center_dist <= max_dist && c.angular_sep <= max_ang {
                out.push(c);
            }
        }
    }
    sort_pairs(&mut out);
    out
}

/// Same result as [`select_pairs`], with map centers bucketed in a grid.
pub fn select_pairs_indexed(
    queries: &[&ImageRecord],
    maps: &[&ImageRecord],
    max_dist: f64,
    max_ang: f64,
) -> Vec<PairCandidate> {
    if maps.is_empty() || !(max_dist >= 0.0) {
        return Vec::new();
    }
    let centers = maps.iter().map(|m| m.pose.position.into()).collect::<Vec<[f64; 3]>>();
    let cell = if max_dist > 0.0 && max_dist.is_finite() { max_dist } else { 1.0 };
    let grid = SpatialGrid::new(centers, cell);
    let mut out = Vec::new();
    for q in queries {
        // slack so that squared-distance rounding never drops a pair the norm accepts
        let reach = max_dist * (1.0 + 1e-9) + 1e-12;
        for i in grid.within(&q.pose.position.into(), reach) {
            let c = candidate(q, maps[i]);
            if c.center_dist <= max_dist && c.angular_sep <= max_ang {
                out.push(c);
            }
        }
    }
    sort_pairs(&mut out);
    out
}
