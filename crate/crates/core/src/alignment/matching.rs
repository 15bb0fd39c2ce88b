//! Brute-force descriptor matching with ratio and mutual-consistency filters.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::AlignError;

/// A filtered correspondence between feature `idx_a` of one image and
/// feature `idx_b` of the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub idx_a: usize,
    pub idx_b: usize,
    /// L2 descriptor distance.
    pub dist: f64,
    /// Best over second-best distance.
    pub ratio: f64,
}

/// The two nearest neighbours in B of one feature of A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knn {
    pub idx_a: usize,
    /// `(index in B, L2 distance)`, nearest first.
    pub nn: [(usize, f64); 2],
}

/// Squared L2 distance with eight independent accumulators.
#[inline]
pub fn dist2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Two nearest neighbours in `b` for every descriptor in `a`.
///
/// Neighbours are scanned in ascending index order and replaced only on a
/// strictly smaller distance, so equidistant candidates resolve to the lower
/// index.
pub fn knn_match<D: AsRef<[f32]>>(a: &[D], b: &[D]) -> Result<Vec<Knn>, AlignError> {
    if b.len() < 2 {
        return Err(AlignError::TooFewFeatures { needed: 2, found: b.len() });
    }
    let len = b[0].as_ref().len();
    if let Some(bad) = a.iter().chain(b).find(|d| d.as_ref().len() != len) {
        return Err(AlignError::DescriptorLength { expected: len, found: bad.as_ref().len() });
    }
    Ok(a.iter()
        .enumerate()
        .map(|(i, da)| {
            let da = da.as_ref();
            let mut best = (usize::MAX, f32::INFINITY);
            let mut second = (usize::MAX, f32::INFINITY);
            for (j, db) in b.iter().enumerate() {
                let d = dist2(da, db.as_ref());
                if d < best.1 {
                    second = best;
                    best = (j, d);
                } else if d < second.1 {
                    second = (j, d);
                }
            }
            Knn {
                idx_a: i,
                nn: [(best.0, f64::from(best.1).sqrt()), (second.0, f64::from(second.1).sqrt())],
            }
        })
        .collect())
}

/// Keeps the nearest neighbour when `best / second <= ratio_max`.
///
/// Two zero distances give a ratio of 1.
pub fn lowe_filter(knn: &[Knn], ratio_max: f64) -> Vec<Match> {
    knn.iter()
        .filter_map(|k| {
            let (b, best) = k.nn[0];
            let second = k.nn[1].1;
            let ratio = if second == 0.0 { 1.0 } else { best / second };
            (ratio <= ratio_max).then_some(Match { idx_a: k.idx_a, idx_b: b, dist: best, ratio })
        })
        .collect()
}

/// Keeps `a -> b` from `ab` only when `b -> a` is present in `ba`.
///
/// In `ba`, `idx_a` indexes image B. Output follows the order of `ab`.
pub fn bidirectional_filter(ab: &[Match], ba: &[Match]) -> Vec<Match> {
    let back: HashMap<usize, usize> = ba.iter().map(|m| (m.idx_a, m.idx_b)).collect();
    ab.iter().filter(|m| back.get(&m.idx_b) == Some(&m.idx_a)).copied().collect()
}
