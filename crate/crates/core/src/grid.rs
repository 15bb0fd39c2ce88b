//! Uniform bucket grids for fixed-radius and nearest-neighbour queries.
//!
//! Results are always sorted by point index so they match a naive scan
//! exactly, independent of bucket iteration order.

use std::collections::HashMap;

/// Uniform grid over `D`-dimensional points.
#[derive(Debug, Clone)]
pub struct SpatialGrid<const D: usize> {
    cell: f64,
    points: Vec<[f64; D]>,
    buckets: HashMap<[i64; D], Vec<usize>>,
    key_min: [i64; D],
    key_max: [i64; D],
}

impl<const D: usize> SpatialGrid<D> {
    /// `cell` must be positive and finite; non-finite points are skipped.
    pub fn new(points: Vec<[f64; D]>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        let mut buckets: HashMap<[i64; D], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            if p.iter().all(|v| v.is_finite()) {
                buckets.entry(Self::key(cell, p)).or_default().push(i);
            }
        }
        let mut key_min = [i64::MAX; D];
        let mut key_max = [i64::MIN; D];
        for k in buckets.keys() {
            for d in 0..D {
                key_min[d] = key_min[d].min(k[d]);
                key_max[d] = key_max[d].max(k[d]);
            }
        }
        SpatialGrid { cell, points, buckets, key_min, key_max }
    }

    fn key(cell: f64, p: &[f64; D]) -> [i64; D] {
        let mut k = [0i64; D];
        for d in 0..D {
            k[d] = (p[d] / cell).floor() as i64;
        }
        k
    }

    /// Ring radius (in cells) beyond which no occupied bucket remains.
    fn max_reach(&self, center: &[i64; D]) -> i64 {
        (0..D)
            .map(|d| (center[d] - self.key_min[d]).max(self.key_max[d] - center[d]))
            .max()
            .unwrap_or(0)
            .max(0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64; D] {
        &self.points[i]
    }

    fn dist2(a: &[f64; D], b: &[f64; D]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    /// Visits every occupied bucket whose key lies within `reach` cells of `center`.
    fn for_each_bucket(&self, center: &[i64; D], reach: i64, mut f: impl FnMut(&[usize])) {
        let span = (2 * reach + 1) as usize;
        let total = span.pow(D as u32);
        if total > self.buckets.len() {
            for (k, v) in &self.buckets {
                if (0..D).all(|d| (k[d] - center[d]).abs() <= reach) {
                    f(v);
                }
            }
            return;
        }
        let mut offs = [0usize; D];
        loop {
            let mut k = *center;
            for d in 0..D {
                k[d] += offs[d] as i64 - reach;
            }
            if let Some(v) = self.buckets.get(&k) {
                f(v);
            }
            let mut d = 0;
            loop {
                if d == D {
                    return;
                }
                offs[d] += 1;
                if offs[d] < span {
                    break;
                }
                offs[d] = 0;
                d += 1;
            }
        }
    }

    /// Indices of points with distance `<= radius`, ascending.
    pub fn within(&self, q: &[f64; D], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !(radius >= 0.0) || !q.iter().all(|v| v.is_finite()) {
            return out;
        }
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        self.for_each_bucket(&Self::key(self.cell, q), reach, |idx| {
            for &i in idx {
                if Self::dist2(&self.points[i], q) <= r2 {
                    out.push(i);
                }
            }
        });
        out.sort_unstable();
        out
    }

    /// Whether any point lies within `radius` of `q`.
    pub fn any_within(&self, q: &[f64; D], radius: f64) -> bool {
        !self.within(q, radius).is_empty()
    }

    /// Nearest point and its squared distance; ties go to the lower index.
    pub fn nearest(&self, q: &[f64; D]) -> Option<(usize, f64)> {
        if self.buckets.is_empty() || !q.iter().all(|v| v.is_finite()) {
            return None;
        }
        let center = Self::key(self.cell, q);
        let mut best: Option<(usize, f64)> = None;
        let mut reach = 0i64;
        loop {
            // Rings are re-scanned as reach grows; fine for the sizes used here.
            self.for_each_bucket(&center, reach, |idx| {
                for &i in idx {
                    let d = Self::dist2(&self.points[i], q);
                    match best {
                        Some((bi, bd)) if d > bd || (d == bd && i >= bi) => {}
                        _ => best = Some((i, d)),
                    }
                }
            });
            if let Some((_, bd)) = best {
                // every unvisited point is at least `reach * cell` away
                let guaranteed = reach as f64 * self.cell;
                if bd.sqrt() < guaranteed {
                    return best;
                }
            }
            if reach >= self.max_reach(&center) {
                return best;
            }
            reach += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_within<const D: usize>(pts: &[[f64; D]], q: &[f64; D], r: f64) -> Vec<usize> {
        (0..pts.len())
            .filter(|&i| SpatialGrid::<D>::dist2(&pts[i], q) <= r * r)
            .collect()
    }

    fn naive_nearest<const D: usize>(pts: &[[f64; D]], q: &[f64; D]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in pts.iter().enumerate() {
            let d = SpatialGrid::<D>::dist2(p, q);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    proptest! {
        #[test]
        fn radius_matches_naive_2d(
            pts in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 0..200),
            q in (-120.0..120.0f64, -120.0..120.0f64),
            r in 0.0..60.0f64,
            cell in 1.0..50.0f64,
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let g = SpatialGrid::new(pts.clone(), cell);
            prop_assert_eq!(g.within(&[q.0, q.1], r), naive_within(&pts, &[q.0, q.1], r));
        }

        #[test]
        fn nearest_matches_naive_3d(
            pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 1..150),
            q in (-30.0..30.0f64, -30.0..30.0f64, -30.0..30.0f64),
            cell in 0.2..5.0f64,
        ) {
            let pts: Vec<[f64; 3]> = pts.into_iter().map(|(a, b, c)| [a, b, c]).collect();
            let g = SpatialGrid::new(pts.clone(), cell);
            let q = [q.0, q.1, q.2];
            let (gi, gd) = g.nearest(&q).unwrap();
            let (ni, nd) = naive_nearest(&pts, &q).unwrap();
            prop_assert_eq!(gd, nd);
            prop_assert_eq!(gi, ni);
        }
    }

    #[test]
    fn nearest_prefers_lower_index_on_ties() {
        let g = SpatialGrid::new(vec![[1.0, 0.0], [-1.0, 0.0]], 0.5);
        assert_eq!(g.nearest(&[0.0, 0.0]).unwrap().0, 0);
    }

    #[test]
    fn far_query_still_finds_nearest() {
        let g = SpatialGrid::new(vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], 0.1);
        assert_eq!(g.nearest(&[1e4, 1e4, 1e4]).unwrap().0, 1);
    }
}
