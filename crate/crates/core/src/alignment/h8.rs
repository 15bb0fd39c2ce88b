//! General planar homography by normalised DLT.

use nalgebra::{DMatrix, Matrix3, Vector2};

use super::AlignError;
use crate::model::normalise;
use crate::scalar::{lit, Real};

/// Similarity taking the points to zero mean and mean distance `sqrt(2)`.
pub(crate) fn hartley<T: Real>(pts: &[Vector2<T>]) -> Option<Matrix3<T>> {
    let n: T = lit(pts.len() as f64);
    let mean = pts.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let spread = pts.iter().map(|p| (p - mean).norm()).fold(T::zero(), |a, b| a + b) / n;
    if !(spread > T::zero()) || !spread.is_finite() {
        return None;
    }
    let s = T::sqrt(lit(2.0)) / spread;
    let z = T::zero();
    Some(Matrix3::new(s, z, -s * mean.x, z, s, -s * mean.y, z, z, T::one()))
}

fn apply<T: Real>(t: &Matrix3<T>, p: &Vector2<T>) -> Vector2<T> {
    Vector2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Twice the signed area of the triangle `a, b, c`.
fn area2<T: Real>(a: &Vector2<T>, b: &Vector2<T>, c: &Vector2<T>) -> T {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// True when any three of the four points are (nearly) collinear.
pub(crate) fn has_collinear_triple<T: Real>(p: &[Vector2<T>; 4]) -> bool {
    let scale = p
        .iter()
        .flat_map(|a| p.iter().map(move |b| (a - b).norm_squared()))
        .fold(T::zero(), |m, d| if d > m { d } else { m });
    let tol = scale * lit(1e-9);
    for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        if !(area2(&p[i], &p[j], &p[k]).abs() > tol) {
            return true;
        }
    }
    false
}

/// Homography mapping `src` onto `dst` in the least-squares algebraic sense.
///
/// Needs at least four pairs; returns a matrix scaled so `h22 = 1`.
pub fn fit_h8<T: Real>(src: &[Vector2<T>], dst: &[Vector2<T>]) -> Result<Matrix3<T>, AlignError> {
    if src.len() != dst.len() {
        return Err(AlignError::LengthMismatch { a: src.len(), b: dst.len() });
    }
    let n = src.len();
    if n < 4 {
        return Err(AlignError::TooFewPoints { needed: 4, found: n });
    }
    let ts = hartley(src).ok_or(AlignError::RankDeficient)?;
    let td = hartley(dst).ok_or(AlignError::RankDeficient)?;
    // nalgebra's SVD only returns min(rows, cols) right vectors, so pad to 9 rows
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<T>::zeros(rows, 9);
    let one = T::one();
    for (i, (p, q)) in src.iter().zip(dst).enumerate() {
        let p = apply(&ts, p);
        let q = apply(&td, q);
        let r = 2 * i;
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -one;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -one;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(AlignError::RankDeficient)?;
    let sv = &svd.singular_values;
    let (mut k, mut smin) = (0, sv[0]);
    for j in 1..sv.len() {
        if sv[j] < smin {
            smin = sv[j];
            k = j;
        }
    }
    // a second vanishing singular value means the null space is not unique
    let mut sorted: Vec<T> = sv.iter().copied().collect();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    if !(sorted[1] > sorted[8] * lit(1e-10)) {
        return Err(AlignError::RankDeficient);
    }
    let h = vt.row(k);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(AlignError::RankDeficient)?;
    let full = td_inv * hn * ts;
    if !(full[(2, 2)].abs() > lit(1e-12)) || full.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::RankDeficient);
    }
    Ok(normalise(full))
}
