//! Five-parameter homography `u = (a·x + b)/(e·x + 1)`, `v = (c·y + d)/(e·x + 1)`.
//!
//! The model keeps vertical image lines vertical, which suits street-level
//! pairs taken with upright cameras at a similar height.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2};

use super::AlignError;
use crate::scalar::{lit, Real};

/// Relative singular value below which the design matrix counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Coefficients `(a, b, c, d, e)`.
pub type H5Coeffs<T> = [T; 5];

/// Least-squares fit of the coefficients to `src -> dst` point pairs.
///
/// Each pair contributes two linear rows
/// `[x, 1, 0, 0, -u·x]·p = u` and `[0, 0, y, 1, -v·x]·p = v`.
/// Columns are scaled to unit norm before an SVD solve so pixel-scale inputs
/// stay well conditioned.
pub fn fit_h5<T: Real>(src: &[Vector2<T>], dst: &[Vector2<T>]) -> Result<H5Coeffs<T>, AlignError> {
    if src.len() != dst.len() {
        return Err(AlignError::LengthMismatch { a: src.len(), b: dst.len() });
    }
    let n = src.len();
    if n < 3 {
        return Err(AlignError::TooFewPoints { needed: 3, found: n });
    }
    let mut a = DMatrix::<T>::zeros(2 * n, 5);
    let mut rhs = DVector::<T>::zeros(2 * n);
    for (i, (p, q)) in src.iter().zip(dst).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = T::one();
        a[(r, 4)] = -u * x;
        rhs[r] = u;
        a[(r + 1, 2)] = y;
        a[(r + 1, 3)] = T::one();
        a[(r + 1, 4)] = -v * x;
        rhs[r + 1] = v;
    }
    let mut scale = [T::one(); 5];
    for (j, s) in scale.iter_mut().enumerate() {
        let norm = a.column(j).norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(AlignError::RankDeficient);
        }
        *s = norm;
        a.column_mut(j).unscale_mut(norm);
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > smax * lit(RANK_TOL)) {
        return Err(AlignError::RankDeficient);
    }
    let sol = svd.solve(&rhs, T::zero()).map_err(|_| AlignError::RankDeficient)?;
    let mut out = [T::zero(); 5];
    for j in 0..5 {
        out[j] = sol[j] / scale[j];
        if !out[j].is_finite() {
            return Err(AlignError::RankDeficient);
        }
    }
    Ok(out)
}

/// `[[a, 0, b], [0, c, d], [e, 0, 1]]`.
pub fn h5_to_matrix<T: Real>(c: &H5Coeffs<T>) -> Matrix3<T> {
    let (z, o) = (T::zero(), T::one());
    Matrix3::new(c[0], z, c[1], z, c[2], c[3], c[4], z, o)
}

/// Direct evaluation of the coefficient form.
pub fn eval_h5<T: Real>(c: &H5Coeffs<T>, p: &Vector2<T>) -> Vector2<T> {
    let w = c[4] * p.x + T::one();
    Vector2::new((c[0] * p.x + c[1]) / w, (c[2] * p.y + c[3]) / w)
}
