use nalgebra::{Matrix3, Matrix4, Point2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Real};
use crate::Vec2;

/// Degrees of freedom of a fitted homography; serialized as 5 or 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Dof {
    /// `u = (a x + b)/(e x + 1)`, `v = (c y + d)/(e x + 1)`; vertical lines stay vertical.
    Five,
    /// General planar projective transform.
    Eight,
}

impl Dof {
    pub fn count(self) -> u8 {
        match self {
            Dof::Five => 5,
            Dof::Eight => 8,
        }
    }

    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            5 => Some(Dof::Five),
            8 => Some(Dof::Eight),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("homography is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("homography is not normalised (H[2][2] = {0})")]
    NotNormalised(f64),
    #[error("5DOF homography has a nonzero structural entry H[{0}][{1}]")]
    BrokenStructure(usize, usize),
    #[error("point maps to infinity (denominator {0:e})")]
    AtInfinity(f64),
    #[error("rotation is not orthonormal with det +1 (error {0:e})")]
    NotRotation(f64),
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
}

impl From<Dof> for u8 {
    fn from(d: Dof) -> u8 {
        d.count()
    }
}

impl TryFrom<u8> for Dof {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, String> {
        Dof::from_count(n).ok_or_else(|| format!("dof must be 5 or 8, got {n}"))
    }
}

/// Serializes a 3x3 matrix as three rows.
pub mod row_major {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

/// Fitted planar homography with its RANSAC support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    #[serde(with = "row_major")]
    pub h: Matrix3<f64>,
    pub dof: Dof,
    /// Index pairs `(feature in A, feature in B)`.
    pub inliers: Vec<(usize, usize)>,
    /// Per-axis standard deviation of the inlier pixels in image A.
    pub sigma_xy: [f64; 2],
    /// Inlier reprojection rmse in pixels.
    pub rmse: f64,
}

impl Homography {
    pub fn bare(h: Matrix3<f64>, dof: Dof) -> Self {
        Homography { h, dof, inliers: Vec::new(), sigma_xy: [0.0; 2], rmse: 0.0 }
    }

    pub fn identity() -> Self {
        Self::bare(Matrix3::identity(), Dof::Five)
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let det = self.h.determinant();
        if !(det.abs() > 1e-12) {
            return Err(TransformError::Singular(det));
        }
        if self.h[(2, 2)] != 1.0 {
            return Err(TransformError::NotNormalised(self.h[(2, 2)]));
        }
        if self.dof == Dof::Five {
            for (r, c) in [(0, 1), (1, 0), (2, 1)] {
                if self.h[(r, c)] != 0.0 {
                    return Err(TransformError::BrokenStructure(r, c));
                }
            }
        }
        Ok(())
    }

    pub fn warp(&self, p: &Vec2) -> Result<Vec2, TransformError> {
        warp_point(&self.h, p)
    }

    /// Inverse transform, renormalised so that `H[2][2] == 1` when possible.
    pub fn inverse_matrix(&self) -> Option<Matrix3<f64>> {
        self.h.try_inverse().map(normalise)
    }
}

/// Scales a homography so that its bottom-right entry is one.
pub fn normalise<T: Real>(h: Matrix3<T>) -> Matrix3<T> {
    let s = h[(2, 2)];
    if s.abs() > lit(1e-300) {
        h / s
    } else {
        h
    }
}

/// Homogeneous transform of a pixel followed by dehomogenisation.
pub fn warp_point<T: Real>(h: &Matrix3<T>, p: &Vector2<T>) -> Result<Vector2<T>, TransformError> {
    let w = h[(2, 0)] * p.x + h[(2, 1)] * p.y + h[(2, 2)];
    if !(w.abs() > lit(1e-12)) {
        return Err(TransformError::AtInfinity(crate::scalar::to_f64(w)));
    }
    let u = (h[(0, 0)] * p.x + h[(0, 1)] * p.y + h[(0, 2)]) / w;
    let v = (h[(1, 0)] * p.x + h[(1, 1)] * p.y + h[(1, 2)]) / w;
    Ok(Vector2::new(u, v))
}

/// Same as [`warp_point`] for nalgebra points.
pub fn warp_point2<T: Real>(h: &Matrix3<T>, p: &Point2<T>) -> Result<Point2<T>, TransformError> {
    warp_point(h, &p.coords).map(Point2::from)
}

/// Similarity `x -> R (s x) + t`; with `scale == 1` a rigid motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid3<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
    pub scale: T,
}

impl<T: Real> Rigid3<T> {
    pub fn identity() -> Self {
        Rigid3 { rotation: Matrix3::identity(), translation: Vector3::zeros(), scale: T::one() }
    }

    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Rigid3 { rotation, translation, scale: T::one() }
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * (p * self.scale) + self.translation
    }

    /// `[R t; 0 1]` with the scale folded into the rotation block.
    pub fn to_matrix4(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.rotation * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rigid3<T>) -> Rigid3<T> {
        Rigid3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * (other.translation * self.scale) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> Rigid3<T> {
        let rt = self.rotation.transpose();
        let inv_s = T::one() / self.scale;
        Rigid3 { rotation: rt, translation: -(rt * self.translation) * inv_s, scale: inv_s }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let err = rotation_error(&self.rotation);
        if !(err <= 1e-9) {
            return Err(TransformError::NotRotation(err));
        }
        let s = crate::scalar::to_f64(self.scale);
        if !(s > 0.0 && s.is_finite()) {
            return Err(TransformError::BadScale(s));
        }
        Ok(())
    }

    /// Rotation angle between two rotations in radians.
    pub fn rotation_angle_to(&self, other: &Rigid3<T>) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }
}

/// Max of the orthonormality residual and `|det - 1|`.
pub fn rotation_error<T: Real>(r: &Matrix3<T>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - T::one()).abs();
    crate::scalar::to_f64(ortho.max(det))
}

/// Angle of a rotation matrix, robust near 0 and π.
pub fn rotation_angle<T: Real>(r: &Matrix3<T>) -> f64 {
    let c = crate::scalar::to_f64((r.trace() - T::one()) * lit(0.5));
    c.clamp(-1.0, 1.0).acos()
}
