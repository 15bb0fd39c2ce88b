//! Mask scores: confusion counts, mean IoU, frequency-weighted IoU and F1.
//!
//! Class 0 is change (positive), class 1 background. Scores are generic over
//! [`Field`] so the exact rational values can be checked.

use serde::{Deserialize, Serialize};

use crate::model::ChangeMask;
use crate::scalar::Field;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("mask sizes differ: prediction {pred:?}, ground truth {gt:?}")]
pub struct DimensionMismatch {
    pub pred: (u32, u32),
    pub gt: (u32, u32),
}

/// Pixel counts of a binary prediction against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Confusion { tp, fp, fn_, tn }
    }

    /// `p[i][j]`: pixels of true class `i` predicted as class `j`.
    pub fn p(&self) -> [[u64; 2]; 2] {
        [[self.tp, self.fn_], [self.fp, self.tn]]
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Ground truth row sums `s_i`.
    pub fn class_sizes(&self) -> [u64; 2] {
        let p = self.p();
        [p[0][0] + p[0][1], p[1][0] + p[1][1]]
    }

    /// Prediction and ground truth swapped.
    pub fn transposed(&self) -> Confusion {
        Confusion { tp: self.tp, fp: self.fn_, fn_: self.fp, tn: self.tn }
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), |a, b| a + b)
    }
}

pub fn confusion(pred: &ChangeMask, gt: &ChangeMask) -> Result<Confusion, DimensionMismatch> {
    if !pred.same_dims(gt) || pred.bits.len() != gt.bits.len() {
        return Err(DimensionMismatch { pred: (pred.width, pred.height), gt: (gt.width, gt.height) });
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.bits.iter().zip(&gt.bits) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// IoU of class `i`, or `None` when the class is absent from both masks.
fn class_iou<T: Field>(c: &Confusion, i: usize) -> Option<T> {
    let p = c.p();
    let s_i = p[i][0] + p[i][1];
    let col = p[0][i] + p[1][i];
    let union = s_i + col - p[i][i];
    (union > 0).then(|| T::from_count(p[i][i]) / T::from_count(union))
}

/// Mean over both classes of `p_ii / (s_i + Σ_j p_ji − p_ii)`; a class absent
/// from both masks scores 1.
pub fn miou<T: Field>(c: &Confusion) -> T {
    let sum = (0..2).fold(T::zero(), |acc, i| acc + class_iou(c, i).unwrap_or_else(T::one));
    sum / T::from_count(2)
}

/// `(1/s) Σ_i s_i p_ii / (s_i + Σ_j p_ji − p_ii)`; zero for an empty confusion.
pub fn fwiou<T: Field>(c: &Confusion) -> T {
    let s = c.total();
    if s == 0 {
        return T::zero();
    }
    let sizes = c.class_sizes();
    let sum = (0..2).fold(T::zero(), |acc, i| match class_iou::<T>(c, i) {
        Some(iou) if sizes[i] > 0 => acc + T::from_count(sizes[i]) * iou,
        _ => acc,
    });
    sum / T::from_count(s)
}

/// `2TP / (2TP + FP + FN)`; 1 when there are no positives anywhere.
pub fn f1<T: Field>(c: &Confusion) -> T {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        return T::one();
    }
    T::from_count(2 * c.tp) / T::from_count(den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub fwiou: f64,
    pub miou: f64,
    pub f1: f64,
}

impl Scores {
    pub fn of(c: &Confusion) -> Self {
        Scores { fwiou: fwiou(c), miou: miou(c), f1: f1(c) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Scores of the summed confusion.
    #[default]
    Micro,
    /// Mean of per-pair scores.
    Macro,
}

/// Aggregate scores over many mask pairs; `None` for an empty list.
pub fn aggregate_scores(per_pair: &[Confusion], how: Averaging) -> Option<Scores> {
    if per_pair.is_empty() {
        return None;
    }
    Some(match how {
        Averaging::Micro => Scores::of(&per_pair.iter().copied().sum()),
        Averaging::Macro => {
            let n = per_pair.len() as f64;
            let all: Vec<Scores> = per_pair.iter().map(Scores::of).collect();
            Scores {
                fwiou: all.iter().map(|s| s.fwiou).sum::<f64>() / n,
                miou: all.iter().map(|s| s.miou).sum::<f64>() / n,
                f1: all.iter().map(|s| s.f1).sum::<f64>() / n,
            }
        }
    })
}
