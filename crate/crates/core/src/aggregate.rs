//! Averaging of per-pair masks into a master change mask per map image.

use std::collections::BTreeSet;

use crate::model::{ChangeMask, ImageRecord};
use crate::scalar::Field;

pub const DEFAULT_MIN_SUPPORT: usize = 20;
pub const DEFAULT_VOTE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("map image {map_id}: {found} masks, at least {needed} required")]
    InsufficientSupport { map_id: String, found: usize, needed: usize },
    #[error("mask {index} is {found:?}, expected {expected:?}")]
    DimensionMismatch { index: usize, expected: (u32, u32), found: (u32, u32) },
}

/// Per-pixel set counts over `support` masks; the average is `count / support`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvgRaster {
    pub width: u32,
    pub height: u32,
    pub support: usize,
    pub counts: Vec<u32>,
}

impl AvgRaster {
    /// Average at pixel index `i` in any ordered field, exact for rationals.
    pub fn value<T: Field>(&self, i: usize) -> T {
        T::from_count(u64::from(self.counts[i])) / T::from_count(self.support as u64)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.value::<f64>(i)).collect()
    }

    /// `round(avg · 65535)` per pixel.
    pub fn to_u16(&self) -> Vec<u16> {
        let s = self.support as u64;
        self.counts.iter().map(|&c| ((u64::from(c) * 65535 * 2 + s) / (2 * s)) as u16).collect()
    }
}

/// Master change mask of one map image.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterMask {
    pub map_id: String,
    pub support: usize,
    pub avg: AvgRaster,
    pub binary: ChangeMask,
}

/// Counts set bits per pixel; rejects stacks smaller than `min_support`.
pub fn aggregate_masks(map_id: &str, masks: &[ChangeMask], min_support: usize) -> Result<AvgRaster, AggregateError> {
    if masks.len() < min_support || masks.is_empty() {
        return Err(AggregateError::InsufficientSupport {
            map_id: map_id.to_string(),
            found: masks.len(),
            needed: min_support.max(1),
        });
    }
    let (w, h) = (masks[0].width, masks[0].height);
    let mut counts = vec![0u32; w as usize * h as usize];
    for (index, m) in masks.iter().enumerate() {
        if m.width != w || m.height != h || m.bits.len() != counts.len() {
            return Err(AggregateError::DimensionMismatch { index, expected: (w, h), found: (m.width, m.height) });
        }
        for (c, &b) in counts.iter_mut().zip(&m.bits) {
            *c += u32::from(b);
        }
    }
    Ok(AvgRaster { width: w, height: h, support: masks.len(), counts })
}

/// Bit set where the average reaches `vote_threshold` (inclusive).
pub fn threshold_master(map_id: &str, avg: &AvgRaster, vote_threshold: f64) -> ChangeMask {
    ChangeMask {
        image_id: map_id.to_string(),
        width: avg.width,
        height: avg.height,
        bits: (0..avg.counts.len()).map(|i| avg.value::<f64>(i) >= vote_threshold).collect(),
    }
}

/// Aggregates and thresholds in one step.
pub fn build_master(
    map_id: &str,
    masks: &[ChangeMask],
    min_support: usize,
    vote_threshold: f64,
) -> Result<MasterMask, AggregateError> {
    let avg = aggregate_masks(map_id, masks, min_support)?;
    let binary = threshold_master(map_id, &avg, vote_threshold);
    Ok(MasterMask { map_id: map_id.to_string(), support: avg.support, avg, binary })
}

/// Features with a 3D point whose pixel falls on a set bit of `mask`.
pub fn tag_changed_features(mask: &ChangeMask, img: &ImageRecord) -> BTreeSet<usize> {
    img.features
        .iter()
        .enumerate()
        .filter(|(_, f)| f.world.is_some() && mask.at_px(&f.px))
        .map(|(i, _)| i)
        .collect()
}
