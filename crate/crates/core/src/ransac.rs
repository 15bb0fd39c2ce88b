//! Seeded RANSAC loop shared by the homography, fundamental matrix and rigid
//! estimators.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A model family fitted from index subsets of some fixed data set.
pub(crate) trait Estimator {
    type Model: Clone;

    /// Minimal sample size.
    fn sample_size(&self) -> usize;

    /// Number of data points.
    fn len(&self) -> usize;

    /// Fits a model to the given points; `None` for degenerate subsets.
    fn fit(&self, idx: &[usize]) -> Option<Self::Model>;

    /// Residual of point `i` under `model`, compared against the threshold.
    fn residual(&self, model: &Self::Model, i: usize) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LoopParams {
    pub threshold: f64,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct Consensus<M> {
    pub model: M,
    /// Ascending point indices with residual `<= threshold` under `model`.
    pub inliers: Vec<usize>,
}

/// Iterations needed to draw one all-inlier sample with the given confidence.
pub(crate) fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> usize {
    if inlier_ratio >= 1.0 {
        return 1;
    }
    if inlier_ratio <= 0.0 {
        return usize::MAX;
    }
    let good = inlier_ratio.powi(sample_size as i32);
    let denom = (1.0 - good).ln();
    if denom >= 0.0 || !denom.is_finite() {
        return usize::MAX;
    }
    let n = ((1.0 - confidence).ln() / denom).ceil();
    if n.is_finite() && n >= 1.0 {
        n.min(usize::MAX as f64) as usize
    } else {
        1
    }
}

fn score<E: Estimator>(est: &E, model: &E::Model, threshold: f64) -> (Vec<usize>, f64) {
    let mut inliers = Vec::new();
    let mut cost = 0.0;
    for i in 0..est.len() {
        let r = est.residual(model, i);
        if r <= threshold {
            inliers.push(i);
            cost += r * r;
        }
    }
    (inliers, cost)
}

fn better(count: usize, cost: f64, best: &Option<(usize, f64)>) -> bool {
    match best {
        None => true,
        Some((bc, bcost)) => count > *bc || (count == *bc && cost < *bcost),
    }
}

/// Runs the hypothesise-and-verify loop, then refits on the consensus set
/// until the inlier count stops growing (at most three rounds).
///
/// Returns `None` when no hypothesis reaches `sample_size` inliers.
pub(crate) fn run<E: Estimator>(est: &E, p: &LoopParams) -> Option<Consensus<E::Model>> {
    let n = est.len();
    let s = est.sample_size();
    if n < s || s == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut best: Option<(E::Model, Vec<usize>, f64)> = None;
    let mut best_key: Option<(usize, f64)> = None;
    let mut needed = p.max_iters;
    let mut iterations = 0;
    while iterations < needed.min(p.max_iters) {
        iterations += 1;
        let mut idx = sample(&mut rng, n, s).into_vec();
        idx.sort_unstable();
        let Some(model) = est.fit(&idx) else { continue };
        let (inliers, cost) = score(est, &model, p.threshold);
        if better(inliers.len(), cost, &best_key) {
            best_key = Some((inliers.len(), cost));
            needed = required_iterations(inliers.len() as f64 / n as f64, s, p.confidence);
            best = Some((model, inliers, cost));
        }
    }
    let (mut model, mut inliers, mut cost) = best?;
    for _ in 0..3 {
        if inliers.len() <= s {
            break;
        }
        let Some(refit) = est.fit(&inliers) else { break };
        let (ri, rc) = score(est, &refit, p.threshold);
        let grew = ri.len() > inliers.len();
        if ri.len() > inliers.len() || (ri.len() == inliers.len() && rc <= cost) {
            model = refit;
            inliers = ri;
            cost = rc;
        }
        if !grew {
            break;
        }
    }
    if inliers.len() < s {
        return None;
    }
    Some(Consensus { model, inliers })
}
