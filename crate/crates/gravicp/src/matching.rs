//! Correspondence search between a transformed scan and the map: exact
//! nearest-neighbor pairing with a hard distance gate and a distance-quantile
//! trim for outlier rejection.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, UnitVector3};
use crate::kdtree::KdTree;

/// Outlier rejection parameters. Pairs farther apart than `max_distance` are
/// dropped; of the remainder only the `trim_ratio` fraction with smallest
/// distance is kept.
#[derive(Debug, Clone, Copy)]
pub struct MatchParams {
    pub max_distance: f64,
    pub trim_ratio: f64,
}

impl MatchParams {
    pub fn new(max_distance: f64, trim_ratio: f64) -> Result<Self> {
        if !(max_distance > 0.0) {
            return Err(Error::param(format!(
                "max_distance must be positive, got {max_distance}"
            )));
        }
        if !(trim_ratio > 0.0 && trim_ratio <= 1.0) {
            return Err(Error::param(format!(
                "trim_ratio must be in (0, 1], got {trim_ratio}"
            )));
        }
        Ok(MatchParams { max_distance, trim_ratio })
    }
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            max_distance: 1.0,
            trim_ratio: 0.9,
        }
    }
}

/// One matched pair: scan point, its nearest map point, that map point's
/// normal, and their separation.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence {
    pub scan_point: Point3,
    pub map_point: Point3,
    pub normal: UnitVector3,
    pub distance: f64,
}

/// Matched pairs ordered by scan index; this order is also the summation
/// order used by the minimizer, so results are bit-stable across runs.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    /// Wraps an explicit pairing, e.g. one generated analytically. Callers
    /// are responsible for `distance` matching the point separation.
    pub fn from_pairs(pairs: Vec<Correspondence>) -> Self {
        CorrespondenceSet { pairs }
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn kept_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Builds the exact nearest-neighbor index over the map points.
pub fn build_index(map: &PointCloud) -> Result<KdTree> {
    KdTree::build(map.points())
}

/// Pairs every scan point with its nearest map point, then applies the
/// distance gate and quantile trim. Pairs whose map point was flagged
/// degenerate by normal estimation are dropped before gating.
pub fn match_scan(
    scan: &PointCloud,
    index: &KdTree,
    map: &PointCloud,
    params: &MatchParams,
) -> Result<CorrespondenceSet> {
    let normals = map.normals().ok_or(Error::MissingNormals)?;
    debug_assert_eq!(index.len(), map.len());

    // (distance, scan index, map index) for gate survivors.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(scan.len());
    for (i, p) in scan.points().iter().enumerate() {
        let n = index.nearest(p);
        if map.is_degenerate(n.index) {
            continue;
        }
        if n.distance > params.max_distance {
            continue;
        }
        candidates.push((n.distance, i, n.index));
    }
    if candidates.is_empty() {
        return Err(Error::NoCorrespondences);
    }

    let keep = ((candidates.len() as f64) * params.trim_ratio).ceil() as usize;
    let keep = keep.clamp(1, candidates.len());
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(keep);
    // Restore scan order for a documented, deterministic summation order.
    candidates.sort_unstable_by_key(|c| c.1);

    let pairs = candidates
        .into_iter()
        .map(|(distance, scan_idx, map_idx)| Correspondence {
            scan_point: scan.points()[scan_idx],
            map_point: map.points()[map_idx],
            normal: normals[map_idx],
            distance,
        })
        .collect();
    Ok(CorrespondenceSet { pairs })
}
