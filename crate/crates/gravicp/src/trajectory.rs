//! Timestamped pose sequences: mapper output and ground truth.

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub stamp: f64,
    pub pose: RigidTransform,
}

/// A time-ordered pose sequence. Stamps are strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    entries: Vec<TrajectoryEntry>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory { entries: Vec::new() }
    }

    pub fn from_entries(entries: Vec<TrajectoryEntry>) -> Result<Self> {
        let mut out = Trajectory::new();
        for e in entries {
            out.push(e.stamp, e.pose)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, stamp: f64, pose: RigidTransform) -> Result<()> {
        if !stamp.is_finite() {
            return Err(Error::param(format!("non-finite timestamp {stamp}")));
        }
        if let Some(last) = self.entries.last() {
            if stamp <= last.stamp {
                return Err(Error::param(format!(
                    "non-increasing timestamp {stamp} after {}",
                    last.stamp
                )));
            }
        }
        self.entries.push(TrajectoryEntry { stamp, pose });
        Ok(())
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectoryEntry> {
        self.entries.last()
    }

    /// Applies the same rigid transform to every pose (left composition).
    pub fn transformed(&self, t: &RigidTransform) -> Trajectory {
        Trajectory {
            entries: self
                .entries
                .iter()
                .map(|e| TrajectoryEntry {
                    stamp: e.stamp,
                    pose: t.compose(&e.pose),
                })
                .collect(),
        }
    }
}
