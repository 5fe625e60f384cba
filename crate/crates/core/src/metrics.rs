//! Energy-reduction metrics against an all-key reference rollout, and Pareto checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::EpisodeTrace;

fn check_pair(trace: &EpisodeTrace, reference: &EpisodeTrace) -> Result<()> {
    if trace.meta.seed != reference.meta.seed || trace.len() != reference.len() {
        return Err(Error::Domain(format!(
            "trace (seed {}, {} frames) and reference (seed {}, {} frames) cover different sequences",
            trace.meta.seed,
            trace.len(),
            reference.meta.seed,
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Domain("empty reference trace".into()));
    }
    Ok(())
}

/// `1 - E(trace) / E(reference)`, with decision overhead counted in both.
pub fn energy_reduction(trace: &EpisodeTrace, reference: &EpisodeTrace) -> Result<f64> {
    check_pair(trace, reference)?;
    Ok(1.0 - trace.total_consumed_mj() / reference.total_consumed_mj())
}

/// Accumulated energy consumption reduction after each frame.
pub fn aecr(trace: &EpisodeTrace, reference: &EpisodeTrace) -> Result<Vec<f64>> {
    check_pair(trace, reference)?;
    let mut used = 0.0;
    let mut base = 0.0;
    Ok(trace
        .records
        .iter()
        .zip(&reference.records)
        .map(|(r, b)| {
            used += r.consumed().total_mj;
            base += b.consumed().total_mj;
            1.0 - used / base
        })
        .collect())
}

/// A policy's position in the accuracy / energy-reduction plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub accuracy: f64,
    pub reduction: f64,
}

/// Tolerances for [`dominates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoTolerance {
    pub accuracy: f64,
    pub reduction: f64,
}

impl Default for ParetoTolerance {
    fn default() -> Self {
        Self {
            accuracy: 0.02,
            reduction: 0.02,
        }
    }
}

/// True when `b` is at least as good as `a` on both axes and better than `a`
/// by more than the tolerance on at least one.
pub fn dominates(b: TradeoffPoint, a: TradeoffPoint, tol: ParetoTolerance) -> bool {
    b.accuracy >= a.accuracy
        && b.reduction >= a.reduction
        && (b.accuracy > a.accuracy + tol.accuracy || b.reduction > a.reduction + tol.reduction)
}

/// Indices of the points not dominated by any other point (zero tolerance).
pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<usize> {
    let strict = ParetoTolerance {
        accuracy: 0.0,
        reduction: 0.0,
    };
    (0..points.len())
        .filter(|&i| {
            !points
                .iter()
                .enumerate()
                .any(|(j, &p)| j != i && dominates(p, points[i], strict) && p != points[i])
        })
        .collect()
}
