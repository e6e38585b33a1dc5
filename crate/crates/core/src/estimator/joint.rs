//! Joint processing of overlapped beams on the codebook grid.
//!
//! Cells are visited left to right, top to bottom. A cell keeps the smallest
//! of its candidate delays that none of the already visited neighbors
//! (left, up-left, up, up-right) reported; if every candidate is shared with
//! a neighbor it keeps its smallest candidate.

use std::collections::BTreeSet;

use super::sic::DelaySet;
use super::EstimatorError;

/// Selected delay per beam in raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointSelection {
    pub delays: Vec<usize>,
    /// Beams whose own set was empty and that copied the nearest selected beam.
    pub filled: Vec<bool>,
    pub n_bar_h: usize,
    pub n_bar_v: usize,
}

impl JointSelection {
    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }
}

/// Runs the selection on a `n_bar_v x n_bar_h` grid of delay sets stored in
/// raster order (`m = v·n_bar_h + h`).
pub fn joint_processing(sets: &[DelaySet], n_bar_h: usize, n_bar_v: usize) -> Result<JointSelection, EstimatorError> {
    if sets.len() != n_bar_h * n_bar_v {
        return Err(EstimatorError::Length { expected: n_bar_h * n_bar_v, got: sets.len() });
    }
    let at = |h: isize, v: isize| -> Option<&DelaySet> {
        (h >= 0 && v >= 0 && (h as usize) < n_bar_h && (v as usize) < n_bar_v)
            .then(|| &sets[v as usize * n_bar_h + h as usize])
    };
    let mut chosen: Vec<Option<usize>> = Vec::with_capacity(sets.len());
    for v in 0..n_bar_v as isize {
        for h in 0..n_bar_h as isize {
            let own = at(h, v).expect("in grid");
            if own.is_empty() {
                chosen.push(None);
                continue;
            }
            let mut neighbors = BTreeSet::new();
            for (dh, dv) in [(-1, 0), (0, -1), (-1, -1), (1, -1)] {
                if let Some(s) = at(h + dh, v + dv) {
                    neighbors.extend(s.delays.iter().copied());
                }
            }
            let fresh = own.delays.iter().copied().filter(|q| !neighbors.contains(q)).min();
            chosen.push(fresh.or_else(|| own.min()));
        }
    }
    let valid: Vec<usize> = chosen.iter().enumerate().filter_map(|(m, c)| c.map(|_| m)).collect();
    if valid.is_empty() {
        return Err(EstimatorError::NoDetections);
    }
    let mut delays = Vec::with_capacity(chosen.len());
    let mut filled = Vec::with_capacity(chosen.len());
    for (m, c) in chosen.iter().enumerate() {
        match c {
            Some(q) => {
                delays.push(*q);
                filled.push(false);
            }
            None => {
                let src = nearest_valid(&valid, m);
                delays.push(chosen[src].expect("valid"));
                filled.push(true);
            }
        }
    }
    Ok(JointSelection { delays, filled, n_bar_h, n_bar_v })
}

/// Nearest valid raster index; ties go to the earlier one.
pub(crate) fn nearest_valid(valid: &[usize], m: usize) -> usize {
    let pos = valid.partition_point(|&x| x < m);
    let after = valid.get(pos).copied();
    let before = pos.checked_sub(1).map(|p| valid[p]);
    match (before, after) {
        (Some(b), Some(a)) => {
            if m - b <= a - m {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => unreachable!("valid is non-empty"),
    }
}
