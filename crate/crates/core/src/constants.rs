//! Pinned round budgets. A run on `n` points with local memory `s` must
//! finish within `C * ceil(log_s n)` rounds for its algorithm's `C`.
//!
//! The values were measured on the metering grid of the acceptance suite
//! (n up to 4000, s around n^0.6) and rounded up with some margin. Every
//! shuffle is a sort; with ample memory the sort recurses over machine ranges
//! in `O(log_s m)` levels, and near the memory limit it falls back to a merge
//! network whose depth grows with the square of the log of the machine count.

use crate::mpc::log_rounds;

pub const C_LOWDIM_RS: usize = 100;
pub const C_LOWDIM_MDS: usize = 100;
pub const C_HIGHDIM_RS: usize = 190;
pub const C_ASSIGN: usize = 150;
/// Estimate, thresholds in parallel, then assignment.
pub const C_KCENTER: usize = 340;

/// `c * ceil(log_s n)`.
pub fn round_budget(c: usize, n: usize, s: usize) -> usize {
    c * log_rounds(n, s)
}
