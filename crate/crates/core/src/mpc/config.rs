use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound on the local memory of a machine, in units.
pub const DEFAULT_MEMORY_FLOOR: usize = 64;
/// Default per-round message budget factor: a machine sends and receives at most `c_msg * s` units.
pub const DEFAULT_C_MSG: usize = 4;
/// Default round factor for sorting and shuffling.
pub const DEFAULT_C_SORT: usize = 12;
/// Default round factor for broadcast and converge-cast.
pub const DEFAULT_C_B: usize = 2;

/// Parameters of a simulated MPC run.
///
/// Memory is counted in abstract units: one scalar, one label or one
/// coordinate is one unit, so a d-dimensional point costs d units.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub local_memory: usize,
    pub machines: usize,
    pub enforce_limits: bool,
    pub seed: u64,
    pub c_msg: usize,
    pub c_sort: usize,
    pub c_b: usize,
    pub memory_floor: usize,
}

impl MpcConfig {
    pub fn new(local_memory: usize, machines: usize, seed: u64) -> Result<Self> {
        Self::with_floor(local_memory, machines, seed, DEFAULT_MEMORY_FLOOR)
    }

    /// Like [`MpcConfig::new`] with a custom memory floor (tiny configurations in tests).
    pub fn with_floor(local_memory: usize, machines: usize, seed: u64, floor: usize) -> Result<Self> {
        let cfg = MpcConfig {
            local_memory,
            machines,
            enforce_limits: true,
            seed,
            c_msg: DEFAULT_C_MSG,
            c_sort: DEFAULT_C_SORT,
            c_b: DEFAULT_C_B,
            memory_floor: floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A configuration that holds `input_units` at quarter occupancy, the
    /// headroom the sorting network needs.
    pub fn for_input(input_units: usize, local_memory: usize, seed: u64) -> Result<Self> {
        let machines = (4 * input_units).div_ceil(local_memory.max(1)).max(1);
        Self::new(local_memory, machines, seed)
    }

    pub fn with_enforcement(mut self, enforce: bool) -> Self {
        self.enforce_limits = enforce;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines == 0 {
            return Err(Error::usage("machine count must be positive"));
        }
        if self.local_memory < self.memory_floor {
            return Err(Error::usage(format!(
                "local memory {} is below the floor of {} units",
                self.local_memory, self.memory_floor
            )));
        }
        if self.c_msg == 0 || self.c_sort == 0 || self.c_b == 0 {
            return Err(Error::usage("round and message constants must be positive"));
        }
        Ok(())
    }

    /// Outgoing or incoming volume a machine may move in one round.
    pub fn message_budget(&self) -> usize {
        self.c_msg * self.local_memory
    }

    /// `max(1, ceil(log_s n))`, the unit in which round budgets are stated.
    pub fn log_rounds(&self, n: usize) -> usize {
        log_rounds(n, self.local_memory)
    }

    pub fn sort_round_budget(&self, n: usize) -> usize {
        self.c_sort * self.log_rounds(n)
    }

    pub fn broadcast_round_budget(&self, n: usize) -> usize {
        self.c_b * self.log_rounds(n)
    }
}

/// `max(1, ceil(log_s n))` computed with integer arithmetic.
pub fn log_rounds(n: usize, s: usize) -> usize {
    let s = s.max(2) as u128;
    let n = n as u128;
    let mut r = 0usize;
    let mut cap = 1u128;
    while cap < n {
        cap = cap.saturating_mul(s);
        r += 1;
    }
    r.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_rounds_matches_ceiling_of_log() {
        assert_eq!(log_rounds(1, 64), 1);
        assert_eq!(log_rounds(64, 64), 1);
        assert_eq!(log_rounds(65, 64), 2);
        assert_eq!(log_rounds(4096, 64), 2);
        assert_eq!(log_rounds(4097, 64), 3);
    }

    #[test]
    fn validation() {
        assert!(MpcConfig::new(32, 4, 0).is_err());
        assert!(MpcConfig::new(64, 0, 0).is_err());
        let cfg = MpcConfig::for_input(1000, 100, 7).unwrap();
        assert_eq!(cfg.machines, 40);
        assert_eq!(cfg.message_budget(), 400);
    }
}
