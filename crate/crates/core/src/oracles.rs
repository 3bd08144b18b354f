//! Exhaustive ground truth for small inputs.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::geometry::{dist, min_enclosing_ball, radius_fits, Dataset, Point};
use crate::scalar::Scalar;

/// Input limits beyond which the oracles refuse to answer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleBudget {
    pub max_n: usize,
    pub max_d: usize,
    pub timeout: Option<Duration>,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_n: 12,
            max_d: 3,
            timeout: None,
        }
    }
}

impl OracleBudget {
    fn admit<T: Scalar>(&self, p: &[Point<T>]) -> Result<()> {
        if p.len() > self.max_n {
            return Err(Error::OracleRefusal(format!("{} points exceed the limit of {}", p.len(), self.max_n)));
        }
        if let Some(x) = p.first() {
            if x.dim() > self.max_d {
                return Err(Error::OracleRefusal(format!(
                    "dimension {} exceeds the limit of {}",
                    x.dim(),
                    self.max_d
                )));
            }
        }
        if p.len() > 20 {
            return Err(Error::OracleRefusal("more than 20 points".into()));
        }
        Ok(())
    }
}

struct Clock {
    start: Instant,
    limit: Option<Duration>,
}

impl Clock {
    fn new(limit: Option<Duration>) -> Self {
        Clock {
            start: Instant::now(),
            limit,
        }
    }

    fn check(&self) -> Result<()> {
        match self.limit {
            Some(l) if self.start.elapsed() > l => Err(Error::OracleRefusal("time limit reached".into())),
            _ => Ok(()),
        }
    }
}

/// Enclosing-ball radius of every subset, indexed by bitmask (empty set: 0).
fn subset_radii<T: Scalar>(p: &[Point<T>], clock: &Clock) -> Result<Vec<T>> {
    let n = p.len();
    let mut radii = vec![T::zero(); 1 << n];
    for (mask, r) in radii.iter_mut().enumerate().skip(1) {
        if mask % 256 == 0 {
            clock.check()?;
        }
        let sub: Vec<Point<T>> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| p[i].clone()).collect();
        *r = min_enclosing_ball(&sub)?.radius;
    }
    Ok(radii)
}

/// Fewest feasible subsets covering each mask, by dynamic programming over
/// masks in increasing order.
fn cover_numbers(n: usize, feasible: &[bool]) -> Vec<u32> {
    let full = (1usize << n) - 1;
    let mut best = vec![u32::MAX; full + 1];
    best[0] = 0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        // Enumerate submasks that contain the lowest element.
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let part = sub | low;
            if feasible[part] {
                let prev = best[mask ^ part];
                if prev != u32::MAX {
                    best[mask] = best[mask].min(prev + 1);
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    best
}

/// Minimum number of radius-`tau` balls, centred anywhere, covering `p`.
pub fn oracle_mds_size<T: Scalar>(p: &Dataset<T>, tau: T) -> Result<usize> {
    oracle_mds_size_with(p, tau, &OracleBudget::default())
}

pub fn oracle_mds_size_with<T: Scalar>(p: &Dataset<T>, tau: T, budget: &OracleBudget) -> Result<usize> {
    budget.admit(p)?;
    let clock = Clock::new(budget.timeout);
    let radii = subset_radii(p, &clock)?;
    let feasible: Vec<bool> = radii.iter().map(|&r| radius_fits(r, tau)).collect();
    Ok(cover_numbers(p.len(), &feasible)[(1 << p.len()) - 1] as usize)
}

/// Exact k-center optimum: the least over partitions into at most `k` parts
/// of the largest enclosing-ball radius.
pub fn oracle_kcenter_opt<T: Scalar>(p: &Dataset<T>, k: usize) -> Result<T> {
    oracle_kcenter_opt_with(p, k, &OracleBudget::default())
}

pub fn oracle_kcenter_opt_with<T: Scalar>(p: &Dataset<T>, k: usize, budget: &OracleBudget) -> Result<T> {
    if k == 0 {
        return Err(Error::usage("k must be positive"));
    }
    budget.admit(p)?;
    let clock = Clock::new(budget.timeout);
    let n = p.len();
    let radii = subset_radii(p, &clock)?;
    let full = (1usize << n) - 1;
    // cost[mask] for j parts, updated in place for j = 1..k.
    let mut cost: Vec<T> = radii.clone();
    for _ in 1..k.min(n) {
        clock.check()?;
        let mut next = cost.clone();
        for (mask, slot) in next.iter_mut().enumerate().skip(1) {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            let mut sub = rest;
            loop {
                let part = sub | low;
                if part != mask {
                    let c = radii[part].max(cost[mask ^ part]);
                    if c < *slot {
                        *slot = c;
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        cost = next;
    }
    Ok(cost[full])
}

/// Every enclosing-ball radius over nonempty subsets, sorted and deduplicated.
pub fn candidate_radii<T: Scalar>(p: &Dataset<T>) -> Result<Vec<T>> {
    let budget = OracleBudget::default();
    budget.admit(p)?;
    let mut r = subset_radii(p, &Clock::new(None))?;
    r.remove(0);
    r.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    r.dedup();
    Ok(r)
}

/// Exact independence (pairwise `> tau`) and domination radius of `s` within
/// `p`. An empty `s` has infinite radius.
pub fn verify_ruling_set<T: Scalar>(p: &Dataset<T>, s: &[Point<T>], tau: T) -> Result<(bool, T)> {
    for x in s {
        if x.dim() != p.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                found: x.dim(),
            });
        }
        if !p.iter().any(|q| q == x) {
            return Err(Error::usage("the set is not a subset of the input"));
        }
    }
    let mut independent = true;
    for (i, a) in s.iter().enumerate() {
        for b in &s[i + 1..] {
            if dist(a, b)? <= tau {
                independent = false;
            }
        }
    }
    let mut radius = if s.is_empty() { T::infinity() } else { T::zero() };
    if !s.is_empty() {
        for q in p.iter() {
            let mut near = T::infinity();
            for x in s {
                near = near.min(dist(q, x)?);
            }
            radius = radius.max(near);
        }
    }
    Ok((independent, radius))
}
