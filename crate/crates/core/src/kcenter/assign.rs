//! Point-to-center assignment for a known cost scale.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{sq_dist, Dataset};
use crate::highdim_rs::aggregate_min;
use crate::lowdim_rs::{cell_groups, coarse_cell, overflow_as_bucket};
use crate::mpc::{MpcComputation, MpcConfig, ResourceReport};
use crate::scalar::Scalar;

/// The first search window is `WINDOW_FACTOR * tau`; it doubles until every
/// point finds a center.
pub const WINDOW_FACTOR: f64 = 4.0;
const MAX_WIDENINGS: usize = 64;
const CENTER_TAG: u64 = 1 << 63;

fn check_inputs<T: Scalar>(p: &Dataset<T>, c: &Dataset<T>, tau: T, eps: T) -> Result<()> {
    if c.is_empty() {
        return Err(Error::usage("no centers to assign to"));
    }
    if c.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: c.dim(),
        });
    }
    if !(tau > T::zero() && eps > T::zero()) {
        return Err(Error::usage("tau and eps must be positive"));
    }
    Ok(())
}

/// Nearest center of every point. Centers are copied to the `3^d` cells of
/// side `w` around their own, so each point sees every center within `w`.
pub fn assign_lowdim<T: Scalar>(
    p: &Dataset<T>,
    c: &Dataset<T>,
    tau: T,
    eps: T,
    cfg: &MpcConfig,
) -> Result<(Vec<usize>, ResourceReport)> {
    check_inputs(p, c, tau, eps)?;
    let mut assignment = vec![usize::MAX; p.len()];
    let mut report: Option<ResourceReport> = None;
    let mut w = T::of(WINDOW_FACTOR) * tau;
    for _ in 0..MAX_WIDENINGS {
        let open: Vec<usize> = (0..p.len()).filter(|&i| assignment[i] == usize::MAX).collect();
        if open.is_empty() {
            break;
        }
        let (found, rep) = window_pass(p, &open, c, w, cfg)?;
        for (i, j) in found {
            assignment[i] = j;
        }
        report = Some(match report {
            Some(r) => r.then(&rep),
            None => rep,
        });
        w = w + w;
    }
    Ok((assignment, report.unwrap_or_default()))
}

fn window_pass<T: Scalar>(
    p: &Dataset<T>,
    open: &[usize],
    c: &Dataset<T>,
    w: T,
    cfg: &MpcConfig,
) -> Result<(Vec<(usize, usize)>, ResourceReport)> {
    let mut input: Vec<(u64, crate::geometry::Point<T>)> = open.iter().map(|&i| (i as u64, p[i].clone())).collect();
    input.extend(c.iter().enumerate().map(|(j, x)| (CENTER_TAG | j as u64, x.clone())));
    // A crowded cell is split into slots of at most `per_slot` points, and
    // every center bound for the cell is copied into each slot. The last key
    // coordinate is the slot.
    let unit = 2 * p.dim() + 3;
    let per_slot = (cfg.local_memory / (4 * unit)).max(1);
    let mut crowd: HashMap<Vec<i64>, usize> = HashMap::new();
    for &i in open {
        *crowd.entry(coarse_cell(&p[i], w)).or_default() += 1;
    }
    let slots = |cell: &Vec<i64>| crowd.get(cell).map_or(1, |c| c.div_ceil(per_slot)) as i64;
    let comp = MpcComputation::scatter(input, cfg.clone())?;
    let mut comp = comp.map_local(|_, buf| {
        let mut out = Vec::new();
        for (tag, x) in buf {
            let home = coarse_cell(&x, w);
            if tag & CENTER_TAG == 0 {
                let mut key = home.clone();
                key.push(tag as i64 % slots(&home));
                out.push((key, (tag, x)));
                continue;
            }
            for code in 0..3usize.pow(home.len() as u32) {
                let mut k = code;
                let cell: Vec<i64> = home
                    .iter()
                    .map(|&h| {
                        let o = (k % 3) as i64 - 1;
                        k /= 3;
                        h + o
                    })
                    .collect();
                if !crowd.contains_key(&cell) {
                    continue;
                }
                for slot in 0..slots(&cell) {
                    let mut key = cell.clone();
                    key.push(slot);
                    out.push((key, (tag, x.clone())));
                }
            }
        }
        out
    })?;
    comp.shuffle_by_key(|r| r.0.clone()).map_err(overflow_as_bucket)?;
    let w2 = w * w;
    let comp = comp.map_local(|_, buf| {
        let mut out: Vec<(u64, u64)> = Vec::new();
        for (_, recs) in cell_groups(buf) {
            let (centers, points): (Vec<_>, Vec<_>) = recs.iter().partition(|r| r.0 & CENTER_TAG != 0);
            for q in points {
                let best = centers
                    .iter()
                    .map(|c| (sq_dist(&q.1, &c.1), c.0 & !CENTER_TAG))
                    .filter(|(d2, _)| *d2 <= w2)
                    .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
                if let Some((_, j)) = best {
                    out.push((q.0, j));
                }
            }
        }
        out
    })?;
    let report = comp.report();
    let found = comp.gather().into_iter().map(|(i, j)| (i as usize, j as usize)).collect();
    Ok((found, report))
}

/// Assignment through approximate balls of radius `r = WINDOW_FACTOR * tau`:
/// every point takes the smallest center id in its ball, so its distance is
/// at most `r (1 + c_agg / eps)`.
pub fn assign_highdim<T: Scalar>(
    p: &Dataset<T>,
    c: &Dataset<T>,
    tau: T,
    eps: T,
    cfg: &MpcConfig,
) -> Result<(Vec<usize>, ResourceReport)> {
    check_inputs(p, c, tau, eps)?;
    let mut assignment = vec![usize::MAX; p.len()];
    let mut report: Option<ResourceReport> = None;
    let mut r = T::of(WINDOW_FACTOR) * tau;
    for _ in 0..MAX_WIDENINGS {
        let open: Vec<usize> = (0..p.len()).filter(|&i| assignment[i] == usize::MAX).collect();
        if open.is_empty() {
            break;
        }
        let mut all: Vec<crate::geometry::Point<T>> = c.points().to_vec();
        all.extend(open.iter().map(|&i| p[i].clone()));
        let labels: Vec<u64> = (0..all.len()).map(|i| if i < c.len() { i as u64 } else { u64::MAX }).collect();
        let ell = T::of(crate::highdim_rs::DEFAULT_C_AGG) * r / eps;
        let (mins, _, rep) = aggregate_min(&all, &labels, r, ell, c.len(), cfg)?;
        for (slot, &i) in open.iter().enumerate() {
            let (label, _) = mins[c.len() + slot];
            if label != u64::MAX {
                assignment[i] = label as usize;
            }
        }
        report = Some(match report {
            Some(x) => x.then(&rep),
            None => rep,
        });
        r = r + r;
    }
    Ok((assignment, report.unwrap_or_default()))
}

/// Largest distance from a point to its assigned center.
pub fn assignment_cost<T: Scalar>(p: &Dataset<T>, c: &Dataset<T>, assignment: &[usize]) -> T {
    (0..p.len())
        .into_par_iter()
        .map(|i| sq_dist(&p[i], &c[assignment[i]]).sqrt())
        .reduce(T::zero, T::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MpcConfig {
        MpcConfig::new(1 << 12, 4, 2).unwrap()
    }

    #[test]
    fn lowdim_examples() {
        let p = Dataset::from_values(&[0.0, 2.0, 10.0]).unwrap();
        let c = Dataset::from_values(&[1.0, 10.0]).unwrap();
        let (a, _) = assign_lowdim(&p, &c, 1.0, 0.1, &cfg()).unwrap();
        assert_eq!(a, vec![0, 0, 1]);
        assert!(assignment_cost(&p, &c, &a) <= 1.4);
        let one = Dataset::from_values(&[50.0]).unwrap();
        let (a, _) = assign_lowdim(&p, &one, 1.0, 0.1, &cfg()).unwrap();
        assert_eq!(a, vec![0, 0, 0]);
        assert_eq!(assignment_cost(&p, &one, &a), 50.0);
        let (a, _) = assign_lowdim(&p, &p, 1.0, 0.1, &cfg()).unwrap();
        assert_eq!(a, vec![0, 1, 2]);
    }

    #[test]
    fn highdim_examples() {
        let p = Dataset::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0], vec![100.0, 0.0], vec![100.0, 0.5]]).unwrap();
        let c = Dataset::from_rows(&[vec![0.2, 0.0], vec![100.0, 0.2]]).unwrap();
        let (a, _) = assign_highdim(&p, &c, 1.0, 0.5, &cfg()).unwrap();
        assert_eq!(a, vec![0, 0, 1, 1]);
        let single = Dataset::from_rows(&[vec![3.0, 0.0]]).unwrap();
        let (a, _) = assign_highdim(&single, &c, 1.0, 0.5, &cfg()).unwrap();
        assert_eq!(a, vec![0]);
        let (a, _) = assign_highdim(&p, &p, 1.0, 0.5, &cfg()).unwrap();
        let ell = 4.0 / 0.5;
        assert!(assignment_cost(&p, &p, &a) <= 4.0 + ell);
    }
}
