//! Approximate minimum dominating sets by shifted face hashing, with an
//! exact solver inside every bucket.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geohash::{face_hash, BucketId, FaceHashParams};
use crate::geometry::{dist_to_set, Dataset, Point};
use crate::lowdim_rs::{
    cell_groups, cell_memory_requirement, check_tau_eps, coarse_cell, mpc_rounding, replicate_to_cells, round_dataset,
    rounding_grid,
};
use crate::mpc::{MpcConfig, ResourceReport};
use crate::scalar::Scalar;
use crate::setcover::{feasible_subsets, min_cover, MAX_COVER_POINTS};

/// Default number of points a bucket may hold for the exact solver.
pub const DEFAULT_BUCKET_CAPACITY: usize = 24;
/// Default cap on the number of enumerated shift vectors.
pub const DEFAULT_SHIFT_CAP: u64 = 1_000_000;
/// Default constant in `ell = c_mds * d^3.5 * beta / eps`.
pub const DEFAULT_C_MDS: f64 = 1.0;

/// The shift vectors `{0, 4b, ..., 4b (T - 1)}^d`.
#[derive(Clone, Debug, Serialize)]
pub struct ShiftGrid<T: Scalar = f64> {
    pub dim: usize,
    pub tau: T,
    /// `b = d beta + tau`.
    pub b: T,
    /// Number of shift values per axis.
    pub t: u64,
    /// Constant actually used for `ell`, after raising it to meet `T >= d (d + 1) / eps`.
    pub c_mds: f64,
    pub hash: FaceHashParams<T>,
}

impl<T: Scalar> ShiftGrid<T> {
    pub fn new(dim: usize, tau: T, eps: T) -> Result<Self> {
        Self::with_c_mds(dim, tau, eps, DEFAULT_C_MDS)
    }

    pub fn with_c_mds(dim: usize, tau: T, eps: T, c_mds: f64) -> Result<Self> {
        check_tau_eps(tau, eps)?;
        if dim == 0 {
            return Err(Error::usage("dimension must be positive"));
        }
        if !(c_mds > 0.0) {
            return Err(Error::usage("c_mds must be positive"));
        }
        let d = dim as f64;
        let (tau64, eps64) = (tau.as_f64(), eps.as_f64());
        let beta = 2.0 * tau64;
        let b = d * beta + tau64;
        let required = (d * (d + 1.0) / eps64 - 1e-9).ceil().max(1.0);
        let per_axis = |c: f64| (c * d.powi(3) * beta / eps64 / (4.0 * b)).floor();
        let mut c = c_mds;
        if per_axis(c) < required {
            c = required * 4.0 * b * eps64 / (d.powi(3) * beta) * (1.0 + 1e-9);
        }
        let t = per_axis(c) as u64;
        let ell = T::of(c * d.powf(3.5) * beta / eps64);
        let hash = FaceHashParams::new(dim, T::of(beta), ell)?;
        Ok(ShiftGrid {
            dim,
            tau,
            b: T::of(b),
            t,
            c_mds: c,
            hash,
        })
    }

    /// `T^d`, or `None` on overflow.
    pub fn shift_count(&self) -> Option<u64> {
        self.t.checked_pow(self.dim as u32)
    }

    /// Shift number `k` in mixed-radix order, first axis fastest.
    pub fn shift(&self, mut k: u64) -> Point<T> {
        let step = T::of(4.0) * self.b;
        let coords = (0..self.dim)
            .map(|_| {
                let j = k % self.t;
                k /= self.t;
                T::of(j as f64) * step
            })
            .collect();
        Point::new(coords).expect("finite shift")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DominatingSetResult<T: Scalar = f64> {
    pub centers: Dataset<T>,
    pub radius_certified: T,
    pub size: usize,
    pub chosen_shift: Point<T>,
    /// `|D_v|` for every enumerated shift.
    pub shift_sizes: Vec<u64>,
}

/// Exact maximum over `p` of the distance to the nearest point of `c`.
pub fn certify_domination<T: Scalar>(p: &Dataset<T>, c: &Dataset<T>) -> Result<T> {
    if c.is_empty() {
        return Err(Error::usage("cannot certify against an empty center set"));
    }
    if p.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: c.dim(),
        });
    }
    Ok(p.par_iter()
        .map(|x| dist_to_set(x, c))
        .reduce(T::zero, |a, b| a.max(b)))
}

fn exact_cover<T: Scalar>(s: &[Point<T>], tau: T) -> Vec<Point<T>> {
    let subsets = feasible_subsets(s, tau);
    let masks: Vec<u64> = subsets.iter().map(|f| f.0).collect();
    let universe = if s.len() == 64 { u64::MAX } else { (1u64 << s.len()) - 1 };
    min_cover(universe, &masks)
        .expect("singletons are always feasible")
        .into_iter()
        .map(|i| subsets[i].1.clone())
        .collect()
}

/// Minimum number of balls of radius `tau` covering `s`, with their centres.
pub fn exact_bucket_mds<T: Scalar>(s: &Dataset<T>, tau: T) -> Result<Dataset<T>> {
    exact_bucket_mds_with_capacity(s, tau, DEFAULT_BUCKET_CAPACITY)
}

pub fn exact_bucket_mds_with_capacity<T: Scalar>(s: &Dataset<T>, tau: T, capacity: usize) -> Result<Dataset<T>> {
    if !(tau >= T::zero()) {
        return Err(Error::usage(format!("tau must be nonnegative, got {tau}")));
    }
    let capacity = capacity.min(MAX_COVER_POINTS);
    if s.len() > capacity {
        return Err(Error::BucketOverflow {
            bucket: format!("{} points", s.len()),
            required: s.len(),
            capacity,
        });
    }
    Dataset::new(exact_cover(s, tau))
}

/// Options of [`approx_mds_with`].
#[derive(Clone, Copy, Debug)]
pub struct MdsOptions {
    pub bucket_capacity: usize,
    pub shift_cap: u64,
    pub c_mds: f64,
}

impl Default for MdsOptions {
    fn default() -> Self {
        MdsOptions {
            bucket_capacity: DEFAULT_BUCKET_CAPACITY,
            shift_cap: DEFAULT_SHIFT_CAP,
            c_mds: DEFAULT_C_MDS,
        }
    }
}

type Rec<T> = (u64, Point<T>);

/// Buckets under shift `v` whose anchor falls in `cell`, as sorted lists of
/// positions into `recs`.
fn owned_buckets<T: Scalar>(
    recs: &[Rec<T>],
    cell: &[i64],
    v: &Point<T>,
    grid: &ShiftGrid<T>,
    side: T,
) -> Vec<Vec<usize>> {
    let neg = Point::new(v.coords().iter().map(|&c| -c).collect()).expect("finite shift");
    let mut buckets: BTreeMap<BucketId, Vec<usize>> = BTreeMap::new();
    for (k, r) in recs.iter().enumerate() {
        let moved = r.1.translate(v).expect("dimension checked");
        buckets.entry(face_hash(&moved, &grid.hash)).or_default().push(k);
    }
    buckets
        .into_iter()
        .filter(|(id, _)| {
            let anchor = id.anchor(&grid.hash).translate(&neg).expect("dimension checked");
            coarse_cell(&anchor, side) == cell
        })
        .map(|(_, members)| members)
        .collect()
}

struct BucketSolver<T: Scalar> {
    tau: T,
    capacity: usize,
    memo: HashMap<Vec<u64>, Vec<Point<T>>>,
}

impl<T: Scalar> BucketSolver<T> {
    fn solve(&mut self, recs: &[Rec<T>], members: &[usize]) -> Result<&Vec<Point<T>>> {
        let mut key: Vec<u64> = members.iter().map(|&k| recs[k].0).collect();
        key.sort_unstable();
        if members.len() > self.capacity {
            return Err(Error::BucketOverflow {
                bucket: format!("{} points", members.len()),
                required: members.len(),
                capacity: self.capacity,
            });
        }
        let tau = self.tau;
        Ok(self.memo.entry(key).or_insert_with(|| {
            let pts: Vec<Point<T>> = members.iter().map(|&k| recs[k].1.clone()).collect();
            exact_cover(&pts, tau)
        }))
    }
}

fn cell_side<T: Scalar>(grid: &ShiftGrid<T>) -> T {
    grid.hash.z() + T::of_usize(grid.dim) * grid.hash.beta() + grid.tau
}

/// A configuration sized for [`approx_mds`]: local memory holds the largest
/// cell group plus the per-shift size vector (at least `min_memory`).
pub fn mds_config<T: Scalar>(p: &Dataset<T>, tau: T, eps: T, min_memory: usize, seed: u64) -> Result<MpcConfig> {
    let grid = ShiftGrid::new(p.dim(), tau, eps)?;
    let shifts = grid.shift_count().unwrap_or(u64::MAX).min(usize::MAX as u64 / 4) as usize;
    let rounded = round_dataset(p, tau, eps)?;
    let (largest, total) = cell_memory_requirement(&rounded.points, cell_side(&grid))?;
    MpcConfig::for_input(total.max(crate::lowdim_rs::rounding_units(p)), (2 * (largest + shifts)).max(min_memory), seed)
}

/// Approximate minimum `tau`-dominating set with default options.
pub fn approx_mds<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    eps: T,
    cfg: &MpcConfig,
) -> Result<(DominatingSetResult<T>, ResourceReport)> {
    approx_mds_with(p, tau, eps, cfg, MdsOptions::default())
}

/// Rounds the input, co-locates every bucket of every shift by replicating
/// points to coarse cells, sums the per-shift solution sizes up a tree, and
/// emits the centres of the smallest shift.
///
/// Dominates the input within `(1 + eps) tau` up to the ball tolerance.
pub fn approx_mds_with<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    eps: T,
    cfg: &MpcConfig,
    opts: MdsOptions,
) -> Result<(DominatingSetResult<T>, ResourceReport)> {
    let grid = ShiftGrid::with_c_mds(p.dim(), tau, eps, opts.c_mds)?;
    let shifts = grid
        .shift_count()
        .filter(|&c| c <= opts.shift_cap)
        .ok_or_else(|| {
            Error::usage(format!(
                "{}^{} shift vectors exceed the cap of {}; lower the dimension or raise eps",
                grid.t, grid.dim, opts.shift_cap
            ))
        })?;
    let side = cell_side(&grid);
    let rounding = rounding_grid(p.dim(), tau, eps)?;
    let mut comp = replicate_to_cells(mpc_rounding(p, rounding, cfg)?, side)?;

    let shift_points: Vec<Point<T>> = (0..shifts).map(|k| grid.shift(k)).collect();
    let local_sizes: Vec<Vec<u64>> = comp
        .machines()
        .par_iter()
        .map(|buf| -> Result<Vec<u64>> {
            let mut solver = BucketSolver {
                tau,
                capacity: opts.bucket_capacity,
                memo: HashMap::new(),
            };
            let mut sizes = vec![0u64; shifts as usize];
            for (cell, recs) in cell_groups(buf.clone()) {
                for (k, v) in shift_points.iter().enumerate() {
                    for members in owned_buckets(&recs, &cell, v, &grid, side) {
                        sizes[k] += solver.solve(&recs, &members)?.len() as u64;
                    }
                }
            }
            Ok(sizes)
        })
        .collect::<Result<_>>()?;
    let totals = comp.converge_cast(local_sizes, |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())?;
    let best = (0..totals.len()).min_by_key(|&k| (totals[k], k)).expect("at least one shift");
    comp.broadcast(best as u64)?;
    let v = shift_points[best].clone();

    let comp = comp.map_local(|_, buf| {
        let mut solver = BucketSolver {
            tau,
            capacity: usize::MAX,
            memo: HashMap::new(),
        };
        let mut out: Vec<Point<T>> = Vec::new();
        for (cell, recs) in cell_groups(buf) {
            for members in owned_buckets(&recs, &cell, &v, &grid, side) {
                out.extend(solver.solve(&recs, &members).expect("capacity checked").iter().cloned());
            }
        }
        out
    })?;
    let report = comp.report();
    let mut centers = comp.gather();
    centers.sort();
    centers.dedup();
    let centers = Dataset::new(centers)?;
    let radius_certified = certify_domination(p, &centers)?;
    Ok((
        DominatingSetResult {
            size: centers.len(),
            centers,
            radius_certified,
            chosen_shift: v,
            shift_sizes: totals,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(vals: &[f64]) -> Dataset {
        Dataset::from_values(vals).unwrap()
    }

    #[test]
    fn certify_examples() {
        assert_eq!(certify_domination(&line(&[0.0, 2.0]), &line(&[1.0])).unwrap(), 1.0);
        assert_eq!(certify_domination(&line(&[0.0, 2.0]), &line(&[2.0, 0.0, 5.0])).unwrap(), 0.0);
        assert_eq!(certify_domination(&line(&[0.0, 2.0, 10.0]), &line(&[1.0, 10.0])).unwrap(), 1.0);
    }

    #[test]
    fn exact_examples() {
        let c = exact_bucket_mds(&line(&[0.0, 1.0, 2.0]), 1.0).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].coords()[0] - 1.0).abs() < 1e-12);
        assert_eq!(exact_bucket_mds(&line(&[0.0, 3.0]), 1.0).unwrap().len(), 2);
        let one = exact_bucket_mds(&line(&[4.5]), 1.0).unwrap();
        assert_eq!(one.points(), line(&[4.5]).points());
        let big = Dataset::from_values(&(0..30).map(|i| i as f64 * 10.0).collect::<Vec<_>>()).unwrap();
        assert!(matches!(exact_bucket_mds(&big, 1.0), Err(Error::BucketOverflow { .. })));
    }

    #[test]
    fn shift_grid_meets_averaging_bound() {
        for (d, eps) in [(1, 0.5), (2, 0.5), (2, 0.25), (3, 0.5)] {
            let g = ShiftGrid::new(d, 1.0, eps).unwrap();
            assert!(g.t as f64 >= (d * (d + 1)) as f64 / eps, "d={d} eps={eps} t={}", g.t);
            assert!(g.hash.require_margin().is_ok());
        }
    }

    #[test]
    fn approx_examples() {
        let run = |p: &Dataset| approx_mds(p, 1.0, 0.5, &mds_config(p, 1.0, 0.5, 256, 1).unwrap()).unwrap().0;
        assert_eq!(run(&line(&[0.0, 1.0, 2.0])).size, 1);
        assert_eq!(run(&line(&[7.0])).size, 1);
        let mut vals = Vec::new();
        for c in 0..3 {
            for j in 0..3 {
                vals.push(c as f64 * 10.0 + j as f64 * 0.05);
            }
        }
        let r = run(&line(&vals));
        assert_eq!(r.size, 3);
        assert!(r.radius_certified <= 1.5 * 2.0);
        let min = *r.shift_sizes.iter().min().unwrap();
        assert_eq!(min as usize, r.size);
    }
}
