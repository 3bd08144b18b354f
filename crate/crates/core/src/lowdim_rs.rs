//! Ruling sets in low dimension: grid rounding, then a greedy MIS driven by
//! the face hash, processed group by group.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geohash::{face_hash, BucketId, FaceHashParams};
use crate::geometry::{Dataset, GridSpec, Point};
use crate::lowdim_mds::certify_domination;
use crate::mpc::{MpcComputation, MpcConfig, ResourceReport};
use crate::scalar::Scalar;
use crate::spatial::CellIndex;

/// A rounded copy of a dataset: one representative per occupied grid point.
#[derive(Clone, Debug)]
pub struct RoundedDataset<T: Scalar = f64> {
    /// Representatives, in increasing order of their index in the input.
    pub points: Dataset<T>,
    /// Input index of each representative.
    pub source_index: Vec<usize>,
    /// Grid image to position in `points`.
    pub rep_of: BTreeMap<Vec<i64>, usize>,
    pub grid: GridSpec<T>,
}

/// A set that is independent at `independence_radius` and dominates the
/// input within `domination_radius`.
#[derive(Clone, Debug, Serialize)]
pub struct RulingSetResult<T: Scalar = f64> {
    pub selected: Dataset<T>,
    pub independence_radius: T,
    pub domination_radius: T,
}

pub(crate) fn check_tau_eps<T: Scalar>(tau: T, eps: T) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::usage(format!("tau must be positive, got {tau}")));
    }
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::usage(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Grid with step `eps * tau / sqrt(d)`.
pub fn rounding_grid<T: Scalar>(dim: usize, tau: T, eps: T) -> Result<GridSpec<T>> {
    GridSpec::new(eps * tau / T::of_usize(dim).sqrt())
}

/// Keeps, for every occupied point of the rounding grid, the input point of
/// smallest index that snaps to it.
pub fn round_dataset<T: Scalar>(p: &Dataset<T>, tau: T, eps: T) -> Result<RoundedDataset<T>> {
    check_tau_eps(tau, eps)?;
    let grid = rounding_grid(p.dim(), tau, eps)?;
    let mut first: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for (i, x) in p.iter().enumerate() {
        first.entry(grid.index_of(x)).or_insert(i);
    }
    let mut source_index: Vec<usize> = first.values().copied().collect();
    source_index.sort_unstable();
    let position: HashMap<usize, usize> = source_index.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let rep_of = first.into_iter().map(|(img, i)| (img, position[&i])).collect();
    Ok(RoundedDataset {
        points: p.subset(&source_index)?,
        source_index,
        rep_of,
        grid,
    })
}

/// Face hash with `beta = tau` and the smallest admissible `ell`.
pub fn mis_hash_params<T: Scalar>(dim: usize, tau: T) -> Result<FaceHashParams<T>> {
    FaceHashParams::for_beta(dim, tau)
}

/// Radius beyond which lower-level buckets cannot influence a bucket:
/// `(d + 1) tau + d ell`.
pub fn relevance_radius<T: Scalar>(tau: T, params: &FaceHashParams<T>) -> T {
    let d = params.dim();
    T::of_usize(d + 1) * tau + T::of_usize(d) * params.ell()
}

fn check_params<T: Scalar>(p: &Dataset<T>, tau: T, params: &FaceHashParams<T>) -> Result<()> {
    if !(tau > T::zero()) {
        return Err(Error::usage(format!("tau must be positive, got {tau}")));
    }
    if params.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            found: p.dim(),
        });
    }
    Ok(())
}

/// Greedy MIS over the given points, bucket by bucket in increasing level and
/// lexicographic point order within a bucket. Returns the selected positions.
fn greedy_by_level<T: Scalar>(points: &[&Point<T>], ids: &[BucketId], tau: T) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        ids[a]
            .level()
            .cmp(&ids[b].level())
            .then_with(|| ids[a].cmp(&ids[b]))
            .then_with(|| points[a].cmp(points[b]))
            .then_with(|| a.cmp(&b))
    });
    let mut chosen = CellIndex::new(tau);
    let mut out = Vec::new();
    for i in order {
        if !chosen.any_within(points[i], tau) {
            chosen.insert(points[i]);
            out.push(i);
        }
    }
    out
}

fn finish<T: Scalar>(p: &Dataset<T>, mut selected: Vec<Point<T>>, tau: T) -> Result<RulingSetResult<T>> {
    selected.sort();
    let selected = Dataset::new(selected)?;
    let domination_radius = certify_domination(p, &selected)?;
    Ok(RulingSetResult {
        selected,
        independence_radius: tau,
        domination_radius,
    })
}

/// Sequential tau-MIS: groups `0..=d` in order, each bucket greedily after
/// discarding points within `tau` of earlier selections.
pub fn sequential_mis<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    params: &FaceHashParams<T>,
) -> Result<RulingSetResult<T>> {
    check_params(p, tau, params)?;
    let refs: Vec<&Point<T>> = p.iter().collect();
    let ids: Vec<BucketId> = p.iter().map(|x| face_hash(x, params)).collect();
    let sel = greedy_by_level(&refs, &ids, tau);
    finish(p, sel.into_iter().map(|i| p[i].clone()).collect(), tau)
}

/// Points of `S` plus those of every lower-level bucket whose point set lies
/// within the relevance radius of `S`; the result is the greedy selection
/// restricted to `S`.
fn localized_bucket<T: Scalar>(
    points: &[&Point<T>],
    ids: &[BucketId],
    members: &BTreeMap<&BucketId, Vec<usize>>,
    index: &CellIndex<'_, T>,
    target: &BucketId,
    tau: T,
    radius: T,
) -> (Vec<usize>, usize) {
    let own = &members[target];
    let mut relevant: Vec<&BucketId> = Vec::new();
    for &i in own {
        index.for_each_within(points[i], radius, |j, _| {
            if ids[j].level() < target.level() {
                relevant.push(&ids[j]);
            }
        });
    }
    relevant.sort();
    relevant.dedup();
    let mut local: Vec<usize> = relevant.iter().flat_map(|b| members[*b].iter().copied()).collect();
    let load = local.len();
    local.extend(own.iter().copied());
    let sub_points: Vec<&Point<T>> = local.iter().map(|&i| points[i]).collect();
    let sub_ids: Vec<BucketId> = local.iter().map(|&i| ids[i].clone()).collect();
    let picked = greedy_by_level(&sub_points, &sub_ids, tau)
        .into_iter()
        .map(|k| local[k])
        .filter(|&i| ids[i] == *target)
        .collect();
    (picked, load)
}

fn localized_selection<T: Scalar>(
    points: &[&Point<T>],
    ids: &[BucketId],
    targets: Option<&dyn Fn(&BucketId) -> bool>,
    tau: T,
    params: &FaceHashParams<T>,
) -> (Vec<usize>, usize) {
    let radius = relevance_radius(tau, params);
    let mut members: BTreeMap<&BucketId, Vec<usize>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        members.entry(id).or_default().push(i);
    }
    let mut index = CellIndex::new(radius);
    for p in points {
        index.insert(p);
    }
    let buckets: Vec<&BucketId> = members
        .keys()
        .copied()
        .filter(|b| targets.is_none_or(|t| t(b)))
        .collect();
    let parts: Vec<(Vec<usize>, usize)> = buckets
        .par_iter()
        .map(|b| localized_bucket(points, ids, &members, &index, b, tau, radius))
        .collect();
    let load = parts.iter().map(|p| p.1).max().unwrap_or(0);
    (parts.into_iter().flat_map(|p| p.0).collect(), load)
}

/// Localized tau-MIS: every bucket is solved from its relevant neighbourhood
/// alone. Selects exactly the same set as [`sequential_mis`].
pub fn localized_mis<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    params: &FaceHashParams<T>,
) -> Result<RulingSetResult<T>> {
    check_params(p, tau, params)?;
    let refs: Vec<&Point<T>> = p.iter().collect();
    let ids: Vec<BucketId> = p.iter().map(|x| face_hash(x, params)).collect();
    let (sel, _) = localized_selection(&refs, &ids, None, tau, params);
    finish(p, sel.into_iter().map(|i| p[i].clone()).collect(), tau)
}

/// Largest number of points in lower-level buckets that any bucket has to
/// replicate for its localized solve.
pub fn max_relevant_load<T: Scalar>(p: &Dataset<T>, tau: T, params: &FaceHashParams<T>) -> Result<usize> {
    check_params(p, tau, params)?;
    let refs: Vec<&Point<T>> = p.iter().collect();
    let ids: Vec<BucketId> = p.iter().map(|x| face_hash(x, params)).collect();
    Ok(localized_selection(&refs, &ids, None, tau, params).1)
}

/// Side of the coarse cells used to distribute the localized solves.
fn coarse_side<T: Scalar>(tau: T, params: &FaceHashParams<T>) -> T {
    let d = T::of_usize(params.dim());
    params.z() + d * params.beta() + relevance_radius(tau, params) + params.ell()
}

pub(crate) fn coarse_cell<T: Scalar>(x: &Point<T>, side: T) -> Vec<i64> {
    x.coords()
        .iter()
        .map(|&c| (c / side).floor().to_i64().expect("coordinate within i64 range"))
        .collect()
}

pub(crate) fn overflow_as_bucket(e: Error) -> Error {
    match e {
        Error::KeyOverflow { key, size, limit, .. } => Error::BucketOverflow {
            bucket: key,
            required: size,
            capacity: limit,
        },
        other => other,
    }
}

/// Scatters `p` as `(index, point)` records and keeps, for every occupied
/// grid image, the record of smallest index.
pub(crate) fn mpc_rounding<T: Scalar>(
    p: &Dataset<T>,
    grid: GridSpec<T>,
    cfg: &MpcConfig,
) -> Result<MpcComputation<(u64, Point<T>)>> {
    let input: Vec<(u64, Point<T>)> = p.iter().cloned().enumerate().map(|(i, x)| (i as u64, x)).collect();
    let comp = MpcComputation::scatter(input, cfg.clone())?;
    let mut comp = comp.map_local(|_, buf| {
        buf.into_iter()
            .map(|(i, x)| (grid.index_of(&x), (i, x)))
            .collect::<Vec<_>>()
    })?;
    comp.shuffle_by_key(|r| r.0.clone()).map_err(overflow_as_bucket)?;
    comp.map_local(|_, buf| {
        let mut out: Vec<(u64, Point<T>)> = Vec::new();
        let mut last: Option<Vec<i64>> = None;
        for (img, rec) in buf {
            if last.as_ref() == Some(&img) {
                let top = out.last_mut().expect("group started");
                if rec.0 < top.0 {
                    *top = rec;
                }
            } else {
                out.push(rec);
                last = Some(img);
            }
        }
        out
    })
}

/// Sends every record to the `3^d` coarse cells of side `side` around its own
/// and groups the copies by cell.
pub(crate) fn replicate_to_cells<T: Scalar>(
    comp: MpcComputation<(u64, Point<T>)>,
    side: T,
) -> Result<MpcComputation<(Vec<i64>, (u64, Point<T>))>> {
    let mut comp = comp.map_local(|_, buf| {
        let mut out = Vec::new();
        for (i, x) in buf {
            let home = coarse_cell(&x, side);
            let d = home.len() as u32;
            for code in 0..3usize.pow(d) {
                let mut c = code;
                let cell: Vec<i64> = home
                    .iter()
                    .map(|&h| {
                        let o = (c % 3) as i64 - 1;
                        c /= 3;
                        h + o
                    })
                    .collect();
                out.push((cell, (i, x.clone())));
            }
        }
        out
    })?;
    comp.shuffle_by_key(|r| r.0.clone()).map_err(overflow_as_bucket)?;
    Ok(comp)
}

/// Splits a shuffled buffer into its cell groups.
pub(crate) fn cell_groups<T: Scalar>(
    buf: Vec<(Vec<i64>, (u64, Point<T>))>,
) -> BTreeMap<Vec<i64>, Vec<(u64, Point<T>)>> {
    let mut groups: BTreeMap<Vec<i64>, Vec<(u64, Point<T>)>> = BTreeMap::new();
    for (cell, rec) in buf {
        groups.entry(cell).or_default().push(rec);
    }
    groups
}

/// Units held by the largest coarse-cell group and by all replicated records
/// of a [`lowdim_ruling_set`] run.
pub fn lowdim_memory_requirement<T: Scalar>(p: &Dataset<T>, tau: T, eps: T) -> Result<(usize, usize)> {
    let rounded = round_dataset(p, tau, eps)?;
    let params = mis_hash_params(p.dim(), tau)?;
    cell_memory_requirement(&rounded.points, coarse_side(tau, &params))
}

/// Units held during the rounding shuffle: every input record with its grid image.
pub(crate) fn rounding_units<T: Scalar>(p: &Dataset<T>) -> usize {
    p.len() * (2 * p.dim() + 1)
}

pub(crate) fn cell_memory_requirement<T: Scalar>(reps: &Dataset<T>, side: T) -> Result<(usize, usize)> {
    let d = reps.dim();
    let unit = 2 * d + 1;
    let mut counts: HashMap<Vec<i64>, usize> = HashMap::new();
    for x in reps.iter() {
        *counts.entry(coarse_cell(x, side)).or_default() += 1;
    }
    let fan = 3usize.pow(d as u32);
    let mut largest = 0;
    for cell in counts.keys() {
        let mut sum = 0;
        for code in 0..fan {
            let mut c = code;
            let near: Vec<i64> = cell
                .iter()
                .map(|&h| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    h + o
                })
                .collect();
            sum += counts.get(&near).copied().unwrap_or(0);
        }
        largest = largest.max(sum * unit);
    }
    Ok((largest, reps.len() * fan * unit))
}

/// A configuration whose local memory holds the largest cell group (at least
/// `min_memory`) and whose machines hold the replicated input.
pub fn lowdim_config<T: Scalar>(p: &Dataset<T>, tau: T, eps: T, min_memory: usize, seed: u64) -> Result<MpcConfig> {
    let (largest, total) = lowdim_memory_requirement(p, tau, eps)?;
    MpcConfig::for_input(total.max(rounding_units(p)), largest.max(min_memory), seed)
}

/// Distributed ruling set: rounding by a shuffle on grid images, then one
/// shuffle on coarse cells in which every point is replicated to the `3^d`
/// cells around its own, so each cell holds the relevant neighbourhood of
/// every bucket anchored in it.
///
/// Independent at `tau` and dominating the input within `(1 + 2 eps) tau`.
pub fn lowdim_ruling_set<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    eps: T,
    cfg: &MpcConfig,
) -> Result<(RulingSetResult<T>, ResourceReport)> {
    check_tau_eps(tau, eps)?;
    let grid = rounding_grid(p.dim(), tau, eps)?;
    let params = mis_hash_params(p.dim(), tau)?;
    let side = coarse_side(tau, &params);
    let comp = replicate_to_cells(mpc_rounding(p, grid, cfg)?, side)?;

    // Each cell solves the buckets whose anchor lies in it.
    let comp = comp.map_local(|_, buf| {
        let mut out: Vec<(u64, Point<T>)> = Vec::new();
        for (cell, recs) in cell_groups(buf) {
            let refs: Vec<&Point<T>> = recs.iter().map(|r| &r.1).collect();
            let ids: Vec<BucketId> = refs.iter().map(|x| face_hash(x, &params)).collect();
            let owns = |b: &BucketId| coarse_cell(&b.anchor(&params), side) == cell;
            let (sel, _) = localized_selection(&refs, &ids, Some(&owns), tau, &params);
            out.extend(sel.into_iter().map(|k| recs[k].clone()));
        }
        out
    })?;
    let report = comp.report();
    let mut chosen = comp.gather();
    chosen.sort_by_key(|r| r.0);
    chosen.dedup_by_key(|r| r.0);
    let result = finish(p, chosen.into_iter().map(|r| r.1).collect(), tau)?;
    Ok((result, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;

    fn line(vals: &[f64]) -> Dataset {
        Dataset::from_values(vals).unwrap()
    }

    #[test]
    fn rounding_examples() {
        let r = round_dataset(&line(&[0.0, 0.001, 5.0]), 1.0, 0.5).unwrap();
        assert_eq!(r.points.len(), 2);
        assert_eq!(r.source_index, vec![0, 2]);
        let r = round_dataset(&line(&[3.0, 3.0, 3.0]), 1.0, 0.5).unwrap();
        assert_eq!(r.points.len(), 1);
        let r = round_dataset(&line(&[0.0, 1.0, 2.0, 3.0]), 1.0, 0.5).unwrap();
        assert_eq!(r.points.len(), 4);
        assert!(round_dataset(&line(&[0.0]), 0.0, 0.5).is_err());
        assert!(round_dataset(&line(&[0.0]), 1.0, 1.0).is_err());
    }

    #[test]
    fn greedy_examples() {
        let p = line(&[0.0, 0.5, 2.0]);
        let h = mis_hash_params(1, 1.0).unwrap();
        let seq = sequential_mis(&p, 1.0, &h).unwrap();
        assert_eq!(seq.selected.points(), line(&[0.0, 2.0]).points());
        let loc = localized_mis(&p, 1.0, &h).unwrap();
        assert_eq!(loc.selected.points(), seq.selected.points());
        let one = line(&[4.0]);
        assert_eq!(sequential_mis(&one, 1.0, &h).unwrap().selected.len(), 1);
        let spread = line(&[0.0, 1.5, 3.0, 4.5]);
        assert_eq!(sequential_mis(&spread, 1.0, &h).unwrap().selected.len(), 4);
    }

    #[test]
    fn distributed_small_example() {
        let p = line(&[0.0, 0.5, 2.0]);
        let cfg = MpcConfig::new(64, 1, 0).unwrap();
        let (rs, rep) = lowdim_ruling_set(&p, 1.0, 0.1, &cfg).unwrap();
        assert_eq!(rep.rounds_used, 0);
        for (i, a) in rs.selected.iter().enumerate() {
            for b in &rs.selected[i + 1..] {
                assert!(dist(a, b).unwrap() > 1.0);
            }
        }
        assert!(rs.domination_radius <= 1.2);
        let h = mis_hash_params(1, 1.0).unwrap();
        let rounded = round_dataset(&p, 1.0, 0.1).unwrap();
        let seq = sequential_mis(&rounded.points, 1.0, &h).unwrap();
        assert_eq!(rs.selected.points(), seq.selected.points());
    }

    #[test]
    fn localized_and_distributed_match_sequential() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..60 {
            let d = 1 + trial % 3;
            let n = rng.random_range(1..120);
            let side = rng.random_range(1.0..12.0);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..side)).collect())
                .collect();
            let p = Dataset::from_rows(&rows).unwrap();
            let h = mis_hash_params(d, 1.0).unwrap();
            let seq = sequential_mis(&p, 1.0, &h).unwrap();
            let loc = localized_mis(&p, 1.0, &h).unwrap();
            assert_eq!(seq.selected.points(), loc.selected.points(), "trial {trial}");
            let cfg = lowdim_config(&p, 1.0, 0.25, 256, trial as u64).unwrap();
            let (rs, _) = lowdim_ruling_set(&p, 1.0, 0.25, &cfg).unwrap();
            let rounded = round_dataset(&p, 1.0, 0.25).unwrap();
            let want = sequential_mis(&rounded.points, 1.0, &h).unwrap();
            assert_eq!(rs.selected.points(), want.selected.points(), "trial {trial}");
            assert!(rs.domination_radius <= 1.5);
        }
    }
}
