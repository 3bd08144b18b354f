//! Ruling sets in high dimension: collapse each consistent-hash bucket to one
//! representative, then keep every representative whose random label is the
//! smallest in its approximate ball.

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geohash::{consistent_hash, face_hash, BucketId, ConsistentHashParams, FaceHashParams};
use crate::geometry::{sq_dist, Dataset, Point};
use crate::kcenter::jl::{jl_target_dim, JlMap};
use crate::lowdim_mds::certify_domination;
use crate::lowdim_rs::{check_tau_eps, overflow_as_bucket, RulingSetResult};
use crate::mpc::{stream_rng, MpcComputation, MpcConfig, ResourceReport};
use crate::scalar::Scalar;

/// Default `c_agg` in the approximate-ball bucket diameter `c_agg * tau / eps`.
pub const DEFAULT_C_AGG: f64 = 1.0;
/// Default `c_pre` in the preprocessing bucket diameter `c_pre * beta * gamma * tau`.
pub const DEFAULT_C_PRE: f64 = 1.0;
/// Projection is applied when `d > JL_DIM_FACTOR * log2 n`.
pub const JL_DIM_FACTOR: f64 = 4.0;

/// Gap `max(8, min(2d, floor(d / max(1, log2 log2 n))))`.
pub fn default_gamma(n: usize, d: usize) -> f64 {
    let ll = (n.max(4) as f64).log2().log2().max(1.0);
    let g = ((d as f64) / ll).floor().min(2.0 * d as f64);
    g.max(8.0)
}

/// Derived constants of one high-dimensional run.
#[derive(Clone, Debug, Serialize)]
pub struct HighDimParams {
    pub tau: f64,
    pub eps: f64,
    /// Sandwich factor `1 + c_agg / eps` of the approximate balls.
    pub beta: f64,
    pub gamma: f64,
    /// Diameter bound of the preprocessing buckets.
    pub ell_pre: f64,
    /// Diameter bound of the aggregation buckets.
    pub ell_agg: f64,
    /// Dimension after projection, when one is applied.
    pub jl_dim: Option<usize>,
    pub c_agg: f64,
    pub c_pre: f64,
}

impl HighDimParams {
    pub fn new(n: usize, d: usize, tau: f64, eps: f64) -> Result<Self> {
        Self::with_constants(n, d, tau, eps, DEFAULT_C_AGG, DEFAULT_C_PRE)
    }

    pub fn with_constants(n: usize, d: usize, tau: f64, eps: f64, c_agg: f64, c_pre: f64) -> Result<Self> {
        check_tau_eps(tau, eps)?;
        if !(c_agg > 0.0 && c_pre > 0.0) {
            return Err(Error::usage("c_agg and c_pre must be positive"));
        }
        let jl_dim = (d as f64 > JL_DIM_FACTOR * (n.max(2) as f64).log2()).then(|| jl_target_dim(n));
        let hash_dim = jl_dim.unwrap_or(d);
        let beta = 1.0 + c_agg / eps;
        let gamma = default_gamma(n, hash_dim);
        Ok(HighDimParams {
            tau,
            eps,
            beta,
            gamma,
            ell_pre: c_pre * beta * gamma * tau,
            ell_agg: c_agg * tau / eps,
            jl_dim,
            c_agg,
            c_pre,
        })
    }
}

/// Bucket representatives with distinct random labels.
#[derive(Clone, Debug)]
pub struct LabeledDataset<T: Scalar = f64> {
    pub points: Dataset<T>,
    /// Input index of each representative.
    pub source_index: Vec<usize>,
    pub labels: Vec<u64>,
    /// Preprocessing bucket to representative position.
    pub rep_of: BTreeMap<BucketId, usize>,
}

/// Label of input point `idx`, redrawn with a new `salt` on collision.
fn draw_label(seed: u64, idx: u64, salt: u64) -> u64 {
    stream_rng(seed, 0x4c41_4245_0000 ^ salt, idx).next_u64()
}

/// Labels for the given input indices, pairwise distinct.
pub fn assign_labels(seed: u64, indices: &[usize]) -> Vec<u64> {
    let mut labels: Vec<u64> = indices.iter().map(|&i| draw_label(seed, i as u64, 0)).collect();
    let mut salt = 0;
    loop {
        let mut seen: HashMap<u64, usize> = HashMap::new();
        let mut clash = Vec::new();
        for (k, &l) in labels.iter().enumerate() {
            if let Some(&first) = seen.get(&l) {
                clash.push(first.max(k));
            } else {
                seen.insert(l, k);
            }
        }
        if clash.is_empty() {
            return labels;
        }
        salt += 1;
        for k in clash {
            labels[k] = draw_label(seed, indices[k] as u64, salt);
        }
    }
}

/// Maps input points to the coordinates the preprocessing hash sees.
enum HashView {
    Identity,
    Projected(JlMap),
}

impl HashView {
    fn apply<T: Scalar>(&self, x: &Point<T>) -> Point<T> {
        match self {
            HashView::Identity => x.clone(),
            HashView::Projected(m) => m.apply(x).expect("dimension checked"),
        }
    }
}

/// One representative (smallest index) per nonempty bucket of a consistent
/// hash with diameter `beta * gamma * tau`, each with a random label.
pub fn preprocess_reps<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    beta: f64,
    cfg: &MpcConfig,
) -> Result<(LabeledDataset<T>, ResourceReport)> {
    if !(tau > T::zero()) {
        return Err(Error::usage(format!("tau must be positive, got {tau}")));
    }
    if !(beta >= 1.0) {
        return Err(Error::usage(format!("beta must be at least 1, got {beta}")));
    }
    let gamma = default_gamma(p.len(), p.dim());
    let ell = T::of(DEFAULT_C_PRE * beta * gamma) * tau;
    let hash = ConsistentHashParams::new(p.dim(), gamma, ell)?;
    preprocess_with(p, &hash, &HashView::Identity, cfg)
}

fn preprocess_with<T: Scalar>(
    p: &Dataset<T>,
    hash: &ConsistentHashParams<T>,
    view: &HashView,
    cfg: &MpcConfig,
) -> Result<(LabeledDataset<T>, ResourceReport)> {
    let input: Vec<(u64, Point<T>)> = p.iter().cloned().enumerate().map(|(i, x)| (i as u64, x)).collect();
    let comp = MpcComputation::scatter(input, cfg.clone())?;
    // Combiner: one record per bucket and machine, then a tree of fan-in
    // `fan_in` over source machines so that a bucket spread over every
    // machine never meets in one place.
    let fan_in = (cfg.local_memory / (2 * (p.dim() + 3))).max(2) as u64;
    let mut comp = comp.map_local(|mi, buf| {
        let mut first: BTreeMap<BucketId, u64> = BTreeMap::new();
        for (i, x) in buf {
            let e = first.entry(consistent_hash(&view.apply(&x), hash)).or_insert(i);
            *e = (*e).min(i);
        }
        first.into_iter().map(|(b, i)| ((b, mi as u64), i)).collect::<Vec<_>>()
    })?;
    let mut groups = comp.machine_count() as u64;
    loop {
        groups = groups.div_ceil(fan_in);
        let g = groups;
        comp = comp.map_local(|_, buf| {
            buf.into_iter()
                .map(|((b, src), i)| ((b, if g <= 1 { 0 } else { src / fan_in }), i))
                .collect()
        })?;
        comp.shuffle_by_key(|r| r.0.clone()).map_err(overflow_as_bucket)?;
        comp = comp.map_local(|_, buf| {
            let mut out: Vec<((BucketId, u64), u64)> = Vec::new();
            for (k, i) in buf {
                match out.last_mut() {
                    Some(last) if last.0 == k => last.1 = last.1.min(i),
                    _ => out.push((k, i)),
                }
            }
            out
        })?;
        if g <= 1 {
            break;
        }
    }
    let comp = comp.map_local(|_, buf| buf.into_iter().map(|((b, _), i)| (b, i)).collect::<Vec<_>>())?;
    let report = comp.report();
    let mut reps = comp.gather();
    reps.sort_by_key(|r| r.1);
    let source_index: Vec<usize> = reps.iter().map(|r| r.1 as usize).collect();
    let rep_of = reps.iter().enumerate().map(|(k, r)| (r.0.clone(), k)).collect();
    Ok((
        LabeledDataset {
            points: p.subset(&source_index)?,
            labels: assign_labels(cfg.seed, &source_index),
            source_index,
            rep_of,
        },
        report,
    ))
}

/// Approximate balls `A(p)`: the union of the aggregation buckets that hold
/// a point within `radius` of `p`. Every such set lies between the exact
/// balls of radius `radius` and `radius + ell`.
#[derive(Clone, Debug)]
pub struct ApproxBallOracle<T: Scalar = f64> {
    /// Sandwich factor `1 + ell / radius`.
    pub beta: f64,
    pub radius: T,
    pub ell: T,
    /// Aggregation bucket of every point.
    pub bucket_of: Vec<usize>,
    /// Points of every bucket, ascending.
    pub members: Vec<Vec<usize>>,
    /// Buckets forming `A(p)` for every point, ascending.
    pub candidates: Vec<Vec<usize>>,
}

impl<T: Scalar> ApproxBallOracle<T> {
    /// Points of `A(p)`, ascending.
    pub fn ball(&self, p: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.candidates[p].iter().flat_map(|&b| self.members[b].iter().copied()).collect();
        out.sort_unstable();
        out
    }

    pub fn contains(&self, p: usize, q: usize) -> bool {
        self.candidates[p].binary_search(&self.bucket_of[q]).is_ok()
    }

    /// Point of `A(p)` with the smallest label.
    pub fn argmin(&self, p: usize, labels: &[u64]) -> usize {
        self.candidates[p]
            .iter()
            .flat_map(|&b| self.members[b].iter().copied())
            .min_by_key(|&q| (labels[q], q))
            .expect("a point lies in its own approximate ball")
    }

    /// Checks `B(p, radius) <= A(p) <= B(p, beta * radius)` for every point.
    pub fn check_sandwich(&self, points: &[Point<T>]) -> bool {
        let r2 = self.radius * self.radius;
        let outer = self.radius + self.ell;
        let o2 = outer * outer * (T::one() + T::of(1e-9));
        (0..points.len()).into_par_iter().all(|p| {
            (0..points.len()).all(|q| {
                let d2 = sq_dist(&points[p], &points[q]);
                let inside = self.contains(p, q);
                !(d2 <= r2 && !inside) && !(inside && d2 > o2)
            })
        })
    }
}

fn aggregation_hash<T: Scalar>(dim: usize, ell: T) -> Result<FaceHashParams<T>> {
    FaceHashParams::for_ell(dim, ell)
}

/// Exact neighbour join: for every point, the sorted bucket indices of the
/// points within `radius`.
fn candidate_buckets<T: Scalar>(points: &[Point<T>], bucket_of: &[usize], radius: T) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    (0..points.len())
        .into_par_iter()
        .map(|p| {
            let mut c: Vec<usize> = (0..points.len())
                .filter(|&q| sq_dist(&points[p], &points[q]) <= r2)
                .map(|q| bucket_of[q])
                .collect();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect()
}

/// For every point `p`, the smallest label over `A(p)` and its owner, computed
/// on the simulator: points and ball requests meet in one shuffle by
/// aggregation bucket, answers return in a shuffle by requester. Only points
/// from index `first_asker` on send requests; the others get no answer.
pub(crate) fn aggregate_min<T: Scalar>(
    points: &[Point<T>],
    labels: &[u64],
    radius: T,
    ell: T,
    first_asker: usize,
    cfg: &MpcConfig,
) -> Result<(Vec<(u64, usize)>, ApproxBallOracle<T>, ResourceReport)> {
    let n = points.len();
    let dim = points.first().map_or(1, Point::dim);
    let hash = aggregation_hash(dim, ell)?;
    let ids: Vec<BucketId> = points.par_iter().map(|x| face_hash(x, &hash)).collect();
    let mut index: BTreeMap<&BucketId, usize> = BTreeMap::new();
    for id in &ids {
        let next = index.len();
        index.entry(id).or_insert(next);
    }
    let bucket_of: Vec<usize> = ids.iter().map(|id| index[id]).collect();
    let mut members = vec![Vec::new(); index.len()];
    for (p, &b) in bucket_of.iter().enumerate() {
        members[b].push(p);
    }
    let candidates = candidate_buckets(points, &bucket_of, radius);
    let oracle = ApproxBallOracle {
        beta: 1.0 + (ell / radius).as_f64(),
        radius,
        ell,
        bucket_of,
        members,
        candidates,
    };

    // Records are keyed by (bucket, slot). Requests are split into slots of
    // at most `per_slot` so that a bucket asked by many points never lands on
    // one machine. Members reduce to one minimum per bucket along a tree over
    // source machines (slot `TREE | group`) whose last level lands in slot 0;
    // buckets with more slots then get a copy of the minimum in each.
    const MEMBER: u64 = 0;
    const REQUEST: u64 = 1;
    const TREE: u64 = 1 << 62;
    let fan_in = (cfg.local_memory / 12).max(2) as u64;
    let per_slot = (cfg.local_memory / 16).max(1);
    let mut asks = vec![0usize; oracle.members.len()];
    for cands in oracle.candidates.iter().skip(first_asker) {
        for &b in cands {
            asks[b] += 1;
        }
    }
    let slots: Vec<u64> = asks.iter().map(|&c| c.div_ceil(per_slot).max(1) as u64).collect();

    type Rec = ((u64, u64), (u64, u64, u64));
    let mut input: Vec<Rec> = (0..n)
        .map(|i| ((oracle.bucket_of[i] as u64, TREE), (MEMBER, labels[i], i as u64)))
        .collect();
    for (i, cands) in oracle.candidates.iter().enumerate().skip(first_asker) {
        input.extend(cands.iter().map(|&b| ((b as u64, i as u64 % slots[b]), (REQUEST, 0, i as u64))));
    }
    let mut comp = MpcComputation::scatter(input, cfg.clone())?.map_local(|mi, buf| {
        let (members, mut out): (Vec<Rec>, Vec<Rec>) = buf.into_iter().partition(|r| r.1 .0 == MEMBER);
        let mut best: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for ((b, _), (_, label, i)) in members {
            let e = best.entry(b).or_insert((label, i));
            *e = (*e).min((label, i));
        }
        out.extend(best.into_iter().map(|(b, (label, i))| ((b, TREE | mi as u64), (MEMBER, label, i))));
        out
    })?;
    let mut groups = comp.machine_count() as u64;
    loop {
        groups = groups.div_ceil(fan_in);
        let g = groups;
        comp = comp.map_local(|_, buf| {
            buf.into_iter()
                .map(|(k, v)| match v.0 {
                    MEMBER if g <= 1 => ((k.0, 0), v),
                    MEMBER => ((k.0, TREE | ((k.1 & !TREE) / fan_in)), v),
                    _ => (k, v),
                })
                .collect()
        })?;
        comp.shuffle_by_key(|r| r.0).map_err(overflow_as_bucket)?;
        comp = comp.map_local(|_, buf| fold_members(buf, MEMBER))?;
        if g <= 1 {
            break;
        }
    }
    if slots.iter().any(|&k| k > 1) {
        comp = comp.map_local(|_, buf| {
            let mut out: Vec<Rec> = Vec::with_capacity(buf.len());
            for (k, v) in buf {
                if v.0 == MEMBER {
                    out.extend((1..slots[k.0 as usize]).map(|j| ((k.0, j), v)));
                }
                out.push((k, v));
            }
            out
        })?;
        comp.shuffle_by_key(|r| r.0).map_err(overflow_as_bucket)?;
    }

    // Every slot now holds its requests and the bucket minimum.
    let comp = comp.map_local(|mi, buf| {
        let mut out: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        let mut start = 0;
        while start < buf.len() {
            let key = buf[start].0;
            let end = start + buf[start..].iter().take_while(|r| r.0 == key).count();
            let group = &buf[start..end];
            let best = group.iter().filter(|r| r.1 .0 == MEMBER).map(|r| (r.1 .1, r.1 .2)).min();
            if let Some(best) = best {
                for r in group.iter().filter(|r| r.1 .0 == REQUEST) {
                    let e = out.entry(r.1 .2).or_insert(best);
                    *e = (*e).min(best);
                }
            }
            start = end;
        }
        out.into_iter().map(|(p, v)| ((p, mi as u64), v)).collect::<Vec<_>>()
    })?;
    let comp = reduce_by_requester(comp, fan_in)?;
    let report = comp.report();
    let mut mins = vec![(u64::MAX, usize::MAX); n];
    for (p, (label, q)) in comp.gather() {
        mins[p as usize] = (label, q as usize);
    }
    Ok((mins, oracle, report))
}

/// Keeps one member record per key: the minimum over each run of equal keys.
/// Other records pass through.
fn fold_members(buf: Vec<((u64, u64), (u64, u64, u64))>, member: u64) -> Vec<((u64, u64), (u64, u64, u64))> {
    let mut out = Vec::with_capacity(buf.len());
    let mut start = 0;
    while start < buf.len() {
        let key = buf[start].0;
        let end = start + buf[start..].iter().take_while(|r| r.0 == key).count();
        let mut best: Option<(u64, u64, u64)> = None;
        for r in &buf[start..end] {
            if r.1 .0 == member {
                best = Some(best.map_or(r.1, |b| b.min(r.1)));
            } else {
                out.push(*r);
            }
        }
        if let Some(b) = best {
            out.push((key, b));
        }
        start = end;
    }
    out
}

/// Merges partial answers keyed by (requester, source machine) into one
/// record per requester, along a tree of fan-in `fan_in` over the sources.
fn reduce_by_requester(
    mut comp: MpcComputation<((u64, u64), (u64, u64))>,
    fan_in: u64,
) -> Result<MpcComputation<(u64, (u64, u64))>> {
    let mut groups = comp.machine_count() as u64;
    loop {
        groups = groups.div_ceil(fan_in);
        let g = groups;
        comp = comp.map_local(|_, buf| {
            buf.into_iter()
                .map(|((p, src), v)| ((p, if g <= 1 { 0 } else { src / fan_in }), v))
                .collect()
        })?;
        comp.shuffle_by_key(|r| r.0).map_err(overflow_as_bucket)?;
        comp = comp.map_local(|_, buf| {
            let mut out: Vec<((u64, u64), (u64, u64))> = Vec::new();
            for (k, v) in buf {
                match out.last_mut() {
                    Some(last) if last.0 == k => last.1 = last.1.min(v),
                    _ => out.push((k, v)),
                }
            }
            out
        })?;
        if g <= 1 {
            break;
        }
    }
    comp.map_local(|_, buf| buf.into_iter().map(|((p, _), v)| (p, v)).collect())
}

/// Smallest label over the approximate ball `A(p, tau)` of every
/// representative, with balls built from buckets of diameter `tau / eps`.
pub fn approx_ball_min<T: Scalar>(
    reps: &Dataset<T>,
    labels: &[u64],
    tau: T,
    eps: T,
    cfg: &MpcConfig,
) -> Result<(Vec<(u64, usize)>, ApproxBallOracle<T>, ResourceReport)> {
    check_tau_eps(tau, eps)?;
    if labels.len() != reps.len() {
        return Err(Error::usage("one label per point is required"));
    }
    aggregate_min(reps, labels, tau, T::of(DEFAULT_C_AGG) * tau / eps, 0, cfg)
}

/// Keeps every point whose label is the smallest in its approximate ball.
pub fn one_round_luby<T: Scalar>(
    reps: &Dataset<T>,
    labels: &[u64],
    oracle: &ApproxBallOracle<T>,
) -> Result<RulingSetResult<T>> {
    let selected: Vec<usize> = (0..reps.len()).filter(|&p| oracle.argmin(p, labels) == p).collect();
    let selected = reps.subset(&selected)?;
    let domination_radius = certify_domination(reps, &selected)?;
    Ok(RulingSetResult {
        selected,
        independence_radius: oracle.radius,
        domination_radius,
    })
}

/// Distributed high-dimensional ruling set. Independent at `tau` on `p` with
/// probability 1; the domination radius is certified exactly.
pub fn highdim_ruling_set<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    eps: T,
    cfg: &MpcConfig,
) -> Result<(RulingSetResult<T>, ResourceReport)> {
    let params = HighDimParams::new(p.len(), p.dim(), tau.as_f64(), eps.as_f64())?;
    highdim_ruling_set_with(p, tau, &params, cfg).map(|(r, _, rep)| (r, rep))
}

/// Run with explicit parameters; also returns the representatives and the
/// approximate-ball oracle for chain measurements.
pub fn highdim_ruling_set_with<T: Scalar>(
    p: &Dataset<T>,
    tau: T,
    params: &HighDimParams,
    cfg: &MpcConfig,
) -> Result<(RulingSetResult<T>, (LabeledDataset<T>, ApproxBallOracle<T>), ResourceReport)> {
    let (view, hash_dim) = match params.jl_dim {
        Some(k) => (HashView::Projected(JlMap::new(p.dim(), k, cfg.seed ^ 0x4a4c)?), k),
        None => (HashView::Identity, p.dim()),
    };
    let hash = ConsistentHashParams::new(hash_dim, params.gamma, T::of(params.ell_pre))?;
    let (reps, pre) = preprocess_with(p, &hash, &view, cfg)?;
    let (mins, oracle, agg) = aggregate_min(&reps.points, &reps.labels, tau, T::of(params.ell_agg), 0, cfg)?;
    let chosen: Vec<usize> = (0..reps.points.len()).filter(|&k| mins[k].1 == k).collect();
    let selected = reps.points.subset(&chosen)?;
    let domination_radius = certify_domination(p, &selected)?;
    Ok((
        RulingSetResult {
            selected,
            independence_radius: tau,
            domination_radius,
        },
        (reps, oracle),
        pre.then(&agg),
    ))
}

/// The assignment sequence from a start point: each step moves to the point
/// of smallest label in the current approximate ball, until a selected point.
#[derive(Clone, Debug, Serialize)]
pub struct ChainTrace {
    pub start: usize,
    /// `x_0 = start, ..., x_T`, as positions in the representative set.
    pub path: Vec<usize>,
    pub length: usize,
}

pub fn measure_chain<T: Scalar>(
    reps: &Dataset<T>,
    labels: &[u64],
    oracle: &ApproxBallOracle<T>,
    p: &Point<T>,
) -> Result<ChainTrace> {
    let start = reps
        .iter()
        .position(|q| q == p)
        .ok_or_else(|| Error::usage("chain start is not a representative"))?;
    Ok(chain_from(labels, oracle, start))
}

pub fn chain_from<T: Scalar>(labels: &[u64], oracle: &ApproxBallOracle<T>, start: usize) -> ChainTrace {
    let mut path = vec![start];
    let mut x = start;
    loop {
        let next = oracle.argmin(x, labels);
        if next == x {
            break;
        }
        debug_assert!(labels[next] < labels[x]);
        path.push(next);
        x = next;
    }
    ChainTrace {
        start,
        length: path.len() - 1,
        path,
    }
}
