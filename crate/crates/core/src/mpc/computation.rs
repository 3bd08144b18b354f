use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::MpcConfig;
use super::report::ResourceReport;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::Scalar;

/// Anything that can be stored on a simulated machine or sent in a message.
pub trait Record: Clone + Send + Sync {
    /// Memory cost in units.
    fn units(&self) -> usize;
}

macro_rules! unit_record {
    ($($t:ty),*) => {$(
        impl Record for $t {
            fn units(&self) -> usize {
                1
            }
        }
    )*};
}
unit_record!(u8, u16, u32, u64, usize, i32, i64, f32, f64, bool);

impl<T: Scalar> Record for Point<T> {
    fn units(&self) -> usize {
        self.dim()
    }
}

impl<A: Record, B: Record> Record for (A, B) {
    fn units(&self) -> usize {
        self.0.units() + self.1.units()
    }
}

impl<A: Record, B: Record, C: Record> Record for (A, B, C) {
    fn units(&self) -> usize {
        self.0.units() + self.1.units() + self.2.units()
    }
}

impl<T: Record> Record for Vec<T> {
    fn units(&self) -> usize {
        self.iter().map(Record::units).sum()
    }
}

impl<T: Record> Record for Option<T> {
    fn units(&self) -> usize {
        self.as_ref().map_or(1, Record::units)
    }
}

/// Loads and traffic observed at one round barrier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundTrace {
    pub round: usize,
    pub loads: Vec<usize>,
    pub sent: Vec<usize>,
    pub received: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Runtime {
    cfg: MpcConfig,
    rounds: usize,
    peak: Vec<usize>,
    total_peak: usize,
    messages: u64,
    trace: Vec<RoundTrace>,
}

enum Violation {
    Memory { machine: usize, load: usize },
    Messages { machine: usize, volume: usize },
}

impl Runtime {
    fn new(cfg: MpcConfig) -> Self {
        let m = cfg.machines;
        Runtime {
            cfg,
            rounds: 0,
            peak: vec![0; m],
            total_peak: 0,
            messages: 0,
            trace: Vec::new(),
        }
    }

    fn observe(&mut self, loads: &[usize]) {
        for (p, &l) in self.peak.iter_mut().zip(loads) {
            *p = (*p).max(l);
        }
        self.total_peak = self.total_peak.max(loads.iter().sum());
    }

    /// Closes a communication round and checks it against the limits.
    fn barrier(
        &mut self,
        loads: Vec<usize>,
        sent: Vec<usize>,
        received: Vec<usize>,
    ) -> std::result::Result<(), Violation> {
        self.rounds += 1;
        self.messages += sent.iter().map(|&v| v as u64).sum::<u64>();
        self.observe(&loads);
        let budget = self.cfg.message_budget();
        let s = self.cfg.local_memory;
        let verdict = if !self.cfg.enforce_limits {
            Ok(())
        } else if let Some(m) = (0..loads.len()).find(|&m| sent[m].max(received[m]) > budget) {
            Err(Violation::Messages {
                machine: m,
                volume: sent[m].max(received[m]),
            })
        } else if let Some(m) = loads.iter().position(|&l| l > s) {
            Err(Violation::Memory {
                machine: m,
                load: loads[m],
            })
        } else {
            Ok(())
        };
        self.trace.push(RoundTrace {
            round: self.rounds,
            loads,
            sent,
            received,
        });
        verdict
    }

    fn violation_error(&self, v: Violation) -> Error {
        match v {
            Violation::Memory { machine, load } => Error::MemoryExceeded {
                round: self.rounds,
                machine,
                load,
                limit: self.cfg.local_memory,
            },
            Violation::Messages { machine, volume } => Error::MessageExceeded {
                round: self.rounds,
                machine,
                volume,
                limit: self.cfg.message_budget(),
            },
        }
    }

    /// One round of point-to-point messages. `resident` units stay put on each machine.
    fn route<X: Record>(
        &mut self,
        outgoing: Vec<Vec<(usize, X)>>,
        resident: &[usize],
    ) -> std::result::Result<Vec<Vec<X>>, (Violation, Vec<Vec<X>>)> {
        let m = self.cfg.machines;
        let mut inbox: Vec<Vec<X>> = (0..m).map(|_| Vec::new()).collect();
        let mut sent = vec![0usize; m];
        let mut received = vec![0usize; m];
        for (src, msgs) in outgoing.into_iter().enumerate() {
            for (dst, x) in msgs {
                let u = x.units();
                sent[src] += u;
                received[dst] += u;
                inbox[dst].push(x);
            }
        }
        let loads: Vec<usize> = (0..m).map(|i| resident[i] + received[i]).collect();
        match self.barrier(loads, sent, received) {
            Ok(()) => Ok(inbox),
            Err(v) => Err((v, inbox)),
        }
    }

    /// Tree broadcast of `units` of data held by machine 0. Returns rounds spent.
    fn tree_broadcast(&mut self, units: usize, resident: &[usize]) -> Result<()> {
        let m = resident.len();
        let fanout = (self.cfg.message_budget() / units.max(1)).max(1);
        let mut holders = 1usize;
        while holders < m {
            let new_holders = (holders * (fanout + 1)).min(m);
            let mut sent = vec![0usize; m];
            let mut received = vec![0usize; m];
            for dst in holders..new_holders {
                let src = (dst - holders) / fanout;
                sent[src] += units;
                received[dst] += units;
            }
            let loads: Vec<usize> = (0..m)
                .map(|i| resident[i] + if i < new_holders { units } else { 0 })
                .collect();
            if let Err(v) = self.barrier(loads, sent, received) {
                return Err(self.violation_error(v));
            }
            holders = new_holders;
        }
        Ok(())
    }

    /// Sorts locally sorted buffers of `(key, record)` across machines (stable).
    fn sample_sort<K, X>(&mut self, bufs: Vec<Vec<(K, X)>>) -> Result<Vec<Vec<(K, X)>>>
    where
        K: Ord + Clone + Record,
        X: Record,
    {
        let m = bufs.len();
        if m == 1 {
            return Ok(bufs);
        }
        let s = self.cfg.local_memory;
        let resident: Vec<usize> = bufs
            .iter()
            .map(|v| v.iter().map(|(_, x)| x.units()).sum())
            .collect();
        let key_units = bufs
            .iter()
            .flat_map(|v| v.iter().map(|(k, _)| k.units()))
            .max()
            .unwrap_or(1);
        let q = SAMPLES_PER_MACHINE_FACTOR * m;
        let volume: usize = bufs.iter().map(|v| v.len().min(q)).sum::<usize>() * (key_units + 1);
        let max_res = resident.iter().copied().max().unwrap_or(0);
        let splitter_units = (m - 1) * key_units;
        if volume + resident[0] > s || splitter_units + max_res > s {
            // Range sort needs some headroom for uneven parts and the final
            // merge-splits; the plain merge network only needs twice the average.
            let tagged = bufs.iter().zip(&resident).map(|(b, r)| b.len() + r).max().unwrap_or(0);
            return if 3 * tagged > s {
                self.merge_network(bufs)
            } else {
                self.range_sort(bufs)
            };
        }

        // Regular samples to machine 0, weighted quantiles as splitters.
        let samples: Vec<Vec<(usize, (K, u64))>> = bufs
            .iter()
            .map(|v| regular_samples(v, q).into_iter().map(|x| (0, x)).collect())
            .collect();
        let inbox = self.route_counted(samples, &resident, |(k, _): &(K, u64)| k.units() + 1)?;
        let mut all: Vec<(K, u64)> = inbox.into_iter().flatten().collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        let total: u64 = all.iter().map(|x| x.1).sum();
        let splitters = quantile_splitters(&all, total, m);
        let units: usize = splitters.iter().map(Record::units).sum();
        self.tree_broadcast(units, &resident)?;

        let outgoing: Vec<Vec<(usize, (K, X))>> = bufs
            .into_iter()
            .map(|v| {
                v.into_iter()
                    .map(|(k, x)| (splitters.partition_point(|sp| *sp < k), (k, x)))
                    .collect()
            })
            .collect();
        let zero = vec![0usize; m];
        let inbox = self.route_counted(outgoing, &zero, |(_, x): &(K, X)| x.units())?;
        // Arrivals are concatenated in source order, so a stable sort keeps
        // the original global order among equal keys.
        Ok(inbox
            .into_par_iter()
            .map(|mut v| {
                v.sort_by(|a, b| a.0.cmp(&b.0));
                v
            })
            .collect())
    }

    /// Batcher's odd-even merge network on blocks: each comparator is a
    /// merge-split between two machines, one round per network stage.
    /// Records carry a one-unit position tag that makes the order total.
    fn merge_network<K, X>(&mut self, bufs: Vec<Vec<(K, X)>>) -> Result<Vec<Vec<(K, X)>>>
    where
        K: Ord + Clone + Record,
        X: Record,
    {
        let m = bufs.len();
        let mut bufs = self.balance(bufs)?;
        for b in &mut bufs {
            b.sort_by(|x, y| x.0.cmp(&y.0));
        }
        let cap = bufs.iter().map(Vec::len).max().unwrap_or(0);
        let mut blocks: Vec<Vec<(K, u64, X)>> = bufs
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.into_iter()
                    .enumerate()
                    .map(|(j, (k, x))| (k, ((i as u64) << 32) | j as u64, x))
                    .collect()
            })
            .collect();
        let units = |b: &[(K, u64, X)]| b.iter().map(|t| t.2.units() + 1).sum::<usize>();
        for stage in merge_network_stages(m) {
            let mut sent = vec![0usize; m];
            let mut received = vec![0usize; m];
            let mut loads: Vec<usize> = blocks.iter().map(|b| units(b)).collect();
            for &(i, j) in &stage {
                let (ui, uj) = (units(&blocks[i]), units(&blocks[j]));
                sent[i] += ui;
                received[j] += ui;
                sent[j] += uj;
                received[i] += uj;
                loads[i] += uj;
                loads[j] += ui;
            }
            if let Err(v) = self.barrier(loads, sent, received) {
                return Err(self.violation_error(v));
            }
            for &(i, j) in &stage {
                let a = std::mem::take(&mut blocks[i]);
                let b = std::mem::take(&mut blocks[j]);
                let mut merged = Vec::with_capacity(a.len() + b.len());
                let (mut ia, mut ib) = (a.into_iter().peekable(), b.into_iter().peekable());
                loop {
                    let take_a = match (ia.peek(), ib.peek()) {
                        (Some(x), Some(y)) => (&x.0, x.1) <= (&y.0, y.1),
                        (Some(_), None) => true,
                        (None, Some(_)) => false,
                        (None, None) => break,
                    };
                    merged.push(if take_a { ia.next() } else { ib.next() }.expect("peeked"));
                }
                let rest = merged.split_off(cap.min(merged.len()));
                blocks[i] = merged;
                blocks[j] = rest;
            }
        }
        Ok(blocks
            .into_iter()
            .map(|b| b.into_iter().map(|(k, _, x)| (k, x)).collect())
            .collect())
    }

    /// Sample sort over nested machine ranges, for when the samples of all
    /// machines do not fit on one. Every range of `r` machines draws regular
    /// samples at its first machine, splits its keys into `g` parts, and
    /// learns the exact units of each part by prefix sums up and down a tree.
    /// The machines of the range are shared out among the parts in
    /// proportion to their units and every part is split evenly over its
    /// machines, so loads stay close to the range average whatever the
    /// quality of the splitters. A range small enough for all its regular
    /// samples to fit on its first machine finishes in one sample-sort step.
    fn range_sort<K, X>(&mut self, bufs: Vec<Vec<(K, X)>>) -> Result<Vec<Vec<(K, X)>>>
    where
        K: Ord + Clone + Record,
        X: Record,
    {
        let m = bufs.len();
        let s = self.cfg.local_memory;
        let key_units = bufs
            .iter()
            .flat_map(|v| v.iter().map(|(k, _)| k.units()))
            .max()
            .unwrap_or(1);
        // Position tags make the order total and the sort stable.
        let mut blocks: Vec<Vec<((K, u64), X)>> = bufs
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                v.into_iter()
                    .enumerate()
                    .map(|(j, (k, x))| ((k, ((i as u64) << 32) | j as u64), x))
                    .collect()
            })
            .collect();
        let units_of = |b: &[((K, u64), X)]| b.iter().map(|t| t.1.units() + 1).sum::<usize>();
        let sample_units = key_units + 2;
        // Largest range finished directly: r samples from each of r machines.
        let tail = isqrt(s / (2 * sample_units)).max(2);
        let target = (tail * 3 / 4).max(2);
        let mut ranges: Vec<(usize, usize)> = vec![(0, m)];
        loop {
            let active: Vec<(usize, usize)> = ranges.iter().copied().filter(|&(lo, hi)| hi - lo > tail).collect();
            if active.is_empty() {
                break;
            }
            let resident: Vec<usize> = blocks.iter().map(|b| units_of(b)).collect();
            let max_res = resident.iter().copied().max().unwrap_or(0);
            let cap = s.saturating_sub(max_res) / 2 / sample_units;
            if cap < 8 {
                return self.merge_network(strip_tags(blocks));
            }

            // Regular samples of every machine (or every `stride`-th one in a
            // very wide range) go to the first machine of its range.
            let mut parts_of: HashMap<usize, usize> = HashMap::new();
            let mut outgoing: Vec<Vec<(usize, ((K, u64), u64))>> = (0..m).map(|_| Vec::new()).collect();
            for &(lo, hi) in &active {
                let r = hi - lo;
                parts_of.insert(lo, r.div_ceil(target).min(cap / 4).max(2));
                let q = (cap / r).max(1);
                let stride = r.div_ceil(cap).max(1);
                for i in (lo..hi).step_by(stride) {
                    outgoing[i] = regular_samples(&blocks[i], q).into_iter().map(|x| (lo, x)).collect();
                }
            }
            let splitters = self.splitters_at_leaders(outgoing, &resident, sample_units, &parts_of)?;
            let widest = parts_of.values().copied().max().unwrap_or(2);
            self.range_sweep(&active, (widest - 1) * (key_units + 1), &resident, false)?;
            self.range_sweep(&active, widest, &resident, true)?;
            self.range_sweep(&active, 2 * widest, &resident, false)?;

            // Exact part sizes, allocation and prefix-order routing.
            let mut dest: Vec<Vec<usize>> = blocks.iter().enumerate().map(|(i, b)| vec![i; b.len()]).collect();
            let mut next_ranges: Vec<(usize, usize)> =
                ranges.iter().copied().filter(|&(lo, hi)| hi - lo <= tail).collect();
            for &(lo, hi) in &active {
                let sp = &splitters[&lo];
                let g = parts_of[&lo];
                let part = |k: &(K, u64)| sp.partition_point(|x| x < k);
                let mut part_units = vec![0usize; g];
                for t in blocks[lo..hi].iter().flatten() {
                    part_units[part(&t.0)] += t.1.units() + 1;
                }
                let widths = allocate_machines(&part_units, hi - lo, s / 16);
                let mut start = Vec::with_capacity(g);
                let mut at = lo;
                for &w in &widths {
                    start.push(at);
                    if w > 0 {
                        next_ranges.push((at, at + w));
                    }
                    at += w;
                }
                let mut offset = vec![0usize; g];
                for i in lo..hi {
                    for (slot, t) in blocks[i].iter().enumerate() {
                        let j = part(&t.0);
                        // Even split of part j over its machines by unit offset.
                        dest[i][slot] = start[j] + offset[j] * widths[j] / part_units[j];
                        offset[j] += t.1.units() + 1;
                    }
                }
            }
            if active.iter().any(|r| next_ranges.contains(r)) {
                // No range shrank; the network always terminates.
                return self.merge_network(strip_tags(blocks));
            }
            blocks = self.route_tagged(blocks, dest)?;
            next_ranges.sort_unstable();
            ranges = next_ranges;
        }

        // Small ranges: regular samples, one splitter per machine, one route.
        let small: Vec<(usize, usize)> = ranges.iter().copied().filter(|&(lo, hi)| hi - lo > 1).collect();
        if !small.is_empty() {
            for b in &mut blocks {
                b.sort_by(|x, y| x.0.cmp(&y.0));
            }
            let resident: Vec<usize> = blocks.iter().map(|b| units_of(b)).collect();
            let mut parts_of: HashMap<usize, usize> = HashMap::new();
            let mut outgoing: Vec<Vec<(usize, ((K, u64), u64))>> = (0..m).map(|_| Vec::new()).collect();
            for &(lo, hi) in &small {
                let r = hi - lo;
                parts_of.insert(lo, r);
                for i in lo..hi {
                    outgoing[i] = regular_samples(&blocks[i], r).into_iter().map(|x| (lo, x)).collect();
                }
            }
            let splitters = self.splitters_at_leaders(outgoing, &resident, sample_units, &parts_of)?;
            let widest = parts_of.values().copied().max().unwrap_or(2);
            self.range_sweep(&small, (widest - 1) * (key_units + 1), &resident, false)?;
            let mut dest: Vec<Vec<usize>> = blocks.iter().enumerate().map(|(i, b)| vec![i; b.len()]).collect();
            for &(lo, hi) in &small {
                let sp = &splitters[&lo];
                for i in lo..hi {
                    for (slot, t) in blocks[i].iter().enumerate() {
                        dest[i][slot] = lo + sp.partition_point(|x| *x < t.0);
                    }
                }
            }
            blocks = self.route_tagged(blocks, dest)?;
        }
        for b in &mut blocks {
            b.sort_by(|x, y| x.0.cmp(&y.0));
        }
        Ok(strip_tags(blocks))
    }

    /// Routes samples to the first machine of each range, which turns them
    /// into `parts_of[lo] - 1` weighted quantile splitters.
    fn splitters_at_leaders<K: Ord + Clone + Send + Sync>(
        &mut self,
        outgoing: Vec<Vec<(usize, ((K, u64), u64))>>,
        resident: &[usize],
        sample_units: usize,
        parts_of: &HashMap<usize, usize>,
    ) -> Result<HashMap<usize, Vec<(K, u64)>>> {
        let inbox = self.route_counted(outgoing, resident, |_: &((K, u64), u64)| sample_units)?;
        Ok(inbox
            .into_iter()
            .enumerate()
            .filter_map(|(lo, mut all)| {
                let g = *parts_of.get(&lo)?;
                all.sort_by(|a, b| a.0.cmp(&b.0));
                let total: u64 = all.iter().map(|x| x.1).sum();
                Some((lo, quantile_splitters(&all, total, g)))
            })
            .collect())
    }

    /// One round moving every tagged record to its destination machine.
    fn route_tagged<K: Clone + Send + Sync, X: Record>(
        &mut self,
        blocks: Vec<Vec<((K, u64), X)>>,
        dest: Vec<Vec<usize>>,
    ) -> Result<Vec<Vec<((K, u64), X)>>> {
        let m = blocks.len();
        let moving: Vec<Vec<(usize, ((K, u64), X))>> = blocks
            .into_iter()
            .zip(dest)
            .map(|(b, d)| d.into_iter().zip(b).collect())
            .collect();
        let zero = vec![0usize; m];
        self.route_counted(moving, &zero, |t: &((K, u64), X)| t.1.units() + 1)
    }

    /// One sweep of a tree inside every range, all ranges in lockstep, with
    /// `units` per tree edge. Downward sweeps spread data from the first
    /// machine of each range; upward sweeps gather into it.
    fn range_sweep(&mut self, ranges: &[(usize, usize)], units: usize, resident: &[usize], up: bool) -> Result<()> {
        let m = resident.len();
        let units = units.max(1);
        // Down: a parent sends `fanout` copies. Up: a parent holds `fanout` arrivals.
        let max_res = resident.iter().copied().max().unwrap_or(0);
        let fanout = if up {
            self.cfg.local_memory.saturating_sub(max_res + units) / units
        } else {
            self.cfg.message_budget() / units
        }
        .max(1);
        let mut steps: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        let mut holders: Vec<usize> = vec![1; ranges.len()];
        loop {
            let mut sent = vec![0usize; m];
            let mut received = vec![0usize; m];
            let mut any = false;
            for (k, &(lo, hi)) in ranges.iter().enumerate() {
                let h = holders[k];
                let next = (h * (fanout + 1)).min(hi - lo);
                for dst in h..next {
                    let src = (dst - h) / fanout;
                    sent[lo + src] += units;
                    received[lo + dst] += units;
                    any = true;
                }
                holders[k] = next;
            }
            if !any {
                break;
            }
            steps.push(if up { (received, sent) } else { (sent, received) });
        }
        if up {
            steps.reverse();
        }
        for (sent, received) in steps {
            let loads: Vec<usize> = (0..m).map(|i| resident[i] + units + received[i]).collect();
            if let Err(v) = self.barrier(loads, sent, received) {
                return Err(self.violation_error(v));
            }
        }
        Ok(())
    }

    /// Spreads records evenly over the machines, keeping their global order.
    /// Prefix sums of the counts go up and down a tree, then one routing round.
    fn balance<X: Record>(&mut self, bufs: Vec<Vec<X>>) -> Result<Vec<Vec<X>>> {
        let m = bufs.len();
        let total: usize = bufs.iter().map(Vec::len).sum();
        let per = total.div_ceil(m).max(1);
        if bufs.iter().all(|b| b.len() <= per) {
            return Ok(bufs);
        }
        let resident: Vec<usize> = bufs.iter().map(|b| b.units()).collect();
        self.tree_broadcast(1, &resident)?;
        self.tree_broadcast(1, &resident)?;
        let mut pos = 0usize;
        let outgoing: Vec<Vec<(usize, X)>> = bufs
            .into_iter()
            .map(|b| {
                b.into_iter()
                    .map(|x| {
                        pos += 1;
                        ((pos - 1) / per, x)
                    })
                    .collect()
            })
            .collect();
        let zero = vec![0usize; m];
        self.route_counted(outgoing, &zero, |x: &X| x.units())
    }

    /// [`Runtime::route`] with an explicit unit count per message, failing on violation.
    fn route_counted<X: Clone + Send + Sync, U: Fn(&X) -> usize>(
        &mut self,
        outgoing: Vec<Vec<(usize, X)>>,
        resident: &[usize],
        units: U,
    ) -> Result<Vec<Vec<X>>> {
        let m = resident.len();
        let mut inbox: Vec<Vec<X>> = (0..m).map(|_| Vec::new()).collect();
        let mut sent = vec![0usize; m];
        let mut received = vec![0usize; m];
        for (src, msgs) in outgoing.into_iter().enumerate() {
            for (dst, x) in msgs {
                let u = units(&x);
                sent[src] += u;
                received[dst] += u;
                inbox[dst].push(x);
            }
        }
        let loads: Vec<usize> = (0..m).map(|i| resident[i] + received[i]).collect();
        match self.barrier(loads, sent, received) {
            Ok(()) => Ok(inbox),
            Err(v) => Err(self.violation_error(v)),
        }
    }
}

/// A simulated MPC computation: one buffer of records per machine plus meters.
///
/// Communication only happens through the metered primitives; each of them
/// is a sequence of synchronous rounds closed by a barrier at which loads and
/// message volumes are checked when `enforce_limits` is on.
#[derive(Clone, Debug)]
pub struct MpcComputation<R> {
    rt: Runtime,
    machines: Vec<Vec<R>>,
}

impl<R: Record> MpcComputation<R> {
    /// Distributes `input` over the machines in contiguous blocks of
    /// `ceil(units / machines)` units each; a record goes to the block its
    /// first unit falls in.
    pub fn scatter(input: Vec<R>, cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        let total: usize = input.iter().map(Record::units).sum();
        let m = cfg.machines;
        let s = cfg.local_memory;
        if total > m * s {
            return Err(Error::Capacity {
                needed: total,
                machines: m,
                capacity: s,
            });
        }
        let block = total.div_ceil(m).max(1);
        let mut machines: Vec<Vec<R>> = (0..m).map(|_| Vec::new()).collect();
        let mut start = 0usize;
        for r in input {
            let u = r.units();
            machines[(start / block).min(m - 1)].push(r);
            start += u;
        }
        let mut rt = Runtime::new(cfg);
        let loads: Vec<usize> = machines.iter().map(|b| b.units()).collect();
        rt.observe(&loads);
        if rt.cfg.enforce_limits {
            if let Some(mi) = loads.iter().position(|&l| l > s) {
                return Err(Error::MemoryExceeded {
                    round: 0,
                    machine: mi,
                    load: loads[mi],
                    limit: s,
                });
            }
        }
        Ok(MpcComputation { rt, machines })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.rt.cfg
    }

    pub fn machines(&self) -> &[Vec<R>] {
        &self.machines
    }

    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    pub fn rounds(&self) -> usize {
        self.rt.rounds
    }

    pub fn loads(&self) -> Vec<usize> {
        self.machines.iter().map(|b| b.units()).collect()
    }

    pub fn trace(&self) -> &[RoundTrace] {
        &self.rt.trace
    }

    pub fn report(&self) -> ResourceReport {
        ResourceReport {
            rounds_used: self.rt.rounds,
            peak_local_memory: self.rt.peak.iter().copied().max().unwrap_or(0),
            total_memory: self.rt.total_peak,
            total_messages: self.rt.messages,
            machine_count: self.rt.cfg.machines,
            local_memory_s: self.rt.cfg.local_memory,
            seed: self.rt.cfg.seed,
        }
    }

    /// Random stream for `machine` in the current round, derived from the root
    /// seed by counter-based splitting.
    pub fn rng(&self, machine: usize) -> ChaCha8Rng {
        stream_rng(self.rt.cfg.seed, self.rt.rounds as u64, machine as u64)
    }

    /// Collects all records in machine order. Output extraction, not a round.
    pub fn gather(self) -> Vec<R> {
        self.machines.into_iter().flatten().collect()
    }

    /// Purely local computation on every machine (no communication, no round).
    ///
    /// A machine may stage at most `c_msg * s` units between barriers.
    pub fn map_local<S, F>(self, f: F) -> Result<MpcComputation<S>>
    where
        S: Record,
        F: Fn(usize, Vec<R>) -> Vec<S> + Sync + Send,
    {
        let MpcComputation { mut rt, machines } = self;
        let out: Vec<Vec<S>> = machines
            .into_par_iter()
            .enumerate()
            .map(|(i, buf)| f(i, buf))
            .collect();
        let loads: Vec<usize> = out.iter().map(|b| b.units()).collect();
        rt.observe(&loads);
        if rt.cfg.enforce_limits {
            let budget = rt.cfg.message_budget();
            if let Some(m) = loads.iter().position(|&l| l > budget) {
                return Err(Error::MemoryExceeded {
                    round: rt.rounds,
                    machine: m,
                    load: loads[m],
                    limit: budget,
                });
            }
        }
        Ok(MpcComputation { rt, machines: out })
    }

    /// One round in which every record is sent to `dest(machine, record)`.
    pub fn exchange<F>(&mut self, dest: F) -> Result<()>
    where
        F: Fn(usize, &R) -> usize + Sync,
    {
        let m = self.machine_count();
        let outgoing: Vec<Vec<(usize, R)>> = std::mem::take(&mut self.machines)
            .into_iter()
            .enumerate()
            .map(|(i, buf)| {
                buf.into_iter()
                    .map(|r| {
                        let d = dest(i, &r);
                        assert!(d < m, "destination {d} out of range");
                        (d, r)
                    })
                    .collect()
            })
            .collect();
        let resident = vec![0; m];
        match self.rt.route(outgoing, &resident) {
            Ok(inbox) => {
                self.machines = inbox;
                Ok(())
            }
            Err((v, inbox)) => {
                self.machines = inbox;
                Err(self.rt.violation_error(v))
            }
        }
    }

    /// Globally sorts records by `key` (stable): after the call, machine `i`
    /// holds keys no larger than those on machine `i + 1`, each buffer sorted.
    ///
    /// Sample sort: regular samples of the locally sorted buffers pick the
    /// splitters (sorted recursively when they do not fit on machine 0), a
    /// broadcast tree ships the splitters and one round routes the records.
    /// On error the buffer contents are unspecified.
    pub fn sort_by_key<K, F>(&mut self, key: F) -> Result<()>
    where
        K: Ord + Clone + Record,
        F: Fn(&R) -> K + Sync,
    {
        let keyed: Vec<Vec<(K, R)>> = std::mem::take(&mut self.machines)
            .into_par_iter()
            .map(|buf| {
                let mut v: Vec<(K, R)> = buf.into_iter().map(|r| (key(&r), r)).collect();
                v.sort_by(|a, b| a.0.cmp(&b.0));
                v
            })
            .collect();
        let sorted = self.rt.sample_sort(keyed)?;
        self.machines = strip(sorted);
        Ok(())
    }

    /// Co-locates every group of records with equal `key` on one machine, with
    /// each group contiguous in that machine's buffer.
    ///
    /// A group larger than `s` units is reported as a key overflow.
    pub fn shuffle_by_key<K, F>(&mut self, key: F) -> Result<()>
    where
        K: Hash + Eq + Ord + Clone + Debug + Send + Sync,
        F: Fn(&R) -> K + Sync,
    {
        let limit = self.rt.cfg.local_memory;
        if self.rt.cfg.enforce_limits {
            let mut groups: HashMap<K, usize> = HashMap::new();
            for r in self.machines.iter().flatten() {
                *groups.entry(key(r)).or_default() += r.units();
            }
            if let Some((k, size)) = groups
                .into_iter()
                .filter(|g| g.1 > limit)
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            {
                return Err(Error::KeyOverflow {
                    round: self.rt.rounds + 1,
                    key: format!("{k:?}"),
                    size,
                    limit,
                });
            }
        }
        self.sort_by_key(|r| fingerprint(&key(r)))?;
        // Fingerprint collisions may interleave groups; a stable local sort restores contiguity.
        for buf in &mut self.machines {
            let mut keyed: Vec<(u64, K, R)> =
                buf.drain(..).map(|r| (fingerprint(&key(&r)), key(&r), r)).collect();
            keyed.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
            buf.extend(keyed.into_iter().map(|t| t.2));
        }
        self.pack_groups(&key)
    }

    /// Moves groups that straddle a machine boundary so that every group sits
    /// on one machine. Neighbours first exchange their boundary keys (one
    /// round); if any group straddles, group sizes are prefix-summed up and
    /// down a tree and groups are repacked in order by next fit.
    fn pack_groups<K, F>(&mut self, key: &F) -> Result<()>
    where
        K: Hash + Eq + Clone + Send + Sync,
        F: Fn(&R) -> K + Sync,
    {
        let m = self.machine_count();
        if m == 1 {
            return Ok(());
        }
        let resident = self.loads();
        let mut sent = vec![0usize; m];
        let mut received = vec![0usize; m];
        for i in 1..m {
            if !self.machines[i].is_empty() {
                sent[i] += 1;
                received[i - 1] += 1;
            }
        }
        let loads: Vec<usize> = (0..m).map(|i| resident[i] + received[i]).collect();
        if let Err(v) = self.rt.barrier(loads, sent, received) {
            return Err(self.rt.violation_error(v));
        }
        // Runs of equal keys in global order, as (key, units, owners).
        let mut runs: Vec<(K, usize)> = Vec::new();
        let mut first_machine: Vec<usize> = Vec::new();
        let mut straddles = false;
        for (i, buf) in self.machines.iter().enumerate() {
            for r in buf {
                let k = key(r);
                match runs.last_mut() {
                    Some(last) if last.0 == k => {
                        last.1 += r.units();
                        if *first_machine.last().expect("run exists") != i {
                            straddles = true;
                        }
                    }
                    _ => {
                        runs.push((k, r.units()));
                        first_machine.push(i);
                    }
                }
            }
        }
        if !straddles {
            return Ok(());
        }
        let s = self.rt.cfg.local_memory;
        let total: usize = runs.iter().map(|r| r.1).sum();
        let largest = runs.iter().map(|r| r.1).max().unwrap_or(0);
        let cap = (2 * total.div_ceil(m)).max(largest).min(s).max(1);
        let mut dest_of: HashMap<K, usize> = HashMap::new();
        let (mut machine, mut fill) = (0usize, 0usize);
        for (k, units) in runs {
            if dest_of.contains_key(&k) {
                continue;
            }
            if fill > 0 && fill + units > cap {
                machine += 1;
                fill = 0;
            }
            if machine >= m {
                return Err(Error::Capacity {
                    needed: total,
                    machines: m,
                    capacity: s,
                });
            }
            fill += units;
            dest_of.insert(k, machine);
        }
        let resident = self.loads();
        let values = resident.iter().map(|&l| l as u64).collect();
        self.converge_cast(values, |a, b| a + b)?;
        self.rt.tree_broadcast(1, &resident)?;
        self.exchange(|_, r| dest_of[&key(r)])
    }

    /// Sends a payload of at most `floor(sqrt(s))` units from machine 0 to every
    /// machine; returns the per-machine copies.
    pub fn broadcast<P: Record>(&mut self, payload: P) -> Result<Vec<P>> {
        let limit = isqrt(self.rt.cfg.local_memory);
        let u = payload.units();
        if u > limit {
            return Err(Error::usage(format!(
                "broadcast payload of {u} units exceeds floor(sqrt(s)) = {limit}"
            )));
        }
        let resident = self.loads();
        self.rt.tree_broadcast(u, &resident)?;
        Ok(vec![payload; self.machine_count()])
    }

    /// Combines one value per machine up a tree; the result lands on machine 0.
    pub fn converge_cast<V, C>(&mut self, values: Vec<V>, combine: C) -> Result<V>
    where
        V: Record,
        C: Fn(V, V) -> V,
    {
        let m = self.machine_count();
        assert_eq!(values.len(), m, "one value per machine");
        let unit = values.iter().map(Record::units).max().unwrap_or(1).max(1);
        let fanin = (self.rt.cfg.message_budget() / unit).max(2);
        let resident = self.loads();
        let mut active: Vec<Option<V>> = values.into_iter().map(Some).collect();
        let mut stride = 1usize;
        while stride < m {
            let next = stride * fanin;
            let mut sent = vec![0usize; m];
            let mut received = vec![0usize; m];
            for leader in (0..m).step_by(next) {
                let mut acc = active[leader].take();
                for child in (leader + stride..(leader + next).min(m)).step_by(stride) {
                    if let Some(v) = active[child].take() {
                        sent[child] += v.units();
                        received[leader] += v.units();
                        acc = Some(match acc {
                            Some(a) => combine(a, v),
                            None => v,
                        });
                    }
                }
                active[leader] = acc;
            }
            let loads: Vec<usize> = (0..m)
                .map(|i| resident[i] + active[i].as_ref().map_or(0, Record::units))
                .collect();
            if let Err(v) = self.rt.barrier(loads, sent, received) {
                return Err(self.rt.violation_error(v));
            }
            stride = next;
        }
        Ok(active[0].take().expect("machine 0 holds the result"))
    }

    /// Global minimum of one scalar per machine, delivered to machine 0.
    pub fn converge_cast_min<V>(&mut self, values: Vec<V>) -> Result<V>
    where
        V: Record + PartialOrd,
    {
        self.converge_cast(values, |a, b| if b < a { b } else { a })
    }
}

/// Keys at which the cumulative weight first reaches `ceil(total * j / m)`, `j = 1..m`.
fn quantile_splitters<K: Clone>(sorted: &[(K, u64)], total: u64, m: usize) -> Vec<K> {
    let mut out = Vec::with_capacity(m - 1);
    let mut cum = 0u64;
    let target = |j: usize| (total as u128 * j as u128).div_ceil(m as u128) as u64;
    for (k, w) in sorted {
        cum += w;
        while out.len() + 1 < m && target(out.len() + 1) <= cum {
            out.push(k.clone());
        }
    }
    while out.len() + 1 < m {
        match sorted.last() {
            Some(last) => out.push(last.0.clone()),
            None => break,
        }
    }
    out
}

/// Comparator stages of Batcher's odd-even merge sort on `m` wires; comparators
/// touching wires beyond `m` are dropped (those wires would hold only +inf).
pub(crate) fn merge_network_stages(m: usize) -> Vec<Vec<(usize, usize)>> {
    let n = m.next_power_of_two();
    let mut stages = Vec::new();
    let mut p = 1;
    while p < n {
        let mut k = p;
        while k >= 1 {
            let mut stage = Vec::new();
            let mut j = k % p;
            while j + k < n {
                for i in 0..k.min(n - j - k) {
                    let (a, b) = (i + j, i + j + k);
                    if a / (2 * p) == b / (2 * p) && b < m {
                        stage.push((a, b));
                    }
                }
                j += 2 * k;
            }
            if !stage.is_empty() {
                stages.push(stage);
            }
            k /= 2;
        }
        p *= 2;
    }
    stages
}

/// Shares `r` machines among parts in proportion to their units (largest
/// remainder), giving every nonempty part at least one machine and no part
/// more machines than it fills to `per_machine` units. Machines left over
/// stay empty.
fn allocate_machines(units: &[usize], r: usize, per_machine: usize) -> Vec<usize> {
    let total: usize = units.iter().sum();
    if total == 0 {
        return vec![0; units.len()];
    }
    let per_machine = per_machine.max(1);
    let need: Vec<usize> = units.iter().map(|&u| u.div_ceil(per_machine)).collect();
    let mut w: Vec<usize> = units
        .iter()
        .zip(&need)
        .map(|(&u, &n)| if u == 0 { 0 } else { (u * r / total).clamp(1, n) })
        .collect();
    let mut used: usize = w.iter().sum();
    while used > r {
        let j = (0..w.len()).max_by_key(|&j| w[j]).expect("nonempty");
        w[j] -= 1;
        used -= 1;
    }
    let mut order: Vec<usize> = (0..w.len()).filter(|&j| units[j] > 0).collect();
    // Most loaded machines first.
    order.sort_by(|&a, &b| (units[b] * w[a]).cmp(&(units[a] * w[b])).then(a.cmp(&b)));
    while used < r {
        let before = used;
        for &j in &order {
            if used < r && w[j] < need[j] {
                w[j] += 1;
                used += 1;
            }
        }
        if used == before {
            break;
        }
    }
    w
}

fn strip_tags<K, X>(blocks: Vec<Vec<((K, u64), X)>>) -> Vec<Vec<(K, X)>> {
    blocks
        .into_iter()
        .map(|v| v.into_iter().map(|((k, _), x)| (k, x)).collect())
        .collect()
}

fn strip<K, R>(keyed: Vec<Vec<(K, R)>>) -> Vec<Vec<R>> {
    keyed
        .into_iter()
        .map(|v| v.into_iter().map(|t| t.1).collect())
        .collect()
}

/// Splits a sorted buffer into up to `q` chunks of about equal units and returns
/// the middle key of each chunk weighted by the chunk's units. Taking the middle
/// rather than the end keeps rank estimates built from many machines unbiased.
fn regular_samples<K: Clone, R: Record>(sorted: &[(K, R)], q: usize) -> Vec<(K, u64)> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let total: usize = sorted.iter().map(|(_, r)| r.units()).sum();
    let q = q.min(sorted.len()).max(1);
    let mut out = Vec::with_capacity(q);
    let mut cum = 0usize;
    let mut last_cut = 0usize;
    let mut first = 0usize;
    let mut j = 1usize;
    for (i, (_, r)) in sorted.iter().enumerate() {
        cum += r.units();
        let is_last = i + 1 == sorted.len();
        if is_last || (j < q && cum * q >= j * total) {
            out.push((sorted[(first + i) / 2].0.clone(), (cum - last_cut) as u64));
            last_cut = cum;
            first = i + 1;
            j += 1;
        }
    }
    out
}

fn isqrt(x: usize) -> usize {
    let mut r = (x as f64).sqrt() as usize;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

/// Regular samples per machine, as a multiple of the machine count.
const SAMPLES_PER_MACHINE_FACTOR: usize = 2;

/// Deterministic 64-bit fingerprint used to place shuffle keys.
pub fn fingerprint<K: Hash>(key: &K) -> u64 {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    h.finish()
}

/// Counter-based random stream: the same `(seed, a, b)` always yields the
/// same sequence, independent of scheduling.
pub fn stream_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b);
    rng
}
