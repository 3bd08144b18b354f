//! Acceptance suite: every criterion prints one PASS/FAIL line, and the
//! process exits nonzero if any of them fails.

use std::time::Instant;

use mpc_kcenter::constants::{
    round_budget, C_ASSIGN, C_HIGHDIM_RS, C_KCENTER, C_LOWDIM_MDS, C_LOWDIM_RS,
};
use mpc_kcenter::geohash::{annulus_free_region_check, face_hash, FaceHashParams};
use mpc_kcenter::geometry::{Dataset, Point};
use mpc_kcenter::highdim_rs::highdim_ruling_set;
use mpc_kcenter::kcenter::{
    assign_highdim, assign_lowdim, coarse_opt_estimate, jl_target_dim, jl_transform, solve_kcenter,
    KCenterMode,
};
use mpc_kcenter::kcenter::estimate::DEFAULT_C_EST;
use mpc_kcenter::lowdim_mds::{approx_mds, mds_config};
use mpc_kcenter::lowdim_rs::{
    localized_mis, lowdim_config, lowdim_ruling_set, mis_hash_params, sequential_mis,
};
use mpc_kcenter::luby_graphs::{
    analytic_chain_probability, build_lower_bound_instance, chain_event_frequency, copies_for_boost,
    exact_chain_probability, lower_bound_run,
};
use mpc_kcenter::mpc::{MpcConfig, ResourceReport};
use mpc_kcenter::oracles::{oracle_kcenter_opt, oracle_mds_size, verify_ruling_set};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Domination constant of the high-dimensional calibration family.
const C_DOM: f64 = 1.0;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(n: usize, d: usize, side: f64, r: &mut ChaCha8Rng) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>() * side).collect()).collect();
    Dataset::from_rows(&rows).unwrap()
}

/// `clusters` Gaussian blobs of spread `spread` with centres in `[0, side]^d`.
fn blobs(n: usize, d: usize, clusters: usize, side: f64, spread: f64, r: &mut ChaCha8Rng) -> Dataset {
    let centres: Vec<Vec<f64>> = (0..clusters).map(|_| (0..d).map(|_| r.random::<f64>() * side).collect()).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = &centres[i % clusters];
            c.iter()
                .map(|&x| {
                    let g: f64 = StandardNormal.sample(r);
                    x + spread * g
                })
                .collect()
        })
        .collect();
    Dataset::from_rows(&rows).unwrap()
}

fn dist(a: &Point, b: &Point) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn linf(a: &Point, b: &Point) -> f64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn domination(p: &Dataset, c: &[Point]) -> f64 {
    p.iter()
        .map(|x| c.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// One metered run for the round-budget criterion.
struct Metered {
    alg: &'static str,
    c: usize,
    n: usize,
    s: usize,
    report: ResourceReport,
}

impl Metered {
    fn new(alg: &'static str, c: usize, n: usize, cfg: &MpcConfig, report: &ResourceReport) -> Self {
        Metered {
            alg,
            c,
            n,
            s: cfg.local_memory,
            report: report.clone(),
        }
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1(meter: &mut Vec<Metered>) -> Outcome {
    let start = Instant::now();
    let tau = 1.0;
    let mut bad_ind = 0;
    let mut bad_dom = 0;
    let mut worst: f64 = 0.0;
    for i in 0..200u64 {
        let mut r = rng(1000 + i);
        let d = 1 + (i % 3) as usize;
        let eps = if (i / 3) % 2 == 0 { 0.25 } else { 0.5 };
        let n = r.random_range(20..=500);
        let side = (n as f64).powf(1.0 / d as f64) * r.random_range(0.5..3.0);
        let p = if i % 4 == 3 {
            blobs(n, d, 5, side, 0.7, &mut r)
        } else {
            uniform(n, d, side, &mut r)
        };
        let cfg = lowdim_config(&p, tau, eps, 256, i).unwrap();
        let (rs, rep) = lowdim_ruling_set(&p, tau, eps, &cfg).unwrap_or_else(|e| panic!("instance {i} d={d} n={n} s={}: {e}", cfg.local_memory));
        let (independent, radius) = verify_ruling_set(&p, rs.selected.points(), tau).unwrap();
        if !independent {
            bad_ind += 1;
        }
        if radius > (1.0 + 2.0 * eps) * tau {
            bad_dom += 1;
        }
        worst = worst.max(radius / tau);
        meter.push(Metered::new("lowdim_rs", C_LOWDIM_RS, n, &cfg, &rep));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad_ind == 0 && bad_dom == 0 && secs <= 60.0,
        format!(
            "200 instances: {bad_ind} dependent, {bad_dom} over (1+2eps)tau, worst radius {worst:.3} tau, {secs:.1} s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut mismatches = 0;
    let mut adversarial = 0;
    for i in 0..500u64 {
        let mut r = rng(2000 + i);
        let d = 1 + (i % 3) as usize;
        let tau: f64 = r.random_range(0.5..2.0);
        let params = mis_hash_params(d, tau).unwrap();
        let z = params.z();
        let n = r.random_range(10..=150);
        let p = if i % 2 == 0 {
            adversarial += 1;
            // Coordinates on or next to cube faces and level thresholds.
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..d)
                        .map(|_| {
                            let cell = r.random_range(-2..3) as f64 * z;
                            let width = r.random_range(0..=d) as f64 * params.beta();
                            let jitter = [0.0, 1e-9, -1e-9, 0.5 * tau, -0.5 * tau][r.random_range(0..5)];
                            let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                            cell + sign * width + jitter
                        })
                        .collect()
                })
                .collect();
            Dataset::from_rows(&rows).unwrap()
        } else {
            uniform(n, d, 2.0 * z, &mut r)
        };
        let seq = sequential_mis(&p, tau, &params).unwrap();
        let loc = localized_mis(&p, tau, &params).unwrap();
        if seq.selected != loc.selected {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("500 instances ({adversarial} on hash boundaries): {mismatches} mismatches"),
    )
}

fn criterion_3(meter: &mut Vec<Metered>) -> Outcome {
    let tau = 1.0;
    let mut size_bad = 0;
    let mut dom_bad = 0;
    let mut count = 0;
    for i in 0..300u64 {
        let mut r = rng(3000 + i);
        let d = 1 + (i % 2) as usize;
        let eps = if (i / 2) % 2 == 0 { 0.25 } else { 0.5 };
        let n = r.random_range(1..=12);
        let side = r.random_range(1.0..8.0);
        let p = uniform(n, d, side, &mut r);
        let cfg = mds_config(&p, tau, eps, 256, i).unwrap();
        let (ds, rep) = approx_mds(&p, tau, eps, &cfg).unwrap();
        let opt = oracle_mds_size(&p, tau).unwrap();
        if ds.centers.len() as f64 > (1.0 + eps) * opt as f64 {
            size_bad += 1;
        }
        let radius = domination(&p, ds.centers.points());
        if radius > (1.0 + 2.0 * eps) * (1.0 + eps) * tau {
            dom_bad += 1;
        }
        count += 1;
        meter.push(Metered::new("lowdim_mds", C_LOWDIM_MDS, n, &cfg, &rep));
    }
    outcome(
        size_bad == 0 && dom_bad == 0,
        format!("{count} instances: {size_bad} over (1+eps) MDS, {dom_bad} over the domination bound"),
    )
}

/// Shared harness of the two k-center criteria: n = 12, d in {1, 2}.
fn kcenter_harness(mode: KCenterMode, factor: f64, meter: &mut Vec<Metered>) -> Outcome {
    let n = 12;
    let eps = 0.3;
    let seeds = 100u64;
    let mut cap_bad = 0;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let mut r = rng(4000 + seed);
        let d = 1 + (seed % 2) as usize;
        let k = 2 + (seed % 3) as usize;
        let p = if seed % 3 == 0 {
            uniform(n, d, 10.0, &mut r)
        } else {
            blobs(n, d, k, 10.0, 0.5, &mut r)
        };
        let cfg = MpcConfig::new(1 << 15, 4, seed).unwrap();
        let sol = solve_kcenter(&p, k, eps, mode, &cfg).unwrap();
        let opt = oracle_kcenter_opt(&p, k).unwrap();
        if sol.centers.len() > mode.center_cap(k, eps) || sol.centers.len() > ((1.0 + eps) * k as f64).ceil() as usize {
            cap_bad += 1;
        }
        let cost = p
            .iter()
            .zip(&sol.assignment)
            .map(|(x, &j)| dist(x, &sol.centers[j]))
            .fold(0.0, f64::max);
        assert_eq!(cost, sol.cost, "reported cost must match the assignment");
        if cost > (factor + 3.0 * eps) * opt {
            failures += 1;
        }
        if opt > 0.0 {
            worst = worst.max(cost / opt);
        }
        meter.push(Metered::new("kcenter", C_KCENTER, n, &cfg, &sol.report));
    }
    let frac = failures as f64 / seeds as f64;
    outcome(
        cap_bad == 0 && frac <= 2.0 / n as f64,
        format!(
            "{seeds} seeds: {cap_bad} over the center cap, failure fraction {frac:.3} (limit {:.3}), worst cost/OPT {worst:.3}",
            2.0 / n as f64
        ),
    )
}

fn criterion_4(meter: &mut Vec<Metered>) -> Outcome {
    kcenter_harness(KCenterMode::RsLowdim, 2.0, meter)
}

fn criterion_5(meter: &mut Vec<Metered>) -> Outcome {
    kcenter_harness(KCenterMode::MdsBicriteria, 1.0, meter)
}

fn criterion_6(meter: &mut Vec<Metered>) -> Outcome {
    let eps = 0.5;
    let tau = 0.6;
    let mut dependent = 0;
    let mut ratios = Vec::new();
    for (j, n) in [100usize, 400, 1600].into_iter().enumerate() {
        for rep in 0..3u64 {
            let mut r = rng(6000 + 10 * j as u64 + rep);
            let p = uniform(n, 20, 1.0, &mut r);
            let cfg = MpcConfig::for_input(40 * n, 8 * ((20 * n) as f64).sqrt() as usize, rep).unwrap();
            let (rs, report) = highdim_ruling_set(&p, tau, eps, &cfg).unwrap();
            let (independent, radius) = verify_ruling_set(&p, rs.selected.points(), tau).unwrap();
            if !independent {
                dependent += 1;
            }
            let ln = (n as f64).ln();
            let scale = tau / eps * ln / ln.ln();
            ratios.push((n, radius / scale));
            meter.push(Metered::new("highdim_rs", C_HIGHDIM_RS, n, &cfg, &report));
        }
    }
    let worst = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let shown: Vec<String> = ratios.iter().map(|(n, x)| format!("{n}:{x:.3}")).collect();
    outcome(
        dependent == 0 && worst <= C_DOM,
        format!(
            "{dependent} dependent runs; radius / (tau log n / (eps log log n)) = [{}], bound c_dom = {C_DOM}",
            shown.join(" ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let samples = 100_000;
    let mut violations = Vec::new();
    for d in 1..=4usize {
        for (beta, ell_factor) in [(1.0, 1.0), (1.0, 2.0), (0.3, 1.5)] {
            let base = FaceHashParams::for_beta(d, beta).unwrap();
            let params = FaceHashParams::new(d, beta, base.ell() * ell_factor).unwrap();
            let z = params.z();
            let ell = params.ell();
            let mut r = rng(7000 + 10 * d as u64 + (ell_factor * 10.0) as u64);
            let near_face = |r: &mut ChaCha8Rng| -> Vec<f64> {
                (0..d)
                    .map(|_| {
                        let cell = r.random_range(-3..3) as f64 * z;
                        if r.random_bool(0.5) {
                            cell + r.random_range(0.0..z)
                        } else {
                            cell + r.random_range(-(d as f64) * beta..(d as f64) * beta)
                        }
                    })
                    .collect()
            };
            let (mut diam, mut sep, mut cons) = (0, 0, 0);
            for _ in 0..samples {
                let x = Point::from_f64(&near_face(&mut r)).unwrap();
                // Diameter: partner within ell in every coordinate.
                let y = Point::from_f64(&x.coords().iter().map(|c| c + r.random_range(-ell..ell)).collect::<Vec<_>>()).unwrap();
                let (hx, hy) = (face_hash(&x, &params), face_hash(&y, &params));
                if hx == hy && dist(&x, &y) > ell {
                    diam += 1;
                }
                // Separation: partner within 2 beta in l-infinity.
                let w = Point::from_f64(&x.coords().iter().map(|c| c + r.random_range(-2.0 * beta..2.0 * beta)).collect::<Vec<_>>()).unwrap();
                let hw = face_hash(&w, &params);
                if hx != hw && hx.level() == hw.level() && linf(&x, &w) <= beta {
                    sep += 1;
                }
                // Consistency: corners of a beta-cube plus random interior points.
                let mut ids = std::collections::BTreeSet::new();
                for corner in 0..1usize << d {
                    let c: Vec<f64> = (0..d).map(|k| x.coords()[k] + if corner >> k & 1 == 1 { beta } else { 0.0 }).collect();
                    ids.insert(face_hash(&Point::from_f64(&c).unwrap(), &params));
                }
                for _ in 0..4 {
                    let c: Vec<f64> = x.coords().iter().map(|v| v + r.random_range(0.0..=beta)).collect();
                    ids.insert(face_hash(&Point::from_f64(&c).unwrap(), &params));
                }
                if ids.len() > d + 1 {
                    cons += 1;
                }
            }
            let annulus = annulus_free_region_check(&params, beta, samples, 7 + d as u64).unwrap();
            if diam + sep + cons > 0 || !annulus {
                violations.push(format!(
                    "d={d} beta={beta} ell={ell:.2}: diameter {diam}, separation {sep}, consistency {cons}, annulus {annulus}"
                ));
            }
        }
    }
    outcome(
        violations.is_empty(),
        if violations.is_empty() {
            format!("12 configurations x {samples} samples: zero violations")
        } else {
            violations.join("; ")
        },
    )
}

fn criterion_8() -> Outcome {
    let n = 12;
    let runs = 200u64;
    let mut failures = 0;
    for i in 0..runs {
        let mut r = rng(8000 + i);
        let d = 1 + (i % 3) as usize;
        let k = 1 + (i % 3) as usize;
        let p = if i % 2 == 0 {
            uniform(n, d, 10.0, &mut r)
        } else {
            blobs(n, d, k + 1, 10.0, 0.3, &mut r)
        };
        let opt = oracle_kcenter_opt(&p, k).unwrap();
        let est = coarse_opt_estimate(&p, k, i).unwrap();
        let upper = DEFAULT_C_EST * (n as f64).powi(7) * opt;
        if !(opt <= est.e && est.e <= upper) {
            failures += 1;
        }
    }
    let frac = failures as f64 / runs as f64;
    outcome(
        frac <= 2.0 / n as f64,
        format!("{runs} runs: failure rate {frac:.3} (limit {:.3})", 2.0 / n as f64),
    )
}

/// Runs on the metering grid: growing n with s around n^0.6.
fn metering_grid(meter: &mut Vec<Metered>) {
    for n in [200usize, 1000, 4000] {
        let smin = ((2 * n) as f64).powf(0.6).ceil() as usize;
        let mut r = rng(9000 + n as u64);
        let p = uniform(n, 2, (n as f64).sqrt() * 40.0, &mut r);
        let cfg = lowdim_config(&p, 1.0, 0.5, smin, 1).unwrap();
        let (rs, rep) = lowdim_ruling_set(&p, 1.0, 0.5, &cfg).unwrap();
        meter.push(Metered::new("lowdim_rs", C_LOWDIM_RS, n, &cfg, &rep));
        let (_, rep) = assign_lowdim(&p, &rs.selected, 1.0, 0.5, &cfg).unwrap();
        meter.push(Metered::new("assign_lowdim", C_ASSIGN, n, &cfg, &rep));

        let q = uniform(n, 2, (n as f64).sqrt() * 600.0, &mut r);
        let cfg = mds_config(&q, 1.0, 0.5, smin, 1).unwrap();
        let (_, rep) = approx_mds(&q, 1.0, 0.5, &cfg).unwrap();
        meter.push(Metered::new("lowdim_mds", C_LOWDIM_MDS, n, &cfg, &rep));

        let h = uniform(n, 20, 1.0, &mut r);
        let cfg = MpcConfig::for_input(40 * n, ((20 * n) as f64).powf(0.6).ceil() as usize, 1).unwrap();
        let (rs, rep) = highdim_ruling_set(&h, 0.1, 0.5, &cfg).unwrap();
        meter.push(Metered::new("highdim_rs", C_HIGHDIM_RS, n, &cfg, &rep));
        let (_, rep) = assign_highdim(&h, &rs.selected, 0.1, 0.5, &cfg).unwrap();
        meter.push(Metered::new("assign_highdim", C_ASSIGN, n, &cfg, &rep));
    }
    for mode in [KCenterMode::RsLowdim, KCenterMode::RsHighdim] {
        let n = 200;
        let mut r = rng(9100);
        let p = blobs(n, 2, 5, 2000.0, 5.0, &mut r);
        let cfg = MpcConfig::for_input(45 * n, 2048, 3).unwrap();
        let sol = solve_kcenter(&p, 5, 0.5, mode, &cfg).unwrap();
        meter.push(Metered::new("kcenter", C_KCENTER, n, &cfg, &sol.report));
    }
}

fn criterion_9(meter: &mut Vec<Metered>) -> Outcome {
    metering_grid(meter);
    let mut over_rounds = Vec::new();
    let mut over_memory = 0;
    let mut worst: std::collections::BTreeMap<&str, f64> = std::collections::BTreeMap::new();
    for m in meter.iter() {
        let budget = round_budget(m.c, m.n, m.s);
        if m.report.rounds_used > budget {
            over_rounds.push(format!("{} n={} s={}: {} > {budget}", m.alg, m.n, m.s, m.report.rounds_used));
        }
        if m.report.peak_local_memory > m.s {
            over_memory += 1;
        }
        let use_frac = m.report.rounds_used as f64 / budget as f64;
        let e = worst.entry(m.alg).or_insert(0.0);
        *e = e.max(use_frac);
    }
    let usage: Vec<String> = worst.iter().map(|(a, f)| format!("{a} {:.0}%", 100.0 * f)).collect();
    outcome(
        over_rounds.is_empty() && over_memory == 0,
        format!(
            "{} runs: {} over budget, {over_memory} over s; peak budget use {}{}",
            meter.len(),
            over_rounds.len(),
            usage.join(", "),
            if over_rounds.is_empty() { String::new() } else { format!(" [{}]", over_rounds.join("; ")) }
        ),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let m = 6;
    let trials = 10_000;
    let analytic = analytic_chain_probability(m);
    let exact = exact_chain_probability(m);
    let freq = chain_event_frequency(m, trials, 10).unwrap();
    let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt();
    let within = (freq - analytic).abs() <= 3.0 * sigma;

    let copies = copies_for_boost(exact, 0.9);
    let inst = build_lower_bound_instance(m, copies).unwrap();
    let runs = 200u64;
    let (mut observed, mut long) = (0, 0);
    for seed in 0..runs {
        let run = lower_bound_run(&inst, 10_000 + seed).unwrap();
        if let Some(r) = run.event_radius {
            observed += 1;
            if r + 1 >= m {
                long += 1;
            }
        }
    }
    let frac = if observed == 0 { 0.0 } else { long as f64 / observed as f64 };
    let secs = start.elapsed().as_secs_f64();
    outcome(
        within && frac >= 0.4 && secs <= 120.0,
        format!(
            "chain frequency {freq:.4} vs stated product {analytic:.4} ({:.1} sigma; exact value {exact:.4}); \
             {copies} copies: radius >= m-1 in {long}/{observed} runs with the event; {secs:.1} s",
            (freq - analytic).abs() / sigma
        ),
    )
}

fn criterion_11() -> Outcome {
    let n = 50;
    let target = jl_target_dim(n);
    let mut good = 0;
    for seed in 0..100u64 {
        let mut r = rng(11_000 + seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..200).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        let p = Dataset::from_rows(&rows).unwrap();
        let q = jl_transform(&p, target, seed).unwrap();
        let ok = (0..n).all(|i| {
            (i + 1..n).all(|j| {
                let ratio = dist(&q[i], &q[j]) / dist(&p[i], &p[j]);
                (0.5..=1.5).contains(&ratio)
            })
        });
        if ok {
            good += 1;
        }
    }
    outcome(good >= 95, format!("target dimension {target}: distortion within 1 +- 0.5 in {good}/100 seeds"))
}

fn main() {
    let mut meter = Vec::new();
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &mut dyn FnMut(&mut Vec<Metered>) -> Outcome| {
        let t = Instant::now();
        let o = f(&mut meter);
        let secs = t.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} [{}] {name}: {} ({secs:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };
    run(1, "low-dimensional ruling set", &mut criterion_1);
    run(2, "sequential and localized MIS agree", &mut |_| criterion_2());
    run(3, "dominating set size", &mut criterion_3);
    run(4, "k-center through ruling sets", &mut criterion_4);
    run(5, "bicriteria k-center", &mut criterion_5);
    run(6, "high-dimensional ruling set", &mut criterion_6);
    run(7, "hash properties", &mut |_| criterion_7());
    run(8, "coarse estimate", &mut |_| criterion_8());
    run(9, "round and memory metering", &mut criterion_9);
    run(10, "one-round Luby lower bound", &mut |_| criterion_10());
    run(11, "random projection distortion", &mut |_| criterion_11());
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
