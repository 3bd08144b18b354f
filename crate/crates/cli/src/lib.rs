//! Command-line front end: point ingestion, configuration, dispatch and
//! JSON reports. All file and stream I/O of the workspace lives here.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::{json, Value};

use mpc_kcenter::geohash::{face_hash, shifted_hash, FaceHashParams, DEFAULT_C_HASH};
use mpc_kcenter::geometry::{dist, dist_inf, Dataset, Point};
use mpc_kcenter::highdim_rs::{chain_from, highdim_ruling_set_with, HighDimParams, DEFAULT_C_AGG, DEFAULT_C_PRE};
use mpc_kcenter::kcenter::{solve_kcenter, KCenterMode};
use mpc_kcenter::lowdim_mds::{approx_mds_with, mds_config, MdsOptions};
use mpc_kcenter::lowdim_rs::{lowdim_config, lowdim_ruling_set};
use mpc_kcenter::luby_graphs::{
    analytic_chain_probability, build_lower_bound_instance, chain_event, draw_labels, exact_chain_probability,
    luby_select, ruling_radius, Graph,
};
use mpc_kcenter::mpc::{stream_rng, MpcConfig};
use mpc_kcenter::oracles::{oracle_kcenter_opt, oracle_mds_size};
use mpc_kcenter::{Error, Result};

pub const SCHEMA: u32 = 1;
pub const SEED_ENV: &str = "MPC_KC_SEED";
/// Local memory used when `--s` is not given and no sizing rule applies.
const DEFAULT_S: usize = 2048;

#[derive(Parser, Debug)]
#[command(name = "mpc-kc", version, about = "k-center, ruling sets and dominating sets on a metered MPC simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Euclidean k-center.
    Kcenter(KCenterArgs),
    /// Ruling set at threshold tau.
    Rs(RsArgs),
    /// Approximate minimum dominating set at radius tau.
    Mds(MdsArgs),
    /// Exact answers for small inputs.
    Oracle(OracleArgs),
    /// One-round Luby on a graph.
    Luby(LubyArgs),
    /// Empirical check of the face hash.
    HashCheck(HashCheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Point file: one point per line, comma or whitespace separated.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Report destination; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Local memory per machine, in units.
    #[arg(long)]
    pub s: Option<usize>,
    /// Number of machines; sized from the input when omitted.
    #[arg(long)]
    pub machines: Option<usize>,
    /// Do not abort when a machine exceeds its memory or message budget.
    #[arg(long)]
    pub no_enforce: bool,
    /// Base seed; the MPC_KC_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Message budget factor: a machine may send `c_msg * s` units per round.
    #[arg(long)]
    pub c_msg: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    RsLowdim,
    RsHighdim,
    Mds,
}

impl From<ModeArg> for KCenterMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::RsLowdim => KCenterMode::RsLowdim,
            ModeArg::RsHighdim => KCenterMode::RsHighdim,
            ModeArg::Mds => KCenterMode::MdsBicriteria,
        }
    }
}

#[derive(Args, Debug)]
pub struct KCenterArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "rs-lowdim")]
    pub mode: ModeArg,
    /// Write `index,center,distance` rows for every input point.
    #[arg(long)]
    pub emit_assignments: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RsMode {
    Lowdim,
    Highdim,
}

#[derive(Args, Debug)]
pub struct RsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "lowdim")]
    pub mode: RsMode,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub eps: f64,
    /// Record label chains from the first N representatives (high-dimensional mode).
    #[arg(long)]
    pub measure_chains: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_C_AGG)]
    pub c_agg: f64,
    #[arg(long, default_value_t = DEFAULT_C_PRE)]
    pub c_pre: f64,
}

#[derive(Args, Debug)]
pub struct MdsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub c_mds: Option<f64>,
    /// Largest bucket solved exactly.
    #[arg(long)]
    pub bucket_cap: Option<usize>,
    /// Largest number of shifts enumerated.
    #[arg(long)]
    pub shift_cap: Option<u64>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Report the exact k-center optimum for this k.
    #[arg(long)]
    pub k: Option<usize>,
    /// Report the exact minimum dominating set size at this radius.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Args, Debug)]
pub struct LubyArgs {
    /// Edge-list file (`u v` per line) or `lowerbound:m:copies`.
    #[arg(long)]
    pub graph: String,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct HashCheckArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub beta: f64,
    /// Bucket diameter bound; derived from beta when omitted.
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C_HASH)]
    pub c_hash: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Errors are reported on standard error.
pub fn parse_and_dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn env_seed(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(flag),
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Kcenter(a) => run_kcenter(a),
        Command::Rs(a) => run_rs(a),
        Command::Mds(a) => run_mds(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Luby(a) => run_luby(a),
        Command::HashCheck(a) => run_hash_check(a),
    }
}

/// Parses the point text format. Blank lines and lines starting with `#`
/// are skipped; line numbers in errors count from 1.
pub fn parse_points(text: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let no = no + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::usage(format!("line {no}: '{tok}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::usage(format!("line {no}: non-finite value '{tok}'")));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::usage(format!(
                    "line {no}: expected {} coordinates, found {}",
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::usage("the input holds no points"));
    }
    Dataset::from_rows(&rows)
}

pub fn ingest_points(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::usage(format!("cannot read {}: {e}", path.display())))?;
    parse_points(&text).map_err(|e| match e {
        Error::Usage(m) => Error::usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load(common: &Common) -> Result<Dataset> {
    let path = common.input.as_ref().ok_or_else(|| Error::usage("--input is required"))?;
    ingest_points(path)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::usage(format!("--eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::usage(format!("--tau must be positive, got {tau}")));
    }
    Ok(())
}

/// Applies the explicit MPC flags to `auto`, the configuration an algorithm
/// would size for itself.
fn mpc_config(common: &Common, units: usize, auto: impl FnOnce(usize, u64) -> Result<MpcConfig>) -> Result<MpcConfig> {
    let seed = env_seed(common.seed)?;
    let mut cfg = match (common.s, common.machines) {
        (Some(s), Some(m)) => MpcConfig::new(s, m, seed)?,
        (Some(s), None) => MpcConfig::for_input(units, s, seed)?,
        (None, Some(m)) => MpcConfig::new(DEFAULT_S, m, seed)?,
        (None, None) => auto(DEFAULT_S, seed)?,
    };
    if let Some(c) = common.c_msg {
        if c == 0 {
            return Err(Error::usage("--c-msg must be positive"));
        }
        cfg.c_msg = c;
    }
    cfg = cfg.with_enforcement(!common.no_enforce);
    cfg.validate()?;
    Ok(cfg)
}

fn rows(p: &Dataset) -> Vec<Vec<f64>> {
    p.iter().map(|x| x.to_f64_vec()).collect()
}

fn envelope(command: &str, seed: u64, cfg: Option<&MpcConfig>, constants: Value, input: Option<&Path>, result: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "seed": seed,
        "input": input.map(|p| p.display().to_string()),
        "mpc_config": cfg,
        "constants": constants,
        "result": result,
    })
}

fn emit(out: Option<&PathBuf>, report: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("reports serialize") + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::usage(format!("cannot write the report: {e}")))
        }
    }
}

fn run_kcenter(a: KCenterArgs) -> Result<()> {
    check_eps(a.eps)?;
    if a.k == 0 {
        return Err(Error::usage("--k must be positive"));
    }
    let p = load(&a.common)?;
    let units = 45 * p.len() * p.dim();
    let cfg = mpc_config(&a.common, units, |s, seed| MpcConfig::for_input(units, s, seed))?;
    let mode = KCenterMode::from(a.mode);
    let sol = solve_kcenter(&p, a.k, a.eps, mode, &cfg)?;
    if let Some(path) = &a.emit_assignments {
        let mut csv = String::from("index,center,distance\n");
        for (i, (x, &j)) in p.iter().zip(&sol.assignment).enumerate() {
            csv.push_str(&format!("{i},{j},{}\n", dist(x, &sol.centers[j])?));
        }
        fs::write(path, csv).map_err(|e| Error::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let result = json!({
        "k": a.k,
        "eps": a.eps,
        "mode": mode,
        "centers": rows(&sol.centers),
        "assignment": sol.assignment,
        "cost": sol.cost,
        "tau_star": sol.tau_star,
        "estimate": sol.estimate,
        "thresholds_tried": sol.thresholds_tried,
        "resource_report": sol.report,
    });
    let report = envelope("kcenter", cfg.seed, Some(&cfg), json!({ "c_msg": cfg.c_msg }), a.common.input.as_deref(), result);
    emit(a.common.output.as_ref(), &report)
}

fn run_rs(a: RsArgs) -> Result<()> {
    check_tau(a.tau)?;
    check_eps(a.eps)?;
    if a.measure_chains.is_some() && a.mode == RsMode::Lowdim {
        return Err(Error::usage("--measure-chains needs --mode highdim"));
    }
    let p = load(&a.common)?;
    match a.mode {
        RsMode::Lowdim => {
            let units = lowdim_units(&p);
            let cfg = mpc_config(&a.common, units, |_, seed| lowdim_config(&p, a.tau, a.eps, 256, seed))?;
            let (rs, report) = lowdim_ruling_set(&p, a.tau, a.eps, &cfg)?;
            let result = json!({
                "mode": "lowdim",
                "tau": a.tau,
                "eps": a.eps,
                "selected": rows(&rs.selected),
                "independence_radius": rs.independence_radius,
                "domination_radius": rs.domination_radius,
                "resource_report": report,
            });
            let out = envelope("rs", cfg.seed, Some(&cfg), json!({ "c_msg": cfg.c_msg }), a.common.input.as_deref(), result);
            emit(a.common.output.as_ref(), &out)
        }
        RsMode::Highdim => {
            let units = 16 * p.len() * (p.dim() + 3);
            let cfg = mpc_config(&a.common, units, |s, seed| MpcConfig::for_input(units, s, seed))?;
            let params = HighDimParams::with_constants(p.len(), p.dim(), a.tau, a.eps, a.c_agg, a.c_pre)?;
            let (rs, (reps, oracle), report) = highdim_ruling_set_with(&p, a.tau, &params, &cfg)?;
            let chains = a.measure_chains.map(|count| {
                let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
                for start in 0..count.min(reps.points.len()) {
                    *hist.entry(chain_from(&reps.labels, &oracle, start).length).or_default() += 1;
                }
                hist
            });
            let result = json!({
                "mode": "highdim",
                "tau": a.tau,
                "eps": a.eps,
                "selected": rows(&rs.selected),
                "independence_radius": rs.independence_radius,
                "domination_radius": rs.domination_radius,
                "chain_length_histogram": chains,
                "resource_report": report,
            });
            let constants = json!({
                "c_msg": cfg.c_msg,
                "c_agg": params.c_agg,
                "c_pre": params.c_pre,
                "gamma": params.gamma,
                "jl_dim": params.jl_dim,
            });
            let out = envelope("rs", cfg.seed, Some(&cfg), constants, a.common.input.as_deref(), result);
            emit(a.common.output.as_ref(), &out)
        }
    }
}

/// Input units of the rounding stage, used when only `--s` is given.
fn lowdim_units(p: &Dataset) -> usize {
    p.len() * (2 * p.dim() + 1) * (3usize.pow(p.dim().min(8) as u32))
}

fn run_mds(a: MdsArgs) -> Result<()> {
    check_tau(a.tau)?;
    check_eps(a.eps)?;
    let p = load(&a.common)?;
    let defaults = MdsOptions::default();
    let opts = MdsOptions {
        bucket_capacity: a.bucket_cap.unwrap_or(defaults.bucket_capacity),
        shift_cap: a.shift_cap.unwrap_or(defaults.shift_cap),
        c_mds: a.c_mds.unwrap_or(defaults.c_mds),
    };
    let units = lowdim_units(&p);
    let cfg = mpc_config(&a.common, units, |_, seed| mds_config(&p, a.tau, a.eps, 256, seed))?;
    let (ds, report) = approx_mds_with(&p, a.tau, a.eps, &cfg, opts)?;
    let result = json!({
        "tau": a.tau,
        "eps": a.eps,
        "centers": rows(&ds.centers),
        "size": ds.size,
        "radius_certified": ds.radius_certified,
        "chosen_shift": ds.chosen_shift.to_f64_vec(),
        "resource_report": report,
    });
    let constants = json!({
        "c_msg": cfg.c_msg,
        "c_mds": opts.c_mds,
        "bucket_capacity": opts.bucket_capacity,
        "shift_cap": opts.shift_cap,
    });
    let out = envelope("mds", cfg.seed, Some(&cfg), constants, a.common.input.as_deref(), result);
    emit(a.common.output.as_ref(), &out)
}

fn run_oracle(a: OracleArgs) -> Result<()> {
    if a.k.is_none() && a.tau.is_none() {
        return Err(Error::usage("oracle needs --k, --tau or both"));
    }
    let p = load(&a.common)?;
    let opt = a.k.map(|k| oracle_kcenter_opt(&p, k)).transpose()?;
    let mds = match a.tau {
        Some(t) => {
            check_tau(t)?;
            Some(oracle_mds_size(&p, t)?)
        }
        None => None,
    };
    let result = json!({ "k": a.k, "kcenter_opt": opt, "tau": a.tau, "mds_size": mds });
    let seed = env_seed(a.common.seed)?;
    let out = envelope("oracle", seed, None, json!({}), a.common.input.as_deref(), result);
    emit(a.common.output.as_ref(), &out)
}

enum GraphSource {
    File(Graph),
    LowerBound { m: usize, copies: usize },
}

fn parse_graph(spec: &str) -> Result<GraphSource> {
    if let Some(rest) = spec.strip_prefix("lowerbound:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let nums: Vec<usize> = parts.iter().filter_map(|t| t.parse().ok()).collect();
        if parts.len() != 2 || nums.len() != 2 {
            return Err(Error::usage(format!("expected lowerbound:m:copies, got '{spec}'")));
        }
        return Ok(GraphSource::LowerBound { m: nums[0], copies: nums[1] });
    }
    let text = fs::read_to_string(spec).map_err(|e| Error::usage(format!("cannot read {spec}: {e}")))?;
    let mut edges = Vec::new();
    let mut n = 0;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ends: Vec<usize> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::usage(format!("{spec}: line {}: expected two vertex indices", no + 1)))?;
        match ends[..] {
            [u] => n = n.max(u + 1),
            [u, v] => {
                n = n.max(u.max(v) + 1);
                edges.push((u, v));
            }
            _ => return Err(Error::usage(format!("{spec}: line {}: expected two vertex indices", no + 1))),
        }
    }
    Ok(GraphSource::File(Graph::new(n, edges)?))
}

fn run_luby(a: LubyArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::usage("--trials must be positive"));
    }
    let seed = env_seed(a.seed)?;
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    let (result, graph_desc) = match parse_graph(&a.graph)? {
        GraphSource::File(g) => {
            for t in 0..a.trials {
                let sel = luby_select(&g, &draw_labels(g.vertex_count(), seed.wrapping_add(t as u64)));
                *hist.entry(ruling_radius(&g, &sel)?).or_default() += 1;
            }
            let desc = json!({ "file": a.graph, "vertices": g.vertex_count(), "edges": g.edges().len() });
            (json!({ "radius_histogram": hist, "event_frequency": null, "analytic_prediction": null }), desc)
        }
        GraphSource::LowerBound { m, copies } => {
            let inst = build_lower_bound_instance(m, copies)?;
            let mut events = 0usize;
            for t in 0..a.trials {
                let labels = draw_labels(inst.graph.vertex_count(), seed.wrapping_add(t as u64));
                let sel = luby_select(&inst.graph, &labels);
                *hist.entry(ruling_radius(&inst.graph, &sel)?).or_default() += 1;
                events += (0..copies).filter(|&c| chain_event(&inst, &labels, c)).count();
            }
            let result = json!({
                "radius_histogram": hist,
                "event_frequency": events as f64 / (a.trials * copies) as f64,
                "analytic_prediction": analytic_chain_probability(m),
                "exact_probability": exact_chain_probability(m),
            });
            (result, json!({ "lowerbound": { "m": m, "copies": copies } }))
        }
    };
    let mut result = result;
    result["graph"] = graph_desc;
    result["trials"] = json!(a.trials);
    let out = envelope("luby", seed, None, json!({}), None, result);
    emit(a.output.as_ref(), &out)
}

fn sample(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn run_hash_check(a: HashCheckArgs) -> Result<()> {
    if a.dim == 0 {
        return Err(Error::usage("--dim must be positive"));
    }
    if a.samples == 0 {
        return Err(Error::usage("--samples must be positive"));
    }
    let seed = env_seed(a.seed)?;
    let params = match a.ell {
        Some(ell) => FaceHashParams::with_c_hash(a.dim, a.beta, ell, a.c_hash)?,
        None => FaceHashParams::for_beta(a.dim, a.beta)?,
    };
    let (beta, ell, z) = (params.beta(), params.ell(), params.z());
    let mut rng = stream_rng(seed, 0x4843, 0);
    let mut diameter = 0usize;
    let mut separation = 0usize;
    let mut consistency = 0usize;
    for _ in 0..a.samples {
        let x = Point::new((0..a.dim).map(|_| sample(&mut rng, -4.0 * z, 4.0 * z)).collect())?;
        // A partner within z, to hit shared buckets.
        let y = Point::new(x.coords().iter().map(|c| c + sample(&mut rng, -z, z)).collect())?;
        let (hx, hy) = (face_hash(&x, &params), face_hash(&y, &params));
        if hx == hy && dist(&x, &y)? > ell {
            diameter += 1;
        }
        if hx != hy && hx.level() == hy.level() && dist_inf(&x, &y)? <= beta {
            separation += 1;
        }
        // d + 2 points inside an l-infinity box of side beta touch at most d + 1 buckets.
        let mut ids = vec![hx];
        for _ in 0..=a.dim {
            let v = Point::new((0..a.dim).map(|_| sample(&mut rng, 0.0, beta)).collect())?;
            ids.push(shifted_hash(&x, &v, &params)?);
        }
        ids.sort();
        ids.dedup();
        if ids.len() > a.dim + 1 {
            consistency += 1;
        }
    }
    let annulus = mpc_kcenter::geohash::annulus_free_region_check(&params, beta, a.samples, seed)?;
    let result = json!({
        "dim": a.dim,
        "beta": beta,
        "ell": ell,
        "z": z,
        "samples": a.samples,
        "diameter_violations": diameter,
        "separation_violations": separation,
        "consistency_violations": consistency,
        "annulus_free": annulus,
    });
    let out = envelope("hash-check", seed, None, json!({ "c_hash": a.c_hash }), None, result);
    emit(a.output.as_ref(), &out)
}
