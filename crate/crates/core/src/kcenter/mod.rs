//! Euclidean k-center through a threshold search over ruling sets and
//! approximate dominating sets.

pub mod assign;
pub mod estimate;
pub mod jl;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

pub use assign::{assign_highdim, assign_lowdim, assignment_cost};
pub use estimate::{candidate_thresholds, coarse_opt_estimate, gap_estimate, OptEstimate};
pub use jl::{jl_target_dim, jl_transform, JlMap};

use crate::error::{Error, Result};
use crate::geometry::{Dataset, Point};
use crate::highdim_rs::highdim_ruling_set;
use crate::lowdim_mds::approx_mds;
use crate::lowdim_rs::lowdim_ruling_set;
use crate::mpc::{MpcConfig, ResourceReport};
use crate::scalar::Scalar;

/// Threshold grid ratio is `1 + GRID_EPS_SHARE * eps`.
pub const GRID_EPS_SHARE: f64 = 0.25;
/// The low-dimensional ruling set runs with `RS_EPS_SHARE * eps`.
pub const RS_EPS_SHARE: f64 = 0.25;
/// Salt mixed into the seed when the estimator is redrawn.
const RESEED_SALT: u64 = 0x5245_5345_4544;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KCenterMode {
    RsLowdim,
    RsHighdim,
    MdsBicriteria,
}

impl KCenterMode {
    /// Largest number of centers a solution may use.
    pub fn center_cap(self, k: usize, eps: f64) -> usize {
        match self {
            KCenterMode::RsLowdim | KCenterMode::RsHighdim => k,
            KCenterMode::MdsBicriteria => ((1.0 + eps) * k as f64 + 1e-9).floor() as usize,
        }
    }
}

impl fmt::Display for KCenterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KCenterMode::RsLowdim => "rs_lowdim",
            KCenterMode::RsHighdim => "rs_highdim",
            KCenterMode::MdsBicriteria => "mds_bicriteria",
        })
    }
}

impl FromStr for KCenterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "rs_lowdim" => Ok(KCenterMode::RsLowdim),
            "rs_highdim" => Ok(KCenterMode::RsHighdim),
            "mds" | "mds_bicriteria" => Ok(KCenterMode::MdsBicriteria),
            _ => Err(Error::usage(format!(
                "unknown mode '{s}', expected rs-lowdim, rs-highdim or mds"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KCenterSolution<T: Scalar = f64> {
    pub centers: Dataset<T>,
    /// Center index of every input point.
    pub assignment: Vec<usize>,
    /// Largest assigned distance.
    pub cost: T,
    /// Chosen threshold; zero when the input has at most `k` distinct points.
    pub tau_star: T,
    pub mode: KCenterMode,
    pub report: ResourceReport,
    /// Estimate that produced the threshold grid, if one was needed.
    pub estimate: Option<OptEstimate>,
    pub thresholds_tried: usize,
}

/// Centers for threshold `tau`, if at most the mode's cap of them are needed.
fn solve_threshold<T: Scalar>(
    p: &Dataset<T>,
    cap: usize,
    eps: T,
    mode: KCenterMode,
    tau: T,
    cfg: &MpcConfig,
) -> Result<(Option<Dataset<T>>, ResourceReport)> {
    let two_tau = tau + tau;
    let (centers, report) = match mode {
        KCenterMode::RsLowdim => {
            let (rs, rep) = lowdim_ruling_set(p, two_tau, eps * T::of(RS_EPS_SHARE), cfg)?;
            (rs.selected, rep)
        }
        KCenterMode::RsHighdim => {
            let (rs, rep) = highdim_ruling_set(p, two_tau, eps, cfg)?;
            (rs.selected, rep)
        }
        KCenterMode::MdsBicriteria => {
            let (ds, rep) = approx_mds(p, tau, eps, cfg)?;
            (ds.centers, rep)
        }
    };
    Ok(((centers.len() <= cap).then_some(centers), report))
}

fn distinct_solution<T: Scalar>(p: &Dataset<T>, mode: KCenterMode) -> Result<KCenterSolution<T>> {
    let mut centers: Vec<Point<T>> = Vec::new();
    let mut index: std::collections::HashMap<&Point<T>, usize> = std::collections::HashMap::new();
    let mut assignment = Vec::with_capacity(p.len());
    for x in p.iter() {
        let next = centers.len();
        let j = *index.entry(x).or_insert(next);
        if j == next {
            centers.push(x.clone());
        }
        assignment.push(j);
    }
    Ok(KCenterSolution {
        centers: Dataset::new(centers)?,
        assignment,
        cost: T::zero(),
        tau_star: T::zero(),
        mode,
        report: ResourceReport::default(),
        estimate: None,
        thresholds_tried: 0,
    })
}

/// Solves every threshold of the grid side by side and keeps the smallest
/// feasible one; the estimator is redrawn once if none is feasible.
pub fn solve_kcenter<T: Scalar>(
    p: &Dataset<T>,
    k: usize,
    eps: T,
    mode: KCenterMode,
    cfg: &MpcConfig,
) -> Result<KCenterSolution<T>> {
    if k == 0 {
        return Err(Error::usage("k must be positive"));
    }
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::usage(format!("eps must lie in (0, 1), got {eps}")));
    }
    cfg.validate()?;
    if p.distinct_count() <= k {
        return distinct_solution(p, mode);
    }
    let cap = mode.center_cap(k, eps.as_f64());
    let mut total = ResourceReport::default();
    let mut tried = 0;
    for seed in [cfg.seed, cfg.seed ^ RESEED_SALT] {
        let est = coarse_opt_estimate(p, k, seed)?;
        let grid = candidate_thresholds(est.e, GRID_EPS_SHARE * eps.as_f64(), est.alpha)?;
        tried += grid.len();
        let runs: Vec<(Option<Dataset<T>>, ResourceReport)> = grid
            .par_iter()
            .map(|&tau| solve_threshold(p, cap, eps, mode, T::of(tau), cfg))
            .collect::<Result<_>>()?;
        let attempt = ResourceReport::parallel(runs.iter().map(|r| &r.1));
        total = if total == ResourceReport::default() { attempt } else { total.then(&attempt) };
        let Some(pos) = runs.iter().position(|r| r.0.is_some()) else {
            continue;
        };
        let tau_star = T::of(grid[pos]);
        let centers = runs.into_iter().nth(pos).and_then(|r| r.0).expect("feasible run");
        let (assignment, rep) = match mode {
            KCenterMode::RsHighdim => assign_highdim(p, &centers, tau_star, eps, cfg)?,
            _ => assign_lowdim(p, &centers, tau_star, eps, cfg)?,
        };
        total = total.then(&rep);
        total.seed = cfg.seed;
        return Ok(KCenterSolution {
            cost: assignment_cost(p, &centers, &assignment),
            centers,
            assignment,
            tau_star,
            mode,
            report: total,
            estimate: Some(est),
            thresholds_tried: tried,
        });
    }
    Err(Error::EstimatorFailure)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MpcConfig {
        MpcConfig::new(1 << 14, 2, 7).unwrap()
    }

    #[test]
    fn distinct_shortcut() {
        let p = Dataset::from_values(&[0.0, 10.0, 0.0]).unwrap();
        let s = solve_kcenter(&p, 2, 0.3, KCenterMode::RsLowdim, &cfg()).unwrap();
        assert_eq!(s.cost, 0.0);
        assert_eq!(s.assignment, vec![0, 1, 0]);
        assert_eq!(s.centers.len(), 2);
    }

    #[test]
    fn small_line() {
        let p = Dataset::from_values(&[0.0, 2.0, 10.0]).unwrap();
        let s = solve_kcenter(&p, 2, 0.3, KCenterMode::MdsBicriteria, &cfg()).unwrap();
        assert!(s.centers.len() <= 2);
        assert!(s.cost <= 1.3 + 1e-9, "cost {}", s.cost);
        let s = solve_kcenter(&p, 2, 0.3, KCenterMode::RsLowdim, &cfg()).unwrap();
        assert!(s.centers.len() <= 2);
        assert!(s.cost <= 2.6 + 1e-9, "cost {}", s.cost);
        let s = solve_kcenter(&p, 2, 0.3, KCenterMode::RsHighdim, &cfg()).unwrap();
        assert!(s.centers.len() <= 2);
        assert_eq!(s.cost, assignment_cost(&p, &s.centers, &s.assignment));
    }

    #[test]
    fn modes_parse() {
        assert_eq!("rs-lowdim".parse::<KCenterMode>().unwrap(), KCenterMode::RsLowdim);
        assert_eq!("mds".parse::<KCenterMode>().unwrap(), KCenterMode::MdsBicriteria);
        assert!("greedy".parse::<KCenterMode>().is_err());
    }
}
