//! Coarse estimate of the optimal k-center cost from a random 1D projection.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Dataset;
use crate::mpc::stream_rng;
use crate::scalar::Scalar;

/// `c3` in `E = c3 * n^3 * E'`.
pub const DEFAULT_C3: f64 = 1.0;
/// `c_est` in the guarantee `OPT <= E <= c_est * n^7 * OPT`.
pub const DEFAULT_C_EST: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptEstimate {
    /// Upper estimate of the optimum.
    pub e: f64,
    /// `n * r_k`, or the projected spread when `k = 1`.
    pub e_prime: f64,
    /// `k`-th largest gap between consecutive projected values.
    pub r_k: f64,
    pub seed: u64,
    /// Approximation factor of `e`, `c_est * n^7`.
    pub alpha: f64,
}

/// `(r_k, E')` for already projected values.
pub fn gap_estimate(values: &[f64], k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::usage("k must be positive"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.len() < k {
        return Err(Error::usage(format!("{} values have fewer than {k} gaps", values.len())));
    }
    gaps.sort_by(|a, b| b.total_cmp(a));
    let r_k = gaps[k - 1];
    let e_prime = if k == 1 {
        v[v.len() - 1] - v[0]
    } else {
        values.len() as f64 * r_k
    };
    Ok((r_k, e_prime))
}

/// Projects `p` on a standard Gaussian direction and derives `E` from the
/// gaps of the projection.
pub fn coarse_opt_estimate<T: Scalar>(p: &Dataset<T>, k: usize, seed: u64) -> Result<OptEstimate> {
    if p.distinct_count() <= k {
        return Err(Error::usage("the estimate needs more than k distinct points"));
    }
    let mut rng = stream_rng(seed, 0x4553_5400, 0);
    let dir: Vec<f64> = (0..p.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let values: Vec<f64> = p
        .iter()
        .map(|x| x.to_f64_vec().iter().zip(&dir).map(|(a, b)| a * b).sum())
        .collect();
    let (r_k, e_prime) = gap_estimate(&values, k)?;
    let n = p.len() as f64;
    Ok(OptEstimate {
        e: DEFAULT_C3 * n.powi(3) * e_prime,
        e_prime,
        r_k,
        seed,
        alpha: DEFAULT_C_EST * n.powi(7),
    })
}

/// Powers of `1 + eps` in `[e / alpha, e]`, ascending. When the range holds no
/// power, the smallest power at least `e / alpha`.
pub fn candidate_thresholds(e: f64, eps: f64, alpha: f64) -> Result<Vec<f64>> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::usage(format!("estimate must be positive and finite, got {e}")));
    }
    if !(eps > 0.0) || !(alpha >= 1.0) {
        return Err(Error::usage("need eps > 0 and alpha >= 1"));
    }
    let base = 1.0 + eps;
    let lo = ((e / alpha).ln() / base.ln() - 1e-9).ceil() as i32;
    let hi = (e.ln() / base.ln() + 1e-9).floor() as i32;
    let mut z = vec![base.powi(lo)];
    for _ in lo..hi {
        let next = z[z.len() - 1] * base;
        z.push(next);
    }
    Ok(z)
}
