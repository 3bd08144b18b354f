//! Gaussian random projection.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Dataset, Point};
use crate::mpc::stream_rng;
use crate::scalar::Scalar;

/// Target dimension `ceil(32 ln n)`, enough for distortion within `1 +- 1/2`.
pub fn jl_target_dim(n: usize) -> usize {
    (32.0 * (n.max(2) as f64).ln()).ceil() as usize
}

/// Row `r` of the projection matrix; rows are generated independently from
/// the seed so that any machine can rebuild them.
fn row(seed: u64, r: usize, dim: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0x4a4c_0000, r as u64);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `x -> M x / sqrt(target_dim)` with i.i.d. standard Gaussian `M`.
#[derive(Clone, Debug)]
pub struct JlMap {
    rows: Vec<Vec<f64>>,
    scale: f64,
}

impl JlMap {
    pub fn new(source_dim: usize, target_dim: usize, seed: u64) -> Result<Self> {
        if target_dim == 0 {
            return Err(Error::usage("target dimension must be positive"));
        }
        Ok(JlMap {
            rows: (0..target_dim).map(|r| row(seed, r, source_dim)).collect(),
            scale: 1.0 / (target_dim as f64).sqrt(),
        })
    }

    pub fn target_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply<T: Scalar>(&self, x: &Point<T>) -> Result<Point<T>> {
        let src = self.rows.first().map_or(0, Vec::len);
        if x.dim() != src {
            return Err(Error::DimensionMismatch {
                expected: src,
                found: x.dim(),
            });
        }
        let v = x.to_f64_vec();
        let coords = self
            .rows
            .iter()
            .map(|r| T::of(r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * self.scale))
            .collect();
        Point::new(coords)
    }
}

/// Projects every point of `p` to `target_dim` dimensions.
pub fn jl_transform<T: Scalar>(p: &Dataset<T>, target_dim: usize, seed: u64) -> Result<Dataset<T>> {
    let map = JlMap::new(p.dim(), target_dim, seed)?;
    Dataset::new(p.iter().map(|x| map.apply(x)).collect::<Result<_>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dist;

    #[test]
    fn linear_examples() {
        let p: Dataset = Dataset::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![0.0; 3]]).unwrap();
        let q = jl_transform(&p, 5, 3).unwrap();
        assert_eq!(q[0], q[1]);
        assert!(q[2].coords().iter().all(|&c| c == 0.0));
        assert!(jl_transform(&p, 0, 3).is_err());
    }

    #[test]
    fn one_dimensional_distortion() {
        let p: Dataset = Dataset::from_values(&(0..50).map(|i| (i * i) as f64).collect::<Vec<_>>()).unwrap();
        let dim = jl_target_dim(p.len());
        let mut bad = 0;
        for seed in 0..40 {
            let q = jl_transform(&p, dim, seed).unwrap();
            let ok = (0..p.len()).all(|i| {
                (i + 1..p.len()).all(|j| {
                    let r = dist(&q[i], &q[j]).unwrap() / dist(&p[i], &p[j]).unwrap();
                    (0.5..=1.5).contains(&r)
                })
            });
            if !ok {
                bad += 1;
            }
        }
        assert!(bad <= 2, "{bad} of 40 seeds distorted");
    }
}
