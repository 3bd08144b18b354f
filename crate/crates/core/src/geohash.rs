//! Face-based geometric hashing of R^d.
//!
//! Space is cut into cubes of side `z = ell / sqrt(d)`. A point close (in
//! l-infinity) to a low-dimensional face of the cube grid is hashed to that
//! face; the remaining points are hashed to the interior of their cube. The
//! face dimension is the bucket's level, and buckets of one level are
//! pairwise more than `beta` apart.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mpc::{stream_rng, Record};
use crate::scalar::Scalar;

/// Default ratio `ell / (d^1.5 * beta)`.
pub const DEFAULT_C_HASH: f64 = 2.0;
/// Default constant in the consistency bound of [`ConsistentHashParams`].
pub const DEFAULT_C_LAMBDA: f64 = 1.0;

/// Ratio `z / beta` used when only `beta` is given; it clears both the
/// `c_hash` floor and the margin `z > 4 (d + 1) beta`.
fn margin_ratio(dim: usize) -> f64 {
    (DEFAULT_C_HASH * dim as f64).max(4.0 * dim as f64 + 5.0)
}

/// Parameters of the face hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceHashParams<T = f64> {
    dim: usize,
    beta: T,
    ell: T,
    z: T,
    c_hash: f64,
}

impl<T: Scalar> FaceHashParams<T> {
    /// Checks `ell >= 2 * d^1.5 * beta` and `z > 4 (d + 1) beta`.
    pub fn new(dim: usize, beta: T, ell: T) -> Result<Self> {
        Self::with_c_hash(dim, beta, ell, DEFAULT_C_HASH)
    }

    pub fn with_c_hash(dim: usize, beta: T, ell: T, c_hash: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("dimension must be positive"));
        }
        if !(beta.as_f64() > 0.0 && beta.is_finite()) || !(ell.as_f64() > 0.0 && ell.is_finite()) {
            return Err(Error::usage("beta and ell must be positive and finite"));
        }
        if !(c_hash > 0.0) {
            return Err(Error::usage("c_hash must be positive"));
        }
        let need = c_hash * (dim as f64).powf(1.5) * beta.as_f64();
        if ell.as_f64() < need * (1.0 - 1e-12) {
            return Err(Error::usage(format!(
                "ell = {ell} is below c_hash * d^1.5 * beta = {need}"
            )));
        }
        let z = ell / T::of_usize(dim).sqrt();
        let params = FaceHashParams {
            dim,
            beta,
            ell,
            z,
            c_hash,
        };
        params.require_margin()?;
        Ok(params)
    }

    /// Admissible parameters for `beta`: `z = max(2d, 4d + 5) * beta`.
    pub fn for_beta(dim: usize, beta: T) -> Result<Self> {
        let ell = T::of(margin_ratio(dim) * (dim as f64).sqrt()) * beta;
        Self::new(dim, beta, ell)
    }

    /// Admissible parameters with bucket diameter bound `ell`.
    pub fn for_ell(dim: usize, ell: T) -> Result<Self> {
        let beta = ell / T::of(margin_ratio(dim) * (dim as f64).sqrt());
        Self::new(dim, beta, ell)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn ell(&self) -> T {
        self.ell
    }

    /// Side length of the cube grid.
    pub fn z(&self) -> T {
        self.z
    }

    pub fn c_hash(&self) -> f64 {
        self.c_hash
    }

    /// Neighbourhood width `(d - i) * beta` of level `i`.
    pub fn level_width(&self, level: usize) -> T {
        T::of_usize(self.dim.saturating_sub(level)) * self.beta
    }

    /// Checks `z > 4 (d beta + beta)`, which keeps the region `L(z, 2b)`
    /// nonempty for every `tau <= beta`.
    pub fn require_margin(&self) -> Result<()> {
        let b = T::of_usize(self.dim + 1) * self.beta;
        if self.z > T::of(4.0) * b {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "cube side {} must exceed 4 (d + 1) beta = {}",
                self.z,
                T::of(4.0) * b
            )))
        }
    }
}

/// Identifier of a face-hash bucket: level, fixed-axis set and lattice coordinates.
///
/// Fixed axes carry the index of the grid hyperplane the point is close to;
/// free axes carry the index of the cube the point lies in.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(u32, Vec<u64>, Vec<i64>)", into = "(u32, Vec<u64>, Vec<i64>)")]
pub struct BucketId {
    level: u32,
    fixed: Vec<u64>,
    coords: Vec<i64>,
}

impl From<(u32, Vec<u64>, Vec<i64>)> for BucketId {
    fn from((level, fixed, coords): (u32, Vec<u64>, Vec<i64>)) -> Self {
        BucketId { level, fixed, coords }
    }
}

impl From<BucketId> for (u32, Vec<u64>, Vec<i64>) {
    fn from(id: BucketId) -> Self {
        (id.level, id.fixed, id.coords)
    }
}

impl BucketId {
    pub fn level(&self) -> usize {
        self.level as usize
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_fixed(&self, axis: usize) -> bool {
        self.fixed[axis / 64] >> (axis % 64) & 1 == 1
    }

    /// Axis bitmask, 64 axes per word.
    pub fn fixed_mask(&self) -> &[u64] {
        &self.fixed
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// The lexicographically smallest corner of the bucket's face.
    pub fn anchor<T: Scalar>(&self, params: &FaceHashParams<T>) -> Point<T> {
        Point::from_vec_unchecked(self.coords.iter().map(|&c| T::of(c as f64) * params.z).collect())
    }
}

impl fmt::Display for BucketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}[", self.level)?;
        for (k, c) in self.coords.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}{}", if self.is_fixed(k) { "=" } else { "" }, c)?;
        }
        write!(f, "]")
    }
}

impl Record for BucketId {
    fn units(&self) -> usize {
        1 + self.fixed.len() + self.coords.len()
    }
}

/// Face hash of `x`. Pure function of `x` and `params`.
///
/// # Panics
/// If `x` does not have the dimension of `params`.
pub fn face_hash<T: Scalar>(x: &Point<T>, params: &FaceHashParams<T>) -> BucketId {
    let d = params.dim;
    assert_eq!(x.dim(), d, "point dimension does not match hash parameters");
    let z = params.z;
    let mut cell = Vec::with_capacity(d);
    let mut near = Vec::with_capacity(d);
    let mut delta = Vec::with_capacity(d);
    for &c in x.coords() {
        let a = (c / z).floor();
        let r = c - a * z;
        // Ties go to the lower multiple.
        let (dl, m) = if r <= z - r { (r, a) } else { (z - r, a + T::one()) };
        cell.push(a.to_i64().expect("coordinate within i64 range"));
        near.push(m.to_i64().expect("coordinate within i64 range"));
        delta.push(dl);
    }
    let mut sorted = delta.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    // Level i needs d - i coordinates within (d - i) beta of a multiple of z.
    let level = (0..d)
        .find(|&i| sorted[d - i - 1] <= params.level_width(i))
        .unwrap_or(d);
    let width = params.level_width(level);
    let mut fixed = vec![0u64; d.div_ceil(64)];
    let mut coords = cell;
    if level < d {
        for k in 0..d {
            if delta[k] <= width {
                fixed[k / 64] |= 1 << (k % 64);
                coords[k] = near[k];
            }
        }
    }
    BucketId {
        level: level as u32,
        fixed,
        coords,
    }
}

/// `face_hash(x + v)`.
pub fn shifted_hash<T: Scalar>(x: &Point<T>, v: &Point<T>, params: &FaceHashParams<T>) -> Result<BucketId> {
    Ok(face_hash(&x.translate(v)?, params))
}

/// Group (level) of a bucket, in `0..=d`.
pub fn bucket_group(id: &BucketId) -> usize {
    id.level()
}

/// Parameters of the gap-consistent hash: buckets have diameter at most `ell`,
/// and a set of diameter at most `ell / gamma` meets few buckets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistentHashParams<T = f64> {
    gamma: f64,
    c_lambda: f64,
    face: FaceHashParams<T>,
}

impl<T: Scalar> ConsistentHashParams<T> {
    /// Requires `8 <= gamma <= max(8, 2d)`.
    pub fn new(dim: usize, gamma: f64, ell: T) -> Result<Self> {
        Self::with_c_lambda(dim, gamma, ell, DEFAULT_C_LAMBDA)
    }

    pub fn with_c_lambda(dim: usize, gamma: f64, ell: T, c_lambda: f64) -> Result<Self> {
        let hi = (2 * dim).max(8) as f64;
        if !(8.0..=hi).contains(&gamma) {
            return Err(Error::usage(format!("gap {gamma} outside [8, {hi}]")));
        }
        let face = FaceHashParams::for_ell(dim, ell)?;
        Ok(ConsistentHashParams { gamma, c_lambda, face })
    }

    pub fn dim(&self) -> usize {
        self.face.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn ell(&self) -> T {
        self.face.ell
    }

    pub fn face_params(&self) -> &FaceHashParams<T> {
        &self.face
    }

    /// `exp(8d / gamma) * c_lambda * d * max(1, ln d)`.
    pub fn lambda(&self) -> f64 {
        let d = self.face.dim as f64;
        (8.0 * d / self.gamma).exp() * self.c_lambda * d * d.ln().max(1.0)
    }

    /// Bound that follows from cutting a set of diameter `diam` into
    /// l-infinity cubes of side `beta`: `ceil(diam / beta)^d * (d + 1)`.
    pub fn covering_bound(&self, diam: T) -> f64 {
        let d = self.face.dim as f64;
        let cubes = (diam / self.face.beta).as_f64().ceil().max(1.0);
        cubes.powf(d) * (d + 1.0)
    }
}

pub fn consistent_hash<T: Scalar>(x: &Point<T>, params: &ConsistentHashParams<T>) -> BucketId {
    face_hash(x, &params.face)
}

/// Samples `x` from `L(z, 2b)^d` with `b = d beta + tau` and `y` in the
/// l-infinity ball of radius `tau` around `x`; true iff every pair shares a bucket.
pub fn annulus_free_region_check<T: Scalar>(
    params: &FaceHashParams<T>,
    tau: T,
    sample_count: usize,
    seed: u64,
) -> Result<bool> {
    if tau > params.beta {
        return Err(Error::usage(format!("tau = {tau} exceeds beta = {}", params.beta)));
    }
    if tau < T::zero() {
        return Err(Error::usage("tau must be nonnegative"));
    }
    params.require_margin()?;
    let d = params.dim;
    let z = params.z.as_f64();
    let b = (d as f64) * params.beta.as_f64() + tau.as_f64();
    let inner = Uniform::new(2.0 * b, z - 2.0 * b).map_err(|e| Error::usage(e.to_string()))?;
    let t = tau.as_f64();
    let mut rng = stream_rng(seed, 0, 0);
    for _ in 0..sample_count {
        let mut xs = Vec::with_capacity(d);
        let mut ys = Vec::with_capacity(d);
        for _ in 0..d {
            let cell: i64 = rng.random_range(-8..8);
            let x = cell as f64 * z + inner.sample(&mut rng);
            let y = if t > 0.0 { x + rng.random_range(-t..=t) } else { x };
            xs.push(T::of(x));
            ys.push(T::of(y));
        }
        let (x, y) = (Point::new(xs)?, Point::new(ys)?);
        if face_hash(&x, params) != face_hash(&y, params) {
            return Ok(false);
        }
    }
    Ok(true)
}
