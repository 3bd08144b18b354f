//! Exact Euclidean and l-infinity primitives shared by every algorithm.

use std::cmp::Ordering;
use std::hash::{Hash, Hasher};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative tolerance for [`min_enclosing_ball`] and for ball-feasibility tests built on it.
pub const MEB_TOLERANCE: f64 = 1e-9;

/// A point of R^d with finite coordinates.
///
/// Points are totally ordered lexicographically; this is the canonical order
/// used by the deterministic greedy routines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point<T = f64> {
    coords: Vec<T>,
}

impl<T: Scalar> Point<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::usage("points need at least one coordinate"));
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::usage(format!(
                "coordinate {} is not finite ({})",
                bad, coords[bad]
            )));
        }
        Ok(Point { coords })
    }

    pub fn from_f64(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&c| T::of(c)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0);
        Point { coords: vec![T::zero(); dim] }
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<T>) -> Self {
        debug_assert!(!coords.is_empty() && coords.iter().all(|c| c.is_finite()));
        Point { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }

    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.partial_cmp(b).expect("finite coordinates") {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }

    pub fn translate(&self, v: &Point<T>) -> Result<Point<T>> {
        check_dims(self, v)?;
        Point::new(self.coords.iter().zip(&v.coords).map(|(&a, &b)| a + b).collect())
    }

    pub fn scale(&self, factor: T) -> Result<Point<T>> {
        Point::new(self.coords.iter().map(|&a| a * factor).collect())
    }

    /// Converts the coordinates to `f64` (lossless for `f32`).
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.as_f64()).collect()
    }
}

impl<T: Scalar> Eq for Point<T> {}

impl<T: Scalar> PartialOrd for Point<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Point<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.lex_cmp(other)
    }
}

impl<T: Scalar> Hash for Point<T> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for c in &self.coords {
            c.canonical_bits().hash(state);
        }
    }
}

/// An ordered multiset of points sharing one dimension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dataset<T = f64> {
    dim: usize,
    points: Vec<Point<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Vec<Point<T>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::usage("a dataset needs at least one point"))?;
        let dim = first.dim();
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
        }
        Ok(Dataset { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| Point::from_f64(r)).collect::<Result<_>>()?)
    }

    /// One-dimensional dataset from scalar values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&v| Point::from_f64(&[v]))
                .collect::<Result<_>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point<T>> {
        self.points
    }

    /// Number of distinct points (exact coordinate equality).
    pub fn distinct_count(&self) -> usize {
        let mut sorted: Vec<&Point<T>> = self.points.iter().collect();
        sorted.sort();
        sorted.dedup();
        sorted.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.points[i].clone()).collect())
    }
}

impl<T> Deref for Dataset<T> {
    type Target = [Point<T>];

    fn deref(&self) -> &[Point<T>] {
        &self.points
    }
}

/// Step of the axis-aligned lattice `step * Z^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T = f64> {
    step: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(step: T) -> Result<Self> {
        if !(step > T::zero()) || !step.is_finite() {
            return Err(Error::usage(format!("grid step must be positive, got {}", step)));
        }
        Ok(GridSpec { step })
    }

    pub fn step(&self) -> T {
        self.step
    }

    /// Integer lattice index of the grid point nearest to `x`; ties go toward +inf.
    pub fn index_of(&self, x: &Point<T>) -> Vec<i64> {
        x.coords()
            .iter()
            .map(|&c| {
                (c / self.step + T::of(0.5))
                    .floor()
                    .to_i64()
                    .expect("grid index fits in i64")
            })
            .collect()
    }

    pub fn point_at(&self, index: &[i64]) -> Point<T> {
        Point::from_vec_unchecked(
            index
                .iter()
                .map(|&i| T::from_i64(i).expect("grid index representable") * self.step)
                .collect(),
        )
    }
}

fn check_dims<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Euclidean distance.
pub fn dist<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Result<T> {
    check_dims(a, b)?;
    Ok(dist_unchecked(a, b))
}

pub(crate) fn dist_unchecked<T: Scalar>(a: &Point<T>, b: &Point<T>) -> T {
    sq_dist(a, b).sqrt()
}

pub(crate) fn sq_dist<T: Scalar>(a: &Point<T>, b: &Point<T>) -> T {
    a.coords
        .iter()
        .zip(&b.coords)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// l-infinity distance.
pub fn dist_inf<T: Scalar>(a: &Point<T>, b: &Point<T>) -> Result<T> {
    check_dims(a, b)?;
    Ok(dist_inf_unchecked(a, b))
}

pub(crate) fn dist_inf_unchecked<T: Scalar>(a: &Point<T>, b: &Point<T>) -> T {
    a.coords
        .iter()
        .zip(&b.coords)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

/// Distance from `p` to the nearest point of `set`; `+inf` for an empty set.
pub fn dist_to_set<T: Scalar>(p: &Point<T>, set: &[Point<T>]) -> T {
    set.iter()
        .map(|q| dist_unchecked(p, q))
        .fold(T::infinity(), T::min)
}

/// Points of `points` within distance `r` of `center`, in their original order.
pub fn ball<'a, T: Scalar>(points: &'a [Point<T>], center: &Point<T>, r: T) -> Vec<&'a Point<T>> {
    points
        .iter()
        .filter(|p| dist_unchecked(p, center) <= r)
        .collect()
}

/// Rounds every coordinate to the nearest multiple of the grid step (ties toward +inf).
pub fn snap_to_grid<T: Scalar>(x: &Point<T>, grid: &GridSpec<T>) -> Point<T> {
    grid.point_at(&grid.index_of(x))
}

pub fn diameter<T: Scalar>(points: &[Point<T>]) -> T {
    let mut best = T::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(dist_unchecked(a, b));
        }
    }
    best
}

pub fn diameter_inf<T: Scalar>(points: &[Point<T>]) -> T {
    let mut best = T::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(dist_inf_unchecked(a, b));
        }
    }
    best
}

/// A closed Euclidean ball.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball<T = f64> {
    pub center: Point<T>,
    pub radius: T,
}

impl<T: Scalar> Ball<T> {
    fn contains_with_slack(&self, p: &Point<T>, rel: T) -> bool {
        let d = dist_unchecked(&self.center, p);
        d <= self.radius + rel * self.radius.max(T::min_positive_value())
    }
}

/// True when a ball of radius `radius` is within `tau` up to [`MEB_TOLERANCE`].
pub fn radius_fits<T: Scalar>(radius: T, tau: T) -> bool {
    radius <= tau + T::of(MEB_TOLERANCE) * tau
}

/// Smallest enclosing ball of a nonempty point set (Welzl's recursion).
pub fn min_enclosing_ball<T: Scalar>(points: &[Point<T>]) -> Result<Ball<T>> {
    let first = points
        .first()
        .ok_or_else(|| Error::usage("minimum enclosing ball of an empty set"))?;
    let dim = first.dim();
    for p in points {
        check_dims(first, p)?;
    }
    let refs: Vec<&Point<T>> = points.iter().collect();
    let mut boundary = Vec::with_capacity(dim + 1);
    let ball = welzl(&refs, &mut boundary, dim).expect("nonempty input");
    Ok(ball)
}

fn welzl<'a, T: Scalar>(
    points: &[&'a Point<T>],
    boundary: &mut Vec<&'a Point<T>>,
    dim: usize,
) -> Option<Ball<T>> {
    if points.is_empty() || boundary.len() == dim + 1 {
        return ball_from_boundary(boundary);
    }
    let (p, rest) = points.split_last().expect("nonempty");
    if let Some(ball) = welzl(rest, boundary, dim) {
        if ball.contains_with_slack(p, T::of(1e-12)) {
            return Some(ball);
        }
    }
    boundary.push(p);
    let ball = welzl(rest, boundary, dim);
    boundary.pop();
    ball
}

/// Smallest ball with every boundary point on its sphere, falling back to
/// subsets when the boundary is affinely dependent.
fn ball_from_boundary<T: Scalar>(boundary: &[&Point<T>]) -> Option<Ball<T>> {
    match boundary.len() {
        0 => None,
        1 => Some(Ball {
            center: boundary[0].clone(),
            radius: T::zero(),
        }),
        _ => circumball(boundary).or_else(|| {
            let mut best: Option<Ball<T>> = None;
            for skip in 0..boundary.len() {
                let sub: Vec<&Point<T>> = boundary
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, p)| *p)
                    .collect();
                if let Some(b) = ball_from_boundary(&sub) {
                    if boundary.iter().all(|q| b.contains_with_slack(q, T::of(1e-9)))
                        && best.as_ref().is_none_or(|cur| b.radius < cur.radius)
                    {
                        best = Some(b);
                    }
                }
            }
            best
        }),
    }
}

/// Circumcenter within the affine hull of `pts`; `None` when degenerate.
fn circumball<T: Scalar>(pts: &[&Point<T>]) -> Option<Ball<T>> {
    let origin = pts[0];
    let dim = origin.dim();
    let k = pts.len() - 1;
    let u: Vec<Vec<T>> = pts[1..]
        .iter()
        .map(|p| {
            p.coords
                .iter()
                .zip(&origin.coords)
                .map(|(&a, &b)| a - b)
                .collect()
        })
        .collect();
    let dot = |a: &[T], b: &[T]| -> T { a.iter().zip(b).map(|(&x, &y)| x * y).sum() };
    // Augmented system 2 U U^T lambda = |u_i|^2.
    let mut m: Vec<Vec<T>> = (0..k)
        .map(|i| {
            let mut row: Vec<T> = (0..k).map(|j| T::of(2.0) * dot(&u[i], &u[j])).collect();
            row.push(dot(&u[i], &u[i]));
            row
        })
        .collect();
    let scale = m
        .iter()
        .flat_map(|r| r[..k].iter())
        .fold(T::zero(), |a, &b| a.max(b.abs()));
    if scale == T::zero() {
        return None;
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| {
            m[a][col]
                .abs()
                .partial_cmp(&m[b][col].abs())
                .expect("finite")
        })?;
        if m[pivot][col].abs() <= scale * T::of(1e-12) {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = m[row][col] / m[col][col];
                if f != T::zero() {
                    for c in col..=k {
                        let v = m[col][c];
                        m[row][c] = m[row][c] - f * v;
                    }
                }
            }
        }
    }
    let lambda: Vec<T> = (0..k).map(|i| m[i][k] / m[i][i]).collect();
    let mut center = origin.coords.clone();
    for (l, ui) in lambda.iter().zip(&u) {
        for c in 0..dim {
            center[c] = center[c] + *l * ui[c];
        }
    }
    if center.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let center = Point::from_vec_unchecked(center);
    let radius = pts
        .iter()
        .map(|p| dist_unchecked(&center, p))
        .fold(T::zero(), T::max);
    Some(Ball { center, radius })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::from_f64(c).unwrap()
    }

    #[test]
    fn distances_on_small_examples() {
        assert_eq!(dist(&p(&[0.0, 0.0]), &p(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(dist(&p(&[1.0, 1.0]), &p(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dist(&p(&[0.0]), &p(&[2.0])).unwrap(), 2.0);
        assert_eq!(dist_inf(&p(&[0.0, 0.0]), &p(&[3.0, 4.0])).unwrap(), 4.0);
        assert_eq!(dist_inf(&p(&[0.0]), &p(&[2.0])).unwrap(), 2.0);
        assert_eq!(dist_inf(&p(&[1.0, 1.0]), &p(&[1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = dist(&p(&[0.0]), &p(&[0.0, 1.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 1, found: 2 });
        assert!(dist_inf(&p(&[0.0]), &p(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn rejects_non_finite_coordinates() {
        assert!(Point::<f64>::new(vec![f64::NAN]).is_err());
        assert!(Point::<f64>::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(Point::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn ball_filters_in_order() {
        let pts = Dataset::<f64>::from_values(&[0.0, 1.0, 5.0]).unwrap();
        let c = p(&[0.0]);
        let got: Vec<f64> = ball(&pts, &c, 1.0).iter().map(|q| q.coords()[0]).collect();
        assert_eq!(got, vec![0.0, 1.0]);
        let got: Vec<f64> = ball(&pts, &c, 0.0).iter().map(|q| q.coords()[0]).collect();
        assert_eq!(got, vec![0.0]);
        let pts2 = Dataset::<f64>::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(ball(&pts2, &p(&[0.0, 0.0]), 4.9).len(), 1);
    }

    #[test]
    fn snapping_rounds_half_up() {
        let g1 = GridSpec::new(1.0).unwrap();
        assert_eq!(snap_to_grid(&p(&[0.6, 0.2]), &g1), p(&[1.0, 0.0]));
        assert_eq!(snap_to_grid(&p(&[0.5]), &g1), p(&[1.0]));
        assert_eq!(snap_to_grid(&p(&[-0.5]), &g1), p(&[0.0]));
        let g2 = GridSpec::new(0.5).unwrap();
        assert_eq!(snap_to_grid(&p(&[-0.4]), &g2), p(&[-0.5]));
        assert!(GridSpec::new(0.0).is_err());
    }

    #[test]
    fn meb_small_cases() {
        let b = min_enclosing_ball(&[p(&[0.0]), p(&[2.0])]).unwrap();
        assert_eq!(b.center, p(&[1.0]));
        assert_eq!(b.radius, 1.0);

        let b = min_enclosing_ball(&[p(&[0.0, 0.0])]).unwrap();
        assert_eq!(b.radius, 0.0);

        // The two extreme points force radius >= 1 and (1,0) covers all three.
        let pts = [p(&[0.0, 0.0]), p(&[2.0, 0.0]), p(&[1.0, 1.0])];
        let b = min_enclosing_ball(&pts).unwrap();
        assert!((b.radius - 1.0).abs() < 1e-12);
        assert!(dist(&b.center, &p(&[1.0, 0.0])).unwrap() < 1e-12);

        assert!(min_enclosing_ball::<f64>(&[]).is_err());
    }

    #[test]
    fn meb_handles_duplicates_and_collinear_points() {
        let pts = [p(&[1.0, 1.0]), p(&[1.0, 1.0]), p(&[1.0, 1.0])];
        assert_eq!(min_enclosing_ball(&pts).unwrap().radius, 0.0);
        let pts = [p(&[0.0, 0.0]), p(&[1.0, 1.0]), p(&[2.0, 2.0]), p(&[3.0, 3.0])];
        let b = min_enclosing_ball(&pts).unwrap();
        assert!((b.radius - 18f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn meb_in_single_precision() {
        let pts: Vec<Point<f32>> = [[0.0f32, 0.0], [2.0, 0.0], [1.0, 1.0]]
            .iter()
            .map(|c| Point::new(c.to_vec()).unwrap())
            .collect();
        let b = min_enclosing_ball(&pts).unwrap();
        assert!((b.radius - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lexicographic_order_and_distinct_count() {
        assert!(p(&[0.0, 5.0]) < p(&[1.0, 0.0]));
        assert!(p(&[1.0, 0.0]) < p(&[1.0, 2.0]));
        let ds = Dataset::<f64>::from_values(&[1.0, 1.0, 2.0, -0.0, 0.0]).unwrap();
        assert_eq!(ds.distinct_count(), 3);
    }
}
