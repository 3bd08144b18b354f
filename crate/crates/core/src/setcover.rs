//! Exact minimum cover of a small point set by balls of a fixed radius.

use std::collections::HashMap;

use crate::geometry::{dist, min_enclosing_ball, radius_fits, Point};
use crate::scalar::Scalar;

/// Largest point set the bitmask solver accepts.
pub(crate) const MAX_COVER_POINTS: usize = 64;

/// Maximal subsets (as bitmasks) whose minimum enclosing ball fits in `tau`,
/// each with its ball centre.
pub(crate) fn feasible_subsets<T: Scalar>(points: &[Point<T>], tau: T) -> Vec<(u64, Point<T>)> {
    let n = points.len();
    assert!(n <= MAX_COVER_POINTS);
    let reach = T::of(2.0) * tau * (T::one() + T::of(crate::geometry::MEB_TOLERANCE));
    let near: Vec<u64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| dist(&points[i], &points[j]).map(|d| d <= reach).unwrap_or(false))
                .fold(0u64, |m, j| m | (1 << j))
        })
        .collect();
    let fits = |mask: u64| -> Option<Point<T>> {
        let sub: Vec<Point<T>> = bits(mask).map(|i| points[i].clone()).collect();
        let ball = min_enclosing_ball(&sub).ok()?;
        radius_fits(ball.radius, tau).then_some(ball.center)
    };
    let mut found: Vec<(u64, Point<T>)> = Vec::new();
    let mut stack: Vec<(u64, u64)> = (0..n).map(|i| (1u64 << i, near[i] & !((2u64 << i) - 1))).collect();
    stack.reverse();
    while let Some((cur, cands)) = stack.pop() {
        if cands == 0 {
            found.push((cur, fits(cur).expect("subset checked on insertion")));
            continue;
        }
        if let Some(c) = fits(cur | cands) {
            found.push((cur | cands, c));
            continue;
        }
        let mut children = Vec::new();
        for j in bits(cands) {
            let next = cur | (1 << j);
            if fits(next).is_none() {
                continue;
            }
            let later = cands & near[j] & !((2u64 << j) - 1);
            children.push((next, later));
        }
        if children.is_empty() {
            found.push((cur, fits(cur).expect("subset checked on insertion")));
        }
        stack.extend(children.into_iter().rev());
    }
    // Keep only sets not contained in another.
    found.sort_by_key(|f| std::cmp::Reverse(f.0.count_ones()));
    let mut kept: Vec<(u64, Point<T>)> = Vec::new();
    for (m, c) in found {
        if !kept.iter().any(|k| k.0 & m == m) {
            kept.push((m, c));
        }
    }
    kept
}

pub(crate) fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| mask >> i & 1 == 1)
}

/// Indices of a minimum-cardinality family of `sets` covering `universe`.
pub(crate) fn min_cover(universe: u64, sets: &[u64]) -> Option<Vec<usize>> {
    fn solve(uncovered: u64, sets: &[u64], memo: &mut HashMap<u64, Option<Vec<usize>>>) -> Option<Vec<usize>> {
        if uncovered == 0 {
            return Some(Vec::new());
        }
        if let Some(hit) = memo.get(&uncovered) {
            return hit.clone();
        }
        let e = uncovered.trailing_zeros();
        let mut best: Option<Vec<usize>> = None;
        for (i, &s) in sets.iter().enumerate() {
            if s >> e & 1 == 0 {
                continue;
            }
            if let Some(mut rest) = solve(uncovered & !s, sets, memo) {
                if best.as_ref().is_none_or(|b| rest.len() + 1 < b.len()) {
                    rest.push(i);
                    best = Some(rest);
                }
            }
        }
        memo.insert(uncovered, best.clone());
        best
    }
    let mut memo = HashMap::new();
    let mut out = solve(universe, sets, &mut memo)?;
    out.sort_unstable();
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cover_of_small_families() {
        assert_eq!(min_cover(0b111, &[0b011, 0b110, 0b100]).unwrap().len(), 2);
        assert_eq!(min_cover(0b111, &[0b001, 0b010, 0b100, 0b111]).unwrap(), vec![3]);
        assert!(min_cover(0b111, &[0b011]).is_none());
    }

    #[test]
    fn subsets_of_a_line() {
        let pts: Vec<Point> = [0.0, 1.0, 2.0, 5.0].iter().map(|&x| Point::from_f64(&[x]).unwrap()).collect();
        let subs = feasible_subsets(&pts, 1.0);
        let masks: Vec<u64> = subs.iter().map(|s| s.0).collect();
        assert!(masks.contains(&0b0111));
        assert!(masks.contains(&0b1000));
        assert_eq!(masks.len(), 2);
    }
}
