//! Uniform-grid index for radius queries in low dimension.

use std::collections::HashMap;

use crate::geometry::{sq_dist, Point};
use crate::scalar::Scalar;

pub(crate) struct CellIndex<'a, T: Scalar> {
    side: T,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    points: Vec<&'a Point<T>>,
}

impl<'a, T: Scalar> CellIndex<'a, T> {
    pub(crate) fn new(side: T) -> Self {
        assert!(side > T::zero());
        CellIndex {
            side,
            cells: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn cell(&self, p: &Point<T>) -> Vec<i64> {
        p.coords()
            .iter()
            .map(|&c| (c / self.side).floor().to_i64().expect("coordinate within i64 range"))
            .collect()
    }

    /// Adds a point; returns its slot.
    pub(crate) fn insert(&mut self, p: &'a Point<T>) -> usize {
        let slot = self.points.len();
        let key = self.cell(p);
        self.cells.entry(key).or_default().push(slot);
        self.points.push(p);
        slot
    }

    /// Calls `f(slot, squared distance)` for every stored point within distance `r` of `q`.
    pub(crate) fn for_each_within(&self, q: &Point<T>, r: T, mut f: impl FnMut(usize, T)) {
        if self.points.is_empty() {
            return;
        }
        let reach = (r / self.side).ceil().to_i64().unwrap_or(i64::MAX).max(0);
        let centre = self.cell(q);
        let span = (2 * reach + 1) as u128;
        let r2 = r * r;
        if span.checked_pow(centre.len() as u32).is_none_or(|cells| cells as usize > self.cells.len()) {
            for (slot, p) in self.points.iter().enumerate() {
                let d2 = sq_dist(p, q);
                if d2 <= r2 {
                    f(slot, d2);
                }
            }
            return;
        }
        let mut offset = vec![-reach; centre.len()];
        loop {
            let key: Vec<i64> = centre.iter().zip(&offset).map(|(c, o)| c + o).collect();
            if let Some(slots) = self.cells.get(&key) {
                for &slot in slots {
                    let d2 = sq_dist(self.points[slot], q);
                    if d2 <= r2 {
                        f(slot, d2);
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == offset.len() {
                    return;
                }
                offset[k] += 1;
                if offset[k] <= reach {
                    break;
                }
                offset[k] = -reach;
                k += 1;
            }
        }
    }

    pub(crate) fn any_within(&self, q: &Point<T>, r: T) -> bool {
        let mut hit = false;
        self.for_each_within(q, r, |_, _| hit = true);
        hit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_queries_match_brute_force() {
        let pts: Vec<Point> = (0..50)
            .map(|i| Point::from_f64(&[(i * 7 % 13) as f64 * 0.37, (i * 3 % 11) as f64 * 0.53]).unwrap())
            .collect();
        let mut idx = CellIndex::new(0.5);
        for p in &pts {
            idx.insert(p);
        }
        let q = Point::from_f64(&[2.0, 2.0]).unwrap();
        for r in [0.1, 0.7, 1.3, 10.0] {
            let mut got = Vec::new();
            idx.for_each_within(&q, r, |s, _| got.push(s));
            got.sort();
            let want: Vec<usize> = (0..pts.len())
                .filter(|&i| sq_dist(&pts[i], &q) <= r * r)
                .collect();
            assert_eq!(got, want);
        }
    }
}
