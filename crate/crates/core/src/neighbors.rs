//! Uniform-grid spatial hash for fixed-radius neighbor queries.

use std::collections::HashMap;

use crate::linalg::V2;

/// Per-particle neighbor lists, sorted ascending, symmetric, no self pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NeighborTable {
    pub lists: Vec<Vec<usize>>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn of(&self, p: usize) -> &[usize] {
        &self.lists[p]
    }

    pub fn pair_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Finds all pairs with `|x_p − x_q| < radius(p, q)`. `max_radius` must
/// bound every pair radius; it is used as the hash cell size.
pub fn build_with(positions: &[V2<f64>], max_radius: f64, radius: impl Fn(usize, usize) -> f64) -> NeighborTable {
    let n = positions.len();
    let mut lists = vec![Vec::new(); n];
    if n == 0 || !(max_radius > 0.0) {
        return NeighborTable { lists };
    }
    let inv = 1.0 / max_radius;
    let key = |p: V2<f64>| ((p.x * inv).floor() as i64, (p.y * inv).floor() as i64);
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in positions.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    for (i, &p) in positions.iter().enumerate() {
        let (cx, cy) = key(p);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(bucket) = cells.get(&(cx + dx, cy + dy)) else { continue };
                for &j in bucket {
                    if j <= i {
                        continue;
                    }
                    let r = radius(i, j);
                    if (positions[j] - p).norm2() < r * r {
                        lists[i].push(j);
                        lists[j].push(i);
                    }
                }
            }
        }
    }
    for l in &mut lists {
        l.sort_unstable();
    }
    NeighborTable { lists }
}

/// O(n²) reference used to validate [`build_with`].
pub fn brute_force(positions: &[V2<f64>], radius: impl Fn(usize, usize) -> f64) -> NeighborTable {
    let n = positions.len();
    let mut lists = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = radius(i.min(j), i.max(j));
                if (positions[j] - positions[i]).norm2() < r * r {
                    lists[i].push(j);
                }
            }
        }
    }
    NeighborTable { lists }
}
