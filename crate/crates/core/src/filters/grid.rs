//! Uniform voxel-grid spatial index for radius and k-nearest queries.
//!
//! The index is an optimization only: its query results must match the
//! all-pairs brute force exactly (inclusive `<= radius` comparison on
//! squared distances), which the test suite enforces.

use std::collections::HashMap;

use crate::scalar::Real;

pub struct VoxelGrid<T> {
    cell: T,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    points: Vec<[T; 3]>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn build(points: Vec<[T; 3]>, cell: T) -> Self {
        assert!(cell > T::zero());
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, cells, points }
    }

    fn key(p: &[T; 3], cell: T) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor().to_f64_lossy() as i64,
            (p[1] / cell).floor().to_f64_lossy() as i64,
            (p[2] / cell).floor().to_f64_lossy() as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [T; 3] {
        self.points[i]
    }

    /// Indices of all points with `|p - center| <= radius`, including any
    /// point coincident with `center`.
    pub fn query_radius(&self, center: &[T; 3], radius: T) -> Vec<usize> {
        let mut hits = Vec::new();
        self.for_each_within(center, radius, |i, _| hits.push(i));
        hits
    }

    /// Neighbor count within `radius`, excluding the query point itself.
    pub fn count_neighbors(&self, index: usize, radius: T) -> usize {
        let center = self.points[index];
        let mut count = 0;
        self.for_each_within(&center, radius, |i, _| {
            if i != index {
                count += 1;
            }
        });
        count
    }

    fn for_each_within(&self, center: &[T; 3], radius: T, mut visit: impl FnMut(usize, T)) {
        let r2 = radius * radius;
        let lo = Self::key(&[center[0] - radius, center[1] - radius, center[2] - radius], self.cell);
        let hi = Self::key(&[center[0] + radius, center[1] + radius, center[2] + radius], self.cell);
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                for cz in lo.2..=hi.2 {
                    if let Some(indices) = self.cells.get(&(cx, cy, cz)) {
                        for &i in indices {
                            let d2 = dist2(&self.points[i], center);
                            if d2 <= r2 {
                                visit(i, d2);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Distances to the `k` nearest neighbors of point `index` (self
    /// excluded). Returns fewer than `k` only if the cloud is too small.
    pub fn knn_distances(&self, index: usize, k: usize) -> Vec<T> {
        let center = self.points[index];
        let mut radius = self.cell;
        loop {
            let mut d2s: Vec<T> = Vec::new();
            self.for_each_within(&center, radius, |i, d2| {
                if i != index {
                    d2s.push(d2);
                }
            });
            if d2s.len() >= k || d2s.len() + 1 == self.points.len() {
                d2s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d2s.truncate(k);
                return d2s.into_iter().map(|d2| d2.sqrt()).collect();
            }
            radius = radius + radius;
        }
    }
}

#[inline]
fn dist2<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// All-pairs oracle used by the tests to pin the index semantics.
pub fn brute_force_radius<T: Real>(points: &[[T; 3]], center: &[T; 3], radius: T) -> Vec<usize> {
    let r2 = radius * radius;
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| dist2(p, center) <= r2)
        .map(|(i, _)| i)
        .collect()
}
