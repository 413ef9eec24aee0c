use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{canonical_sort, GeometryError, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 0.02, min_pts: 5 }
    }
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self, GeometryError> {
        let p = DbscanParams { eps, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(GeometryError::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(GeometryError::InvalidParams("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Uniform grid with cell size eps for neighborhood queries.
struct Grid<'a> {
    points: &'a [Point3],
    eps: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Point3], eps: f64) -> Self {
        let mut cells: HashMap<_, Vec<usize>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Grid { points, eps, cells }
    }

    fn key(p: Point3, eps: f64) -> (i64, i64, i64) {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64, (p.z / eps).floor() as i64)
    }

    /// Indices within eps of point `i` (including `i`), ascending.
    fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = self.points[i];
        let (kx, ky, kz) = Self::key(p, self.eps);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(c) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(c.iter().copied().filter(|&j| self.points[j].distance(p) <= self.eps));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Cluster index per point (`None` for noise). Points are visited in the
/// given order; neighborhoods include the point itself.
pub fn dbscan_labels(points: &[Point3], params: &DbscanParams) -> Result<Vec<Option<usize>>, GeometryError> {
    params.validate()?;
    let grid = Grid::new(points, params.eps);
    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let n = grid.neighbors(i);
        if n.len() < params.min_pts {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = Some(cluster);
        let mut queue = std::collections::VecDeque::from(n);
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = grid.neighbors(j);
            if nj.len() >= params.min_pts {
                queue.extend(nj);
            }
        }
    }
    Ok(labels)
}

/// Drops DBSCAN noise and keeps every cluster. Output is canonically sorted.
pub fn dbscan_filter(points: &[Point3], params: &DbscanParams) -> Result<Vec<Point3>, GeometryError> {
    let mut pts = points.to_vec();
    canonical_sort(&mut pts);
    let labels = dbscan_labels(&pts, params)?;
    Ok(pts.into_iter().zip(labels).filter(|(_, l)| l.is_some()).map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use rand::{Rng, SeedableRng};

    /// Textbook O(n^2) DBSCAN.
    fn brute_force(points: &[Point3], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
        #[derive(Clone, Copy, PartialEq)]
        enum L {
            Undefined,
            Noise,
            Cluster(usize),
        }
        let n = points.len();
        let region = |i: usize| -> Vec<usize> { (0..n).filter(|&j| points[i].distance(points[j]) <= eps).collect() };
        let mut label = vec![L::Undefined; n];
        let mut c = 0;
        for p in 0..n {
            if label[p] != L::Undefined {
                continue;
            }
            let nb = region(p);
            if nb.len() < min_pts {
                label[p] = L::Noise;
                continue;
            }
            label[p] = L::Cluster(c);
            let mut seeds: Vec<usize> = nb.into_iter().filter(|&q| q != p).collect();
            let mut k = 0;
            while k < seeds.len() {
                let q = seeds[k];
                k += 1;
                if label[q] == L::Noise {
                    label[q] = L::Cluster(c);
                }
                if label[q] != L::Undefined {
                    continue;
                }
                label[q] = L::Cluster(c);
                let nq = region(q);
                if nq.len() >= min_pts {
                    seeds.extend(nq);
                }
            }
            c += 1;
        }
        label.into_iter().map(|l| if let L::Cluster(c) = l { Some(c) } else { None }).collect()
    }

    fn is_core(points: &[Point3], i: usize, eps: f64, min_pts: usize) -> bool {
        points.iter().filter(|q| q.distance(points[i]) <= eps).count() >= min_pts
    }

    #[test]
    fn removes_far_outlier() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut pts: Vec<Vec3> = (0..50)
            .map(|_| loop {
                let v = Vec3::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02));
                if v.norm() <= 0.02 {
                    break v;
                }
            })
            .collect();
        pts.push(Vec3::new(1.0, 0.0, 0.0));
        let out = dbscan_filter(&pts, &DbscanParams::new(0.05, 5).unwrap()).unwrap();
        let mut expected = pts[..50].to_vec();
        canonical_sort(&mut expected);
        assert_eq!(out, expected);
    }

    #[test]
    fn single_cluster_identity_and_empty() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.001, 0.0, 0.0), Vec3::new(0.0, 0.001, 0.0)];
        let p = DbscanParams::new(0.01, 3).unwrap();
        let mut sorted = pts.clone();
        canonical_sort(&mut sorted);
        assert_eq!(dbscan_filter(&pts, &p).unwrap(), sorted);
        assert!(dbscan_filter(&[], &p).unwrap().is_empty());
        assert!(DbscanParams::new(0.0, 3).is_err());
        assert!(DbscanParams::new(0.1, 0).is_err());
    }

    fn random_cloud(rng: &mut impl Rng) -> Vec<Vec3> {
        let n = rng.gen_range(0..=100);
        let centers: Vec<Vec3> =
            (0..3).map(|_| Vec3::new(rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.1))).collect();
        (0..n)
            .map(|_| {
                if rng.gen_bool(0.7) {
                    let c = centers[rng.gen_range(0..3)];
                    c + Vec3::new(rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02))
                } else {
                    Vec3::new(rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.1))
                }
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut pts = random_cloud(&mut rng);
            canonical_sort(&mut pts);
            let params = DbscanParams::new(rng.gen_range(0.005..0.04), rng.gen_range(1..8)).unwrap();
            let fast = dbscan_labels(&pts, &params).unwrap();
            let slow = brute_force(&pts, params.eps, params.min_pts);
            // Noise sets agree exactly; clusters agree as a partition of core points.
            for i in 0..pts.len() {
                assert_eq!(fast[i].is_some(), slow[i].is_some(), "point {i}");
            }
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if is_core(&pts, i, params.eps, params.min_pts) && is_core(&pts, j, params.eps, params.min_pts) {
                        assert_eq!(fast[i] == fast[j], slow[i] == slow[j]);
                    }
                }
            }
            let filtered = dbscan_filter(&pts, &params).unwrap();
            let expected: Vec<Vec3> = pts.iter().zip(&slow).filter(|(_, l)| l.is_some()).map(|(p, _)| *p).collect();
            assert_eq!(filtered, expected);
        }
    }

    #[test]
    fn subset_idempotent_and_largest_kept() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let pts = random_cloud(&mut rng);
            let params = DbscanParams::default();
            let once = dbscan_filter(&pts, &params).unwrap();
            assert!(once.iter().all(|p| pts.contains(p)));
            assert_eq!(dbscan_filter(&once, &params).unwrap(), once);
            let mut sorted = pts.clone();
            canonical_sort(&mut sorted);
            let labels = dbscan_labels(&sorted, &params).unwrap();
            let mut sizes = std::collections::BTreeMap::new();
            for l in labels.iter().flatten() {
                *sizes.entry(*l).or_insert(0usize) += 1;
            }
            if let Some((&big, _)) = sizes.iter().max_by_key(|(_, &n)| n) {
                for (p, l) in sorted.iter().zip(&labels) {
                    if *l == Some(big) {
                        assert!(once.contains(p));
                    }
                }
            }
        }
    }
}
