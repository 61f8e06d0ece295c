use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::Point2D;
use super::AdmError;

const KMEANS_MAX_ITER: usize = 500;

/// Per-point cluster id (`None` is noise) and, for k-means, the centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<Option<usize>>,
    pub n_clusters: usize,
    pub centroids: Option<Vec<Point2D>>,
}

impl ClusteringResult {
    pub fn noise_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }

    pub fn noise_fraction(&self) -> f64 {
        if self.assignments.is_empty() {
            0.0
        } else {
            self.noise_count() as f64 / self.assignments.len() as f64
        }
    }

    /// Point indices grouped by cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_clusters];
        for (i, a) in self.assignments.iter().enumerate() {
            if let Some(c) = a {
                m[*c].push(i);
            }
        }
        m
    }
}

/// Uniform grid of cell size epsilon, stored as point indices sorted by
/// cell with a dense offset table.
struct RegionIndex<'a> {
    points: &'a [Point2D],
    eps: f64,
    grid: Option<Grid>,
}

struct Grid {
    origin: (f64, f64),
    dims: (usize, usize),
    starts: Vec<u32>,
    order: Vec<u32>,
}

const MAX_GRID_CELLS: usize = 1 << 22;

impl<'a> RegionIndex<'a> {
    fn new(points: &'a [Point2D], eps: f64) -> Self {
        Self {
            points,
            eps,
            grid: Self::build(points, eps),
        }
    }

    fn build(points: &[Point2D], eps: f64) -> Option<Grid> {
        let first = points.first()?;
        let (mut lx, mut hx, mut ly, mut hy) = (first.x, first.x, first.y, first.y);
        for p in points {
            lx = lx.min(p.x);
            hx = hx.max(p.x);
            ly = ly.min(p.y);
            hy = hy.max(p.y);
        }
        let nx = ((hx - lx) / eps).floor() + 1.0;
        let ny = ((hy - ly) / eps).floor() + 1.0;
        if nx * ny > MAX_GRID_CELLS as f64 {
            return None;
        }
        let dims = (nx as usize, ny as usize);
        let cell_of = |p: &Point2D| {
            let cx = (((p.x - lx) / eps).floor() as usize).min(dims.0 - 1);
            let cy = (((p.y - ly) / eps).floor() as usize).min(dims.1 - 1);
            cy * dims.0 + cx
        };
        let mut starts = vec![0u32; dims.0 * dims.1 + 1];
        for p in points {
            starts[cell_of(p) + 1] += 1;
        }
        for c in 1..starts.len() {
            starts[c] += starts[c - 1];
        }
        let mut fill = starts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p);
            order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        Some(Grid {
            origin: (lx, ly),
            dims,
            starts,
            order,
        })
    }

    fn query(&self, i: usize) -> Vec<u32> {
        let p = &self.points[i];
        let eps = self.eps;
        let near = |j: &u32| p.dist(&self.points[*j as usize]) <= eps;
        let Some(g) = &self.grid else {
            return (0..self.points.len() as u32).filter(near).collect();
        };
        // Cells are clamped at the upper edge, so scan one extra ring there.
        let cx = (((p.x - g.origin.0) / eps).floor() as usize).min(g.dims.0 - 1);
        let cy = (((p.y - g.origin.1) / eps).floor() as usize).min(g.dims.1 - 1);
        let mut out = Vec::new();
        for y in cy.saturating_sub(1)..=(cy + 1).min(g.dims.1 - 1) {
            let row = y * g.dims.0;
            let x0 = row + cx.saturating_sub(1);
            let x1 = row + (cx + 1).min(g.dims.0 - 1);
            let (s, e) = (g.starts[x0] as usize, g.starts[x1 + 1] as usize);
            out.extend(g.order[s..e].iter().copied().filter(near));
        }
        out
    }
}

/// Density-based clustering. A point is core when its closed
/// `epsilon`-ball (itself included) holds at least `min_points` points.
/// Clusters are numbered in order of their lowest-index core point; a
/// border point joins the lowest-numbered cluster that reaches it.
pub fn dbscan(points: &[Point2D], epsilon: f64, min_points: usize) -> Result<ClusteringResult, AdmError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(AdmError::InvalidParam(format!("epsilon must be positive, got {epsilon}")));
    }
    if min_points < 1 {
        return Err(AdmError::InvalidParam("min_points must be at least 1".into()));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(AdmError::InvalidParam("non-finite point".into()));
    }
    Ok(label_dbscan(&neighbourhoods(points, epsilon), min_points))
}

/// Closed epsilon-ball of every point (the point itself included).
pub(crate) fn neighbourhoods(points: &[Point2D], epsilon: f64) -> Vec<Vec<u32>> {
    let index = RegionIndex::new(points, epsilon);
    (0..points.len()).map(|i| index.query(i)).collect()
}

pub(crate) fn label_dbscan(neighbours: &[Vec<u32>], min_points: usize) -> ClusteringResult {
    let n = neighbours.len();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_points).collect();
    let mut assignments: Vec<Option<usize>> = vec![None; n];
    let mut queued = vec![false; n];
    let mut cluster = 0;
    for i in 0..n {
        if !core[i] || assignments[i].is_some() {
            continue;
        }
        let mut queue = VecDeque::from([i]);
        queued[i] = true;
        while let Some(q) = queue.pop_front() {
            assignments[q].get_or_insert(cluster);
            if !core[q] {
                continue;
            }
            for &nb in &neighbours[q] {
                let nb = nb as usize;
                if !queued[nb] && (assignments[nb].is_none() || core[nb]) {
                    queued[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        cluster += 1;
    }
    ClusteringResult {
        assignments,
        n_clusters: cluster,
        centroids: None,
    }
}

/// Lloyd iteration from a seeded farthest-point start. Stops once an
/// assignment pass changes nothing, so the centroids are exactly the means
/// of their members.
pub fn kmeans(points: &[Point2D], k: usize, seed: u64) -> Result<ClusteringResult, AdmError> {
    if k < 1 {
        return Err(AdmError::InvalidParam("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(AdmError::TooFewPoints {
            needed: k,
            found: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut nearest: Vec<f64> = points.iter().map(|p| p.dist(&centroids[0])).collect();
    while centroids.len() < k {
        let far = farthest(&nearest);
        let c = points[far];
        centroids.push(c);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(p.dist(&c));
        }
    }

    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = nearest_centroid(p, &centroids);
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        // Keep every cluster non-empty: an orphaned centroid takes the point
        // farthest from its own centroid.
        loop {
            let mut counts = vec![0usize; k];
            for &a in &assignments {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let dists: Vec<f64> = points
                .iter()
                .zip(&assignments)
                .map(|(p, &a)| if counts[a] > 1 { p.dist(&centroids[a]) } else { -1.0 })
                .collect();
            let far = farthest(&dists);
            assignments[far] = empty;
            centroids[empty] = points[far];
        }
        centroids = means(points, &assignments, k);
    }
    Ok(ClusteringResult {
        assignments: assignments.into_iter().map(Some).collect(),
        n_clusters: k,
        centroids: Some(centroids),
    })
}

fn farthest(d: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..d.len() {
        if d[i] > d[best] {
            best = i;
        }
    }
    best
}

fn nearest_centroid(p: &Point2D, centroids: &[Point2D]) -> usize {
    let mut best = 0;
    let mut best_d = p.dist(&centroids[0]);
    for (c, q) in centroids.iter().enumerate().skip(1) {
        let d = p.dist(q);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn means(points: &[Point2D], assignments: &[usize], k: usize) -> Vec<Point2D> {
    let mut sum = vec![(0.0, 0.0, 0usize); k];
    for (p, &a) in points.iter().zip(assignments) {
        sum[a].0 += p.x;
        sum[a].1 += p.y;
        sum[a].2 += 1;
    }
    sum.into_iter()
        .map(|(x, y, n)| Point2D::new(x / n as f64, y / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(cx: f64, cy: f64) -> Vec<Point2D> {
        (0..10)
            .map(|i| Point2D::new(cx + (i % 4) as f64 * 0.3, cy + (i / 4) as f64 * 0.3))
            .collect()
    }

    #[test]
    fn two_separated_blobs() {
        let mut pts = blob(0.0, 0.0);
        pts.extend(blob(100.0, 0.0));
        let r = dbscan(&pts, 1.5, 3).unwrap();
        assert_eq!(r.n_clusters, 2);
        assert_eq!(r.noise_count(), 0);
        assert!(r.assignments[..10].iter().all(|a| *a == Some(0)));
        assert!(r.assignments[10..].iter().all(|a| *a == Some(1)));
    }

    #[test]
    fn isolated_point_is_noise() {
        let r = dbscan(&[Point2D::new(0.0, 0.0)], 1.0, 3).unwrap();
        assert_eq!(r.assignments, vec![None]);
        assert_eq!(r.n_clusters, 0);
    }

    #[test]
    fn bad_params() {
        assert!(dbscan(&[], 0.0, 3).is_err());
        assert!(dbscan(&[], 1.0, 0).is_err());
        assert!(kmeans(&[Point2D::new(0.0, 0.0)], 2, 0).is_err());
    }

    #[test]
    fn kmeans_single_cluster_is_the_mean() {
        let pts = vec![
            Point2D::new(1.0, 2.0),
            Point2D::new(3.0, 4.0),
            Point2D::new(5.0, 9.0),
        ];
        let r = kmeans(&pts, 1, 7).unwrap();
        let c = r.centroids.unwrap()[0];
        assert!((c.x - 3.0).abs() < 1e-12 && (c.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let mut pts = blob(0.0, 0.0);
        pts.extend(blob(50.0, 50.0));
        let r = kmeans(&pts, 2, 3).unwrap();
        let first = r.assignments[0];
        assert!(r.assignments[..10].iter().all(|a| *a == first));
        assert!(r.assignments[10..].iter().all(|a| *a != first));
    }

    #[test]
    fn kmeans_is_seed_deterministic() {
        let pts: Vec<Point2D> = (0..40)
            .map(|i| Point2D::new((i * 7 % 13) as f64, (i * 5 % 11) as f64))
            .collect();
        assert_eq!(kmeans(&pts, 3, 11).unwrap(), kmeans(&pts, 3, 11).unwrap());
    }
}
