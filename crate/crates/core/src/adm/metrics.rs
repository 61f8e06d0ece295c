use serde::{Deserialize, Serialize};

use super::clustering::ClusteringResult;
use super::geometry::Point2D;
use super::AdmError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    /// Mean silhouette over clustered points.
    pub scs: f64,
    /// Davies-Bouldin index.
    pub dbs: f64,
    /// Dunn index; infinite when every cluster has zero diameter.
    pub di: f64,
}

/// Silhouette, Davies-Bouldin and Dunn scores. Noise points are ignored.
pub fn clustering_metrics(points: &[Point2D], result: &ClusteringResult) -> Result<ClusterMetrics, AdmError> {
    let members: Vec<Vec<usize>> = result.members().into_iter().filter(|m| !m.is_empty()).collect();
    if members.len() < 2 {
        return Err(AdmError::TooFewClusters(members.len()));
    }
    Ok(ClusterMetrics {
        scs: silhouette(points, &members),
        dbs: davies_bouldin(points, &members),
        di: dunn(points, &members),
    })
}

pub(crate) fn silhouette(points: &[Point2D], members: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (c, own) in members.iter().enumerate() {
        for &i in own {
            count += 1;
            if own.len() == 1 {
                continue;
            }
            let a = own.iter().map(|&j| points[i].dist(&points[j])).sum::<f64>() / (own.len() - 1) as f64;
            let b = members
                .iter()
                .enumerate()
                .filter(|(o, _)| *o != c)
                .map(|(_, m)| m.iter().map(|&j| points[i].dist(&points[j])).sum::<f64>() / m.len() as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
        }
    }
    total / count as f64
}

fn centroid(points: &[Point2D], m: &[usize]) -> Point2D {
    let n = m.len() as f64;
    Point2D::new(
        m.iter().map(|&i| points[i].x).sum::<f64>() / n,
        m.iter().map(|&i| points[i].y).sum::<f64>() / n,
    )
}

fn davies_bouldin(points: &[Point2D], members: &[Vec<usize>]) -> f64 {
    let cents: Vec<Point2D> = members.iter().map(|m| centroid(points, m)).collect();
    let scatter: Vec<f64> = members
        .iter()
        .zip(&cents)
        .map(|(m, c)| m.iter().map(|&i| points[i].dist(c)).sum::<f64>() / m.len() as f64)
        .collect();
    let k = members.len();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = cents[i].dist(&cents[j]);
                    if d > 0.0 {
                        (scatter[i] + scatter[j]) / d
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

fn dunn(points: &[Point2D], members: &[Vec<usize>]) -> f64 {
    let mut min_inter = f64::INFINITY;
    let mut max_diam = 0.0f64;
    for (c, m) in members.iter().enumerate() {
        for (x, &i) in m.iter().enumerate() {
            for &j in &m[x + 1..] {
                max_diam = max_diam.max(points[i].dist(&points[j]));
            }
            for other in &members[c + 1..] {
                for &j in other {
                    min_inter = min_inter.min(points[i].dist(&points[j]));
                }
            }
        }
    }
    if max_diam > 0.0 {
        min_inter / max_diam
    } else {
        f64::INFINITY
    }
}
