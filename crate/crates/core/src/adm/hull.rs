use std::f64::consts::PI;

use super::geometry::{cross, segments_touch, within_cluster, Point2D, Polygon};
use super::AdmError;

/// Attempts at consecutive k before k starts growing geometrically.
const LINEAR_K_ATTEMPTS: usize = 16;

/// k-nearest-neighbour concave hull. k grows from `k_start` until the ring
/// is simple and contains every input point; once k would reach
/// `n - 1` the convex hull is returned instead. Neighbour search runs on
/// bounding-box-normalised coordinates so both axes weigh equally; the
/// returned vertices are input points.
pub fn concave_hull(points: &[Point2D], k_start: usize) -> Result<Polygon, AdmError> {
    let uniq = unique_points(points)?;
    let convex = convex_hull(&uniq)?;
    let n = uniq.len();
    let norm = normalise(&uniq);
    let mut k = k_start.max(3);
    let mut attempts = 0;
    while k < n - 1 {
        if let Some(ring) = knn_ring(&norm, k) {
            let vertices: Vec<Point2D> = ring.iter().map(|&i| uniq[i]).collect();
            if let Ok(poly) = Polygon::new(vertices) {
                if points.iter().all(|p| within_cluster(*p, &poly)) {
                    return Ok(poly);
                }
            }
        }
        attempts += 1;
        k = if attempts < LINEAR_K_ATTEMPTS { k + 1 } else { k + k / 2 };
    }
    Ok(convex)
}

/// Andrew's monotone chain without collinear boundary points.
pub fn convex_hull(points: &[Point2D]) -> Result<Polygon, AdmError> {
    let mut pts = unique_points(points)?;
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut lower: Vec<Point2D> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2D> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(AdmError::DegenerateGeometry("points are collinear".into()));
    }
    Polygon::new(lower).map_err(|e| AdmError::DegenerateGeometry(e.to_string()))
}

fn unique_points(points: &[Point2D]) -> Result<Vec<Point2D>, AdmError> {
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(AdmError::InvalidParam("non-finite point".into()));
    }
    let mut v = points.to_vec();
    v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    v.dedup();
    if v.len() < 3 {
        return Err(AdmError::DegenerateGeometry(format!("{} distinct points", v.len())));
    }
    Ok(v)
}

fn normalise(points: &[Point2D]) -> Vec<Point2D> {
    let (mut lx, mut hx, mut ly, mut hy) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        lx = lx.min(p.x);
        hx = hx.max(p.x);
        ly = ly.min(p.y);
        hy = hy.max(p.y);
    }
    let sx = if hx > lx { hx - lx } else { 1.0 };
    let sy = if hy > ly { hy - ly } else { 1.0 };
    points
        .iter()
        .map(|p| Point2D::new((p.x - lx) / sx, (p.y - ly) / sy))
        .collect()
}

/// Signed turn from direction `d` to `v` in (-pi, pi]; negative is a right turn.
fn turn(d: (f64, f64), v: (f64, f64)) -> f64 {
    let t = (d.0 * v.1 - d.1 * v.0).atan2(d.0 * v.0 + d.1 * v.1);
    if t <= -PI {
        PI
    } else {
        t
    }
}

/// One counter-clockwise wrapping pass that always takes the sharpest right
/// turn among the k nearest unused points whose edge does not cross the
/// ring so far. Returns vertex indices, or `None` when the pass gets stuck.
fn knn_ring(pts: &[Point2D], k: usize) -> Option<Vec<usize>> {
    let n = pts.len();
    let first = (0..n)
        .min_by(|&a, &b| pts[a].y.total_cmp(&pts[b].y).then(pts[a].x.total_cmp(&pts[b].x)))?;
    let mut available = vec![true; n];
    available[first] = false;
    let mut remaining = n - 1;
    let mut hull = vec![first];
    let mut current = first;
    let mut dir = (1.0, 0.0);

    while remaining > 0 && (current != first || hull.len() == 1) {
        if hull.len() == 4 {
            available[first] = true;
            remaining += 1;
        }
        let mut near: Vec<(f64, usize)> = (0..n)
            .filter(|&i| available[i])
            .map(|i| (pts[current].dist(&pts[i]), i))
            .collect();
        let kk = k.min(near.len());
        if kk < near.len() {
            near.select_nth_unstable_by(kk, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(kk);
        }
        let cur = pts[current];
        let mut cands: Vec<(f64, f64, usize)> = near
            .into_iter()
            .map(|(d, i)| (turn(dir, (pts[i].x - cur.x, pts[i].y - cur.y)), d, i))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

        let last = hull.len() - 1;
        let chosen = cands.into_iter().map(|c| c.2).find(|&c| {
            let skip_first = usize::from(c == first);
            (skip_first..last.saturating_sub(1))
                .all(|i| !segments_touch(cur, pts[c], pts[hull[i]], pts[hull[i + 1]]))
        })?;

        dir = (pts[chosen].x - cur.x, pts[chosen].y - cur.y);
        available[chosen] = false;
        remaining -= 1;
        hull.push(chosen);
        current = chosen;
    }
    if hull.len() > 1 && *hull.last().unwrap() == first {
        hull.pop();
    }
    (hull.len() >= 3).then_some(hull)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square_corners() {
        let pts = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(1.0, 1.0),
            Point2D::new(1.0, 0.0),
            Point2D::new(0.0, 1.0),
        ];
        let poly = concave_hull(&pts, 3).unwrap();
        assert_eq!(poly.len(), 4);
        assert!((poly.signed_area().abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_or_collinear_points() {
        let two = vec![Point2D::new(0.0, 0.0), Point2D::new(1.0, 1.0)];
        assert!(matches!(concave_hull(&two, 3), Err(AdmError::DegenerateGeometry(_))));
        let line: Vec<Point2D> = (0..10).map(|i| Point2D::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(concave_hull(&line, 3), Err(AdmError::DegenerateGeometry(_))));
    }

    #[test]
    fn random_clouds_are_contained() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(3..120);
            let pts: Vec<Point2D> = (0..n)
                .map(|_| Point2D::new(rng.random_range(0.0..50.0), rng.random_range(100.0..101.0)))
                .collect();
            let poly = concave_hull(&pts, 3).unwrap();
            assert!(poly.is_simple());
            assert!(pts.iter().all(|p| within_cluster(*p, &poly)));
        }
    }

    #[test]
    fn l_shape_is_concave() {
        let mut pts = Vec::new();
        for i in 0..=10 {
            for j in 0..=10 {
                if i <= 3 || j <= 3 {
                    pts.push(Point2D::new(i as f64, j as f64));
                }
            }
        }
        let poly = concave_hull(&pts, 3).unwrap();
        let convex = convex_hull(&pts).unwrap();
        assert!(poly.signed_area().abs() < convex.signed_area().abs());
        assert!(!within_cluster(Point2D::new(8.0, 8.0), &poly));
    }

    #[test]
    fn convex_hull_drops_interior_and_collinear_points() {
        let pts = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(1.0, 0.0),
            Point2D::new(2.0, 0.0),
            Point2D::new(2.0, 2.0),
            Point2D::new(0.0, 2.0),
            Point2D::new(1.0, 1.0),
        ];
        assert_eq!(convex_hull(&pts).unwrap().len(), 4);
    }
}
