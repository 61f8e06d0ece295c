use serde::{Deserialize, Serialize};

use super::AdmError;

/// Edge-band half-width, in units of the polygon's per-axis extent.
pub const EPS_GEOM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance, `sqrt(dx^2 + dy^2)`.
    pub fn dist(&self, other: &Point2D) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Polygon edge with endpoints ordered so that `yb >= ya`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub xa: f64,
    pub ya: f64,
    pub xb: f64,
    pub yb: f64,
}

impl LineSegment {
    pub fn new(p: Point2D, q: Point2D) -> Self {
        let (a, b) = if q.y >= p.y { (p, q) } else { (q, p) };
        Self {
            xa: a.x,
            ya: a.y,
            xb: b.x,
            yb: b.y,
        }
    }

    /// `ya < y <= yb`; horizontal edges are never in range.
    pub fn in_range(&self, y: f64) -> bool {
        self.ya < y && y <= self.yb
    }

    /// Linear form whose negativity means (x, y) lies left of the edge, i.e.
    /// a rightward ray from (x, y) crosses it: `c_x * x + c_y * y + c_0`.
    pub fn left_of_coefficients(&self) -> (f64, f64, f64) {
        (
            self.yb - self.ya,
            -(self.xb - self.xa),
            self.xb * self.ya - self.xa * self.yb,
        )
    }

    /// Evaluated as `c_x * x + c_y * y < -c_0`, the same arithmetic the
    /// constraint encoding uses.
    pub fn left_of(&self, x: f64, y: f64) -> bool {
        let (cx, cy, c0) = self.left_of_coefficients();
        0.0 + cx * x + cy * y < -c0
    }

    /// Whether the rightward horizontal ray from (x, y) crosses this edge.
    pub fn intersect(&self, x: f64, y: f64) -> bool {
        self.in_range(y) && self.left_of(x, y)
    }
}

/// Simple closed polygon stored as a vertex ring (first vertex not repeated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Polygon {
    vertices: Vec<Point2D>,
    // Per-axis extent used to scale the edge band.
    #[serde(skip)]
    scale: (f64, f64),
}

impl Polygon {
    pub fn new(vertices: Vec<Point2D>) -> Result<Self, AdmError> {
        if vertices.len() < 3 {
            return Err(AdmError::InvalidPolygon("fewer than 3 vertices".into()));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(AdmError::InvalidPolygon("non-finite vertex".into()));
        }
        let poly = Self::new_unchecked(vertices);
        if poly.signed_area() == 0.0 {
            return Err(AdmError::InvalidPolygon("zero area".into()));
        }
        if !poly.is_simple() {
            return Err(AdmError::InvalidPolygon("self-intersecting ring".into()));
        }
        Ok(poly)
    }

    pub(crate) fn new_unchecked(vertices: Vec<Point2D>) -> Self {
        let (mut lx, mut hx, mut ly, mut hy) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &vertices {
            lx = lx.min(p.x);
            hx = hx.max(p.x);
            ly = ly.min(p.y);
            hy = hy.max(p.y);
        }
        let span = |lo: f64, hi: f64| {
            let s = hi - lo;
            if s > 0.0 {
                s
            } else {
                lo.abs().max(hi.abs()).max(1.0)
            }
        };
        Self {
            scale: (span(lx, hx), span(ly, hy)),
            vertices,
        }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, AdmError> {
        Self::new(vec![
            Point2D::new(x0, y0),
            Point2D::new(x1, y0),
            Point2D::new(x1, y1),
            Point2D::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn segments(&self) -> Vec<LineSegment> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| LineSegment::new(self.vertices[i], self.vertices[(i + 1) % n]))
            .collect()
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut a = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            a += p.x * q.y - q.x * p.y;
        }
        a / 2.0
    }

    pub fn bounding_box(&self) -> (Point2D, Point2D) {
        let mut lo = Point2D::new(f64::MAX, f64::MAX);
        let mut hi = Point2D::new(f64::MIN, f64::MIN);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// No two non-adjacent edges touch and no adjacent pair folds back.
    pub fn is_simple(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            let (a, b, c) = (v[i], v[(i + 1) % n], v[(i + 2) % n]);
            if a == b {
                return false;
            }
            let cr = cross(a, b, c);
            let dot = (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y);
            if cr == 0.0 && dot < 0.0 {
                return false;
            }
        }
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_touch(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }

    /// Distance from `p` to the boundary with each axis divided by the
    /// polygon's extent along it.
    pub fn scaled_boundary_distance(&self, p: Point2D) -> f64 {
        let (sx, sy) = self.scale;
        let n = self.vertices.len();
        let q = Point2D::new(p.x / sx, p.y / sy);
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                point_segment_distance(
                    q,
                    Point2D::new(a.x / sx, a.y / sy),
                    Point2D::new(b.x / sx, b.y / sy),
                )
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn on_boundary_band(&self, p: Point2D) -> bool {
        self.scaled_boundary_distance(p) <= EPS_GEOM
    }
}

impl TryFrom<Vec<[f64; 2]>> for Polygon {
    type Error = AdmError;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, AdmError> {
        Polygon::new(v.into_iter().map(|[x, y]| Point2D::new(x, y)).collect())
    }
}

impl From<Polygon> for Vec<[f64; 2]> {
    fn from(p: Polygon) -> Self {
        p.vertices.into_iter().map(|q| [q.x, q.y]).collect()
    }
}

/// Ray-casting membership: odd number of edge crossings, or within the
/// edge band.
pub fn within_cluster(p: Point2D, poly: &Polygon) -> bool {
    let (lo, hi) = poly.bounding_box();
    let (sx, sy) = poly.scale;
    let gap_x = (lo.x - p.x).max(p.x - hi.x) / sx;
    let gap_y = (lo.y - p.y).max(p.y - hi.y) / sy;
    if gap_x > EPS_GEOM || gap_y > EPS_GEOM {
        return false;
    }
    if poly.on_boundary_band(p) {
        return true;
    }
    within_cluster_strict(p, poly)
}

/// Membership by crossing parity alone, without the edge band.
pub fn within_cluster_strict(p: Point2D, poly: &Polygon) -> bool {
    poly.segments()
        .iter()
        .fold(false, |acc, s| acc ^ s.intersect(p.x, p.y))
}

pub(crate) fn cross(o: Point2D, a: Point2D, b: Point2D) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point2D, a: Point2D, b: Point2D) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub(crate) fn segments_touch(p1: Point2D, p2: Point2D, q1: Point2D, q2: Point2D) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

fn point_segment_distance(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(&Point2D::new(a.x + t * dx, a.y + t * dy))
}
