use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clustering::{kmeans, label_dbscan, neighbourhoods, ClusteringResult};
use super::geometry::{within_cluster, Point2D, Polygon};
use super::hull::concave_hull;
use super::metrics::silhouette;
use super::AdmError;
use crate::data::{Dataset, LabelId};

pub const ATLAS_FORMAT_VERSION: u32 = 1;

/// Largest DBSCAN noise fraction accepted per (label, pair) key.
pub const DEFAULT_NOISE_BOUND: f64 = 0.02;

/// Inflation of degenerate-cluster boxes, as a fraction of the pair's span.
pub const BOX_PAD: f64 = 1e-6;

/// Points used when scoring candidate k for k-means.
const SILHOUETTE_SAMPLE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ClusterAlgorithm {
    Dbscan {
        noise_bound: f64,
        min_points_grid: Vec<usize>,
    },
    /// `k = None` picks the best silhouette over k in 2..=8.
    Kmeans { k: Option<usize> },
}

impl ClusterAlgorithm {
    pub fn dbscan_default() -> Self {
        ClusterAlgorithm::Dbscan {
            noise_bound: DEFAULT_NOISE_BOUND,
            min_points_grid: vec![3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasParams {
    pub algorithm: ClusterAlgorithm,
    pub hull_k: usize,
    pub seed: u64,
}

impl Default for AtlasParams {
    fn default() -> Self {
        Self {
            algorithm: ClusterAlgorithm::dbscan_default(),
            hull_k: 3,
            seed: 0,
        }
    }
}

/// Clustering settings actually used for one key. `epsilon` is in
/// min-max-normalised units of that key's points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParamsUsed {
    pub points: usize,
    pub epsilon: Option<f64>,
    pub min_points: Option<usize>,
    pub k: Option<usize>,
    pub noise_fraction: f64,
    pub bbox_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasEntry {
    pub label: LabelId,
    pub a: usize,
    pub b: usize,
    pub polygons: Vec<Polygon>,
    /// Set when no polygon could be built; the pair then constrains nothing.
    pub degenerate: bool,
    pub params: ClusterParamsUsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAtlas {
    pub version: u32,
    pub n_sensors: usize,
    pub n_labels: usize,
    pub params: AtlasParams,
    pub entries: BTreeMap<String, AtlasEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AtlasTimings {
    pub clustering: Duration,
    pub hull: Duration,
}

pub fn atlas_key(j: LabelId, a: usize, b: usize) -> String {
    format!("{j}/{a}/{b}")
}

/// Unordered sensor pairs `(a, b)` with `a < b`.
pub fn sensor_pairs(n_s: usize) -> Vec<(usize, usize)> {
    (0..n_s).flat_map(|a| (a + 1..n_s).map(move |b| (a, b))).collect()
}

impl ClusterAtlas {
    pub fn entry(&self, j: LabelId, a: usize, b: usize) -> Option<&AtlasEntry> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.entries.get(&atlas_key(j, a, b))
    }

    /// Entries for label `j` in pair order.
    pub fn entries_for(&self, j: LabelId) -> Vec<&AtlasEntry> {
        sensor_pairs(self.n_sensors)
            .into_iter()
            .filter_map(|(a, b)| self.entry(j, a, b))
            .collect()
    }

    pub fn validate(&self) -> Result<(), AdmError> {
        if self.version != ATLAS_FORMAT_VERSION {
            return Err(AdmError::InvalidAtlas(format!("unsupported version {}", self.version)));
        }
        for (key, e) in &self.entries {
            if *key != atlas_key(e.label, e.a, e.b) || e.a >= e.b || e.b >= self.n_sensors || e.label >= self.n_labels {
                return Err(AdmError::InvalidAtlas(format!("malformed key {key}")));
            }
            if e.polygons.is_empty() != e.degenerate {
                return Err(AdmError::InvalidAtlas(format!("key {key} degeneracy flag disagrees with its polygons")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, AdmError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, AdmError> {
        let atlas: ClusterAtlas = serde_json::from_str(text)?;
        atlas.validate()?;
        Ok(atlas)
    }

    pub fn polygon_count(&self) -> usize {
        self.entries.values().map(|e| e.polygons.len()).sum()
    }

    pub fn degenerate_count(&self) -> usize {
        self.entries.values().filter(|e| e.degenerate).count()
    }
}

/// Every non-degenerate pair of label `j` has a polygon containing the
/// projection of `p`.
pub fn consistent(p: &[f64], j: LabelId, atlas: &ClusterAtlas) -> Result<bool, AdmError> {
    if p.len() != atlas.n_sensors {
        return Err(AdmError::DimensionMismatch {
            expected: atlas.n_sensors,
            got: p.len(),
        });
    }
    if j >= atlas.n_labels {
        return Err(AdmError::UnknownLabel(j));
    }
    for (a, b) in sensor_pairs(atlas.n_sensors) {
        let Some(e) = atlas.entry(j, a, b) else {
            log::debug!("no atlas entry for {}; pair passes vacuously", atlas_key(j, a, b));
            continue;
        };
        if e.degenerate {
            continue;
        }
        let q = Point2D::new(p[a], p[b]);
        if !e.polygons.iter().any(|poly| within_cluster(q, poly)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fraction of records consistent with their own label.
pub fn coverage(atlas: &ClusterAtlas, data: &Dataset) -> Result<f64, AdmError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let ok = data
        .records
        .par_iter()
        .map(|r| consistent(&r.measurements, r.label, atlas).map(usize::from))
        .sum::<Result<usize, AdmError>>()?;
    Ok(ok as f64 / data.len() as f64)
}

pub fn build_atlas(train: &Dataset, params: &AtlasParams) -> Result<ClusterAtlas, AdmError> {
    build_atlas_timed(train, params).map(|(a, _)| a)
}

/// Builds one entry per (label, unordered pair) in parallel and reports
/// clustering and hull time summed over keys.
pub fn build_atlas_timed(train: &Dataset, params: &AtlasParams) -> Result<(ClusterAtlas, AtlasTimings), AdmError> {
    if train.is_empty() {
        return Err(AdmError::EmptyDataset);
    }
    let n_s = train.n_sensors();
    let n_l = train.n_labels();
    let keys: Vec<(LabelId, usize, usize)> = (0..n_l)
        .flat_map(|j| sensor_pairs(n_s).into_iter().map(move |(a, b)| (j, a, b)))
        .collect();
    let built: Vec<(AtlasEntry, AtlasTimings)> = keys
        .par_iter()
        .map(|&(j, a, b)| {
            let pts: Vec<Point2D> = train
                .records
                .iter()
                .filter(|r| r.label == j)
                .map(|r| Point2D::new(r.measurements[a], r.measurements[b]))
                .collect();
            build_entry(j, a, b, &pts, params)
        })
        .collect::<Result<_, _>>()?;

    let mut timings = AtlasTimings::default();
    let mut entries = BTreeMap::new();
    for (e, t) in built {
        if e.degenerate {
            log::warn!("atlas key {} has no polygons; it will pass vacuously", atlas_key(e.label, e.a, e.b));
        }
        timings.clustering += t.clustering;
        timings.hull += t.hull;
        entries.insert(atlas_key(e.label, e.a, e.b), e);
    }
    let atlas = ClusterAtlas {
        version: ATLAS_FORMAT_VERSION,
        n_sensors: n_s,
        n_labels: n_l,
        params: params.clone(),
        entries,
    };
    atlas.validate()?;
    Ok((atlas, timings))
}

fn build_entry(
    j: LabelId,
    a: usize,
    b: usize,
    pts: &[Point2D],
    params: &AtlasParams,
) -> Result<(AtlasEntry, AtlasTimings), AdmError> {
    let mut used = ClusterParamsUsed {
        points: pts.len(),
        epsilon: None,
        min_points: None,
        k: None,
        noise_fraction: 0.0,
        bbox_fallbacks: 0,
    };
    let mut timings = AtlasTimings::default();
    let mut polygons = Vec::new();
    if !pts.is_empty() {
        let (norm, span) = normalise(pts);
        let t0 = Instant::now();
        let result = match &params.algorithm {
            ClusterAlgorithm::Dbscan {
                noise_bound,
                min_points_grid,
            } => {
                let (eps, mp, r) = tune_dbscan(&norm, *noise_bound, min_points_grid)?;
                used.epsilon = Some(eps);
                used.min_points = Some(mp);
                r
            }
            ClusterAlgorithm::Kmeans { k } => {
                let (k, r) = tune_kmeans(&norm, *k, params.seed)?;
                used.k = Some(k);
                r
            }
        };
        timings.clustering = t0.elapsed();
        used.noise_fraction = result.noise_fraction();

        let t1 = Instant::now();
        for members in result.members() {
            let cluster: Vec<Point2D> = members.iter().map(|&i| pts[i]).collect();
            match concave_hull(&cluster, params.hull_k) {
                Ok(poly) => polygons.push(poly),
                Err(AdmError::DegenerateGeometry(_)) => {
                    used.bbox_fallbacks += 1;
                    polygons.push(inflated_bbox(&cluster, span)?);
                }
                Err(e) => return Err(e),
            }
        }
        timings.hull = t1.elapsed();
    }
    Ok((
        AtlasEntry {
            label: j,
            a,
            b,
            degenerate: polygons.is_empty(),
            polygons,
            params: used,
        },
        timings,
    ))
}

/// Min-max normalisation; a zero-width axis keeps unit span.
fn normalise(pts: &[Point2D]) -> (Vec<Point2D>, (f64, f64)) {
    let (mut lx, mut hx, mut ly, mut hy) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        lx = lx.min(p.x);
        hx = hx.max(p.x);
        ly = ly.min(p.y);
        hy = hy.max(p.y);
    }
    let sx = if hx > lx { hx - lx } else { 1.0 };
    let sy = if hy > ly { hy - ly } else { 1.0 };
    let norm = pts
        .iter()
        .map(|p| Point2D::new((p.x - lx) / sx, (p.y - ly) / sy))
        .collect();
    (norm, (sx, sy))
}

fn inflated_bbox(cluster: &[Point2D], span: (f64, f64)) -> Result<Polygon, AdmError> {
    let (mut lo, mut hi) = (Point2D::new(f64::MAX, f64::MAX), Point2D::new(f64::MIN, f64::MIN));
    for p in cluster {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    // The crossing test loses ~1e-16 relative to the coordinate magnitude,
    // so a box only EPS_GEOM wide would be below its resolution.
    let pad = |s: f64, l: f64, h: f64| (BOX_PAD * s).max(l.abs().max(h.abs()) * 1e-12);
    let px = pad(span.0, lo.x, hi.x);
    let py = pad(span.1, lo.y, hi.y);
    Polygon::rectangle(lo.x - px, lo.y - py, hi.x + px, hi.y + py)
}

/// Distance from each point to its nearest other point (0 for duplicates).
fn nearest_neighbour_distances(pts: &[Point2D]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| pts[i].x.total_cmp(&pts[j].x));
    let mut out = vec![f64::INFINITY; pts.len()];
    for (pos, &i) in order.iter().enumerate() {
        let mut best = f64::INFINITY;
        for &j in &order[pos + 1..] {
            if pts[j].x - pts[i].x > best {
                break;
            }
            best = best.min(pts[i].dist(&pts[j]));
        }
        for &j in order[..pos].iter().rev() {
            if pts[i].x - pts[j].x > best {
                break;
            }
            best = best.min(pts[i].dist(&pts[j]));
        }
        out[i] = best;
    }
    out
}

/// Smallest epsilon (over the 5th..95th nearest-neighbour percentiles,
/// then growing by half beyond them) whose noise fraction is within the
/// bound, ties to the larger min_points. Noise is non-increasing in epsilon
/// and non-decreasing in min_points, so the search runs on the smallest
/// min_points and the others are only tried at the epsilon it finds.
fn tune_dbscan(
    pts: &[Point2D],
    noise_bound: f64,
    min_points_grid: &[usize],
) -> Result<(f64, usize, ClusteringResult), AdmError> {
    let mut grid = min_points_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let Some(&mp0) = grid.first() else {
        return Err(AdmError::InvalidParam("empty min_points grid".into()));
    };
    if mp0 < 1 {
        return Err(AdmError::InvalidParam("min_points must be at least 1".into()));
    }
    let mut nn: Vec<f64> = nearest_neighbour_distances(pts)
        .into_iter()
        .filter(|d| d.is_finite())
        .collect();
    nn.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = (1..=19)
        .filter_map(|q| nn.get(((q * 5) as f64 / 100.0 * (nn.len().saturating_sub(1)) as f64).round() as usize))
        .copied()
        .filter(|&d| d > 0.0)
        .collect();
    candidates.dedup();
    let mut eps = candidates.last().copied().unwrap_or(1e-3);
    // Normalised points lie in the unit square, so eps = 2 joins everything.
    while eps < 2.0 {
        eps = (eps * 1.5).min(2.0);
        candidates.push(eps);
    }

    let qualifies = |r: &ClusteringResult| r.noise_fraction() <= noise_bound;
    // Wide runs cost O(n^2), so gallop up from the smallest candidate.
    let last = candidates.len() - 1;
    let (mut lo, mut step, mut idx) = (0, 1, 0);
    let mut hit = None;
    loop {
        let nb = neighbourhoods(pts, candidates[idx]);
        let r = label_dbscan(&nb, mp0);
        if qualifies(&r) {
            hit = Some((idx, nb, r));
            break;
        }
        if idx == last {
            break;
        }
        lo = idx + 1;
        idx = (idx + step).min(last);
        step *= 2;
    }
    let Some((mut hi, mut nb, mut found)) = hit else {
        // Fewer points than min_points: everything is noise.
        return Ok((candidates[last], mp0, found_all_noise(pts.len())));
    };
    while lo < hi {
        let mid = (lo + hi) / 2;
        let mid_nb = neighbourhoods(pts, candidates[mid]);
        let r = label_dbscan(&mid_nb, mp0);
        if qualifies(&r) {
            (hi, nb, found) = (mid, mid_nb, r);
        } else {
            lo = mid + 1;
        }
    }
    let mut chosen = mp0;
    for &mp in &grid[1..] {
        let r = label_dbscan(&nb, mp);
        if !qualifies(&r) {
            break;
        }
        (chosen, found) = (mp, r);
    }
    Ok((candidates[hi], chosen, found))
}

fn found_all_noise(n: usize) -> ClusteringResult {
    ClusteringResult {
        assignments: vec![None; n],
        n_clusters: 0,
        centroids: None,
    }
}

fn tune_kmeans(pts: &[Point2D], k: Option<usize>, seed: u64) -> Result<(usize, ClusteringResult), AdmError> {
    if let Some(k) = k {
        return Ok((k, kmeans(pts, k, seed)?));
    }
    let max_k = 8.min(pts.len());
    if max_k < 2 {
        return Ok((1, kmeans(pts, 1, seed)?));
    }
    let stride = pts.len().div_ceil(SILHOUETTE_SAMPLE);
    let sample: Vec<usize> = (0..pts.len()).step_by(stride).collect();
    let mut best: Option<(f64, usize, ClusteringResult)> = None;
    for k in 2..=max_k {
        let r = kmeans(pts, k, seed)?;
        let mut members = vec![Vec::new(); k];
        for &i in &sample {
            if let Some(c) = r.assignments[i] {
                members[c].push(i);
            }
        }
        members.retain(|m| !m.is_empty());
        let score = if members.len() >= 2 { silhouette(pts, &members) } else { f64::NEG_INFINITY };
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, k, r));
        }
    }
    let (_, k, r) = best.unwrap();
    Ok((k, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PatientRecord, SensorSchema};

    fn grid_dataset() -> Dataset {
        let schema = SensorSchema::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        let mut records = Vec::new();
        for i in 0..10 {
            for k in 0..10 {
                let (u, v) = (i as f64, k as f64);
                records.push(PatientRecord::new(vec![u, v, u + 0.5 * v], 0));
                records.push(PatientRecord::new(vec![50.0 + u, 80.0 + v, 10.0 * u - v], 1));
            }
        }
        Dataset::new(schema, records).unwrap()
    }

    #[test]
    fn key_count_and_training_coverage() {
        let ds = grid_dataset();
        let atlas = build_atlas(&ds, &AtlasParams::default()).unwrap();
        assert_eq!(atlas.entries.len(), 2 * 3);
        assert_eq!(coverage(&atlas, &ds).unwrap(), 1.0);
        assert!(!consistent(&[1000.0, 0.0, 0.0], 0, &atlas).unwrap());
        assert!(matches!(consistent(&[0.0; 3], 5, &atlas), Err(AdmError::UnknownLabel(5))));
    }

    #[test]
    fn serialization_is_deterministic_and_round_trips() {
        let ds = grid_dataset();
        let a = build_atlas(&ds, &AtlasParams::default()).unwrap().to_json().unwrap();
        let b = build_atlas(&ds, &AtlasParams::default()).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"1/0/2\""));
        let back = ClusterAtlas::from_json(&a).unwrap();
        assert_eq!(back.to_json().unwrap(), a);
    }

    #[test]
    fn kmeans_atlas_contains_training_points() {
        let ds = grid_dataset();
        let params = AtlasParams {
            algorithm: ClusterAlgorithm::Kmeans { k: None },
            ..Default::default()
        };
        let atlas = build_atlas(&ds, &params).unwrap();
        assert_eq!(coverage(&atlas, &ds).unwrap(), 1.0);
    }

    #[test]
    fn collinear_cluster_becomes_a_box() {
        let pts: Vec<Point2D> = (0..10).map(|i| Point2D::new(i as f64, 3.0)).collect();
        let (e, _) = build_entry(0, 0, 1, &pts, &AtlasParams::default()).unwrap();
        assert_eq!(e.params.bbox_fallbacks, 1);
        assert!(!e.degenerate);
        assert!(pts.iter().all(|p| within_cluster(*p, &e.polygons[0])));
        assert!(!within_cluster(Point2D::new(5.0, 3.1), &e.polygons[0]));
    }

    #[test]
    fn vacuous_pairs_pass() {
        let ds = grid_dataset();
        let mut atlas = build_atlas(&ds, &AtlasParams::default()).unwrap();
        for e in atlas.entries.values_mut() {
            e.polygons.clear();
            e.degenerate = true;
        }
        assert!(consistent(&[1e6, -1e6, 0.0], 0, &atlas).unwrap());
    }
}
