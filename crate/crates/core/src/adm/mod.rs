//! Anomaly-detection model: per-label clusters of every sensor pair, their
//! concave-hull boundaries, and the membership tests built on them.

mod atlas;
mod clustering;
mod geometry;
mod hull;
mod metrics;

use thiserror::Error;

pub use atlas::{
    atlas_key, build_atlas, build_atlas_timed, consistent, coverage, sensor_pairs, AtlasEntry, AtlasParams,
    AtlasTimings, ClusterAlgorithm, ClusterAtlas, ClusterParamsUsed, ATLAS_FORMAT_VERSION, BOX_PAD, DEFAULT_NOISE_BOUND,
};
pub use clustering::{dbscan, kmeans, ClusteringResult};
pub use geometry::{within_cluster, within_cluster_strict, LineSegment, Point2D, Polygon, EPS_GEOM};
pub use hull::{concave_hull, convex_hull};
pub use metrics::{clustering_metrics, ClusterMetrics};

#[derive(Debug, Error)]
pub enum AdmError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("need at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid atlas: {0}")]
    InvalidAtlas(String),
    #[error("label {0} is not in the atlas")]
    UnknownLabel(usize),
    #[error("expected {expected} measurements, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
