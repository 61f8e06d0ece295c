#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Duration;

use shs_core::adm::{
    atlas_key, sensor_pairs, AtlasEntry, AtlasParams, ClusterAtlas, ClusterParamsUsed, Polygon, ATLAS_FORMAT_VERSION,
};
use shs_core::solve::BackendDescriptor;

/// External solver, or `None` (with a note on stderr) when none is installed.
pub fn external() -> Option<BackendDescriptor> {
    match BackendDescriptor::locate_external(None, Duration::from_secs(120)) {
        Ok(b) => Some(b),
        Err(e) => {
            eprintln!("external solver unavailable, solver-backed checks skipped: {e}");
            None
        }
    }
}

/// Atlas whose entry for `(j, a, b)` holds the polygons returned by `f`.
pub fn atlas_from(n_sensors: usize, n_labels: usize, f: impl Fn(usize, usize, usize) -> Vec<Polygon>) -> ClusterAtlas {
    let mut entries = BTreeMap::new();
    for j in 0..n_labels {
        for (a, b) in sensor_pairs(n_sensors) {
            let polygons = f(j, a, b);
            let entry = AtlasEntry {
                label: j,
                a,
                b,
                degenerate: polygons.is_empty(),
                polygons,
                params: ClusterParamsUsed {
                    points: 0,
                    epsilon: None,
                    min_points: None,
                    k: None,
                    noise_fraction: 0.0,
                    bbox_fallbacks: 0,
                },
            };
            entries.insert(atlas_key(j, a, b), entry);
        }
    }
    let atlas = ClusterAtlas {
        version: ATLAS_FORMAT_VERSION,
        n_sensors,
        n_labels,
        params: AtlasParams::default(),
        entries,
    };
    atlas.validate().expect("fixture atlas is valid");
    atlas
}

/// Axis-aligned box far larger than any measurement used in the fixtures.
pub fn everywhere() -> Polygon {
    Polygon::rectangle(-1e4, -1e4, 1e4, 1e4).unwrap()
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::rectangle(x0, y0, x1, y1).unwrap()
}
