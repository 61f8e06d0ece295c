use std::fmt;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use shs_core::adm::{build_atlas_timed, consistent, AtlasParams, ClusterAlgorithm, ClusterAtlas};
use shs_core::data::{generate_synthetic, load_csv, stratified_split, Dataset, LabelId, SyntheticConfig};
use shs_core::dcm::{
    train_dt, train_lr, train_nn, Dcm, LogisticParams, ModelFile, NeuralParams, TreeParams, DEFAULT_HIDDEN,
};
use shs_core::solve::{BackendDescriptor, SearchBudget};
use shs_core::threat::{default_ladder, AttackerCapability};

use crate::args::{AdmChoice, AtlasChoiceArgs, BackendArgs, BackendChoice, DataArgs, DcmChoice, ModelArgs, PatientArgs};
use crate::output::{Provenance, Timings};

/// Bad flag values or flag combinations; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn timed<T>(timings: &mut Timings, stage: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    timings.add(stage, t.elapsed());
    out
}

pub struct Loaded {
    pub dataset: Dataset,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_data(args: &DataArgs, seed: u64, prov: &mut Provenance, timings: &mut Timings) -> Result<Loaded> {
    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(usage(format!("--test-fraction must lie in [0, 1), got {}", args.test_fraction)));
    }
    let dataset = match &args.data {
        Some(path) => {
            prov.record_file("dataset", path)?;
            timed(timings, "loading", || load_csv(path, &args.label_column))
                .with_context(|| format!("cannot load dataset {}", path.display()))?
        }
        None => {
            let mut config = SyntheticConfig::default();
            if let Some(n) = args.samples {
                config = config.with_samples(n);
            }
            prov.record_bytes("generator", "<generated>", serde_json::to_string(&config)?.as_bytes());
            timed(timings, "generation", || generate_synthetic(&config, seed))?
        }
    };
    if dataset.is_empty() {
        return Err(usage("dataset has no records"));
    }
    let (train, test) = stratified_split(&dataset, args.test_fraction, seed);
    log::info!("{} records: {} train, {} test", dataset.len(), train.len(), test.len());
    Ok(Loaded { dataset, train, test })
}

pub fn train_model(choice: DcmChoice, train: &Dataset, seed: u64, epochs: Option<usize>) -> Result<Dcm> {
    Ok(match choice {
        DcmChoice::Dt => Dcm::DecisionTree(train_dt(train, TreeParams::default())?),
        DcmChoice::Lr => Dcm::LogisticRegression(train_lr(train, LogisticParams::default())?),
        DcmChoice::Nn => {
            let mut params = NeuralParams {
                seed,
                ..NeuralParams::default()
            };
            if let Some(e) = epochs {
                params.epochs = e;
            }
            Dcm::NeuralNetwork(train_nn(train, &DEFAULT_HIDDEN, params)?)
        }
    })
}

/// Loads `--model` or trains the chosen classifier on the training split.
pub fn obtain_model(
    args: &ModelArgs,
    loaded: &Loaded,
    seed: u64,
    prov: &mut Provenance,
    timings: &mut Timings,
) -> Result<Dcm> {
    let model = match &args.model {
        Some(path) => {
            let text = read_input(path)?;
            prov.record_bytes("model", &path.display().to_string(), text.as_bytes());
            ModelFile::from_json(&text)
                .with_context(|| format!("invalid model file {}", path.display()))?
                .model
        }
        None => timed(timings, "training", || train_model(args.dcm, &loaded.train, seed, args.epochs))?,
    };
    let schema = &loaded.dataset.schema;
    if model.n_sensors() != schema.n_sensors() || model.n_labels() != schema.n_labels() {
        return Err(usage(format!(
            "model expects {} sensors and {} labels, dataset has {} and {}",
            model.n_sensors(),
            model.n_labels(),
            schema.n_sensors(),
            schema.n_labels()
        )));
    }
    Ok(model)
}

pub fn atlas_params(args: &AtlasChoiceArgs, seed: u64) -> AtlasParams {
    let algorithm = match args.adm {
        AdmChoice::Dbscan => ClusterAlgorithm::dbscan_default(),
        AdmChoice::Kmeans => ClusterAlgorithm::Kmeans { k: args.k },
    };
    AtlasParams {
        algorithm,
        seed,
        ..AtlasParams::default()
    }
}

/// Loads `--atlas` or clusters the training split.
pub fn obtain_atlas(
    args: &AtlasChoiceArgs,
    loaded: &Loaded,
    seed: u64,
    prov: &mut Provenance,
    timings: &mut Timings,
) -> Result<ClusterAtlas> {
    let atlas = match &args.atlas {
        Some(path) => {
            let text = read_input(path)?;
            prov.record_bytes("atlas", &path.display().to_string(), text.as_bytes());
            ClusterAtlas::from_json(&text).with_context(|| format!("invalid atlas file {}", path.display()))?
        }
        None => {
            let (atlas, t) = build_atlas_timed(&loaded.train, &atlas_params(args, seed))?;
            timings.add("clustering", t.clustering);
            timings.add("hull", t.hull);
            atlas
        }
    };
    let schema = &loaded.dataset.schema;
    if atlas.n_sensors != schema.n_sensors() || atlas.n_labels != schema.n_labels() {
        return Err(usage(format!(
            "atlas covers {} sensors and {} labels, dataset has {} and {}",
            atlas.n_sensors,
            atlas.n_labels,
            schema.n_sensors(),
            schema.n_labels()
        )));
    }
    Ok(atlas)
}

pub fn backend(args: &BackendArgs, seed: u64) -> Result<BackendDescriptor> {
    if args.timeout == 0 {
        return Err(usage("--timeout must be positive"));
    }
    let timeout = Duration::from_secs(args.timeout);
    Ok(match args.backend {
        BackendChoice::External => BackendDescriptor::locate_external(args.solver_path.as_deref(), timeout)?,
        BackendChoice::Builtin => BackendDescriptor {
            timeout,
            ..BackendDescriptor::builtin(SearchBudget::default(), seed)
        },
    })
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Label by name or by index.
pub fn parse_label(dataset: &Dataset, text: &str) -> Result<LabelId> {
    let names = &dataset.schema.label_names;
    if let Ok(i) = text.parse::<usize>() {
        if i < names.len() {
            return Ok(i);
        }
        return Err(usage(format!("label index {i} out of range (0..{})", names.len())));
    }
    names
        .iter()
        .position(|n| n == text)
        .ok_or_else(|| usage(format!("unknown label `{text}`; known labels: {}", names.join(", "))))
}

/// `default` or `m:t,...` with `t` a fraction or a percentage.
pub fn parse_ladder(text: &str, n_sensors: usize) -> Result<Vec<AttackerCapability>> {
    if text.trim() == "default" {
        return Ok(default_ladder(n_sensors));
    }
    let mut ladder = Vec::new();
    for rung in text.split(',').map(str::trim).filter(|r| !r.is_empty()) {
        let (m, t) = rung
            .split_once(':')
            .ok_or_else(|| usage(format!("ladder rung `{rung}` is not max_sensors:threshold")))?;
        let m: usize = m
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad sensor count in ladder rung `{rung}`")))?;
        let t = t.trim();
        let t: f64 = match t.strip_suffix('%') {
            Some(p) => p.trim().parse::<f64>().map(|v| v / 100.0),
            None => t.parse(),
        }
        .map_err(|_| usage(format!("bad threshold in ladder rung `{rung}`")))?;
        let cap = AttackerCapability::new(m, t).map_err(|e| usage(format!("ladder rung `{rung}`: {e}")))?;
        ladder.push(cap);
    }
    if ladder.is_empty() {
        return Err(usage("ladder is empty"));
    }
    let sorted = ladder
        .windows(2)
        .all(|w| (w[0].max_sensors, w[0].threshold) < (w[1].max_sensors, w[1].threshold));
    if !sorted {
        return Err(usage("ladder rungs must be strictly ascending by (max_sensors, threshold)"));
    }
    Ok(ladder)
}

/// Record index, baseline and source label of the patient under attack.
pub fn select_patient(
    args: &PatientArgs,
    dataset: &Dataset,
    dcm: &Dcm,
    atlas: &ClusterAtlas,
) -> Result<(usize, Vec<f64>, LabelId)> {
    let source = args.source.as_deref().map(|s| parse_label(dataset, s)).transpose()?;
    let index = match (args.patient, source) {
        (Some(i), _) => {
            if i >= dataset.len() {
                return Err(usage(format!("--patient {i} out of range (dataset has {} records)", dataset.len())));
            }
            i
        }
        (None, Some(j)) => dataset
            .records
            .iter()
            .position(|r| {
                r.label == j
                    && dcm.predict(&r.measurements).ok() == Some(j)
                    && consistent(&r.measurements, j, atlas).unwrap_or(false)
            })
            .ok_or_else(|| anyhow::anyhow!("no record of label {j} is both classified and consistent as {j}"))?,
        (None, None) => return Err(usage("give --patient or --source")),
    };
    let baseline = dataset.records[index].measurements.clone();
    let predicted = dcm.predict(&baseline)?;
    if let Some(j) = source {
        if j != predicted {
            return Err(usage(format!(
                "patient {index} is classified as `{}`, not `{}`",
                dataset.schema.label_names[predicted], dataset.schema.label_names[j]
            )));
        }
    }
    if !consistent(&baseline, predicted, atlas)? {
        anyhow::bail!("patient {index} is not consistent with the atlas for its own label; skipped");
    }
    Ok((index, baseline, predicted))
}
