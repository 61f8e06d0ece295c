use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use shs_core::adm::{coverage, sensor_pairs, ClusterAtlas};
use shs_core::data::{generate_synthetic, save_csv, Dataset, LabelId, SyntheticConfig};
use shs_core::dcm::{evaluate, ConfusionMatrix, Dcm, Metrics, ModelFile};
use shs_core::threat::{
    attack_matrix, capability_grid, escalate, label_matrix, resiliency, sensor_frequency, validate_attack,
    AttackMatrix, AttackVector, AttackerCapability, Certificate, EscalationOutcome, MatrixCell, RungVerdict,
    StageTimings, ThreatContext,
};

use crate::args::{
    AnalysisArgs, AttackArgs, Cli, GenerateArgs, MatrixArgs, ReportArgs, ResiliencyArgs, TrainArgs,
};
use crate::args::AtlasArgs;
use crate::output::{OutDir, Provenance, Timings};
use crate::pipeline::{
    backend, load_data, obtain_atlas, obtain_model, parse_label, parse_ladder, select_patient, timed, train_model,
    usage, Loaded,
};

/// Definition recorded next to every attack count.
const COUNT_DEFINITION: &str =
    "number of target labels with a feasible, validated attack at the given (max_sensors, threshold)";

#[derive(Serialize)]
struct LabelRef {
    index: LabelId,
    name: String,
}

fn label_ref(ds: &Dataset, j: LabelId) -> LabelRef {
    LabelRef {
        index: j,
        name: ds.schema.label_names[j].clone(),
    }
}

/// One attack vector as written to reports.
#[derive(Serialize)]
struct VectorReport {
    patient: Option<usize>,
    source: LabelRef,
    target: LabelRef,
    baseline: Vec<f64>,
    deltas: Vec<f64>,
    altered: Vec<f64>,
    touched: Vec<String>,
    capability: AttackerCapability,
    backend: String,
    validated: bool,
}

fn vector_report(ds: &Dataset, dcm: &Dcm, atlas: &ClusterAtlas, patient: Option<usize>, v: &AttackVector) -> VectorReport {
    VectorReport {
        patient,
        source: label_ref(ds, v.source),
        target: label_ref(ds, v.target),
        baseline: v.baseline.clone(),
        deltas: v.deltas.clone(),
        altered: v.altered.clone(),
        touched: v.touched().into_iter().map(|s| ds.schema.sensor_names[s].clone()).collect(),
        capability: v.capability,
        backend: v.backend.clone(),
        validated: validate_attack(v, dcm, atlas),
    }
}

pub fn generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let mut prov = Provenance::new("generate", cli.seed);
    let mut timings = Timings::default();
    let mut config = match &args.config {
        Some(path) => {
            prov.record_file("config", path)?;
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            serde_json::from_str::<SyntheticConfig>(&text)
                .with_context(|| format!("invalid generator config {}", path.display()))?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(n) = args.samples {
        config = config.with_samples(n);
    }
    config.validate()?;
    let ds = timed(&mut timings, "generation", || generate_synthetic(&config, cli.seed))?;
    let mut out = OutDir::create(&cli.out)?;
    let csv = out.path("data.csv");
    timed(&mut timings, "writing", || save_csv(&ds, &csv, "label"))?;
    out.written.push(csv);

    #[derive(Serialize)]
    struct Report<'a> {
        provenance: Provenance,
        records: usize,
        sensors: &'a [String],
        labels: &'a [String],
        label_counts: Vec<usize>,
        timings: Timings,
    }
    out.json(
        "generate.json",
        &Report {
            provenance: prov,
            records: ds.len(),
            sensors: &ds.schema.sensor_names,
            labels: &ds.schema.label_names,
            label_counts: ds.label_counts(),
            timings,
        },
    )?;
    println!("generated {} records", ds.len());
    finish(&out)
}

pub fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    if args.model.model.is_some() {
        return Err(usage("`train` writes a model; --model is for the analysis commands"));
    }
    let mut prov = Provenance::new("train", cli.seed);
    let mut timings = Timings::default();
    let loaded = load_data(&args.data, cli.seed, &mut prov, &mut timings)?;
    let dcm = timed(&mut timings, "training", || {
        train_model(args.model.dcm, &loaded.train, cli.seed, args.model.epochs)
    })?;
    let eval_set = if loaded.test.is_empty() { &loaded.train } else { &loaded.test };
    let (metrics, confusion) = timed(&mut timings, "evaluation", || evaluate(&dcm, eval_set))?;

    let mut out = OutDir::create(&cli.out)?;
    let file = ModelFile::new(loaded.dataset.schema.clone(), dcm);
    out.text("model.json", &file.to_json()?)?;

    #[derive(Serialize)]
    struct Report {
        provenance: Provenance,
        dcm: shs_core::dcm::DcmKind,
        train_records: usize,
        evaluated_records: usize,
        metrics: Metrics,
        confusion: ConfusionMatrix,
        timings: Timings,
    }
    out.json(
        "metrics.json",
        &Report {
            provenance: prov,
            dcm: file.model.kind(),
            train_records: loaded.train.len(),
            evaluated_records: eval_set.len(),
            metrics,
            confusion,
            timings,
        },
    )?;
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
        metrics.accuracy, metrics.precision, metrics.recall, metrics.f1
    );
    finish(&out)
}

pub fn atlas(cli: &Cli, args: &AtlasArgs) -> Result<()> {
    let mut prov = Provenance::new("atlas", cli.seed);
    let mut timings = Timings::default();
    let loaded = load_data(&args.data, cli.seed, &mut prov, &mut timings)?;
    let atlas = obtain_atlas(&args.atlas, &loaded, cli.seed, &mut prov, &mut timings)?;
    let cov = timed(&mut timings, "coverage", || coverage(&atlas, &loaded.train))?;

    let mut out = OutDir::create(&cli.out)?;
    out.text("atlas.json", &atlas.to_json()?)?;

    #[derive(Serialize)]
    struct Report {
        provenance: Provenance,
        coverage: f64,
        records: usize,
        consistent_records: usize,
        possible_keys: usize,
        keys_with_polygons: usize,
        degenerate_keys: usize,
        polygons: usize,
        timings: Timings,
    }
    let possible = atlas.n_labels * sensor_pairs(atlas.n_sensors).len();
    let degenerate = atlas.degenerate_count();
    out.json(
        "coverage.json",
        &Report {
            provenance: prov,
            coverage: cov,
            records: loaded.train.len(),
            consistent_records: (cov * loaded.train.len() as f64).round() as usize,
            possible_keys: possible,
            keys_with_polygons: atlas.entries.len() - degenerate,
            degenerate_keys: degenerate,
            polygons: atlas.polygon_count(),
            timings,
        },
    )?;
    println!("coverage {cov:.4} over {} training records", loaded.train.len());
    finish(&out)
}

/// Inputs shared by the solver-backed commands.
struct Analysis {
    prov: Provenance,
    timings: Timings,
    loaded: Loaded,
    dcm: Dcm,
    atlas: ClusterAtlas,
    backend: shs_core::solve::BackendDescriptor,
    ladder: Vec<AttackerCapability>,
    stages: StageTimings,
}

impl Analysis {
    fn load(cli: &Cli, command: &str, args: &AnalysisArgs) -> Result<Self> {
        let mut prov = Provenance::new(command, cli.seed);
        let mut timings = Timings::default();
        let loaded = load_data(&args.data, cli.seed, &mut prov, &mut timings)?;
        let ladder = parse_ladder(&args.ladder, loaded.dataset.n_sensors())?;
        let backend = backend(&args.backend, cli.seed)?;
        let dcm = obtain_model(&args.model, &loaded, cli.seed, &mut prov, &mut timings)?;
        let atlas = obtain_atlas(&args.atlas, &loaded, cli.seed, &mut prov, &mut timings)?;
        Ok(Self {
            prov,
            timings,
            loaded,
            dcm,
            atlas,
            backend,
            ladder,
            stages: StageTimings::default(),
        })
    }

    fn ctx(&self) -> ThreatContext<'_> {
        ThreatContext::new(&self.dcm, &self.atlas, &self.backend).with_timings(&self.stages)
    }

    fn ds(&self) -> &Dataset {
        &self.loaded.dataset
    }

    /// Stage timings including the solver-side totals.
    fn final_timings(&self) -> Timings {
        let mut t = self.timings.clone();
        t.add("encoding", self.stages.encoding());
        t.add("solving", self.stages.solving());
        t
    }
}

#[derive(Serialize)]
struct Header<'a> {
    provenance: &'a Provenance,
    backend: &'a str,
    dcm: shs_core::dcm::DcmKind,
    labels: &'a [String],
    sensors: &'a [String],
}

fn header(a: &Analysis) -> Header<'_> {
    Header {
        provenance: &a.prov,
        backend: &a.backend.name,
        dcm: a.dcm.kind(),
        labels: &a.ds().schema.label_names,
        sensors: &a.ds().schema.sensor_names,
    }
}

pub fn attack(cli: &Cli, args: &AttackArgs) -> Result<()> {
    let mut a = Analysis::load(cli, "attack", &args.analysis)?;
    let target = parse_label(a.ds(), &args.target)?;
    let (patient, baseline, source) = select_patient(&args.patient, a.ds(), &a.dcm, &a.atlas)?;
    if target == source {
        return Err(usage("--target equals the patient's label"));
    }
    let started = Instant::now();
    let esc = escalate(a.ctx(), &baseline, source, target, &a.ladder)?;
    a.timings.add("attack", started.elapsed());

    let (status, rung, vector) = match &esc.outcome {
        EscalationOutcome::Feasible { rung, vector, .. } => (
            "feasible",
            Some(*rung),
            Some(vector_report(a.ds(), &a.dcm, &a.atlas, Some(patient), vector)),
        ),
        EscalationOutcome::Infeasible => ("infeasible", None, None),
        EscalationOutcome::Unknown { .. } => ("unknown", None, None),
    };

    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        header: Header<'a>,
        patient: usize,
        source: LabelRef,
        target: LabelRef,
        status: &'static str,
        rung: Option<usize>,
        ladder: &'a [AttackerCapability],
        rungs: &'a [RungVerdict],
        vector: Option<VectorReport>,
        timings: Timings,
    }
    let mut out = OutDir::create(&cli.out)?;
    out.json(
        "attack.json",
        &Report {
            header: header(&a),
            patient,
            source: label_ref(a.ds(), source),
            target: label_ref(a.ds(), target),
            status,
            rung,
            ladder: &a.ladder,
            rungs: &esc.rungs,
            vector,
            timings: a.final_timings(),
        },
    )?;
    let names = &a.ds().schema.label_names;
    match rung {
        Some(r) => println!(
            "{} -> {}: feasible at rung {r} ({} sensors, {:.0}%)",
            names[source],
            names[target],
            a.ladder[r].max_sensors,
            a.ladder[r].threshold * 100.0
        ),
        None => println!("{} -> {}: {status}", names[source], names[target]),
    }
    finish(&out)
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum CellReport {
    NotApplicable,
    NotEvaluated,
    Infeasible,
    Unknown { unresolved: Vec<usize> },
    Feasible { rung: usize, vector: Box<VectorReport> },
}

pub fn matrix(cli: &Cli, args: &MatrixArgs) -> Result<()> {
    let mut a = Analysis::load(cli, "matrix", &args.analysis)?;
    let started = Instant::now();
    let (m, patients): (AttackMatrix, Vec<Option<usize>>) = match args.patient {
        Some(i) => {
            let ds = a.ds();
            if i >= ds.len() {
                return Err(usage(format!("--patient {i} out of range (dataset has {} records)", ds.len())));
            }
            let m = attack_matrix(a.ctx(), &ds.records[i].measurements, &a.ladder)?;
            let j = a.dcm.predict(&ds.records[i].measurements)?;
            let mut p = vec![None; m.n_labels];
            p[j] = Some(i);
            (m, p)
        }
        None => label_matrix(a.ctx(), a.ds(), &a.ladder)?,
    };
    a.timings.add("attack", started.elapsed());

    let ds = a.ds();
    let cells: Vec<Vec<CellReport>> = m
        .cells
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .map(|c| match c {
                    MatrixCell::NotApplicable => CellReport::NotApplicable,
                    MatrixCell::NotEvaluated => CellReport::NotEvaluated,
                    MatrixCell::Infeasible => CellReport::Infeasible,
                    MatrixCell::Unknown { unresolved } => CellReport::Unknown {
                        unresolved: unresolved.clone(),
                    },
                    MatrixCell::Feasible { rung, witness, .. } => CellReport::Feasible {
                        rung: *rung,
                        vector: Box::new(vector_report(ds, &a.dcm, &a.atlas, patients[j], witness)),
                    },
                })
                .collect()
        })
        .collect();
    let mut csv = String::from("source,target,status,rung,max_sensors,threshold,touched,validated\n");
    for (j, row) in cells.iter().enumerate() {
        for (g, c) in row.iter().enumerate() {
            let (src, tgt) = (&ds.schema.label_names[j], &ds.schema.label_names[g]);
            let line = match c {
                CellReport::Feasible { rung, vector } => format!(
                    "{src},{tgt},feasible,{rung},{},{},{},{}",
                    vector.capability.max_sensors,
                    vector.capability.threshold,
                    vector.touched.join(";"),
                    vector.validated
                ),
                CellReport::NotApplicable => continue,
                CellReport::NotEvaluated => format!("{src},{tgt},not_evaluated,,,,,"),
                CellReport::Infeasible => format!("{src},{tgt},infeasible,,,,,"),
                CellReport::Unknown { .. } => format!("{src},{tgt},unknown,,,,,"),
            };
            csv.push_str(&line);
            csv.push('\n');
        }
    }
    let frequency = named_frequency(ds, &sensor_frequency(m.witnesses(), ds.n_sensors()));
    let feasible = m.count(|c| matches!(c, MatrixCell::Feasible { .. }));
    let unknown = m.count(|c| matches!(c, MatrixCell::Unknown { .. }));
    let infeasible = m.count(|c| matches!(c, MatrixCell::Infeasible));

    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        header: Header<'a>,
        patients: Vec<Option<usize>>,
        ladder: &'a [AttackerCapability],
        feasible: usize,
        infeasible: usize,
        unknown: usize,
        cells: Vec<Vec<CellReport>>,
        frequency: Vec<(String, usize)>,
        timings: Timings,
    }
    let timings = a.final_timings();
    let mut out = OutDir::create(&cli.out)?;
    out.json(
        "matrix.json",
        &Report {
            header: header(&a),
            patients,
            ladder: &a.ladder,
            feasible,
            infeasible,
            unknown,
            cells,
            frequency,
            timings: timings.clone(),
        },
    )?;
    out.text("matrix.csv", &csv)?;
    out.text("timings.csv", &timings.csv())?;
    println!("{feasible} feasible, {infeasible} infeasible, {unknown} unknown cells");
    finish(&out)
}

fn named_frequency(ds: &Dataset, counts: &[usize]) -> Vec<(String, usize)> {
    ds.schema.sensor_names.iter().cloned().zip(counts.iter().copied()).collect()
}

pub fn resiliency_cmd(cli: &Cli, args: &ResiliencyArgs) -> Result<()> {
    let mut a = Analysis::load(cli, "resiliency", &args.analysis)?;
    let target = parse_label(a.ds(), &args.target)?;
    let (patient, baseline, source) = select_patient(&args.patient, a.ds(), &a.dcm, &a.atlas)?;
    if target == source {
        return Err(usage("--target equals the patient's label"));
    }
    let n = a.ds().n_sensors();
    let max_r = args.max_r.unwrap_or(n.saturating_sub(1));
    if max_r >= n {
        return Err(usage(format!("--max-r must be below the sensor count {n}")));
    }
    let started = Instant::now();
    let rep = resiliency(a.ctx(), &baseline, source, target, max_r, args.threshold)?;
    a.timings.add("attack", started.elapsed());
    let certified = rep
        .certificates
        .iter()
        .take_while(|c| c.verdict == RungVerdict::Unsat)
        .count();

    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        header: Header<'a>,
        patient: usize,
        source: LabelRef,
        target: LabelRef,
        threshold: f64,
        max_r: usize,
        r: usize,
        first_feasible: Option<VectorReport>,
        certificates: &'a [Certificate],
        timings: Timings,
    }
    let first = rep
        .first_feasible
        .as_ref()
        .map(|v| vector_report(a.ds(), &a.dcm, &a.atlas, Some(patient), v));
    let mut out = OutDir::create(&cli.out)?;
    out.json(
        "resiliency.json",
        &Report {
            header: header(&a),
            patient,
            source: label_ref(a.ds(), source),
            target: label_ref(a.ds(), target),
            threshold: args.threshold,
            max_r,
            r: rep.r,
            first_feasible: first,
            certificates: &rep.certificates,
            timings: a.final_timings(),
        },
    )?;
    let names = &a.ds().schema.label_names;
    println!(
        "{} -> {}: {}-resilient at threshold {} ({certified} sensor counts certified unsat)",
        names[source], names[target], rep.r, args.threshold
    );
    finish(&out)
}

pub fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let mut a = Analysis::load(cli, "report", &args.analysis)?;
    let (patient, baseline, source) = select_patient(&args.patient, a.ds(), &a.dcm, &a.atlas)?;
    let mut sensors: Vec<usize> = a.ladder.iter().map(|c| c.max_sensors).collect();
    sensors.dedup();
    let mut thresholds: Vec<f64> = a.ladder.iter().map(|c| c.threshold).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let started = Instant::now();
    let grid = capability_grid(a.ctx(), &baseline, &sensors, &thresholds)?;
    a.timings.add("attack", started.elapsed());

    let counts = grid.counts();
    let violations = grid.monotonicity_violations();
    let unknown = grid
        .verdicts
        .iter()
        .flatten()
        .flatten()
        .filter(|v| **v == RungVerdict::Unknown)
        .count();
    let ds = a.ds();
    let frequency = named_frequency(ds, &sensor_frequency(&grid.witnesses, ds.n_sensors()));
    let mut counts_csv = String::from("max_sensors,threshold,count\n");
    for (mi, m) in sensors.iter().enumerate() {
        for (ti, t) in thresholds.iter().enumerate() {
            counts_csv.push_str(&format!("{m},{t},{}\n", counts[mi][ti]));
        }
    }
    let mut freq_csv = String::from("sensor,count\n");
    for (s, c) in &frequency {
        freq_csv.push_str(&format!("{s},{c}\n"));
    }
    let all_valid = grid.witnesses.iter().all(|v| validate_attack(v, &a.dcm, &a.atlas));

    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        header: Header<'a>,
        patient: usize,
        source: LabelRef,
        targets: Vec<LabelRef>,
        max_sensors: &'a [usize],
        thresholds: &'a [f64],
        count_definition: &'static str,
        counts: &'a [Vec<usize>],
        verdicts: &'a [Vec<Vec<RungVerdict>>],
        unknown_cells: usize,
        monotonicity_violations: usize,
        witnesses_validated: bool,
        frequency: Vec<(String, usize)>,
        timings: Timings,
    }
    let timings = a.final_timings();
    let mut out = OutDir::create(&cli.out)?;
    out.json(
        "report.json",
        &Report {
            header: header(&a),
            patient,
            source: label_ref(ds, source),
            targets: grid.targets.iter().map(|&g| label_ref(ds, g)).collect(),
            max_sensors: &sensors,
            thresholds: &thresholds,
            count_definition: COUNT_DEFINITION,
            counts: &counts,
            verdicts: &grid.verdicts,
            unknown_cells: unknown,
            monotonicity_violations: violations.len(),
            witnesses_validated: all_valid,
            frequency,
            timings: timings.clone(),
        },
    )?;
    out.text("counts.csv", &counts_csv)?;
    out.text("frequency.csv", &freq_csv)?;
    out.text("timings.csv", &timings.csv())?;
    println!(
        "{} feasible (target, capability) cells, {} monotonicity violations, {unknown} unknown",
        grid.witnesses.len(),
        violations.len()
    );
    finish(&out)
}

fn finish(out: &OutDir) -> Result<()> {
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
