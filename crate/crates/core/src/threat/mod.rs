//! Attack queries on top of the encoders and solvers: single attacks,
//! capability escalation, attack matrices, resiliency, and independent
//! validation of every witness against the live models.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use itertools::Itertools;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adm::{consistent, AdmError, ClusterAtlas};
use crate::cir::{abs_ratio_limit, encode_attack, CirError, Csp, EncodeOptions, VarRole};
use crate::data::{Dataset, LabelId};
use crate::dcm::{Dcm, DcmError};
use crate::solve::{solve, BackendDescriptor, SolveError, SolveResult, UnknownReason};

pub use crate::cir::AttackerCapability;

/// Thresholds of the default ladder, as fractions.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

/// Relative margin used when re-encoding after a witness fails validation.
pub const RETRY_MARGIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ThreatError {
    #[error(transparent)]
    Encode(#[from] CirError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Dcm(#[from] DcmError),
    #[error(transparent)]
    Adm(#[from] AdmError),
    #[error("capability ladder is empty")]
    EmptyLadder,
    #[error("capability ladder is not sorted by (max_sensors, threshold)")]
    UnsortedLadder,
    #[error("resiliency needs a complete backend, got {0}")]
    IncompleteBackend(String),
}

/// Shared, immutable inputs of every query.
#[derive(Debug, Clone, Copy)]
pub struct ThreatContext<'a> {
    pub dcm: &'a Dcm,
    pub atlas: &'a ClusterAtlas,
    pub backend: &'a BackendDescriptor,
    /// Accumulates encode and solve time when set.
    pub timings: Option<&'a StageTimings>,
}

impl<'a> ThreatContext<'a> {
    pub fn new(dcm: &'a Dcm, atlas: &'a ClusterAtlas, backend: &'a BackendDescriptor) -> Self {
        Self {
            dcm,
            atlas,
            backend,
            timings: None,
        }
    }

    pub fn with_timings(self, timings: &'a StageTimings) -> Self {
        Self {
            timings: Some(timings),
            ..self
        }
    }
}

/// Wall-clock totals over all solver queries, shared between workers.
#[derive(Debug, Default)]
pub struct StageTimings {
    encode_ns: AtomicU64,
    solve_ns: AtomicU64,
    queries: AtomicU64,
}

impl StageTimings {
    pub fn encoding(&self) -> Duration {
        Duration::from_nanos(self.encode_ns.load(Ordering::Relaxed))
    }

    pub fn solving(&self) -> Duration {
        Duration::from_nanos(self.solve_ns.load(Ordering::Relaxed))
    }

    /// Number of encode-and-solve rounds.
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    fn add(&self, encode: Duration, solve: Duration) {
        let ns = |d: Duration| u64::try_from(d.as_nanos()).unwrap_or(u64::MAX);
        self.encode_ns.fetch_add(ns(encode), Ordering::Relaxed);
        self.solve_ns.fetch_add(ns(solve), Ordering::Relaxed);
        self.queries.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackVector {
    pub baseline: Vec<f64>,
    pub deltas: Vec<f64>,
    pub altered: Vec<f64>,
    pub source: LabelId,
    pub target: LabelId,
    pub capability: AttackerCapability,
    pub backend: String,
}

impl AttackVector {
    /// Indices of sensors with a nonzero delta.
    pub fn touched(&self) -> Vec<usize> {
        (0..self.deltas.len()).filter(|&s| self.deltas[s] != 0.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AttackOutcome {
    Feasible { vector: AttackVector },
    Infeasible,
    Unknown { reason: UnknownReason },
}

impl AttackOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, AttackOutcome::Feasible { .. })
    }
}

/// Direct check, without any solver, that the altered vector is classified
/// as the target, is consistent for the target, equals baseline plus
/// deltas, and stays within the capability.
pub fn validate_attack(v: &AttackVector, dcm: &Dcm, atlas: &ClusterAtlas) -> bool {
    let n = dcm.n_sensors();
    if v.baseline.len() != n || v.deltas.len() != n || v.altered.len() != n || v.capability.validate().is_err() {
        return false;
    }
    if v.target == v.source {
        return false;
    }
    for s in 0..n {
        if v.altered[s] - v.baseline[s] != v.deltas[s] {
            return false;
        }
        if v.deltas[s].abs() >= abs_ratio_limit(v.capability.threshold, v.baseline[s]) {
            return false;
        }
    }
    if v.touched().len() > v.capability.max_sensors {
        return false;
    }
    matches!(dcm.predict(&v.altered), Ok(l) if l == v.target) && matches!(consistent(&v.altered, v.target, atlas), Ok(true))
}

fn vector_from_model(
    csp: &Csp,
    values: &[f64],
    baseline: &[f64],
    source: LabelId,
    target: LabelId,
    capability: AttackerCapability,
    backend: &str,
) -> AttackVector {
    let mut altered = baseline.to_vec();
    for (v, info) in csp.symbols.iter() {
        if let VarRole::Altered(s) = info.role {
            altered[s] = values[v.index()];
        }
    }
    let deltas = altered.iter().zip(baseline).map(|(a, p)| a - p).collect();
    AttackVector {
        baseline: baseline.to_vec(),
        deltas,
        altered,
        source,
        target,
        capability,
        backend: backend.to_string(),
    }
}

/// Encodes and solves one attack. A witness that fails
/// [`validate_attack`] triggers one re-encoding with [`RETRY_MARGIN`]; if
/// that also fails the outcome is `Unknown`.
pub fn find_attack(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    source: LabelId,
    target: LabelId,
    capability: AttackerCapability,
) -> Result<AttackOutcome, ThreatError> {
    let n = baseline.len();
    let m = capability.max_sensors;
    let probe = n / 2;
    if m > probe && probe > 0 && binomial(n, probe) <= MAX_SUPPORTS {
        // Witnesses touching fewer sensors are still within capability, and
        // the narrow queries are far cheaper than the wide one.
        let narrow = over_supports(ctx, baseline, source, target, capability, probe)?;
        if narrow.is_feasible() {
            return Ok(narrow);
        }
    }
    if m >= n || binomial(n, m) > MAX_SUPPORTS {
        return attempt(ctx, baseline, source, target, capability, None);
    }
    over_supports(ctx, baseline, source, target, capability, m)
}

/// Solves with the alteration confined to each size-`k` support in turn.
/// With `k` equal to the capability this is exact: any attack alters at most
/// `k` sensors, so it lies in some such support.
fn over_supports(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    source: LabelId,
    target: LabelId,
    capability: AttackerCapability,
    k: usize,
) -> Result<AttackOutcome, ThreatError> {
    let mut unknown = None;
    for support in (0..baseline.len()).combinations(k) {
        match attempt(ctx, baseline, source, target, capability, Some(support))? {
            AttackOutcome::Infeasible => {}
            AttackOutcome::Unknown { reason } => unknown = Some(reason),
            feasible => return Ok(feasible),
        }
    }
    Ok(match unknown {
        Some(reason) => AttackOutcome::Unknown { reason },
        None => AttackOutcome::Infeasible,
    })
}

/// Most supports [`find_attack`] solves one by one instead of solving the
/// unrestricted problem.
pub const MAX_SUPPORTS: usize = 70;

fn binomial(n: usize, k: usize) -> usize {
    (0..k.min(n - k.min(n))).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn attempt(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    source: LabelId,
    target: LabelId,
    capability: AttackerCapability,
    support: Option<Vec<usize>>,
) -> Result<AttackOutcome, ThreatError> {
    let mut last_failure = String::new();
    for margin in [None, Some(RETRY_MARGIN)] {
        let options = EncodeOptions {
            strict_margin: margin,
            support: support.clone(),
            ..EncodeOptions::default()
        };
        let started = Instant::now();
        let csp = encode_attack(baseline, source, target, capability, ctx.dcm, ctx.atlas, &options)?;
        let encoded = Instant::now();
        let solved = solve(&csp, ctx.backend);
        if let Some(t) = ctx.timings {
            t.add(encoded - started, encoded.elapsed());
        }
        let result = match solved {
            Ok(r) => r,
            Err(SolveError::MalformedModel { index, detail }) => {
                log::warn!("solver model fails assertion {index}; retrying with a margin");
                last_failure = format!("model fails assertion {index}: {detail}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match result {
            SolveResult::Unsat => return Ok(AttackOutcome::Infeasible),
            SolveResult::Unknown(reason) => return Ok(AttackOutcome::Unknown { reason }),
            SolveResult::Sat(values) => {
                let v = vector_from_model(&csp, &values, baseline, source, target, capability, &ctx.backend.name);
                if validate_attack(&v, ctx.dcm, ctx.atlas) {
                    return Ok(AttackOutcome::Feasible { vector: v });
                }
                log::warn!("witness for {source}->{target} at {capability:?} failed validation");
                last_failure = "witness rejected by the live models".into();
            }
        }
    }
    Ok(AttackOutcome::Unknown {
        reason: UnknownReason::ValidationFailed(last_failure),
    })
}

/// Sensors `1..=n_sensors` outer, [`DEFAULT_THRESHOLDS`] inner.
pub fn default_ladder(n_sensors: usize) -> Vec<AttackerCapability> {
    (1..=n_sensors)
        .flat_map(|m| {
            DEFAULT_THRESHOLDS.iter().map(move |&t| AttackerCapability {
                max_sensors: m,
                threshold: t,
            })
        })
        .collect()
}

fn check_ladder(ladder: &[AttackerCapability]) -> Result<(), ThreatError> {
    if ladder.is_empty() {
        return Err(ThreatError::EmptyLadder);
    }
    for c in ladder {
        c.validate()?;
    }
    let sorted = ladder
        .windows(2)
        .all(|w| (w[0].max_sensors, w[0].threshold) <= (w[1].max_sensors, w[1].threshold));
    if !sorted {
        return Err(ThreatError::UnsortedLadder);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RungVerdict {
    Sat,
    Unsat,
    /// Unsat because a rung with the same sensor count and a larger
    /// threshold, which relaxes this one, was proven unsat.
    ImpliedUnsat,
    Unknown,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EscalationOutcome {
    Feasible {
        rung: usize,
        capability: AttackerCapability,
        vector: AttackVector,
    },
    Infeasible,
    Unknown {
        unresolved: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escalation {
    pub outcome: EscalationOutcome,
    pub rungs: Vec<RungVerdict>,
}

/// Scans `ladder` in order and stops at the first feasible rung. Before
/// scanning the rungs of one sensor count, the most permissive of them is
/// tried: when it is unsat every rung of that group is too.
pub fn escalate(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    source: LabelId,
    target: LabelId,
    ladder: &[AttackerCapability],
) -> Result<Escalation, ThreatError> {
    check_ladder(ladder)?;
    let mut rungs = vec![RungVerdict::NotRun; ladder.len()];
    let mut unresolved = Vec::new();
    let mut start = 0;
    while start < ladder.len() {
        let m = ladder[start].max_sensors;
        let end = start + ladder[start..].iter().take_while(|c| c.max_sensors == m).count();
        let group = start..end;
        let top = end - 1;
        let mut top_outcome = None;
        if end - start > 1 {
            match find_attack(ctx, baseline, source, target, ladder[top])? {
                AttackOutcome::Infeasible => {
                    for i in group.clone() {
                        rungs[i] = RungVerdict::ImpliedUnsat;
                    }
                    rungs[top] = RungVerdict::Unsat;
                    start = end;
                    continue;
                }
                other => top_outcome = Some(other),
            }
        }
        for i in group {
            let outcome = match top_outcome.take_if(|_| i == top) {
                Some(o) => o,
                None => find_attack(ctx, baseline, source, target, ladder[i])?,
            };
            match outcome {
                AttackOutcome::Feasible { vector } => {
                    rungs[i] = RungVerdict::Sat;
                    return Ok(Escalation {
                        outcome: EscalationOutcome::Feasible {
                            rung: i,
                            capability: ladder[i],
                            vector,
                        },
                        rungs,
                    });
                }
                AttackOutcome::Infeasible => rungs[i] = RungVerdict::Unsat,
                AttackOutcome::Unknown { reason } => {
                    log::info!("rung {i} unresolved: {reason}");
                    rungs[i] = RungVerdict::Unknown;
                    unresolved.push(i);
                }
            }
        }
        start = end;
    }
    let outcome = if unresolved.is_empty() {
        EscalationOutcome::Infeasible
    } else {
        EscalationOutcome::Unknown { unresolved }
    };
    Ok(Escalation { outcome, rungs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MatrixCell {
    NotApplicable,
    NotEvaluated,
    Infeasible,
    Unknown {
        unresolved: Vec<usize>,
    },
    Feasible {
        rung: usize,
        capability: AttackerCapability,
        witness: AttackVector,
        validated: bool,
    },
}

/// `cells[source][target]`; the diagonal is not applicable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMatrix {
    pub n_labels: usize,
    pub cells: Vec<Vec<MatrixCell>>,
}

impl AttackMatrix {
    pub fn new(n_labels: usize) -> Self {
        let cells = (0..n_labels)
            .map(|j| {
                (0..n_labels)
                    .map(|g| if g == j { MatrixCell::NotApplicable } else { MatrixCell::NotEvaluated })
                    .collect()
            })
            .collect();
        Self { n_labels, cells }
    }

    pub fn witnesses(&self) -> impl Iterator<Item = &AttackVector> {
        self.cells.iter().flatten().filter_map(|c| match c {
            MatrixCell::Feasible { witness, .. } => Some(witness),
            _ => None,
        })
    }

    pub fn count(&self, pred: impl Fn(&MatrixCell) -> bool) -> usize {
        self.cells.iter().flatten().filter(|c| pred(c)).count()
    }
}

fn baseline_label(ctx: ThreatContext<'_>, baseline: &[f64]) -> Result<LabelId, ThreatError> {
    let j = ctx.dcm.predict(baseline)?;
    if !consistent(baseline, j, ctx.atlas)? {
        return Err(CirError::BaselineInconsistent(format!(
            "baseline is not consistent with the atlas for its predicted label {j}"
        ))
        .into());
    }
    Ok(j)
}

/// Fills row `predict(baseline)` of `matrix` by escalating towards every
/// other label, targets in parallel.
pub fn fill_matrix_row(
    ctx: ThreatContext<'_>,
    matrix: &mut AttackMatrix,
    baseline: &[f64],
    ladder: &[AttackerCapability],
) -> Result<LabelId, ThreatError> {
    check_ladder(ladder)?;
    let j = baseline_label(ctx, baseline)?;
    let targets: Vec<LabelId> = (0..matrix.n_labels).filter(|&g| g != j).collect();
    let results: Vec<(LabelId, Escalation)> = targets
        .par_iter()
        .map(|&g| escalate(ctx, baseline, j, g, ladder).map(|e| (g, e)))
        .collect::<Result<_, _>>()?;
    for (g, e) in results {
        matrix.cells[j][g] = match e.outcome {
            EscalationOutcome::Feasible {
                rung,
                capability,
                vector,
            } => {
                let validated = validate_attack(&vector, ctx.dcm, ctx.atlas);
                MatrixCell::Feasible {
                    rung,
                    capability,
                    witness: vector,
                    validated,
                }
            }
            EscalationOutcome::Infeasible => MatrixCell::Infeasible,
            EscalationOutcome::Unknown { unresolved } => MatrixCell::Unknown { unresolved },
        };
    }
    Ok(j)
}

/// Attack matrix for one patient: only the row of its predicted label is
/// populated.
pub fn attack_matrix(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    ladder: &[AttackerCapability],
) -> Result<AttackMatrix, ThreatError> {
    let mut m = AttackMatrix::new(ctx.dcm.n_labels());
    fill_matrix_row(ctx, &mut m, baseline, ladder)?;
    Ok(m)
}

/// First record of each label whose baseline is classified as that label
/// and consistent with it, by index into `data`.
pub fn representatives(ctx: ThreatContext<'_>, data: &Dataset) -> Vec<Option<usize>> {
    let mut out = vec![None; ctx.dcm.n_labels()];
    for (i, r) in data.records.iter().enumerate() {
        if r.label >= out.len() || out[r.label].is_some() {
            continue;
        }
        match baseline_label(ctx, &r.measurements) {
            Ok(j) if j == r.label => out[j] = Some(i),
            Ok(_) => {}
            Err(e) => log::debug!("record {i} skipped: {e}"),
        }
    }
    out
}

/// Full label-by-label matrix using one representative record per label.
/// Rows without a valid representative stay `NotEvaluated`.
pub fn label_matrix(
    ctx: ThreatContext<'_>,
    data: &Dataset,
    ladder: &[AttackerCapability],
) -> Result<(AttackMatrix, Vec<Option<usize>>), ThreatError> {
    let reps = representatives(ctx, data);
    let mut m = AttackMatrix::new(ctx.dcm.n_labels());
    for (j, rep) in reps.iter().enumerate() {
        match rep {
            Some(i) => {
                fill_matrix_row(ctx, &mut m, &data.records[*i].measurements, ladder)?;
            }
            None => log::warn!("no valid baseline record for label {j}; row skipped"),
        }
    }
    Ok((m, reps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub max_sensors: usize,
    pub verdict: RungVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResiliencyReport {
    pub source: LabelId,
    pub target: LabelId,
    pub threshold: f64,
    /// Every `max_sensors <= r` was proven unsat.
    pub r: usize,
    pub first_feasible: Option<AttackVector>,
    pub certificates: Vec<Certificate>,
}

/// Largest `r <= max_r` with a proven unsat verdict at every sensor count
/// from 1 to `r` under `threshold`. Stops at the first sat or unknown.
pub fn resiliency(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    source: LabelId,
    target: LabelId,
    max_r: usize,
    threshold: f64,
) -> Result<ResiliencyReport, ThreatError> {
    if !ctx.backend.complete() {
        return Err(ThreatError::IncompleteBackend(ctx.backend.name.clone()));
    }
    let mut report = ResiliencyReport {
        source,
        target,
        threshold,
        r: 0,
        first_feasible: None,
        certificates: Vec::new(),
    };
    for m in 1..=max_r + 1 {
        let cap = AttackerCapability::new(m, threshold)?;
        let verdict = match find_attack(ctx, baseline, source, target, cap)? {
            AttackOutcome::Infeasible => RungVerdict::Unsat,
            AttackOutcome::Feasible { vector } => {
                report.first_feasible = Some(vector);
                RungVerdict::Sat
            }
            AttackOutcome::Unknown { .. } => RungVerdict::Unknown,
        };
        report.certificates.push(Certificate {
            max_sensors: m,
            verdict,
        });
        if verdict != RungVerdict::Unsat {
            break;
        }
        if m <= max_r {
            report.r = m;
        }
    }
    Ok(report)
}

/// Per sensor, the number of vectors that alter it.
pub fn sensor_frequency<'a>(vectors: impl IntoIterator<Item = &'a AttackVector>, n_sensors: usize) -> Vec<usize> {
    let mut counts = vec![0; n_sensors];
    for v in vectors {
        for s in v.touched() {
            if s < n_sensors {
                counts[s] += 1;
            }
        }
    }
    counts
}

/// Target, then the (m, t) indices of a sat cell and of an unsat cell that
/// dominates it.
pub type Violation = (LabelId, (usize, usize), (usize, usize));

/// Verdict grid `cells[m_index][t_index]` of targets reachable at exactly
/// that capability, every cell solved independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityGrid {
    pub max_sensors: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub targets: Vec<LabelId>,
    /// `verdicts[target_index][m_index][t_index]`.
    pub verdicts: Vec<Vec<Vec<RungVerdict>>>,
    pub witnesses: Vec<AttackVector>,
}

impl CapabilityGrid {
    /// Number of targets with a sat verdict per cell.
    pub fn counts(&self) -> Vec<Vec<usize>> {
        (0..self.max_sensors.len())
            .map(|mi| {
                (0..self.thresholds.len())
                    .map(|ti| {
                        self.verdicts
                            .iter()
                            .filter(|v| v[mi][ti] == RungVerdict::Sat)
                            .count()
                    })
                    .collect()
            })
            .collect()
    }

    /// Pairs of conclusive cells of one target where the larger capability
    /// is unsat while the smaller is sat.
    pub fn monotonicity_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (k, v) in self.verdicts.iter().enumerate() {
            let cells: Vec<(usize, usize)> = (0..self.max_sensors.len())
                .flat_map(|a| (0..self.thresholds.len()).map(move |b| (a, b)))
                .collect();
            for &(a, b) in &cells {
                for &(c, d) in &cells {
                    let dominated = self.max_sensors[c] >= self.max_sensors[a] && self.thresholds[d] >= self.thresholds[b];
                    if dominated && v[a][b] == RungVerdict::Sat && v[c][d] == RungVerdict::Unsat {
                        out.push((self.targets[k], (a, b), (c, d)));
                    }
                }
            }
        }
        out
    }
}

/// Solves every (target, max_sensors, threshold) combination for one patient.
pub fn capability_grid(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    max_sensors: &[usize],
    thresholds: &[f64],
) -> Result<CapabilityGrid, ThreatError> {
    let j = baseline_label(ctx, baseline)?;
    let targets: Vec<LabelId> = (0..ctx.dcm.n_labels()).filter(|&g| g != j).collect();
    let jobs: Vec<(usize, usize, usize)> = (0..targets.len())
        .flat_map(|k| (0..max_sensors.len()).flat_map(move |m| (0..thresholds.len()).map(move |t| (k, m, t))))
        .collect();
    let results: Vec<((usize, usize, usize), AttackOutcome)> = jobs
        .par_iter()
        .map(|&(k, m, t)| {
            let cap = AttackerCapability::new(max_sensors[m], thresholds[t])?;
            find_attack(ctx, baseline, j, targets[k], cap).map(|o| ((k, m, t), o))
        })
        .collect::<Result<_, ThreatError>>()?;
    let mut verdicts = vec![vec![vec![RungVerdict::NotRun; thresholds.len()]; max_sensors.len()]; targets.len()];
    let mut witnesses = Vec::new();
    for ((k, m, t), o) in results {
        verdicts[k][m][t] = match o {
            AttackOutcome::Feasible { vector } => {
                witnesses.push(vector);
                RungVerdict::Sat
            }
            AttackOutcome::Infeasible => RungVerdict::Unsat,
            AttackOutcome::Unknown { .. } => RungVerdict::Unknown,
        };
    }
    Ok(CapabilityGrid {
        max_sensors: max_sensors.to_vec(),
        thresholds: thresholds.to_vec(),
        targets,
        verdicts,
        witnesses,
    })
}

/// Random perturbations within `capability`: each touches between one and
/// `max_sensors` sensors with deltas uniform inside the alteration bound.
/// Returns the first one that passes [`validate_attack`], if any.
pub fn falsify(
    ctx: ThreatContext<'_>,
    baseline: &[f64],
    source: LabelId,
    target: LabelId,
    capability: AttackerCapability,
    samples: usize,
    seed: u64,
) -> Option<AttackVector> {
    let n = baseline.len();
    let m = capability.max_sensors.min(n);
    if m == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let k = rng.random_range(1..=m);
        let mut altered = baseline.to_vec();
        for s in sample(&mut rng, n, k) {
            let l = abs_ratio_limit(capability.threshold, baseline[s]);
            altered[s] = baseline[s] + rng.random_range(-l..l);
        }
        let deltas = altered.iter().zip(baseline).map(|(a, p)| a - p).collect();
        let v = AttackVector {
            baseline: baseline.to_vec(),
            deltas,
            altered,
            source,
            target,
            capability,
            backend: "random".into(),
        };
        if validate_attack(&v, ctx.dcm, ctx.atlas) {
            return Some(v);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(deltas: Vec<f64>) -> AttackVector {
        let baseline = vec![10.0; deltas.len()];
        let altered = baseline.iter().zip(&deltas).map(|(b, d)| b + d).collect();
        AttackVector {
            baseline,
            deltas,
            altered,
            source: 0,
            target: 1,
            capability: AttackerCapability {
                max_sensors: 2,
                threshold: 0.1,
            },
            backend: "test".into(),
        }
    }

    #[test]
    fn frequency_counts() {
        assert_eq!(sensor_frequency(std::iter::empty(), 4), vec![0; 4]);
        let v = vector(vec![0.5, 0.0, 0.0, -0.25]);
        assert_eq!(sensor_frequency([&v], 4), vec![1, 0, 0, 1]);
        assert_eq!(sensor_frequency([&v, &v], 4).iter().sum::<usize>(), 4);
    }

    #[test]
    fn default_ladder_shape() {
        let l = default_ladder(8);
        assert_eq!(l.len(), 48);
        assert!(check_ladder(&l).is_ok());
        assert_eq!(l[0].max_sensors, 1);
        assert_eq!(l[47].threshold, 0.30);
        assert!(matches!(check_ladder(&[]), Err(ThreatError::EmptyLadder)));
        let mut r = l.clone();
        r.swap(0, 10);
        assert!(matches!(check_ladder(&r), Err(ThreatError::UnsortedLadder)));
    }

    #[test]
    fn matrix_diagonal() {
        let m = AttackMatrix::new(3);
        assert_eq!(m.count(|c| *c == MatrixCell::NotApplicable), 3);
        assert_eq!(m.count(|c| *c == MatrixCell::NotEvaluated), 6);
    }
}
