use serde::{Deserialize, Serialize};

use super::csp::{Csp, CspBuilder, Definition, VarRole};
use super::expr::{CmpOp, ConstraintExpr, LinExpr, VarId};
use super::CirError;
use crate::adm::{consistent, sensor_pairs, ClusterAlgorithm, ClusterAtlas, LineSegment, Polygon};
use crate::data::LabelId;
use crate::dcm::{Activation, Branch, Dcm, DecisionTreeModel, LogisticRegressionModel, NeuralNetworkModel};

/// Attacker limits: at most `max_sensors` altered sensors, each changed by
/// strictly less than `threshold` times its baseline magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackerCapability {
    pub max_sensors: usize,
    pub threshold: f64,
}

impl AttackerCapability {
    pub fn new(max_sensors: usize, threshold: f64) -> Result<Self, CirError> {
        let c = Self { max_sensors, threshold };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CirError> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(CirError::InvalidCapability(format!(
                "threshold must be positive and finite, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Fold atoms decided by the alteration box.
    pub simplify: bool,
    /// Pull classifier inequalities and the alteration bound inward by this
    /// relative margin. Only shrinks the satisfying set.
    pub strict_margin: Option<f64>,
    pub membership: MembershipForm,
    /// When set, only these sensors may change; the others are pinned to
    /// their baseline.
    pub support: Option<Vec<usize>>,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            simplify: true,
            strict_margin: None,
            membership: MembershipForm::default(),
            support: None,
        }
    }
}

fn check_vars(expected: usize, vars: &[VarId]) -> Result<(), CirError> {
    if vars.len() != expected {
        return Err(CirError::DimensionMismatch {
            expected,
            got: vars.len(),
        });
    }
    Ok(())
}

/// Disjunction over the tree's paths ending in `j` of the conjunction of
/// their edge rules. A label no leaf predicts yields `false`.
pub fn encode_dt(model: &DecisionTreeModel, vars: &[VarId], j: LabelId) -> Result<ConstraintExpr, CirError> {
    check_vars(model.n_sensors, vars)?;
    if j >= model.n_labels {
        return Err(CirError::UnknownLabel(j));
    }
    let paths: Vec<ConstraintExpr> = model
        .paths()
        .into_iter()
        .filter(|p| p.label == j)
        .map(|p| {
            ConstraintExpr::and(
                p.rules
                    .iter()
                    .map(|r| {
                        let op = match r.branch {
                            Branch::Left => CmpOp::Le,
                            Branch::Right => CmpOp::Gt,
                        };
                        ConstraintExpr::var_cmp(vars[r.attr], op, r.threshold)
                    })
                    .collect(),
            )
        })
        .collect();
    if paths.is_empty() {
        log::warn!("no leaf predicts label {j}; encoding is unsatisfiable");
    }
    Ok(ConstraintExpr::or(paths))
}

/// `logit_j - logit_g` as a comparison against zero, strict for `g < j`
/// so ties resolve to the lower label like `argmax_lowest`.
fn dominance(coef: &[Vec<f64>], constant: &[f64], inputs: &[VarId], j: LabelId) -> ConstraintExpr {
    let items = (0..coef.len())
        .filter(|&g| g != j)
        .map(|g| {
            let terms = inputs
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, coef[j][i] - coef[g][i]))
                .collect();
            let op = if g < j { CmpOp::Gt } else { CmpOp::Ge };
            ConstraintExpr::cmp(LinExpr::new(terms, 0.0), op, constant[g] - constant[j])
        })
        .collect();
    ConstraintExpr::and(items)
}

/// Pairwise logit dominance of label `j`, in raw measurement units.
pub fn encode_lr(model: &LogisticRegressionModel, vars: &[VarId], j: LabelId) -> Result<ConstraintExpr, CirError> {
    check_vars(model.n_sensors(), vars)?;
    if j >= model.n_labels() {
        return Err(CirError::UnknownLabel(j));
    }
    let (coef, constant) = model.raw_affine();
    Ok(dominance(&coef, &constant, vars, j))
}

/// Declares a `(pre, post)` real pair per hidden node, asserts the affine
/// equations and exact rectifier case splits, and requires output `j` to
/// dominate.
pub fn encode_nn(
    builder: &mut CspBuilder,
    model: &NeuralNetworkModel,
    vars: &[VarId],
    j: LabelId,
) -> Result<ConstraintExpr, CirError> {
    check_vars(model.n_sensors(), vars)?;
    if j >= model.n_labels() {
        return Err(CirError::UnknownLabel(j));
    }
    if model.activation != Activation::Relu {
        return Err(CirError::UnsupportedActivation(format!("{:?}", model.activation)));
    }
    let (w0, b0) = model.raw_first_layer();
    let transitions = model.weights.len();
    let mut items = Vec::new();
    let mut inputs: Vec<VarId> = vars.to_vec();
    for m in 0..transitions {
        let (w, b): (&[Vec<f64>], &[f64]) = if m == 0 {
            (&w0, &b0)
        } else {
            (&model.weights[m], &model.biases[m])
        };
        if m + 1 == transitions {
            // Output layer: logits are affine in `inputs`; transpose to
            // per-label coefficient rows.
            let n_out = b.len();
            let coef: Vec<Vec<f64>> = (0..n_out).map(|g| w.iter().map(|row| row[g]).collect()).collect();
            items.push(dominance(&coef, b, &inputs, j));
            break;
        }
        let layer = m + 1;
        let mut next = Vec::with_capacity(b.len());
        for (n, &bias) in b.iter().enumerate() {
            let pre = builder.real(format!("nn_pre_{layer}_{n}"), VarRole::NnPre { layer, node: n });
            let post = builder.real(format!("nn_post_{layer}_{n}"), VarRole::NnPost { layer, node: n });
            let terms: Vec<(VarId, f64)> = inputs.iter().enumerate().map(|(o, &v)| (v, w[o][n])).collect();
            builder.define(Definition::Linear {
                var: pre,
                expr: LinExpr::new(terms.clone(), bias),
            });
            builder.define(Definition::Relu { var: post, input: pre });
            let mut eq_terms = vec![(pre, 1.0)];
            eq_terms.extend(terms.into_iter().map(|(v, c)| (v, -c)));
            items.push(ConstraintExpr::cmp(LinExpr::new(eq_terms, 0.0), CmpOp::Eq, bias));
            let diff = LinExpr::new(vec![(post, 1.0), (pre, -1.0)], 0.0);
            items.push(ConstraintExpr::Or(vec![
                ConstraintExpr::And(vec![
                    ConstraintExpr::var_cmp(pre, CmpOp::Le, 0.0),
                    ConstraintExpr::var_cmp(post, CmpOp::Eq, 0.0),
                ]),
                ConstraintExpr::And(vec![
                    ConstraintExpr::var_cmp(pre, CmpOp::Gt, 0.0),
                    ConstraintExpr::cmp(diff, CmpOp::Eq, 0.0),
                ]),
            ]));
            next.push(post);
        }
        inputs = next;
    }
    Ok(ConstraintExpr::and(items))
}

/// Encoding of `predict(model, vars) = j`. Neural networks add auxiliary
/// variables to `builder`.
pub fn encode_dcm(builder: &mut CspBuilder, dcm: &Dcm, vars: &[VarId], j: LabelId) -> Result<ConstraintExpr, CirError> {
    match dcm {
        Dcm::DecisionTree(m) => encode_dt(m, vars, j),
        Dcm::LogisticRegression(m) => encode_lr(m, vars, j),
        Dcm::NeuralNetwork(m) => encode_nn(builder, m, vars, j),
    }
}

/// Crossing-number parity of the rightward ray from `(x, y)`.
/// Horizontal edges contribute `false`.
pub fn encode_membership(poly: &Polygon, x: VarId, y: VarId) -> ConstraintExpr {
    let items = poly
        .segments()
        .into_iter()
        .map(|s: LineSegment| {
            if s.ya == s.yb {
                return ConstraintExpr::Const(false);
            }
            ConstraintExpr::And(vec![
                ConstraintExpr::var_cmp(y, CmpOp::Gt, s.ya),
                ConstraintExpr::var_cmp(y, CmpOp::Le, s.yb),
                segment_atom(&s, x, y),
            ])
        })
        .collect();
    ConstraintExpr::Xor(items)
}

fn segment_atom(s: &LineSegment, x: VarId, y: VarId) -> ConstraintExpr {
    let (cx, cy, c0) = s.left_of_coefficients();
    ConstraintExpr::cmp(LinExpr::new(vec![(x, cx), (y, cy)], 0.0), CmpOp::Lt, -c0)
}

/// Membership without xor. The polygon is cut into horizontal slabs
/// `(y_k, y_k+1]` between consecutive vertex heights; inside a slab the
/// crossing edges are ordered by x, and the point is inside iff it lies
/// right of edge `2i` and left of edge `2i + 1` for some `i`. Over the
/// reals this equals [`encode_membership`] for a simple polygon; it is far
/// easier for SMT solvers.
pub fn encode_membership_slabs(poly: &Polygon, x: VarId, y: VarId) -> ConstraintExpr {
    let segs: Vec<LineSegment> = poly.segments().into_iter().filter(|s| s.ya < s.yb).collect();
    let mut ys: Vec<f64> = poly.vertices().iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut slabs = Vec::new();
    for w in ys.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let mut active: Vec<(f64, &LineSegment)> = segs
            .iter()
            .filter(|s| s.ya <= lo && s.yb >= hi)
            .map(|s| (s.xa + (mid - s.ya) / (s.yb - s.ya) * (s.xb - s.xa), s))
            .collect();
        active.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spans: Vec<ConstraintExpr> = active
            .chunks_exact(2)
            .map(|pair| {
                ConstraintExpr::And(vec![
                    ConstraintExpr::not(segment_atom(pair[0].1, x, y)),
                    segment_atom(pair[1].1, x, y),
                ])
            })
            .collect();
        slabs.push(ConstraintExpr::And(vec![
            ConstraintExpr::var_cmp(y, CmpOp::Gt, lo),
            ConstraintExpr::var_cmp(y, CmpOp::Le, hi),
            ConstraintExpr::or(spans),
        ]));
    }
    ConstraintExpr::or(slabs)
}

/// Form of the polygon-membership constraints in attack CSPs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipForm {
    /// Crossing-number parity, [`encode_membership`].
    Parity,
    /// Slab decomposition, [`encode_membership_slabs`].
    #[default]
    Slabs,
}

/// Conjunction over the non-vacuous sensor pairs of label `j` of membership
/// in some polygon of that pair.
pub fn encode_consistency(atlas: &ClusterAtlas, j: LabelId, vars: &[VarId]) -> Result<ConstraintExpr, CirError> {
    encode_consistency_with(atlas, j, vars, MembershipForm::Parity)
}

pub fn encode_consistency_with(
    atlas: &ClusterAtlas,
    j: LabelId,
    vars: &[VarId],
    form: MembershipForm,
) -> Result<ConstraintExpr, CirError> {
    check_vars(atlas.n_sensors, vars)?;
    if j >= atlas.n_labels {
        return Err(CirError::UnknownLabel(j));
    }
    let mut items = Vec::new();
    for (a, b) in sensor_pairs(atlas.n_sensors) {
        let Some(e) = atlas.entry(j, a, b) else { continue };
        if e.degenerate {
            continue;
        }
        items.push(ConstraintExpr::or(
            e.polygons
                .iter()
                .map(|p| match form {
                    MembershipForm::Parity => encode_membership(p, vars[a], vars[b]),
                    MembershipForm::Slabs => encode_membership_slabs(p, vars[a], vars[b]),
                })
                .collect(),
        ));
    }
    if items.is_empty() {
        log::warn!("every sensor pair of label {j} is vacuous; consistency is unconstrained");
    }
    Ok(ConstraintExpr::and(items))
}

/// Moves non-equality comparisons inward by `margin * max(1, |rhs|)`.
fn tighten(e: ConstraintExpr, margin: f64) -> ConstraintExpr {
    use ConstraintExpr::*;
    match e {
        Compare { lhs, op, rhs } => {
            let m = margin * rhs.abs().max(1.0);
            let rhs = match op {
                CmpOp::Lt | CmpOp::Le => rhs - m,
                CmpOp::Gt | CmpOp::Ge => rhs + m,
                CmpOp::Eq => rhs,
            };
            Compare { lhs, op, rhs }
        }
        And(items) => And(items.into_iter().map(|x| tighten(x, margin)).collect()),
        Or(items) => Or(items.into_iter().map(|x| tighten(x, margin)).collect()),
        other => other,
    }
}

fn algorithm_name(atlas: &ClusterAtlas) -> &'static str {
    match atlas.params.algorithm {
        ClusterAlgorithm::Dbscan { .. } => "dbscan",
        ClusterAlgorithm::Kmeans { .. } => "kmeans",
    }
}

/// Variable names used by [`encode_attack`] for sensor `s`.
pub fn altered_name(s: usize) -> String {
    format!("alt_{s}")
}

pub fn delta_name(s: usize) -> String {
    format!("delta_{s}")
}

pub fn access_name(s: usize) -> String {
    format!("acc_{s}")
}

/// Attack CSP moving `patient` from label `source` to `target`: altered
/// values are baseline plus delta, the classifier must output `target`, the
/// altered vector must be consistent for `target`, access flags mark exactly
/// the nonzero deltas, at most `max_sensors` flags are set, and every delta
/// respects the relative threshold.
pub fn encode_attack(
    patient: &[f64],
    source: LabelId,
    target: LabelId,
    capability: AttackerCapability,
    dcm: &Dcm,
    atlas: &ClusterAtlas,
    options: &EncodeOptions,
) -> Result<Csp, CirError> {
    let n_s = dcm.n_sensors();
    check_dims(n_s, patient.len())?;
    check_dims(n_s, atlas.n_sensors)?;
    let n_l = dcm.n_labels();
    if source >= n_l {
        return Err(CirError::UnknownLabel(source));
    }
    if target >= n_l || target >= atlas.n_labels {
        return Err(CirError::UnknownLabel(target));
    }
    if source == target {
        return Err(CirError::InvalidGoal(target));
    }
    capability.validate()?;
    let predicted = dcm.predict(patient)?;
    if predicted != source {
        return Err(CirError::BaselineInconsistent(format!(
            "classifier predicts label {predicted}, not {source}"
        )));
    }
    if !consistent(patient, source, atlas)? {
        return Err(CirError::BaselineInconsistent(format!(
            "baseline is not consistent with the atlas for label {source}"
        )));
    }

    let mut b = CspBuilder::new();
    {
        let md = b.metadata_mut();
        md.dcm = Some(format!("{:?}", dcm.kind()).to_lowercase());
        md.adm = Some(algorithm_name(atlas).to_string());
        md.source = Some(source);
        md.target = Some(target);
    }
    let deltas: Vec<VarId> = (0..n_s).map(|s| b.real(delta_name(s), VarRole::Delta(s))).collect();
    let alts: Vec<VarId> = (0..n_s).map(|s| b.real(altered_name(s), VarRole::Altered(s))).collect();
    let accs: Vec<VarId> = (0..n_s).map(|s| b.boolean(access_name(s), VarRole::Access(s))).collect();
    for s in 0..n_s {
        b.define(Definition::Linear {
            var: alts[s],
            expr: LinExpr::new(vec![(deltas[s], 1.0)], patient[s]),
        });
        b.define(Definition::NonZero {
            var: accs[s],
            input: deltas[s],
        });
    }

    for s in 0..n_s {
        b.assert(ConstraintExpr::cmp(
            LinExpr::new(vec![(alts[s], 1.0), (deltas[s], -1.0)], 0.0),
            CmpOp::Eq,
            patient[s],
        ));
    }
    let mut model = encode_dcm(&mut b, dcm, &alts, target)?;
    if let Some(m) = options.strict_margin {
        model = tighten(model, m);
    }
    b.assert(model);
    b.assert(encode_consistency_with(atlas, target, &alts, options.membership)?);
    for s in 0..n_s {
        let acc = ConstraintExpr::BoolVar(accs[s]);
        b.assert(ConstraintExpr::implies(
            acc.clone(),
            ConstraintExpr::Or(vec![
                ConstraintExpr::var_cmp(deltas[s], CmpOp::Lt, 0.0),
                ConstraintExpr::var_cmp(deltas[s], CmpOp::Gt, 0.0),
            ]),
        ));
        b.assert(ConstraintExpr::implies(
            ConstraintExpr::not(acc),
            ConstraintExpr::var_cmp(deltas[s], CmpOp::Eq, 0.0),
        ));
    }
    if let Some(support) = &options.support {
        for s in (0..n_s).filter(|s| !support.contains(s)) {
            b.assert(ConstraintExpr::var_cmp(deltas[s], CmpOp::Eq, 0.0));
        }
    }
    b.assert(ConstraintExpr::Cardinality {
        vars: accs.clone(),
        bound: capability.max_sensors,
    });
    let threshold = match options.strict_margin {
        Some(m) => capability.threshold * (1.0 - m),
        None => capability.threshold,
    };
    for s in 0..n_s {
        b.assert(ConstraintExpr::AbsRatioBound {
            var: deltas[s],
            threshold,
            reference: patient[s],
        });
    }
    let mut csp = b.finish()?;
    if options.simplify {
        csp.simplify();
    }
    Ok(csp)
}

fn check_dims(expected: usize, got: usize) -> Result<(), CirError> {
    if expected != got {
        return Err(CirError::DimensionMismatch { expected, got });
    }
    Ok(())
}
