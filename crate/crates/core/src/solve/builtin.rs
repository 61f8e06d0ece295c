use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SolveError, SolveResult, UnknownReason};
use crate::cir::{abs_ratio_limit, CmpOp, ConstraintExpr, Csp, Truth, VarId};

/// Effort limits for [`builtin_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub restarts: usize,
    pub sweeps: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            restarts: 64,
            sweeps: 24,
        }
    }
}

/// Relative slack demanded of strict inequalities and allowed on equalities.
const MARGIN: f64 = 1e-9;

fn scale(lhs_mag: f64, rhs: f64) -> f64 {
    (lhs_mag + rhs.abs()).max(1.0)
}

/// Nonnegative violation of `e` (or of its negation), zero iff satisfied
/// with the search margin.
fn violation(e: &ConstraintExpr, values: &[f64], negate: bool) -> f64 {
    use ConstraintExpr::*;
    match e {
        Const(b) => f64::from(u8::from(*b == negate)),
        BoolVar(v) => f64::from(u8::from((values[v.index()] != 0.0) == negate)),
        Compare { lhs, op, rhs } => {
            let d = lhs.eval(values) - rhs;
            let s = scale(lhs.magnitude(values), *rhs);
            let mu = MARGIN * s;
            let op = if negate {
                match op {
                    CmpOp::Lt => CmpOp::Ge,
                    CmpOp::Le => CmpOp::Gt,
                    CmpOp::Gt => CmpOp::Le,
                    CmpOp::Ge => CmpOp::Lt,
                    CmpOp::Eq => return if d.abs() > mu { 0.0 } else { 2.0 * mu - d.abs() },
                }
            } else {
                *op
            };
            match op {
                CmpOp::Lt => (d + mu).max(0.0),
                CmpOp::Le => d.max(0.0),
                CmpOp::Gt => (mu - d).max(0.0),
                CmpOp::Ge => (-d).max(0.0),
                CmpOp::Eq => (d.abs() - mu).max(0.0),
            }
        }
        Not(x) => violation(x, values, !negate),
        And(items) if !negate => items.iter().map(|x| violation(x, values, false)).sum(),
        Or(items) if negate => items.iter().map(|x| violation(x, values, true)).sum(),
        And(items) | Or(items) => items
            .iter()
            .map(|x| violation(x, values, negate))
            .fold(f64::INFINITY, f64::min)
            .min(if items.is_empty() { 1.0 } else { f64::INFINITY }),
        Xor(items) => {
            let parity = items.iter().fold(false, |p, x| p ^ x.eval_exact(values));
            if parity != negate {
                0.0
            } else {
                items
                    .iter()
                    .map(|x| violation(x, values, x.eval_exact(values)))
                    .fold(f64::INFINITY, f64::min)
                    .min(1.0)
            }
        }
        Implies(a, b) => {
            if negate {
                violation(a, values, false) + violation(b, values, true)
            } else {
                violation(a, values, true).min(violation(b, values, false))
            }
        }
        Cardinality { vars, bound } => {
            let count = vars.iter().filter(|v| values[v.index()] != 0.0).count();
            if negate {
                (*bound + 1).saturating_sub(count) as f64
            } else {
                count.saturating_sub(*bound) as f64
            }
        }
        AbsRatioBound {
            var,
            threshold,
            reference,
        } => {
            let limit = abs_ratio_limit(*threshold, *reference);
            let x = values[var.index()].abs();
            if negate {
                (limit - x).max(0.0)
            } else {
                (x - limit * (1.0 - MARGIN)).max(0.0)
            }
        }
    }
}

fn total_violation(csp: &Csp, values: &[f64]) -> f64 {
    csp.assertions.iter().map(|a| violation(a, values, false)).sum()
}

/// Tightest top-level cardinality bound, if any.
fn cardinality_bound(csp: &Csp) -> Option<usize> {
    csp.assertions
        .iter()
        .filter_map(|a| match a {
            ConstraintExpr::Cardinality { bound, .. } => Some(*bound),
            _ => None,
        })
        .min()
}

/// Incomplete search over the alteration box: seeded random sparse starts
/// followed by coordinate descent on a violation measure. Never reports
/// `Unsat`.
pub fn builtin_search(csp: &Csp, budget: SearchBudget, seed: u64) -> Result<SolveResult, SolveError> {
    let boxes = csp.box_bounds();
    let ranges = csp.variable_ranges();
    let decision = csp.decision_variables();
    let mut limits: Vec<(VarId, f64)> = Vec::with_capacity(decision.len());
    let mut pinned: Vec<(VarId, f64)> = Vec::new();
    for v in &decision {
        if let Some((lo, hi)) = ranges[v.index()] {
            if lo == hi {
                pinned.push((*v, lo));
                continue;
            }
        }
        match boxes.get(v) {
            Some(&l) => limits.push((*v, l)),
            None => return Err(SolveError::NoBoxBounds(csp.symbols.get(*v).name.clone())),
        }
    }
    let n = limits.len();
    let max_support = cardinality_bound(csp).unwrap_or(n).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; csp.symbols.len()];

    for restart in 0..budget.restarts.max(1) {
        values.iter_mut().for_each(|x| *x = 0.0);
        for &(v, c) in &pinned {
            values[v.index()] = c;
        }
        if restart > 0 && max_support > 0 {
            let k = rng.random_range(1..=max_support);
            for i in sample(&mut rng, n, k) {
                let (v, l) = limits[i];
                values[v.index()] = rng.random_range(-l..l) * (1.0 - 1e-6);
            }
        }
        let mut full = csp.derive_assignment(&values);
        let mut best = total_violation(csp, &full);
        let mut step_frac = 0.25;
        for _ in 0..budget.sweeps {
            if best == 0.0 {
                break;
            }
            let mut improved = false;
            for &(v, l) in &limits {
                let cur = values[v.index()];
                let step = step_frac * l;
                let support = limits.iter().filter(|(u, _)| values[u.index()] != 0.0).count();
                let mut cands = vec![0.0, cur + step, cur - step, cur + 0.5 * step, cur - 0.5 * step];
                if cur == 0.0 && support >= max_support {
                    cands.truncate(1);
                }
                if cur == 0.0 && support < max_support {
                    cands.push(rng.random_range(-l..l));
                }
                for c in cands {
                    let c = c.clamp(-l * (1.0 - 1e-6), l * (1.0 - 1e-6));
                    if c == cur {
                        continue;
                    }
                    values[v.index()] = c;
                    let trial = csp.derive_assignment(&values);
                    let score = total_violation(csp, &trial);
                    if score < best {
                        best = score;
                        full = trial;
                        improved = true;
                        break;
                    }
                    values[v.index()] = cur;
                }
                if best == 0.0 {
                    break;
                }
            }
            if !improved {
                step_frac *= 0.5;
                if step_frac < 1e-6 {
                    break;
                }
            }
        }
        if best == 0.0 && csp.check(&full).is_ok() && csp.eval(&full, 0.0) != Truth::False {
            return Ok(SolveResult::Sat(full));
        }
    }
    Ok(SolveResult::Unknown(UnknownReason::IncompleteBackend))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::{CspBuilder, Definition, LinExpr, VarRole};

    fn boxed(threshold: f64, extra: Vec<ConstraintExpr>) -> Csp {
        let mut b = CspBuilder::new();
        let d = b.real("d", VarRole::Delta(0));
        let x = b.real("x", VarRole::Altered(0));
        b.define(Definition::Linear {
            var: x,
            expr: LinExpr::new(vec![(d, 1.0)], 10.0),
        });
        b.assert(ConstraintExpr::AbsRatioBound {
            var: d,
            threshold,
            reference: 10.0,
        });
        for e in extra {
            let e = match e {
                ConstraintExpr::Compare { op, rhs, .. } => ConstraintExpr::var_cmp(x, op, rhs),
                other => other,
            };
            b.assert(e);
        }
        b.finish().unwrap()
    }

    fn on_x(op: CmpOp, rhs: f64) -> ConstraintExpr {
        ConstraintExpr::var_cmp(VarId(1), op, rhs)
    }

    #[test]
    fn finds_interval() {
        let csp = boxed(0.3, vec![on_x(CmpOp::Gt, 11.0), on_x(CmpOp::Lt, 11.2)]);
        let SolveResult::Sat(v) = builtin_search(&csp, SearchBudget::default(), 1).unwrap() else {
            panic!("expected sat")
        };
        assert!(v[1] > 11.0 && v[1] < 11.2);
    }

    #[test]
    fn contradiction_is_unknown_never_unsat() {
        let csp = boxed(0.3, vec![on_x(CmpOp::Gt, 11.0), on_x(CmpOp::Lt, 10.0)]);
        assert_eq!(
            builtin_search(&csp, SearchBudget::default(), 1).unwrap(),
            SolveResult::Unknown(UnknownReason::IncompleteBackend)
        );
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let csp = boxed(0.3, vec![on_x(CmpOp::Gt, 12.0)]);
        let a = builtin_search(&csp, SearchBudget::default(), 9).unwrap();
        let b = builtin_search(&csp, SearchBudget::default(), 9).unwrap();
        assert_eq!(a, b);
        assert!(matches!(a, SolveResult::Sat(_)));
    }

    #[test]
    fn missing_box_is_an_error() {
        let mut b = CspBuilder::new();
        let x = b.real("x", VarRole::Free);
        b.assert(ConstraintExpr::var_cmp(x, CmpOp::Gt, 0.0));
        assert!(matches!(
            builtin_search(&b.finish().unwrap(), SearchBudget::default(), 0),
            Err(SolveError::NoBoxBounds(_))
        ));
    }
}
