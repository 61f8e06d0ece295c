use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::expr::{abs_ratio_limit, CmpOp, ConstraintExpr, LinExpr, PrintStyle, Printer, Truth, VarId};
use super::CirError;
use crate::data::LabelId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sort {
    Real,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRole {
    /// Altered measurement of a sensor.
    Altered(usize),
    /// Injected change of a sensor.
    Delta(usize),
    /// Attacker access flag of a sensor.
    Access(usize),
    NnPre { layer: usize, node: usize },
    NnPost { layer: usize, node: usize },
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarInfo {
    pub name: String,
    pub sort: Sort,
    pub role: VarRole,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SymbolTable {
    vars: Vec<VarInfo>,
}

impl SymbolTable {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, v: VarId) -> &VarInfo {
        &self.vars[v.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &VarInfo)> {
        self.vars.iter().enumerate().map(|(i, v)| (VarId(i as u32), v))
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(|i| VarId(i as u32))
    }

    pub fn find_role(&self, role: VarRole) -> Option<VarId> {
        self.vars.iter().position(|v| v.role == role).map(|i| VarId(i as u32))
    }

    fn push(&mut self, info: VarInfo) -> VarId {
        self.vars.push(info);
        VarId(self.vars.len() as u32 - 1)
    }
}

/// How a dependent variable is computed from earlier ones. Definitions are
/// stored in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Definition {
    Linear { var: VarId, expr: LinExpr },
    Relu { var: VarId, input: VarId },
    /// Boolean `input != 0`.
    NonZero { var: VarId, input: VarId },
}

impl Definition {
    pub fn var(&self) -> VarId {
        match self {
            Definition::Linear { var, .. } | Definition::Relu { var, .. } | Definition::NonZero { var, .. } => *var,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CspMetadata {
    pub dcm: Option<String>,
    pub adm: Option<String>,
    pub patient: Option<usize>,
    pub source: Option<LabelId>,
    pub target: Option<LabelId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CspStats {
    pub variable_count: usize,
    pub clause_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Csp {
    pub symbols: SymbolTable,
    pub assertions: Vec<ConstraintExpr>,
    pub definitions: Vec<Definition>,
    pub metadata: CspMetadata,
}

/// Incrementally assembles a [`Csp`], keeping names unique.
#[derive(Debug, Default)]
pub struct CspBuilder {
    csp: Csp,
}

impl CspBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn real(&mut self, name: impl Into<String>, role: VarRole) -> VarId {
        self.declare(name.into(), Sort::Real, role)
    }

    pub fn boolean(&mut self, name: impl Into<String>, role: VarRole) -> VarId {
        self.declare(name.into(), Sort::Bool, role)
    }

    fn declare(&mut self, name: String, sort: Sort, role: VarRole) -> VarId {
        assert!(
            self.csp.symbols.lookup(&name).is_none(),
            "duplicate variable name {name}"
        );
        self.csp.symbols.push(VarInfo { name, sort, role })
    }

    pub fn define(&mut self, def: Definition) {
        self.csp.definitions.push(def);
    }

    pub fn assert(&mut self, e: ConstraintExpr) {
        self.csp.assertions.push(e);
    }

    pub fn metadata_mut(&mut self) -> &mut CspMetadata {
        &mut self.csp.metadata
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.csp.symbols
    }

    pub fn finish(self) -> Result<Csp, CirError> {
        self.csp.validate()?;
        Ok(self.csp)
    }
}

/// Absolute tolerance floor used by [`Csp::check`].
pub const DELTA_STRICT: f64 = 1e-6;

impl Csp {
    /// Every referenced variable is declared and sorts are used consistently.
    pub fn validate(&self) -> Result<(), CirError> {
        let n = self.symbols.len();
        let check_var = |v: VarId, sort: Sort| -> Result<(), CirError> {
            if v.index() >= n {
                return Err(CirError::UndeclaredVariable(v.0));
            }
            if self.symbols.get(v).sort != sort {
                return Err(CirError::SortMismatch(self.symbols.get(v).name.clone()));
            }
            Ok(())
        };
        for a in &self.assertions {
            validate_expr(a, &check_var)?;
        }
        for d in &self.definitions {
            match d {
                Definition::Linear { var, expr } => {
                    check_var(*var, Sort::Real)?;
                    for (v, _) in &expr.terms {
                        check_var(*v, Sort::Real)?;
                    }
                }
                Definition::Relu { var, input } => {
                    check_var(*var, Sort::Real)?;
                    check_var(*input, Sort::Real)?;
                }
                Definition::NonZero { var, input } => {
                    check_var(*var, Sort::Bool)?;
                    check_var(*input, Sort::Real)?;
                }
            }
        }
        Ok(())
    }

    /// Conjunction of all assertions under [`ConstraintExpr::eval`].
    pub fn eval(&self, values: &[f64], tol: f64) -> Truth {
        let mut out = Truth::True;
        for a in &self.assertions {
            match a.eval(values, tol) {
                Truth::False => return Truth::False,
                Truth::Unknown => out = Truth::Unknown,
                Truth::True => {}
            }
        }
        out
    }

    /// Index of the first assertion that is definitely false at `values`
    /// with the [`DELTA_STRICT`] tolerance, if any.
    pub fn check(&self, values: &[f64]) -> Result<(), usize> {
        if values.len() != self.symbols.len() {
            return Err(usize::MAX);
        }
        match self.assertions.iter().position(|a| a.eval(values, DELTA_STRICT) == Truth::False) {
            Some(i) => Err(i),
            None => Ok(()),
        }
    }

    /// Whether every assertion holds exactly at `values`.
    pub fn holds_exactly(&self, values: &[f64]) -> bool {
        values.len() == self.symbols.len() && self.assertions.iter().all(|a| a.eval_exact(values))
    }

    /// Full assignment from the variables not fixed by a definition.
    /// `free` must hold a value for every variable; defined entries are
    /// overwritten in definition order.
    pub fn derive_assignment(&self, free: &[f64]) -> Vec<f64> {
        let mut values = free.to_vec();
        for d in &self.definitions {
            match d {
                Definition::Linear { var, expr } => values[var.index()] = expr.eval(&values),
                Definition::Relu { var, input } => values[var.index()] = values[input.index()].max(0.0),
                Definition::NonZero { var, input } => {
                    values[var.index()] = f64::from(u8::from(values[input.index()] != 0.0))
                }
            }
        }
        values
    }

    /// Variables not fixed by any definition.
    pub fn decision_variables(&self) -> Vec<VarId> {
        let defined: std::collections::BTreeSet<VarId> = self.definitions.iter().map(|d| d.var()).collect();
        self.symbols.iter().map(|(v, _)| v).filter(|v| !defined.contains(v)).collect()
    }

    /// Closed magnitude bound per variable from top-level `AbsRatioBound`
    /// assertions, tightest first.
    pub fn box_bounds(&self) -> BTreeMap<VarId, f64> {
        let mut out: BTreeMap<VarId, f64> = BTreeMap::new();
        for a in self.flat_assertions() {
            if let ConstraintExpr::AbsRatioBound {
                var,
                threshold,
                reference,
            } = a
            {
                let limit = abs_ratio_limit(*threshold, *reference);
                out.entry(*var).and_modify(|l| *l = l.min(limit)).or_insert(limit);
            }
        }
        out
    }

    /// Closed interval per variable implied by the box bounds, propagated
    /// through the definitions. `None` for unbounded variables.
    pub fn variable_ranges(&self) -> Vec<Option<(f64, f64)>> {
        let mut ranges: Vec<Option<(f64, f64)>> = vec![None; self.symbols.len()];
        for (v, l) in self.box_bounds() {
            ranges[v.index()] = Some((-l, l));
        }
        // Top-level `v = c` pins a variable.
        for a in self.flat_assertions() {
            if let ConstraintExpr::Compare {
                lhs,
                op: CmpOp::Eq,
                rhs,
            } = a
            {
                if let [(v, c)] = lhs.terms.as_slice() {
                    if *c == 1.0 && lhs.constant == 0.0 {
                        ranges[v.index()] = Some((*rhs, *rhs));
                    }
                }
            }
        }
        for d in &self.definitions {
            let r = match d {
                Definition::Linear { expr, .. } => expr.range(&|v| ranges[v.index()]),
                Definition::Relu { input, .. } => ranges[input.index()].map(|(lo, hi)| (lo.max(0.0), hi.max(0.0))),
                Definition::NonZero { input, .. } => match ranges[input.index()] {
                    Some((0.0, 0.0)) => Some((0.0, 0.0)),
                    Some((lo, hi)) if lo > 0.0 || hi < 0.0 => Some((1.0, 1.0)),
                    _ => Some((0.0, 1.0)),
                },
            };
            ranges[d.var().index()] = r;
        }
        ranges
    }

    fn flat_assertions(&self) -> impl Iterator<Item = &ConstraintExpr> {
        self.assertions.iter().flat_map(|a| match a {
            ConstraintExpr::And(items) => items.iter().collect::<Vec<_>>(),
            other => vec![other],
        })
    }

    pub fn stats(&self) -> CspStats {
        CspStats {
            variable_count: self.symbols.len(),
            clause_count: self.flat_assertions().count(),
        }
    }

    /// Folds atoms decided by the box bounds and drops assertions that
    /// become true. The bounding assertions themselves are kept verbatim.
    pub fn simplify(&mut self) {
        let ranges = self.variable_ranges();
        let bounds = |v: VarId| ranges[v.index()];
        let mut out = Vec::with_capacity(self.assertions.len());
        for a in &self.assertions {
            if matches!(a, ConstraintExpr::AbsRatioBound { .. }) {
                out.push(a.clone());
                continue;
            }
            match a.simplify(&bounds) {
                ConstraintExpr::Const(true) => {}
                s => out.push(s),
            }
        }
        self.assertions = out;
    }

    pub fn printer_names(&self) -> impl Fn(VarId) -> String + '_ {
        move |v| self.symbols.get(v).name.clone()
    }

    /// Human-readable dump: declarations, then one assertion per line.
    pub fn dump(&self) -> String {
        let names = self.printer_names();
        let p = Printer {
            names: &names,
            style: PrintStyle {
                exact: false,
                lower_xor: false,
            },
        };
        let mut out = String::new();
        for (_, info) in self.symbols.iter() {
            let sort = match info.sort {
                Sort::Real => "Real",
                Sort::Bool => "Bool",
            };
            out.push_str(&format!("; {} : {}\n", info.name, sort));
        }
        for a in &self.assertions {
            out.push_str(&p.expr(a));
            out.push('\n');
        }
        out
    }

    /// Assignment as `name -> value` pairs in declaration order.
    pub fn named_values(&self, values: &[f64]) -> Vec<(String, f64)> {
        self.symbols
            .iter()
            .map(|(v, info)| (info.name.clone(), values[v.index()]))
            .collect()
    }
}

fn validate_expr(e: &ConstraintExpr, check: &dyn Fn(VarId, Sort) -> Result<(), CirError>) -> Result<(), CirError> {
    use ConstraintExpr::*;
    match e {
        Const(_) => Ok(()),
        BoolVar(v) => check(*v, Sort::Bool),
        Compare { lhs, rhs, .. } => {
            if !rhs.is_finite() || !lhs.constant.is_finite() || lhs.terms.iter().any(|(_, c)| !c.is_finite()) {
                return Err(CirError::NonFinite);
            }
            lhs.terms.iter().try_for_each(|(v, _)| check(*v, Sort::Real))
        }
        Not(x) => validate_expr(x, check),
        And(items) | Or(items) | Xor(items) => items.iter().try_for_each(|x| validate_expr(x, check)),
        Implies(a, b) => {
            validate_expr(a, check)?;
            validate_expr(b, check)
        }
        Cardinality { vars, .. } => vars.iter().try_for_each(|v| check(*v, Sort::Bool)),
        AbsRatioBound {
            var,
            threshold,
            reference,
        } => {
            if !threshold.is_finite() || !reference.is_finite() {
                return Err(CirError::NonFinite);
            }
            check(*var, Sort::Real)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_csp_stats() {
        let csp = CspBuilder::new().finish().unwrap();
        assert_eq!(
            csp.stats(),
            CspStats {
                variable_count: 0,
                clause_count: 0
            }
        );
        assert_eq!(csp.eval(&[], 1e-9), Truth::True);
    }

    #[test]
    fn root_and_is_flattened_for_stats() {
        let mut b = CspBuilder::new();
        let x = b.real("x", VarRole::Free);
        b.assert(ConstraintExpr::And(vec![
            ConstraintExpr::var_cmp(x, CmpOp::Gt, 0.0),
            ConstraintExpr::var_cmp(x, CmpOp::Lt, 2.0),
            ConstraintExpr::var_cmp(x, CmpOp::Le, 1.0),
        ]));
        let csp = b.finish().unwrap();
        assert_eq!(csp.stats().clause_count, 3);
        assert_eq!(csp.stats().variable_count, 1);
    }

    #[test]
    fn sort_mismatch_is_rejected() {
        let mut b = CspBuilder::new();
        let x = b.real("x", VarRole::Free);
        b.assert(ConstraintExpr::BoolVar(x));
        assert!(matches!(b.finish(), Err(CirError::SortMismatch(_))));
    }

    #[test]
    fn derived_values_and_ranges() {
        let mut b = CspBuilder::new();
        let d = b.real("d", VarRole::Delta(0));
        let x = b.real("x", VarRole::Altered(0));
        let r = b.real("r", VarRole::Free);
        let a = b.boolean("a", VarRole::Access(0));
        b.define(Definition::Linear {
            var: x,
            expr: LinExpr::new(vec![(d, 1.0)], 10.0),
        });
        b.define(Definition::Relu {
            var: r,
            input: d,
        });
        b.define(Definition::NonZero { var: a, input: d });
        b.assert(ConstraintExpr::AbsRatioBound {
            var: d,
            threshold: 0.1,
            reference: 10.0,
        });
        b.assert(ConstraintExpr::var_cmp(x, CmpOp::Lt, 20.0));
        let mut csp = b.finish().unwrap();
        let v = csp.derive_assignment(&[-0.5, 0.0, 0.0, 0.0]);
        assert_eq!(v, vec![-0.5, 9.5, 0.0, 1.0]);
        assert_eq!(csp.decision_variables(), vec![d]);
        let ranges = csp.variable_ranges();
        assert_eq!(ranges[x.index()], Some((9.0, 11.0)));
        assert_eq!(ranges[r.index()], Some((0.0, 1.0)));
        csp.simplify();
        assert_eq!(csp.assertions.len(), 1);
        assert!(csp.check(&v).is_ok());
    }
}
