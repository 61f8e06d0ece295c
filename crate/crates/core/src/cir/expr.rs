use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// `sum(coef * var) + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn var(v: VarId) -> Self {
        Self {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn new(terms: Vec<(VarId, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    /// Evaluated left to right starting from zero, constant last.
    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &(v, c) in &self.terms {
            acc += c * values[v.index()];
        }
        acc + self.constant
    }

    /// Sum of term magnitudes at `values`, used to scale tolerances.
    pub fn magnitude(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(v, c)| (c * values[v.index()]).abs())
            .sum::<f64>()
            + self.constant.abs()
    }

    /// Closed range over a box, or `None` if some variable is unbounded.
    pub fn range(&self, bounds: &dyn Fn(VarId) -> Option<(f64, f64)>) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (self.constant, self.constant);
        for &(v, c) in &self.terms {
            let (a, b) = bounds(v)?;
            if c >= 0.0 {
                lo += c * a;
                hi += c * b;
            } else {
                lo += c * b;
                hi += c * a;
            }
        }
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }
}

/// Boolean formula over real and boolean variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintExpr {
    Const(bool),
    BoolVar(VarId),
    Compare { lhs: LinExpr, op: CmpOp, rhs: f64 },
    Not(Box<ConstraintExpr>),
    And(Vec<ConstraintExpr>),
    Or(Vec<ConstraintExpr>),
    Xor(Vec<ConstraintExpr>),
    Implies(Box<ConstraintExpr>, Box<ConstraintExpr>),
    /// Number of true variables is at most `bound`.
    Cardinality { vars: Vec<VarId>, bound: usize },
    /// `|var| < threshold * max(|reference|, EPS_DIV)`.
    AbsRatioBound { var: VarId, threshold: f64, reference: f64 },
}

/// Floor for the denominator of relative alterations.
pub const EPS_DIV: f64 = 1e-6;

/// Kleene truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }
}

pub fn abs_ratio_limit(threshold: f64, reference: f64) -> f64 {
    threshold * reference.abs().max(EPS_DIV)
}

impl ConstraintExpr {
    pub fn cmp(lhs: LinExpr, op: CmpOp, rhs: f64) -> Self {
        ConstraintExpr::Compare { lhs, op, rhs }
    }

    pub fn var_cmp(v: VarId, op: CmpOp, rhs: f64) -> Self {
        Self::cmp(LinExpr::var(v), op, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: ConstraintExpr) -> Self {
        ConstraintExpr::Not(Box::new(e))
    }

    pub fn implies(a: ConstraintExpr, b: ConstraintExpr) -> Self {
        ConstraintExpr::Implies(Box::new(a), Box::new(b))
    }

    /// Conjunction with singleton and empty cases collapsed.
    pub fn and(mut items: Vec<ConstraintExpr>) -> Self {
        match items.len() {
            0 => ConstraintExpr::Const(true),
            1 => items.pop().unwrap(),
            _ => ConstraintExpr::And(items),
        }
    }

    /// Disjunction with singleton and empty cases collapsed.
    pub fn or(mut items: Vec<ConstraintExpr>) -> Self {
        match items.len() {
            0 => ConstraintExpr::Const(false),
            1 => items.pop().unwrap(),
            _ => ConstraintExpr::Or(items),
        }
    }

    /// Three-valued evaluation. A comparison whose two sides differ by no
    /// more than `tol * max(1, magnitude)` is `Unknown`, except that an
    /// equality within that band is `True`.
    pub fn eval(&self, values: &[f64], tol: f64) -> Truth {
        use ConstraintExpr::*;
        match self {
            Const(b) => Truth::from_bool(*b),
            BoolVar(v) => Truth::from_bool(values[v.index()] != 0.0),
            Compare { lhs, op, rhs } => {
                let l = lhs.eval(values);
                let band = tol * (lhs.magnitude(values) + rhs.abs()).max(1.0);
                compare3(l, *op, *rhs, band)
            }
            Not(e) => e.eval(values, tol).not(),
            And(items) => {
                let mut out = Truth::True;
                for e in items {
                    match e.eval(values, tol) {
                        Truth::False => return Truth::False,
                        Truth::Unknown => out = Truth::Unknown,
                        Truth::True => {}
                    }
                }
                out
            }
            Or(items) => {
                let mut out = Truth::False;
                for e in items {
                    match e.eval(values, tol) {
                        Truth::True => return Truth::True,
                        Truth::Unknown => out = Truth::Unknown,
                        Truth::False => {}
                    }
                }
                out
            }
            Xor(items) => {
                let mut parity = false;
                for e in items {
                    match e.eval(values, tol) {
                        Truth::Unknown => return Truth::Unknown,
                        Truth::True => parity = !parity,
                        Truth::False => {}
                    }
                }
                Truth::from_bool(parity)
            }
            Implies(a, b) => match (a.eval(values, tol), b.eval(values, tol)) {
                (Truth::False, _) | (_, Truth::True) => Truth::True,
                (Truth::True, Truth::False) => Truth::False,
                _ => Truth::Unknown,
            },
            Cardinality { vars, bound } => {
                let count = vars.iter().filter(|v| values[v.index()] != 0.0).count();
                Truth::from_bool(count <= *bound)
            }
            AbsRatioBound {
                var,
                threshold,
                reference,
            } => {
                let limit = abs_ratio_limit(*threshold, *reference);
                let x = values[var.index()].abs();
                compare3(x, CmpOp::Lt, limit, tol * limit.max(x).max(1.0))
            }
        }
    }

    /// Exact two-valued evaluation.
    pub fn eval_exact(&self, values: &[f64]) -> bool {
        use ConstraintExpr::*;
        match self {
            Const(b) => *b,
            BoolVar(v) => values[v.index()] != 0.0,
            Compare { lhs, op, rhs } => op.holds(lhs.eval(values), *rhs),
            Not(e) => !e.eval_exact(values),
            And(items) => items.iter().all(|e| e.eval_exact(values)),
            Or(items) => items.iter().any(|e| e.eval_exact(values)),
            Xor(items) => items.iter().fold(false, |acc, e| acc ^ e.eval_exact(values)),
            Implies(a, b) => !a.eval_exact(values) || b.eval_exact(values),
            Cardinality { vars, bound } => vars.iter().filter(|v| values[v.index()] != 0.0).count() <= *bound,
            AbsRatioBound {
                var,
                threshold,
                reference,
            } => values[var.index()].abs() < abs_ratio_limit(*threshold, *reference),
        }
    }

    /// Variables in first-occurrence order.
    pub fn variables(&self) -> Vec<VarId> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        self.visit_vars(&mut |v| {
            if seen.insert(v) {
                out.push(v);
            }
        });
        out
    }

    fn visit_vars(&self, f: &mut dyn FnMut(VarId)) {
        use ConstraintExpr::*;
        match self {
            Const(_) => {}
            BoolVar(v) => f(*v),
            Compare { lhs, .. } => lhs.terms.iter().for_each(|(v, _)| f(*v)),
            Not(e) => e.visit_vars(f),
            And(items) | Or(items) | Xor(items) => items.iter().for_each(|e| e.visit_vars(f)),
            Implies(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            Cardinality { vars, .. } => vars.iter().for_each(|v| f(*v)),
            AbsRatioBound { var, .. } => f(*var),
        }
    }

    /// Node count.
    pub fn size(&self) -> usize {
        use ConstraintExpr::*;
        match self {
            Not(e) => 1 + e.size(),
            And(items) | Or(items) | Xor(items) => 1 + items.iter().map(|e| e.size()).sum::<usize>(),
            Implies(a, b) => 1 + a.size() + b.size(),
            _ => 1,
        }
    }

    /// Constant folding. Comparisons whose variables all have box bounds
    /// are decided when the box lies entirely on one side; connectives
    /// absorb constants.
    pub fn simplify(&self, bounds: &dyn Fn(VarId) -> Option<(f64, f64)>) -> ConstraintExpr {
        use ConstraintExpr::*;
        match self {
            BoolVar(v) => match bounds(*v) {
                Some((0.0, 0.0)) => Const(false),
                Some((1.0, 1.0)) => Const(true),
                _ => self.clone(),
            },
            Compare { lhs, op, rhs } => {
                if lhs.terms.is_empty() {
                    return Const(op.holds(lhs.constant, *rhs));
                }
                let Some((lo, hi)) = lhs.range(bounds) else {
                    return self.clone();
                };
                // Widen against rounding in the interval sums.
                let slack = 1e-12 * (lo.abs().max(hi.abs()) + rhs.abs()).max(1.0);
                let (lo, hi) = (lo - slack, hi + slack);
                let decided = match op {
                    CmpOp::Lt if hi < *rhs => Some(true),
                    CmpOp::Lt if lo >= *rhs => Some(false),
                    CmpOp::Le if hi <= *rhs => Some(true),
                    CmpOp::Le if lo > *rhs => Some(false),
                    CmpOp::Gt if lo > *rhs => Some(true),
                    CmpOp::Gt if hi <= *rhs => Some(false),
                    CmpOp::Ge if lo >= *rhs => Some(true),
                    CmpOp::Ge if hi < *rhs => Some(false),
                    CmpOp::Eq if lo > *rhs || hi < *rhs => Some(false),
                    _ => None,
                };
                decided.map_or_else(|| self.clone(), Const)
            }
            Not(e) => match e.simplify(bounds) {
                Const(b) => Const(!b),
                Not(inner) => *inner,
                other => Not(Box::new(other)),
            },
            And(items) => {
                let mut out = Vec::new();
                for e in items {
                    match e.simplify(bounds) {
                        Const(true) => {}
                        Const(false) => return Const(false),
                        And(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                ConstraintExpr::and(out)
            }
            Or(items) => {
                let mut out = Vec::new();
                for e in items {
                    match e.simplify(bounds) {
                        Const(false) => {}
                        Const(true) => return Const(true),
                        Or(inner) => out.extend(inner),
                        other => out.push(other),
                    }
                }
                ConstraintExpr::or(out)
            }
            Xor(items) => {
                let mut flip = false;
                let mut out = Vec::new();
                for e in items {
                    match e.simplify(bounds) {
                        Const(b) => flip ^= b,
                        other => out.push(other),
                    }
                }
                let core = match out.len() {
                    0 => Const(false),
                    1 => out.pop().unwrap(),
                    _ => Xor(out),
                };
                match (flip, core) {
                    (false, c) => c,
                    (true, Const(b)) => Const(!b),
                    (true, c) => Not(Box::new(c)),
                }
            }
            Implies(a, b) => match (a.simplify(bounds), b.simplify(bounds)) {
                (Const(false), _) | (_, Const(true)) => Const(true),
                (Const(true), c) => c,
                (c, Const(false)) => Not(Box::new(c)),
                (x, y) => Implies(Box::new(x), Box::new(y)),
            },
            AbsRatioBound {
                var,
                threshold,
                reference,
            } => {
                let limit = abs_ratio_limit(*threshold, *reference);
                match bounds(*var) {
                    Some((lo, hi)) if lo.abs().max(hi.abs()) < limit && lo > -limit => Const(true),
                    Some((lo, hi)) if lo >= limit || hi <= -limit => Const(false),
                    _ => self.clone(),
                }
            }
            other => other.clone(),
        }
    }
}

fn compare3(l: f64, op: CmpOp, r: f64, band: f64) -> Truth {
    let d = l - r;
    if op == CmpOp::Eq {
        return Truth::from_bool(d.abs() <= band);
    }
    if d.abs() <= band {
        return Truth::Unknown;
    }
    Truth::from_bool(op.holds(l, r))
}

/// How numbers and xor are rendered by [`Printer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrintStyle {
    /// Exact decimal expansion of every double instead of the shortest
    /// round-trip form.
    pub exact: bool,
    /// Balanced tree of `distinct` instead of n-ary `xor`.
    pub lower_xor: bool,
}

pub struct Printer<'a> {
    pub names: &'a dyn Fn(VarId) -> String,
    pub style: PrintStyle,
}

impl Printer<'_> {
    pub fn real(&self, v: f64) -> String {
        format_real(v, self.style.exact)
    }

    pub fn lin(&self, e: &LinExpr) -> String {
        let mut parts: Vec<String> = e
            .terms
            .iter()
            .map(|&(v, c)| {
                if c == 1.0 {
                    (self.names)(v)
                } else {
                    format!("(* {} {})", self.real(c), (self.names)(v))
                }
            })
            .collect();
        if e.constant != 0.0 || parts.is_empty() {
            parts.push(self.real(e.constant));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            format!("(+ {})", parts.join(" "))
        }
    }

    pub fn expr(&self, e: &ConstraintExpr) -> String {
        let mut s = String::new();
        self.write(e, &mut s);
        s
    }

    fn write(&self, e: &ConstraintExpr, out: &mut String) {
        use ConstraintExpr::*;
        match e {
            Const(b) => out.push_str(if *b { "true" } else { "false" }),
            BoolVar(v) => out.push_str(&(self.names)(*v)),
            Compare { lhs, op, rhs } => {
                let _ = write!(out, "({} {} {})", op.symbol(), self.lin(lhs), self.real(*rhs));
            }
            Not(x) => {
                out.push_str("(not ");
                self.write(x, out);
                out.push(')');
            }
            And(items) => self.nary("and", items, out),
            Or(items) => self.nary("or", items, out),
            Xor(items) => {
                if self.style.lower_xor {
                    self.xor_tree(items, out);
                } else {
                    self.nary("xor", items, out);
                }
            }
            Implies(a, b) => {
                out.push_str("(=> ");
                self.write(a, out);
                out.push(' ');
                self.write(b, out);
                out.push(')');
            }
            Cardinality { vars, bound } => {
                let terms: Vec<String> = vars
                    .iter()
                    .map(|v| format!("(ite {} 1.0 0.0)", (self.names)(*v)))
                    .collect();
                let sum = match terms.len() {
                    0 => "0.0".to_string(),
                    1 => terms[0].clone(),
                    _ => format!("(+ {})", terms.join(" ")),
                };
                let _ = write!(out, "(<= {} {})", sum, self.real(*bound as f64));
            }
            AbsRatioBound {
                var,
                threshold,
                reference,
            } => {
                let limit = self.real(abs_ratio_limit(*threshold, *reference));
                let neg = self.real(-abs_ratio_limit(*threshold, *reference));
                let name = (self.names)(*var);
                let _ = write!(out, "(and (< {name} {limit}) (> {name} {neg}))");
            }
        }
    }

    fn nary(&self, op: &str, items: &[ConstraintExpr], out: &mut String) {
        match items.len() {
            0 => out.push_str(if op == "and" { "true" } else { "false" }),
            1 if op != "and" && op != "or" => self.write(&items[0], out),
            _ => {
                out.push('(');
                out.push_str(op);
                for e in items {
                    out.push(' ');
                    self.write(e, out);
                }
                out.push(')');
            }
        }
    }

    fn xor_tree(&self, items: &[ConstraintExpr], out: &mut String) {
        match items.len() {
            0 => out.push_str("false"),
            1 => self.write(&items[0], out),
            n => {
                out.push_str("(distinct ");
                self.xor_tree(&items[..n / 2], out);
                out.push(' ');
                self.xor_tree(&items[n / 2..], out);
                out.push(')');
            }
        }
    }
}

/// SMT-LIB real literal: decimal with a fractional part, negatives as
/// `(- c)`.
pub fn format_real(v: f64, exact: bool) -> String {
    let mag = v.abs();
    let mut s = if exact {
        let full = format!("{mag:.1100}");
        let trimmed = full.trim_end_matches('0');
        if trimmed.ends_with('.') {
            format!("{trimmed}0")
        } else {
            trimmed.to_string()
        }
    } else {
        format!("{mag}")
    };
    if !s.contains('.') {
        s.push_str(".0");
    }
    if v < 0.0 {
        format!("(- {s})")
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> VarId {
        VarId(0)
    }

    #[test]
    fn real_formatting() {
        assert_eq!(format_real(1.5, false), "1.5");
        assert_eq!(format_real(3.0, false), "3.0");
        assert_eq!(format_real(-2.25, false), "(- 2.25)");
        assert_eq!(format_real(0.0, true), "0.0");
        assert_eq!(format_real(0.1, true), "0.1000000000000000055511151231257827021181583404541015625");
        assert_eq!(format_real(1e20, true), "100000000000000000000.0");
    }

    #[test]
    fn kleene_connectives() {
        let v = [1.0];
        let t = ConstraintExpr::var_cmp(x(), CmpOp::Gt, 0.0);
        let f = ConstraintExpr::var_cmp(x(), CmpOp::Lt, 0.0);
        let u = ConstraintExpr::var_cmp(x(), CmpOp::Lt, 1.0);
        assert_eq!(u.eval(&v, 1e-9), Truth::Unknown);
        assert_eq!(ConstraintExpr::Or(vec![u.clone(), t.clone()]).eval(&v, 1e-9), Truth::True);
        assert_eq!(ConstraintExpr::And(vec![u.clone(), f.clone()]).eval(&v, 1e-9), Truth::False);
        assert_eq!(ConstraintExpr::And(vec![u.clone(), t.clone()]).eval(&v, 1e-9), Truth::Unknown);
        assert_eq!(ConstraintExpr::Xor(vec![t.clone(), t.clone(), t]).eval(&v, 1e-9), Truth::True);
        assert_eq!(ConstraintExpr::implies(f, u).eval(&v, 1e-9), Truth::True);
        assert_eq!(ConstraintExpr::var_cmp(x(), CmpOp::Eq, 1.0 + 1e-12).eval(&v, 1e-9), Truth::True);
    }

    #[test]
    fn simplify_with_box() {
        let b = |_: VarId| Some((0.0, 1.0));
        let e = ConstraintExpr::And(vec![
            ConstraintExpr::var_cmp(x(), CmpOp::Le, 2.0),
            ConstraintExpr::Xor(vec![
                ConstraintExpr::var_cmp(x(), CmpOp::Gt, 5.0),
                ConstraintExpr::var_cmp(x(), CmpOp::Lt, 0.5),
                ConstraintExpr::Const(true),
            ]),
        ]);
        let s = e.simplify(&b);
        assert_eq!(s, ConstraintExpr::not(ConstraintExpr::var_cmp(x(), CmpOp::Lt, 0.5)));
        let none = |_: VarId| None;
        assert_eq!(ConstraintExpr::var_cmp(x(), CmpOp::Le, 2.0).simplify(&none), ConstraintExpr::var_cmp(x(), CmpOp::Le, 2.0));
    }

    #[test]
    fn printing() {
        let names = |v: VarId| format!("v{}", v.0);
        let p = Printer {
            names: &names,
            style: PrintStyle {
                exact: false,
                lower_xor: true,
            },
        };
        let e = ConstraintExpr::Xor(vec![
            ConstraintExpr::BoolVar(VarId(0)),
            ConstraintExpr::BoolVar(VarId(1)),
            ConstraintExpr::cmp(LinExpr::new(vec![(VarId(2), 2.0), (VarId(3), -1.0)], 0.0), CmpOp::Lt, -3.0),
        ]);
        assert_eq!(p.expr(&e), "(distinct v0 (distinct v1 (< (+ (* 2.0 v2) (* (- 1.0) v3)) (- 3.0))))");
        let c = ConstraintExpr::Cardinality {
            vars: vec![VarId(0), VarId(1)],
            bound: 1,
        };
        assert_eq!(p.expr(&c), "(<= (+ (ite v0 1.0 0.0) (ite v1 1.0 0.0)) 1.0)");
        let a = ConstraintExpr::AbsRatioBound {
            var: VarId(2),
            threshold: 0.1,
            reference: -20.0,
        };
        assert_eq!(p.expr(&a), "(and (< v2 2.0) (> v2 (- 2.0)))");
    }

    #[test]
    fn abs_ratio_uses_floor() {
        let e = ConstraintExpr::AbsRatioBound {
            var: x(),
            threshold: 0.5,
            reference: 0.0,
        };
        assert!(e.eval_exact(&[4e-7]));
        assert!(!e.eval_exact(&[6e-7]));
    }
}
