use std::collections::HashMap;
use std::fmt::Write as _;

use num::{BigInt, BigRational, ToPrimitive, Zero};

use super::SolveError;
use crate::cir::{Csp, PrintStyle, Printer, Sort, VarId};

/// Quotes a symbol unless it is a plain SMT-LIB simple symbol.
pub fn smt_symbol(name: &str) -> String {
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_.~!@$%^&*+-=<>?/".contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{}|", name.replace(['|', '\\'], "_"))
    }
}

/// SMT-LIB v2 script: declarations, one assert per assertion, `check-sat`,
/// and `get-model` when anything is declared. Constants are printed as
/// their exact decimal expansion, so the script states the same problem the
/// in-process evaluator checks. Xor becomes a balanced tree of `distinct`.
pub fn emit_smtlib(csp: &Csp) -> String {
    let symbols: Vec<String> = csp.symbols.iter().map(|(_, v)| smt_symbol(&v.name)).collect();
    let names = |v: VarId| symbols[v.index()].clone();
    let printer = Printer {
        names: &names,
        style: PrintStyle {
            exact: true,
            lower_xor: true,
        },
    };
    let mut out = String::new();
    out.push_str("(set-option :produce-models true)\n(set-logic QF_LRA)\n");
    for ((_, info), sym) in csp.symbols.iter().zip(&symbols) {
        let sort = match info.sort {
            Sort::Real => "Real",
            Sort::Bool => "Bool",
        };
        let _ = writeln!(out, "(declare-const {sym} {sort})");
    }
    for a in &csp.assertions {
        let _ = writeln!(out, "(assert {})", printer.expr(a));
    }
    out.push_str("(check-sat)\n");
    if !csp.symbols.is_empty() {
        out.push_str("(get-model)\n");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelValue {
    Real(f64),
    Bool(bool),
}

impl ModelValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ModelValue::Real(v) => v,
            ModelValue::Bool(b) => f64::from(u8::from(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            }
            '|' => {
                cur.push('|');
                for d in chars.by_ref() {
                    cur.push(d);
                    if d == '|' {
                        break;
                    }
                }
            }
            ';' => {
                for d in chars.by_ref() {
                    if d == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_sexps(text: &str) -> Result<Vec<Sexp>, SolveError> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    for tok in tokenize(text) {
        match tok.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().unwrap();
                let parent = stack
                    .last_mut()
                    .ok_or_else(|| SolveError::Parse("unbalanced ')'".into()))?;
                parent.push(Sexp::List(done));
            }
            _ => stack.last_mut().unwrap().push(Sexp::Atom(tok)),
        }
    }
    if stack.len() != 1 {
        return Err(SolveError::Parse("unbalanced '('".into()));
    }
    Ok(stack.pop().unwrap())
}

fn decimal(s: &str) -> Result<BigRational, SolveError> {
    let bad = || SolveError::Parse(format!("bad numeral {s}"));
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let num: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let den = num::pow(BigInt::from(10), frac.len());
    Ok(BigRational::new(num, den))
}

fn rational(e: &Sexp) -> Result<BigRational, SolveError> {
    match e {
        Sexp::Atom(a) => decimal(a),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => Ok(-rational(x)?),
            [Sexp::Atom(op), p, q] if op == "/" => {
                let q = rational(q)?;
                if q.is_zero() {
                    return Err(SolveError::Parse("division by zero in model".into()));
                }
                Ok(rational(p)? / q)
            }
            _ => Err(SolveError::Parse(format!("unsupported model term {e:?}"))),
        },
    }
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('|').and_then(|t| t.strip_suffix('|')).unwrap_or(s)
}

/// Values from a `get-model` response, keyed by unquoted symbol. Rationals
/// are rounded to the nearest double.
pub fn parse_model(text: &str) -> Result<HashMap<String, ModelValue>, SolveError> {
    let mut out = HashMap::new();
    let mut queue = parse_sexps(text)?;
    while let Some(e) = queue.pop() {
        let Sexp::List(items) = e else { continue };
        match items.as_slice() {
            [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(args), Sexp::Atom(sort), value] if kw == "define-fun" => {
                if !args.is_empty() {
                    continue;
                }
                let v = match sort.as_str() {
                    "Bool" => match value {
                        Sexp::Atom(t) if t == "true" => ModelValue::Bool(true),
                        Sexp::Atom(t) if t == "false" => ModelValue::Bool(false),
                        _ => return Err(SolveError::Parse(format!("bad boolean for {name}"))),
                    },
                    "Real" | "Int" => {
                        let r = rational(value)?;
                        let f = r
                            .to_f64()
                            .filter(|f| f.is_finite())
                            .ok_or_else(|| SolveError::Parse(format!("value of {name} out of range")))?;
                        ModelValue::Real(f)
                    }
                    other => return Err(SolveError::Parse(format!("unsupported sort {other}"))),
                };
                out.insert(unquote(name).to_string(), v);
            }
            _ => queue.extend(items),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::{CmpOp, ConstraintExpr, CspBuilder, VarRole};

    #[test]
    fn rational_and_negative_values() {
        let m = parse_model(
            "(\n  (define-fun x () Real\n    (/ 3 2))\n  (define-fun y () Real (- (/ 1.0 4.0)))\n  (define-fun z () Real (/ (- 5.0) 2.0))\n  (define-fun a () Bool true)\n  (define-fun |odd name| () Real 7.0)\n)",
        )
        .unwrap();
        assert_eq!(m["x"], ModelValue::Real(1.5));
        assert_eq!(m["y"], ModelValue::Real(-0.25));
        assert_eq!(m["z"], ModelValue::Real(-2.5));
        assert_eq!(m["a"], ModelValue::Bool(true));
        assert_eq!(m["odd name"], ModelValue::Real(7.0));
    }

    #[test]
    fn large_rationals_round_correctly() {
        let m = parse_model("((define-fun x () Real (/ 1000000000000000000000000000000000000000000001.0 10000000000000000000000000000000000000000000.0)))").unwrap();
        assert_eq!(m["x"], ModelValue::Real(100.0));
        assert!(parse_model("((define-fun x () Real (/ 1.0 0.0)))").is_err());
        assert!(parse_model("((define-fun x () Real 1.0)").is_err());
    }

    #[test]
    fn script_shape() {
        let mut b = CspBuilder::new();
        let x = b.real("x", VarRole::Free);
        b.assert(ConstraintExpr::var_cmp(x, CmpOp::Gt, 1.0));
        let s = emit_smtlib(&b.finish().unwrap());
        assert_eq!(s.matches("declare-const").count(), 1);
        assert!(s.contains("(declare-const x Real)"));
        assert_eq!(s.matches("(assert ").count(), 1);
        assert!(s.contains("(assert (> x 1.0))\n(check-sat)\n(get-model)"));
        let empty = emit_smtlib(&CspBuilder::new().finish().unwrap());
        assert!(empty.ends_with("(check-sat)\n"));
        assert!(!empty.contains("assert"));
    }

    #[test]
    fn symbols_are_quoted_when_needed() {
        assert_eq!(smt_symbol("alt_0"), "alt_0");
        assert_eq!(smt_symbol("heart rate"), "|heart rate|");
        assert_eq!(smt_symbol("0x"), "|0x|");
    }
}
