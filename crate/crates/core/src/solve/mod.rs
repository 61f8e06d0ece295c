//! Solver backends for attack CSPs. Every `Sat` answer is re-checked by
//! direct evaluation before it is returned.

mod builtin;
mod smtlib;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::cir::{ConstraintExpr, Csp};

pub use builtin::{builtin_search, SearchBudget};
pub use smtlib::{emit_smtlib, parse_model, smt_symbol, ModelValue};

/// Environment variable naming the external solver binary.
pub const SOLVER_ENV: &str = "SHS_SOLVER";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("solver backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("solver model fails assertion {index}: {detail}")]
    MalformedModel { index: usize, detail: String },
    #[error("cannot parse solver output: {0}")]
    Parse(String),
    #[error("variable {0} has no alteration bound to search within")]
    NoBoxBounds(String),
    #[error("solver i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum UnknownReason {
    Timeout,
    IncompleteBackend,
    BackendError(String),
    /// A satisfying assignment did not survive checking against the live models.
    ValidationFailed(String),
}

impl std::fmt::Display for UnknownReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UnknownReason::Timeout => write!(f, "timeout"),
            UnknownReason::IncompleteBackend => write!(f, "incomplete backend"),
            UnknownReason::BackendError(s) => write!(f, "backend error: {s}"),
            UnknownReason::ValidationFailed(s) => write!(f, "validation failed: {s}"),
        }
    }
}

/// `Sat` carries one value per declared variable, booleans as 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveResult {
    Sat(Vec<f64>),
    Unsat,
    Unknown(UnknownReason),
}

impl SolveResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveResult::Sat(_))
    }

    pub fn verdict(&self) -> &'static str {
        match self {
            SolveResult::Sat(_) => "sat",
            SolveResult::Unsat => "unsat",
            SolveResult::Unknown(_) => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    /// SMT-LIB solver process reading the script on stdin (z3-compatible flags).
    External { path: PathBuf },
    Builtin { budget: SearchBudget, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    pub timeout: Duration,
}

impl BackendDescriptor {
    pub fn external(path: impl Into<PathBuf>, timeout: Duration) -> Self {
        let path = path.into();
        Self {
            name: format!("smtlib:{}", path.display()),
            kind: BackendKind::External { path },
            timeout,
        }
    }

    /// External solver from `explicit`, else [`SOLVER_ENV`], else `z3` on
    /// `PATH`.
    pub fn locate_external(explicit: Option<&Path>, timeout: Duration) -> Result<Self, SolveError> {
        let env = std::env::var_os(SOLVER_ENV).map(PathBuf::from);
        let wanted = explicit
            .map(Path::to_path_buf)
            .or(env)
            .unwrap_or_else(|| PathBuf::from("z3"));
        let found = resolve_binary(&wanted)
            .ok_or_else(|| SolveError::BackendUnavailable(format!("solver binary {} not found", wanted.display())))?;
        Ok(Self::external(found, timeout))
    }

    pub fn builtin(budget: SearchBudget, seed: u64) -> Self {
        Self {
            name: "builtin".into(),
            kind: BackendKind::Builtin { budget, seed },
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Complete backends may answer `Unsat`.
    pub fn complete(&self) -> bool {
        matches!(self.kind, BackendKind::External { .. })
    }
}

fn resolve_binary(p: &Path) -> Option<PathBuf> {
    if p.components().count() > 1 || p.is_absolute() {
        return p.is_file().then(|| p.to_path_buf());
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|d| d.join(p))
            .find(|c| c.is_file())
    })
}

/// Solves `csp` with `backend`. `Sat` assignments are complete and pass
/// [`Csp::check`]; an external model that fails it is a
/// [`SolveError::MalformedModel`].
pub fn solve(csp: &Csp, backend: &BackendDescriptor) -> Result<SolveResult, SolveError> {
    if csp.assertions.contains(&ConstraintExpr::Const(false)) {
        return Ok(if backend.complete() {
            SolveResult::Unsat
        } else {
            SolveResult::Unknown(UnknownReason::IncompleteBackend)
        });
    }
    match &backend.kind {
        BackendKind::Builtin { budget, seed } => builtin_search(csp, *budget, *seed),
        BackendKind::External { path } => solve_external(csp, path, backend.timeout),
    }
}

fn solve_external(csp: &Csp, path: &Path, timeout: Duration) -> Result<SolveResult, SolveError> {
    let script = emit_smtlib(csp);
    let secs = timeout.as_secs().max(1);
    let mut child = Command::new(path)
        .arg("-in")
        .arg("-smt2")
        .arg(format!("-T:{secs}"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| SolveError::BackendUnavailable(format!("{}: {e}", path.display())))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = std::thread::spawn(move || {
        let r = stdin.write_all(script.as_bytes());
        drop(stdin);
        r
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        stdout.read_to_string(&mut s).map(|_| s)
    });
    let mut stderr = child.stderr.take().expect("piped stderr");
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    // Hard kill shortly after the solver's own limit.
    let status = match child.wait_timeout(timeout + Duration::from_secs(2))? {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(SolveResult::Unknown(UnknownReason::Timeout));
        }
    };
    // A closed pipe just means the solver stopped reading early.
    let _ = writer.join();
    let out = reader.join().expect("reader thread")?;
    let err = err_reader.join().unwrap_or_default();
    interpret(csp, &out, &err, status.success())
}

fn interpret(csp: &Csp, out: &str, err: &str, exited_ok: bool) -> Result<SolveResult, SolveError> {
    let mut lines = out.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().unwrap_or("");
    match first {
        "unsat" => Ok(SolveResult::Unsat),
        "timeout" => Ok(SolveResult::Unknown(UnknownReason::Timeout)),
        "unknown" => Ok(SolveResult::Unknown(UnknownReason::BackendError(
            "solver answered unknown".into(),
        ))),
        "sat" => {
            let rest: String = out.split_once("sat").map(|(_, r)| r.to_string()).unwrap_or_default();
            let values = assignment_from_model(csp, &rest)?;
            match csp.check(&values) {
                Ok(()) => Ok(SolveResult::Sat(values)),
                Err(index) => Err(SolveError::MalformedModel {
                    index,
                    detail: csp
                        .assertions
                        .get(index)
                        .map(|a| format!("{a:?}").chars().take(200).collect())
                        .unwrap_or_default(),
                }),
            }
        }
        _ => {
            let msg = format!("{} {}", first, err.trim());
            if exited_ok {
                Err(SolveError::Parse(format!("unexpected solver output: {msg}")))
            } else {
                Ok(SolveResult::Unknown(UnknownReason::BackendError(msg.trim().to_string())))
            }
        }
    }
}

/// Solver model mapped onto the CSP's variables. Variables the solver
/// omitted are don't-cares and take 0 / false.
fn assignment_from_model(csp: &Csp, text: &str) -> Result<Vec<f64>, SolveError> {
    let model = parse_model(text)?;
    Ok(csp
        .symbols
        .iter()
        .map(|(_, info)| model.get(&info.name).map_or(0.0, |v| v.as_f64()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cir::{CmpOp, ConstraintExpr, CspBuilder, VarRole};

    fn two(lo: f64, hi: f64) -> Csp {
        let mut b = CspBuilder::new();
        let x = b.real("x", VarRole::Free);
        b.assert(ConstraintExpr::var_cmp(x, CmpOp::Gt, lo));
        b.assert(ConstraintExpr::var_cmp(x, CmpOp::Lt, hi));
        b.finish().unwrap()
    }

    #[test]
    fn interpret_outputs() {
        let csp = two(1.0, 2.0);
        assert_eq!(interpret(&csp, "unsat\n", "", true).unwrap(), SolveResult::Unsat);
        assert_eq!(
            interpret(&csp, "sat\n((define-fun x () Real (/ 3.0 2.0)))", "", true).unwrap(),
            SolveResult::Sat(vec![1.5])
        );
        assert!(matches!(
            interpret(&csp, "sat\n((define-fun x () Real 5.0))", "", true),
            Err(SolveError::MalformedModel { index: 1, .. })
        ));
        assert_eq!(
            interpret(&csp, "timeout\n", "", false).unwrap(),
            SolveResult::Unknown(UnknownReason::Timeout)
        );
    }

    #[test]
    fn missing_binary_is_unavailable() {
        let r = BackendDescriptor::locate_external(Some(Path::new("/nonexistent/solver")), DEFAULT_TIMEOUT);
        assert!(matches!(r, Err(SolveError::BackendUnavailable(_))));
    }

    #[test]
    fn builtin_is_incomplete() {
        assert!(!BackendDescriptor::builtin(SearchBudget::default(), 0).complete());
        assert!(BackendDescriptor::external("/usr/bin/z3", DEFAULT_TIMEOUT).complete());
    }
}
