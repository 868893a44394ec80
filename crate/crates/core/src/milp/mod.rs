//! A small solver-agnostic MILP modeling layer.
//!
//! Models are append-only: variables and constraints can be added between
//! solves, never removed. Backends exploit this to re-solve incrementally.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Result};

#[cfg(feature = "highs")]
pub mod highs;
mod lp_format;

pub use lp_format::write_lp;

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a variable of one [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintRef(usize);

impl ConstraintRef {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Sparse affine expression `sum coef * var + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    terms: Vec<(Var, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn term(var: Var, coef: f64) -> Self {
        Self {
            terms: vec![(var, coef)],
            constant: 0.0,
        }
    }

    pub fn add(&mut self, var: Var, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn add_constant(&mut self, value: f64) -> &mut Self {
        self.constant += value;
        self
    }

    pub fn with(mut self, var: Var, coef: f64) -> Self {
        self.add(var, coef);
        self
    }

    pub fn terms(&self) -> &[(Var, f64)] {
        &self.terms
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    /// Merges repeated variables and drops zero coefficients.
    fn normalized(&self) -> Vec<(Var, f64)> {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(Var, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        merged
    }

    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }
}

/// A linear row `terms sense rhs`; constants were folded into `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization MILP.
#[derive(Debug)]
pub struct Model {
    id: u64,
    name: String,
    vars: Vec<VarDef>,
    constraints: Vec<Constraint>,
    objective: Vec<(Var, f64)>,
    objective_constant: f64,
    objective_revision: u64,
    num_nonzeros: usize,
    start: Option<Vec<f64>>,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            objective_constant: 0.0,
            objective_revision: 0,
            num_nonzeros: 0,
            start: None,
        }
    }

    /// Process-unique identity, used by backends to match cached state.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn add_variable(&mut self, kind: VarKind, lb: f64, ub: f64, name: impl Into<String>) -> Result<Var> {
        if lb.is_nan() || ub.is_nan() || lb > ub {
            return Err(invalid_input(format!("invalid bounds [{lb}, {ub}]")));
        }
        if lb == f64::INFINITY || ub == f64::NEG_INFINITY {
            return Err(invalid_input(format!("empty domain [{lb}, {ub}]")));
        }
        if kind == VarKind::Binary && (lb < 0.0 || ub > 1.0) {
            return Err(invalid_input(format!("binary variable with bounds [{lb}, {ub}]")));
        }
        self.vars.push(VarDef {
            kind,
            lb,
            ub,
            name: name.into(),
        });
        Ok(Var(self.vars.len() - 1))
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<Var> {
        self.add_variable(VarKind::Binary, 0.0, 1.0, name)
    }

    pub fn add_continuous(&mut self, lb: f64, ub: f64, name: impl Into<String>) -> Result<Var> {
        self.add_variable(VarKind::Continuous, lb, ub, name)
    }

    fn check_terms(&self, expr: &LinExpr) -> Result<()> {
        if let Some(&(v, _)) = expr.terms.iter().find(|(v, _)| v.0 >= self.vars.len()) {
            return Err(invalid_input(format!("unknown variable #{}", v.0)));
        }
        if expr.terms.iter().any(|t| !t.1.is_finite()) || !expr.constant.is_finite() {
            return Err(invalid_input("non-finite coefficient"));
        }
        Ok(())
    }

    /// Appends `expr sense rhs`.
    pub fn add_constraint(&mut self, expr: &LinExpr, sense: Sense, rhs: f64) -> Result<ConstraintRef> {
        self.check_terms(expr)?;
        if !rhs.is_finite() {
            return Err(invalid_input(format!("non-finite right-hand side {rhs}")));
        }
        let terms = expr.normalized();
        self.num_nonzeros += terms.len();
        self.constraints.push(Constraint {
            terms,
            sense,
            rhs: rhs - expr.constant,
        });
        Ok(ConstraintRef(self.constraints.len() - 1))
    }

    /// Replaces the objective (always minimized).
    pub fn set_objective(&mut self, expr: &LinExpr) -> Result<()> {
        self.check_terms(expr)?;
        self.objective = expr.normalized();
        self.objective_constant = expr.constant;
        self.objective_revision += 1;
        Ok(())
    }

    /// Suggests a starting point for the next solve, one value per variable.
    pub fn set_start(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.vars.len() {
            return Err(invalid_input(format!(
                "start has {} values for {} variables",
                values.len(),
                self.vars.len()
            )));
        }
        self.start = Some(values);
        Ok(())
    }

    pub fn clear_start(&mut self) {
        self.start = None;
    }

    /// The suggested start, if it still covers every variable.
    pub fn start(&self) -> Option<&[f64]> {
        self.start.as_deref().filter(|s| s.len() == self.vars.len())
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn var(&self, v: Var) -> &VarDef {
        &self.vars[v.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(Var, f64)] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    /// Bumped by every [`Model::set_objective`] call.
    pub fn objective_revision(&self) -> u64 {
        self.objective_revision
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.num_nonzeros
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Binary)
    }

    /// Dense objective coefficients, one per variable.
    pub fn objective_dense(&self) -> Vec<f64> {
        let mut costs = vec![0.0; self.vars.len()];
        for &(v, c) in &self.objective {
            costs[v.0] += c;
        }
        costs
    }

    /// Largest bound, integrality or row violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (def, &x) in self.vars.iter().zip(values) {
            worst = worst.max(def.lb - x).max(x - def.ub);
            if def.kind == VarKind::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub relative_mip_gap: f64,
    pub absolute_mip_gap: f64,
    pub time_limit_seconds: f64,
    pub threads: Option<usize>,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            relative_mip_gap: 1e-9,
            absolute_mip_gap: 1e-9,
            time_limit_seconds: 3600.0,
            threads: None,
        }
    }
}

impl SolveParams {
    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit_seconds = seconds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if [self.relative_mip_gap, self.absolute_mip_gap]
            .iter()
            .any(|g| g.is_nan() || *g < 0.0)
        {
            return Err(invalid_param("MIP gaps must be nonnegative"));
        }
        if self.time_limit_seconds.is_nan() || self.time_limit_seconds <= 0.0 {
            return Err(invalid_param(format!(
                "time limit {} must be positive",
                self.time_limit_seconds
            )));
        }
        if self.threads == Some(0) {
            return Err(invalid_param("threads must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeLimit,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::FeasibleTimeLimit => "FeasibleTimeLimit",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::Unbounded => "Unbounded",
            SolveStatus::Error => "Error",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Objective of the returned point (NaN without one).
    pub objective: f64,
    /// Proven lower bound on the optimum.
    pub bound: f64,
    pub values: Vec<f64>,
    pub wall_time_s: f64,
    pub nodes: Option<u64>,
    pub message: Option<String>,
}

impl SolveOutcome {
    pub fn failed(status: SolveStatus, message: impl Into<String>, wall_time_s: f64) -> Self {
        Self {
            status,
            objective: f64::NAN,
            bound: f64::NEG_INFINITY,
            values: Vec::new(),
            wall_time_s,
            nodes: None,
            message: Some(message.into()),
        }
    }

    pub fn value(&self, var: Var) -> f64 {
        self.values[var.0]
    }
}

/// An exact MIP solver able to re-solve an append-only [`Model`].
pub trait MipBackend {
    fn name(&self) -> &'static str;

    fn solve(&mut self, model: &Model, params: &SolveParams) -> Result<SolveOutcome>;
}

/// Name of the environment variable selecting the backend.
pub const BACKEND_ENV: &str = "PREMARSHAL_BACKEND";

pub fn available_backends() -> &'static [&'static str] {
    &[
        #[cfg(feature = "highs")]
        "highs",
    ]
}

pub fn create_backend(name: &str) -> Result<Box<dyn MipBackend>> {
    match name.to_ascii_lowercase().as_str() {
        #[cfg(feature = "highs")]
        "highs" => Ok(Box::new(highs::HighsBackend::new())),
        other => Err(invalid_param(format!(
            "unknown MIP backend '{other}', available: {:?}",
            available_backends()
        ))),
    }
}

/// Backend named by `PREMARSHAL_BACKEND`, defaulting to the first available.
pub fn backend_from_env() -> Result<Box<dyn MipBackend>> {
    match std::env::var(BACKEND_ENV) {
        Ok(name) if !name.trim().is_empty() => create_backend(name.trim()),
        _ => create_backend(
            available_backends()
                .first()
                .ok_or_else(|| invalid_param("no MIP backend compiled in"))?,
        ),
    }
}
