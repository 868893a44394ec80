//! Adapter for the HiGHS MIP solver through its C API.
//!
//! The adapter keeps one HiGHS instance per model and only pushes the
//! columns and rows appended since the previous solve.

use std::ffi::{c_void, CString};
use std::os::raw::c_int;
use std::ptr;
use std::time::Instant;

use highs_sys as ffi;

use super::{MipBackend, Model, Sense, SolveOutcome, SolveParams, SolveStatus, VarKind};
use crate::error::{Error, Result};

/// Extra HiGHS options as `name=value` pairs separated by commas.
pub const OPTIONS_ENV: &str = "PREMARSHAL_HIGHS_OPTIONS";

struct Session {
    handle: *mut c_void,
    model_id: u64,
    num_cols: usize,
    num_rows: usize,
    objective_revision: Option<u64>,
}

// SAFETY: a HiGHS instance has no thread affinity; the session is owned by
// exactly one backend and never shared.
unsafe impl Send for Session {}

impl Drop for Session {
    fn drop(&mut self) {
        // SAFETY: handle came from Highs_create and is destroyed once.
        unsafe { ffi::Highs_destroy(self.handle) };
    }
}

fn check(status: ffi::HighsInt, what: &str) -> Result<()> {
    if status == ffi::kHighsStatusError {
        Err(Error::Backend(format!("HiGHS call failed: {what}")))
    } else {
        Ok(())
    }
}

fn to_highs_int(n: usize) -> Result<ffi::HighsInt> {
    ffi::HighsInt::try_from(n).map_err(|_| Error::TooLarge(format!("{n} exceeds HiGHS index range")))
}

impl Session {
    fn new(model_id: u64) -> Result<Self> {
        // SAFETY: plain constructor; null is checked below.
        let handle = unsafe { ffi::Highs_create() };
        if handle.is_null() {
            return Err(Error::Backend("Highs_create returned null".into()));
        }
        let session = Self {
            handle,
            model_id,
            num_cols: 0,
            num_rows: 0,
            objective_revision: None,
        };
        session.set_bool("output_flag", false)?;
        Ok(session)
    }

    fn set_bool(&self, option: &str, value: bool) -> Result<()> {
        let name = CString::new(option).expect("option name");
        // SAFETY: valid handle and NUL-terminated option name.
        check(
            unsafe { ffi::Highs_setBoolOptionValue(self.handle, name.as_ptr(), value as c_int) },
            option,
        )
    }

    fn set_double(&self, option: &str, value: f64) -> Result<()> {
        let name = CString::new(option).expect("option name");
        // SAFETY: as above.
        check(
            unsafe { ffi::Highs_setDoubleOptionValue(self.handle, name.as_ptr(), value) },
            option,
        )
    }

    fn set_int(&self, option: &str, value: ffi::HighsInt) -> Result<()> {
        let name = CString::new(option).expect("option name");
        // SAFETY: as above.
        check(
            unsafe { ffi::Highs_setIntOptionValue(self.handle, name.as_ptr(), value) },
            option,
        )
    }

    /// Sets any option from its textual value, parsed by the option's declared type.
    fn set_any(&self, option: &str, value: &str) -> Result<()> {
        let name = CString::new(option).map_err(|_| Error::InvalidParameter(option.into()))?;
        let mut kind: ffi::HighsInt = -1;
        // SAFETY: valid handle, NUL-terminated name, out-pointer to a local.
        check(
            unsafe { ffi::Highs_getOptionType(self.handle, name.as_ptr(), &mut kind) },
            option,
        )?;
        let bad = || Error::InvalidParameter(format!("option {option}: cannot parse '{value}'"));
        match kind {
            ffi::kHighsOptionTypeBool => {
                let flag = match value {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    _ => return Err(bad()),
                };
                self.set_bool(option, flag)
            }
            ffi::kHighsOptionTypeInt => self.set_int(option, value.parse().map_err(|_| bad())?),
            ffi::kHighsOptionTypeDouble => self.set_double(option, value.parse().map_err(|_| bad())?),
            _ => {
                if value.contains('\0') {
                    return Err(bad());
                }
                self.set_string(option, value)
            }
        }
    }

    fn set_string(&self, option: &str, value: &str) -> Result<()> {
        let name = CString::new(option).expect("option name");
        let value = CString::new(value).expect("option value");
        // SAFETY: as above.
        check(
            unsafe { ffi::Highs_setStringOptionValue(self.handle, name.as_ptr(), value.as_ptr()) },
            option,
        )
    }

    fn double_info(&self, info: &str) -> Option<f64> {
        let name = CString::new(info).expect("info name");
        let mut value = 0.0;
        // SAFETY: valid handle, out-pointer to a local.
        let status = unsafe { ffi::Highs_getDoubleInfoValue(self.handle, name.as_ptr(), &mut value) };
        (status == ffi::kHighsStatusOk).then_some(value)
    }

    fn int_info(&self, info: &str) -> Option<ffi::HighsInt> {
        let name = CString::new(info).expect("info name");
        let mut value: ffi::HighsInt = 0;
        // SAFETY: as above.
        let status = unsafe { ffi::Highs_getIntInfoValue(self.handle, name.as_ptr(), &mut value) };
        (status == ffi::kHighsStatusOk).then_some(value)
    }

    fn int64_info(&self, info: &str) -> Option<i64> {
        let name = CString::new(info).expect("info name");
        let mut value: i64 = 0;
        // SAFETY: as above.
        let status = unsafe { ffi::Highs_getInt64InfoValue(self.handle, name.as_ptr(), &mut value) };
        (status == ffi::kHighsStatusOk).then_some(value)
    }

    /// Pushes columns, rows and objective changes made since the last sync.
    fn sync(&mut self, model: &Model) -> Result<()> {
        // SAFETY: returns a constant.
        let inf = unsafe { ffi::Highs_getInfinity(self.handle) };
        let clamp = |x: f64| x.clamp(-inf, inf);

        let new_vars = &model.vars()[self.num_cols..];
        if !new_vars.is_empty() {
            let lower: Vec<f64> = new_vars.iter().map(|d| clamp(d.lb)).collect();
            let upper: Vec<f64> = new_vars.iter().map(|d| clamp(d.ub)).collect();
            let costs = vec![0.0; new_vars.len()];
            // SAFETY: arrays hold one entry per new column; the columns are
            // empty so the sparse arrays may be null.
            check(
                unsafe {
                    ffi::Highs_addCols(
                        self.handle,
                        to_highs_int(new_vars.len())?,
                        costs.as_ptr(),
                        lower.as_ptr(),
                        upper.as_ptr(),
                        0,
                        ptr::null(),
                        ptr::null(),
                        ptr::null(),
                    )
                },
                "addCols",
            )?;
            for (offset, def) in new_vars.iter().enumerate() {
                if def.kind == VarKind::Binary {
                    let col = to_highs_int(self.num_cols + offset)?;
                    // SAFETY: the column was just added.
                    check(
                        unsafe { ffi::Highs_changeColIntegrality(self.handle, col, ffi::kHighsVarTypeInteger) },
                        "changeColIntegrality",
                    )?;
                }
            }
        }

        let new_rows = &model.constraints()[self.num_rows..];
        if !new_rows.is_empty() {
            let mut lower = Vec::with_capacity(new_rows.len());
            let mut upper = Vec::with_capacity(new_rows.len());
            let mut starts = Vec::with_capacity(new_rows.len());
            let mut index = Vec::new();
            let mut value = Vec::new();
            for c in new_rows {
                starts.push(to_highs_int(index.len())?);
                for &(v, a) in &c.terms {
                    index.push(to_highs_int(v.index())?);
                    value.push(a);
                }
                let (lo, up) = match c.sense {
                    Sense::Le => (-inf, c.rhs),
                    Sense::Ge => (c.rhs, inf),
                    Sense::Eq => (c.rhs, c.rhs),
                };
                lower.push(lo);
                upper.push(up);
            }
            // SAFETY: row-wise CSR arrays consistent with the counts passed.
            check(
                unsafe {
                    ffi::Highs_addRows(
                        self.handle,
                        to_highs_int(new_rows.len())?,
                        lower.as_ptr(),
                        upper.as_ptr(),
                        to_highs_int(index.len())?,
                        starts.as_ptr(),
                        index.as_ptr(),
                        value.as_ptr(),
                    )
                },
                "addRows",
            )?;
        }

        let new_cols = model.num_vars() > self.num_cols;
        if (new_cols || self.objective_revision != Some(model.objective_revision())) && model.num_vars() > 0 {
            let costs = model.objective_dense();
            // SAFETY: costs holds one entry per column in [0, num_vars).
            check(
                unsafe {
                    ffi::Highs_changeColsCostByRange(
                        self.handle,
                        0,
                        to_highs_int(model.num_vars() - 1)?,
                        costs.as_ptr(),
                    )
                },
                "changeColsCostByRange",
            )?;
            // SAFETY: plain setter.
            check(
                unsafe { ffi::Highs_changeObjectiveOffset(self.handle, model.objective_constant()) },
                "changeObjectiveOffset",
            )?;
        }
        self.num_cols = model.num_vars();
        self.num_rows = model.num_constraints();
        self.objective_revision = Some(model.objective_revision());
        Ok(())
    }

    fn run(&self) -> Result<ffi::HighsInt> {
        // SAFETY: valid handle.
        let status = unsafe { ffi::Highs_run(self.handle) };
        check(status, "run")?;
        // SAFETY: valid handle.
        Ok(unsafe { ffi::Highs_getModelStatus(self.handle) })
    }

    fn primal_values(&self) -> Vec<f64> {
        let mut col_value = vec![0.0; self.num_cols];
        let mut col_dual = vec![0.0; self.num_cols];
        let mut row_value = vec![0.0; self.num_rows];
        let mut row_dual = vec![0.0; self.num_rows];
        // SAFETY: buffers sized to the current column and row counts.
        unsafe {
            ffi::Highs_getSolution(
                self.handle,
                col_value.as_mut_ptr(),
                col_dual.as_mut_ptr(),
                row_value.as_mut_ptr(),
                row_dual.as_mut_ptr(),
            );
        }
        col_value
    }

    fn has_feasible_point(&self) -> bool {
        self.int_info("primal_solution_status") == Some(ffi::kHighsSolutionStatusFeasible)
    }
}

/// Exact MIP backend built on HiGHS.
#[derive(Default)]
pub struct HighsBackend {
    session: Option<Session>,
}

impl HighsBackend {
    pub fn new() -> Self {
        Self::default()
    }

    fn session_for(&mut self, model: &Model) -> Result<&mut Session> {
        let stale = match &self.session {
            Some(s) => {
                s.model_id != model.id() || s.num_cols > model.num_vars() || s.num_rows > model.num_constraints()
            }
            None => true,
        };
        if stale {
            self.session = Some(Session::new(model.id())?);
        }
        Ok(self.session.as_mut().expect("session present"))
    }
}

impl MipBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&mut self, model: &Model, params: &SolveParams) -> Result<SolveOutcome> {
        params.validate()?;
        let start = Instant::now();
        if model.num_vars() == 0 {
            return Ok(solve_without_columns(model, start));
        }
        let session = self.session_for(model)?;
        session.sync(model)?;
        session.set_double("mip_rel_gap", params.relative_mip_gap)?;
        session.set_double("mip_abs_gap", params.absolute_mip_gap)?;
        session.set_double("time_limit", params.time_limit_seconds)?;
        if let Some(threads) = params.threads {
            session.set_int("threads", to_highs_int(threads)?)?;
        }
        session.set_string("presolve", "choose")?;
        if let Ok(extra) = std::env::var(OPTIONS_ENV) {
            for pair in extra.split(',').filter(|p| !p.trim().is_empty()) {
                let (key, value) = pair.split_once('=').ok_or_else(|| {
                    Error::InvalidParameter(format!("{OPTIONS_ENV}: expected key=value, got '{pair}'"))
                })?;
                session.set_any(key.trim(), value.trim())?;
            }
        }
        if let Some(start) = model.start() {
            // SAFETY: one value per column; the other arrays are optional.
            let status = unsafe {
                ffi::Highs_setSolution(session.handle, start.as_ptr(), ptr::null(), ptr::null(), ptr::null())
            };
            check(status, "setSolution")?;
        }

        let mut status = session.run()?;
        if status == ffi::kHighsModelStatusUnboundedOrInfeasible {
            // presolve cannot tell the two apart; ask the simplex directly
            session.set_string("presolve", "off")?;
            status = session.run()?;
            session.set_string("presolve", "choose")?;
        }
        let wall_time_s = start.elapsed().as_secs_f64();

        let finish = |status: SolveStatus, session: &Session, message: Option<String>| {
            let values = session.primal_values();
            let objective = model
                .objective_dense()
                .iter()
                .zip(&values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
                + model.objective_constant();
            let bound = if model.has_integers() {
                session.double_info("mip_dual_bound").unwrap_or(f64::NEG_INFINITY)
            } else if status == SolveStatus::Optimal {
                objective
            } else {
                f64::NEG_INFINITY
            };
            let nodes = session.int64_info("mip_node_count").map(|n| n.max(0) as u64);
            SolveOutcome {
                status,
                objective,
                bound: if status == SolveStatus::Optimal {
                    bound.min(objective)
                } else {
                    bound
                },
                values,
                wall_time_s,
                nodes,
                message,
            }
        };

        let outcome = match status {
            ffi::kHighsModelStatusOptimal => finish(SolveStatus::Optimal, session, None),
            ffi::kHighsModelStatusInfeasible => {
                SolveOutcome::failed(SolveStatus::Infeasible, "model is infeasible", wall_time_s)
            }
            ffi::kHighsModelStatusUnbounded => {
                SolveOutcome::failed(SolveStatus::Unbounded, "model is unbounded", wall_time_s)
            }
            ffi::kHighsModelStatusUnboundedOrInfeasible => {
                SolveOutcome::failed(SolveStatus::Error, "model is unbounded or infeasible", wall_time_s)
            }
            ffi::kHighsModelStatusTimeLimit
            | ffi::kHighsModelStatusIterationLimit
            | ffi::kHighsModelStatusSolutionLimit
            | ffi::kHighsModelStatusInterrupt => {
                if session.has_feasible_point() {
                    finish(
                        SolveStatus::FeasibleTimeLimit,
                        session,
                        Some("limit reached; returning incumbent".into()),
                    )
                } else {
                    SolveOutcome::failed(
                        SolveStatus::Error,
                        "limit reached without a feasible solution",
                        wall_time_s,
                    )
                }
            }
            other => SolveOutcome::failed(
                SolveStatus::Error,
                format!("HiGHS finished with model status {other}"),
                wall_time_s,
            ),
        };
        Ok(outcome)
    }
}

/// Constant objective; feasible iff every (empty) row holds for zero.
fn solve_without_columns(model: &Model, start: Instant) -> SolveOutcome {
    let violated = model.constraints().iter().any(|c| match c.sense {
        Sense::Le => 0.0 > c.rhs,
        Sense::Ge => 0.0 < c.rhs,
        Sense::Eq => c.rhs != 0.0,
    });
    let wall_time_s = start.elapsed().as_secs_f64();
    if violated {
        return SolveOutcome::failed(SolveStatus::Infeasible, "constant row violated", wall_time_s);
    }
    SolveOutcome {
        status: SolveStatus::Optimal,
        objective: model.objective_constant(),
        bound: model.objective_constant(),
        values: Vec::new(),
        wall_time_s,
        nodes: Some(0),
        message: None,
    }
}
