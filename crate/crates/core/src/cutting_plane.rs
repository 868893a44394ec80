//! Exact cutting-plane method for the CV@R layout problem.
//!
//! The master problem minimizes `gamma + u` over layouts, with misplacement
//! blocks only for scenarios that have appeared in some cut. Each iteration
//! evaluates the master's layout exactly, collects the scenarios whose loss
//! exceeds the master's `gamma`, and adds one aggregated cut
//! `u >= 1/(1-alpha) sum_{j in G} p_j (sum z_j - gamma)` over them.

use std::collections::HashSet;
use std::io::{self, Write};
use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::domain::{count_misplaced, ArrivalOrder, Layout, ScenarioSet};
use crate::error::{invalid_param, Error, Result};
use crate::formulation::{
    build_layout_constraints, build_misplacement_block, decode_layout, evaluate_layout_cvar, fill_layout_values,
    CvarProblem, LayoutVars, MisplacementBlock, SolvedLayout,
};
use crate::milp::{LinExpr, MipBackend, Model, SolveParams, SolveStatus, Var};
use crate::risk::scenario_losses;

/// Loss margin above `gamma` for a scenario to enter a cut.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;
/// Gap accepted when a cut repeats and the loop cannot progress.
pub const STALL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutParams {
    /// Relative gap `(UB - LB) / UB` at which the loop stops.
    pub epsilon: f64,
    /// Absolute gap used instead when `UB <= absolute_epsilon`.
    pub absolute_epsilon: f64,
    /// Iteration cap; `None` means `10 |J|`.
    pub max_iterations: Option<usize>,
    pub time_limit_seconds: f64,
    /// Gaps and threads for each master solve.
    pub master: SolveParams,
}

impl Default for CutParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            absolute_epsilon: 1e-9,
            max_iterations: None,
            time_limit_seconds: 3600.0,
            master: SolveParams::default(),
        }
    }
}

impl CutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid_param(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.absolute_epsilon >= 0.0 && self.absolute_epsilon.is_finite()) {
            return Err(invalid_param(format!(
                "absolute_epsilon must be >= 0, got {}",
                self.absolute_epsilon
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(invalid_param("max_iterations must be positive"));
        }
        if self.time_limit_seconds.is_nan() || self.time_limit_seconds <= 0.0 {
            return Err(invalid_param("time limit must be positive"));
        }
        self.master.validate()
    }

    fn iteration_cap(&self, num_scenarios: usize) -> usize {
        self.max_iterations.unwrap_or(10 * num_scenarios.max(1))
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    /// Scenarios in the cut added at this iteration (0 when none was added).
    pub cut_size: usize,
    /// Misplacement blocks added at this iteration.
    pub new_blocks: usize,
    pub master_time_s: f64,
}

/// Progress of the cutting-plane loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterState {
    /// Index of the last master solved (0 for the initial master).
    pub iteration: usize,
    /// Scenario indices of every cut, `subsets[0]` being the initial one.
    pub subsets: Vec<Vec<usize>>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub incumbent: Option<Layout>,
    pub log: Vec<IterationRecord>,
    /// The scheduled order is not a scenario and entered as a zero-weight block.
    pub scheduled_pseudo_scenario: bool,
    /// Some master stopped at a limit, so the lower bound is its proven bound.
    pub bound_from_limit: bool,
    /// A repeated or empty cut ended the loop before the gap test.
    pub stalled: bool,
    pub total_nodes: u64,
}

impl MasterState {
    /// The gap reported in the log.
    pub fn gap(&self, params: &CutParams) -> f64 {
        gap_of(self.lower_bound, self.upper_bound, params.absolute_epsilon)
    }

    pub fn num_blocks(&self) -> usize {
        let mut seen = HashSet::new();
        self.subsets.iter().flatten().for_each(|j| {
            seen.insert(*j);
        });
        seen.len()
    }
}

fn gap_of(lb: f64, ub: f64, absolute_epsilon: f64) -> f64 {
    if ub.is_infinite() {
        f64::INFINITY
    } else if ub <= absolute_epsilon {
        (ub - lb).max(0.0)
    } else {
        ((ub - lb) / ub).max(0.0)
    }
}

fn converged(lb: f64, ub: f64, params: &CutParams) -> bool {
    if ub.is_infinite() {
        false
    } else if ub <= params.absolute_epsilon {
        ub - lb <= params.absolute_epsilon
    } else {
        (ub - lb) / ub <= params.epsilon
    }
}

/// The relaxed master problem.
#[derive(Debug)]
pub struct MasterModel {
    pub model: Model,
    pub x: LayoutVars,
    pub gamma: Var,
    pub u: Var,
    blocks: Vec<Option<MisplacementBlock>>,
    pseudo_block: Option<MisplacementBlock>,
}

impl MasterModel {
    /// The misplacement block of scenario `j`, if it was added.
    pub fn block(&self, j: usize) -> Option<&MisplacementBlock> {
        self.blocks[j].as_ref()
    }

    pub fn pseudo_block(&self) -> Option<&MisplacementBlock> {
        self.pseudo_block.as_ref()
    }

    fn ensure_block(&mut self, problem: &CvarProblem, j: usize) -> Result<bool> {
        if self.blocks[j].is_some() {
            return Ok(false);
        }
        let order = &problem.scenarios().scenarios()[j].order;
        let block = build_misplacement_block(&mut self.model, &self.x, order, &(j + 1).to_string())?;
        self.blocks[j] = Some(block);
        Ok(true)
    }

    /// A feasible point of the master placing `layout`, with `gamma` at its V@R.
    pub fn start_point(&self, problem: &CvarProblem, subsets: &[Vec<usize>], layout: &Layout) -> Result<Vec<f64>> {
        let mut values = vec![0.0; self.model.num_vars()];
        fill_layout_values(&self.x, layout, &mut values);
        let scenarios = problem.scenarios().scenarios();
        for (j, block) in self.blocks.iter().enumerate() {
            if let Some(block) = block {
                block.fill_values(layout, &scenarios[j].order, &mut values);
            }
        }
        if let Some(block) = &self.pseudo_block {
            let order = ArrivalOrder::scheduled(problem.config().num_classes());
            block.fill_values(layout, &order, &mut values);
        }
        let gamma = evaluate_layout_cvar(layout, problem.scenarios(), problem.alpha())?.var_gamma;
        let losses = scenario_losses(layout, problem.scenarios())?;
        let w = problem.tail_weight();
        let u = subsets
            .iter()
            .map(|g| {
                w * g
                    .iter()
                    .map(|&j| scenarios[j].probability * (losses[j] as f64 - gamma))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        values[self.gamma.index()] = gamma;
        values[self.u.index()] = u;
        Ok(values)
    }

    fn add_cut(&mut self, problem: &CvarProblem, subset: &[usize]) -> Result<()> {
        let w = problem.tail_weight();
        let mut expr = LinExpr::term(self.u, 1.0);
        let mut mass = 0.0;
        for &j in subset {
            let p = problem.scenarios().scenarios()[j].probability;
            mass += p;
            self.blocks[j]
                .as_ref()
                .expect("blocks precede their cuts")
                .add_total(&mut expr, -w * p);
        }
        expr.add(self.gamma, w * mass);
        self.model.add_constraint(&expr, crate::milp::Sense::Ge, 0.0)?;
        Ok(())
    }
}

/// Builds the master with the scheduled-order block and its cut.
pub fn initial_master(problem: &CvarProblem) -> Result<(MasterModel, MasterState)> {
    let config = problem.config();
    let n = config.num_containers() as f64;
    let mut model = Model::new("cvar-master");
    let x = build_layout_constraints(&mut model, config)?;
    let gamma = model.add_continuous(-n, n, "gamma")?;
    let u = model.add_continuous(0.0, f64::INFINITY, "u")?;
    model.set_objective(&LinExpr::term(gamma, 1.0).with(u, 1.0))?;
    let mut master = MasterModel {
        model,
        x,
        gamma,
        u,
        blocks: vec![None; problem.scenarios().len()],
        pseudo_block: None,
    };
    let mut state = MasterState {
        iteration: 0,
        subsets: Vec::new(),
        lower_bound: 0.0,
        upper_bound: f64::INFINITY,
        incumbent: None,
        log: Vec::new(),
        scheduled_pseudo_scenario: false,
        bound_from_limit: false,
        stalled: false,
        total_nodes: 0,
    };
    match problem.scenarios().scheduled_index() {
        Some(j) => {
            master.ensure_block(problem, j)?;
            master.add_cut(problem, &[j])?;
            state.subsets.push(vec![j]);
        }
        None => {
            warn!("scheduled order is not a scenario; it enters the master with zero weight");
            let order = ArrivalOrder::scheduled(config.num_classes());
            master.pseudo_block = Some(build_misplacement_block(&mut master.model, &master.x, &order, "0")?);
            state.subsets.push(Vec::new());
            state.scheduled_pseudo_scenario = true;
        }
    }
    Ok((master, state))
}

/// Scenarios whose loss under `layout` exceeds `gamma_bar`.
pub fn violated_subset(layout: &Layout, scenarios: &ScenarioSet, gamma_bar: f64) -> Result<Vec<usize>> {
    let mut subset = Vec::new();
    for (j, s) in scenarios.iter().enumerate() {
        if count_misplaced(layout, &s.order)? as f64 - gamma_bar > VIOLATION_TOLERANCE {
            subset.push(j);
        }
    }
    Ok(subset)
}

/// Runs the cutting-plane loop until the gap closes or a budget runs out.
pub fn run_cutting_plane(
    problem: &CvarProblem,
    backend: &mut dyn MipBackend,
    params: &CutParams,
) -> Result<(SolvedLayout, MasterState)> {
    run_cutting_plane_with_master(problem, backend, params).map(|(solved, state, _)| (solved, state))
}

/// [`run_cutting_plane`], also returning the final master problem.
pub fn run_cutting_plane_with_master(
    problem: &CvarProblem,
    backend: &mut dyn MipBackend,
    params: &CutParams,
) -> Result<(SolvedLayout, MasterState, MasterModel)> {
    params.validate()?;
    let start = Instant::now();
    let (mut master, mut state) = initial_master(problem)?;
    let mut seen: HashSet<Vec<usize>> = state.subsets.iter().cloned().collect();
    let cap = params.iteration_cap(problem.scenarios().len());
    let mut status = SolveStatus::FeasibleTimeLimit;

    for k in 0..cap {
        let remaining = params.time_limit_seconds - start.elapsed().as_secs_f64();
        if remaining <= 0.0 {
            break;
        }
        state.iteration = k;
        let solve_params = SolveParams {
            time_limit_seconds: remaining.min(params.master.time_limit_seconds),
            ..params.master
        };
        if let Some(layout) = &state.incumbent {
            let start = master.start_point(problem, &state.subsets, layout)?;
            master.model.set_start(start)?;
        }
        let outcome = backend.solve(&master.model, &solve_params)?;
        state.total_nodes += outcome.nodes.unwrap_or(0);
        match outcome.status {
            SolveStatus::Optimal => {}
            SolveStatus::FeasibleTimeLimit => state.bound_from_limit = true,
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible(
                    outcome.message.unwrap_or_else(|| "master is infeasible".into()),
                ))
            }
            SolveStatus::Error if state.incumbent.is_some() => break,
            other => {
                return Err(Error::Backend(
                    outcome
                        .message
                        .unwrap_or_else(|| format!("master solve returned {other}")),
                ))
            }
        }

        let layout = decode_layout(problem.config(), &master.x, &outcome.values)?;
        let gamma_bar = outcome.value(master.gamma);
        state.lower_bound = state.lower_bound.max(outcome.bound);
        let cvar = evaluate_layout_cvar(&layout, problem.scenarios(), problem.alpha())?.cvar;
        if cvar < state.upper_bound {
            state.upper_bound = cvar;
            state.incumbent = Some(layout.clone());
        }
        let mut record = IterationRecord {
            k,
            lower_bound: state.lower_bound,
            upper_bound: state.upper_bound,
            gap: state.gap(params),
            cut_size: 0,
            new_blocks: 0,
            master_time_s: outcome.wall_time_s,
        };
        debug!(
            "iteration {k}: LB {:.9} UB {:.9} master {:.3}s",
            state.lower_bound, state.upper_bound, outcome.wall_time_s
        );

        if outcome.status != SolveStatus::Optimal {
            state.log.push(record);
            break;
        }
        if converged(state.lower_bound, state.upper_bound, params) {
            state.log.push(record);
            status = SolveStatus::Optimal;
            break;
        }

        let subset = violated_subset(&layout, problem.scenarios(), gamma_bar)?;
        if subset.is_empty() || seen.contains(&subset) {
            // the master already prices this layout exactly, so LB >= UB up to tolerances
            state.stalled = true;
            state.log.push(record);
            let tolerance = STALL_TOLERANCE * state.upper_bound.max(1.0);
            if state.upper_bound - state.lower_bound <= tolerance {
                status = SolveStatus::Optimal;
            } else {
                warn!(
                    "cut repeated with gap {:.3e}; stopping",
                    state.upper_bound - state.lower_bound
                );
            }
            break;
        }
        for &j in &subset {
            if master.ensure_block(problem, j)? {
                record.new_blocks += 1;
            }
        }
        master.add_cut(problem, &subset)?;
        record.cut_size = subset.len();
        state.log.push(record);
        seen.insert(subset.clone());
        state.subsets.push(subset);
    }

    let layout = state
        .incumbent
        .clone()
        .ok_or_else(|| Error::Backend("no master solution within the budget".into()))?;
    let solved = SolvedLayout {
        layout,
        objective: state.upper_bound,
        status,
        wall_time_s: start.elapsed().as_secs_f64(),
        solver_objective: None,
        bound: Some(state.lower_bound),
        nodes: Some(state.total_nodes),
    };
    master.model.clear_start();
    Ok((solved, state, master))
}

fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

/// Writes the iteration log as CSV.
pub fn write_iteration_log<W: Write>(records: &[IterationRecord], out: &mut W) -> io::Result<()> {
    writeln!(out, "k,LB,UB,gap,cut_size,new_blocks,master_time_s")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6}",
            r.k,
            fmt_float(r.lower_bound),
            fmt_float(r.upper_bound),
            fmt_float(r.gap),
            r.cut_size,
            r.new_blocks,
            r.master_time_s
        )?;
    }
    Ok(())
}
