//! The monolithic CV@R pre-marshalling MILP and its building blocks.
//!
//! Variables: binaries `x[s][h][r]` (class `r` at stack `s`, tier `h`),
//! continuous misplacement indicators `z[s][h]` per scenario for tiers
//! `h >= 2`, the V@R level `gamma`, and excess variables `v[j]`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{ArrivalOrder, BayConfig, Layout, ScenarioSet};
use crate::error::{invalid_input, Error, Result};
use crate::milp::{LinExpr, MipBackend, Model, Sense, SolveOutcome, SolveParams, SolveStatus, Var};
use crate::risk::{check_alpha, loss_distribution, CvarResult};

/// Problem data: bay, scenarios and probability level.
#[derive(Debug, Clone)]
pub struct CvarProblem {
    config: BayConfig,
    scenarios: ScenarioSet,
    alpha: f64,
}

impl CvarProblem {
    pub fn new(config: BayConfig, scenarios: ScenarioSet, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if scenarios.num_ships() != config.num_classes() {
            return Err(invalid_input(format!(
                "scenarios cover {} ships, bay has {} classes",
                scenarios.num_ships(),
                config.num_classes()
            )));
        }
        Ok(Self {
            config,
            scenarios,
            alpha,
        })
    }

    /// All ships arrive as scheduled; expected loss only.
    pub fn deterministic(config: BayConfig) -> Self {
        let scenarios = ScenarioSet::scheduled(config.num_classes());
        Self {
            config,
            scenarios,
            alpha: 0.0,
        }
    }

    pub fn config(&self) -> &BayConfig {
        &self.config
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `1 / (1 - alpha)`.
    pub fn tail_weight(&self) -> f64 {
        1.0 / (1.0 - self.alpha)
    }
}

/// The `x` grid of one model.
#[derive(Debug, Clone)]
pub struct LayoutVars {
    num_stacks: usize,
    max_height: usize,
    num_classes: usize,
    vars: Vec<Var>,
}

impl LayoutVars {
    /// `x` for 0-based stack, tier and class indices.
    pub fn get(&self, stack: usize, tier: usize, class: usize) -> Var {
        self.vars[(stack * self.max_height + tier) * self.num_classes + class]
    }

    pub fn num_stacks(&self) -> usize {
        self.num_stacks
    }

    pub fn max_height(&self) -> usize {
        self.max_height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

/// Misplacement indicators of one scenario.
#[derive(Debug, Clone)]
pub struct MisplacementBlock {
    max_height: usize,
    z: Vec<Var>,
}

impl MisplacementBlock {
    /// `z` for 0-based stack and tier, `tier >= 1`.
    pub fn get(&self, stack: usize, tier: usize) -> Var {
        self.z[stack * (self.max_height - 1) + tier - 1]
    }

    pub fn vars(&self) -> &[Var] {
        &self.z
    }

    /// Writes the exact misplacement indicators of `layout` under `order`.
    pub fn fill_values(&self, layout: &Layout, order: &ArrivalOrder, values: &mut [f64]) {
        for (s, tiers) in misplaced_positions(layout, order).iter().enumerate() {
            for (h, &misplaced) in tiers.iter().enumerate().skip(1) {
                values[self.get(s, h).index()] = f64::from(misplaced);
            }
        }
    }

    /// The scenario's misplaced count, `sum z`, scaled by `coef`.
    pub fn add_total(&self, expr: &mut LinExpr, coef: f64) {
        for &z in &self.z {
            expr.add(z, coef);
        }
    }
}

/// Per stack and tier, whether the container there is misplaced under `order`.
pub fn misplaced_positions(layout: &Layout, order: &ArrivalOrder) -> Vec<Vec<bool>> {
    layout
        .stacks()
        .iter()
        .map(|stack| {
            let mut lowest = u32::MAX;
            stack
                .iter()
                .map(|&c| {
                    let rank = order.rank_of(c);
                    let misplaced = rank > lowest;
                    lowest = lowest.min(rank);
                    misplaced
                })
                .collect()
        })
        .collect()
}

/// Adds the `x` grid with class-count, single-occupancy and gravity rows.
pub fn build_layout_constraints(model: &mut Model, config: &BayConfig) -> Result<LayoutVars> {
    let (s_n, h_n, r_n) = (config.num_stacks(), config.max_height(), config.num_classes());
    if config.num_containers() > config.capacity() {
        return Err(Error::Infeasible(format!(
            "{} containers exceed {} slots",
            config.num_containers(),
            config.capacity()
        )));
    }
    let mut vars = Vec::with_capacity(s_n * h_n * r_n);
    for s in 0..s_n {
        for h in 0..h_n {
            for r in 0..r_n {
                vars.push(model.add_binary(format!("x_{}_{}_{}", s + 1, h + 1, r + 1))?);
            }
        }
    }
    let x = LayoutVars {
        num_stacks: s_n,
        max_height: h_n,
        num_classes: r_n,
        vars,
    };

    for (r, &count) in config.class_counts().iter().enumerate() {
        let mut e = LinExpr::new();
        for s in 0..s_n {
            for h in 0..h_n {
                e.add(x.get(s, h, r), 1.0);
            }
        }
        model.add_constraint(&e, Sense::Eq, count as f64)?;
    }
    for s in 0..s_n {
        for h in 0..h_n {
            let mut e = LinExpr::new();
            for r in 0..r_n {
                e.add(x.get(s, h, r), 1.0);
            }
            model.add_constraint(&e, Sense::Le, 1.0)?;
        }
    }
    for s in 0..s_n {
        for h in 0..h_n.saturating_sub(1) {
            let mut e = LinExpr::new();
            for r in 0..r_n {
                e.add(x.get(s, h + 1, r), 1.0).add(x.get(s, h, r), -1.0);
            }
            model.add_constraint(&e, Sense::Le, 0.0)?;
        }
    }
    Ok(x)
}

/// Orders stacks by nonincreasing load. Stacks are interchangeable, so
/// every layout has a permuted twin satisfying these rows.
pub fn add_stack_order_constraints(model: &mut Model, x: &LayoutVars) -> Result<()> {
    for s in 0..x.num_stacks.saturating_sub(1) {
        let mut e = LinExpr::new();
        for h in 0..x.max_height {
            for r in 0..x.num_classes {
                e.add(x.get(s, h, r), 1.0).add(x.get(s + 1, h, r), -1.0);
            }
        }
        model.add_constraint(&e, Sense::Ge, 0.0)?;
    }
    Ok(())
}

/// Adds `z` for one arrival order with its detection rows
/// `z[s][h] >= sum_{k>=r} x[s][h][o_k] - sum_{k>=r} x[s][h'][o_k]`
/// for every stack, tier pair `h > h'` and arrival position `r`.
pub fn build_misplacement_block(
    model: &mut Model,
    x: &LayoutVars,
    order: &ArrivalOrder,
    label: &str,
) -> Result<MisplacementBlock> {
    if order.len() != x.num_classes {
        return Err(invalid_input(format!(
            "order over {} ships for {} classes",
            order.len(),
            x.num_classes
        )));
    }
    let (s_n, h_n) = (x.num_stacks, x.max_height);
    let mut z = Vec::with_capacity(s_n * h_n.saturating_sub(1));
    for s in 0..s_n {
        for h in 1..h_n {
            z.push(model.add_continuous(0.0, 1.0, format!("z_{label}_{}_{}", s + 1, h + 1))?);
        }
    }
    let block = MisplacementBlock { max_height: h_n, z };
    // 0-based classes in arrival sequence
    let sequence: Vec<usize> = order.order().iter().map(|&c| c as usize - 1).collect();
    for s in 0..s_n {
        for h in 1..h_n {
            for h_low in 0..h {
                let mut e = LinExpr::term(block.get(s, h), 1.0);
                for (r, _) in sequence.iter().enumerate().rev() {
                    // tail sums over k >= r grow as r decreases
                    let class = sequence[r];
                    e.add(x.get(s, h, class), -1.0).add(x.get(s, h_low, class), 1.0);
                    model.add_constraint(&e, Sense::Ge, 0.0)?;
                }
            }
        }
    }
    Ok(block)
}

/// Variable, row and nonzero counts of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSize {
    pub variables: u64,
    pub constraints: u64,
    pub nonzeros: u64,
}

/// Exact size of the monolithic model for `num_scenarios` scenarios.
pub fn direct_model_size(config: &BayConfig, num_scenarios: usize) -> ModelSize {
    let (s, h, r) = (
        config.num_stacks() as u64,
        config.max_height() as u64,
        config.num_classes() as u64,
    );
    let j = num_scenarios as u64;
    let pairs = h * h.saturating_sub(1) / 2;
    let layout_rows = r + s * h + s * h.saturating_sub(1);
    let layout_nz = r * s * h + s * h * r + s * h.saturating_sub(1) * 2 * r;
    // the row for arrival position r carries 1 + 2 (R - r + 1) terms
    let block_nz = s * pairs * (r + r * (r + 1));
    let z_per = s * h.saturating_sub(1);
    ModelSize {
        variables: s * h * r + 1 + j * (1 + z_per),
        constraints: layout_rows + j * (1 + s * pairs * r),
        nonzeros: layout_nz + j * (2 + z_per + block_nz),
    }
}

/// Refuses monolithic models that would exhaust memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeGuard {
    pub max_constraints: u64,
    pub max_nonzeros: u64,
}

impl Default for SizeGuard {
    fn default() -> Self {
        Self {
            max_constraints: 50_000_000,
            max_nonzeros: 100_000_000,
        }
    }
}

impl SizeGuard {
    pub fn unlimited() -> Self {
        Self {
            max_constraints: u64::MAX,
            max_nonzeros: u64::MAX,
        }
    }

    pub fn check(&self, size: &ModelSize) -> Result<()> {
        if size.constraints > self.max_constraints {
            return Err(Error::TooLarge(format!(
                "{} constraints exceed the limit of {}",
                size.constraints, self.max_constraints
            )));
        }
        if size.nonzeros > self.max_nonzeros {
            return Err(Error::TooLarge(format!(
                "{} nonzeros exceed the limit of {}",
                size.nonzeros, self.max_nonzeros
            )));
        }
        Ok(())
    }
}

/// The monolithic lifting-representation model.
#[derive(Debug)]
pub struct DirectModel {
    pub model: Model,
    pub x: LayoutVars,
    pub gamma: Var,
    pub excess: Vec<Var>,
    pub blocks: Vec<MisplacementBlock>,
}

/// Builds `min gamma + 1/(1-alpha) sum p_j v_j` subject to
/// `v_j >= sum z_j - gamma`, `v_j >= 0` and the layout and detection rows.
pub fn build_direct_model(problem: &CvarProblem, guard: &SizeGuard) -> Result<DirectModel> {
    let config = problem.config();
    guard.check(&direct_model_size(config, problem.scenarios().len()))?;
    let n = config.num_containers() as f64;
    let mut model = Model::new("cvar-direct");
    let x = build_layout_constraints(&mut model, config)?;
    let gamma = model.add_continuous(-n, n, "gamma")?;
    let mut objective = LinExpr::term(gamma, 1.0);
    let mut excess = Vec::with_capacity(problem.scenarios().len());
    let mut blocks = Vec::with_capacity(problem.scenarios().len());
    for (j, scenario) in problem.scenarios().iter().enumerate() {
        let block = build_misplacement_block(&mut model, &x, &scenario.order, &(j + 1).to_string())?;
        let v = model.add_continuous(0.0, f64::INFINITY, format!("v_{}", j + 1))?;
        let mut row = LinExpr::term(v, 1.0).with(gamma, 1.0);
        block.add_total(&mut row, -1.0);
        model.add_constraint(&row, Sense::Ge, 0.0)?;
        objective.add(v, problem.tail_weight() * scenario.probability);
        excess.push(v);
        blocks.push(block);
    }
    model.set_objective(&objective)?;
    Ok(DirectModel {
        model,
        x,
        gamma,
        excess,
        blocks,
    })
}

/// Pins every `x` to `layout` with equality rows.
pub fn fix_layout(model: &mut Model, x: &LayoutVars, layout: &Layout) -> Result<()> {
    if layout.num_stacks() != x.num_stacks
        || layout.max_height() != x.max_height
        || layout.num_classes() != x.num_classes
    {
        return Err(invalid_input("layout does not match the variable grid"));
    }
    for s in 0..x.num_stacks {
        for h in 0..x.max_height {
            let here = layout.class_at(s + 1, h + 1);
            for r in 0..x.num_classes {
                let value = f64::from(here == Some(r as u32 + 1));
                model.add_constraint(&LinExpr::term(x.get(s, h, r), 1.0), Sense::Eq, value)?;
            }
        }
    }
    Ok(())
}

/// Writes the `x` values of `layout`.
pub fn fill_layout_values(x: &LayoutVars, layout: &Layout, values: &mut [f64]) {
    for (s, stack) in layout.stacks().iter().enumerate() {
        for (h, &c) in stack.iter().enumerate() {
            values[x.get(s, h, c as usize - 1).index()] = 1.0;
        }
    }
}

/// Reads a layout off the `x` values, rounding at 0.5.
pub fn decode_layout(config: &BayConfig, x: &LayoutVars, values: &[f64]) -> Result<Layout> {
    let mut stacks = vec![Vec::new(); config.num_stacks()];
    for (s, stack) in stacks.iter_mut().enumerate() {
        let mut gap = false;
        for h in 0..config.max_height() {
            let classes: Vec<usize> = (0..config.num_classes())
                .filter(|&r| values[x.get(s, h, r).index()] > 0.5)
                .collect();
            match classes.as_slice() {
                [] => gap = true,
                [r] if !gap => stack.push(*r as u32 + 1),
                [_] => {
                    return Err(Error::Numeric(format!(
                        "decoded container floats above an empty slot in stack {}",
                        s + 1
                    )))
                }
                _ => {
                    return Err(Error::Numeric(format!(
                        "several classes decoded at stack {}, tier {}",
                        s + 1,
                        h + 1
                    )))
                }
            }
        }
    }
    let layout = Layout::new(config.max_height(), config.num_classes(), stacks)?;
    if !layout.conforms_to(config) {
        return Err(Error::Numeric("decoded layout does not match the class counts".into()));
    }
    Ok(layout)
}

/// Exact CV@R of a fixed layout over the scenarios.
pub fn evaluate_layout_cvar(layout: &Layout, scenarios: &ScenarioSet, alpha: f64) -> Result<CvarResult> {
    loss_distribution(layout, scenarios)?.cvar(alpha)
}

/// A layout with its CV@R and how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedLayout {
    #[serde(flatten)]
    pub layout: Layout,
    /// CV@R of `layout`, recomputed from its loss distribution.
    pub objective: f64,
    pub status: SolveStatus,
    pub wall_time_s: f64,
    /// Objective reported by the solver.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub solver_objective: Option<f64>,
    /// Proven lower bound.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nodes: Option<u64>,
}

impl SolvedLayout {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Solves the monolithic model with the default size guard.
pub fn solve_direct(problem: &CvarProblem, backend: &mut dyn MipBackend, params: &SolveParams) -> Result<SolvedLayout> {
    solve_direct_guarded(problem, backend, params, &SizeGuard::default())
}

pub fn solve_direct_guarded(
    problem: &CvarProblem,
    backend: &mut dyn MipBackend,
    params: &SolveParams,
    guard: &SizeGuard,
) -> Result<SolvedLayout> {
    let start = Instant::now();
    let direct = build_direct_model(problem, guard)?;
    solve_built(problem, &direct, backend, params, start)
}

/// Solves an already built [`DirectModel`]; `start` anchors the wall time.
pub fn solve_built(
    problem: &CvarProblem,
    direct: &DirectModel,
    backend: &mut dyn MipBackend,
    params: &SolveParams,
    start: Instant,
) -> Result<SolvedLayout> {
    let outcome = backend.solve(&direct.model, params)?;
    let layout = layout_from_outcome(problem, &direct.x, &outcome)?;
    let cvar = evaluate_layout_cvar(&layout, problem.scenarios(), problem.alpha())?;
    Ok(SolvedLayout {
        layout,
        objective: cvar.cvar,
        status: outcome.status,
        wall_time_s: start.elapsed().as_secs_f64(),
        solver_objective: Some(outcome.objective),
        bound: Some(outcome.bound),
        nodes: outcome.nodes,
    })
}

pub(crate) fn layout_from_outcome(problem: &CvarProblem, x: &LayoutVars, outcome: &SolveOutcome) -> Result<Layout> {
    match outcome.status {
        SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit => decode_layout(problem.config(), x, &outcome.values),
        SolveStatus::Infeasible => Err(Error::Infeasible(
            outcome.message.clone().unwrap_or_else(|| "model is infeasible".into()),
        )),
        SolveStatus::Unbounded | SolveStatus::Error => Err(Error::Backend(
            outcome
                .message
                .clone()
                .unwrap_or_else(|| format!("solver returned {}", outcome.status)),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::count_misplaced;

    #[test]
    fn size_formula_matches_built_model() {
        let config = BayConfig::new(3, 3, vec![2, 1, 2]).unwrap();
        let scenarios = ScenarioSet::new(
            3,
            vec![
                crate::Scenario {
                    order: ArrivalOrder::new(vec![1, 2, 3]).unwrap(),
                    probability: 0.5,
                },
                crate::Scenario {
                    order: ArrivalOrder::new(vec![3, 1, 2]).unwrap(),
                    probability: 0.5,
                },
            ],
        )
        .unwrap();
        let problem = CvarProblem::new(config.clone(), scenarios, 0.5).unwrap();
        let built = build_direct_model(&problem, &SizeGuard::default()).unwrap();
        let size = direct_model_size(&config, 2);
        assert_eq!(size.variables, built.model.num_vars() as u64);
        assert_eq!(size.constraints, built.model.num_constraints() as u64);
        // zero coefficients can only shrink the nonzero count
        assert!(built.model.num_nonzeros() as u64 <= size.nonzeros);
    }

    #[test]
    fn guard_rejects_oversized_models() {
        let config = BayConfig::bay_8x8();
        let size = direct_model_size(&config, 10_000);
        assert!(size.constraints < 50_000_000);
        assert!(SizeGuard::default().check(&size).is_err());
        assert!(SizeGuard::default().check(&direct_model_size(&config, 100)).is_ok());
        assert!(SizeGuard::unlimited().check(&size).is_ok());
    }

    #[test]
    fn decode_rejects_inconsistent_values() {
        let config = BayConfig::new(1, 2, vec![1, 1]).unwrap();
        let mut model = Model::new("t");
        let x = build_layout_constraints(&mut model, &config).unwrap();
        let mut values = vec![0.0; model.num_vars()];
        values[x.get(0, 0, 1).index()] = 1.0;
        values[x.get(0, 1, 0).index()] = 0.9;
        let layout = decode_layout(&config, &x, &values).unwrap();
        assert_eq!(layout.stacks(), &[vec![2, 1]]);
        assert_eq!(count_misplaced(&layout, &ArrivalOrder::scheduled(2)).unwrap(), 0);

        values[x.get(0, 0, 1).index()] = 0.0;
        assert!(decode_layout(&config, &x, &values).is_err());
        values[x.get(0, 0, 1).index()] = 1.0;
        values[x.get(0, 0, 0).index()] = 1.0;
        assert!(decode_layout(&config, &x, &values).is_err());
    }

    #[test]
    fn problem_validation() {
        let config = BayConfig::new(2, 2, vec![1, 1]).unwrap();
        assert!(CvarProblem::new(config.clone(), ScenarioSet::scheduled(3), 0.5).is_err());
        assert!(CvarProblem::new(config.clone(), ScenarioSet::scheduled(2), 1.0).is_err());
        assert!(CvarProblem::new(config, ScenarioSet::scheduled(2), 0.9).is_ok());
    }
}
