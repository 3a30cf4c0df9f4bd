//! Receding-horizon planners.
//!
//! The distributed planner gives every agent its own subproblem over itself
//! and its interaction-graph neighbors, solves all subproblems independently
//! from a shared snapshot, and executes only each owner's own first control.
//! The centralized planner solves the full potential in one problem.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{PotentialSpec, ProximityCost, TrackingCost};
use crate::dynamics::{rollout_joint, AgentModel, JointState, JointTrajectory, Layout};
use crate::error::{ConfigError, Result, SolveError};
use crate::graph::{build_graph, InteractionGraph};
use crate::ilqr::{solve, SolveReport, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    #[serde(alias = "central")]
    Centralized,
    Distributed,
}

impl PlannerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Centralized => "centralized",
            PlannerKind::Distributed => "distributed",
        }
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" | "centralized" => Ok(PlannerKind::Centralized),
            "distributed" => Ok(PlannerKind::Distributed),
            other => Err(ConfigError::invalid(
                "planner",
                format!("unknown planner `{other}` (expected central or distributed)"),
            )),
        }
    }
}

/// How a per-step time budget is shared among the distributed subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BudgetScope {
    /// Every subproblem solve gets the full budget.
    #[default]
    #[serde(rename = "per-agent")]
    PerAgent,
    /// All subproblem solves of a step share one wall-clock deadline.
    #[serde(rename = "global")]
    Global,
}

impl std::str::FromStr for BudgetScope {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-agent" => Ok(BudgetScope::PerAgent),
            "global" => Ok(BudgetScope::Global),
            other => Err(ConfigError::invalid(
                "budget_scope",
                format!("unknown scope `{other}` (expected per-agent or global)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerOptions {
    /// Solver settings; `time_budget` is the per-step allowance.
    pub solver: SolverOptions,
    pub budget_scope: BudgetScope,
    /// Solve distributed subproblems on the rayon pool.
    pub parallel: bool,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        PlannerOptions {
            solver: SolverOptions::default(),
            budget_scope: BudgetScope::PerAgent,
            parallel: true,
        }
    }
}

/// A fully resolved planning problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub models: Vec<AgentModel>,
    pub tracking: Vec<TrackingCost>,
    pub proximity: ProximityCost,
    pub x0: JointState,
    pub dt: f64,
    pub horizon: usize,
    pub alpha: f64,
    /// Position distance to goal counted as arrived.
    pub goal_tolerance: f64,
    /// State magnitude above which a run is declared diverged.
    pub divergence_bound: f64,
}

impl Scenario {
    pub fn n_agents(&self) -> usize {
        self.models.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.x0.validate(&self.models)?;
        if self.tracking.len() != self.models.len() {
            return Err(ConfigError::dimension(
                "tracking costs",
                self.models.len(),
                self.tracking.len(),
            ));
        }
        for (i, (m, tc)) in self.models.iter().zip(&self.tracking).enumerate() {
            if m.id != i {
                return Err(ConfigError::invalid(
                    "models",
                    format!("model at position {i} has id {}", m.id),
                ));
            }
            if tc.goal().len() != m.state_dim() || tc.u_ref().len() != m.control_dim() {
                return Err(ConfigError::dimension(
                    format!("tracking cost of agent {i}"),
                    m.state_dim(),
                    tc.goal().len(),
                ));
            }
        }
        if !(self.dt > 0.0) {
            return Err(ConfigError::invalid("dt", "must be positive"));
        }
        if self.horizon == 0 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if !(self.alpha >= 1.0) {
            return Err(ConfigError::invalid(
                "alpha",
                format!("must be at least 1, got {}", self.alpha),
            ));
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(ConfigError::invalid("goal_tolerance", "must be positive"));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(ConfigError::invalid("divergence_bound", "must be positive"));
        }
        Ok(())
    }

    pub fn goal_positions(&self) -> Vec<DVector<f64>> {
        self.models
            .iter()
            .zip(&self.tracking)
            .map(|(m, tc)| m.position_of(tc.goal()))
            .collect()
    }

    pub fn distances_to_goal(&self, state: &JointState) -> Vec<f64> {
        self.models
            .iter()
            .zip(&self.tracking)
            .zip(&state.per_agent)
            .map(|((m, tc), x)| (m.position_of(x) - m.position_of(tc.goal())).norm())
            .collect()
    }

    pub fn all_at_goal(&self, state: &JointState) -> bool {
        self.distances_to_goal(state).iter().all(|&d| d <= self.goal_tolerance)
    }

    fn nominal_controls(&self, agent: usize) -> Vec<DVector<f64>> {
        vec![self.models[agent].nominal_control(); self.horizon]
    }
}

/// Smallest distance between any two agents' positions.
pub fn min_pairwise_distance(models: &[AgentModel], state: &JointState) -> f64 {
    let positions: Vec<_> = models
        .iter()
        .zip(&state.per_agent)
        .map(|(m, x)| m.position_of(x))
        .collect();
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let dim = positions[i].len().min(positions[j].len());
            let d = (positions[i].rows(0, dim) - positions[j].rows(0, dim)).norm();
            best = best.min(d);
        }
    }
    best
}

fn shift(seq: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = seq.iter().skip(1).cloned().collect();
    if let Some(last) = seq.last() {
        out.push(last.clone());
    }
    out
}

fn stack(parts: &[&DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut offset = 0;
    for p in parts {
        out.rows_mut(offset, p.len()).copy_from(p);
        offset += p.len();
    }
    out
}

/// Joint control sequence from per-agent sequences of equal length.
fn interleave(per_agent: &[&Vec<DVector<f64>>]) -> Vec<DVector<f64>> {
    let horizon = per_agent.first().map_or(0, |s| s.len());
    (0..horizon)
        .map(|k| stack(&per_agent.iter().map(|s| &s[k]).collect::<Vec<_>>()))
        .collect()
}

/// An agent's latest subproblem solution, re-aligned to start at the next
/// step.
#[derive(Debug, Clone, PartialEq)]
struct LocalPlan {
    members: Vec<usize>,
    controls: Vec<Vec<DVector<f64>>>,
}

impl LocalPlan {
    fn controls_of(&self, agent: usize) -> Option<&Vec<DVector<f64>>> {
        self.members.iter().position(|&a| a == agent).map(|p| &self.controls[p])
    }
}

/// State carried between receding-horizon steps.
#[derive(Debug, Clone)]
pub struct PlannerState {
    pub step: usize,
    pub current: JointState,
    /// Each agent's predicted joint trajectory from the current state.
    pub predictions: Vec<JointTrajectory>,
    /// Executed control of every agent, per step.
    pub applied_controls: Vec<Vec<DVector<f64>>>,
    plans: Vec<Option<LocalPlan>>,
    /// Every agent's own latest plan, visible to all agents between steps.
    bulletin: Vec<Vec<DVector<f64>>>,
    central_plan: Option<Vec<DVector<f64>>>,
}

impl PlannerState {
    /// Initial state: every prediction is the nominal-control rollout from
    /// `x0`.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let n = scenario.n_agents();
        let bulletin: Vec<_> = (0..n).map(|i| scenario.nominal_controls(i)).collect();
        let joint = interleave(&bulletin.iter().collect::<Vec<_>>());
        let prediction = rollout_joint(&scenario.models, &scenario.x0.concat(), &joint, scenario.dt)?;
        Ok(PlannerState {
            step: 0,
            current: scenario.x0.clone(),
            predictions: vec![prediction; n],
            applied_controls: Vec::new(),
            plans: vec![None; n],
            bulletin,
            central_plan: None,
        })
    }
}

/// Agent `owner`'s local optimal control problem.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub owner: usize,
    /// Members in ascending agent order, including the owner.
    pub agents: Vec<usize>,
    pub spec: PotentialSpec,
    pub models: Vec<AgentModel>,
    /// Stacked current states of the members.
    pub x0_local: DVector<f64>,
    pub warm_start: Vec<DVector<f64>>,
}

impl Subproblem {
    pub fn owner_position(&self) -> usize {
        self.agents
            .iter()
            .position(|&a| a == self.owner)
            .expect("owner is a member")
    }
}

/// Interaction graph as seen by `agent` from its own prediction.
pub fn agent_graph(state: &PlannerState, scenario: &Scenario, agent: usize) -> Result<InteractionGraph> {
    build_graph(
        &state.predictions[agent],
        &scenario.models,
        scenario.proximity.d_prox,
        scenario.alpha,
    )
}

/// Builds every agent's subproblem from the current snapshot. Also returns
/// the union of the neighborhoods actually used, as a graph.
pub fn build_subproblems(state: &PlannerState, scenario: &Scenario) -> Result<(Vec<Subproblem>, InteractionGraph)> {
    let n = scenario.n_agents();
    let mut subproblems = Vec::with_capacity(n);
    let mut used_edges = Vec::new();
    for owner in 0..n {
        let graph = agent_graph(state, scenario, owner)?;
        let agents = graph.subproblem_agents(owner);
        used_edges.extend(graph.neighbors(owner).iter().map(|&j| (owner, j)));

        let tracking = agents.iter().map(|&a| scenario.tracking[a].clone()).collect();
        let spec = PotentialSpec::local(owner, agents.clone(), tracking, scenario.proximity)?;
        let models: Vec<_> = agents.iter().map(|&a| scenario.models[a].clone()).collect();
        let x0_local = stack(&agents.iter().map(|&a| &state.current.per_agent[a]).collect::<Vec<_>>());

        let previous = state.plans[owner].as_ref();
        let per_member: Vec<Vec<DVector<f64>>> = agents
            .iter()
            .map(|&a| match previous.and_then(|p| p.controls_of(a)) {
                Some(c) => c.clone(),
                None => scenario.nominal_controls(a),
            })
            .collect();
        let warm_start = interleave(&per_member.iter().collect::<Vec<_>>());

        subproblems.push(Subproblem {
            owner,
            agents,
            spec,
            models,
            x0_local,
            warm_start,
        });
    }
    let union = InteractionGraph::from_edges(n, used_edges)?;
    Ok((subproblems, union))
}

/// Result of one agent's solve within a step.
#[derive(Debug, Clone)]
pub struct AgentSolve {
    pub owner: usize,
    pub members: Vec<usize>,
    pub report: Option<SolveReport>,
    /// Set when the solve failed and the previous plan was reused.
    pub failure: Option<SolveError>,
    /// Seconds spent in the solve call.
    pub solve_time: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Executed (clamped) control of every agent.
    pub controls: Vec<DVector<f64>>,
    /// One entry per agent (distributed) or a single entry (centralized).
    pub solves: Vec<AgentSolve>,
    /// Seconds spent building interaction graphs.
    pub graph_time: f64,
    pub edge_count: usize,
}

fn budgeted(opts: &PlannerOptions, deadline: Option<Instant>) -> SolverOptions {
    let mut solver = opts.solver.clone();
    if let Some(deadline) = deadline {
        let remaining = deadline.saturating_duration_since(Instant::now());
        solver.time_budget = Some(remaining.as_secs_f64().max(1e-9));
    }
    solver
}

fn solve_subproblem(sub: &Subproblem, dt: f64, solver: &SolverOptions) -> AgentSolve {
    let start = Instant::now();
    let result = solve(&sub.spec, &sub.models, &sub.x0_local, &sub.warm_start, dt, solver);
    let solve_time = start.elapsed().as_secs_f64();
    let (report, failure) = match result {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e)),
    };
    AgentSolve {
        owner: sub.owner,
        members: sub.agents.clone(),
        report,
        failure,
        solve_time,
    }
}

fn advance(scenario: &Scenario, state: &mut PlannerState, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut applied = Vec::with_capacity(controls.len());
    for (i, model) in scenario.models.iter().enumerate() {
        let u = model.clamp(&controls[i]);
        state.current.per_agent[i] = model.step(&state.current.per_agent[i], &u, scenario.dt);
        applied.push(u);
    }
    state.applied_controls.push(applied.clone());
    state.step += 1;
    applied
}

/// One step of the distributed planner.
///
/// Every agent builds the interaction graph from its own prediction, forms
/// its local potential over its neighborhood, and solves it. Only the
/// owner's own first control is executed. Afterwards each agent's plan is
/// published and its prediction refreshed from its own solution for its
/// subproblem members and from the other agents' published plans for
/// everyone else.
pub fn dp_ilqr_step(state: &mut PlannerState, scenario: &Scenario, opts: &PlannerOptions) -> Result<StepOutcome> {
    let graph_start = Instant::now();
    let (subproblems, union) = build_subproblems(state, scenario)?;
    let graph_time = graph_start.elapsed().as_secs_f64();

    let deadline = match (opts.budget_scope, opts.solver.time_budget) {
        (BudgetScope::Global, Some(b)) => Some(Instant::now() + Duration::from_secs_f64(b)),
        _ => None,
    };
    let run = |sub: &Subproblem| solve_subproblem(sub, scenario.dt, &budgeted(opts, deadline));
    let solves: Vec<AgentSolve> = if opts.parallel {
        subproblems.par_iter().map(run).collect()
    } else {
        subproblems.iter().map(run).collect()
    };

    let n = scenario.n_agents();
    let mut new_plans = Vec::with_capacity(n);
    let mut controls = Vec::with_capacity(n);
    for (sub, result) in subproblems.iter().zip(&solves) {
        let owner = sub.owner;
        let plan = match &result.report {
            Some(report) => {
                let layout = Layout::new(&sub.models);
                let per_member: Vec<Vec<DVector<f64>>> = (0..sub.agents.len())
                    .map(|p| report.trajectory.agent_controls(&layout, p))
                    .collect();
                LocalPlan {
                    members: sub.agents.clone(),
                    controls: per_member,
                }
            }
            None => {
                // reuse the previous plan, which is already aligned to this step
                let own = state.plans[owner]
                    .as_ref()
                    .and_then(|p| p.controls_of(owner).cloned())
                    .unwrap_or_else(|| scenario.nominal_controls(owner));
                LocalPlan {
                    members: vec![owner],
                    controls: vec![own],
                }
            }
        };
        controls.push(plan.controls_of(owner).expect("owner in plan")[0].clone());
        new_plans.push(plan);
    }

    let applied = advance(scenario, state, &controls);

    for (owner, plan) in new_plans.into_iter().enumerate() {
        let shifted = LocalPlan {
            controls: plan.controls.iter().map(|c| shift(c)).collect(),
            members: plan.members,
        };
        state.bulletin[owner] = shifted.controls_of(owner).expect("owner in plan").clone();
        state.plans[owner] = Some(shifted);
    }
    let x_next = state.current.concat();
    for owner in 0..n {
        let plan = state.plans[owner].as_ref().expect("plan set above");
        let per_agent: Vec<&Vec<DVector<f64>>> = (0..n)
            .map(|j| plan.controls_of(j).unwrap_or(&state.bulletin[j]))
            .collect();
        state.predictions[owner] = rollout_joint(&scenario.models, &x_next, &interleave(&per_agent), scenario.dt)?;
    }

    Ok(StepOutcome {
        controls: applied,
        solves,
        graph_time,
        edge_count: union.edge_count(),
    })
}

/// One step of the centralized planner: a single solve of the full
/// potential, warm-started from the previous solution shifted by one step.
pub fn centralized_step(state: &mut PlannerState, scenario: &Scenario, opts: &PlannerOptions) -> Result<StepOutcome> {
    let n = scenario.n_agents();
    let graph_start = Instant::now();
    let graph = build_graph(
        &state.predictions[0],
        &scenario.models,
        scenario.proximity.d_prox,
        scenario.alpha,
    )?;
    let graph_time = graph_start.elapsed().as_secs_f64();

    let agents: Vec<usize> = (0..n).collect();
    let spec = PotentialSpec::centralized(agents.clone(), scenario.tracking.clone(), scenario.proximity)?;
    let warm = match &state.central_plan {
        Some(plan) => plan.clone(),
        None => interleave(&state.bulletin.iter().collect::<Vec<_>>()),
    };
    let sub = Subproblem {
        owner: 0,
        agents,
        spec,
        models: scenario.models.clone(),
        x0_local: state.current.concat(),
        warm_start: warm.clone(),
    };
    let result = solve_subproblem(&sub, scenario.dt, &opts.solver);
    let plan = match &result.report {
        Some(report) => report.controls.clone(),
        None => warm,
    };
    let layout = Layout::new(&scenario.models);
    let controls: Vec<_> = (0..n).map(|i| layout.agent_control(&plan[0], i)).collect();
    let applied = advance(scenario, state, &controls);

    let shifted = shift(&plan);
    for i in 0..n {
        state.bulletin[i] = shifted.iter().map(|u| layout.agent_control(u, i)).collect();
    }
    let prediction = rollout_joint(&scenario.models, &state.current.concat(), &shifted, scenario.dt)?;
    state.central_plan = Some(shifted);
    state.predictions = vec![prediction; n];

    Ok(StepOutcome {
        controls: applied,
        solves: vec![result],
        graph_time,
        edge_count: graph.edge_count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GoalsReached,
    StepLimit,
    Diverged,
}

/// Metrics of one receding-horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Seconds per solve: one per agent (distributed) or one (centralized).
    pub solve_times: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub subproblem_sizes: Vec<usize>,
    /// Agents whose solve failed and reused their previous plan.
    pub fallbacks: Vec<usize>,
    pub graph_time: f64,
    pub edge_count: usize,
    /// Potential value reported by each solve.
    pub costs: Vec<f64>,
    /// Smallest pairwise distance after the step.
    pub min_distance: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub planner: PlannerKind,
    /// Actual states, starting with the initial state.
    pub states: Vec<JointState>,
    /// Executed controls, one entry per step.
    pub controls: Vec<Vec<DVector<f64>>>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub min_pairwise_distance: f64,
    pub final_distances: Vec<f64>,
}

impl SimulationTrace {
    pub fn goals_reached(&self) -> bool {
        self.termination == Termination::GoalsReached
    }
}

fn diverged(state: &JointState, bound: f64) -> bool {
    state
        .per_agent
        .iter()
        .any(|x| x.iter().any(|v| !v.is_finite() || v.abs() > bound))
}

/// Runs the chosen planner for up to `n_steps` steps, stopping early once
/// every agent is within the goal tolerance or the state diverges.
pub fn run_receding_horizon(
    scenario: &Scenario,
    kind: PlannerKind,
    n_steps: usize,
    opts: &PlannerOptions,
) -> Result<SimulationTrace> {
    if n_steps == 0 {
        return Err(ConfigError::invalid("n_steps", "must be at least 1"));
    }
    opts.solver.validate()?;
    let mut state = PlannerState::new(scenario)?;
    let mut states = vec![state.current.clone()];
    let mut steps = Vec::new();
    let mut min_distance = min_pairwise_distance(&scenario.models, &state.current);

    let mut termination = Termination::StepLimit;
    if scenario.all_at_goal(&state.current) {
        termination = Termination::GoalsReached;
    } else {
        for step in 0..n_steps {
            let outcome = match kind {
                PlannerKind::Distributed => dp_ilqr_step(&mut state, scenario, opts)?,
                PlannerKind::Centralized => centralized_step(&mut state, scenario, opts)?,
            };
            let d = min_pairwise_distance(&scenario.models, &state.current);
            min_distance = min_distance.min(d);
            steps.push(StepRecord {
                step,
                solve_times: outcome.solves.iter().map(|s| s.solve_time).collect(),
                iterations: outcome
                    .solves
                    .iter()
                    .map(|s| s.report.as_ref().map_or(0, |r| r.iterations))
                    .collect(),
                converged: outcome
                    .solves
                    .iter()
                    .map(|s| s.report.as_ref().is_some_and(|r| r.converged))
                    .collect(),
                subproblem_sizes: outcome.solves.iter().map(|s| s.members.len()).collect(),
                fallbacks: outcome
                    .solves
                    .iter()
                    .filter(|s| s.failure.is_some())
                    .map(|s| s.owner)
                    .collect(),
                graph_time: outcome.graph_time,
                edge_count: outcome.edge_count,
                costs: outcome
                    .solves
                    .iter()
                    .map(|s| s.report.as_ref().map_or(f64::NAN, |r| r.cost))
                    .collect(),
                min_distance: d,
            });
            states.push(state.current.clone());
            if diverged(&state.current, scenario.divergence_bound) {
                termination = Termination::Diverged;
                break;
            }
            if scenario.all_at_goal(&state.current) {
                termination = Termination::GoalsReached;
                break;
            }
        }
    }

    Ok(SimulationTrace {
        planner: kind,
        final_distances: scenario.distances_to_goal(&state.current),
        states,
        controls: state.applied_controls,
        steps,
        termination,
        min_pairwise_distance: min_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{default_tracking, CostParams};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn di_scenario(starts: &[(f64, f64)], goals: &[(f64, f64)]) -> Scenario {
        let models: Vec<_> = (0..starts.len())
            .map(|i| AgentModel::double_integrator_2d().with_id(i))
            .collect();
        let goals: Vec<_> = goals.iter().map(|&(x, y)| v(&[x, y, 0.0, 0.0])).collect();
        let tracking = default_tracking(&models, &goals, &CostParams::default()).unwrap();
        Scenario {
            models,
            tracking,
            proximity: ProximityCost::new(50.0, 0.5).unwrap(),
            x0: JointState::new(starts.iter().map(|&(x, y)| v(&[x, y, 0.0, 0.0])).collect()),
            dt: 0.1,
            horizon: 20,
            alpha: 1.5,
            goal_tolerance: 0.1,
            divergence_bound: 1e4,
        }
    }

    #[test]
    fn agents_at_goal_terminate_immediately() {
        let sc = di_scenario(&[(0.0, 0.0), (3.0, 3.0)], &[(0.0, 0.0), (3.0, 3.0)]);
        let trace = run_receding_horizon(&sc, PlannerKind::Distributed, 10, &PlannerOptions::default()).unwrap();
        assert_eq!(trace.termination, Termination::GoalsReached);
        assert!(trace.steps.is_empty());
        assert!(trace.final_distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn fig2_subproblem_sizes() {
        // Agents 0..5 stand in for the figure's agents 1..5.
        let sc = di_scenario(
            &[(0.0, 0.0), (0.5, 0.5), (-0.2, 0.6), (1.1, 0.8), (1.7, 1.2)],
            &[(0.0, 0.0); 5],
        );
        let state = PlannerState::new(&sc).unwrap();
        let (subs, union) = build_subproblems(&state, &sc).unwrap();
        let expected_edges: std::collections::BTreeSet<_> =
            [(0, 1), (0, 2), (1, 2), (1, 3), (3, 4)].into_iter().collect();
        assert_eq!(union.edges(), &expected_edges);
        let sizes: Vec<_> = subs.iter().map(|s| s.agents.len()).collect();
        assert_eq!(sizes, vec![3, 4, 3, 3, 2]);
        // Only owner pairs are coupled.
        assert_eq!(subs[1].spec.pairs().len(), 3);
        assert!(subs[1].spec.pairs().iter().all(|&(i, _)| subs[1].agents[i] == 1));
    }

    #[test]
    fn two_agent_coupled_matches_centralized() {
        let sc = di_scenario(&[(0.0, 0.0), (0.6, 0.0)], &[(1.5, 0.2), (-1.0, -0.2)]);
        let opts = PlannerOptions {
            parallel: false,
            ..PlannerOptions::default()
        };
        let mut dist = PlannerState::new(&sc).unwrap();
        let mut cent = PlannerState::new(&sc).unwrap();
        let a = dp_ilqr_step(&mut dist, &sc, &opts).unwrap();
        let b = centralized_step(&mut cent, &sc, &opts).unwrap();
        assert!(a.solves.iter().all(|s| s.members.len() == 2));
        for (ua, ub) in a.controls.iter().zip(&b.controls) {
            assert!((ua - ub).amax() < 1e-9);
        }
    }

    #[test]
    fn single_agent_planners_agree() {
        let sc = di_scenario(&[(0.0, 0.0)], &[(2.0, 1.0)]);
        let opts = PlannerOptions::default();
        let a = run_receding_horizon(&sc, PlannerKind::Distributed, 15, &opts).unwrap();
        let b = run_receding_horizon(&sc, PlannerKind::Centralized, 15, &opts).unwrap();
        assert_eq!(a.controls, b.controls);
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        let mut sc = di_scenario(&[(0.0, 0.0)], &[(1.0, 0.0)]);
        sc.alpha = 0.5;
        assert!(PlannerState::new(&sc).is_err());
    }

    #[test]
    fn shift_repeats_last() {
        let s = vec![v(&[1.0]), v(&[2.0]), v(&[3.0])];
        assert_eq!(shift(&s), vec![v(&[2.0]), v(&[3.0]), v(&[3.0])]);
    }
}
