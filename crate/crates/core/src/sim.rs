//! Monte Carlo campaigns comparing the centralized and distributed planners.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{default_tracking, CostParams, ProximityCost};
use crate::dynamics::{AgentModel, JointState, ModelKey, DEFAULT_MAX_TILT, STANDARD_GRAVITY};
use crate::error::{ConfigError, Result};
use crate::ilqr::SolverOptions;
use crate::planner::{
    run_receding_horizon, BudgetScope, PlannerKind, PlannerOptions, Scenario, SimulationTrace, Termination,
};

const MAX_REJECTIONS: usize = 10_000;

/// Explicit start and goal for one agent. Each is either a position (2 or 3
/// entries) with the remaining state zero, or a full state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentPlacement {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

/// Everything needed to generate and run one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub model: ModelKey,
    pub dt: f64,
    pub horizon: usize,
    pub d_prox: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Width, depth and height (height used by 3D models only), meters.
    pub workspace: [f64; 3],
    /// Minimum initial and goal separation; the effective value is at least
    /// `2 d_prox`.
    pub min_separation: f64,
    pub n_steps: usize,
    /// Optional per-step wall-clock budget in seconds.
    pub budget: Option<f64>,
    pub goal_tolerance: f64,
    pub divergence_bound: f64,
    /// Fraction of `d_prox` below which a run counts as a collision.
    pub collision_fraction: f64,
    pub gravity: f64,
    pub max_tilt: f64,
    pub costs: CostParams,
    /// Explicit placements; random placement when empty.
    pub agents: Vec<AgentPlacement>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_agents: 3,
            model: ModelKey::DoubleIntegrator,
            dt: 0.1,
            horizon: 40,
            d_prox: 0.5,
            alpha: 1.5,
            seed: 0,
            workspace: [10.0, 10.0, 4.0],
            min_separation: 1.0,
            n_steps: 100,
            budget: None,
            goal_tolerance: 0.1,
            divergence_bound: 1e4,
            collision_fraction: 0.8,
            gravity: STANDARD_GRAVITY,
            max_tilt: DEFAULT_MAX_TILT,
            costs: CostParams::default(),
            agents: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(name, format!("must be positive, got {v}")))
            }
        };
        if self.n_agents == 0 {
            return Err(ConfigError::invalid("n_agents", "must be at least 1"));
        }
        positive("dt", self.dt)?;
        positive("d_prox", self.d_prox)?;
        positive("goal_tolerance", self.goal_tolerance)?;
        positive("divergence_bound", self.divergence_bound)?;
        positive("collision_fraction", self.collision_fraction)?;
        if self.horizon == 0 {
            return Err(ConfigError::invalid("horizon", "must be at least 1"));
        }
        if self.n_steps == 0 {
            return Err(ConfigError::invalid("n_steps", "must be at least 1"));
        }
        if !(self.alpha >= 1.0) {
            return Err(ConfigError::invalid(
                "alpha",
                format!("must be at least 1, got {}", self.alpha),
            ));
        }
        if self.min_separation < self.d_prox {
            return Err(ConfigError::invalid(
                "min_separation",
                format!("must be at least d_prox ({}), got {}", self.d_prox, self.min_separation),
            ));
        }
        for (i, w) in self.workspace.iter().enumerate() {
            positive(&format!("workspace[{i}]"), *w)?;
        }
        if let Some(b) = self.budget {
            positive("budget", b)?;
        }
        if !self.agents.is_empty() && self.agents.len() != self.n_agents {
            return Err(ConfigError::dimension("agents", self.n_agents, self.agents.len()));
        }
        ProximityCost::new(self.costs.beta, self.d_prox)?;
        self.model.build(self.gravity, self.max_tilt)?;
        Ok(())
    }

    pub fn separation(&self) -> f64 {
        self.min_separation.max(2.0 * self.d_prox)
    }

    pub fn models(&self) -> Result<Vec<AgentModel>> {
        let model = self.model.build(self.gravity, self.max_tilt)?;
        Ok((0..self.n_agents).map(|i| model.clone().with_id(i)).collect())
    }
}

fn state_from(model: &AgentModel, values: &[f64], what: &str, agent: usize) -> Result<DVector<f64>> {
    let n = model.state_dim();
    let p = model.position_dim();
    if values.len() == n {
        Ok(DVector::from_column_slice(values))
    } else if values.len() == p {
        let mut x = DVector::zeros(n);
        x.rows_mut(0, p).copy_from_slice(values);
        Ok(x)
    } else {
        Err(ConfigError::invalid(
            format!("agents[{agent}].{what}"),
            format!(
                "expected {p} position entries or {n} state entries, got {}",
                values.len()
            ),
        ))
    }
}

fn sample_positions(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, dim: usize) -> Result<Vec<DVector<f64>>> {
    let sep = cfg.separation();
    let mut placed: Vec<DVector<f64>> = Vec::with_capacity(cfg.n_agents);
    let mut rejected = 0;
    while placed.len() < cfg.n_agents {
        let p = DVector::from_fn(dim, |a, _| rng.random_range(0.0..cfg.workspace[a]));
        if placed.iter().all(|q| (q - &p).norm() >= sep) {
            placed.push(p);
        } else {
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(ConfigError::InfeasibleWorkspace {
                    n_agents: cfg.n_agents,
                    attempts: rejected,
                });
            }
        }
    }
    Ok(placed)
}

/// Initial joint state and goal states. Random placements are uniform in the
/// workspace, pairwise separated, at rest, and determined by the seed.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(JointState, Vec<DVector<f64>>)> {
    cfg.validate()?;
    let models = cfg.models()?;
    if !cfg.agents.is_empty() {
        let mut starts = Vec::with_capacity(cfg.n_agents);
        let mut goals = Vec::with_capacity(cfg.n_agents);
        for (i, (m, a)) in models.iter().zip(&cfg.agents).enumerate() {
            starts.push(state_from(m, &a.start, "start", i)?);
            goals.push(state_from(m, &a.goal, "goal", i)?);
        }
        return Ok((JointState::new(starts), goals));
    }
    let dim = models[0].position_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = sample_positions(&mut rng, cfg, dim)?;
    let goals = sample_positions(&mut rng, cfg, dim)?;
    let lift = |p: &DVector<f64>| {
        let mut x = DVector::zeros(models[0].state_dim());
        x.rows_mut(0, dim).copy_from(p);
        x
    };
    Ok((
        JointState::new(starts.iter().map(lift).collect()),
        goals.iter().map(lift).collect(),
    ))
}

/// Resolves a configuration into a runnable scenario.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let (x0, goals) = generate_scenario(cfg)?;
    let models = cfg.models()?;
    let tracking = default_tracking(&models, &goals, &cfg.costs)?;
    let scenario = Scenario {
        models,
        tracking,
        proximity: ProximityCost::new(cfg.costs.beta, cfg.d_prox)?,
        x0,
        dt: cfg.dt,
        horizon: cfg.horizon,
        alpha: cfg.alpha,
        goal_tolerance: cfg.goal_tolerance,
        divergence_bound: cfg.divergence_bound,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Per-run metrics, one JSON line each in a campaign's records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub n_agents: usize,
    pub model: ModelKey,
    pub planner: PlannerKind,
    /// Receding-horizon steps executed.
    pub steps: usize,
    pub termination: Option<Termination>,
    /// Set when the run aborted.
    pub error: Option<String>,
    /// Seconds per solve, per step: one entry per agent (distributed) or a
    /// single entry (centralized).
    pub solve_times: Vec<Vec<f64>>,
    /// Mean over every individual solve of the run.
    pub mean_solve_time: f64,
    pub graph_time: f64,
    pub mean_iterations: f64,
    pub converged_fraction: f64,
    pub fallbacks: usize,
    pub final_distances: Vec<f64>,
    pub mean_final_distance: f64,
    pub min_pairwise_distance: f64,
    pub collision: bool,
    pub goals_reached: bool,
}

impl MetricsRecord {
    pub fn from_trace(cfg: &ScenarioConfig, trace: &SimulationTrace) -> Self {
        let solve_times: Vec<Vec<f64>> = trace.steps.iter().map(|s| s.solve_times.clone()).collect();
        let all: Vec<f64> = solve_times.iter().flatten().copied().collect();
        let iterations: Vec<usize> = trace.steps.iter().flat_map(|s| s.iterations.iter().copied()).collect();
        let converged = trace
            .steps
            .iter()
            .flat_map(|s| s.converged.iter())
            .filter(|&&c| c)
            .count();
        MetricsRecord {
            seed: cfg.seed,
            n_agents: cfg.n_agents,
            model: cfg.model,
            planner: trace.planner,
            steps: trace.steps.len(),
            termination: Some(trace.termination),
            error: None,
            mean_solve_time: mean(&all),
            graph_time: trace.steps.iter().map(|s| s.graph_time).sum(),
            mean_iterations: mean(&iterations.iter().map(|&i| i as f64).collect::<Vec<_>>()),
            converged_fraction: if iterations.is_empty() {
                1.0
            } else {
                converged as f64 / iterations.len() as f64
            },
            fallbacks: trace.steps.iter().map(|s| s.fallbacks.len()).sum(),
            mean_final_distance: mean(&trace.final_distances),
            final_distances: trace.final_distances.clone(),
            min_pairwise_distance: trace.min_pairwise_distance,
            collision: trace.min_pairwise_distance < cfg.collision_fraction * cfg.d_prox,
            goals_reached: trace.goals_reached(),
            solve_times,
        }
    }

    fn failed(cfg: &ScenarioConfig, planner: PlannerKind, error: String) -> Self {
        MetricsRecord {
            seed: cfg.seed,
            n_agents: cfg.n_agents,
            model: cfg.model,
            planner,
            steps: 0,
            termination: None,
            error: Some(error),
            solve_times: Vec::new(),
            mean_solve_time: f64::NAN,
            graph_time: 0.0,
            mean_iterations: f64::NAN,
            converged_fraction: 0.0,
            fallbacks: 0,
            final_distances: Vec::new(),
            mean_final_distance: f64::NAN,
            min_pairwise_distance: f64::NAN,
            collision: false,
            goals_reached: false,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Linear-interpolated quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// A grid of scenarios, each run under every planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignGrid {
    pub n_agents: Vec<usize>,
    pub models: Vec<ModelKey>,
    /// Number of seeds, starting at `first_seed`.
    pub seeds: u64,
    pub first_seed: u64,
    pub planners: Vec<PlannerKind>,
}

impl Default for CampaignGrid {
    fn default() -> Self {
        CampaignGrid {
            n_agents: vec![3, 4, 5, 6, 7, 8, 9, 10],
            models: vec![ModelKey::DoubleIntegrator],
            seeds: 30,
            first_seed: 0,
            planners: vec![PlannerKind::Centralized, PlannerKind::Distributed],
        }
    }
}

impl CampaignGrid {
    /// Scenario configurations ordered by (seed, n_agents, model).
    pub fn expand(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for seed in self.first_seed..self.first_seed + self.seeds {
            for &n in &self.n_agents {
                for &model in &self.models {
                    out.push(ScenarioConfig {
                        seed,
                        n_agents: n,
                        model,
                        agents: Vec::new(),
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOptions {
    pub solver: SolverOptions,
    pub budget_scope: BudgetScope,
    /// Run scenarios (and subproblems) one at a time.
    pub serial: bool,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            solver: SolverOptions::default(),
            budget_scope: BudgetScope::PerAgent,
            serial: false,
        }
    }
}

impl CampaignOptions {
    pub fn planner_options(&self, cfg: &ScenarioConfig) -> PlannerOptions {
        let mut solver = self.solver.clone();
        solver.time_budget = cfg.budget;
        PlannerOptions {
            solver,
            budget_scope: self.budget_scope,
            parallel: !self.serial,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub config: ScenarioConfig,
    pub planner: PlannerKind,
    pub record: MetricsRecord,
    pub trace: Option<SimulationTrace>,
    pub models: Vec<AgentModel>,
}

/// Runs one scenario under one planner. Failures become error records.
pub fn run_one(cfg: &ScenarioConfig, planner: PlannerKind, opts: &CampaignOptions) -> CampaignRun {
    let result = build_scenario(cfg)
        .and_then(|sc| run_receding_horizon(&sc, planner, cfg.n_steps, &opts.planner_options(cfg)).map(|t| (sc, t)));
    match result {
        Ok((sc, trace)) => CampaignRun {
            record: MetricsRecord::from_trace(cfg, &trace),
            config: cfg.clone(),
            planner,
            trace: Some(trace),
            models: sc.models,
        },
        Err(e) => CampaignRun {
            record: MetricsRecord::failed(cfg, planner, e.to_string()),
            config: cfg.clone(),
            planner,
            trace: None,
            models: Vec::new(),
        },
    }
}

/// Evaluates every configuration under every planner. Both planners of a
/// configuration see the same generated scenario. Results are ordered by
/// (seed, n_agents, model, planner) regardless of parallelism.
pub fn run_campaign(configs: &[ScenarioConfig], planners: &[PlannerKind], opts: &CampaignOptions) -> Vec<CampaignRun> {
    let mut jobs: Vec<(&ScenarioConfig, PlannerKind)> = configs
        .iter()
        .flat_map(|c| planners.iter().map(move |&p| (c, p)))
        .collect();
    jobs.sort_by_key(|(c, p)| (c.seed, c.n_agents, c.model, *p));
    if opts.serial {
        jobs.iter().map(|(c, p)| run_one(c, *p, opts)).collect()
    } else {
        jobs.par_iter().map(|(c, p)| run_one(c, *p, opts)).collect()
    }
}

/// Aggregates for one (n_agents, model, planner) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_agents: usize,
    pub model: ModelKey,
    pub planner: PlannerKind,
    pub runs: usize,
    pub failures: usize,
    /// Statistics over every individual solve.
    pub solve_time_mean: f64,
    pub solve_time_std: f64,
    pub solve_time_p50: f64,
    /// Statistics over runs of the mean final distance to goal.
    pub distance_mean: f64,
    pub distance_var: f64,
    pub distance_p25: f64,
    pub distance_p50: f64,
    pub distance_p75: f64,
    pub collision_rate: f64,
    pub goal_rate: f64,
}

pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(usize, ModelKey, PlannerKind), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.n_agents, r.model, r.planner)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((n_agents, model, planner), rs)| {
            let ok: Vec<&&MetricsRecord> = rs.iter().filter(|r| r.error.is_none()).collect();
            let times: Vec<f64> = ok
                .iter()
                .flat_map(|r| r.solve_times.iter().flatten().copied())
                .collect();
            let dists: Vec<f64> = ok.iter().map(|r| r.mean_final_distance).collect();
            let frac = |f: &dyn Fn(&MetricsRecord) -> bool| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|r| f(r)).count() as f64 / ok.len() as f64
                }
            };
            SummaryRow {
                n_agents,
                model,
                planner,
                runs: rs.len(),
                failures: rs.len() - ok.len(),
                solve_time_mean: mean(&times),
                solve_time_std: variance(&times).sqrt(),
                solve_time_p50: quantile(&times, 0.5),
                distance_mean: mean(&dists),
                distance_var: variance(&dists),
                distance_p25: quantile(&dists, 0.25),
                distance_p50: quantile(&dists, 0.5),
                distance_p75: quantile(&dists, 0.75),
                collision_rate: frac(&|r| r.collision),
                goal_rate: frac(&|r| r.goals_reached),
            }
        })
        .collect()
}

pub fn trajectory_file_name(cfg: &ScenarioConfig, planner: PlannerKind) -> String {
    format!(
        "traj_seed{}_n{}_{}_{}.csv",
        cfg.seed,
        cfg.n_agents,
        cfg.model.as_str(),
        planner.as_str()
    )
}

/// Writes one row per (time, agent) with the state and, except at the final
/// time, the executed control.
pub fn write_trajectory_csv(path: &Path, trace: &SimulationTrace, models: &[AgentModel], dt: f64) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let n_max = models.iter().map(|m| m.state_dim()).max().unwrap_or(0);
    let m_max = models.iter().map(|m| m.control_dim()).max().unwrap_or(0);
    let mut header = vec!["time".to_string(), "agent".to_string()];
    header.extend((0..n_max).map(|i| format!("x{i}")));
    header.extend((0..m_max).map(|i| format!("u{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (k, state) in trace.states.iter().enumerate() {
        let time = k as f64 * dt;
        for (i, x) in state.per_agent.iter().enumerate() {
            let mut row = vec![format!("{time}"), i.to_string()];
            row.extend((0..n_max).map(|a| x.get(a).map(|v| v.to_string()).unwrap_or_default()));
            let u = trace.controls.get(k).map(|us| &us[i]);
            row.extend((0..m_max).map(|a| u.and_then(|u| u.get(a)).map(|v| v.to_string()).unwrap_or_default()));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()
}

pub fn write_records_jsonl(path: &Path, records: &[MetricsRecord]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "n_agents,model,planner,runs,failures,solve_time_mean,solve_time_std,solve_time_p50,\
         distance_mean,distance_var,distance_p25,distance_p50,distance_p75,collision_rate,goal_rate"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n_agents,
            r.model,
            r.planner.as_str(),
            r.runs,
            r.failures,
            r.solve_time_mean,
            r.solve_time_std,
            r.solve_time_p50,
            r.distance_mean,
            r.distance_var,
            r.distance_p25,
            r.distance_p50,
            r.distance_p75,
            r.collision_rate,
            r.goal_rate
        )?;
    }
    w.flush()
}
