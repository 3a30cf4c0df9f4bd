//! Command-line front end: `solve`, `campaign` and `check`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;
use crate::ilqr::SolverOptions;
use crate::planner::{run_receding_horizon, BudgetScope, PlannerKind};
use crate::sim::{
    build_scenario, run_campaign, summarize, trajectory_file_name, write_records_jsonl, write_summary_csv,
    write_trajectory_csv, CampaignGrid, CampaignOptions, MetricsRecord, ScenarioConfig, SummaryRow,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const OUT_DIR_ENV: &str = "DPILQR_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run failed: {0}")]
    Run(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for unusable input, 1 for failures while running or writing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Run(_) | CliError::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub kind: PlannerKind,
    pub budget_scope: BudgetScope,
    /// Solve distributed subproblems concurrently.
    pub parallel: bool,
}

impl Default for PlannerSection {
    fn default() -> Self {
        PlannerSection {
            kind: PlannerKind::Distributed,
            budget_scope: BudgetScope::PerAgent,
            parallel: true,
        }
    }
}

/// Provenance written alongside a run; ignored when the file is read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInfo {
    pub version: String,
    pub seed: u64,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub scenario: ScenarioConfig,
    pub solver: SolverOptions,
    pub planner: PlannerSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignPlannerSection {
    pub budget_scope: BudgetScope,
    pub parallel: bool,
}

impl Default for CampaignPlannerSection {
    fn default() -> Self {
        CampaignPlannerSection {
            budget_scope: BudgetScope::PerAgent,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignFile {
    pub campaign: CampaignGrid,
    /// Base configuration; `n_agents`, `model`, `seed` and `agents` are
    /// replaced per grid point.
    pub scenario: ScenarioConfig,
    pub solver: SolverOptions,
    pub planner: CampaignPlannerSection,
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, CliError> {
    read_toml(path)
}

pub fn load_campaign_file(path: &Path) -> Result<CampaignFile, CliError> {
    read_toml(path)
}

#[derive(Debug, Parser)]
#[command(name = "dpilqr", version, about = "Distributed potential-game iLQR planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one receding-horizon episode.
    Solve {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a Monte Carlo campaign over seeds, agent counts, models and planners.
    Campaign {
        campaign: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Validate a scenario or campaign file without running it.
    Check { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// central or distributed
    #[arg(long)]
    pub planner: Option<PlannerKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Per-step wall-clock budget in seconds.
    #[arg(long)]
    pub budget: Option<f64>,
    /// per-agent or global
    #[arg(long)]
    pub budget_scope: Option<BudgetScope>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Run everything on one thread in a fixed order.
    #[arg(long)]
    pub serial: bool,
    #[arg(long, env = OUT_DIR_ENV, default_value = "dpilqr-out")]
    pub out: PathBuf,
    /// Scenario seed (solve) or first seed (campaign).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CommonArgs {
    fn apply_scenario(&self, cfg: &mut ScenarioConfig) {
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(b) = self.budget {
            cfg.budget = Some(b);
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let threads = if self.serial { Some(1) } else { self.jobs };
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(ConfigError::invalid("jobs", "must be at least 1").into());
            }
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| CliError::Run(e.to_string()))
    }
}

/// What a `solve` run produced.
#[derive(Debug)]
pub struct SolveOutput {
    pub trajectory: PathBuf,
    pub metrics: PathBuf,
    pub manifest: PathBuf,
    pub record: MetricsRecord,
}

pub fn cmd_solve(path: &Path, args: &CommonArgs) -> Result<SolveOutput, CliError> {
    let mut file = load_scenario_file(path)?;
    args.apply_scenario(&mut file.scenario);
    if let Some(s) = args.seed {
        file.scenario.seed = s;
    }
    if let Some(p) = args.planner {
        file.planner.kind = p;
    }
    if let Some(b) = args.budget_scope {
        file.planner.budget_scope = b;
    }
    if args.serial {
        file.planner.parallel = false;
    }
    file.solver.validate()?;
    let scenario = build_scenario(&file.scenario)?;
    let opts = CampaignOptions {
        solver: file.solver.clone(),
        budget_scope: file.planner.budget_scope,
        serial: !file.planner.parallel,
    }
    .planner_options(&file.scenario);

    let pool = args.pool()?;
    let trace = pool
        .install(|| run_receding_horizon(&scenario, file.planner.kind, file.scenario.n_steps, &opts))
        .map_err(|e| CliError::Run(e.to_string()))?;
    let record = MetricsRecord::from_trace(&file.scenario, &trace);

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let trajectory = args.out.join(trajectory_file_name(&file.scenario, file.planner.kind));
    write_trajectory_csv(&trajectory, &trace, &scenario.models, scenario.dt).map_err(io_err(&trajectory))?;
    let metrics = args.out.join("metrics.json");
    let json = serde_json::to_string_pretty(&record).map_err(|e| CliError::Run(e.to_string()))?;
    fs::write(&metrics, json + "\n").map_err(io_err(&metrics))?;

    file.manifest = Some(ManifestInfo {
        version: VERSION.to_string(),
        seed: file.scenario.seed,
        command: "solve".to_string(),
    });
    let manifest = args.out.join("manifest.toml");
    let text = toml::to_string(&file).map_err(|e| CliError::Run(e.to_string()))?;
    fs::write(&manifest, text).map_err(io_err(&manifest))?;

    Ok(SolveOutput {
        trajectory,
        metrics,
        manifest,
        record,
    })
}

#[derive(Debug)]
pub struct CampaignOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<SummaryRow>,
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
    pub trajectory_dir: PathBuf,
}

pub fn cmd_campaign(path: &Path, args: &CommonArgs) -> Result<CampaignOutput, CliError> {
    let mut file = load_campaign_file(path)?;
    args.apply_scenario(&mut file.scenario);
    if let Some(s) = args.seed {
        file.campaign.first_seed = s;
    }
    if let Some(p) = args.planner {
        file.campaign.planners = vec![p];
    }
    if let Some(b) = args.budget_scope {
        file.planner.budget_scope = b;
    }
    file.solver.validate()?;
    let configs = file.campaign.expand(&file.scenario);
    for cfg in &configs {
        cfg.validate()?;
    }
    let opts = CampaignOptions {
        solver: file.solver.clone(),
        budget_scope: file.planner.budget_scope,
        serial: args.serial || !file.planner.parallel,
    };

    let pool = args.pool()?;
    let runs = pool.install(|| run_campaign(&configs, &file.campaign.planners, &opts));

    let trajectory_dir = args.out.join("trajectories");
    fs::create_dir_all(&trajectory_dir).map_err(io_err(&trajectory_dir))?;
    for run in &runs {
        if let Some(trace) = &run.trace {
            let p = trajectory_dir.join(trajectory_file_name(&run.config, run.planner));
            write_trajectory_csv(&p, trace, &run.models, run.config.dt).map_err(io_err(&p))?;
        }
    }
    let records: Vec<MetricsRecord> = runs.into_iter().map(|r| r.record).collect();
    let summary = summarize(&records);
    let records_path = args.out.join("records.jsonl");
    write_records_jsonl(&records_path, &records).map_err(io_err(&records_path))?;
    let summary_path = args.out.join("summary.csv");
    write_summary_csv(&summary_path, &summary).map_err(io_err(&summary_path))?;
    Ok(CampaignOutput {
        records,
        summary,
        records_path,
        summary_path,
        trajectory_dir,
    })
}

/// Validates either kind of file, telling them apart by a `[campaign]` table.
pub fn cmd_check(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if table.contains_key("campaign") {
        let file = load_campaign_file(path)?;
        file.solver.validate()?;
        let configs = file.campaign.expand(&file.scenario);
        for cfg in &configs {
            cfg.validate()?;
        }
        Ok(format!(
            "campaign ok: {} scenarios x {} planners",
            configs.len(),
            file.campaign.planners.len()
        ))
    } else {
        let file = load_scenario_file(path)?;
        file.solver.validate()?;
        let scenario = build_scenario(&file.scenario)?;
        Ok(format!(
            "scenario ok: {} {} agents, horizon {}, dt {}",
            scenario.n_agents(),
            file.scenario.model,
            scenario.horizon,
            scenario.dt
        ))
    }
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:>3} {:<17} {:<11} {:>5} {:>13} {:>12} {:>12} {:>9} {:>9}\n",
        "n", "model", "planner", "runs", "solve_ms", "dist_mean", "dist_var", "collide", "goal"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>3} {:<17} {:<11} {:>5} {:>13.3} {:>12.4} {:>12.4} {:>9.3} {:>9.3}\n",
            r.n_agents,
            r.model.as_str(),
            r.planner.as_str(),
            r.runs,
            r.solve_time_mean * 1e3,
            r.distance_mean,
            r.distance_var,
            r.collision_rate,
            r.goal_rate
        ));
    }
    out
}

/// Runs the parsed command, printing a short report. Returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve { scenario, common } => cmd_solve(scenario, common).map(|o| {
            format!(
                "{} steps, termination {}, mean final distance {:.4}, min separation {:.4}\nwrote {}",
                o.record.steps,
                o.record.termination.map_or("none".to_string(), |t| format!("{t:?}")),
                o.record.mean_final_distance,
                o.record.min_pairwise_distance,
                o.trajectory.parent().unwrap_or(Path::new(".")).display()
            )
        }),
        Command::Campaign { campaign, common } => cmd_campaign(campaign, common).map(|o| {
            let failures = o.records.iter().filter(|r| r.error.is_some()).count();
            format!(
                "{}{} records ({} failed)\nwrote {}",
                format_summary(&o.summary),
                o.records.len(),
                failures,
                o.records_path.parent().unwrap_or(Path::new(".")).display()
            )
        }),
        Command::Check { file } => cmd_check(file),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
