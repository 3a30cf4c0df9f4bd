//! Iterative LQR on a potential function.
//!
//! Each iteration linearizes the dynamics and quadraticizes the potential
//! about the current rollout, runs a Riccati backward pass with control-space
//! regularization, and accepts a line-searched forward pass when the actual
//! decrease is a fixed fraction of the predicted one.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::costs::{PotentialSpec, StageQuadratic};
use crate::dynamics::{joint_jacobians, rollout_joint, step_joint, AgentModel, JointTrajectory, Layout};
use crate::error::{ConfigError, SolveError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative decrease of the potential between accepted iterates below
    /// which the solve is converged.
    pub convergence_tol: f64,
    /// Initial control-space regularization.
    pub mu_init: f64,
    /// Smallest non-zero regularization; growth from zero jumps here.
    pub mu_min: f64,
    pub mu_growth: f64,
    pub mu_max: f64,
    /// Number of backtracking steps: alpha = 1, 1/2, ..., 1/2^(n-1).
    pub line_search_steps: usize,
    /// Fraction of the predicted decrease a step must achieve.
    pub armijo: f64,
    /// Optional wall-clock limit in seconds. Set from the scenario budget,
    /// never read from configuration files.
    #[serde(skip)]
    pub time_budget: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 50,
            convergence_tol: 1e-4,
            mu_init: 1e-6,
            mu_min: 1e-6,
            mu_growth: 10.0,
            mu_max: 1e6,
            line_search_steps: 11,
            armijo: 1e-4,
            time_budget: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations == 0 {
            return Err(ConfigError::invalid("max_iterations", "must be positive"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(ConfigError::invalid("convergence_tol", "must be positive"));
        }
        if !(self.mu_init >= 0.0 && self.mu_min > 0.0 && self.mu_max >= self.mu_min) {
            return Err(ConfigError::invalid(
                "regularization",
                "need mu_init >= 0 and 0 < mu_min <= mu_max",
            ));
        }
        if !(self.mu_growth > 1.0) {
            return Err(ConfigError::invalid("mu_growth", "must exceed 1"));
        }
        if self.line_search_steps == 0 {
            return Err(ConfigError::invalid("line_search_steps", "must be positive"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(ConfigError::invalid("armijo", "must lie in (0, 1)"));
        }
        if let Some(b) = self.time_budget {
            if !(b > 0.0) {
                return Err(ConfigError::invalid("time_budget", "must be positive"));
            }
        }
        Ok(())
    }

    fn increase_mu(&self, mu: f64) -> f64 {
        (mu * self.mu_growth).max(self.mu_min)
    }

    fn decrease_mu(&self, mu: f64) -> f64 {
        if mu > self.mu_min {
            (mu / 2.0).max(self.mu_min)
        } else {
            mu
        }
    }
}

/// Predicted decrease of the quadratic model, `-(alpha d1 + alpha^2 d2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedDecrease {
    pub linear: f64,
    pub quadratic: f64,
}

impl ExpectedDecrease {
    pub fn at(&self, alpha: f64) -> f64 {
        -(alpha * self.linear + alpha * alpha * self.quadratic)
    }
}

#[derive(Debug, Clone)]
pub struct Gains {
    pub feedforward: Vec<DVector<f64>>,
    pub feedback: Vec<DMatrix<f64>>,
    pub expected: ExpectedDecrease,
}

/// Riccati recursion from `k = T-1` down to 0.
///
/// `dynamics[k]` holds `(A_k, B_k)` and `costs` has `T + 1` entries, the last
/// being the terminal stage.
pub fn backward_pass(
    dynamics: &[(DMatrix<f64>, DMatrix<f64>)],
    costs: &[StageQuadratic],
    mu: f64,
) -> Result<Gains, SolveError> {
    let horizon = dynamics.len();
    if costs.len() != horizon + 1 {
        return Err(ConfigError::dimension("stage costs", horizon + 1, costs.len()).into());
    }
    let mut vx = costs[horizon].lx.clone();
    let mut vxx = costs[horizon].lxx.clone();
    let mut feedforward = vec![DVector::zeros(0); horizon];
    let mut feedback = vec![DMatrix::zeros(0, 0); horizon];
    let mut expected = ExpectedDecrease {
        linear: 0.0,
        quadratic: 0.0,
    };

    for k in (0..horizon).rev() {
        let (a, b) = &dynamics[k];
        let c = &costs[k];
        let at = a.transpose();
        let bt = b.transpose();
        let vxx_a = &vxx * a;
        let vxx_b = &vxx * b;

        let qx = &c.lx + &at * &vx;
        let qu = &c.lu + &bt * &vx;
        let qxx = &c.lxx + &at * &vxx_a;
        let quu = &c.luu + &bt * &vxx_b;
        let qux = &c.lux + &bt * &vxx_a;

        let mut quu_reg = quu.clone();
        for i in 0..quu_reg.nrows() {
            quu_reg[(i, i)] += mu;
        }
        let chol = Cholesky::new(quu_reg).ok_or(SolveError::NotPositiveDefinite { stage: k, mu })?;
        let kff = -chol.solve(&qu);
        let kfb = -chol.solve(&qux);

        expected.linear += kff.dot(&qu);
        expected.quadratic += 0.5 * kff.dot(&(&quu * &kff));

        let kt = kfb.transpose();
        let quu_k = &quu * &kfb;
        vx = &qx + &kt * (&quu * &kff) + &kt * &qu + qux.transpose() * &kff;
        let new_vxx = &qxx + &kt * &quu_k + &kt * &qux + qux.transpose() * &kfb;
        vxx = (&new_vxx + new_vxx.transpose()) * 0.5;

        feedforward[k] = kff;
        feedback[k] = kfb;
    }
    Ok(Gains {
        feedforward,
        feedback,
        expected,
    })
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Open-loop controls; the exact controls that produce `trajectory`.
    pub controls: Vec<DVector<f64>>,
    pub trajectory: JointTrajectory,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Seconds.
    pub wall_time: f64,
    /// Potential of the initial rollout followed by every accepted iterate.
    pub cost_history: Vec<f64>,
}

fn check_finite_traj(traj: &JointTrajectory) -> Result<(), SolveError> {
    for (k, x) in traj.states.iter().enumerate() {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolveError::NonFinite {
                quantity: "state",
                stage: k,
            });
        }
    }
    Ok(())
}

struct Context<'a> {
    spec: &'a PotentialSpec,
    models: &'a [AgentModel],
    layout: Layout,
    dt: f64,
}

impl Context<'_> {
    fn cost(&self, traj: &JointTrajectory) -> Result<f64, SolveError> {
        let mut total = 0.0;
        for (k, u) in traj.controls.iter().enumerate() {
            let c = self.spec.stage_value(self.models, &self.layout, &traj.states[k], u);
            if !c.is_finite() {
                return Err(SolveError::NonFinite {
                    quantity: "stage cost",
                    stage: k,
                });
            }
            total += c;
        }
        let terminal = self.spec.terminal_value(&self.layout, &traj.states[traj.horizon()]);
        if !terminal.is_finite() {
            return Err(SolveError::NonFinite {
                quantity: "terminal cost",
                stage: traj.horizon(),
            });
        }
        Ok(total + terminal)
    }

    fn linearize(&self, traj: &JointTrajectory) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        traj.controls
            .iter()
            .enumerate()
            .map(|(k, u)| joint_jacobians(self.models, &self.layout, &traj.states[k], u, self.dt))
            .collect()
    }

    fn quadraticize(&self, traj: &JointTrajectory) -> Vec<StageQuadratic> {
        (0..=traj.horizon())
            .map(|k| self.spec.quadraticize_with(self.models, &self.layout, traj, k))
            .collect()
    }

    fn forward(&self, nominal: &JointTrajectory, gains: &Gains, alpha: f64) -> Result<JointTrajectory, SolveError> {
        let horizon = nominal.horizon();
        let mut states = Vec::with_capacity(horizon + 1);
        let mut controls = Vec::with_capacity(horizon);
        states.push(nominal.states[0].clone());
        for k in 0..horizon {
            let dx = &states[k] - &nominal.states[k];
            let u = &nominal.controls[k] + &gains.feedforward[k] * alpha + &gains.feedback[k] * dx;
            let (next, applied) = step_joint(self.models, &self.layout, &states[k], &u, self.dt);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(SolveError::NonFinite {
                    quantity: "state",
                    stage: k + 1,
                });
            }
            states.push(next);
            controls.push(applied);
        }
        Ok(JointTrajectory { states, controls })
    }
}

/// Minimizes the potential `spec` from `x0`, starting from `u_init`.
///
/// With a time budget, the budget is checked once per iteration before the
/// backward pass; on expiry the best iterate is returned unconverged.
pub fn solve(
    spec: &PotentialSpec,
    models: &[AgentModel],
    x0: &DVector<f64>,
    u_init: &[DVector<f64>],
    dt: f64,
    opts: &SolverOptions,
) -> Result<SolveReport, SolveError> {
    let start = Instant::now();
    opts.validate()?;
    spec.check_models(models)?;
    let ctx = Context {
        spec,
        models,
        layout: Layout::new(models),
        dt,
    };
    let budget = opts.time_budget.map(Duration::from_secs_f64);

    let mut traj = rollout_joint(models, x0, u_init, dt)?;
    check_finite_traj(&traj)?;
    let mut cost = ctx.cost(&traj)?;
    let mut history = vec![cost];
    let mut mu = opts.mu_init;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        if let Some(b) = budget {
            if start.elapsed() >= b {
                break;
            }
        }
        iterations += 1;

        let dynamics = ctx.linearize(&traj);
        let stages = ctx.quadraticize(&traj);
        let gains = loop {
            match backward_pass(&dynamics, &stages, mu) {
                Ok(g) => break g,
                Err(SolveError::NotPositiveDefinite { .. }) => {
                    mu = opts.increase_mu(mu);
                    if mu > opts.mu_max {
                        return Err(SolveError::RegularizationExhausted { mu });
                    }
                }
                Err(e) => return Err(e),
            }
        };

        let full = gains.expected.at(1.0);
        let scale = cost.abs().max(f64::MIN_POSITIVE);
        if full <= 10.0 * f64::EPSILON * cost.abs().max(1.0) {
            converged = true;
            break;
        }

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..opts.line_search_steps {
            let candidate = ctx.forward(&traj, &gains, alpha)?;
            let new_cost = ctx.cost(&candidate)?;
            let expected = gains.expected.at(alpha);
            if expected > 0.0 && cost - new_cost >= opts.armijo * expected {
                accepted = Some((candidate, new_cost));
                break;
            }
            alpha *= 0.5;
        }

        match accepted {
            Some((candidate, new_cost)) => {
                let relative = (cost - new_cost) / scale;
                traj = candidate;
                cost = new_cost;
                history.push(cost);
                mu = opts.decrease_mu(mu);
                if relative < opts.convergence_tol {
                    converged = true;
                    break;
                }
            }
            None => {
                if full < opts.convergence_tol * scale {
                    converged = true;
                    break;
                }
                mu = opts.increase_mu(mu);
                if mu > opts.mu_max {
                    break;
                }
            }
        }
    }

    Ok(SolveReport {
        controls: traj.controls.clone(),
        trajectory: traj,
        cost,
        iterations,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
        cost_history: history,
    })
}

/// Gradient of the potential with respect to every control, by the adjoint
/// recursion along the rollout of `controls`. Diagnostic only.
pub fn control_gradient(
    spec: &PotentialSpec,
    models: &[AgentModel],
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    dt: f64,
) -> Result<Vec<DVector<f64>>, SolveError> {
    spec.check_models(models)?;
    let traj = rollout_joint(models, x0, controls, dt)?;
    let ctx = Context {
        spec,
        models,
        layout: Layout::new(models),
        dt,
    };
    let dynamics = ctx.linearize(&traj);
    let stages = ctx.quadraticize(&traj);
    let horizon = traj.horizon();
    let mut lambda = stages[horizon].lx.clone();
    let mut grads = vec![DVector::zeros(0); horizon];
    for k in (0..horizon).rev() {
        let (a, b) = &dynamics[k];
        grads[k] = &stages[k].lu + b.transpose() * &lambda;
        lambda = &stages[k].lx + a.transpose() * &lambda;
    }
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashCheck {
    /// Most negative normalized unilateral cost change over all agents.
    pub worst: f64,
    pub per_agent: Vec<f64>,
}

/// Probes each agent's individual cost with random unilateral control
/// perturbations of norm `epsilon` and reports the most negative change
/// divided by `epsilon`.
///
/// A value no lower than about `-c epsilon` means no agent has a first-order
/// descent direction, i.e. the controls are approximately an open-loop Nash
/// equilibrium. Individual costs come from [`PotentialSpec::agent_cost`].
#[allow(clippy::too_many_arguments)]
pub fn nash_stationarity_check(
    spec: &PotentialSpec,
    models: &[AgentModel],
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    dt: f64,
    epsilon: f64,
    directions: usize,
    seed: u64,
) -> Result<NashCheck, SolveError> {
    spec.check_models(models)?;
    if !(epsilon > 0.0) {
        return Err(ConfigError::invalid("epsilon", "must be positive").into());
    }
    let layout = Layout::new(models);
    let base = rollout_joint(models, x0, controls, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_agent = Vec::with_capacity(models.len());

    for agent in 0..models.len() {
        let base_cost = spec.agent_cost(models, &base, agent);
        let range = layout.control_range(agent);
        let mut worst = f64::INFINITY;
        for _ in 0..directions {
            let mut delta: Vec<DVector<f64>> = (0..controls.len())
                .map(|_| DVector::from_fn(range.len(), |_, _| StandardNormal.sample(&mut rng)))
                .collect();
            let norm = delta.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt();
            for d in &mut delta {
                *d *= epsilon / norm;
            }
            let perturbed: Vec<DVector<f64>> = controls
                .iter()
                .zip(&delta)
                .map(|(u, d)| {
                    let mut u = u.clone();
                    let mut block = u.rows_mut(range.start, range.len());
                    block += d;
                    u
                })
                .collect();
            let traj = rollout_joint(models, x0, &perturbed, dt)?;
            let change = spec.agent_cost(models, &traj, agent) - base_cost;
            worst = worst.min(change / epsilon);
        }
        per_agent.push(worst);
    }
    let worst = per_agent.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(NashCheck { worst, per_agent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{default_tracking, CostParams, ProximityCost};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn single_di(goal: DVector<f64>) -> (Vec<AgentModel>, PotentialSpec) {
        let models = vec![AgentModel::double_integrator_2d()];
        let tracking = default_tracking(&models, &[goal], &CostParams::default()).unwrap();
        let spec = PotentialSpec::centralized(vec![0], tracking, ProximityCost::new(50.0, 0.5).unwrap()).unwrap();
        (models, spec)
    }

    #[test]
    fn zero_cost_gives_zero_gains() {
        let n = 4;
        let m = 2;
        let horizon = 5;
        let dynamics = vec![(DMatrix::identity(n, n), DMatrix::zeros(n, m)); horizon];
        let zero_stage = StageQuadratic {
            lx: DVector::zeros(n),
            lu: DVector::zeros(m),
            lxx: DMatrix::zeros(n, n),
            luu: DMatrix::zeros(m, m),
            lux: DMatrix::zeros(m, n),
        };
        let mut stages = vec![zero_stage; horizon + 1];
        stages[horizon].lu = DVector::zeros(0);
        stages[horizon].luu = DMatrix::zeros(0, 0);
        stages[horizon].lux = DMatrix::zeros(0, n);
        let gains = backward_pass(&dynamics, &stages, 1e-6).unwrap();
        assert!(gains.feedforward.iter().all(|k| k.amax() == 0.0));
        assert!(gains.feedback.iter().all(|k| k.amax() == 0.0));
        assert_eq!(gains.expected.at(1.0), 0.0);
        assert!(matches!(
            backward_pass(&dynamics, &stages, 0.0),
            Err(SolveError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn optimal_start_converges_immediately() {
        let goal = v(&[1.0, 1.0, 0.0, 0.0]);
        let (models, spec) = single_di(goal.clone());
        let report = solve(
            &spec,
            &models,
            &goal,
            &vec![DVector::zeros(2); 20],
            0.1,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2);
        assert_eq!(report.cost, 0.0);
    }

    #[test]
    fn accepted_costs_decrease_monotonically() {
        let (models, spec) = single_di(v(&[5.0, -3.0, 0.0, 0.0]));
        let x0 = v(&[0.0, 0.0, 0.0, 0.0]);
        let report = solve(
            &spec,
            &models,
            &x0,
            &vec![DVector::zeros(2); 40],
            0.1,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert!(report.cost_history.windows(2).all(|w| w[1] <= w[0]));
        let end = report.trajectory.states.last().unwrap();
        assert!((end.rows(0, 2) - v(&[5.0, -3.0])).norm() < 0.1);
        assert!(
            (spec.potential_value(&models, &report.trajectory) - report.cost).abs() <= 1e-12 * report.cost.max(1.0)
        );
        assert_eq!(report.trajectory.feasibility_residual(&models, 0.1), 0.0);
    }

    #[test]
    fn non_finite_rollout_is_reported() {
        let (models, spec) = single_di(v(&[0.0, 0.0, 0.0, 0.0]));
        let x0 = v(&[f64::NAN, 0.0, 0.0, 0.0]);
        let err = solve(
            &spec,
            &models,
            &x0,
            &vec![DVector::zeros(2); 5],
            0.1,
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            SolveError::NonFinite {
                quantity: "state",
                stage: 0
            }
        );
    }

    #[test]
    fn options_validation() {
        let mut o = SolverOptions::default();
        assert!(o.validate().is_ok());
        o.convergence_tol = 0.0;
        assert!(o.validate().is_err());
        let o = SolverOptions {
            time_budget: Some(0.0),
            ..SolverOptions::default()
        };
        assert!(o.validate().is_err());
    }

    #[test]
    fn single_agent_nash_check_is_gradient_check() {
        let (models, spec) = single_di(v(&[2.0, 1.0, 0.0, 0.0]));
        let x0 = DVector::zeros(4);
        let opts = SolverOptions {
            convergence_tol: 1e-12,
            max_iterations: 200,
            ..SolverOptions::default()
        };
        let report = solve(&spec, &models, &x0, &vec![DVector::zeros(2); 30], 0.1, &opts).unwrap();
        let grad = control_gradient(&spec, &models, &x0, &report.controls, 0.1).unwrap();
        let gnorm = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
        assert!(gnorm < 1e-6, "{gnorm}");
        let check = nash_stationarity_check(&spec, &models, &x0, &report.controls, 0.1, 1e-4, 32, 0).unwrap();
        assert!(check.worst >= -1e-6);
        // A zero control sequence is far from optimal: some direction descends.
        let zeros = vec![DVector::zeros(2); 30];
        let check = nash_stationarity_check(&spec, &models, &x0, &zeros, 0.1, 1e-4, 32, 0).unwrap();
        assert!(check.worst < -1.0);
    }
}
