//! Discrete-time agent dynamics.
//!
//! Every agent evolves independently of the others: its next state depends
//! only on its own state and control. The joint system is the concatenation
//! of the agents in index order.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;
pub const DEFAULT_MAX_TILT: f64 = 0.3;

/// Scenario-file key for a dynamics model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKey {
    #[serde(rename = "double_integrator")]
    DoubleIntegrator,
    #[serde(rename = "unicycle")]
    Unicycle,
    #[serde(rename = "quad6d")]
    Quad6d,
}

impl ModelKey {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKey::DoubleIntegrator => "double_integrator",
            ModelKey::Unicycle => "unicycle",
            ModelKey::Quad6d => "quad6d",
        }
    }

    /// Builds the model with the given quadcopter parameters (ignored by the
    /// planar models).
    pub fn build(self, gravity: f64, max_tilt: f64) -> Result<AgentModel> {
        match self {
            ModelKey::DoubleIntegrator => Ok(AgentModel::double_integrator_2d()),
            ModelKey::Unicycle => Ok(AgentModel::unicycle_2d()),
            ModelKey::Quad6d => AgentModel::quadcopter_6d(gravity, max_tilt),
        }
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKey {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double_integrator" => Ok(ModelKey::DoubleIntegrator),
            "unicycle" => Ok(ModelKey::Unicycle),
            "quad6d" => Ok(ModelKey::Quad6d),
            other => Err(ConfigError::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// (p_x, p_y, v_x, v_y), control (a_x, a_y); exact zero-order hold.
    DoubleIntegrator,
    /// (p_x, p_y, theta, v), control (omega, a); RK4.
    Unicycle,
    /// (p_x, p_y, p_z, v_x, v_y, v_z), control (pitch, roll, thrust); RK4.
    Quadcopter { gravity: f64 },
}

/// Per-dimension control limits applied before integration.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl ControlBounds {
    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| u[i].clamp(self.lower[i], self.upper[i]))
    }
}

/// Dynamics of a single agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub id: usize,
    kind: Kind,
    bounds: Option<ControlBounds>,
}

impl AgentModel {
    pub fn double_integrator_2d() -> Self {
        AgentModel {
            id: 0,
            kind: Kind::DoubleIntegrator,
            bounds: None,
        }
    }

    pub fn unicycle_2d() -> Self {
        AgentModel {
            id: 0,
            kind: Kind::Unicycle,
            bounds: None,
        }
    }

    /// Six-state quadcopter driven by pitch, roll and collective thrust
    /// (per unit mass). Tilt angles are bounded by `max_tilt` to stay clear
    /// of the `tan` singularity.
    pub fn quadcopter_6d(gravity: f64, max_tilt: f64) -> Result<Self> {
        if !(gravity > 0.0 && gravity.is_finite()) {
            return Err(ConfigError::invalid("gravity", "must be positive"));
        }
        if !(max_tilt > 0.0 && max_tilt < FRAC_PI_2) {
            return Err(ConfigError::invalid(
                "max_tilt",
                format!("must lie in (0, pi/2), got {max_tilt}"),
            ));
        }
        let inf = f64::INFINITY;
        Ok(AgentModel {
            id: 0,
            kind: Kind::Quadcopter { gravity },
            bounds: Some(ControlBounds {
                lower: DVector::from_vec(vec![-max_tilt, -max_tilt, -inf]),
                upper: DVector::from_vec(vec![max_tilt, max_tilt, inf]),
            }),
        })
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn with_bounds(mut self, bounds: Option<ControlBounds>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn key(&self) -> ModelKey {
        match self.kind {
            Kind::DoubleIntegrator => ModelKey::DoubleIntegrator,
            Kind::Unicycle => ModelKey::Unicycle,
            Kind::Quadcopter { .. } => ModelKey::Quad6d,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            Kind::DoubleIntegrator | Kind::Unicycle => 4,
            Kind::Quadcopter { .. } => 6,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self.kind {
            Kind::DoubleIntegrator | Kind::Unicycle => 2,
            Kind::Quadcopter { .. } => 3,
        }
    }

    /// Workspace dimension. Positions are always the leading state entries.
    pub fn position_dim(&self) -> usize {
        match self.kind {
            Kind::DoubleIntegrator | Kind::Unicycle => 2,
            Kind::Quadcopter { .. } => 3,
        }
    }

    pub fn position_of(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(0, self.position_dim()).into_owned()
    }

    pub fn control_bounds(&self) -> Option<&ControlBounds> {
        self.bounds.as_ref()
    }

    /// Control that keeps the agent at rest: zero, or hover thrust for the
    /// quadcopter.
    pub fn nominal_control(&self) -> DVector<f64> {
        match self.kind {
            Kind::Quadcopter { gravity } => DVector::from_vec(vec![0.0, 0.0, gravity]),
            _ => DVector::zeros(self.control_dim()),
        }
    }

    /// True for state entries that are positions; used for default weights.
    pub fn is_position_coordinate(&self, idx: usize) -> bool {
        idx < self.position_dim()
    }

    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        match &self.bounds {
            Some(b) => b.clamp(u),
            None => u.clone(),
        }
    }

    /// One discrete step. The control is used as given; see [`rollout`] for
    /// clamping.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
        match self.kind {
            Kind::DoubleIntegrator => {
                let half = 0.5 * dt * dt;
                DVector::from_vec(vec![
                    x[0] + x[2] * dt + u[0] * half,
                    x[1] + x[3] * dt + u[1] * half,
                    x[2] + u[0] * dt,
                    x[3] + u[1] * dt,
                ])
            }
            _ => {
                let f = |s: &DVector<f64>| self.derivative(s, u);
                let k1 = f(x);
                let k2 = f(&(x + &k1 * (0.5 * dt)));
                let k3 = f(&(x + &k2 * (0.5 * dt)));
                let k4 = f(&(x + &k3 * dt));
                x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        }
    }

    /// Jacobians `(A, B)` of [`AgentModel::step`] with respect to state and
    /// control.
    pub fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.state_dim();
        let m = self.control_dim();
        match self.kind {
            Kind::DoubleIntegrator => {
                let mut a = DMatrix::identity(n, n);
                a[(0, 2)] = dt;
                a[(1, 3)] = dt;
                let mut b = DMatrix::zeros(n, m);
                b[(0, 0)] = 0.5 * dt * dt;
                b[(1, 1)] = 0.5 * dt * dt;
                b[(2, 0)] = dt;
                b[(3, 1)] = dt;
                (a, b)
            }
            _ => {
                // Differentiate through the four RK4 stages.
                let eye = DMatrix::<f64>::identity(n, n);
                let (k1, f1x, f1u) = self.derivative_with_jacobians(x, u);
                let dk1x = f1x;
                let dk1u = f1u;

                let x2 = x + &k1 * (0.5 * dt);
                let (k2, f2x, f2u) = self.derivative_with_jacobians(&x2, u);
                let dk2x = &f2x * (&eye + &dk1x * (0.5 * dt));
                let dk2u = &f2x * (&dk1u * (0.5 * dt)) + f2u;

                let x3 = x + &k2 * (0.5 * dt);
                let (_, f3x, f3u) = self.derivative_with_jacobians(&x3, u);
                let dk3x = &f3x * (&eye + &dk2x * (0.5 * dt));
                let dk3u = &f3x * (&dk2u * (0.5 * dt)) + f3u;

                let k3 = self.derivative(&x3, u);
                let x4 = x + &k3 * dt;
                let (_, f4x, f4u) = self.derivative_with_jacobians(&x4, u);
                let dk4x = &f4x * (&eye + &dk3x * dt);
                let dk4u = &f4x * (&dk3u * dt) + f4u;

                let a = &eye + (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (dt / 6.0);
                let b = (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (dt / 6.0);
                (a, b)
            }
        }
    }

    /// Continuous-time vector field of the nonlinear models.
    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            Kind::DoubleIntegrator => DVector::from_vec(vec![x[2], x[3], u[0], u[1]]),
            Kind::Unicycle => {
                let (s, c) = x[2].sin_cos();
                DVector::from_vec(vec![x[3] * c, x[3] * s, u[0], u[1]])
            }
            Kind::Quadcopter { gravity } => DVector::from_vec(vec![
                x[3],
                x[4],
                x[5],
                gravity * u[0].tan(),
                -gravity * u[1].tan(),
                u[2] - gravity,
            ]),
        }
    }

    fn derivative_with_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.state_dim();
        let m = self.control_dim();
        let mut fx = DMatrix::zeros(n, n);
        let mut fu = DMatrix::zeros(n, m);
        match self.kind {
            Kind::DoubleIntegrator => {
                fx[(0, 2)] = 1.0;
                fx[(1, 3)] = 1.0;
                fu[(2, 0)] = 1.0;
                fu[(3, 1)] = 1.0;
            }
            Kind::Unicycle => {
                let (s, c) = x[2].sin_cos();
                fx[(0, 2)] = -x[3] * s;
                fx[(0, 3)] = c;
                fx[(1, 2)] = x[3] * c;
                fx[(1, 3)] = s;
                fu[(2, 0)] = 1.0;
                fu[(3, 1)] = 1.0;
            }
            Kind::Quadcopter { gravity } => {
                fx[(0, 3)] = 1.0;
                fx[(1, 4)] = 1.0;
                fx[(2, 5)] = 1.0;
                let sec2 = |a: f64| {
                    let c = a.cos();
                    1.0 / (c * c)
                };
                fu[(3, 0)] = gravity * sec2(u[0]);
                fu[(4, 1)] = -gravity * sec2(u[1]);
                fu[(5, 2)] = 1.0;
            }
        }
        (self.derivative(x, u), fx, fu)
    }
}

/// Offsets of each agent's block inside the joint state and control vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    state_offsets: Vec<usize>,
    control_offsets: Vec<usize>,
    state_dims: Vec<usize>,
    control_dims: Vec<usize>,
}

impl Layout {
    pub fn new(models: &[AgentModel]) -> Self {
        let mut state_offsets = Vec::with_capacity(models.len());
        let mut control_offsets = Vec::with_capacity(models.len());
        let (mut n, mut m) = (0, 0);
        for model in models {
            state_offsets.push(n);
            control_offsets.push(m);
            n += model.state_dim();
            m += model.control_dim();
        }
        Layout {
            state_offsets,
            control_offsets,
            state_dims: models.iter().map(AgentModel::state_dim).collect(),
            control_dims: models.iter().map(AgentModel::control_dim).collect(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.state_dims.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dims.iter().sum()
    }

    pub fn control_dim(&self) -> usize {
        self.control_dims.iter().sum()
    }

    pub fn state_range(&self, agent: usize) -> std::ops::Range<usize> {
        self.state_offsets[agent]..self.state_offsets[agent] + self.state_dims[agent]
    }

    pub fn control_range(&self, agent: usize) -> std::ops::Range<usize> {
        self.control_offsets[agent]..self.control_offsets[agent] + self.control_dims[agent]
    }

    pub fn agent_state(&self, x: &DVector<f64>, agent: usize) -> DVector<f64> {
        let r = self.state_range(agent);
        x.rows(r.start, r.len()).into_owned()
    }

    pub fn agent_control(&self, u: &DVector<f64>, agent: usize) -> DVector<f64> {
        let r = self.control_range(agent);
        u.rows(r.start, r.len()).into_owned()
    }
}

/// Joint state as an ordered list of per-agent states.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub per_agent: Vec<DVector<f64>>,
}

impl JointState {
    pub fn new(per_agent: Vec<DVector<f64>>) -> Self {
        JointState { per_agent }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn concat(&self) -> DVector<f64> {
        let n = self.per_agent.iter().map(|x| x.len()).sum();
        let mut out = DVector::zeros(n);
        let mut offset = 0;
        for x in &self.per_agent {
            out.rows_mut(offset, x.len()).copy_from(x);
            offset += x.len();
        }
        out
    }

    pub fn split(joint: &DVector<f64>, layout: &Layout) -> Result<Self> {
        if joint.len() != layout.state_dim() {
            return Err(ConfigError::dimension("joint state", layout.state_dim(), joint.len()));
        }
        Ok(JointState {
            per_agent: (0..layout.n_agents()).map(|i| layout.agent_state(joint, i)).collect(),
        })
    }

    pub fn validate(&self, models: &[AgentModel]) -> Result<()> {
        if self.per_agent.len() != models.len() {
            return Err(ConfigError::dimension(
                "number of agent states",
                models.len(),
                self.per_agent.len(),
            ));
        }
        for (x, model) in self.per_agent.iter().zip(models) {
            if x.len() != model.state_dim() {
                return Err(ConfigError::dimension(
                    format!("state of agent {}", model.id),
                    model.state_dim(),
                    x.len(),
                ));
            }
        }
        Ok(())
    }
}

/// States `x_0..=x_T` and controls `u_0..u_{T-1}` of all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl JointTrajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Per-agent states over the trajectory.
    pub fn agent_states(&self, layout: &Layout, agent: usize) -> Vec<DVector<f64>> {
        self.states.iter().map(|x| layout.agent_state(x, agent)).collect()
    }

    pub fn agent_controls(&self, layout: &Layout, agent: usize) -> Vec<DVector<f64>> {
        self.controls.iter().map(|u| layout.agent_control(u, agent)).collect()
    }

    /// Checks that each state is the step of its predecessor under the
    /// recorded control. Returns the largest absolute discrepancy.
    pub fn feasibility_residual(&self, models: &[AgentModel], dt: f64) -> f64 {
        let layout = Layout::new(models);
        let mut worst: f64 = 0.0;
        for (k, u) in self.controls.iter().enumerate() {
            let next = step_joint(models, &layout, &self.states[k], u, dt).0;
            worst = worst.max((&next - &self.states[k + 1]).amax());
        }
        worst
    }
}

/// Advances the joint state one step. Controls are clamped to the model
/// bounds; the clamped joint control is returned alongside the next state.
pub fn step_joint(
    models: &[AgentModel],
    layout: &Layout,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> (DVector<f64>, DVector<f64>) {
    let mut next = DVector::zeros(x.len());
    let mut applied = DVector::zeros(u.len());
    for (i, model) in models.iter().enumerate() {
        let xi = layout.agent_state(x, i);
        let ui = model.clamp(&layout.agent_control(u, i));
        let sr = layout.state_range(i);
        let cr = layout.control_range(i);
        next.rows_mut(sr.start, sr.len()).copy_from(&model.step(&xi, &ui, dt));
        applied.rows_mut(cr.start, cr.len()).copy_from(&ui);
    }
    (next, applied)
}

/// Block-diagonal joint Jacobians at `(x, u)`.
pub fn joint_jacobians(
    models: &[AgentModel],
    layout: &Layout,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = layout.state_dim();
    let m = layout.control_dim();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for (i, model) in models.iter().enumerate() {
        let (ai, bi) = model.jacobians(&layout.agent_state(x, i), &layout.agent_control(u, i), dt);
        let sr = layout.state_range(i);
        let cr = layout.control_range(i);
        a.view_mut((sr.start, sr.start), (sr.len(), sr.len())).copy_from(&ai);
        b.view_mut((sr.start, cr.start), (sr.len(), cr.len())).copy_from(&bi);
    }
    (a, b)
}

/// Integrates the joint system from `x0` under `controls` (one joint control
/// vector per step). Stored controls are the clamped ones actually applied.
pub fn rollout(models: &[AgentModel], x0: &JointState, controls: &[DVector<f64>], dt: f64) -> Result<JointTrajectory> {
    x0.validate(models)?;
    rollout_joint(models, &x0.concat(), controls, dt)
}

/// [`rollout`] over an already concatenated initial state.
pub fn rollout_joint(
    models: &[AgentModel],
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    dt: f64,
) -> Result<JointTrajectory> {
    let layout = Layout::new(models);
    if x0.len() != layout.state_dim() {
        return Err(ConfigError::dimension("initial state", layout.state_dim(), x0.len()));
    }
    if controls.is_empty() {
        return Err(ConfigError::invalid("horizon", "must be at least 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ConfigError::invalid("dt", "must be positive"));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut applied = Vec::with_capacity(controls.len());
    states.push(x0.clone());
    for (k, u) in controls.iter().enumerate() {
        if u.len() != layout.control_dim() {
            return Err(ConfigError::dimension(
                format!("control at step {k}"),
                layout.control_dim(),
                u.len(),
            ));
        }
        let (next, used) = step_joint(models, &layout, &states[k], u, dt);
        states.push(next);
        applied.push(used);
    }
    Ok(JointTrajectory {
        states,
        controls: applied,
    })
}
