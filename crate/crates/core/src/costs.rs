//! Tracking and collision-avoidance costs, and the potential functions built
//! from them.
//!
//! A [`PotentialSpec`] is the shared objective minimized by the solver: the
//! sum of every member's tracking cost plus one proximity penalty per
//! coupled pair. With all pairs coupled it is the centralized potential;
//! with only the owner's pairs it is a local subproblem potential.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentModel, JointTrajectory, Layout};
use crate::error::{ConfigError, Result};

const MATRIX_TOL: f64 = 1e-10;

/// Scalar weights used to build default tracking and proximity costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    /// Diagonal state weight on position coordinates.
    pub q_position: f64,
    /// Diagonal state weight on velocity and heading coordinates.
    pub q_other: f64,
    /// Diagonal control weight.
    pub r: f64,
    /// Terminal weight as a multiple of the running state weight.
    pub terminal_scale: f64,
    /// Proximity penalty weight.
    pub beta: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            q_position: 1.0,
            q_other: 0.1,
            r: 0.1,
            terminal_scale: 100.0,
            beta: 50.0,
        }
    }
}

/// Quadratic goal tracking with a control penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    q_final: DMatrix<f64>,
    x_goal: DVector<f64>,
    u_ref: DVector<f64>,
}

fn check_symmetric(name: &str, m: &DMatrix<f64>, strictly_positive: bool) -> Result<()> {
    if !m.is_square() {
        return Err(ConfigError::invalid(name, "must be square"));
    }
    if (m - m.transpose()).amax() > MATRIX_TOL {
        return Err(ConfigError::invalid(name, "must be symmetric"));
    }
    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
    if strictly_positive && min_eig <= MATRIX_TOL {
        return Err(ConfigError::invalid(
            name,
            format!("must be positive definite (smallest eigenvalue {min_eig:e})"),
        ));
    }
    if !strictly_positive && min_eig < -MATRIX_TOL {
        return Err(ConfigError::invalid(
            name,
            format!("must be positive semidefinite (smallest eigenvalue {min_eig:e})"),
        ));
    }
    Ok(())
}

impl TrackingCost {
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        q_final: DMatrix<f64>,
        x_goal: DVector<f64>,
        u_ref: DVector<f64>,
    ) -> Result<Self> {
        check_symmetric("Q", &q, false)?;
        check_symmetric("Q_f", &q_final, false)?;
        check_symmetric("R", &r, true)?;
        let n = x_goal.len();
        let m = u_ref.len();
        if q.nrows() != n {
            return Err(ConfigError::dimension("Q", n, q.nrows()));
        }
        if q_final.nrows() != n {
            return Err(ConfigError::dimension("Q_f", n, q_final.nrows()));
        }
        if r.nrows() != m {
            return Err(ConfigError::dimension("R", m, r.nrows()));
        }
        Ok(TrackingCost {
            q,
            r,
            q_final,
            x_goal,
            u_ref,
        })
    }

    /// Diagonal weights from `params`, centered on the model's nominal
    /// control.
    pub fn from_params(model: &AgentModel, x_goal: DVector<f64>, params: &CostParams) -> Result<Self> {
        let n = model.state_dim();
        if x_goal.len() != n {
            return Err(ConfigError::dimension("goal state", n, x_goal.len()));
        }
        let diag = DVector::from_fn(n, |i, _| {
            if model.is_position_coordinate(i) {
                params.q_position
            } else {
                params.q_other
            }
        });
        let q = DMatrix::from_diagonal(&diag);
        let q_final = &q * params.terminal_scale;
        let r = DMatrix::identity(model.control_dim(), model.control_dim()) * params.r;
        TrackingCost::new(q, r, q_final, x_goal, model.nominal_control())
    }

    pub fn goal(&self) -> &DVector<f64> {
        &self.x_goal
    }

    pub fn u_ref(&self) -> &DVector<f64> {
        &self.u_ref
    }

    pub fn running(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let dx = x - &self.x_goal;
        let du = u - &self.u_ref;
        dx.dot(&(&self.q * &dx)) + du.dot(&(&self.r * &du))
    }

    pub fn terminal(&self, x: &DVector<f64>) -> f64 {
        let dx = x - &self.x_goal;
        dx.dot(&(&self.q_final * &dx))
    }
}

/// Quadratic hinge penalizing pairs closer than `d_prox`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityCost {
    pub beta: f64,
    pub d_prox: f64,
}

impl ProximityCost {
    pub fn new(beta: f64, d_prox: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ConfigError::invalid("beta", "must be positive"));
        }
        if !(d_prox > 0.0 && d_prox.is_finite()) {
            return Err(ConfigError::invalid("d_prox", "must be positive"));
        }
        Ok(ProximityCost { beta, d_prox })
    }

    pub fn value(&self, p_i: &DVector<f64>, p_j: &DVector<f64>) -> f64 {
        let d = (p_i - p_j).norm();
        if d < self.d_prox {
            self.beta * (d - self.d_prox).powi(2)
        } else {
            0.0
        }
    }

    /// Unit vector from `p_j` to `p_i`; the first axis when they coincide.
    fn direction(p_i: &DVector<f64>, p_j: &DVector<f64>) -> (DVector<f64>, f64) {
        let diff = p_i - p_j;
        let d = diff.norm();
        if d > 0.0 {
            (diff / d, d)
        } else {
            let mut e = DVector::zeros(p_i.len());
            e[0] = 1.0;
            (e, 0.0)
        }
    }

    /// Gradient with respect to `p_i`; the gradient with respect to `p_j`
    /// is its negation.
    pub fn gradient(&self, p_i: &DVector<f64>, p_j: &DVector<f64>) -> DVector<f64> {
        let (n, d) = Self::direction(p_i, p_j);
        if d < self.d_prox {
            n * (2.0 * self.beta * (d - self.d_prox))
        } else {
            DVector::zeros(p_i.len())
        }
    }

    /// Exact Hessian with respect to `p_i` (indefinite inside the hinge).
    /// Undefined at coincident positions, where the PSD block is returned.
    pub fn exact_hessian(&self, p_i: &DVector<f64>, p_j: &DVector<f64>) -> DMatrix<f64> {
        let dim = p_i.len();
        let (n, d) = Self::direction(p_i, p_j);
        if d >= self.d_prox {
            return DMatrix::zeros(dim, dim);
        }
        if d == 0.0 {
            return self.psd_hessian(p_i, p_j);
        }
        let nn = &n * n.transpose();
        let eye = DMatrix::<f64>::identity(dim, dim);
        (&nn + (eye - &nn) * ((d - self.d_prox) / d)) * (2.0 * self.beta)
    }

    /// Exact Hessian with its negative eigenvalues clamped to zero.
    ///
    /// The exact Hessian has eigenvalue `2 beta` along the separation
    /// direction and `2 beta (d - d_prox) / d < 0` across it, so the
    /// clamped matrix is `2 beta n n^T`. The pair Hessian with respect to
    /// `(p_i, p_j)` is `[[H, -H], [-H, H]]`, whose eigenvalues are twice
    /// those of `H` plus zeros, so clamping commutes with that embedding.
    pub fn psd_hessian(&self, p_i: &DVector<f64>, p_j: &DVector<f64>) -> DMatrix<f64> {
        let dim = p_i.len();
        let (n, d) = Self::direction(p_i, p_j);
        if d >= self.d_prox {
            return DMatrix::zeros(dim, dim);
        }
        &n * n.transpose() * (2.0 * self.beta)
    }
}

/// Gradient and Gauss-Newton Hessian of one stage of a potential.
///
/// At the terminal stage the control blocks are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct StageQuadratic {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    pub lux: DMatrix<f64>,
}

/// Objective over an ordered set of agents: tracking for every member plus a
/// proximity penalty on each listed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    agents: Vec<usize>,
    tracking: Vec<TrackingCost>,
    proximity: ProximityCost,
    /// Pairs of local member positions, each unordered pair at most once.
    pairs: Vec<(usize, usize)>,
}

impl PotentialSpec {
    /// Every unordered pair of members is coupled.
    pub fn centralized(agents: Vec<usize>, tracking: Vec<TrackingCost>, proximity: ProximityCost) -> Result<Self> {
        let n = agents.len();
        let pairs = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::with_pairs(agents, tracking, proximity, pairs)
    }

    /// Subproblem potential of `owner`: tracking for every member, but only
    /// the pairs between the owner and each of its neighbors.
    pub fn local(
        owner: usize,
        agents: Vec<usize>,
        tracking: Vec<TrackingCost>,
        proximity: ProximityCost,
    ) -> Result<Self> {
        let owner_pos = agents
            .iter()
            .position(|&a| a == owner)
            .ok_or_else(|| ConfigError::invalid("owner", format!("agent {owner} is not a subproblem member")))?;
        let pairs = (0..agents.len())
            .filter(|&j| j != owner_pos)
            .map(|j| (owner_pos, j))
            .collect();
        Self::with_pairs(agents, tracking, proximity, pairs)
    }

    pub fn with_pairs(
        agents: Vec<usize>,
        tracking: Vec<TrackingCost>,
        proximity: ProximityCost,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if agents.len() != tracking.len() {
            return Err(ConfigError::dimension("tracking costs", agents.len(), tracking.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(i, j) in &pairs {
            if i == j || i >= agents.len() || j >= agents.len() {
                return Err(ConfigError::invalid("pairs", format!("invalid pair ({i}, {j})")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(ConfigError::invalid("pairs", format!("pair ({i}, {j}) listed twice")));
            }
        }
        Ok(PotentialSpec {
            agents,
            tracking,
            proximity,
            pairs,
        })
    }

    pub fn agents(&self) -> &[usize] {
        &self.agents
    }

    pub fn tracking(&self) -> &[TrackingCost] {
        &self.tracking
    }

    pub fn proximity(&self) -> &ProximityCost {
        &self.proximity
    }

    /// Coupled pairs as positions into [`PotentialSpec::agents`].
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn check_models(&self, models: &[AgentModel]) -> Result<()> {
        if models.len() != self.agents.len() {
            return Err(ConfigError::dimension("models", self.agents.len(), models.len()));
        }
        for (model, tc) in models.iter().zip(&self.tracking) {
            if tc.x_goal.len() != model.state_dim() {
                return Err(ConfigError::dimension(
                    format!("goal of agent {}", model.id),
                    model.state_dim(),
                    tc.x_goal.len(),
                ));
            }
            if tc.u_ref.len() != model.control_dim() {
                return Err(ConfigError::dimension(
                    format!("reference control of agent {}", model.id),
                    model.control_dim(),
                    tc.u_ref.len(),
                ));
            }
        }
        Ok(())
    }

    fn positions(models: &[AgentModel], layout: &Layout, x: &DVector<f64>) -> Vec<DVector<f64>> {
        models
            .iter()
            .enumerate()
            .map(|(i, m)| x.rows(layout.state_range(i).start, m.position_dim()).into_owned())
            .collect()
    }

    fn pair_sum(&self, positions: &[DVector<f64>], filter: impl Fn(usize, usize) -> bool) -> f64 {
        self.pairs
            .iter()
            .filter(|&&(i, j)| filter(i, j))
            .map(|&(i, j)| self.proximity.value(&positions[i], &positions[j]))
            .sum()
    }

    /// Running potential at one stage.
    pub fn stage_value(&self, models: &[AgentModel], layout: &Layout, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let tracking: f64 = self
            .tracking
            .iter()
            .enumerate()
            .map(|(i, tc)| tc.running(&layout.agent_state(x, i), &layout.agent_control(u, i)))
            .sum();
        tracking + self.pair_sum(&Self::positions(models, layout, x), |_, _| true)
    }

    pub fn terminal_value(&self, layout: &Layout, x: &DVector<f64>) -> f64 {
        self.tracking
            .iter()
            .enumerate()
            .map(|(i, tc)| tc.terminal(&layout.agent_state(x, i)))
            .sum()
    }

    /// Total potential over a trajectory: running potential over
    /// `k = 0..T` plus terminal tracking at `x_T`.
    pub fn potential_value(&self, models: &[AgentModel], traj: &JointTrajectory) -> f64 {
        let layout = Layout::new(models);
        let running: f64 = traj
            .controls
            .iter()
            .enumerate()
            .map(|(k, u)| self.stage_value(models, &layout, &traj.states[k], u))
            .sum();
        running + self.terminal_value(&layout, &traj.states[traj.horizon()])
    }

    /// Sum of the proximity terms alone over `k = 0..T`.
    pub fn coupling_value(&self, models: &[AgentModel], traj: &JointTrajectory) -> f64 {
        let layout = Layout::new(models);
        traj.states[..traj.horizon()]
            .iter()
            .map(|x| self.pair_sum(&Self::positions(models, &layout, x), |_, _| true))
            .sum()
    }

    /// Individual cost of member `agent` (a position into `agents`) in the
    /// game whose couplings are this spec's pairs: its own tracking cost
    /// plus every proximity term it takes part in.
    pub fn agent_cost(&self, models: &[AgentModel], traj: &JointTrajectory, agent: usize) -> f64 {
        let layout = Layout::new(models);
        let tc = &self.tracking[agent];
        let involves = |i: usize, j: usize| i == agent || j == agent;
        let running: f64 = traj
            .controls
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let x = &traj.states[k];
                tc.running(&layout.agent_state(x, agent), &layout.agent_control(u, agent))
                    + self.pair_sum(&Self::positions(models, &layout, x), involves)
            })
            .sum();
        running + tc.terminal(&layout.agent_state(&traj.states[traj.horizon()], agent))
    }

    /// Gradient and PSD Hessian of stage `k` (terminal cost when `k = T`).
    ///
    /// Gradients are exact. Tracking Hessians are exact; each active
    /// proximity block uses the eigenvalue-clamped Hessian. No stage term
    /// mixes state and control, so `lux` is zero.
    pub fn quadraticize(&self, models: &[AgentModel], traj: &JointTrajectory, k: usize) -> StageQuadratic {
        let layout = Layout::new(models);
        self.quadraticize_with(models, &layout, traj, k)
    }

    pub(crate) fn quadraticize_with(
        &self,
        models: &[AgentModel],
        layout: &Layout,
        traj: &JointTrajectory,
        k: usize,
    ) -> StageQuadratic {
        let n = layout.state_dim();
        let terminal = k == traj.horizon();
        let m = if terminal { 0 } else { layout.control_dim() };
        let x = &traj.states[k];
        let mut lx = DVector::zeros(n);
        let mut lxx = DMatrix::zeros(n, n);
        let mut lu = DVector::zeros(m);
        let mut luu = DMatrix::zeros(m, m);

        for (i, tc) in self.tracking.iter().enumerate() {
            let sr = layout.state_range(i);
            let dx = layout.agent_state(x, i) - &tc.x_goal;
            let q = if terminal { &tc.q_final } else { &tc.q };
            lx.rows_mut(sr.start, sr.len()).copy_from(&(q * &dx * 2.0));
            lxx.view_mut((sr.start, sr.start), (sr.len(), sr.len()))
                .copy_from(&(q * 2.0));
            if !terminal {
                let cr = layout.control_range(i);
                let du = layout.agent_control(&traj.controls[k], i) - &tc.u_ref;
                lu.rows_mut(cr.start, cr.len()).copy_from(&(&tc.r * &du * 2.0));
                luu.view_mut((cr.start, cr.start), (cr.len(), cr.len()))
                    .copy_from(&(&tc.r * 2.0));
            }
        }

        if !terminal {
            let positions = Self::positions(models, layout, x);
            for &(i, j) in &self.pairs {
                let (pi, pj) = (&positions[i], &positions[j]);
                if (pi - pj).norm() >= self.proximity.d_prox {
                    continue;
                }
                let g = self.proximity.gradient(pi, pj);
                let h = self.proximity.psd_hessian(pi, pj);
                let d = g.len();
                let oi = layout.state_range(i).start;
                let oj = layout.state_range(j).start;
                {
                    let mut s = lx.rows_mut(oi, d);
                    s += &g;
                }
                {
                    let mut s = lx.rows_mut(oj, d);
                    s -= &g;
                }
                {
                    let mut b = lxx.view_mut((oi, oi), (d, d));
                    b += &h;
                }
                {
                    let mut b = lxx.view_mut((oj, oj), (d, d));
                    b += &h;
                }
                {
                    let mut b = lxx.view_mut((oi, oj), (d, d));
                    b -= &h;
                }
                {
                    let mut b = lxx.view_mut((oj, oi), (d, d));
                    b -= &h;
                }
            }
        }

        StageQuadratic {
            lx,
            lu,
            lxx,
            luu,
            lux: DMatrix::zeros(m, n),
        }
    }
}

/// Tracking costs for each model toward the matching goal state.
pub fn default_tracking(
    models: &[AgentModel],
    goals: &[DVector<f64>],
    params: &CostParams,
) -> Result<Vec<TrackingCost>> {
    if models.len() != goals.len() {
        return Err(ConfigError::dimension("goals", models.len(), goals.len()));
    }
    models
        .iter()
        .zip(goals)
        .map(|(m, g)| TrackingCost::from_params(m, g.clone(), params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rollout_joint;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn di_models(n: usize) -> Vec<AgentModel> {
        (0..n).map(|i| AgentModel::double_integrator_2d().with_id(i)).collect()
    }

    #[test]
    fn tracking_cost_basic_values() {
        let tc = TrackingCost::new(
            DMatrix::identity(4, 4),
            DMatrix::identity(2, 2),
            DMatrix::identity(4, 4),
            DVector::zeros(4),
            DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(tc.running(&v(&[1.0, 0.0, 0.0, 0.0]), &v(&[0.0, 0.0])), 1.0);
        assert_eq!(tc.running(&DVector::zeros(4), &DVector::zeros(2)), 0.0);

        let model = AgentModel::double_integrator_2d();
        let goal = v(&[1.0, 2.0, 0.0, 0.0]);
        let tc = TrackingCost::from_params(&model, goal.clone(), &CostParams::default()).unwrap();
        assert_eq!(tc.running(&goal, &model.nominal_control()), 0.0);
    }

    #[test]
    fn tracking_cost_rejects_bad_weights() {
        let eye4 = DMatrix::<f64>::identity(4, 4);
        let eye2 = DMatrix::<f64>::identity(2, 2);
        let mut asym = eye4.clone();
        asym[(0, 1)] = 0.5;
        assert!(TrackingCost::new(asym, eye2.clone(), eye4.clone(), DVector::zeros(4), DVector::zeros(2)).is_err());
        assert!(TrackingCost::new(-&eye4, eye2.clone(), eye4.clone(), DVector::zeros(4), DVector::zeros(2)).is_err());
        assert!(TrackingCost::new(
            eye4.clone(),
            DMatrix::zeros(2, 2),
            eye4.clone(),
            DVector::zeros(4),
            DVector::zeros(2)
        )
        .is_err());
        assert!(TrackingCost::new(eye4.clone(), eye2, eye4, DVector::zeros(3), DVector::zeros(2)).is_err());
    }

    #[test]
    fn proximity_cost_values() {
        let pc = ProximityCost::new(1.0, 0.5).unwrap();
        let origin = v(&[0.0, 0.0]);
        assert!((pc.value(&origin, &v(&[0.25, 0.0])) - 0.0625).abs() < 1e-15);
        assert_eq!(pc.value(&origin, &v(&[0.5, 0.0])), 0.0);
        assert_eq!(pc.value(&origin, &origin), 0.25);
        // C1 at the threshold: gradient vanishes approaching from inside.
        let g = pc.gradient(&origin, &v(&[0.5 - 1e-9, 0.0]));
        assert!(g.norm() < 1e-8);
        // coincident points push along the first axis
        let g = pc.gradient(&origin, &origin);
        assert_eq!(g, v(&[-1.0, 0.0]));
        assert!(ProximityCost::new(0.0, 0.5).is_err());
        assert!(ProximityCost::new(1.0, -0.5).is_err());
    }

    #[test]
    fn proximity_gradient_matches_finite_differences() {
        let pc = ProximityCost::new(50.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..100 {
            let pi = DVector::from_fn(3, |_, _| rng.random_range(-0.3..0.3));
            let pj = DVector::from_fn(3, |_, _| rng.random_range(-0.3..0.3));
            let g = pc.gradient(&pi, &pj);
            let fd = DVector::from_fn(3, |a, _| {
                let mut p = pi.clone();
                let mut q = pi.clone();
                p[a] += h;
                q[a] -= h;
                (pc.value(&p, &pj) - pc.value(&q, &pj)) / (2.0 * h)
            });
            assert!((&fd - &g).norm() / (1.0 + g.norm()) <= 1e-5);
        }
    }

    #[test]
    fn psd_hessian_matches_eigen_clamping() {
        let pc = ProximityCost::new(50.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let pi = DVector::from_fn(2, |_, _| rng.random_range(-0.3..0.3));
            let pj = DVector::from_fn(2, |_, _| rng.random_range(-0.3..0.3));
            let eig = SymmetricEigen::new(pc.exact_hessian(&pi, &pj));
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            let reference = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            assert!((reference - pc.psd_hessian(&pi, &pj)).amax() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn proximity_is_symmetric(a in prop::collection::vec(-1.0f64..1.0, 3), b in prop::collection::vec(-1.0f64..1.0, 3)) {
            let pc = ProximityCost::new(3.0, 0.8).unwrap();
            let (pa, pb) = (DVector::from_vec(a), DVector::from_vec(b));
            prop_assert_eq!(pc.value(&pa, &pb), pc.value(&pb, &pa));
        }
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> (Vec<AgentModel>, PotentialSpec, JointTrajectory) {
        let models = di_models(n);
        let goals: Vec<_> = (0..n)
            .map(|_| DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let tracking = default_tracking(&models, &goals, &CostParams::default()).unwrap();
        let spec =
            PotentialSpec::centralized((0..n).collect(), tracking, ProximityCost::new(50.0, 0.5).unwrap()).unwrap();
        let x0 = DVector::from_fn(4 * n, |i, _| if i % 4 < 2 { rng.random_range(-0.4..0.4) } else { 0.0 });
        let u: Vec<_> = (0..6)
            .map(|_| DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let traj = rollout_joint(&models, &x0, &u, 0.1).unwrap();
        (models, spec, traj)
    }

    #[test]
    fn potential_zero_at_goal_and_single_agent_reduces_to_tracking() {
        let models = di_models(2);
        let goals = vec![v(&[0.0, 0.0, 0.0, 0.0]), v(&[3.0, 0.0, 0.0, 0.0])];
        let tracking = default_tracking(&models, &goals, &CostParams::default()).unwrap();
        let spec =
            PotentialSpec::centralized(vec![0, 1], tracking.clone(), ProximityCost::new(50.0, 0.5).unwrap()).unwrap();
        let traj = rollout_joint(
            &models,
            &v(&[0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]),
            &vec![DVector::zeros(4); 5],
            0.1,
        )
        .unwrap();
        assert_eq!(spec.potential_value(&models, &traj), 0.0);
        let q = spec.quadraticize(&models, &traj, 2);
        assert_eq!(q.lx.amax(), 0.0);
        assert_eq!(q.lu.amax(), 0.0);

        let single = PotentialSpec::centralized(
            vec![0],
            vec![tracking[0].clone()],
            ProximityCost::new(50.0, 0.5).unwrap(),
        )
        .unwrap();
        assert!(single.pairs().is_empty());
        let m1 = &models[..1];
        let traj = rollout_joint(m1, &v(&[1.0, 0.0, 0.0, 0.0]), &vec![v(&[0.3, -0.2]); 3], 0.1).unwrap();
        let by_hand: f64 = (0..3)
            .map(|k| tracking[0].running(&traj.states[k], &traj.controls[k]))
            .sum::<f64>()
            + tracking[0].terminal(&traj.states[3]);
        assert_eq!(single.potential_value(m1, &traj), by_hand);
    }

    #[test]
    fn three_agent_pairs_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (models, spec, traj) = random_problem(&mut rng, 3);
        assert_eq!(spec.pairs(), &[(0, 1), (0, 2), (1, 2)]);
        let pc = spec.proximity();
        let mut brute = 0.0;
        for k in 0..traj.horizon() {
            for i in 0..3 {
                for j in 0..3 {
                    if i < j {
                        let pi = traj.states[k].rows(4 * i, 2).into_owned();
                        let pj = traj.states[k].rows(4 * j, 2).into_owned();
                        brute += pc.value(&pi, &pj);
                    }
                }
            }
        }
        assert!((spec.coupling_value(&models, &traj) - brute).abs() < 1e-12);
    }

    #[test]
    fn quadraticize_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-6;
        for _ in 0..20 {
            let (models, spec, traj) = random_problem(&mut rng, 3);
            for k in [0, 3, traj.horizon()] {
                let q = spec.quadraticize(&models, &traj, k);
                for idx in 0..q.lx.len() {
                    let mut tp = traj.clone();
                    let mut tm = traj.clone();
                    tp.states[k][idx] += h;
                    tm.states[k][idx] -= h;
                    let fd = (spec.potential_value(&models, &tp) - spec.potential_value(&models, &tm)) / (2.0 * h);
                    assert!((fd - q.lx[idx]).abs() / (1.0 + q.lx[idx].abs()) < 1e-5);
                }
                for idx in 0..q.lu.len() {
                    let mut tp = traj.clone();
                    let mut tm = traj.clone();
                    tp.controls[k][idx] += h;
                    tm.controls[k][idx] -= h;
                    let fd = (spec.potential_value(&models, &tp) - spec.potential_value(&models, &tm)) / (2.0 * h);
                    assert!((fd - q.lu[idx]).abs() / (1.0 + q.lu[idx].abs()) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn inactive_pair_contributes_no_hessian_block() {
        let models = di_models(2);
        let goals = vec![DVector::zeros(4), DVector::zeros(4)];
        let tracking = default_tracking(&models, &goals, &CostParams::default()).unwrap();
        let spec = PotentialSpec::centralized(vec![0, 1], tracking, ProximityCost::new(50.0, 0.5).unwrap()).unwrap();
        let traj = rollout_joint(
            &models,
            &v(&[0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]),
            &[DVector::zeros(4)],
            0.1,
        )
        .unwrap();
        let q = spec.quadraticize(&models, &traj, 0);
        assert_eq!(q.lxx.view((0, 4), (4, 4)).amax(), 0.0);
        assert_eq!(q.lxx.view((4, 0), (4, 4)).amax(), 0.0);
        assert_eq!(q.lux.amax(), 0.0);
    }

    #[test]
    fn stage_hessians_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let (models, spec, traj) = random_problem(&mut rng, 4);
            for k in 0..=traj.horizon() {
                let q = spec.quadraticize(&models, &traj, k);
                let min = SymmetricEigen::new(q.lxx.clone()).eigenvalues.min();
                assert!(min > -1e-9, "stage {k}: {min}");
            }
        }
    }

    #[test]
    fn local_spec_couples_owner_only() {
        let models = di_models(3);
        let tracking = default_tracking(&models, &vec![DVector::zeros(4); 3], &CostParams::default()).unwrap();
        let spec = PotentialSpec::local(
            7,
            vec![2, 7, 9],
            tracking.clone(),
            ProximityCost::new(1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(spec.pairs(), &[(1, 0), (1, 2)]);
        assert!(PotentialSpec::local(4, vec![2, 7, 9], tracking, ProximityCost::new(1.0, 1.0).unwrap()).is_err());
    }
}
