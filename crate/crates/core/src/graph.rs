//! Interaction graph over agents.
//!
//! Two agents are connected when their predicted positions come closer than
//! `alpha * d_prox` at any step `0 <= k < T` of a predicted trajectory.

use std::collections::BTreeSet;

use crate::dynamics::{AgentModel, JointTrajectory, Layout};
use crate::error::{ConfigError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
    neighborhoods: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Builds a graph from unordered edges; `(i, j)` and `(j, i)` are the
    /// same edge.
    pub fn from_edges(n_agents: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(ConfigError::invalid("edges", format!("self-loop on agent {i}")));
            }
            if i >= n_agents || j >= n_agents {
                return Err(ConfigError::invalid(
                    "edges",
                    format!("edge ({i}, {j}) out of range for {n_agents} agents"),
                ));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let mut neighborhoods = vec![Vec::new(); n_agents];
        for &(i, j) in &set {
            neighborhoods[i].push(j);
            neighborhoods[j].push(i);
        }
        for nb in &mut neighborhoods {
            nb.sort_unstable();
        }
        Ok(InteractionGraph {
            n_agents,
            edges: set,
            neighborhoods,
        })
    }

    pub fn empty(n_agents: usize) -> Self {
        InteractionGraph {
            n_agents,
            edges: BTreeSet::new(),
            neighborhoods: vec![Vec::new(); n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Sorted neighbors of `agent`, excluding itself.
    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighborhoods[agent]
    }

    /// Members of `agent`'s subproblem: its neighbors plus itself, sorted.
    pub fn subproblem_agents(&self, agent: usize) -> Vec<usize> {
        let mut members = self.neighborhoods[agent].clone();
        let pos = members.partition_point(|&j| j < agent);
        members.insert(pos, agent);
        members
    }
}

/// Connects every pair whose predicted distance drops strictly below
/// `alpha * d_prox` at some step `k < T`.
pub fn build_graph(
    predicted: &JointTrajectory,
    models: &[AgentModel],
    d_prox: f64,
    alpha: f64,
) -> Result<InteractionGraph> {
    if !(alpha >= 1.0) {
        return Err(ConfigError::invalid(
            "alpha",
            format!("must be at least 1, got {alpha}"),
        ));
    }
    if !(d_prox > 0.0) {
        return Err(ConfigError::invalid("d_prox", "must be positive"));
    }
    let layout = Layout::new(models);
    if predicted.states.first().map(|x| x.len()) != Some(layout.state_dim()) {
        return Err(ConfigError::dimension(
            "predicted trajectory",
            layout.state_dim(),
            predicted.states.first().map_or(0, |x| x.len()),
        ));
    }
    let threshold = alpha * d_prox;
    let n = models.len();
    let steps = predicted.horizon().max(1).min(predicted.states.len());
    let mut edges = Vec::new();
    for i in 0..n {
        let oi = layout.state_range(i).start;
        for j in (i + 1)..n {
            let oj = layout.state_range(j).start;
            let dim = models[i].position_dim().min(models[j].position_dim());
            let close = predicted.states[..steps].iter().any(|x| {
                let d2: f64 = (0..dim).map(|a| (x[oi + a] - x[oj + a]).powi(2)).sum();
                d2.sqrt() < threshold
            });
            if close {
                edges.push((i, j));
            }
        }
    }
    InteractionGraph::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn static_traj(positions: &[(f64, f64)], horizon: usize) -> (Vec<AgentModel>, JointTrajectory) {
        let models: Vec<_> = (0..positions.len())
            .map(|i| AgentModel::double_integrator_2d().with_id(i))
            .collect();
        let x = DVector::from_iterator(
            4 * positions.len(),
            positions.iter().flat_map(|&(px, py)| [px, py, 0.0, 0.0]),
        );
        let traj = JointTrajectory {
            states: vec![x; horizon + 1],
            controls: vec![DVector::zeros(2 * positions.len()); horizon],
        };
        (models, traj)
    }

    #[test]
    fn ties_produce_no_edge() {
        let (models, traj) = static_traj(&[(0.0, 0.0), (0.75, 0.0)], 3);
        let g = build_graph(&traj, &models, 0.5, 1.5).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = build_graph(&traj, &models, 0.5, 1.5 + 1e-9).unwrap();
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn terminal_state_is_ignored() {
        let (models, mut traj) = static_traj(&[(0.0, 0.0), (5.0, 0.0)], 3);
        traj.states[3][4] = 0.1;
        let g = build_graph(&traj, &models, 0.5, 1.0).unwrap();
        assert_eq!(g.edge_count(), 0);
        traj.states[2][4] = 0.1;
        let g = build_graph(&traj, &models, 0.5, 1.0).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn alpha_below_one_rejected() {
        let (models, traj) = static_traj(&[(0.0, 0.0)], 2);
        assert!(build_graph(&traj, &models, 0.5, 0.5).is_err());
    }

    #[test]
    fn subproblem_membership() {
        let g = InteractionGraph::from_edges(4, [(2, 0), (2, 3)]).unwrap();
        assert_eq!(g.subproblem_agents(1), vec![1]);
        assert_eq!(g.subproblem_agents(2), vec![0, 2, 3]);
        assert_eq!(g.neighbors(0), &[2]);
        assert!(InteractionGraph::from_edges(2, [(1, 1)]).is_err());
        assert!(InteractionGraph::from_edges(2, [(0, 2)]).is_err());
    }
}
