use dpilqr::costs::{default_tracking, CostParams, PotentialSpec, ProximityCost};
use dpilqr::dynamics::{rollout_joint, AgentModel, JointState, JointTrajectory, Layout, ModelKey};
use dpilqr::graph::build_graph;
use nalgebra::DVector;
use proptest::prelude::*;

fn models_of(key: ModelKey, n: usize) -> Vec<AgentModel> {
    (0..n).map(|i| key.build(9.81, 0.3).unwrap().with_id(i)).collect()
}

fn model_key() -> impl Strategy<Value = ModelKey> {
    prop_oneof![
        Just(ModelKey::DoubleIntegrator),
        Just(ModelKey::Unicycle),
        Just(ModelKey::Quad6d)
    ]
}

/// Agents, initial joint state and a control sequence with positions packed
/// into a small box so that pairs interact.
fn scenario() -> impl Strategy<Value = (Vec<AgentModel>, DVector<f64>, Vec<DVector<f64>>)> {
    (model_key(), 2usize..5, 2usize..15).prop_flat_map(|(key, n, horizon)| {
        let models = models_of(key, n);
        let layout = Layout::new(&models);
        let (nx, nu) = (layout.state_dim(), layout.control_dim());
        (
            Just(models),
            prop::collection::vec(-1.0..1.0f64, nx),
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, nu), horizon),
        )
            .prop_map(|(models, x, us)| {
                let nominal: Vec<f64> = models
                    .iter()
                    .flat_map(|m| m.nominal_control().iter().copied().collect::<Vec<_>>())
                    .collect();
                let controls = us
                    .into_iter()
                    .map(|u| DVector::from_iterator(u.len(), u.iter().zip(&nominal).map(|(a, b)| a * 0.2 + b)))
                    .collect();
                (models, DVector::from_vec(x), controls)
            })
    })
}

fn spec_for(models: &[AgentModel], goal_shift: f64) -> PotentialSpec {
    let goals: Vec<_> = models
        .iter()
        .map(|m| DVector::from_element(m.state_dim(), goal_shift))
        .collect();
    let tracking = default_tracking(models, &goals, &CostParams::default()).unwrap();
    PotentialSpec::centralized(
        (0..models.len()).collect(),
        tracking,
        ProximityCost::new(50.0, 0.5).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollouts_are_separable((models, x0, controls) in scenario(), agent in 0usize..4, delta in -1.0..1.0f64) {
        let layout = Layout::new(&models);
        let j = agent % models.len();
        let base = rollout_joint(&models, &x0, &controls, 0.1).unwrap();
        let perturbed: Vec<_> = controls
            .iter()
            .map(|u| {
                let mut u = u.clone();
                u[layout.control_range(j).start] += delta;
                u
            })
            .collect();
        let other = rollout_joint(&models, &x0, &perturbed, 0.1).unwrap();
        for i in (0..models.len()).filter(|&i| i != j) {
            prop_assert_eq!(base.agent_states(&layout, i), other.agent_states(&layout, i));
        }
    }

    #[test]
    fn unilateral_changes_match_potential_changes(
        (models, x0, controls) in scenario(),
        agent in 0usize..4,
        delta in prop::collection::vec(-0.5..0.5f64, 3),
    ) {
        let layout = Layout::new(&models);
        let i = agent % models.len();
        let spec = spec_for(&models, 0.3);
        let perturbed: Vec<_> = controls
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let mut u = u.clone();
                for (c, d) in layout.control_range(i).zip(&delta) {
                    u[c] += d * (1.0 + k as f64 * 0.1);
                }
                u
            })
            .collect();
        let before = rollout_joint(&models, &x0, &controls, 0.1).unwrap();
        let after = rollout_joint(&models, &x0, &perturbed, 0.1).unwrap();
        let dp = spec.potential_value(&models, &after) - spec.potential_value(&models, &before);
        let dj = spec.agent_cost(&models, &after, i) - spec.agent_cost(&models, &before, i);
        prop_assume!(dp.abs() > 1e-6);
        prop_assert!((dp - dj).abs() <= 1e-10 * dp.abs(), "dp {} dj {}", dp, dj);
    }

    #[test]
    fn potential_is_non_negative((models, x0, controls) in scenario()) {
        let traj = rollout_joint(&models, &x0, &controls, 0.1).unwrap();
        prop_assert!(spec_for(&models, 0.0).potential_value(&models, &traj) >= 0.0);
    }

    #[test]
    fn proximity_is_exactly_symmetric(
        a in prop::collection::vec(-1.0..1.0f64, 3),
        b in prop::collection::vec(-1.0..1.0f64, 3),
        beta in 0.1..100.0f64,
        d in 0.1..2.0f64,
    ) {
        let p = ProximityCost::new(beta, d).unwrap();
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        prop_assert_eq!(p.value(&a, &b), p.value(&b, &a));
        prop_assert!(p.value(&a, &b) >= 0.0);
        prop_assert_eq!(p.gradient(&a, &b), -p.gradient(&b, &a));
    }

    #[test]
    fn local_pair_terms_double_count_on_complete_graphs((models, x0, controls) in scenario()) {
        let n = models.len();
        let spec = spec_for(&models, 0.0);
        let traj = rollout_joint(&models, &x0, &controls, 0.1).unwrap();
        let local: f64 = (0..n)
            .map(|i| {
                PotentialSpec::local(i, (0..n).collect(), spec.tracking().to_vec(), *spec.proximity())
                    .unwrap()
                    .coupling_value(&models, &traj)
            })
            .sum();
        let global = spec.coupling_value(&models, &traj);
        prop_assert!((local - 2.0 * global).abs() <= 1e-12 * global.max(1.0));
    }

    #[test]
    fn graph_edges_grow_with_alpha(
        positions in prop::collection::vec((0.0..4.0f64, 0.0..4.0f64), 2..8),
        drift in prop::collection::vec((-0.2..0.2f64, -0.2..0.2f64), 8),
        a1 in 1.0..3.0f64,
        extra in 0.0..2.0f64,
    ) {
        let n = positions.len();
        let models = models_of(ModelKey::DoubleIntegrator, n);
        let states: Vec<DVector<f64>> = (0..6)
            .map(|k| {
                DVector::from_iterator(
                    4 * n,
                    positions.iter().zip(&drift).flat_map(|(&(x, y), &(dx, dy))| {
                        [x + dx * k as f64, y + dy * k as f64, dx, dy]
                    }),
                )
            })
            .collect();
        let traj = JointTrajectory { states, controls: vec![DVector::zeros(2 * n); 5] };
        let small = build_graph(&traj, &models, 0.5, a1).unwrap();
        let large = build_graph(&traj, &models, 0.5, a1 + extra).unwrap();
        prop_assert!(small.edges().is_subset(large.edges()));
        for i in 0..n {
            for &j in small.neighbors(i) {
                prop_assert!(small.neighbors(j).contains(&i));
            }
        }
        let complete = build_graph(&traj, &models, 0.5, 100.0).unwrap();
        prop_assert_eq!(complete.edge_count(), n * (n - 1) / 2);
        prop_assert_eq!(build_graph(&traj, &models, 0.5, a1).unwrap(), small);
    }
}

#[test]
fn distant_agents_have_no_edges() {
    let models = models_of(ModelKey::Unicycle, 3);
    let x0 = JointState::new(vec![
        DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![10.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 10.0, 0.0, 0.0]),
    ]);
    let traj = rollout_joint(&models, &x0.concat(), &vec![DVector::zeros(6); 40], 0.1).unwrap();
    assert_eq!(build_graph(&traj, &models, 0.5, 1.5).unwrap().edge_count(), 0);
}
