use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use social_rl::dp::{optimal_q, OPTIMAL_GAMMA, OPTIMAL_TOL};
use social_rl::gridworld::{
    assemble_world, default_layouts, sample_world, Action, Rotation, WorldConfig, CENTRAL_STARTS, N_ACTIONS, N_STATES,
};
use social_rl::rl::BeliefModel;
use social_rl::social::{belief_distance_map, DISTANCE_CAP, DISTANCE_MAX_ITER, DISTANCE_TOL};

/// Backward induction over a fixed horizon, straight from the world's
/// dynamics: entering a positive cell pays its value and stops.
fn finite_horizon_q(w: &WorldConfig, gamma: f64, horizon: usize) -> Vec<[f64; N_ACTIONS]> {
    let mut v = vec![0.0; N_STATES];
    let mut q = vec![[0.0; N_ACTIONS]; N_STATES];
    for _ in 0..horizon {
        for s in 0..N_STATES {
            if w.is_terminal(s) {
                q[s] = [0.0; N_ACTIONS];
                continue;
            }
            for a in Action::ALL {
                let n = w.step_dynamics(s, a);
                q[s][a.index()] = match w.reward_value_at(n) {
                    Some(r) if r > 0 => f64::from(r),
                    _ => -1.0 + gamma * v[n],
                };
            }
        }
        for s in 0..N_STATES {
            v[s] = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    q
}

#[test]
fn optimal_q_matches_backward_induction_on_every_assembly() {
    let layouts = default_layouts();
    let value_orders = [[0, 25, 50, 75], [75, 50, 25, 0], [25, 75, 0, 50]];
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let perm = [a, b, c, d];
                    if !(0..4).all(|i| perm.contains(&i)) {
                        continue;
                    }
                    for code in 0..256usize {
                        let rots = [0, 1, 2, 3].map(|i| Rotation::from_quarter_turns((code >> (2 * i)) & 3));
                        let values = value_orders[k % value_orders.len()];
                        k += 1;
                        let w = assemble_world(&layouts, perm, rots, values, CENTRAL_STARTS).unwrap();
                        let opt = optimal_q(&w, OPTIMAL_GAMMA, OPTIMAL_TOL);
                        assert!(opt.converged);
                        let oracle = finite_horizon_q(&w, OPTIMAL_GAMMA, 400);
                        for s in 0..N_STATES {
                            for a in 0..N_ACTIONS {
                                worst = worst.max((opt.values.get(s, a) - oracle[s][a]).abs());
                            }
                        }
                    }
                }
            }
        }
    }
    assert_eq!(k, 6144);
    assert!(worst < 1e-4, "max deviation {worst}");
}

fn true_beliefs(w: &WorldConfig) -> BeliefModel {
    let mut b = BeliefModel::grid();
    for s in 0..N_STATES {
        for a in Action::ALL {
            let next = w.step_dynamics(s, a);
            for &n in b.support(s).to_vec().iter() {
                b.set_prob(s, a.index(), n, if n == next { 1.0 } else { 0.0 }).unwrap();
            }
        }
    }
    b
}

#[test]
fn belief_distances_under_true_dynamics_equal_bfs() {
    let layouts = default_layouts();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let w = sample_world(&layouts, &mut rng);
        let b = true_beliefs(&w);
        for target in [0, 37, 55, 99, w.reward_cells()[2].index()] {
            let map = belief_distance_map(&b, target, DISTANCE_CAP, DISTANCE_TOL, DISTANCE_MAX_ITER);
            let bfs = w.bfs_distance(&[target]).unwrap();
            for s in 0..N_STATES {
                let expected = f64::from(bfs[s].expect("connected board"));
                assert!((map.values[s] - expected).abs() < 1e-3, "state {s}: {} vs {expected}", map.values[s]);
            }
        }
    }
}
