use super::*;
use crate::mdp::{
    random_episodic_mdp, sample_batch, sample_episode, Action, AliasMdp, Step, TabularMdp,
};
use crate::rng::stream;
use approx::assert_abs_diff_eq;
use rand::Rng;

const GAMMA: f64 = 0.9;

fn hand_trajectory() -> Trajectory {
    // The alias corner rollout: go at s1 (reward 0), stop at s2 (reward 1).
    Trajectory {
        steps: vec![
            Step {
                state: State::Discrete(0),
                action: Action::Discrete(0),
                reward: 0.0,
                behavior_log_prob: 0.3f64.ln(),
                timestep: 0,
            },
            Step {
                state: State::Discrete(1),
                action: Action::Discrete(1),
                reward: 1.0,
                behavior_log_prob: 0.7f64.ln(),
                timestep: 1,
            },
        ],
        truncated: false,
    }
}

// --- mc_returns -----------------------------------------------------------

#[test]
fn returns_by_backward_recursion() {
    let mut traj = hand_trajectory();
    traj.steps.push(Step {
        state: State::Discrete(1),
        action: Action::Discrete(0),
        reward: 1.0,
        behavior_log_prob: -0.1,
        timestep: 2,
    });
    traj.steps[0].reward = 0.0;
    traj.steps[1].reward = 0.0;
    // rewards [0, 0, 1] at gamma 0.5.
    assert_eq!(mc_returns(&traj, 0.5), vec![0.25, 0.5, 1.0]);
    // gamma 0 is myopic.
    for s in &mut traj.steps {
        s.reward = 1.0;
    }
    assert_eq!(mc_returns(&traj, 0.0), vec![1.0, 1.0, 1.0]);
    // zero rewards.
    for s in &mut traj.steps {
        s.reward = 0.0;
    }
    assert_eq!(mc_returns(&traj, 0.9), vec![0.0, 0.0, 0.0]);
}

// --- estimate_gradient: hand expansions -------------------------------------

#[test]
fn biased_estimator_is_textbook_reinforce_on_a_hand_trajectory() {
    let theta = 0.3;
    let pol = PolicyModel::tied_alias(theta);
    let batch = [hand_trajectory()];
    let est = estimate_gradient(&batch, &pol, &pol, &SurrogateSpec::biased(), GAMMA).unwrap();
    // q = [gamma, 1]; scores 1/theta (go), -1/(1-theta) (stop); w_k = 1.
    let expected = GAMMA / theta - 1.0 / (1.0 - theta);
    assert_abs_diff_eq!(est.gradient[0], expected, epsilon = 1e-12);
    assert_eq!(est.n_trajectories, 1);
    assert_eq!(est.clamped_ratios, 0);
}

#[test]
fn unbiased_estimator_weights_later_steps_down() {
    let theta = 0.3;
    let pol = PolicyModel::tied_alias(theta);
    let batch = [hand_trajectory()];
    let est = estimate_gradient(&batch, &pol, &pol, &SurrogateSpec::unbiased(), GAMMA).unwrap();
    // Same terms, but the k = 1 step carries gamma^1.
    let expected = GAMMA / theta + GAMMA * (-1.0 / (1.0 - theta));
    assert_abs_diff_eq!(est.gradient[0], expected, epsilon = 1e-12);
}

#[test]
fn alias_monte_carlo_gradient_matches_the_closed_form() {
    let theta = 0.3;
    let m = AliasMdp::new(GAMMA).unwrap();
    let pol = PolicyModel::tied_alias(theta);
    let spec = SurrogateSpec::unbiased();
    let mut rng = stream(31, "alias-mc");
    let n = 100_000;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let traj = sample_episode(m.mdp(), &pol, &mut rng, 200).unwrap();
        let g = estimate_gradient(&[traj], &pol, &pol, &spec, GAMMA).unwrap().gradient[0];
        sum += g;
        sumsq += g * g;
    }
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean * mean).max(0.0);
    let se = (var / n as f64).sqrt();
    let exact = GAMMA * (1.0 - 2.0 * theta);
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "MC gradient {mean} vs exact {exact} (se {se})"
    );
}

// --- regularizers ------------------------------------------------------------

#[test]
fn kl_gradient_reduces_to_scaled_scores_on_zero_rewards() {
    let alpha = 0.5;
    let m = AliasMdp::new(GAMMA).unwrap().mdp().with_zero_rewards();
    let pol = PolicyModel::tied_alias(0.4);
    let batch = sample_batch(&m, &pol, &mut stream(32, "kl"), 200, 200).unwrap();
    let spec = SurrogateSpec::biased().with_regularizer(Regularizer::Kl { alpha });
    let est = estimate_gradient(&batch, &pol, &pol, &spec, GAMMA).unwrap();
    // Hand accumulation of alpha * mean_traj sum_k score_k.
    let mut expected = 0.0;
    for traj in &batch {
        for step in &traj.steps {
            expected += alpha * pol.grad_log_prob(&step.state, &step.action).unwrap()[0];
        }
    }
    expected /= batch.len() as f64;
    assert_abs_diff_eq!(est.gradient[0], expected, epsilon = 1e-10);
}

#[test]
fn kl_penalty_expectation_is_maximized_at_coincidence() {
    // E_{a~pi_t}[alpha * d log pi / d theta] at pi = pi_t is exactly zero
    // (the ascent fixed point of the cross-entropy is pi = pi_t).
    let pol = PolicyModel::tied_alias(0.35);
    let probs = pol.action_probs(&State::Discrete(0)).unwrap();
    let mut expectation = 0.0;
    for (a, p) in probs.iter().enumerate() {
        expectation += p * pol.grad_log_prob(&State::Discrete(0), &Action::Discrete(a)).unwrap()[0];
    }
    assert_abs_diff_eq!(expectation, 0.0, epsilon = 1e-12);
}

#[test]
fn kl_objective_value_samples_negative_entropy() {
    // One-state MDP with zero rewards: episodes are single steps, so the
    // sampled KL objective is alpha * log pi(a) under a ~ pi_t, whose
    // expectation is -alpha * H(pi_t).
    let alpha = 0.7;
    let mut t = vec![vec![vec![0.0; 2]; 2]; 2];
    t[0][0][1] = 1.0;
    t[0][1][1] = 1.0;
    t[1][0][1] = 1.0;
    t[1][1][1] = 1.0;
    let m = TabularMdp::new(2, 2, t, vec![vec![0.0; 2]; 2], GAMMA, vec![1.0, 0.0], 1).unwrap();
    let mut pol = PolicyModel::tabular_softmax(2, 2);
    pol.set_params(vec![0.3, -0.4, 0.0, 0.0]).unwrap();
    let entropy = pol.entropy(&State::Discrete(0)).unwrap();

    let batch = sample_batch(&m, &pol, &mut stream(33, "ent"), 20_000, 200).unwrap();
    let spec = SurrogateSpec::biased().with_regularizer(Regularizer::Kl { alpha });
    // Per-trajectory objective values for a standard error.
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for traj in &batch {
        let v = estimate_gradient(std::slice::from_ref(traj), &pol, &pol, &spec, GAMMA)
            .unwrap()
            .objective_value;
        sum += v;
        sumsq += v * v;
    }
    let n = batch.len() as f64;
    let mean = sum / n;
    let se = ((sumsq / n - mean * mean).max(0.0) / n).sqrt();
    assert!(
        (mean - (-alpha * entropy)).abs() <= 3.0 * se,
        "sampled KL value {mean} vs -alpha H {}",
        -alpha * entropy
    );
}

#[test]
fn reverse_kl_is_neutral_at_coincidence() {
    let beta = 0.4;
    let pol = PolicyModel::tied_alias(0.3);
    let batch = [hand_trajectory()];
    let spec = SurrogateSpec::biased().with_regularizer(Regularizer::ReverseKl { beta });
    let zero_q: Vec<Trajectory> = batch
        .iter()
        .map(|t| {
            let mut t = t.clone();
            for s in &mut t.steps {
                s.reward = 0.0;
            }
            t
        })
        .collect();
    let est = estimate_gradient(&zero_q, &pol, &pol, &spec, GAMMA).unwrap();
    // Penalty VALUE vanishes at pi = pi_t...
    assert_abs_diff_eq!(est.objective_value, 0.0, epsilon = 1e-12);
    // ...while its gradient is -beta * sum_k score_k, pulling toward pi_t.
    let mut expected = 0.0;
    for step in &zero_q[0].steps {
        expected -= beta * pol.grad_log_prob(&step.state, &step.action).unwrap()[0];
    }
    assert_abs_diff_eq!(est.gradient[0], expected, epsilon = 1e-12);
}

#[test]
fn negative_coefficients_are_rejected() {
    let spec = SurrogateSpec::biased().with_regularizer(Regularizer::Kl { alpha: -0.1 });
    let pol = PolicyModel::tied_alias(0.3);
    assert!(estimate_gradient(&[hand_trajectory()], &pol, &pol, &spec, GAMMA).is_err());
}

// --- ratios -------------------------------------------------------------------

#[test]
fn importance_ratio_is_exactly_one_at_coincidence() {
    let pol = PolicyModel::tied_alias(0.3);
    let spec = SurrogateSpec::unbiased(); // ratio on
    let plain = SurrogateSpec { use_importance_ratio: false, ..spec };
    let batch = [hand_trajectory()];
    let with_ratio = estimate_gradient(&batch, &pol, &pol, &spec, GAMMA).unwrap();
    let without = estimate_gradient(&batch, &pol, &pol, &plain, GAMMA).unwrap();
    assert_eq!(with_ratio.gradient[0].to_bits(), without.gradient[0].to_bits());
    assert_eq!(with_ratio.clamped_ratios, 0);
}

#[test]
fn runaway_ratios_clamp_and_count() {
    // Behavior put 'go' probability at e^-50; the current policy is
    // certain of it. The log-ratio 50 exceeds the clamp of 20.
    let mut pol = PolicyModel::tabular_softmax(1, 2);
    pol.set_params(vec![50.0, 0.0]).unwrap();
    let mut behavior = PolicyModel::tabular_softmax(1, 2);
    behavior.set_params(vec![-50.0, 0.0]).unwrap();
    let traj = Trajectory {
        steps: vec![Step {
            state: State::Discrete(0),
            action: Action::Discrete(0),
            reward: 1.0,
            behavior_log_prob: behavior
                .log_prob(&State::Discrete(0), &Action::Discrete(0))
                .unwrap(),
            timestep: 0,
        }],
        truncated: false,
    };
    let est =
        estimate_gradient(&[traj], &pol, &behavior, &SurrogateSpec::unbiased(), GAMMA).unwrap();
    assert_eq!(est.clamped_ratios, 1);
    assert!(est.gradient.iter().all(|g| g.is_finite()));
    // The ratio stopped at e^20.
    assert!(est.objective_value <= LOG_RATIO_CLAMP.exp() * 1.0 + 1e-9);
}

#[test]
fn tabular_on_policy_workloads_never_clamp() {
    let m = AliasMdp::new(GAMMA).unwrap();
    let pol = PolicyModel::tied_alias(0.5);
    let batch = sample_batch(m.mdp(), &pol, &mut stream(34, "noclamp"), 500, 200).unwrap();
    for spec in [
        SurrogateSpec::unbiased(),
        SurrogateSpec::biased(),
        SurrogateSpec::unbiased().with_regularizer(Regularizer::Kl { alpha: 0.3 }),
        SurrogateSpec::biased().with_regularizer(Regularizer::ReverseKl { beta: 0.3 }),
    ] {
        let est = estimate_gradient(&batch, &pol, &pol, &spec, GAMMA).unwrap();
        assert_eq!(est.clamped_ratios, 0);
    }
}

// --- determinism -----------------------------------------------------------------

#[test]
fn estimates_are_bit_stable_and_order_robust() {
    let m = AliasMdp::new(GAMMA).unwrap();
    let pol = PolicyModel::tied_alias(0.4);
    let batch = sample_batch(m.mdp(), &pol, &mut stream(35, "order"), 100, 200).unwrap();
    let spec = SurrogateSpec::unbiased();
    let a = estimate_gradient(&batch, &pol, &pol, &spec, GAMMA).unwrap();
    let b = estimate_gradient(&batch, &pol, &pol, &spec, GAMMA).unwrap();
    assert_eq!(a.gradient[0].to_bits(), b.gradient[0].to_bits());

    let mut reversed = batch.clone();
    reversed.reverse();
    let c = estimate_gradient(&reversed, &pol, &pol, &spec, GAMMA).unwrap();
    // Averaging is commutative up to float reassociation.
    assert_abs_diff_eq!(a.gradient[0], c.gradient[0], epsilon = 1e-12);
}

#[test]
fn empty_inputs_error() {
    let pol = PolicyModel::tied_alias(0.4);
    assert!(matches!(
        estimate_gradient(&[], &pol, &pol, &SurrogateSpec::unbiased(), GAMMA),
        Err(Error::EmptyDataset)
    ));
    assert!(estimate_gradient_flat(&[], &pol, &pol, &SurrogateSpec::unbiased(), GAMMA).is_err());
}

// --- flat (transition-level) form ----------------------------------------------

#[test]
fn flattening_preserves_returns_and_order() {
    let m = AliasMdp::new(GAMMA).unwrap();
    let pol = PolicyModel::tied_alias(0.6);
    let batch = sample_batch(m.mdp(), &pol, &mut stream(36, "flat"), 50, 200).unwrap();
    let flat = flatten_dataset(&batch, GAMMA);
    assert_eq!(flat.len(), batch.iter().map(|t| t.len()).sum::<usize>());
    let mut idx = 0;
    for traj in &batch {
        let q = mc_returns(traj, GAMMA);
        for (k, step) in traj.steps.iter().enumerate() {
            assert_eq!(flat[idx].timestep, step.timestep);
            assert_eq!(flat[idx].q_hat, q[k]);
            assert_eq!(flat[idx].behavior_log_prob, step.behavior_log_prob);
            idx += 1;
        }
    }
}

#[test]
fn flat_estimator_matches_trajectory_estimator_up_to_averaging_unit() {
    let m = AliasMdp::new(GAMMA).unwrap();
    let pol = PolicyModel::tied_alias(0.45);
    let batch = sample_batch(m.mdp(), &pol, &mut stream(37, "flat-eq"), 80, 200).unwrap();
    let flat = flatten_dataset(&batch, GAMMA);
    for spec in [SurrogateSpec::unbiased(), SurrogateSpec::biased()] {
        let by_traj = estimate_gradient(&batch, &pol, &pol, &spec, GAMMA).unwrap();
        let by_step = estimate_gradient_flat(&flat, &pol, &pol, &spec, GAMMA).unwrap();
        // Same accumulated sum, different divisor.
        let lhs = by_step.gradient[0] * flat.len() as f64;
        let rhs = by_traj.gradient[0] * batch.len() as f64;
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * lhs.abs().max(1.0));
    }
}

// --- exact oracles ---------------------------------------------------------------

#[test]
fn exact_pg_reproduces_the_alias_closed_forms() {
    let m = AliasMdp::new(GAMMA).unwrap();
    for theta in [0.2, 0.5, 0.473684210526315, 0.8] {
        let pol = PolicyModel::tied_alias(theta);
        let disc = exact_pg(m.mdp(), &pol, OccupancyMode::Discounted).unwrap();
        assert_abs_diff_eq!(disc[0], GAMMA * (1.0 - 2.0 * theta), epsilon = 1e-12);
        let undisc = exact_pg(m.mdp(), &pol, OccupancyMode::Undiscounted).unwrap();
        assert_abs_diff_eq!(undisc[0], GAMMA - (1.0 + GAMMA) * theta, epsilon = 1e-12);
    }
}

#[test]
fn exact_pg_vanishes_on_zero_rewards() {
    let m = AliasMdp::new(GAMMA).unwrap().mdp().with_zero_rewards();
    let pol = PolicyModel::tied_alias(0.37);
    let g = exact_pg(&m, &pol, OccupancyMode::Discounted).unwrap();
    assert!(g.iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn exact_pg_rejects_continuous_policies() {
    let m = AliasMdp::new(GAMMA).unwrap();
    let pol = PolicyModel::mlp_gaussian(1, 1, &mut stream(38, "rej"));
    assert!(exact_pg(m.mdp(), &pol, OccupancyMode::Discounted).is_err());
}

#[test]
fn exact_pg_matches_finite_differences_of_the_exact_return() {
    // The discounted oracle IS the gradient of the return — check it
    // against central differences through the softmax parameterization
    // on random MDPs.
    let mut rng = stream(39, "pg-fd");
    for _ in 0..5 {
        let m = random_episodic_mdp(&mut rng, 4, 2, 0.85);
        let mut pol = PolicyModel::tabular_softmax(m.n_states(), m.n_actions());
        let logits: Vec<f64> =
            (0..pol.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        pol.set_params(logits.clone()).unwrap();
        let analytic = exact_pg(&m, &pol, OccupancyMode::Discounted).unwrap();
        let objective = |params: &[f64]| -> Result<f64> {
            let mut p = pol.clone();
            p.set_params(params.to_vec())?;
            let table: Vec<Vec<f64>> = (0..m.n_states())
                .map(|s| p.action_probs(&State::Discrete(s)))
                .collect::<Result<_>>()?;
            m.exact_return(&table)
        };
        let fd = finite_diff_grad(objective, &logits, 1e-6).unwrap();
        for (a, f) in analytic.iter().zip(fd.iter()) {
            assert!(
                (a - f).abs() <= 1e-6 * f.abs().max(1.0),
                "exact_pg {a} vs finite difference {f}"
            );
        }
    }
}

#[test]
fn finite_differences_on_simple_functions() {
    let params = vec![0.3, -0.7, 1.1];
    let c = [2.0, -3.0, 0.5];
    let linear = |p: &[f64]| Ok(p.iter().zip(c.iter()).map(|(x, c)| x * c).sum());
    let g = finite_diff_grad(linear, &params, 1e-6).unwrap();
    for (gi, ci) in g.iter().zip(c.iter()) {
        assert_abs_diff_eq!(gi, ci, epsilon = 1e-8);
    }
    let quadratic = |p: &[f64]| Ok(p.iter().map(|x| x * x).sum());
    let g = finite_diff_grad(quadratic, &params, 1e-5).unwrap();
    for (gi, pi) in g.iter().zip(params.iter()) {
        assert_abs_diff_eq!(*gi, 2.0 * pi, epsilon = 1e-8);
    }
    assert!(finite_diff_grad(linear, &params, 0.0).is_err());
    let bad = |_: &[f64]| Ok(f64::NAN);
    assert!(finite_diff_grad(bad, &params, 1e-6).is_err());
}

#[test]
fn tied_oracles_cross_check_through_the_return() {
    // f(theta) = rho(theta, theta) differentiated two ways.
    let m = AliasMdp::new(GAMMA).unwrap();
    for theta in [0.25, 0.5, 0.65] {
        let pol = PolicyModel::tied_alias(theta);
        let analytic = exact_pg(m.mdp(), &pol, OccupancyMode::Discounted).unwrap()[0];
        let objective = |p: &[f64]| {
            let table = m.policy(p[0], p[0]);
            m.mdp().exact_return(&table)
        };
        let fd = finite_diff_grad(objective, &[theta], 1e-6).unwrap()[0];
        assert!(
            (analytic - fd).abs() <= 1e-6 * fd.abs().max(1.0),
            "analytic {analytic} vs fd {fd}"
        );
    }
}
