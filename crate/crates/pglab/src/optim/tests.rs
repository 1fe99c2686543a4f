use super::*;
use crate::rng::stream;
use approx::assert_abs_diff_eq;
use rand::Rng;

// --- optimizer_step ---------------------------------------------------------

#[test]
fn sgd_is_linear_in_the_learning_rate() {
    let g = [0.3, -1.2, 0.0];
    let mut p1 = vec![0.0; 3];
    let mut p2 = vec![0.0; 3];
    let mut s1 = OptimState::sgd(0.1, 3);
    let mut s2 = OptimState::sgd(0.2, 3);
    optimizer_step(&mut s1, &mut p1, &g).unwrap();
    optimizer_step(&mut s2, &mut p2, &g).unwrap();
    for (a, b) in p1.iter().zip(&p2) {
        assert_eq!(2.0 * a, *b);
    }
    assert_eq!(p1, vec![0.1 * 0.3, 0.1 * -1.2, 0.0]);
    assert_eq!(s1.step_count, 1);
}

#[test]
fn momentum_accumulates_a_velocity() {
    let mut p = vec![0.0];
    let mut s = OptimState::momentum(0.1, 1);
    optimizer_step(&mut s, &mut p, &[1.0]).unwrap();
    assert_abs_diff_eq!(s.momentum_buf[0], 1.0);
    assert_abs_diff_eq!(p[0], 0.1);
    optimizer_step(&mut s, &mut p, &[1.0]).unwrap();
    // m = 0.9 * 1 + 1 = 1.9
    assert_abs_diff_eq!(s.momentum_buf[0], 1.9, epsilon = 1e-15);
    assert_abs_diff_eq!(p[0], 0.1 + 0.19, epsilon = 1e-15);
}

#[test]
fn rmsprop_first_step_from_cold_accumulator() {
    let mut p = vec![0.0];
    let mut s = OptimState::rmsprop(0.1, 1);
    optimizer_step(&mut s, &mut p, &[1.0]).unwrap();
    // G = 0.99 * 0 + 0.01 * 1 = 0.01; step = 0.1 / sqrt(0.01 + 1e-8).
    assert_abs_diff_eq!(s.second_moment[0], 0.01, epsilon = 1e-16);
    assert_abs_diff_eq!(p[0], 0.1 / (0.01f64 + 1e-8).sqrt(), epsilon = 1e-15);
    assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-6);
}

#[test]
fn rmsprop_step_size_forgets_the_gradient_scale() {
    // Under a constant gradient the accumulator converges to g^2, so the
    // step size tends to lr no matter how large or small g is.
    for g in [5.0, 1e-3] {
        let mut p = vec![0.0];
        let mut s = OptimState::rmsprop(0.01, 1);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p[0];
            optimizer_step(&mut s, &mut p, &[g]).unwrap();
            last = p[0] - before;
        }
        assert!(
            (last - 0.01).abs() < 0.01 * 0.01,
            "terminal step {last} for g = {g} should approach lr = 0.01"
        );
        assert!(s.second_moment[0] >= 0.0);
    }
}

#[test]
fn rmsprop_preserves_the_sign_pattern() {
    let g = [3.0, -0.004, 0.0, 2e6];
    let mut p = vec![0.0; 4];
    let mut s = OptimState::rmsprop(0.1, 4);
    let mut rng = stream(41, "signs");
    // Warm the accumulator with noise first.
    for _ in 0..10 {
        let noise: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        optimizer_step(&mut s, &mut vec![0.0; 4], &noise).unwrap();
    }
    optimizer_step(&mut s, &mut p, &g).unwrap();
    for (step, grad) in p.iter().zip(&g) {
        if *grad == 0.0 {
            assert_eq!(*step, 0.0);
        } else {
            assert!(step * grad > 0.0, "step {step} flips the sign of gradient {grad}");
        }
    }
}

#[test]
fn adam_first_step_has_unit_scale() {
    // Bias correction makes the very first step lr * g / (|g| + delta).
    let mut p = vec![0.0];
    let mut s = OptimState::adam(0.1, 1);
    optimizer_step(&mut s, &mut p, &[2.0]).unwrap();
    assert_abs_diff_eq!(p[0], 0.1 * 2.0 / (2.0 + 1e-8), epsilon = 1e-15);
}

#[test]
fn adam_without_momentum_and_correction_is_rmsprop() {
    let mut rng = stream(42, "degenerate");
    let n = 6;
    let mut p_adam: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut p_rms = p_adam.clone();
    let mut adam = OptimState::adam(0.05, n);
    adam.adam_betas = (0.0, 0.99);
    adam.bias_correction = false;
    adam.delta = 0.0;
    let mut rms = OptimState::rmsprop(0.05, n);
    rms.delta = 0.0;
    for _ in 0..50 {
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0) * [-1.0, 1.0][rng.gen_range(0..2usize)]).collect();
        optimizer_step(&mut adam, &mut p_adam, &g).unwrap();
        optimizer_step(&mut rms, &mut p_rms, &g).unwrap();
        for (a, b) in p_adam.iter().zip(&p_rms) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}

#[test]
fn zero_gradient_moves_nothing_from_a_cold_start() {
    for alg in [Algorithm::Sgd, Algorithm::Momentum, Algorithm::RmsProp, Algorithm::Adam] {
        let mut p = vec![0.4, -0.8];
        let mut s = OptimState::new(alg, 0.1, 2);
        optimizer_step(&mut s, &mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.4, -0.8], "{}", alg.name());
        assert!(s.second_moment.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn invalid_steps_are_rejected() {
    let mut p = vec![0.0];
    let mut s = OptimState::sgd(0.1, 1);
    assert!(optimizer_step(&mut s, &mut p, &[f64::NAN]).is_err());
    assert!(optimizer_step(&mut s, &mut p, &[1.0, 2.0]).is_err());
    s.lr = 0.0;
    assert!(optimizer_step(&mut s, &mut p, &[1.0]).is_err());
    s.lr = -0.1;
    assert!(optimizer_step(&mut s, &mut p, &[1.0]).is_err());
    let mut wrong = OptimState::sgd(0.1, 3);
    assert!(optimizer_step(&mut wrong, &mut p, &[1.0]).is_err());
}

#[test]
fn accumulators_survive_a_json_round_trip_bit_for_bit() {
    let mut s = OptimState::adam(0.05, 3);
    let mut p = vec![0.1, -0.2, 0.3];
    let mut rng = stream(43, "roundtrip");
    for _ in 0..7 {
        let g: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        optimizer_step(&mut s, &mut p, &g).unwrap();
    }
    let json = serde_json::to_string(&s).unwrap();
    let back: OptimState = serde_json::from_str(&json).unwrap();
    assert_eq!(back.step_count, s.step_count);
    for (a, b) in back.second_moment.iter().zip(&s.second_moment) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in back.momentum_buf.iter().zip(&s.momentum_buf) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

// --- LrSchedule ------------------------------------------------------------------

#[test]
fn schedule_decays_in_steps() {
    let sched = LrSchedule::new(3e-4, 0.8, 30).unwrap();
    assert_eq!(sched.lr_at(0), 3e-4);
    assert_eq!(sched.lr_at(29), 3e-4);
    assert_abs_diff_eq!(sched.lr_at(30), 2.4e-4, epsilon = 1e-19);
    assert_abs_diff_eq!(sched.lr_at(60), 1.92e-4, epsilon = 1e-19);
}

#[test]
fn schedule_is_non_increasing() {
    let sched = LrSchedule::new(1e-2, 0.7, 8).unwrap();
    let mut prev = f64::INFINITY;
    for epoch in 0..200 {
        let lr = sched.lr_at(epoch);
        assert!(lr <= prev && lr > 0.0);
        prev = lr;
    }
    let flat = LrSchedule::constant(5e-3).unwrap();
    assert_eq!(flat.lr_at(0), flat.lr_at(1000));
}

#[test]
fn malformed_schedules_are_rejected() {
    assert!(LrSchedule::new(0.0, 0.8, 30).is_err());
    assert!(LrSchedule::new(1e-3, 0.0, 30).is_err());
    assert!(LrSchedule::new(1e-3, 1.2, 30).is_err());
    assert!(LrSchedule::new(1e-3, 0.8, 0).is_err());
}

// --- Fisher information ------------------------------------------------------------

#[test]
fn single_state_softmax_fisher_in_closed_form() {
    let mut pol = PolicyModel::tabular_softmax(1, 3);
    pol.set_params(vec![0.2, -0.1, 0.5]).unwrap();
    let probs = pol.action_probs(&State::Discrete(0)).unwrap();
    let fim = exact_fim(&pol, &[0], &[1.0]).unwrap();
    for i in 0..3 {
        assert_abs_diff_eq!(fim.diag[i], probs[i] * (1.0 - probs[i]), epsilon = 1e-12);
        for j in 0..3 {
            if i != j {
                // Cross terms are -pi_i pi_j for one state.
                assert_abs_diff_eq!(fim.full[i][j], -probs[i] * probs[j], epsilon = 1e-12);
            }
            assert_eq!(fim.full[i][j].to_bits(), fim.full[j][i].to_bits());
        }
    }
}

#[test]
fn uniform_two_action_fisher_diagonal_is_a_quarter() {
    let pol = PolicyModel::tabular_softmax(1, 2);
    let fim = exact_fim(&pol, &[0], &[1.0]).unwrap();
    assert_abs_diff_eq!(fim.diag[0], 0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(fim.diag[1], 0.25, epsilon = 1e-12);
}

#[test]
fn near_deterministic_policy_has_vanishing_fisher() {
    let mut pol = PolicyModel::tabular_softmax(1, 2);
    pol.set_params(vec![40.0, 0.0]).unwrap();
    let fim = exact_fim(&pol, &[0], &[1.0]).unwrap();
    assert!(fim.diag.iter().all(|&d| (0.0..1e-15).contains(&d)));
}

#[test]
fn fisher_is_positive_semidefinite() {
    let mut pol = PolicyModel::tabular_softmax(2, 3);
    pol.set_params(vec![0.4, -0.2, 0.9, -1.1, 0.0, 0.3]).unwrap();
    let fim = exact_fim(&pol, &[0, 1], &[0.7, 0.3]).unwrap();
    let mut rng = stream(44, "psd");
    for _ in 0..50 {
        let x: Vec<f64> = (0..fim.n()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        assert!(fim.quadratic_form(&x) >= -1e-12);
    }
}

#[test]
fn fisher_diagonal_matches_monte_carlo_scores() {
    let mut pol = PolicyModel::tabular_softmax(1, 2);
    pol.set_params(vec![0.5, -0.3]).unwrap();
    let fim = exact_fim(&pol, &[0], &[1.0]).unwrap();
    let mut rng = stream(45, "fim-mc");
    let n = 100_000;
    let mut sum = vec![0.0; 2];
    let mut sumsq = vec![0.0; 2];
    for _ in 0..n {
        let (a, _) = pol.sample_action(&State::Discrete(0), &mut rng).unwrap();
        let score = pol.grad_log_prob(&State::Discrete(0), &a).unwrap();
        for i in 0..2 {
            sum[i] += score[i] * score[i];
            sumsq[i] += score[i].powi(4);
        }
    }
    for i in 0..2 {
        let mean = sum[i] / n as f64;
        let var = (sumsq[i] / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - fim.diag[i]).abs() <= 4.0 * se,
            "component {i}: MC {mean} vs exact {} (se {se})",
            fim.diag[i]
        );
    }
}

#[test]
fn rmsprop_accumulator_estimates_the_fisher_diagonal() {
    // Feed RMSProp raw score vectors; its second-moment EMA is then an
    // exponentially weighted estimate of E[score^2] — the Fisher diagonal.
    let mut pol = PolicyModel::tabular_softmax(1, 2);
    pol.set_params(vec![0.5, -0.3]).unwrap();
    let fim = exact_fim(&pol, &[0], &[1.0]).unwrap();
    let mut state = OptimState::rmsprop(1e-3, 2);
    let mut params = pol.params().to_vec();
    let mut rng = stream(46, "fim-ema");
    let n = 100_000;
    let mut sq_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        let (a, _) = pol.sample_action(&State::Discrete(0), &mut rng).unwrap();
        let score = pol.grad_log_prob(&State::Discrete(0), &a).unwrap();
        for i in 0..2 {
            sq_samples[i].push(score[i] * score[i]);
        }
        optimizer_step(&mut state, &mut params, &score).unwrap();
    }
    let rho = state.rmsprop_smoothing;
    for i in 0..2 {
        let m = sq_samples[i].iter().sum::<f64>() / n as f64;
        let var = sq_samples[i].iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        // Stationary variance of an EMA of iid draws.
        let se = (var * (1.0 - rho) / (1.0 + rho)).sqrt();
        assert!(
            (state.second_moment[i] - fim.diag[i]).abs() <= 4.0 * se,
            "accumulator {} vs Fisher diagonal {} (se {se})",
            state.second_moment[i],
            fim.diag[i]
        );
    }
}

#[test]
fn fisher_requires_enumerable_actions() {
    let pol = PolicyModel::mlp_gaussian(2, 1, &mut stream(47, "fim-rej"));
    assert!(matches!(exact_fim(&pol, &[0], &[1.0]), Err(Error::UnsupportedKind(_))));
    let pol = PolicyModel::tabular_softmax(1, 2);
    assert!(exact_fim(&pol, &[0], &[0.5]).is_err()); // not normalized
    assert!(exact_fim(&pol, &[0, 0], &[1.0]).is_err()); // length mismatch
}

// --- fim_precondition ---------------------------------------------------------------

#[test]
fn preconditioning_by_the_identity_is_a_no_op_up_to_delta() {
    let g = [0.3, -2.0, 0.0];
    let out = fim_precondition(&g, &[1.0, 1.0, 1.0], 1e-8).unwrap();
    for (o, gi) in out.iter().zip(&g) {
        assert_abs_diff_eq!(o, gi, epsilon = 1e-7);
    }
}

#[test]
fn doubling_curvature_shrinks_steps_by_sqrt_two() {
    let g = [0.7, -0.2];
    let d1 = [0.9, 2.3];
    let d2: Vec<f64> = d1.iter().map(|x| 2.0 * x).collect();
    let a = fim_precondition(&g, &d1, 0.0).unwrap();
    let b = fim_precondition(&g, &d2, 0.0).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_abs_diff_eq!(*y, x / 2.0f64.sqrt(), epsilon = 1e-14);
    }
}

#[test]
fn preconditioning_agrees_with_the_rmsprop_step_exactly() {
    let mut rng = stream(48, "precond");
    let n = 5;
    let mut params = vec![0.0; n];
    let mut s = OptimState::rmsprop(0.07, n);
    for _ in 0..20 {
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let before = params.clone();
        optimizer_step(&mut s, &mut params, &g).unwrap();
        // Same arithmetic path: lr * precondition(g, post-update G, delta).
        let pre = fim_precondition(&g, &s.second_moment, s.delta).unwrap();
        for i in 0..n {
            let step = s.lr * pre[i];
            assert_eq!((before[i] + step).to_bits(), params[i].to_bits());
        }
    }
}

#[test]
fn zero_gradient_preconditions_to_zero() {
    let out = fim_precondition(&[0.0, 0.0], &[0.0, 3.0], 0.0).unwrap();
    assert_eq!(out, vec![0.0, 0.0]);
    assert!(fim_precondition(&[1.0], &[-0.1], 1e-8).is_err());
    assert!(fim_precondition(&[1.0], &[0.1, 0.2], 1e-8).is_err());
}
