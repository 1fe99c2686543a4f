//! Score-model loss surfaces: a supervised regressor predicting return
//! from (state, action), and a 2D slice of the policy loss it induces,
//! taken along two filter-normalized random directions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{Action, State};
use crate::optim::{optimizer_step, OptimState};
use crate::policy::{Architecture, Mlp, PolicyModel, HIDDEN};
use crate::rng::{stream, SeedRng};

/// Supervised regressor `T(state, action) -> predicted return`, with the
/// same 2x16 ReLU body as the policies.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    net: Mlp,
    params: Vec<f64>,
    state_dim: usize,
    action_dim: usize,
    /// Mean squared error on the training set after the final epoch.
    pub final_mse: f64,
}

impl ScoreModel {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn predict(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "score model expects dims ({}, {}), got ({}, {})",
                self.state_dim,
                self.action_dim,
                state.len(),
                action.len()
            )));
        }
        let mut input = Vec::with_capacity(self.net.input_dim);
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        Ok(self.net.forward(&self.params, &input)?.output[0])
    }
}

fn dataset_mse(
    net: &Mlp,
    params: &[f64],
    dataset: &[(Vec<f64>, Vec<f64>, f64)],
    input: &mut Vec<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for (s, a, y) in dataset {
        input.clear();
        input.extend_from_slice(s);
        input.extend_from_slice(a);
        let pred = net.forward(params, input)?.output[0];
        total += (pred - y) * (pred - y);
    }
    Ok(total / dataset.len() as f64)
}

/// Fit a [`ScoreModel`] on (state, action, return) triples by minibatch
/// Adam on the mean-squared error.
///
/// Errors with [`Error::Diverged`] if the epoch-end MSE exceeds 10x the
/// initial MSE (the usual cure is a smaller learning rate).
pub fn fit_score_model(
    dataset: &[(Vec<f64>, Vec<f64>, f64)],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<ScoreModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let state_dim = dataset[0].0.len();
    let action_dim = dataset[0].1.len();
    if state_dim + action_dim == 0 {
        return Err(Error::DegenerateInput("score model needs at least one input".into()));
    }
    for (s, a, y) in dataset {
        if s.len() != state_dim || a.len() != action_dim {
            return Err(Error::DimensionMismatch("ragged score-model dataset".into()));
        }
        if s.iter().chain(a.iter()).any(|x| !x.is_finite()) || !y.is_finite() {
            return Err(Error::NonFinite("score-model dataset".into()));
        }
    }

    let net = Mlp::new(state_dim + action_dim, HIDDEN, 1);
    let mut rng = stream(seed, "score-model");
    let mut params = net.init_params(&mut rng);
    let mut opt = OptimState::adam(lr, net.n_params());

    let batch = 32.min(dataset.len());
    let steps_per_epoch = dataset.len().div_ceil(batch);
    let mut input = Vec::with_capacity(net.input_dim);
    let initial_mse = dataset_mse(&net, &params, dataset, &mut input)?;
    let mut mse = initial_mse;
    for _ in 0..epochs {
        for _ in 0..steps_per_epoch {
            let mut grad = vec![0.0; net.n_params()];
            for _ in 0..batch {
                let (s, a, y) = &dataset[rng.gen_range(0..dataset.len())];
                input.clear();
                input.extend_from_slice(s);
                input.extend_from_slice(a);
                let pass = net.forward(&params, &input)?;
                // d/dp of mean (pred - y)^2 over the minibatch.
                let d_out = [2.0 * (pass.output[0] - y) / batch as f64];
                net.backward(&params, &pass, &d_out, &mut grad)?;
            }
            // Ascent optimizer, descending on the loss.
            for g in &mut grad {
                *g = -*g;
            }
            optimizer_step(&mut opt, &mut params, &grad)?;
        }
        mse = dataset_mse(&net, &params, dataset, &mut input)?;
        if !mse.is_finite() || mse > 10.0 * initial_mse.max(1e-12) {
            return Err(Error::Diverged(format!(
                "score-model MSE {mse} exceeded 10x the initial {initial_mse}; try a smaller learning rate"
            )));
        }
    }
    Ok(ScoreModel { net, params, state_dim, action_dim, final_mse: mse })
}

/// A 2D slice of the policy loss landscape.
#[derive(Debug, Clone)]
pub struct LossSurface {
    /// `grid[i][j]` is the loss at `theta + coords[i] * d1 + coords[j] * d2`.
    pub grid: Vec<Vec<f64>>,
    /// Shared axis ticks over [-1, 1].
    pub coords: Vec<f64>,
    /// The filter-normalized direction vectors.
    pub directions: [Vec<f64>; 2],
    /// Loss at the unperturbed parameters; equals the central grid cell.
    pub center_loss: f64,
}

/// Encode an action the way the score model was trained: continuous
/// coordinates pass through, discrete indices become one-hot vectors.
fn encode_action(policy: &PolicyModel, action: &Action, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    match action {
        Action::Continuous(v) => out.extend_from_slice(v),
        Action::Discrete(i) => {
            let n = match policy.architecture() {
                Architecture::MlpSoftmax { n_actions, .. } => *n_actions,
                Architecture::TabularSoftmax { n_actions, .. } => *n_actions,
                _ => return Err(Error::UnsupportedKind(policy.kind_str())),
            };
            out.resize(n, 0.0);
            out[*i] = 1.0;
        }
    }
    Ok(())
}

/// Monte Carlo loss `-E_s E_{a~pi}[T(s,a) + alpha log pi(a|s)]` over the
/// given states, `n_action_samples` actions per state.
pub fn surface_loss(
    policy: &PolicyModel,
    model: &ScoreModel,
    states: &[Vec<f64>],
    alpha: f64,
    n_action_samples: usize,
    rng: &mut SeedRng,
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_action_samples == 0 {
        return Err(Error::InvalidConfig("need at least one action sample per state".into()));
    }
    let mut total = 0.0;
    let mut encoded = Vec::new();
    for coords in states {
        let state = State::Continuous(coords.clone());
        for _ in 0..n_action_samples {
            let (action, log_prob) = policy.sample_action(&state, rng)?;
            encode_action(policy, &action, &mut encoded)?;
            let t = model.predict(coords, &encoded)?;
            // Bitwise-equal to the unregularized objective at alpha = 0.
            total += if alpha == 0.0 { t } else { t + alpha * log_prob };
        }
    }
    Ok(-total / (states.len() * n_action_samples) as f64)
}

/// Rescale each filter group of `direction` to the norm of the matching
/// group of `params`; groups where the parameters vanish are zeroed.
fn filter_normalize(direction: &mut [f64], params: &[f64], groups: &[Vec<usize>]) {
    for group in groups {
        let pn: f64 = group.iter().map(|&i| params[i] * params[i]).sum::<f64>().sqrt();
        let dn: f64 = group.iter().map(|&i| direction[i] * direction[i]).sum::<f64>().sqrt();
        if pn == 0.0 || dn < 1e-300 {
            for &i in group {
                direction[i] = 0.0;
            }
        } else {
            for &i in group {
                direction[i] *= pn / dn;
            }
        }
    }
}

/// Sample the loss landscape on the `resolution x resolution` grid over
/// `(a, b) in [-1, 1]^2` along two random filter-normalized directions.
///
/// Every cell re-seeds an identical rng stream, so cells share their
/// action noise: the center cell reproduces the loss at `theta` exactly,
/// zero directions give a constant grid, and the whole surface is a
/// deterministic function of (policy, seed, resolution).
pub fn loss_surface(
    policy: &PolicyModel,
    model: &ScoreModel,
    states: &[Vec<f64>],
    alpha: f64,
    resolution: usize,
    n_action_samples: usize,
    seed: u64,
) -> Result<LossSurface> {
    if !matches!(
        policy.architecture(),
        Architecture::MlpSoftmax { .. } | Architecture::MlpGaussian { .. }
    ) {
        return Err(Error::UnsupportedKind(policy.kind_str()));
    }
    if resolution < 3 || resolution % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution must be odd and >= 3 so the center cell exists, got {resolution}"
        )));
    }

    let params = policy.params().to_vec();
    let groups = policy.filter_groups();
    let mut dir_rng = stream(seed, "loss-surface-directions");
    let mut directions = [vec![0.0; params.len()], vec![0.0; params.len()]];
    for dir in &mut directions {
        for d in dir.iter_mut() {
            *d = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut dir_rng);
        }
        filter_normalize(dir, &params, &groups);
    }

    let coords: Vec<f64> = (0..resolution)
        .map(|i| -1.0 + 2.0 * i as f64 / (resolution - 1) as f64)
        .collect();
    let mut grid = vec![vec![0.0; resolution]; resolution];
    let mut probe = policy.clone();
    for (i, &a) in coords.iter().enumerate() {
        for (j, &b) in coords.iter().enumerate() {
            let shifted: Vec<f64> = params
                .iter()
                .zip(&directions[0])
                .zip(&directions[1])
                .map(|((p, d1), d2)| p + a * d1 + b * d2)
                .collect();
            probe.set_params(shifted)?;
            let mut cell_rng = stream(seed, "loss-surface-cell");
            grid[i][j] = surface_loss(&probe, model, states, alpha, n_action_samples, &mut cell_rng)?;
        }
    }
    let c = resolution / 2;
    let center_loss = grid[c][c];
    Ok(LossSurface { grid, coords, directions, center_loss })
}
