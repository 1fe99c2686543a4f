//! Differentiable policy parameterizations with manual score computation.
//!
//! Four kinds share one interface: a tabular softmax over discrete
//! states, the single-parameter tied policy for aliased two-state
//! problems, and a 2x16 ReLU MLP with either a softmax head (discrete
//! actions) or a diagonal-Gaussian head (continuous actions,
//! state-independent log-std). Parameters live in one flat vector so
//! optimizers and oracles can treat every kind uniformly.

pub(crate) mod net;

pub use net::{ForwardPass, Mlp, HIDDEN};

use crate::error::{Error, Result};
use crate::mdp::{Action, State};
use crate::rng::{sample_index, SeedRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Smallest/largest tied-alias probability after projection.
pub const TIED_CLAMP: (f64, f64) = (1e-6, 1.0 - 1e-6);
/// Gaussian log-std clamp after projection.
pub const LOGSTD_CLAMP: (f64, f64) = (-5.0, 2.0);

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Structural metadata of a policy (everything but the parameter values).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Architecture {
    /// One logit per (state, action); `params[s * n_actions + a]`.
    TabularSoftmax { n_states: usize, n_actions: usize },
    /// One parameter: the shared go-probability used in every state.
    TiedAlias,
    /// MLP body producing one logit per action.
    MlpSoftmax { input_dim: usize, hidden: usize, n_actions: usize },
    /// MLP body producing the mean; trailing `action_dim` params are the
    /// state-independent log-stds.
    MlpGaussian { input_dim: usize, hidden: usize, action_dim: usize },
}

impl Architecture {
    pub fn kind_str(&self) -> &'static str {
        match self {
            Architecture::TabularSoftmax { .. } => "tabular-softmax",
            Architecture::TiedAlias => "tied-alias",
            Architecture::MlpSoftmax { .. } => "mlp-softmax",
            Architecture::MlpGaussian { .. } => "mlp-gaussian",
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Architecture::TabularSoftmax { n_states, n_actions } => n_states * n_actions,
            Architecture::TiedAlias => 1,
            Architecture::MlpSoftmax { input_dim, hidden, n_actions } => {
                Mlp::new(*input_dim, *hidden, *n_actions).n_params()
            }
            Architecture::MlpGaussian { input_dim, hidden, action_dim } => {
                Mlp::new(*input_dim, *hidden, *action_dim).n_params() + action_dim
            }
        }
    }

    fn mlp(&self) -> Option<Mlp> {
        match self {
            Architecture::MlpSoftmax { input_dim, hidden, n_actions } => {
                Some(Mlp::new(*input_dim, *hidden, *n_actions))
            }
            Architecture::MlpGaussian { input_dim, hidden, action_dim } => {
                Some(Mlp::new(*input_dim, *hidden, *action_dim))
            }
            _ => None,
        }
    }
}

/// A policy: architecture plus a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    arch: Architecture,
    params: Vec<f64>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl PolicyModel {
    /// Tabular softmax with all-zero logits (uniform policy).
    pub fn tabular_softmax(n_states: usize, n_actions: usize) -> Self {
        let arch = Architecture::TabularSoftmax { n_states, n_actions };
        let params = vec![0.0; arch.n_params()];
        PolicyModel { arch, params }
    }

    /// Tied-alias policy at go-probability `theta` (projected into the
    /// open unit interval).
    pub fn tied_alias(theta: f64) -> Self {
        let mut p = PolicyModel { arch: Architecture::TiedAlias, params: vec![theta] };
        p.project_params();
        p
    }

    /// MLP with softmax head, weights drawn from `rng`.
    pub fn mlp_softmax(input_dim: usize, n_actions: usize, rng: &mut SeedRng) -> Self {
        let arch = Architecture::MlpSoftmax { input_dim, hidden: HIDDEN, n_actions };
        let params = arch.mlp().unwrap().init_params(rng);
        PolicyModel { arch, params }
    }

    /// MLP with diagonal-Gaussian head, weights drawn from `rng`;
    /// log-stds start at 0 (unit standard deviation).
    pub fn mlp_gaussian(input_dim: usize, action_dim: usize, rng: &mut SeedRng) -> Self {
        let arch = Architecture::MlpGaussian { input_dim, hidden: HIDDEN, action_dim };
        let mut params = arch.mlp().unwrap().init_params(rng);
        params.extend(std::iter::repeat(0.0).take(action_dim));
        PolicyModel { arch, params }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn kind_str(&self) -> &'static str {
        self.arch.kind_str()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replace the parameter vector; applies the kind's projection
    /// (tied-alias probability clamp, Gaussian log-std clamp) and
    /// rejects non-finite values.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.arch.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} expects {} params, got {}",
                self.kind_str(),
                self.arch.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("policy parameters".into()));
        }
        self.params = params;
        self.project_params();
        Ok(())
    }

    /// Action-probability table over discrete states `0..n_states`, the
    /// form the exact dynamic-programming oracles consume.
    pub fn tabulate(&self, n_states: usize) -> Result<Vec<Vec<f64>>> {
        (0..n_states).map(|s| self.action_probs(&State::Discrete(s))).collect()
    }

    /// Parameter-index groups for per-group ("filter") rescaling: each MLP
    /// output unit's weight row plus bias forms one group, the Gaussian
    /// log-stds one more; non-MLP kinds are a single group.
    pub fn filter_groups(&self) -> Vec<Vec<usize>> {
        match self.arch.mlp() {
            Some(net) => {
                let mut groups = net.unit_groups();
                if net.n_params() < self.params.len() {
                    groups.push((net.n_params()..self.params.len()).collect());
                }
                groups
            }
            None => vec![(0..self.params.len()).collect()],
        }
    }

    /// In-place ascent step `theta += step`, then projection.
    pub fn apply_step(&mut self, step: &[f64]) -> Result<()> {
        if step.len() != self.params.len() {
            return Err(Error::DimensionMismatch("update length".into()));
        }
        let next: Vec<f64> = self.params.iter().zip(step).map(|(p, s)| p + s).collect();
        self.set_params(next)
    }

    /// The MLP-body slice of the parameter vector (everything except the
    /// Gaussian head's trailing log-stds).
    fn body_params(&self) -> &[f64] {
        match &self.arch {
            Architecture::MlpGaussian { action_dim, .. } => {
                &self.params[..self.params.len() - action_dim]
            }
            _ => &self.params,
        }
    }

    fn project_params(&mut self) {
        match &self.arch {
            Architecture::TiedAlias => {
                self.params[0] = self.params[0].clamp(TIED_CLAMP.0, TIED_CLAMP.1);
            }
            Architecture::MlpGaussian { action_dim, .. } => {
                let n = self.params.len();
                for ls in &mut self.params[n - action_dim..] {
                    *ls = ls.clamp(LOGSTD_CLAMP.0, LOGSTD_CLAMP.1);
                }
            }
            _ => {}
        }
    }

    /// Network input for a state: continuous coordinates pass through;
    /// discrete indices become one-hot when the input layer is wider
    /// than one unit.
    fn encode_state(&self, state: &State, input_dim: usize) -> Result<Vec<f64>> {
        match state {
            State::Continuous(v) => {
                if v.len() != input_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "state dim {} vs input dim {input_dim}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
            State::Discrete(s) => {
                if input_dim == 1 {
                    Ok(vec![*s as f64])
                } else if *s < input_dim {
                    let mut v = vec![0.0; input_dim];
                    v[*s] = 1.0;
                    Ok(v)
                } else {
                    Err(Error::DimensionMismatch(format!(
                        "discrete state {s} does not fit one-hot width {input_dim}"
                    )))
                }
            }
        }
    }

    /// Action probabilities at a state (discrete kinds only).
    pub fn action_probs(&self, state: &State) -> Result<Vec<f64>> {
        match &self.arch {
            Architecture::TabularSoftmax { n_states, n_actions } => {
                let s = state.index();
                if s >= *n_states {
                    return Err(Error::DimensionMismatch(format!("state {s} of {n_states}")));
                }
                let row = &self.params[s * n_actions..(s + 1) * n_actions];
                let lse = log_sum_exp(row);
                Ok(row.iter().map(|l| (l - lse).exp()).collect())
            }
            Architecture::TiedAlias => {
                let theta = self.params[0];
                Ok(vec![theta, 1.0 - theta])
            }
            Architecture::MlpSoftmax { input_dim, .. } => {
                let input = self.encode_state(state, *input_dim)?;
                let pass = self.arch.mlp().unwrap().forward(self.body_params(), &input)?;
                let lse = log_sum_exp(&pass.output);
                Ok(pass.output.iter().map(|l| (l - lse).exp()).collect())
            }
            Architecture::MlpGaussian { .. } => Err(Error::UnsupportedKind(
                "action_probs requires a discrete-action policy",
            )),
        }
    }

    /// Natural-log probability mass (discrete) or density (continuous).
    pub fn log_prob(&self, state: &State, action: &Action) -> Result<f64> {
        match &self.arch {
            Architecture::TabularSoftmax { n_states, n_actions } => {
                let s = state.index();
                let a = action.index();
                if s >= *n_states || a >= *n_actions {
                    return Err(Error::DimensionMismatch(format!("({s},{a}) outside table")));
                }
                let row = &self.params[s * n_actions..(s + 1) * n_actions];
                Ok(row[a] - log_sum_exp(row))
            }
            Architecture::TiedAlias => {
                let theta = self.params[0];
                match action.index() {
                    0 => Ok(theta.ln()),
                    1 => Ok((1.0 - theta).ln()),
                    a => Err(Error::DimensionMismatch(format!("tied-alias action {a}"))),
                }
            }
            Architecture::MlpSoftmax { input_dim, n_actions, .. } => {
                let a = action.index();
                if a >= *n_actions {
                    return Err(Error::DimensionMismatch(format!("action {a} of {n_actions}")));
                }
                let input = self.encode_state(state, *input_dim)?;
                let pass = self.arch.mlp().unwrap().forward(self.body_params(), &input)?;
                Ok(pass.output[a] - log_sum_exp(&pass.output))
            }
            Architecture::MlpGaussian { input_dim, action_dim, .. } => {
                let a = action.coords();
                if a.len() != *action_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "action dim {} vs {action_dim}",
                        a.len()
                    )));
                }
                let input = self.encode_state(state, *input_dim)?;
                let pass = self.arch.mlp().unwrap().forward(self.body_params(), &input)?;
                let logstd = &self.params[self.params.len() - action_dim..];
                let mut lp = 0.0;
                for i in 0..*action_dim {
                    let ls = logstd[i];
                    let z = (a[i] - pass.output[i]) * (-ls).exp();
                    lp += -0.5 * LN_2PI - ls - 0.5 * z * z;
                }
                Ok(lp)
            }
        }
    }

    /// Score vector `d log pi(a|s) / d theta`, same length as `params`.
    pub fn grad_log_prob(&self, state: &State, action: &Action) -> Result<Vec<f64>> {
        Ok(self.log_prob_with_grad(state, action)?.1)
    }

    /// Log-probability and score in one pass (the MLP kinds share the
    /// forward computation).
    pub fn log_prob_with_grad(&self, state: &State, action: &Action) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let lp = match &self.arch {
            Architecture::TabularSoftmax { n_states, n_actions } => {
                let s = state.index();
                let a = action.index();
                if s >= *n_states || a >= *n_actions {
                    return Err(Error::DimensionMismatch(format!("({s},{a}) outside table")));
                }
                let row = &self.params[s * n_actions..(s + 1) * n_actions];
                let lse = log_sum_exp(row);
                for b in 0..*n_actions {
                    let pb = (row[b] - lse).exp();
                    grad[s * n_actions + b] = if b == a { 1.0 - pb } else { -pb };
                }
                row[a] - lse
            }
            Architecture::TiedAlias => {
                let theta = self.params[0];
                match action.index() {
                    0 => {
                        grad[0] = 1.0 / theta;
                        theta.ln()
                    }
                    1 => {
                        grad[0] = -1.0 / (1.0 - theta);
                        (1.0 - theta).ln()
                    }
                    a => return Err(Error::DimensionMismatch(format!("tied-alias action {a}"))),
                }
            }
            Architecture::MlpSoftmax { input_dim, n_actions, .. } => {
                let a = action.index();
                if a >= *n_actions {
                    return Err(Error::DimensionMismatch(format!("action {a} of {n_actions}")));
                }
                let mlp = self.arch.mlp().unwrap();
                let input = self.encode_state(state, *input_dim)?;
                let pass = mlp.forward(self.body_params(), &input)?;
                let lse = log_sum_exp(&pass.output);
                let d_out: Vec<f64> = (0..*n_actions)
                    .map(|b| {
                        let pb = (pass.output[b] - lse).exp();
                        if b == a {
                            1.0 - pb
                        } else {
                            -pb
                        }
                    })
                    .collect();
                mlp.backward(&self.params, &pass, &d_out, &mut grad)?;
                pass.output[a] - lse
            }
            Architecture::MlpGaussian { input_dim, action_dim, .. } => {
                let a = action.coords();
                if a.len() != *action_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "action dim {} vs {action_dim}",
                        a.len()
                    )));
                }
                let mlp = self.arch.mlp().unwrap();
                let input = self.encode_state(state, *input_dim)?;
                let pass = mlp.forward(self.body_params(), &input)?;
                let logstd_off = self.params.len() - action_dim;
                let logstd = &self.params[logstd_off..];
                let mut lp = 0.0;
                let mut d_mean = vec![0.0; *action_dim];
                for i in 0..*action_dim {
                    let ls = logstd[i];
                    let inv_var = (-2.0 * ls).exp();
                    let diff = a[i] - pass.output[i];
                    lp += -0.5 * LN_2PI - ls - 0.5 * diff * diff * inv_var;
                    d_mean[i] = diff * inv_var;
                    grad[logstd_off + i] = diff * diff * inv_var - 1.0;
                }
                mlp.backward(&self.params[..logstd_off], &pass, &d_mean, &mut grad[..logstd_off])?;
                lp
            }
        };
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("score at {:?}", self.kind_str())));
        }
        Ok((lp, grad))
    }

    /// Draw `a ~ pi(.|s)`. The returned log-prob is computed by
    /// [`PolicyModel::log_prob`] on the drawn action, so the two always
    /// agree exactly.
    pub fn sample_action(&self, state: &State, rng: &mut SeedRng) -> Result<(Action, f64)> {
        let action = match &self.arch {
            Architecture::TabularSoftmax { .. }
            | Architecture::TiedAlias
            | Architecture::MlpSoftmax { .. } => {
                let probs = self.action_probs(state)?;
                Action::Discrete(sample_index(rng, &probs))
            }
            Architecture::MlpGaussian { input_dim, action_dim, .. } => {
                let input = self.encode_state(state, *input_dim)?;
                let pass = self.arch.mlp().unwrap().forward(self.body_params(), &input)?;
                let logstd = &self.params[self.params.len() - action_dim..];
                let a: Vec<f64> = (0..*action_dim)
                    .map(|i| {
                        let eps: f64 = StandardNormal.sample(rng);
                        pass.output[i] + logstd[i].exp() * eps
                    })
                    .collect();
                Action::Continuous(a)
            }
        };
        let lp = self.log_prob(state, &action)?;
        Ok((action, lp))
    }

    /// Post-activation hidden features after MLP layer 1 or 2.
    pub fn features(&self, state: &State, layer: usize) -> Result<Vec<f64>> {
        let mlp = self
            .arch
            .mlp()
            .ok_or(Error::UnsupportedKind("features require an MLP policy"))?;
        let input_dim = mlp.input_dim;
        let input = self.encode_state(state, input_dim)?;
        let pass = mlp.forward(self.body_params(), &input)?;
        Ok(pass.hidden(layer)?.to_vec())
    }

    /// Mean of the Gaussian head at a state (mlp-gaussian only).
    pub fn gaussian_mean(&self, state: &State) -> Result<Vec<f64>> {
        match &self.arch {
            Architecture::MlpGaussian { input_dim, .. } => {
                let input = self.encode_state(state, *input_dim)?;
                let pass = self.arch.mlp().unwrap().forward(self.body_params(), &input)?;
                Ok(pass.output)
            }
            _ => Err(Error::UnsupportedKind("gaussian_mean requires an mlp-gaussian policy")),
        }
    }

    /// Shannon entropy of the action distribution (discrete kinds).
    pub fn entropy(&self, state: &State) -> Result<f64> {
        let probs = self.action_probs(state)?;
        Ok(probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| -p * p.ln())
            .sum())
    }
}

// ---------------------------------------------------------------------
// Checkpoint format: JSON {kind, architecture, params}.

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    kind: String,
    architecture: ArchData,
    params: Vec<f64>,
}

/// Architecture fields; which are present depends on `kind`.
#[derive(Debug, Default, Serialize, Deserialize)]
struct ArchData {
    #[serde(skip_serializing_if = "Option::is_none")]
    n_states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_actions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_dim: Option<usize>,
}

fn need(field: Option<usize>, name: &str, kind: &str) -> Result<usize> {
    field.ok_or_else(|| {
        Error::InvalidConfig(format!("checkpoint kind {kind} requires architecture.{name}"))
    })
}

impl PolicyModel {
    /// Serialize as JSON `{kind, architecture, params}`; doubles are
    /// written losslessly, and serialize -> deserialize -> serialize is
    /// byte-identical.
    pub fn to_checkpoint_json(&self) -> String {
        let architecture = match &self.arch {
            Architecture::TabularSoftmax { n_states, n_actions } => ArchData {
                n_states: Some(*n_states),
                n_actions: Some(*n_actions),
                ..ArchData::default()
            },
            Architecture::TiedAlias => ArchData::default(),
            Architecture::MlpSoftmax { input_dim, hidden, n_actions } => ArchData {
                input_dim: Some(*input_dim),
                hidden: Some(*hidden),
                n_actions: Some(*n_actions),
                ..ArchData::default()
            },
            Architecture::MlpGaussian { input_dim, hidden, action_dim } => ArchData {
                input_dim: Some(*input_dim),
                hidden: Some(*hidden),
                action_dim: Some(*action_dim),
                ..ArchData::default()
            },
        };
        let ckpt = Checkpoint {
            kind: self.kind_str().to_string(),
            architecture,
            params: self.params.clone(),
        };
        serde_json::to_string(&ckpt).expect("checkpoint serialization cannot fail")
    }

    /// Parse a `{kind, architecture, params}` checkpoint.
    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json)?;
        let a = &ckpt.architecture;
        let arch = match ckpt.kind.as_str() {
            "tabular-softmax" => Architecture::TabularSoftmax {
                n_states: need(a.n_states, "n_states", &ckpt.kind)?,
                n_actions: need(a.n_actions, "n_actions", &ckpt.kind)?,
            },
            "tied-alias" => Architecture::TiedAlias,
            "mlp-softmax" => Architecture::MlpSoftmax {
                input_dim: need(a.input_dim, "input_dim", &ckpt.kind)?,
                hidden: need(a.hidden, "hidden", &ckpt.kind)?,
                n_actions: need(a.n_actions, "n_actions", &ckpt.kind)?,
            },
            "mlp-gaussian" => Architecture::MlpGaussian {
                input_dim: need(a.input_dim, "input_dim", &ckpt.kind)?,
                hidden: need(a.hidden, "hidden", &ckpt.kind)?,
                action_dim: need(a.action_dim, "action_dim", &ckpt.kind)?,
            },
            other => return Err(Error::InvalidConfig(format!("unknown policy kind {other:?}"))),
        };
        if ckpt.params.len() != arch.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint has {} params, {} expects {}",
                ckpt.params.len(),
                ckpt.kind,
                arch.n_params()
            )));
        }
        let mut model = PolicyModel { arch, params: vec![0.0; ckpt.params.len()] };
        model.set_params(ckpt.params)?;
        Ok(model)
    }
}
