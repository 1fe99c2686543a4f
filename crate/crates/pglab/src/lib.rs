//! Policy-gradient laboratory.
//!
//! This crate implements both the theoretically correct policy-gradient
//! estimator (discounted state weighting) and the common biased one
//! (undiscounted state weighting), together with the three rectification
//! techniques that mask the bias in practice — smaller learning rates,
//! adaptive optimizers (RMSProp/Adam, viewed as diagonal Fisher
//! preconditioning), and KL / reverse-KL regularization — and the
//! measurement instruments needed to observe the bias directly:
//! expected-absolute-ratio-deviation (EARD) model distance, the four-fork
//! bias-spread protocol, feature PCA, and score-model loss surfaces.
//!
//! Everything is verified against exact dynamic-programming oracles on
//! tabular MDPs, including a tiny two-state alias MDP whose biased and
//! unbiased training fixed points are known in closed form.
//!
//! The crate is primarily a library; each major capability has a runnable
//! example under `examples/`, and a thin `pglab` binary exposes the
//! experiment runners as subcommands.

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod mdp;
pub mod optim;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
pub use estimator::SurrogateSpec;
pub use harness::{EnvKind, ExperimentConfig};
pub use mdp::{
    AliasMdp, Environment, OccupancyMode, OccupancyWeights, PendulumEnv, State, TabularMdp,
    Trajectory,
};
pub use policy::PolicyModel;
