//! What the policy network's hidden layers encode — and when.
//!
//! Run states from a pendulum probe through the Gaussian MLP, collect
//! hidden activations at each layer, project them to 2-D with PCA, and
//! correlate the projections with the action the policy took. A layer
//! whose leading principal direction predicts the action has organized
//! its representation around the control decision.
//!
//! Training is what creates that structure: after a handful of epochs
//! the correlations are weak, while a trained policy's last hidden layer
//! collapses onto an almost one-dimensional control manifold (|r| near
//! 1 despite the exploration noise in the taken actions).
//!
//! Run with: `cargo run --example feature_pca`

use anyhow::Result;
use pglab::diagnostics::{action_correlation, pca_2d};
use pglab::estimator::flatten_dataset;
use pglab::harness::train_probe;
use pglab::mdp::Action;
use pglab::{EnvKind, ExperimentConfig};

/// |corr(pc1, action)| per layer, plus explained variances.
fn probe(epochs: usize) -> Result<Vec<(usize, f64, f64, f64)>> {
    let mut cfg = ExperimentConfig::default_for(EnvKind::Pendulum);
    cfg.epochs = epochs;
    cfg.episodes_per_epoch = 8;
    cfg.truncation = 150;
    let (policy, dataset) = train_probe(&cfg, cfg.seeds[0])?;
    let flat = flatten_dataset(&dataset, cfg.gamma);
    let actions: Vec<f64> = flat
        .iter()
        .map(|s| match &s.action {
            Action::Continuous(v) => v[0],
            Action::Discrete(i) => *i as f64,
        })
        .collect();

    let mut out = Vec::new();
    for layer in [1usize, 2] {
        let features: Vec<Vec<f64>> = flat
            .iter()
            .map(|s| policy.features(&s.state, layer))
            .collect::<Result<_, _>>()?;
        let pca = pca_2d(&features)?;

        // The component vectors must come back unit-norm and orthogonal.
        let dot: f64 = pca.components[0].iter().zip(&pca.components[1]).map(|(a, b)| a * b).sum();
        let n1: f64 = pca.components[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n1 - 1.0).abs() < 1e-8 && dot.abs() < 1e-8);
        assert!(pca.explained[0] >= pca.explained[1]);

        let (r_x, _) = action_correlation(&pca.projected, &actions)?;
        out.push((layer, pca.explained[0], pca.explained[1], r_x.abs()));
    }
    Ok(out)
}

fn main() -> Result<()> {
    println!("{:>8} {:>6} {:>10} {:>10} {:>14}", "epochs", "layer", "var pc1", "var pc2", "|corr(pc1,a)|");
    let mut by_run = Vec::new();
    for epochs in [4usize, 60] {
        let rows = probe(epochs)?;
        for &(layer, v1, v2, r) in &rows {
            println!("{epochs:>8} {layer:>6} {v1:>10.4} {v2:>10.4} {r:>14.4}");
        }
        by_run.push(rows);
    }

    let early_l2 = by_run[0][1].3;
    let trained_l2 = by_run[1][1].3;
    assert!(trained_l2 > 0.8, "trained layer 2 should track the action, got {trained_l2}");
    assert!(trained_l2 > early_l2 + 0.2, "training should organize the representation");

    println!("\nearly in training the hidden activations vary along directions the");
    println!("action ignores; after training, the last layer's leading principal");
    println!("direction *is* the control signal, exploration noise and all.");
    Ok(())
}
