//! Loss surface of the regularized surrogate around a trained policy.
//!
//! Pipeline: train a short Gaussian-MLP probe on the pendulum task, fit
//! a small score model `q(s, a)` to the sampled returns, then evaluate
//! the surrogate loss on a 2-D slice through parameter space. The two
//! slice directions are random but *filter-normalized* — each weight row
//! is rescaled to the policy's own row norm — so curvature is comparable
//! across coordinates and the picture is not an artifact of scale.
//!
//! Every grid cell reuses the same action-sampling seed, so the surface
//! is a deterministic function of (policy, model, states) and the center
//! cell equals the separately computed center loss exactly.
//!
//! Run with: `cargo run --example loss_surface`

use anyhow::Result;
use pglab::diagnostics::{fit_score_model, loss_surface};
use pglab::estimator::flatten_dataset;
use pglab::harness::svg::surface_heatmap;
use pglab::harness::train_probe;
use pglab::{EnvKind, ExperimentConfig};

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::default_for(EnvKind::Pendulum);
    cfg.epochs = 6;
    cfg.episodes_per_epoch = 6;
    cfg.truncation = 120;

    let seed = cfg.seeds[0];
    let (policy, dataset) = train_probe(&cfg, seed)?;
    let flat = flatten_dataset(&dataset, cfg.gamma);
    println!("probe: {} epochs -> {} transitions", cfg.epochs, flat.len());

    let fit_data: Vec<(Vec<f64>, Vec<f64>, f64)> = flat
        .iter()
        .map(|s| (s.state.coords().to_vec(), s.action.coords().to_vec(), s.q_hat))
        .collect();
    let model = fit_score_model(&fit_data, 300, 5e-3, seed)?;
    println!("score model mse on sampled returns: {:.4}", model.final_mse);

    let states: Vec<Vec<f64>> = flat.iter().take(96).map(|s| s.state.coords().to_vec()).collect();
    let surface = loss_surface(&policy, &model, &states, 0.3, 15, 6, seed)?;

    let c = surface.coords.len() / 2;
    assert_eq!(surface.grid[c][c], surface.center_loss, "center cell must be exact");
    assert_eq!(surface.coords[c], 0.0);

    // Coarse terminal rendering: darker = higher loss.
    let flat_losses: Vec<f64> = surface.grid.iter().flatten().copied().collect();
    let (lo, hi) = flat_losses
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let shades: &[u8] = b" .:-=+*#%@";
    println!("\nloss over the slice (rows: direction 1, cols: direction 2):");
    for row in surface.grid.iter().rev() {
        let line: String = row
            .iter()
            .map(|&v| {
                let t = ((v - lo) / (hi - lo).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
                shades[((t * (shades.len() - 1) as f64).round()) as usize] as char
            })
            .collect();
        println!("  |{line}|");
    }
    println!("loss range: [{lo:.4}, {hi:.4}], center {:.4}", surface.center_loss);

    let out = std::env::temp_dir().join("pglab_loss_surface_example.svg");
    surface_heatmap(&out, "surrogate loss surface", &surface)?;
    println!("heatmap written to {}", out.display());
    Ok(())
}
