//! Thin command-line front end over the library: the experiment runners,
//! the alias toy, the two diagnostics, and config validation. All logic
//! lives in the library; this file only parses flags, resolves a config,
//! and reports errors as JSON.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use pglab::diagnostics::{action_correlation, fit_score_model, loss_surface, pca_2d};
use pglab::estimator::{flatten_dataset, Regularizer};
use pglab::harness::config::{EnvKind, ExperimentConfig};
use pglab::harness::csvio::{fmt_f64, write_csv};
use pglab::harness::experiments::{
    run_alias_toy, run_bias_spread, run_offpolicy, run_performance, train_probe, AliasToyMode,
    ExperimentOutput,
};
use pglab::harness::manifest::{write_manifest, Manifest};
use pglab::harness::svg::surface_heatmap;
use pglab::mdp::OccupancyMode;
use pglab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pglab",
    about = "Policy-gradient bias laboratory: estimators, corrections, diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the 2x2 grid (biased/unbiased x plain/corrected) and compare returns.
    RunPerformance(RunOpts),
    /// Train one baseline, probing the four-fork bias spread every epoch.
    RunBiasSpread(RunOpts),
    /// Performance grid with every gradient batch perturbed off-policy.
    RunOffpolicy(RunOpts),
    /// Trace the alias task's closed-form fixed points.
    AliasToy(AliasToyOpts),
    /// Measurement instruments over a probe training run.
    Diag {
        #[command(subcommand)]
        command: DiagCommand,
    },
    /// Parse and validate a config file, printing its canonical form.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Fit a score model on a probe run and map the surrogate landscape
    /// around the trained policy in two filter-normalized directions.
    LossSurface(SurfaceOpts),
    /// Project hidden-layer features of visited states onto their top two
    /// principal components and correlate with the action taken.
    FeaturePca(PcaOpts),
}

/// Config resolution shared by every training-backed subcommand: start
/// from `--config` (or the environment default), then apply flag
/// overrides.
#[derive(Args, Clone)]
struct ConfigOpts {
    /// Experiment config JSON; defaults to the --env preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment: alias, chain, or pendulum.
    #[arg(long)]
    env: Option<EnvKind>,
    /// Replace the config's seed list (repeat for several seeds).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Train the biased (undiscounted-weighting) surrogate: on or off.
    #[arg(long)]
    bias: Option<String>,
    /// Optimizer: sgd, momentum, rmsprop, or adam.
    #[arg(long)]
    optimizer: Option<String>,
    /// Regularizer: none, kl, or reverse-kl.
    #[arg(long)]
    regularizer: Option<String>,
    /// KL regularizer strength.
    #[arg(long)]
    alpha: Option<f64>,
    /// Reverse-KL regularizer strength.
    #[arg(long)]
    beta: Option<f64>,
    /// Base learning rate (keeps the configured decay).
    #[arg(long)]
    lr: Option<f64>,
    /// Discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Episodes sampled per epoch.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct RunOpts {
    #[command(flatten)]
    config: ConfigOpts,
    /// Output directory (default: the config's, else pglab-out/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for (seed x variant) jobs; artifacts are identical
    /// at any worker count.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct AliasToyOpts {
    /// Discount factors to trace (repeatable).
    #[arg(long = "gamma", default_values_t = [0.3, 0.5, 0.7, 0.9])]
    gammas: Vec<f64>,
    /// exact: ascend the exact-gradient oracle; mc: Monte Carlo training.
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Ascent epochs (per gamma, per weighting).
    #[arg(long)]
    epochs: Option<usize>,
    /// Episodes per epoch (mc mode).
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    /// Seeds averaged in mc mode (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SurfaceOpts {
    #[command(flatten)]
    config: ConfigOpts,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid resolution per axis (odd, >= 3).
    #[arg(long, default_value_t = 21)]
    resolution: usize,
    /// Actions sampled per state when estimating the expected score.
    #[arg(long, default_value_t = 8)]
    action_samples: usize,
    /// States probed from the final dataset.
    #[arg(long, default_value_t = 128)]
    states: usize,
    /// Score-model fitting epochs.
    #[arg(long, default_value_t = 300)]
    fit_epochs: usize,
    /// Score-model fitting learning rate.
    #[arg(long, default_value_t = 5e-3)]
    fit_lr: f64,
}

#[derive(Args)]
struct PcaOpts {
    #[command(flatten)]
    config: ConfigOpts,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hidden layer whose activations are projected (1 or 2).
    #[arg(long, default_value_t = 2)]
    layer: usize,
    /// Feature vectors sampled from the final dataset.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
}

fn resolve_config(opts: &ConfigOpts, default_env: EnvKind) -> Result<ExperimentConfig> {
    let mut cfg = match &opts.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_for(opts.env.unwrap_or(default_env)),
    };
    if let Some(env) = opts.env {
        if opts.config.is_some() && env != cfg.env {
            // Switching environment invalidates the file's tuned knobs;
            // restart from the preset and reapply everything explicit.
            cfg = ExperimentConfig::default_for(env);
        }
        cfg.env = env;
    }
    if !opts.seeds.is_empty() {
        cfg.seeds = opts.seeds.clone();
    }
    if let Some(bias) = &opts.bias {
        cfg.spec.state_weighting = match bias.as_str() {
            "on" => OccupancyMode::Undiscounted,
            "off" => OccupancyMode::Discounted,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "--bias takes on or off, got {other:?}"
                )))
            }
        };
    }
    if let Some(name) = &opts.optimizer {
        cfg.optimizer.algorithm = name.parse()?;
    }
    if let Some(reg) = &opts.regularizer {
        cfg.spec.regularizer = match reg.as_str() {
            "none" => Regularizer::None,
            "kl" => Regularizer::Kl { alpha: opts.alpha.unwrap_or(0.3) },
            "reverse-kl" => Regularizer::ReverseKl { beta: opts.beta.unwrap_or(0.3) },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "--regularizer takes none, kl, or reverse-kl, got {other:?}"
                )))
            }
        };
    } else {
        // Bare --alpha / --beta retune an already-configured regularizer.
        match (&mut cfg.spec.regularizer, opts.alpha, opts.beta) {
            (Regularizer::Kl { alpha }, Some(a), _) => *alpha = a,
            (Regularizer::ReverseKl { beta }, _, Some(b)) => *beta = b,
            _ => {}
        }
    }
    if let Some(lr) = opts.lr {
        cfg.schedule.base_lr = lr;
    }
    if let Some(g) = opts.gamma {
        cfg.gamma = g;
    }
    if let Some(e) = opts.epochs {
        cfg.epochs = e;
    }
    if let Some(n) = opts.episodes {
        cfg.episodes_per_epoch = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(explicit: &Option<PathBuf>, cfg: &ExperimentConfig, command: &str) -> PathBuf {
    explicit
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("pglab-out").join(command))
}

fn print_run_summary(out: &ExperimentOutput) {
    for run in &out.runs {
        let last = run.records.last().map(|r| r.mean_return);
        match (&run.status, last) {
            (pglab::harness::experiments::RunStatus::Ok, Some(r)) => {
                println!("{}/{}: final mean return {r:.4}", run.variant, run.seed)
            }
            (pglab::harness::experiments::RunStatus::Ok, None) => {
                println!("{}/{}: ok (no records)", run.variant, run.seed)
            }
            (pglab::harness::experiments::RunStatus::Failed(msg), _) => {
                println!("{}/{}: FAILED ({msg})", run.variant, run.seed)
            }
        }
    }
    if let Some(dir) = &out.out_dir {
        println!("artifacts: {}", dir.display());
    }
}

fn cmd_run(
    kind: &str,
    opts: &RunOpts,
    runner: fn(&ExperimentConfig, Option<&Path>, usize) -> Result<ExperimentOutput>,
    default_env: EnvKind,
) -> Result<()> {
    let cfg = resolve_config(&opts.config, default_env)?;
    let dir = out_dir(&opts.out, &cfg, kind);
    let out = runner(&cfg, Some(&dir), opts.workers)?;
    print_run_summary(&out);
    Ok(())
}

fn cmd_alias_toy(opts: &AliasToyOpts) -> Result<()> {
    let mode = match opts.mode.as_str() {
        "exact" => AliasToyMode::Exact,
        "mc" => AliasToyMode::MonteCarlo {
            episodes_per_epoch: opts.episodes,
            seeds: if opts.seeds.is_empty() { vec![0, 1, 2] } else { opts.seeds.clone() },
        },
        other => {
            return Err(Error::InvalidConfig(format!("--mode takes exact or mc, got {other:?}")))
        }
    };
    let epochs = opts.epochs.unwrap_or(match mode {
        AliasToyMode::Exact => 2000,
        AliasToyMode::MonteCarlo { .. } => 240,
    });
    let rows = run_alias_toy(&opts.gammas, &mode, epochs, opts.out.as_deref())?;
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "gamma", "theta_unb", "pred_unb", "theta_b", "pred_b", "ratio", "pred_ratio"
    );
    for r in &rows {
        println!(
            "{:>6.3} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.gamma,
            r.theta_unbiased,
            r.predicted_unbiased,
            r.theta_biased,
            r.predicted_biased,
            r.return_ratio,
            r.predicted_ratio
        );
    }
    if let Some(dir) = &opts.out {
        println!("table: {}", dir.join("alias_toy.csv").display());
    }
    Ok(())
}

fn cmd_loss_surface(opts: &SurfaceOpts) -> Result<()> {
    let cfg = resolve_config(&opts.config, EnvKind::Pendulum)?;
    let seed = cfg.seeds[0];
    let (policy, dataset) = train_probe(&cfg, seed)?;
    let flat = flatten_dataset(&dataset, cfg.gamma);

    let fit_data: Vec<(Vec<f64>, Vec<f64>, f64)> = flat
        .iter()
        .map(|s| (s.state.coords().to_vec(), s.action.coords().to_vec(), s.q_hat))
        .collect();
    let model = fit_score_model(&fit_data, opts.fit_epochs, opts.fit_lr, seed)?;
    let states: Vec<Vec<f64>> =
        flat.iter().take(opts.states).map(|s| s.state.coords().to_vec()).collect();
    let alpha = match cfg.spec.regularizer {
        Regularizer::Kl { alpha } => alpha,
        _ => 0.0,
    };
    let surface =
        loss_surface(&policy, &model, &states, alpha, opts.resolution, opts.action_samples, seed)?;

    let dir = out_dir(&opts.out, &cfg, "loss-surface");
    let mut rows = Vec::new();
    for (i, &a) in surface.coords.iter().enumerate() {
        for (j, &b) in surface.coords.iter().enumerate() {
            rows.push(vec![fmt_f64(a), fmt_f64(b), fmt_f64(surface.grid[i][j])]);
        }
    }
    write_csv(&dir.join("surface.csv"), &["a", "b", "loss"], rows)?;
    surface_heatmap(&dir.join("surface.svg"), "surrogate loss surface", &surface)?;
    let mut manifest = Manifest::new("diag loss-surface", &cfg)?;
    manifest.files = vec!["surface.csv".into(), "surface.svg".into()];
    write_manifest(&dir, &manifest)?;

    println!("score model mse: {:.6}", model.final_mse);
    println!("center loss:     {:.6}", surface.center_loss);
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_feature_pca(opts: &PcaOpts) -> Result<()> {
    let cfg = resolve_config(&opts.config, EnvKind::Pendulum)?;
    let seed = cfg.seeds[0];
    let (policy, dataset) = train_probe(&cfg, seed)?;
    let flat = flatten_dataset(&dataset, cfg.gamma);

    let mut features = Vec::new();
    let mut actions = Vec::new();
    for s in flat.iter().take(opts.samples) {
        features.push(policy.features(&s.state, opts.layer)?);
        actions.push(match &s.action {
            pglab::mdp::Action::Continuous(v) => v[0],
            pglab::mdp::Action::Discrete(i) => *i as f64,
        });
    }
    let pca = pca_2d(&features)?;
    let (r_x, r_y) = action_correlation(&pca.projected, &actions)?;

    let dir = out_dir(&opts.out, &cfg, "feature-pca");
    let rows = pca
        .projected
        .iter()
        .zip(&actions)
        .map(|(p, a)| vec![fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*a)]);
    write_csv(&dir.join("feature_pca.csv"), &["x", "y", "action"], rows)?;
    let mut manifest = Manifest::new("diag feature-pca", &cfg)?;
    manifest.files = vec!["feature_pca.csv".into()];
    write_manifest(&dir, &manifest)?;

    println!("explained variance: pc1 {:.6}, pc2 {:.6}", pca.explained[0], pca.explained[1]);
    println!("action correlation: pc1 {r_x:.4}, pc2 {r_y:.4}");
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(path)?;
    println!("{}", cfg.to_json()?);
    eprintln!("config ok: {}", path.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::RunPerformance(o) => cmd_run("run-performance", o, |c, d, w| {
            run_performance(c, d, w)
        }, EnvKind::Alias),
        Command::RunBiasSpread(o) => cmd_run("run-bias-spread", o, |c, d, w| {
            run_bias_spread(c, d, w)
        }, EnvKind::Alias),
        Command::RunOffpolicy(o) => cmd_run("run-offpolicy", o, |c, d, w| {
            run_offpolicy(c, d, w)
        }, EnvKind::Pendulum),
        Command::AliasToy(o) => cmd_alias_toy(o),
        Command::Diag { command: DiagCommand::LossSurface(o) } => cmd_loss_surface(o),
        Command::Diag { command: DiagCommand::FeaturePca(o) } => cmd_feature_pca(o),
        Command::ValidateConfig { config } => cmd_validate(config),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; real usage errors get
            // the machine-readable envelope like everything else.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!(
                "{}",
                serde_json::json!({
                    "error": { "kind": "usage", "message": e.to_string() }
                })
            );
            std::process::exit(2);
        }
    };
    if let Err(e) = dispatch(&cli) {
        eprintln!(
            "{}",
            serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            })
        );
        std::process::exit(1);
    }
}
