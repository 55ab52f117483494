use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use egonet_core::eval::{self, ExperimentSpec, Scale};
use egonet_core::graph::{read_graph, write_graph};
use egonet_core::model::{diagnostics, fit, ExposureKind, Head, Model, TrainConfig};
use egonet_core::netgen::{generate, NetGenConfig, NetworkModel};
use egonet_core::sim::{simulate, Mechanism, SimConfig, SimOutput};

#[derive(Parser)]
#[command(name = "egonet", version, about = "Peer effect estimation with ego-network exposure mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic attributed network.
    Generate(GenerateArgs),
    /// Simulate treatments, outcomes and true peer effects on a graph.
    Simulate(SimulateArgs),
    /// Fit an estimator and write a checkpoint.
    Train(TrainArgs),
    /// Estimate peer effects with a checkpoint and score them against a simulation.
    Predict(PredictArgs),
    /// Finite-difference check of every gradient, printing the max relative error.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run one of the preset experiments.
    Reproduce(ReproduceArgs),
    /// Run an experiment from a spec file.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "ba")]
    model: NetworkModel,
    #[arg(long, default_value_t = 3000)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    ba_m: usize,
    #[arg(long, default_value_t = 6)]
    ws_k: usize,
    #[arg(long, default_value_t = 0.5)]
    ws_p: f64,
    #[arg(long, default_value_t = 100)]
    sbm_blocks: usize,
    #[arg(long, default_value_t = 10)]
    attr_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value = "mutual")]
    mechanism: Mechanism,
    /// Comma-separated effect-modifier attribute indices.
    #[arg(long, value_delimiter = ',')]
    em_subset: Vec<usize>,
    #[arg(long)]
    delta_em: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    sim: PathBuf,
    #[arg(long, default_value = "egonet")]
    exposure: ExposureKind,
    #[arg(long, default_value = "tarnet")]
    head: Head,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda_bal: Option<f64>,
    #[arg(long)]
    d_e: Option<usize>,
    #[arg(long)]
    no_mask: bool,
    #[arg(long)]
    no_feature_encoder: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    sim: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Per-node estimates as CSV `node,hpe_true,hpe`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// rq1, rq2, rq3, rq4, balance, output-dim or noise.
    question: String,
    #[arg(long, default_value = "desk")]
    scale: Scale,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Comma-separated seed list overriding the preset.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    timing: bool,
}

fn load_sim(path: &PathBuf) -> Result<SimOutput> {
    SimOutput::load(path).with_context(|| format!("reading simulation {}", path.display()))
}

fn load_graph(path: &PathBuf) -> Result<egonet_core::graph::AttributedGraph> {
    read_graph(path).with_context(|| format!("reading graph {}", path.display()))
}

fn run_experiment(spec: &ExperimentSpec, out: &PathBuf) -> Result<()> {
    let rows = eval::run_experiment(spec)?;
    eval::write_experiment(spec, &rows, out)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    for s in eval::summarize(&rows) {
        let pehe = match (s.pehe_mean, s.pehe_sd) {
            (Some(m), Some(sd)) => format!("{m:.4} ± {sd:.4}"),
            _ => "n/a".into(),
        };
        println!("{:<16} {:<14} {:<32} pehe {pehe}", s.network, s.mechanism, s.estimator);
    }
    println!("{} rows written to {} ({failures} failed)", rows.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let cfg = NetGenConfig {
                model: a.model,
                n: a.n,
                ba_m: a.ba_m,
                ws_k: a.ws_k,
                ws_p: a.ws_p,
                sbm_blocks: a.sbm_blocks,
                attr_dim: a.attr_dim,
                seed: a.seed,
                ..NetGenConfig::default()
            };
            let g = generate(&cfg)?;
            write_graph(&g, &a.out)?;
            info!("{} nodes, {} edges -> {}", g.n(), g.num_edges(), a.out.display());
        }
        Command::Simulate(a) => {
            let g = load_graph(&a.graph)?;
            let mut cfg = SimConfig { mechanism: a.mechanism, em_subset: a.em_subset, seed: a.seed, ..SimConfig::default() };
            if let Some(d) = a.delta_em {
                cfg.delta_em = d;
            }
            simulate(&g, &cfg)?.save(&a.out)?;
        }
        Command::Train(a) => {
            let g = load_graph(&a.graph)?;
            let sim = load_sim(&a.sim)?;
            if sim.len() != g.n() {
                bail!("simulation has {} rows but the graph has {} nodes", sim.len(), g.n());
            }
            let mut cfg = TrainConfig {
                head: a.head,
                seed: a.seed,
                use_mask: !a.no_mask,
                use_feature_encoder: !a.no_feature_encoder,
                ..TrainConfig::default()
            };
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            if let Some(l) = a.lambda_bal {
                cfg.lambda_bal = l;
            }
            if let Some(d) = a.d_e {
                cfg.d_e = d;
            }
            let report = fit(&g, &sim.t, &sim.y, a.exposure, &cfg)?;
            for r in &report.history {
                info!("epoch {:>4} loss {:.5} factual {:.5} holdout {:?}", r.epoch, r.train_total, r.train_factual, r.holdout);
            }
            report.model.save(&a.out)?;
            println!(
                "best epoch {} held-out loss {:.6} -> {}",
                report.model.epoch,
                report.model.holdout_loss.unwrap_or(f64::NAN),
                a.out.display()
            );
        }
        Command::Predict(a) => {
            let g = load_graph(&a.graph)?;
            let sim = load_sim(&a.sim)?;
            let model = Model::load(&a.model)?;
            let pred = model.predict(&g, &sim.t)?;
            println!("pehe {:.6}", eval::pehe(&sim.hpe_true, &pred.hpe)?);
            if let Some(r) = eval::exposure_correlation(&pred.rho, &sim.rho_true)? {
                println!("corr_rho {r:.4}");
            }
            if let Some(r) = eval::exposure_correlation(&pred.rho_cf, &sim.rho_true_cf)? {
                println!("corr_rho_cf {r:.4}");
            }
            if let Some(path) = a.out {
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["node", "hpe_true", "hpe"])?;
                for (i, (t, p)) in sim.hpe_true.iter().zip(&pred.hpe).enumerate() {
                    w.write_record([i.to_string(), t.to_string(), p.to_string()])?;
                }
                w.flush()?;
            }
        }
        Command::Gradcheck { seed } => {
            let reports = diagnostics::full_gradcheck(seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{:<36} {:.3e} {}", r.name, r.max_rel_err, if r.passed() { "ok" } else { "FAIL" });
                ok &= r.passed();
            }
            if !ok {
                bail!("gradient check failed");
            }
        }
        Command::Reproduce(a) => {
            let mut spec = ExperimentSpec::preset(&a.question, a.scale)?;
            spec.timing = a.timing;
            if !a.seeds.is_empty() {
                spec.seeds = a.seeds;
            }
            run_experiment(&spec, &a.out)?;
        }
        Command::Run { spec, out, timing } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut spec = ExperimentSpec::parse(&text)?;
            spec.timing |= timing;
            run_experiment(&spec, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
