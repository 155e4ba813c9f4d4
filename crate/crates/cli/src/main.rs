//! Command-line front end.
//!
//! Subcommands map one-to-one onto pipeline stages plus three whole-run
//! operations. Every artifact-producing command is resumable: stages whose
//! configuration and upstream artifacts are unchanged load from the output
//! directory instead of recomputing.
//!
//! Exit codes: 0 on success, 2 for configuration/usage errors, 3 for
//! numerical failures, 4 for infeasibility.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtopt::pipeline::PipelineContext;
use mtopt::{
    compare_methods, validate_graph, Error, Graph, ObjectiveSpec, Report, Result, RunConfig,
    Scenario,
};

#[derive(Parser)]
#[command(
    name = "mtopt",
    version,
    about = "Optimal graphical multiple-testing procedures by surrogate optimization"
)]
struct Cli {
    /// Run configuration file (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override the configuration's master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the training p-value panel.
    Simulate,
    /// Sample graphs and score each on the panel into the dataset.
    Sample,
    /// Select the surrogate structure by cross-validation.
    Cv,
    /// Train the final surrogate and measure its validation error.
    Train,
    /// Maximize the surrogate under the family constraints.
    Optimize,
    /// Polish the surrogate winner on the true objective.
    Refine,
    /// Run the baselines the configuration toggles on.
    Baseline,
    /// Score a stored graph under the configured scenario and objective.
    Evaluate {
        /// Graph file (JSON, `{"alphas": [...], "transitions": [[...]]}`).
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        /// Monte Carlo rows (default: the configured panel size).
        #[arg(long, value_name = "N")]
        rows: Option<usize>,
    },
    /// Run the full pipeline plus every baseline and write the report.
    Compare,
    /// Rebuild the report from stored artifacts (recomputing any missing).
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code: u8 = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate => {
            let mut ctx = open(&cli, &cfg)?;
            let panel = ctx.stage_panel()?;
            println!("panel: {} rows x {} hypotheses", panel.n(), panel.m());
        }
        Command::Sample => {
            let mut ctx = open(&cli, &cfg)?;
            let data = ctx.stage_dataset()?;
            println!("dataset: {} graphs over {} free coordinates", data.len(), data.dim());
        }
        Command::Cv => {
            let mut ctx = open(&cli, &cfg)?;
            let report = ctx.stage_cv()?;
            println!("candidate,mean_mse,params");
            for row in &report.rows {
                println!("{},{},{}", spec_label(&row.spec), row.mean_mse, row.params);
            }
            println!("selected: {}", spec_label(report.best_spec()));
        }
        Command::Train => {
            let mut ctx = open(&cli, &cfg)?;
            let (_net, summary) = ctx.stage_train()?;
            println!("trained: {}", spec_label(&summary.chosen));
            match summary.validation_mse {
                Some(mse) => println!(
                    "validation mse {} on {} held-out rows",
                    mse, summary.validation_rows
                ),
                None => println!("no validation split"),
            }
        }
        Command::Optimize => {
            let mut ctx = open(&cli, &cfg)?;
            let r = ctx.stage_optimize()?;
            println!(
                "surrogate optimum {} after {} evaluations (converged: {})",
                r.value, r.evaluations, r.converged
            );
        }
        Command::Refine => {
            let mut ctx = open(&cli, &cfg)?;
            let r = ctx.stage_refine()?;
            println!(
                "refined optimum {} after {} evaluations (converged: {})",
                r.value, r.evaluations, r.converged
            );
        }
        Command::Baseline => {
            let mut ctx = open(&cli, &cfg)?;
            if cfg.baselines.isres {
                let r = ctx.stage_isres()?;
                println!("isres {} after {} evaluations", r.value, r.evaluations);
            }
            if cfg.baselines.refine_only_starts > 0 {
                let r = ctx.stage_refine_only()?;
                println!("refine_only {} after {} evaluations", r.value, r.evaluations);
            }
            if cfg.baselines.brute_force {
                let r = ctx.stage_brute_force()?;
                println!("brute_force {} over {} dataset rows", r.value, r.evaluations);
            }
        }
        Command::Evaluate { graph, rows } => {
            let text = std::fs::read_to_string(graph)
                .map_err(|e| Error::io(graph.display().to_string(), e))?;
            let g = Graph::from_json(&text)?;
            let scenario = Scenario::from_config(&cfg.scenario)?;
            require_feasible(&g, &scenario)?;
            let spec = objective_spec(&cfg, &scenario)?;
            let n = rows.unwrap_or(cfg.dataset.panel_rows);
            let (value, se) =
                mtopt::evaluate_graph(&g, &scenario, &spec, n, cfg.seeds.holdout_panel())?;
            println!("value {value}");
            println!("se {se}");
        }
        Command::Compare => {
            let out = out_dir(&cli)?;
            let report = compare_methods(&cfg, &out)?;
            print_report(&report);
        }
        Command::Report => {
            let mut ctx = open(&cli, &cfg)?;
            let report = ctx.run()?;
            print_report(&report);
        }
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config <FILE> is required"))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds.base = seed;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Error::config("--out <DIR> is required for this command"))
}

fn open(cli: &Cli, cfg: &RunConfig) -> Result<PipelineContext> {
    PipelineContext::open(cfg.clone(), &out_dir(cli)?)
}

fn objective_spec(cfg: &RunConfig, scenario: &Scenario) -> Result<ObjectiveSpec> {
    // Rebuild the spec through config validation so dimension errors name
    // the objective.
    let weights = mtopt::WeightVector::new(cfg.objective.weights.clone())?;
    if weights.len() != scenario.m() {
        return Err(Error::config(format!(
            "{} objective weights for {} hypotheses",
            weights.len(),
            scenario.m()
        )));
    }
    match cfg.objective.gate {
        None => Ok(ObjectiveSpec::plain(weights)),
        Some(g) if g >= 1 && g <= scenario.m() => ObjectiveSpec::gated(weights, g - 1),
        Some(g) => Err(Error::config(format!(
            "gate {g} out of range 1..={}",
            scenario.m()
        ))),
    }
}

fn require_feasible(g: &Graph, scenario: &Scenario) -> Result<()> {
    if g.m() != scenario.m() {
        return Err(Error::config(format!(
            "graph covers {} hypotheses, scenario has {}",
            g.m(),
            scenario.m()
        )));
    }
    let report = validate_graph(g, scenario.alpha());
    if !report.feasible {
        let labels: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("{} (by {:.3e})", v.constraint, v.magnitude))
            .collect();
        return Err(Error::infeasible(format!(
            "graph violates {}",
            labels.join(", ")
        )));
    }
    Ok(())
}

fn spec_label(spec: &mtopt::NetworkSpec) -> String {
    let hidden = if spec.hidden.is_empty() {
        "linear".to_string()
    } else {
        spec.hidden
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join("x")
    };
    if spec.dropout > 0.0 {
        format!("{hidden}(dropout {})", spec.dropout)
    } else {
        hidden
    }
}

fn print_report(report: &Report) {
    print!("{}", report.to_csv());
    if let Some(max) = &report.dataset_max {
        println!("dataset max {}", max.value);
    }
}
