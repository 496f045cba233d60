//! Command line interface.
//!
//! Four subcommands: `simulate` writes a synthetic dataset with its model
//! and ground truth; `test` runs the pathway test for one mediator; `fdr`
//! selects mediators across the whole graph; `bench` runs a Monte Carlo
//! study against a known model. Every JSON report embeds the fully
//! resolved configuration so a run can be reproduced from its output.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{run_bench, BenchConfig, BenchReport};
use crate::dagfit::NotearsSettings;
use crate::dataset::Dataset;
use crate::debias::RefitSettings;
use crate::error::{Error, Result};
use crate::mediate::{
    by_baseline, fdr_select, test_mediator, test_mediator_multisplit, FdrReport,
    MediationReport, MultisplitReport, RunSettings, SubTest,
};
use crate::sem::{
    generate_scenario, mediation_strength, pathway_truth, sample, ScenarioPreset, SemModel,
};

#[derive(Debug, Parser)]
#[command(
    name = "logan",
    version,
    about = "Mediation pathway testing in linear Gaussian DAG models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset, its model, and the ground truth
    Simulate(SimulateArgs),
    /// Test the pathway through one mediator
    Test(TestArgs),
    /// Select mediators with false discovery control
    Fdr(FdrArgs),
    /// Monte Carlo study of the procedure on a known model
    Bench(BenchArgs),
}

/// Tuning shared by the testing commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TuneArgs {
    /// Base seed for every random draw
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Nominal test level
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap draws
    #[arg(long = "m", default_value_t = 2000)]
    pub m: usize,
    /// Structure-fit penalty weight; defaults to a sample-size based value
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Structure-fit edge threshold
    #[arg(long = "threshold-c0", default_value_t = 1e-3)]
    pub threshold_c0: f64,
}

impl TuneArgs {
    fn settings(&self) -> RunSettings {
        RunSettings {
            alpha: self.alpha,
            draws: self.m,
            seed: self.seed,
            notears: NotearsSettings {
                lambda: self.lambda,
                threshold: self.threshold_c0,
                ..NotearsSettings::default()
            },
            refit: RefitSettings::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario preset: A, B-body, B-appendix, or C
    #[arg(long, default_value = "A")]
    pub scenario: String,
    /// Rows to sample
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Seed for both the model draw and the sample
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mediator count override
    #[arg(long)]
    pub d: Option<usize>,
    /// Edge frequency override for exposure and outcome edges
    #[arg(long)]
    pub p1: Option<f64>,
    /// Edge frequency override for mediator-to-mediator edges
    #[arg(long)]
    pub p2: Option<f64>,
    /// Directory for data.csv, model.json, and truth.csv
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Mediator index, 1-based
    #[arg(long)]
    pub q: usize,
    /// Column name of the exposure (default: first column)
    #[arg(long)]
    pub exposure: Option<String>,
    /// Column name of the outcome (default: last column)
    #[arg(long)]
    pub outcome: Option<String>,
    /// Aggregate over this many sample splits instead of one
    #[arg(long)]
    pub multisplit: Option<usize>,
    /// Quantile parameter for multisplit aggregation
    #[arg(long, default_value_t = 0.15)]
    pub gamma: f64,
    /// Write the JSON report here (stdout shows a table either way)
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub tune: TuneArgs,
}

#[derive(Debug, Args)]
pub struct FdrArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Column name of the exposure (default: first column)
    #[arg(long)]
    pub exposure: Option<String>,
    /// Column name of the outcome (default: last column)
    #[arg(long)]
    pub outcome: Option<String>,
    /// Selection baseline: "by" skips the screening step
    #[arg(long)]
    pub baseline: Option<String>,
    /// Write the JSON report here
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub tune: TuneArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario preset to draw the model from
    #[arg(long, default_value = "A")]
    pub scenario: String,
    /// Load the model from JSON instead of drawing a scenario
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Seed for the scenario draw (replications use the tuning seed)
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    /// Rows per replication
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Replications
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Levels to evaluate, ascending (default: the tuning level)
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Sample splits per replication; more than one adds multisplit results
    #[arg(long, default_value_t = 1)]
    pub splits: usize,
    /// Quantile parameter for multisplit aggregation
    #[arg(long, default_value_t = 0.15)]
    pub gamma: f64,
    /// Write the tidy per-decision table here
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the JSON report here
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub tune: TuneArgs,
}

/// Applies LOGAN_THREADS to the global worker pool. Call once at startup.
pub fn init_threads() -> Result<()> {
    match std::env::var("LOGAN_THREADS") {
        Ok(raw) => {
            let threads: usize = raw.parse().map_err(|_| {
                Error::InvalidInput(format!("LOGAN_THREADS must be a positive integer, got {raw:?}"))
            })?;
            if threads == 0 {
                return Err(Error::InvalidInput(
                    "LOGAN_THREADS must be a positive integer, got 0".into(),
                ));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
        }
        Err(_) => Ok(()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Test(args) => test(args),
        Command::Fdr(args) => fdr(args),
        Command::Bench(args) => bench(args),
    }
}

#[derive(Serialize)]
struct Envelope<C: Serialize, R: Serialize> {
    command: &'static str,
    config: C,
    report: R,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    serde_json::to_writer_pretty(&mut file, value)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    file.write_all(b"\n").map_err(io_err)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let preset = ScenarioPreset::parse(&args.scenario)?;
    let mut config = preset.config();
    if let Some(d) = args.d {
        config.d = d;
    }
    if let Some(p1) = args.p1 {
        config.p1 = p1;
    }
    if let Some(p2) = args.p2 {
        config.p2 = p2;
    }
    let model = generate_scenario(&config, args.seed)?;
    let data = sample(&model, args.n, args.seed)?;
    let strength = mediation_strength(&model)?;
    let pathway = pathway_truth(&model)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.display().to_string(),
        source: e,
    })?;
    let data_path = args.out_dir.join("data.csv");
    let model_path = args.out_dir.join("model.json");
    let truth_path = args.out_dir.join("truth.csv");
    data.to_csv(&data_path)?;
    model.to_json(&model_path)?;

    let io_err = |e: csv::Error| Error::Io {
        path: truth_path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut writer = csv::Writer::from_path(&truth_path).map_err(io_err)?;
    writer
        .write_record(["mediator", "q", "strength", "pathway"])
        .map_err(io_err)?;
    for q in 1..=model.d() {
        writer
            .write_record([
                data.mediator_name(q).to_string(),
                q.to_string(),
                strength[q - 1].to_string(),
                (pathway[q - 1] as u8).to_string(),
            ])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: truth_path.display().to_string(),
        source: e,
    })?;

    println!(
        "wrote {} ({} rows, {} columns), {}, {}",
        data_path.display(),
        data.n(),
        data.dim(),
        model_path.display(),
        truth_path.display()
    );
    println!(
        "scenario {} d={} p1={} p2={} seed={}; {} of {} mediators carry a pathway",
        preset.name(),
        config.d,
        config.p1,
        config.p2,
        args.seed,
        pathway.iter().filter(|&&t| t).count(),
        model.d()
    );
    Ok(())
}

fn format_sub(label: &str, sub: &SubTest) -> String {
    let critical = sub
        .critical
        .map(|c| format!("{c:.4}"))
        .unwrap_or_else(|| "-".into());
    let verdict = if sub.untestable {
        "untestable"
    } else if sub.reject {
        "reject"
    } else {
        "retain"
    };
    format!(
        "  {label:<22} stat {:>8.4}  critical {critical:>8}  p {:>6.4}  edges {:>3}  {verdict}",
        sub.stat, sub.p, sub.edges
    )
}

fn print_single_report(report: &MediationReport) {
    println!(
        "pathway test: mediator {} ({}), n = {}, d = {}, level {}",
        report.q, report.mediator, report.n, report.d, report.alpha
    );
    println!(
        "noise variance estimate {:.4}{}",
        report.sigma2,
        if report.sigma_degenerate {
            " (degenerate)"
        } else {
            ""
        }
    );
    for (idx, half) in report.test.halves.iter().enumerate() {
        match &report.half_failures[idx] {
            Some(reason) => println!("half {}: failed ({reason})", half.half),
            None => println!("half {}:", half.half),
        }
        println!("{}", format_sub("exposure -> mediator", &half.exposure_side));
        println!("{}", format_sub("mediator -> outcome", &half.outcome_side));
        println!(
            "  both sides:            {}",
            if half.reject { "reject" } else { "retain" }
        );
    }
    println!(
        "decision: {}",
        if report.test.reject {
            "reject (pathway present)"
        } else {
            "retain (no pathway established)"
        }
    );
}

fn print_multisplit_report(report: &MultisplitReport) {
    println!(
        "multisplit pathway test: mediator {} ({}), n = {}, d = {}, level {}",
        report.q, report.mediator, report.n, report.d, report.alpha
    );
    println!(
        "{} splits, quantile parameter {}",
        report.splits, report.gamma
    );
    for (s, test) in report.per_split.iter().enumerate() {
        let flags: Vec<String> = test
            .halves
            .iter()
            .map(|h| {
                format!(
                    "half {}: p({:.4}, {:.4}){}",
                    h.half,
                    h.exposure_side.p,
                    h.outcome_side.p,
                    if h.reject { " reject" } else { "" }
                )
            })
            .collect();
        println!("  split {s}: {}", flags.join("  "));
    }
    println!(
        "aggregated p: exposure side {:.4}, outcome side {:.4}, overall {:.4}",
        report.p_exposure, report.p_outcome, report.p
    );
    println!(
        "decision: {}",
        if report.reject {
            "reject (pathway present)"
        } else {
            "retain (no pathway established)"
        }
    );
}

#[derive(Serialize)]
struct TestConfig {
    data: String,
    q: usize,
    exposure: Option<String>,
    outcome: Option<String>,
    multisplit: Option<usize>,
    gamma: f64,
    #[serde(flatten)]
    tune: TuneArgs,
}

fn test(args: TestArgs) -> Result<()> {
    let data = Dataset::from_csv(&args.data, args.exposure.as_deref(), args.outcome.as_deref())?;
    if args.q < 1 || args.q > data.d() {
        return Err(Error::InvalidInput(format!(
            "mediator index {} out of range 1..={}",
            args.q,
            data.d()
        )));
    }
    let settings = args.tune.settings();
    let config = TestConfig {
        data: args.data.display().to_string(),
        q: args.q,
        exposure: args.exposure.clone(),
        outcome: args.outcome.clone(),
        multisplit: args.multisplit,
        gamma: args.gamma,
        tune: args.tune.clone(),
    };
    match args.multisplit {
        Some(splits) => {
            let report = test_mediator_multisplit(&data, args.q, splits, args.gamma, &settings)?;
            print_multisplit_report(&report);
            if let Some(path) = &args.json {
                write_json(
                    path,
                    &Envelope {
                        command: "test",
                        config,
                        report,
                    },
                )?;
            }
        }
        None => {
            let report = test_mediator(&data, args.q, &settings)?;
            print_single_report(&report);
            if let Some(path) = &args.json {
                write_json(
                    path,
                    &Envelope {
                        command: "test",
                        config,
                        report,
                    },
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FdrConfig {
    data: String,
    exposure: Option<String>,
    outcome: Option<String>,
    baseline: Option<String>,
    #[serde(flatten)]
    tune: TuneArgs,
}

fn print_fdr_report(report: &FdrReport) {
    println!(
        "mediator selection: n = {}, d = {}, level {}, {}",
        report.n,
        report.d,
        report.alpha,
        match report.method {
            crate::mediate::SelectionMethod::Screened => "screened step-up",
            crate::mediate::SelectionMethod::Plain => "plain step-up baseline",
        }
    );
    println!(
        "noise variance estimate {:.4}{}",
        report.sigma2,
        if report.sigma_degenerate {
            " (degenerate)"
        } else {
            ""
        }
    );
    for (idx, half) in report.halves.iter().enumerate() {
        if let Some(reason) = &report.half_failures[idx] {
            println!("half {}: failed ({reason})", half.half);
            continue;
        }
        let cut = half
            .screen_cut
            .map(|c| format!("{c:.5}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "half {}: screen cut {cut}, {} screened, {} selected",
            half.half,
            half.screened.len(),
            half.selected.len()
        );
    }
    if report.selected.is_empty() {
        println!("selected: none");
    } else {
        println!("selected ({} mediators):", report.selected.len());
        for (q, name) in report.selected.iter().zip(&report.selected_names) {
            let row = &report.p_rows[0][q - 1];
            let row2 = &report.p_rows[1][q - 1];
            println!(
                "  q = {q:<4} {name:<12} p(exposure side) {:.4}/{:.4}  p(outcome side) {:.4}/{:.4}",
                row.p_exposure, row2.p_exposure, row.p_outcome, row2.p_outcome
            );
        }
    }
}

fn fdr(args: FdrArgs) -> Result<()> {
    let data = Dataset::from_csv(&args.data, args.exposure.as_deref(), args.outcome.as_deref())?;
    let settings = args.tune.settings();
    let report = match args.baseline.as_deref() {
        None => fdr_select(&data, &settings)?,
        Some("by") => by_baseline(&data, &settings)?,
        Some(other) => {
            return Err(Error::InvalidInput(format!(
                "unknown baseline {other:?}; expected \"by\""
            )))
        }
    };
    print_fdr_report(&report);
    if let Some(path) = &args.json {
        write_json(
            path,
            &Envelope {
                command: "fdr",
                config: FdrConfig {
                    data: args.data.display().to_string(),
                    exposure: args.exposure.clone(),
                    outcome: args.outcome.clone(),
                    baseline: args.baseline.clone(),
                    tune: args.tune.clone(),
                },
                report,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchCliConfig {
    scenario: Option<String>,
    model: Option<String>,
    model_seed: u64,
    n: usize,
    reps: usize,
    alphas: Vec<f64>,
    splits: usize,
    gamma: f64,
    #[serde(flatten)]
    tune: TuneArgs,
}

fn print_bench_report(report: &BenchReport) {
    println!(
        "bench: n = {}, d = {}, {} replications ({} failed), {} draws, seed {}",
        report.n, report.d, report.reps, report.failed_reps, report.draws, report.seed
    );
    let header: Vec<String> = report.alphas.iter().map(|a| format!("{a:>8}")).collect();
    println!("single-split rejection rate per level");
    println!("  {:<6} {:<8} {:<9} {}", "q", "pathway", "strength", header.join(" "));
    for m in &report.per_mediator {
        let rates: Vec<String> = m.single.iter().map(|r| format!("{r:>8.3}")).collect();
        println!(
            "  {:<6} {:<8} {:<9.3} {}",
            m.q,
            if m.pathway { "yes" } else { "no" },
            m.strength,
            rates.join(" ")
        );
    }
    if report.splits > 1 {
        println!("multisplit rejection rate per level ({} splits)", report.splits);
        for m in &report.per_mediator {
            if let Some(rates) = &m.multisplit {
                let cells: Vec<String> = rates.iter().map(|r| format!("{r:>8.3}")).collect();
                println!("  q = {:<4} {}", m.q, cells.join(" "));
            }
        }
    }
    println!("selection error rates");
    for s in &report.selection {
        println!(
            "  level {:>5}  {:<14}  fdr {:.3}  tpr {:.3}  mean selected {:.2}",
            s.alpha,
            match s.method {
                crate::mediate::SelectionMethod::Screened => "screened",
                crate::mediate::SelectionMethod::Plain => "plain baseline",
            },
            s.fdr,
            s.tpr,
            s.mean_selected
        );
    }
}

fn bench(args: BenchArgs) -> Result<()> {
    let model = match &args.model {
        Some(path) => SemModel::from_json(path)?,
        None => {
            let preset = ScenarioPreset::parse(&args.scenario)?;
            generate_scenario(&preset.config(), args.model_seed)?
        }
    };
    let mut config = BenchConfig::new(model, args.n);
    config.reps = args.reps;
    config.alphas = if args.alphas.is_empty() {
        vec![args.tune.alpha]
    } else {
        args.alphas.clone()
    };
    config.draws = args.tune.m;
    config.seed = args.tune.seed;
    config.splits = args.splits;
    config.gamma = args.gamma;
    config.notears = NotearsSettings {
        lambda: args.tune.lambda,
        threshold: args.tune.threshold_c0,
        ..NotearsSettings::default()
    };

    let report = run_bench(&config)?;
    print_bench_report(&report);

    if let Some(path) = &args.csv {
        let io_err = |e: csv::Error| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        };
        let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
        writer
            .write_record(["rep", "alpha", "q", "method", "decision", "pathway", "strength"])
            .map_err(io_err)?;
        for row in report.decision_rows() {
            writer
                .write_record([
                    row.rep.to_string(),
                    row.alpha.to_string(),
                    row.q.to_string(),
                    row.method.to_string(),
                    row.decision.to_string(),
                    row.pathway.to_string(),
                    row.strength.to_string(),
                ])
                .map_err(io_err)?;
        }
        writer.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.json {
        write_json(
            path,
            &Envelope {
                command: "bench",
                config: BenchCliConfig {
                    scenario: args.model.is_none().then(|| args.scenario.clone()),
                    model: args.model.as_ref().map(|p| p.display().to_string()),
                    model_seed: args.model_seed,
                    n: args.n,
                    reps: args.reps,
                    alphas: config.alphas.clone(),
                    splits: args.splits,
                    gamma: args.gamma,
                    tune: args.tune.clone(),
                },
                report,
            },
        )?;
    }
    Ok(())
}
