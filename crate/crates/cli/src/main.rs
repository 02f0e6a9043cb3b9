use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use qtopos::contexts::ContextPoset;
use qtopos::quantum::RGrid;
use qtopos::report::Report;
use qtopos::scenario::{load_scenario, Caps, Scenario};
use qtopos::suites;

#[derive(Parser)]
#[command(name = "qtopos", version, about = "Run presheaf and group-action experiments on a scenario")]
struct Cli {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Override the matrix equality tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Override every enumeration cap.
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Comma-separated rationals, e.g. "1/10,1/2,1".
    #[arg(long = "r-grid", global = true)]
    r_grid: Option<String>,
    /// Artifact format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Output directory for reports and artifacts.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Dot,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateKind {
    Pure,
    Mixed,
}

#[derive(Subcommand)]
enum Command {
    /// Close the seeds into a context poset and check the group action.
    BuildPoset,
    /// Build Λ(G/G_F) and check its order and action.
    BuildLambda,
    /// Sieves, Heyting law, local sections and Λ structure.
    Structural,
    /// Daseinisation, physical-quantity arrows and spectral order.
    Daseinise,
    /// Truth values of a generated projector in a generated state.
    TruthValue {
        #[arg(value_enum)]
        kind: StateKind,
        #[arg(long, default_value_t = 0)]
        projector: usize,
        #[arg(long, default_value_t = 0)]
        state: usize,
        /// Grid value, e.g. "1/2"; defaults to the largest.
        #[arg(long)]
        r: Option<String>,
    },
    /// Covariance of daseinisation, truth values and arrows.
    Covariance,
    /// p_! ⊣ p* on random presheaves and the I/J comparison.
    Adjunction {
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Preservation of (co)limits by I and F.
    Preservation {
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// The two sub-object classifier isomorphisms.
    OmegaIso,
    /// Global sections of the spectral presheaf over the scenario bases.
    Ks,
    /// Sections over the configured buckets.
    BucketTriviality,
    /// Write the poset and Λ graphs without running checks.
    Export,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn scenario(cli: &Cli) -> Result<Scenario> {
    let Some(path) = &cli.scenario else { bail!("--scenario is required") };
    let mut s = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(eps) = cli.tolerance {
        s.tolerance = s.tolerance.with_eq_eps(eps)?;
    }
    if let Some(n) = cli.cap {
        s.caps = Caps::uniform(n);
    }
    if let Some(g) = &cli.r_grid {
        s.r_grid = RGrid::parse(g)?;
    }
    s.validate()?;
    Ok(s)
}

fn write(out: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn finish(cli: &Cli, report: &Report) -> Result<bool> {
    write(&cli.out, &format!("{}.json", report.suite), &report.to_json())?;
    for c in &report.cases {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    println!(
        "{}: {}/{} passed ({} ms)",
        report.suite, report.summary.passed, report.summary.total, report.timing.wall_ms
    );
    Ok(report.all_passed())
}

fn contexts_json(p: &ContextPoset) -> serde_json::Value {
    serde_json::json!({
        "contexts": p.contexts().iter().enumerate().map(|(i, c)| serde_json::json!({
            "index": i,
            "signature": c.signature(),
            "atoms": c.atoms().iter().map(|a| a.matrix()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "covers": p.covers(),
    })
}

fn export_graphs(cli: &Cli, s: &Scenario) -> Result<()> {
    let lambda = s.lambda()?;
    let action = &lambda.action;
    match cli.format {
        Format::Dot => {
            write(&cli.out, "poset.dot", &action.poset.to_dot())?;
            write(&cli.out, "lambda.dot", &lambda.to_dot())?;
        }
        Format::Json => {
            let body = serde_json::to_string_pretty(&contexts_json(&action.poset))?;
            write(&cli.out, "contexts.json", &body)?;
        }
        Format::Csv => write(&cli.out, "group.csv", &action.to_csv())?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let s = scenario(cli)?;
    let report = match &cli.command {
        Command::BuildPoset => {
            let (r, action) = suites::poset_report(&s)?;
            match cli.format {
                Format::Dot => write(&cli.out, "poset.dot", &action.poset.to_dot())?,
                Format::Json => {
                    write(&cli.out, "contexts.json", &serde_json::to_string_pretty(&contexts_json(&action.poset))?)?
                }
                Format::Csv => write(&cli.out, "group.csv", &action.to_csv())?,
            }
            r
        }
        Command::BuildLambda => {
            let (r, lambda) = suites::lambda_report(&s)?;
            if cli.format == Format::Dot {
                write(&cli.out, "lambda.dot", &lambda.to_dot())?;
            }
            r
        }
        Command::Structural => suites::structural_report(&s)?,
        Command::Daseinise => suites::daseinise_report(&s)?,
        Command::TruthValue { kind, projector, state, r } => {
            let r = r.as_deref().map(str::parse).transpose().context("parsing --r")?;
            let q =
                suites::TruthQuery { projector: *projector, state: *state, mixed: matches!(kind, StateKind::Mixed), r };
            let (report, table) = suites::truth_value_report(&s, &q)?;
            if cli.format == Format::Csv {
                write(&cli.out, "truth_table.csv", &table)?;
            }
            report
        }
        Command::Covariance => suites::covariance_report(&s)?,
        Command::Adjunction { samples } => suites::adjunction_report(&s, *samples)?,
        Command::Preservation { samples } => suites::preservation_report(&s, *samples)?,
        Command::OmegaIso => suites::omega_iso_report(&s)?,
        Command::Ks => suites::ks_report(&s)?,
        Command::BucketTriviality => suites::bucket_report(&s)?,
        Command::Export => {
            export_graphs(cli, &s)?;
            println!("exported {} artifacts to {}", s.name, cli.out.display());
            return Ok(true);
        }
    };
    finish(cli, &report)
}
