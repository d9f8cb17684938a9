//! `lgb`: anonymize microdata with local generalization and bucketization,
//! audit releases and measure their utility.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use lgb_core::metrics::{
    c_dm, default_sum_attribute, density_mask, evaluate_workload, gen_queries, ncp_of_groups, ncp_table, to_f64,
};
use lgb_core::pipeline::lgb_with_params;
use lgb_core::synthetic::{census_table, try_random_table, RandomTableSpec};
use lgb_core::{audit, read_published, write_published, BackgroundKnowledge, Mode, Params, Table};

mod sweep;

const EXIT_AUDIT_FAIL: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "lgb", version, about = "Personalized-privacy microdata anonymization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Anonymize a table and write the release directory.
    Anonymize(AnonymizeArgs),
    /// Audit a release for k-anonymity, l-diversity and disclosure bounds.
    Verify(VerifyArgs),
    /// Discernibility, NCP and aggregate-query error of a release.
    Evaluate(EvaluateArgs),
    /// Run a grid of (k, l, density, mode) configurations.
    Sweep(SweepArgs),
    /// Write a synthetic input table.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Directory holding data.csv, mask.csv and schema.csv.
    #[arg(long)]
    input: PathBuf,
}

impl InputArgs {
    fn load(&self) -> anyhow::Result<Table> {
        load_table(&self.input)
    }
}

#[derive(Debug, Args)]
struct AnonymizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    l: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Mdp)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-draw the semi-sensitive flags so this fraction of each column is sensitive.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Release directory.
    #[arg(long)]
    published: PathBuf,
    /// Defaults to the k recorded in the release.
    #[arg(long)]
    k: Option<usize>,
    /// Defaults to the l recorded in the release.
    #[arg(long)]
    l: Option<usize>,
    /// Original table directory; every row becomes an adversary target.
    #[arg(long)]
    original: Option<PathBuf>,
    /// CSV of extra background knowledge, one record per row.
    #[arg(long)]
    knowledge: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    published: PathBuf,
    /// Original table directory.
    #[arg(long)]
    original: PathBuf,
    #[arg(long, default_value_t = 1000)]
    queries: usize,
    /// Attribute to aggregate; defaults to the first numeric sensitive one.
    #[arg(long)]
    sum: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated k values.
    #[arg(long)]
    k: String,
    /// Comma-separated l values.
    #[arg(long)]
    l: String,
    /// Comma-separated modes.
    #[arg(long, default_value = "mdp,ncp")]
    mode: String,
    /// Comma-separated densities; omit to keep the input flags.
    #[arg(long)]
    density: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    queries: usize,
    /// Attribute to aggregate; defaults to the first numeric sensitive one.
    #[arg(long)]
    sum: Option<String>,
    /// Results CSV. Rows already present are not recomputed.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, env = "LGB_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Dataset {
    Census,
    Random,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    dataset: Dataset,
    #[arg(long, default_value_t = 31055)]
    rows: usize,
    /// Fraction of flagged semi-sensitive cells.
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Mdp,
    Ncp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Mdp => Mode::Mdp,
            ModeArg::Ncp => Mode::Ncp,
        }
    }
}

pub(crate) fn load_table(dir: &Path) -> anyhow::Result<Table> {
    Table::load(&dir.join("data.csv"), &dir.join("mask.csv"), &dir.join("schema.csv"))
        .with_context(|| format!("cannot load table from {}", dir.display()))
}

pub(crate) fn apply_density(table: &Table, density: Option<f64>, seed: u64) -> lgb_core::Result<Table> {
    match density {
        Some(p) => table.with_mask(density_mask(table, p, seed)?),
        None => Ok(table.clone()),
    }
}

pub(crate) fn sum_attribute(table: &Table, name: Option<&str>) -> lgb_core::Result<usize> {
    match name {
        Some(name) => table.schema().require(name),
        None => default_sum_attribute(table.schema()),
    }
}

pub(crate) fn params(k: usize, l: usize, mode: Mode, seed: u64, density: Option<f64>) -> Params {
    Params {
        seed,
        density,
        ..Params::new(k, l, mode)
    }
}

fn anonymize(args: &AnonymizeArgs) -> anyhow::Result<u8> {
    let table = apply_density(&args.input.load()?, args.density, args.seed)?;
    let p = params(args.k, args.l, args.mode.into(), args.seed, args.density);
    let release = lgb_with_params(&table, p)?;
    write_published(&release, &args.out)?;

    let schema = release.schema();
    let ncp = ncp_of_groups(&table, release.groups())?;
    println!("groups: {}", release.groups().len());
    for a in release.bucketized_attributes() {
        println!("buckets[{}]: {}", schema.attr(a).name, release.buckets(a).len());
    }
    println!("C_DM: {}", c_dm(release.groups()));
    println!("NCP: {:.4}", to_f64(&ncp));
    println!("written to {}", args.out.display());
    Ok(0)
}

fn verify(args: &VerifyArgs) -> anyhow::Result<u8> {
    let release = read_published(&args.published)?;
    let k = args.k.unwrap_or(release.params.k);
    let l = args.l.unwrap_or(release.params.l);
    let original = args.original.as_deref().map(load_table).transpose()?;
    let extra = match &args.knowledge {
        Some(path) => BackgroundKnowledge::load(path, release.schema())?,
        None => Vec::new(),
    };
    let report = audit(&release, k, l, original.as_ref(), &extra)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    match &args.out {
        Some(path) => fs::write(path, &json).with_context(|| format!("cannot write {}", path.display()))?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    if let lgb_core::verifier::Verdict::Fail { violation } = &report.k_check {
        eprintln!("k check failed: {violation}");
    }
    if let lgb_core::verifier::Verdict::Fail { violation } = &report.l_check {
        eprintln!("l check failed: {violation}");
    }
    if report.bounds_hold == Some(false) {
        eprintln!("disclosure bounds exceeded");
    }
    Ok(if report.pass { 0 } else { EXIT_AUDIT_FAIL })
}

fn evaluate(args: &EvaluateArgs) -> anyhow::Result<u8> {
    let release = read_published(&args.published)?;
    let original = load_table(&args.original)?;
    let sum = sum_attribute(&original, args.sum.as_deref())?;
    let queries = gen_queries(args.seed, args.queries, &original, sum)?;
    let (_, summary) = evaluate_workload(&release, &original, &queries)?;
    let ncp = ncp_table(&release, &original.domain_stats())?;

    let p = &release.params;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "l", "mode", "density", "metric", "value"])?;
    let density = p.density.map(|d| d.to_string()).unwrap_or_default();
    let metrics = [
        ("c_dm", c_dm(release.groups()).to_string()),
        ("ncp", format!("{:.6}", to_f64(&ncp))),
        ("mean_r_error", summary.mean_r_error.map(|e| format!("{e:.6}")).unwrap_or_default()),
        ("queries", summary.queries.to_string()),
        ("flagged", summary.flagged.to_string()),
    ];
    for (name, value) in metrics {
        w.write_record([p.k.to_string(), p.l.to_string(), p.mode.to_string(), density.clone(), name.into(), value])?;
    }
    let body = w.into_inner()?;
    match &args.out {
        Some(path) => fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?,
        None => std::io::stdout().write_all(&body)?,
    }
    Ok(0)
}

fn generate(args: &GenerateArgs) -> anyhow::Result<u8> {
    let table = match args.dataset {
        Dataset::Census => census_table(args.rows, args.density, args.seed)?,
        Dataset::Random => try_random_table(
            &RandomTableSpec {
                rows: args.rows,
                density: args.density,
                ..Default::default()
            },
            args.seed,
        )?,
    };
    table.write(&args.out)?;
    println!("{} rows written to {}", table.len(), args.out.display());
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<lgb_core::Error>() {
        Some(e) if e.is_infeasible() => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Anonymize(a) => anonymize(&a),
        Command::Verify(a) => verify(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Sweep(a) => sweep::run(&a),
        Command::Generate(a) => generate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
