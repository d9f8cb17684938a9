//! Parameter grids. One wide CSV row per (k, l, density, mode) cell, written
//! in grid order through a single sink.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;

use lgb_core::metrics::{c_dm, evaluate_workload, gen_queries, ncp_of_groups, to_f64, Query};
use lgb_core::pipeline::lgb_with_params;
use lgb_core::{Mode, Table};

use crate::{apply_density, load_table, params, sum_attribute, SweepArgs, EXIT_INFEASIBLE, EXIT_INPUT};

pub const HEADER: [&str; 10] = [
    "k",
    "l",
    "mode",
    "density",
    "c_dm",
    "ncp",
    "mean_r_error",
    "queries",
    "answered",
    "flagged",
];

#[derive(Debug, Clone, PartialEq)]
struct Cell {
    k: usize,
    l: usize,
    mode: Mode,
    density: Option<f64>,
}

impl Cell {
    fn key(&self) -> [String; 4] {
        [
            self.k.to_string(),
            self.l.to_string(),
            self.mode.to_string(),
            self.density.map(|d| d.to_string()).unwrap_or_default(),
        ]
    }
}

fn parse_list<T: FromStr>(flag: &str, raw: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("--{flag}: cannot parse `{s}`: {e}")))
        .collect()
}

fn grid(args: &SweepArgs) -> anyhow::Result<Vec<Cell>> {
    let ks: Vec<usize> = parse_list("k", &args.k)?;
    let ls: Vec<usize> = parse_list("l", &args.l)?;
    let modes: Vec<Mode> = parse_list("mode", &args.mode)?;
    let densities: Vec<Option<f64>> = match &args.density {
        Some(raw) => parse_list::<f64>("density", raw)?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut cells = Vec::new();
    for &k in &ks {
        for &l in &ls {
            for &density in &densities {
                for &mode in &modes {
                    cells.push(Cell { k, l, mode, density });
                }
            }
        }
    }
    Ok(cells)
}

/// Keys of rows already in `path`, or `None` when the file does not exist.
fn completed(path: &Path) -> anyhow::Result<Option<HashSet<[String; 4]>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = reader.headers()?.clone();
    if header.iter().ne(HEADER) {
        bail!("{} exists but is not a sweep result file", path.display());
    }
    let mut done = HashSet::new();
    for rec in reader.records() {
        let rec = rec?;
        done.insert([rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), rec[3].to_string()]);
    }
    Ok(Some(done))
}

struct Sink {
    writer: csv::Writer<File>,
    next: usize,
    pending: BTreeMap<usize, Option<Vec<String>>>,
}

impl Sink {
    /// Record cell `i`'s outcome and write every row that is now in order.
    fn push(&mut self, i: usize, row: Option<Vec<String>>) -> csv::Result<()> {
        self.pending.insert(i, row);
        while let Some(row) = self.pending.remove(&self.next) {
            if let Some(row) = row {
                self.writer.write_record(&row)?;
                self.writer.flush()?;
            }
            self.next += 1;
        }
        Ok(())
    }
}

fn run_cell(base: &Table, cell: &Cell, seed: u64, queries: &[Query]) -> lgb_core::Result<Vec<String>> {
    let table = apply_density(base, cell.density, seed)?;
    let release = lgb_with_params(&table, params(cell.k, cell.l, cell.mode, seed, cell.density))?;
    let ncp = ncp_of_groups(&table, release.groups())?;
    let (_, summary) = evaluate_workload(&release, &table, queries)?;
    let mut row = cell.key().to_vec();
    row.extend([
        c_dm(release.groups()).to_string(),
        format!("{:.6}", to_f64(&ncp)),
        summary.mean_r_error.map(|e| format!("{e:.6}")).unwrap_or_default(),
        summary.queries.to_string(),
        summary.answered.to_string(),
        summary.flagged.to_string(),
    ]);
    Ok(row)
}

pub fn run(args: &SweepArgs) -> anyhow::Result<u8> {
    let cells = grid(args)?;
    let done = completed(&args.out)?;
    let todo: Vec<Cell> = cells
        .into_iter()
        .filter(|c| done.as_ref().map_or(true, |d| !d.contains(&c.key())))
        .collect();

    let mut writer = match done {
        Some(_) => {
            let file = OpenOptions::new()
                .append(true)
                .open(&args.out)
                .with_context(|| format!("cannot open {}", args.out.display()))?;
            csv::WriterBuilder::new().has_headers(false).from_writer(file)
        }
        None => {
            let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
            w.write_record(HEADER)?;
            w.flush()?;
            w
        }
    };
    if todo.is_empty() {
        writer.flush()?;
        return Ok(0);
    }

    let base = load_table(&args.input.input)?;
    let sum = sum_attribute(&base, args.sum.as_deref())?;
    let queries = gen_queries(args.seed, args.queries, &base, sum)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers.filter(|&n| n > 0) {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let sink = Mutex::new(Sink {
        writer,
        next: 0,
        pending: BTreeMap::new(),
    });
    let failures = Mutex::new(Vec::new());
    pool.install(|| {
        todo.par_iter().enumerate().try_for_each(|(i, cell)| {
            let row = match run_cell(&base, cell, args.seed, &queries) {
                Ok(row) => Some(row),
                Err(e) => {
                    failures.lock().expect("failure list").push((i, e));
                    None
                }
            };
            sink.lock().expect("sink").push(i, row)
        })
    })?;

    let mut failures = failures.into_inner().expect("failure list");
    failures.sort_by_key(|(i, _)| *i);
    for (i, e) in &failures {
        let c = &todo[*i];
        let density = c.density.map_or("input".to_string(), |d| d.to_string());
        eprintln!("cell k={} l={} mode={} density={density}: {e}", c.k, c.l, c.mode);
    }
    if failures.is_empty() {
        Ok(0)
    } else {
        eprintln!("{} of {} cells failed", failures.len(), todo.len());
        Ok(if failures.iter().all(|(_, e)| e.is_infeasible()) {
            EXIT_INFEASIBLE
        } else {
            EXIT_INPUT
        })
    }
}
