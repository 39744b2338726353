//! Command-line front end: `generate`, `run`, `benchmark`, `report` and
//! `diagnose`.

mod args;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use clap::Parser;

use dqdrec::data::ItemFormat;
use dqdrec::engine::{Method, Strategy};
use dqdrec::harness::{
    run_benchmark, run_trajectory, BenchOptions, Dataset, Prepared, Recommender, RunConfig, MANIFEST,
};
use dqdrec::metrics::ReportTable;
use dqdrec::{Error, Result};

pub use args::Cli;
use args::{BenchmarkArgs, Command, ConfigArgs, DataArgs, DiagnoseArgs, GenerateArgs, ReportArgs, RunArgs};

/// Exit status for bad flags, bad values and inconsistent configurations.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Report(a) => report(a),
        Command::Diagnose(a) => diagnose(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let users = a.users.unwrap_or(a.shape.n_users);
    let ds = Dataset::synthetic(a.shape.items, a.shape.dim, a.batch, users, a.seed)?;
    ds.save(&a.out, a.format, Some(a.seed))?;
    let kind = match a.format {
        ItemFormat::Csv => "csv",
        ItemFormat::PackedBinary => "packed_binary",
    };
    println!(
        "wrote {} items (d = {}, {kind}) and {users} users to {}",
        ds.n_items(),
        a.shape.dim,
        a.out.display()
    );
    Ok(())
}

/// Config file first, then every flag that was given.
fn layered(c: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = c.lambda {
        cfg.lambda = v;
    }
    if c.alpha.is_some() {
        cfg.alpha = c.alpha;
    }
    if c.epsilon.is_some() {
        cfg.epsilon = c.epsilon;
    }
    if let Some(v) = c.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = c.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = c.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if c.adaptive {
        cfg.adaptive = true;
    }
    if let Some(v) = c.noise {
        cfg.noise = v;
    }
    if let Some(v) = c.rank {
        cfg.rank = v;
    }
    if let Some(v) = c.kernel {
        cfg.kernel.family = v;
    }
    if let Some(v) = c.bandwidth {
        cfg.kernel.bandwidth = v;
    }
    if let Some(v) = c.index {
        cfg.index = v;
    }
    Ok(cfg)
}

fn load_data(d: &DataArgs, batch_size: usize, seed: u64) -> Result<Dataset> {
    match &d.data {
        Some(dir) => {
            if !dir.join(MANIFEST).is_file() {
                return Err(Error::Config(format!(
                    "{} holds no {MANIFEST}; create a dataset with `dqdrec generate`",
                    dir.display()
                )));
            }
            Dataset::load(dir, d.batch_rows)
        }
        None => {
            log::info!(
                "no --data given; generating {} synthetic items for {} users",
                d.shape.items,
                d.shape.n_users
            );
            Dataset::synthetic(d.shape.items, d.shape.dim, batch_size, d.shape.n_users, seed)
        }
    }
}

fn output(path: Option<&std::path::Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = layered(&a.cfg)?;
    if let Some(m) = a.method {
        cfg.method = m;
    }
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    cfg.validate()?;
    let ds = load_data(&a.data, cfg.batch_size, cfg.seed)?;
    let prepared = Prepared::fit(&ds.items, &cfg.kernel, cfg.rank, cfg.index, cfg.seed)?;
    let rec = run_trajectory(&cfg, &ds, &prepared, a.user, cfg.seed)?;
    let mut out = output(a.log.as_deref())?;
    rec.write_round_log(&mut out)?;
    out.flush()?;
    let s = &rec.summary;
    eprintln!(
        "user {} ({} rounds): rel {:.3}  prec {:.3}  div_local {:.3}  div_global {:.3}  div_plus {:.3}",
        s.user, s.rounds, s.rel, s.prec, s.div_local, s.div_global, s.div_plus
    );
    if let Some(l) = &rec.ledger {
        eprintln!("final λ {:.3} after {} updates", rec.lambdas().last().copied().unwrap_or(0.5), l.len());
    }
    Ok(())
}

fn expand<T: Copy>(names: &[String], all: &[T], parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if names.iter().any(|n| n == "all") {
        return Ok(all.to_vec());
    }
    names.iter().map(|n| parse(n.trim())).collect()
}

/// One configuration per (method, strategy). With more than one cell,
/// parameters a method does not take are dropped for it and baselines only
/// run under maximization; a single cell is validated strictly.
fn cells(a: &BenchmarkArgs, base: &RunConfig) -> Result<Vec<RunConfig>> {
    let mut everyone: Vec<Recommender> = Method::ALL.iter().map(|&m| Recommender::Dqd(m)).collect();
    everyone.extend([Recommender::Mmr, Recommender::Xquad]);
    let methods = if a.method.is_empty() {
        vec![base.method]
    } else {
        expand(&a.method, &everyone, |s| s.parse())?
    };
    let strategies = if a.strategy.is_empty() {
        vec![base.strategy]
    } else {
        expand(&a.strategy, &[Strategy::Maximization, Strategy::Sampling], |s| s.parse())?
    };
    let many = methods.len() * strategies.len() > 1;
    let mut out = Vec::new();
    for &m in &methods {
        for &s in &strategies {
            let mut c = base.clone();
            c.method = m;
            c.strategy = s;
            if many {
                if !m.uses_alpha() {
                    c.alpha = None;
                }
                if m != Recommender::Dqd(Method::EpsGreedy) {
                    c.epsilon = None;
                }
                if !matches!(m, Recommender::Dqd(_)) {
                    if s == Strategy::Sampling {
                        continue;
                    }
                    c.adaptive = false;
                }
            }
            c.validate()?;
            out.push(c);
        }
    }
    Ok(out)
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut base = layered(&a.cfg)?;
    if a.users.is_some() {
        base.users = a.users.clone();
    }
    let configs = cells(&a, &base)?;
    let ds = load_data(&a.data, base.batch_size, base.seed)?;
    let opts = BenchOptions {
        single_thread: a.single_thread,
        record_time: !a.no_timing,
    };
    let result = run_benchmark(&configs, &ds, None, opts)?;
    if !result.failures.is_empty() {
        eprintln!("{} cells failed and are left out of the report", result.failures.len());
    }
    print!("{}", result.table.render_text());
    if let Some(path) = &a.out {
        result.table.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let table = ReportTable::read_csv(File::open(&a.input)?)?;
    if a.csv {
        table.write_csv(io::stdout().lock())
    } else {
        print!("{}", table.render_text());
        Ok(())
    }
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let ds = load_data(&a.data, a.batch, a.seed)?;
    let diag = ds.diagnostics(&RunConfig::default().kernel, a.rank, a.seed)?;
    let text = serde_json::to_string_pretty(&diag).map_err(io::Error::other)?;
    println!("{text}");
    Ok(())
}
