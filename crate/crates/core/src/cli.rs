//! The `hetcrash` command line.
//!
//! Exit codes: 0 success, 2 a violation (or an unmet sweep expectation),
//! 1 anything else.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::cases::CaseTag;
use crate::corpus;
use crate::devices::run_to_crash;
use crate::explorer::{
    run_one, shrink, sweep, sweep_sampled, witness_field, Counterexample, ExploreConfig,
    SweepOptions, SymbolMode, World,
};
use crate::model::Geometry;
use crate::oracle::{check_strict, Verdict};
use crate::recovery::Strategy;
use crate::trace::{format_trace, parse_trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Environment variable holding the seed for sampled sweeps.
pub const SEED_VAR: &str = "HETCRASH_SEED";

#[derive(Debug, Parser)]
#[command(name = "hetcrash", version, about = "Crash-consistency checker for NVM-backed page caches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trace under one strategy and judge the recovered pages.
    Run {
        /// Trace file, or the name of a built-in corpus trace.
        trace: String,
        #[arg(long, short)]
        strategy: Strategy,
        /// Print a minimized trace when the strategy fails.
        #[arg(long)]
        shrink: bool,
    },
    /// Exhaustively explore one world and check every strategy.
    Sweep {
        #[arg(long, default_value = "a")]
        world: World,
        #[arg(long)]
        max_events: Option<usize>,
        #[arg(long)]
        page_size: Option<usize>,
        #[arg(long)]
        page_count: Option<usize>,
        /// Comma-separated strategy names (default: all).
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
        /// Override the expected outcome, e.g. `latest-dev=fail`.
        #[arg(long, value_parser = parse_expect)]
        expect: Vec<(Strategy, bool)>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Judge this many random schedules instead of all of them.
        #[arg(long)]
        sample: Option<usize>,
        /// Print one record per schedule and strategy.
        #[arg(long)]
        records: bool,
        /// Enumerate every symbol assignment up to renaming.
        #[arg(long)]
        canonical: bool,
        /// Allow sync writes after unsynced plain writes.
        #[arg(long)]
        liberal: bool,
        /// Print a minimized trace for each first counterexample.
        #[arg(long)]
        shrink: bool,
    },
    /// Run every built-in trace under every strategy and print the table.
    Corpus,
    /// Print a built-in corpus trace.
    Show { name: String },
}

fn parse_expect(s: &str) -> Result<(Strategy, bool), String> {
    let (name, outcome) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=pass|fail, got {s:?}"))?;
    let strategy: Strategy = name.parse().map_err(|e| format!("{e}"))?;
    match outcome {
        "pass" => Ok((strategy, true)),
        "fail" => Ok((strategy, false)),
        _ => Err(format!("expected pass or fail, got {outcome:?}")),
    }
}

/// Parses `args` (program name first) and runs the command, writing the
/// report to `out`. Returns the process exit code.
pub fn run_command<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(out, "error: {msg}");
            EXIT_ERROR
        }
    }
}

fn load_trace(arg: &str) -> Result<(String, crate::model::Schedule), String> {
    let path = PathBuf::from(arg);
    let name = path
        .file_stem()
        .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{arg}: {e}"))?;
        let s = parse_trace(&text).map_err(|e| format!("{arg}: {e}"))?;
        return Ok((name, s));
    }
    match corpus::find(arg) {
        Some(t) => Ok((t.name.to_string(), t.schedule())),
        None => Err(format!("{arg}: no such file or corpus trace")),
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32, String> {
    let io = |e: std::io::Error| e.to_string();
    match cmd {
        Command::Run {
            trace,
            strategy,
            shrink: want_shrink,
        } => {
            let (name, s) = load_trace(&trace)?;
            let verdict = run_one(&s, strategy).map_err(|e| e.to_string())?;
            let witness = verdict.witness().map_or_else(|| "-".to_string(), witness_field);
            writeln!(
                out,
                "schedule={name} strategy={strategy} verdict={} witness={witness}",
                verdict.label()
            )
            .map_err(io)?;
            if s.crash_pos().is_some() {
                let image = run_to_crash(&s, strategy.hooks()).map_err(|e| e.to_string())?;
                for page in s.geometry().pages() {
                    let bytes = strategy
                        .recover(&image.nvm, &image.disk, page)
                        .map_err(|e| e.to_string())?;
                    let strict = check_strict(&image.history, s.geometry(), &bytes, page);
                    writeln!(
                        out,
                        "recovered page {page}: \"{bytes}\" (point-in-time: {})",
                        if strict { "yes" } else { "no" }
                    )
                    .map_err(io)?;
                }
            }
            if let Some(w) = verdict.witness() {
                writeln!(out, "witness: {}", w.describe(&s)).map_err(io)?;
                if want_shrink {
                    let small = shrink(&Counterexample {
                        schedule: s,
                        strategy,
                        verdict: verdict.clone(),
                        minimized: false,
                    });
                    write!(out, "minimized:\n{}", format_trace(&small.schedule)).map_err(io)?;
                }
            }
            Ok(exit_code(&verdict))
        }
        Command::Sweep {
            world,
            max_events,
            page_size,
            page_count,
            strategies,
            expect,
            workers,
            sample,
            records,
            canonical,
            liberal,
            shrink: want_shrink,
        } => {
            let mut cfg = ExploreConfig::world(world);
            if let Some(n) = max_events {
                cfg.max_events = n;
            }
            cfg.geometry = Geometry::new(
                page_size.unwrap_or(cfg.geometry.page_size()),
                page_count.unwrap_or(cfg.geometry.page_count()),
            )
            .map_err(|e| e.to_string())?;
            if !strategies.is_empty() {
                cfg.strategies = strategies;
            }
            if canonical {
                cfg.symbols = SymbolMode::Canonical;
            }
            cfg.strict_sync_runs = !liberal;
            let opts = SweepOptions { workers, records };
            let report = match sample {
                Some(n) => {
                    let seed = match std::env::var(SEED_VAR) {
                        Ok(v) => v
                            .trim()
                            .parse()
                            .map_err(|_| format!("{SEED_VAR}={v:?} is not a number"))?,
                        Err(_) => 0,
                    };
                    sweep_sampled(&cfg, n, seed, opts)
                }
                None => sweep(&cfg, opts),
            }
            .map_err(|e| e.to_string())?;

            for r in &report.records {
                writeln!(out, "{r}").map_err(io)?;
            }
            write!(
                out,
                "world={world} max_events={} page_size={} page_count={} schedules={} crash_schedules={}",
                cfg.max_events,
                cfg.geometry.page_size(),
                cfg.geometry.page_count(),
                report.schedules,
                report.crash_schedules
            )
            .map_err(io)?;
            match report.seed {
                Some(seed) => writeln!(out, " seed={seed}"),
                None => writeln!(out),
            }
            .map_err(io)?;

            let mut all_met = true;
            for t in &report.tallies {
                let expected_pass = expect
                    .iter()
                    .rev()
                    .find(|(s, _)| *s == t.strategy)
                    .map_or_else(|| world.expects_pass(t.strategy), |(_, p)| *p);
                let met = (t.failures() == 0) == expected_pass;
                all_met &= met;
                write!(
                    out,
                    "strategy={} expect={} passed={} violations={} errors={} result={}",
                    t.strategy,
                    if expected_pass { "pass" } else { "fail" },
                    t.passed,
                    t.violations,
                    t.errors,
                    if met { "as-expected" } else { "UNEXPECTED" }
                )
                .map_err(io)?;
                match &t.first {
                    Some((id, _)) => writeln!(out, " first={id}").map_err(io)?,
                    None => writeln!(out).map_err(io)?,
                }
                if let (true, Some((_, c))) = (want_shrink, &t.first) {
                    let small = shrink(c);
                    for line in format_trace(&small.schedule).lines() {
                        writeln!(out, "  {line}").map_err(io)?;
                    }
                }
            }
            let cases: Vec<String> = CaseTag::ALL
                .iter()
                .map(|c| format!("{}={}", c.name(), report.case_count(*c)))
                .collect();
            writeln!(out, "cases {}", cases.join(" ")).map_err(io)?;
            Ok(if all_met { EXIT_OK } else { EXIT_VIOLATION })
        }
        Command::Corpus => {
            let rows = corpus::matrix(&Strategy::ALL);
            write!(out, "{}", corpus::render_matrix(&rows)).map_err(io)?;
            let errors = rows
                .iter()
                .flat_map(|r| &r.verdicts)
                .any(|(_, v)| v.is_err());
            Ok(if errors { EXIT_ERROR } else { EXIT_OK })
        }
        Command::Show { name } => {
            let t = corpus::find(&name).ok_or_else(|| format!("{name}: no such corpus trace"))?;
            write!(out, "{}", t.text).map_err(io)?;
            Ok(EXIT_OK)
        }
    }
}

/// Whether a verdict counts as success for `run`.
pub fn exit_code(v: &Verdict) -> i32 {
    if v.is_pass() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}
