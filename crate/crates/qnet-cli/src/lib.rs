//! Command-line front end for `qnet`: scenario files and flags in, CSV or
//! JSON tables out.
//!
//! Every command resolves its parameters the same way: values from the
//! `--config` scenario file, overridden by flags given on the command line.
//! Exit codes are 0 on success, 2 for an invalid configuration, 3 for a
//! numerical failure (infeasible program, non-convergence) and 1 for I/O
//! errors; failures print a one-line JSON diagnostic to stderr.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{Map, Value};

use commands::elem::{self, ElemCommand};
use commands::satlink::{self, SatCommand};
use commands::simulate::{self, SimCommand};
use commands::twolink::{self, TwoLinkCommand};
use commands::waiting::{self, WaitingCommand};
use commands::Context;
use config::{load_scenario, merge_params, resolve_tolerances, Scenario};
use error::{config_err, CliResult};
use output::{render, write_output, Format, Meta, Table};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "QNET_THREADS";

pub const DEFAULT_SEED: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "qnet", version, about = "Entanglement distribution policies, link physics and waiting times")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// LP feasibility tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// LP optimality (reduced-cost) tolerance.
    #[arg(long, global = true)]
    pub opt_tol: Option<f64>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON scenario file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default from QNET_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run the acceptance checks and print one CSV row per check.
    #[arg(long)]
    pub selftest: bool,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Single elementary link.
    Elem {
        #[command(subcommand)]
        cmd: ElemCommand,
    },
    /// Two links joined by entanglement swapping.
    Twolink {
        #[command(subcommand)]
        cmd: TwoLinkCommand,
    },
    /// Satellite-to-ground links.
    Satlink {
        #[command(subcommand)]
        cmd: SatCommand,
    },
    /// Waiting times of parallel links.
    Waiting {
        #[command(subcommand)]
        cmd: WaitingCommand,
    },
    /// Monte Carlo estimates.
    Simulate {
        #[command(subcommand)]
        cmd: SimCommand,
    },
}

impl Command {
    /// `(kind, command)` names as used in scenario files.
    pub fn names(&self) -> (&'static str, &'static str) {
        match self {
            Command::Elem { cmd } => (
                "elem",
                match cmd {
                    ElemCommand::Steady(_) => "steady",
                    ElemCommand::Optimal(_) => "optimal",
                    ElemCommand::Backward(_) => "backward",
                    ElemCommand::Forward(_) => "forward",
                },
            ),
            Command::Twolink { cmd } => (
                "twolink",
                match cmd {
                    TwoLinkCommand::LpFidelity(_) => "lp-fidelity",
                    TwoLinkCommand::LpWaiting(_) => "lp-waiting",
                    TwoLinkCommand::Analytic(_) => "analytic",
                    TwoLinkCommand::Evaluate(_) => "evaluate",
                },
            ),
            Command::Satlink { cmd } => (
                "satlink",
                match cmd {
                    SatCommand::Link(_) => "link",
                    SatCommand::Sweep(_) => "sweep",
                    SatCommand::Keyrates(_) => "keyrates",
                },
            ),
            Command::Waiting { cmd } => (
                "waiting",
                match cmd {
                    WaitingCommand::Collective(_) => "collective",
                    WaitingCommand::Virtual(_) => "virtual",
                },
            ),
            Command::Simulate { cmd } => (
                "simulate",
                match cmd {
                    SimCommand::Elem(_) => "elem",
                    SimCommand::Twolink(_) => "twolink",
                    SimCommand::Collective(_) => "collective",
                },
            ),
        }
    }

    /// The command named in a scenario file, with empty parameters.
    pub fn from_names(kind: &str, command: &str) -> CliResult<Command> {
        let cmd = match (kind, command) {
            ("elem", "steady") => Command::Elem { cmd: ElemCommand::Steady(Default::default()) },
            ("elem", "optimal") => Command::Elem { cmd: ElemCommand::Optimal(Default::default()) },
            ("elem", "backward") => Command::Elem { cmd: ElemCommand::Backward(Default::default()) },
            ("elem", "forward") => Command::Elem { cmd: ElemCommand::Forward(Default::default()) },
            ("twolink", "lp-fidelity") => Command::Twolink { cmd: TwoLinkCommand::LpFidelity(Default::default()) },
            ("twolink", "lp-waiting" | "waiting") => Command::Twolink { cmd: TwoLinkCommand::LpWaiting(Default::default()) },
            ("twolink", "analytic") => Command::Twolink { cmd: TwoLinkCommand::Analytic(Default::default()) },
            ("twolink", "evaluate") => Command::Twolink { cmd: TwoLinkCommand::Evaluate(Default::default()) },
            ("satlink", "link") => Command::Satlink { cmd: SatCommand::Link(Default::default()) },
            ("satlink", "sweep") => Command::Satlink { cmd: SatCommand::Sweep(Default::default()) },
            ("satlink", "keyrates") => Command::Satlink { cmd: SatCommand::Keyrates(Default::default()) },
            ("waiting", "collective") => Command::Waiting { cmd: WaitingCommand::Collective(Default::default()) },
            ("waiting", "virtual") => Command::Waiting { cmd: WaitingCommand::Virtual(Default::default()) },
            ("simulate", "elem") => Command::Simulate { cmd: SimCommand::Elem(Default::default()) },
            ("simulate", "twolink") => Command::Simulate { cmd: SimCommand::Twolink(Default::default()) },
            ("simulate", "collective") => Command::Simulate { cmd: SimCommand::Collective(Default::default()) },
            _ => return Err(config_err(format!("unknown command \"{kind} {command}\""))),
        };
        Ok(cmd)
    }

    /// Runs the command with `file` parameters underneath its flags.
    pub fn execute(&self, file: &Map<String, Value>, ctx: &Context) -> CliResult<Table> {
        match self {
            Command::Elem { cmd } => match cmd {
                ElemCommand::Steady(a) => elem::steady(&merge_params(file, a)?, ctx),
                ElemCommand::Optimal(a) => elem::optimal(&merge_params(file, a)?, ctx),
                ElemCommand::Backward(a) => elem::backward(&merge_params(file, a)?, ctx),
                ElemCommand::Forward(a) => elem::forward(&merge_params(file, a)?, ctx),
            },
            Command::Twolink { cmd } => match cmd {
                TwoLinkCommand::LpFidelity(a) => twolink::lp_fidelity(&merge_params(file, a)?, ctx),
                TwoLinkCommand::LpWaiting(a) => twolink::lp_waiting(&merge_params(file, a)?, ctx),
                TwoLinkCommand::Analytic(a) => twolink::analytic(&merge_params(file, a)?, ctx),
                TwoLinkCommand::Evaluate(a) => twolink::evaluate(&merge_params(file, a)?, ctx),
            },
            Command::Satlink { cmd } => match cmd {
                SatCommand::Link(a) => satlink::link(&merge_params(file, a)?, ctx),
                SatCommand::Sweep(a) => satlink::sweep(&merge_params(file, a)?, ctx),
                SatCommand::Keyrates(a) => satlink::keyrates(&merge_params(file, a)?, ctx),
            },
            Command::Waiting { cmd } => match cmd {
                WaitingCommand::Collective(a) => waiting::collective(&merge_params(file, a)?, ctx),
                WaitingCommand::Virtual(a) => waiting::virtual_link(&merge_params(file, a)?, ctx),
            },
            Command::Simulate { cmd } => match cmd {
                SimCommand::Elem(a) => simulate::elem(&merge_params(file, a)?, ctx),
                SimCommand::Twolink(a) => simulate::twolink(&merge_params(file, a)?, ctx),
                SimCommand::Collective(a) => simulate::collective(&merge_params(file, a)?, ctx),
            },
        }
    }
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| config_err(format!("{THREADS_ENV}={s:?} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(config_err("thread count must be at least 1"));
        }
        // A pool configured earlier in the process stays in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Resolves flags and scenario file, runs the command and writes its
/// output. Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    }
}

fn run_inner(cli: &Cli) -> CliResult<i32> {
    configure_threads(cli.threads)?;
    let scenario = match &cli.config {
        Some(path) => load_scenario(path)?,
        None => Scenario::default(),
    };
    let seed = cli.seed.or(scenario.seed).unwrap_or(DEFAULT_SEED);
    let tol = resolve_tolerances(scenario.tolerances.as_ref(), cli.tol, cli.opt_tol)?;
    let format = cli.format.or(scenario.format).unwrap_or_default();
    let ctx = Context { seed, tol };

    if cli.selftest {
        if cli.command.is_some() {
            return Err(config_err("--selftest takes no subcommand"));
        }
        let outcomes: Vec<_> = (1..=acceptance::CRITERIA)
            .map(|id| {
                let r = acceptance::run_timed(id, seed);
                eprintln!("criterion {:>2} {:<40} {:>9.3} s", id, r.outcome.name, r.elapsed.as_secs_f64());
                r.outcome
            })
            .collect();
        let table = acceptance::to_table(&outcomes);
        let meta = Meta { command: "selftest".into(), seed, tolerances: tol };
        write_output(&render(&table, &meta, format), cli.out.as_deref())?;
        return Ok(if outcomes.iter().all(|o| o.pass) { 0 } else { 1 });
    }

    let command = match (&cli.command, &scenario.kind, &scenario.command) {
        (Some(c), kind, sub) => {
            let (k, s) = c.names();
            let alias_ok = |name: &str| name == s || (s == "lp-waiting" && name == "waiting");
            if kind.as_deref().is_some_and(|x| x != k) || sub.as_deref().is_some_and(|x| !alias_ok(x)) {
                return Err(config_err(format!(
                    "scenario file is for \"{} {}\", command line asks for \"{k} {s}\"",
                    kind.as_deref().unwrap_or("?"),
                    sub.as_deref().unwrap_or("?")
                )));
            }
            c.clone()
        }
        (None, Some(k), Some(s)) => Command::from_names(k, s)?,
        (None, _, _) => return Err(config_err("no command given (use a subcommand, --config or --selftest)")),
    };
    let (k, s) = command.names();
    let started = Instant::now();
    let table = command.execute(&scenario.params, &ctx)?;
    let meta = Meta { command: format!("{k} {s}"), seed, tolerances: tol };
    write_output(&render(&table, &meta, format), cli.out.as_deref())?;
    if std::env::var_os("QNET_TIMING").is_some() {
        eprintln!("{k} {s}: {:.3} s", started.elapsed().as_secs_f64());
    }
    Ok(0)
}
