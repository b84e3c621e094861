//! Argument parsing and dispatch for the `kerrchaos` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::bundle::{export, load_bundle, run_file, ExportFormat};
use super::fixtures::{list_fixtures, Target};
use super::sweeps::sweep_file;
use super::{Failure, EXIT_CONFIG, EXIT_RUNTIME};
use crate::drive::DriveSpec;
use crate::error::Error;

/// Environment variable that fixes the worker count.
pub const WORKERS_ENV: &str = "KERRCHAOS_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "kerrchaos", version, about = "Purity and chaos diagnostics for the driven, damped Kerr oscillator")]
pub struct Cli {
    /// Worker threads (overrides KERRCHAOS_WORKERS).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment into a result bundle.
    Run {
        config: PathBuf,
        /// Parent directory for the bundle.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recompute even if the bundle exists.
        #[arg(long)]
        force: bool,
    },
    /// List the figure parameter sets and their reported diagnostics.
    Fixtures {
        #[arg(long)]
        json: bool,
    },
    /// Run or resume a parameter sweep.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a bundle's data as csv, grid or png files.
    Export {
        bundle: PathBuf,
        #[arg(long, value_parser = ["csv", "grid", "png"])]
        format: String,
        /// Destination directory (default: the bundle itself).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_workers(flag: Option<usize>) -> Result<(), String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| format!("{WORKERS_ENV}={v:?} is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err("worker count must be >= 1".into());
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    if let Err(msg) = configure_workers(cli.workers) {
        let _ = writeln!(err, "error: {msg}");
        return EXIT_CONFIG;
    }
    let result = match cli.command {
        Command::Run { config, out: dir, force } => run_file(&config, dir.as_deref(), force).map(|o| {
            let state = if o.reused { "unchanged" } else { "written" };
            let _ = writeln!(out, "{} ({state})", o.dir.display());
            if let Ok(data) = load_bundle(&o.dir) {
                for c in &data.diagnostics.checks {
                    let verdict = if c.pass { "ok" } else { "outside" };
                    let _ = writeln!(
                        out,
                        "  {:<16} {:>10.4}  expected {} [{}, {}]  {verdict}",
                        c.quantity, c.measured, c.target.nominal, c.target.min, c.target.max
                    );
                }
            }
        }),
        Command::Fixtures { json } => {
            print_fixtures(out, json);
            Ok(())
        }
        Command::Sweep { config, out: dir } => sweep_file(&config, dir.as_deref()).map(|o| {
            let failed = o.table.rows.iter().filter(|r| r.error.is_some()).count();
            let _ = writeln!(out, "{} ({} points, {failed} failed)", o.dir.display(), o.table.rows.len());
            if let Some(c) = &o.curve {
                let _ = writeln!(
                    out,
                    "  sign change at {:?}, steepest purity drop at {:?}, separation {:?}",
                    c.sign_change,
                    c.steepest_drop,
                    c.separation()
                );
            }
        }),
        Command::Export { bundle, format, out: dir } => {
            let format: ExportFormat = format.parse().expect("clap restricts the values");
            export(&bundle, format, dir.as_deref()).map(|files| {
                for f in files {
                    let _ = writeln!(out, "{f}");
                }
            })
        }
    };
    match result {
        Ok(()) => 0,
        Err(f) => report(err, &f),
    }
}

fn report(err: &mut dyn Write, f: &Failure) -> i32 {
    let _ = writeln!(err, "error: {f}");
    match f.error {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn target(t: Option<Target>) -> String {
    let r = |x: f64| (x * 1e9).round() / 1e9;
    t.map(|t| format!("{} [{}, {}]", r(t.nominal), r(t.min), r(t.max))).unwrap_or_else(|| "-".into())
}

fn print_fixtures(out: &mut dyn Write, json: bool) {
    let fixtures = list_fixtures();
    if json {
        let _ = serde_json::to_writer_pretty(&mut *out, &fixtures);
        let _ = writeln!(out);
        return;
    }
    for f in &fixtures {
        let p = &f.params;
        let drive = match p.drive {
            DriveSpec::Bichromatic { f0, f1, delta_mod } => format!("f0={f0} f1={f1} delta_mod={delta_mod}"),
            DriveSpec::GaussianTrain { amp, width, period, .. } => {
                format!("omega={amp} T={width} tau={period:.6}")
            }
            DriveSpec::Constant { amp } => format!("amp={amp}"),
        };
        let _ = writeln!(out, "{} ({})", f.name, f.regime);
        let _ = writeln!(out, "  delta={} chi={} nbar={} {drive}", p.delta, p.chi, p.nbar);
        let e = &f.expected;
        let _ = writeln!(
            out,
            "  excitation {}  purity {}  lyapunov {}",
            target(e.excitation),
            target(e.purity),
            target(e.lyapunov)
        );
        let r = &f.recommended;
        let _ = writeln!(out, "  fock_dim={} dt={} t_end={} t_transient={}", r.fock_dim, r.dt, r.t_end, r.t_transient);
    }
}
