//! Command-line front end: argument types, subcommands and table output.

pub mod args;
pub mod commands;
pub mod stats;
pub mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};

use args::{Cli, Format};
use commands::{execute, Report, EXIT_IO};

/// Renders a report in the requested format.
pub fn write_report<W: Write>(cli: &Cli, report: &Report, mut out: W) -> io::Result<()> {
    match cli.output.format {
        Format::Csv => report.table.write_csv(&mut out).map_err(io::Error::other)?,
        Format::Json => {
            let config = serde_json::to_value(cli).map_err(io::Error::other)?;
            let doc = report.table.to_json(config, cli.command.problem().quad_order);
            serde_json::to_writer_pretty(&mut out, &doc).map_err(io::Error::other)?;
            writeln!(out)?;
        }
    }
    out.flush()
}

/// Runs one invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(t) = cli.output.threads {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let report = match execute(&cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return commands::exit_code(&e);
        }
    };
    let written = match &cli.output.out {
        Some(path) => File::create(path).and_then(|f| write_report(cli, &report, BufWriter::new(f))),
        None => write_report(cli, &report, io::stdout().lock()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    report.exit_code
}
