use clap::{Parser, Subcommand};
use mslab::cli;
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiment runner for multiscale elliptic solvers.
#[derive(Parser)]
#[command(name = "mslab", version, about)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config and print its CSV error table
    Run {
        /// experiment config file
        cfg: PathBuf,
        /// allow paper-scale runs (tens of minutes, gigabytes of memory)
        #[arg(long)]
        full_scale: bool,
        /// also dump nodal solution and coefficient rasters into this directory
        #[arg(long, value_name = "DIR")]
        dump_fields: Option<PathBuf>,
        /// also write the CSV to this file
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Run every .cfg in a directory and check expectation annotations
    Suite {
        /// directory of experiment configs
        dir: PathBuf,
        /// allow paper-scale runs
        #[arg(long)]
        full_scale: bool,
    },
    /// Compute the effective tensor of a periodic coefficient
    Homog {
        /// homogenization config file
        cfg: PathBuf,
    },
    /// Generate a log-normal coefficient raster
    GenPerm {
        /// generator spec file
        spec: PathBuf,
        /// output raster path
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.cmd {
        Cmd::Run {
            cfg,
            full_scale,
            dump_fields,
            output,
        } => {
            let parsed = match cli::parse_config(&cfg) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            match cli::run(&parsed, full_scale, dump_fields.as_deref()) {
                Ok(out) => {
                    print!("{}", out.csv);
                    if let Some(path) = output {
                        if let Err(e) = std::fs::write(&path, &out.csv) {
                            eprintln!("error: cannot write {}: {e}", path.display());
                            return ExitCode::from(1);
                        }
                    }
                    let fails = cli::check_expectations(&parsed, &out.rows);
                    if fails.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        for f in fails {
                            eprintln!("FAIL {f}");
                        }
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Cmd::Suite { dir, full_scale } => {
            let out = cli::run_suite(&dir, full_scale);
            print!("{}", out.csv);
            for m in &out.messages {
                eprintln!("{m}");
            }
            ExitCode::from(out.exit_code as u8)
        }
        Cmd::Homog { cfg } => match cli::run_homog(&cfg) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Cmd::GenPerm { spec, out } => match cli::gen_perm(&spec, &out) {
            Ok(msg) => {
                print!("{msg}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
