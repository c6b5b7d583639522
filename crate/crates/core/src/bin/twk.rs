use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use twisted_kahler::config::load_config;
use twisted_kahler::invariants::{all_passed, run_suite};
use twisted_kahler::io::{write_field, write_json};
use twisted_kahler::{make_background, Error, Result, Solver};

#[derive(Parser)]
#[command(name = "twk", version, about = "Twisted cscK potentials on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the fixed-point iteration at the configured r.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_field: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve over several r values and fit scaling slopes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.08,0.04,0.02,0.01")]
        r_list: Vec<f64>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write R_ω and the Ricci entries of the background as CSV.
    Curvature {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// CSV next to a JSON report: `run.json` gets `run.csv`.
fn csv_path(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

fn write_report(path: &Path, value: &impl Serialize, csv: String) -> Result<()> {
    write_json(path, value)?;
    std::fs::write(csv_path(path), csv)?;
    Ok(())
}

fn solve(config: &Path, out_field: Option<&Path>, report: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let solver = Solver::new(cfg.clone())?;
    let outcome = solver.solve(cfg.r);
    let rep = match &outcome {
        Ok(rep) => rep,
        Err(Error::Diverged { report: rep, .. }) => rep,
        Err(_) => return outcome.map(|_| ()),
    };
    println!(
        "r = {} converged = {} iterations = {} residual = {:e} |phi| = {:e}",
        rep.r, rep.converged, rep.iterations, rep.final_residual, rep.phi_sup
    );
    if let Some(path) = report {
        write_report(path, rep, rep.to_csv())?;
    }
    if let Some(path) = out_field {
        write_field(path, &rep.phi)?;
    }
    outcome.map(|_| ())
}

fn sweep(config: &Path, r_list: &[f64], report: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let out = Solver::new(cfg)?.sweep(r_list)?;
    write_report(report, &out, out.to_csv())?;
    print!("{}", out.to_csv());
    println!(
        "slopes: base_residual {:.4} phi {:.4} correction {:.4}",
        out.base_residual_slope, out.phi_slope, out.correction_slope
    );
    Ok(())
}

fn verify(config: &Path) -> Result<bool> {
    let cfg = load_config(config)?;
    let checks = run_suite(&cfg)?;
    for c in &checks {
        println!(
            "{} {:<22} {:e} (tolerance {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    Ok(all_passed(&checks))
}

fn curvature(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let bg = make_background(&cfg.psi, &cfg.grid()?)?;
    let grid = bg.grid();
    let n = bg.n();
    let mut csv = String::new();
    for a in 0..n {
        let _ = write!(csv, "x{},y{},", a + 1, a + 1);
    }
    csv.push_str("scalar_curvature");
    for j in 0..n {
        for k in 0..n {
            let _ = write!(csv, ",ric{}{}_re,ric{}{}_im", j + 1, k + 1, j + 1, k + 1);
        }
    }
    csv.push('\n');
    for i in 0..grid.len() {
        for x in grid.coordinates(i) {
            let _ = write!(csv, "{x:.12},");
        }
        let _ = write!(csv, "{:e}", bg.scalar_curvature.at(i));
        for j in 0..n {
            for k in 0..n {
                let z = bg.ric.entry(i, j, k);
                let _ = write!(csv, ",{:e},{:e}", z.re, z.im);
            }
        }
        csv.push('\n');
    }
    std::fs::write(out, csv)?;
    println!("rbar = {:e}", bg.rbar);
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Diverged { .. } => 2,
        Error::InvalidConfig { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve {
            config,
            out_field,
            report,
        } => solve(config, out_field.as_deref(), report.as_deref()),
        Command::Sweep {
            config,
            r_list,
            report,
        } => sweep(config, r_list, report),
        Command::Verify { config } => match verify(config) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Curvature { config, out } => curvature(config, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
