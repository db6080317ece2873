//! `depin`: reproducible experiment runner.

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use depin::mc::Exec;
use depin::ErrorClass;

use config::{Command, RawConfig};
use output::{csv_bytes, sha256_hex, write_atomic, Manifest};

/// Environment variable overriding the configured output directory.
const OUT_DIR_ENV: &str = "DEPIN_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "depin", version, about = "Pinned Gaussian free field experiments")]
struct Cli {
    command: Command,
    /// Flat `key = value` config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(short, long, default_value_t = 1)]
    jobs: usize,
    /// Only check the config and list violations.
    #[arg(long)]
    validate: bool,
}

fn exit_status(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Input => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Resource => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut raw = RawConfig::default();
    let base = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read config {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            };
            match RawConfig::parse(&text) {
                Ok(r) => raw = r,
                Err(v) => {
                    eprintln!("config violation: {v}");
                    return ExitCode::from(2);
                }
            }
            path.parent().map(Path::to_path_buf).unwrap_or_default()
        }
        None => PathBuf::from("."),
    };
    for a in &cli.set {
        if let Err(v) = raw.set(a) {
            eprintln!("config violation: {v}");
            return ExitCode::from(2);
        }
    }
    if cli.validate {
        let violations = config::validate(cli.command, &raw, &base);
        for v in &violations {
            println!("{v}");
        }
        return if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) };
    }
    let exp = match config::build(cli.command, &raw, &base) {
        Ok(e) => e,
        Err(violations) => {
            for v in violations {
                eprintln!("config violation: {v}");
            }
            return ExitCode::from(2);
        }
    };
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| exp.out_dir.clone());
    match run(&exp, &out_dir, cli.jobs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Model(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(e.class()))
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    Model(depin::Error),
    Io(String),
}

fn run(exp: &config::Experiment, out_dir: &Path, jobs: usize) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", out_dir.display()));
    std::fs::create_dir_all(out_dir).map_err(io)?;
    let mut manifest = Manifest {
        header: vec![
            ("tool".into(), format!("depin {}", env!("CARGO_PKG_VERSION"))),
            ("command".into(), exp.command.name().into()),
            ("kernel".into(), exp.kernel_desc.clone()),
            ("seed".into(), exp.seed.to_string()),
            (
                "seed_rule".into(),
                "replica i of a stage draws ChaCha8 seeded from splitmix(seed, stage tag), stream i".into(),
            ),
            ("jobs".into(), jobs.to_string()),
        ],
        config: exp.raw.to_text(),
        outputs: Vec::new(),
    };
    let mpath = Manifest::path(out_dir);
    write_atomic(&mpath, manifest.render("running", None).as_bytes()).map_err(io)?;
    let start = Instant::now();
    let tables = match run::execute(exp, &Exec::new(jobs)) {
        Ok(t) => t,
        Err(e) => {
            let status = format!("failed: {e}");
            write_atomic(&mpath, manifest.render(&status, Some(start.elapsed().as_secs_f64())).as_bytes())
                .map_err(io)?;
            return Err(Failure::Model(e));
        }
    };
    for t in &tables {
        let bytes = csv_bytes(t).map_err(|e| Failure::Io(e.to_string()))?;
        let name = format!("{}.csv", t.name);
        write_atomic(&out_dir.join(&name), &bytes).map_err(io)?;
        manifest.outputs.push((name, sha256_hex(&bytes)));
    }
    write_atomic(&mpath, manifest.render("ok", Some(start.elapsed().as_secs_f64())).as_bytes()).map_err(io)?;
    Ok(())
}
