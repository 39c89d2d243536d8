use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sarkit::pipeline::{self, RunOptions};
use sarkit::{SarError, Scenario};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "sarkit", version, about = "FMCW TDM-MIMO SAR simulation, imaging and metrology")]
struct Cli {
    /// Scenario file, for subcommands that take one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "SARKIT_OUT_DIR", default_value = "sarkit-out")]
    out_dir: PathBuf,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the recording and write the baseband cube.
    Simulate {
        #[arg(value_name = "CONFIG")]
        scenario: Option<PathBuf>,
    },
    /// Form the configured image from a stored cube.
    Image {
        cube: PathBuf,
        #[arg(value_name = "CONFIG")]
        scenario: Option<PathBuf>,
    },
    /// Measure a stored image: metrics row and profile cuts.
    Measure { image: PathBuf },
    /// Run the full scenario including its sweep.
    Sweep {
        #[arg(value_name = "CONFIG")]
        scenario: Option<PathBuf>,
    },
    /// Parse and check a scenario without running it.
    Validate {
        #[arg(value_name = "CONFIG")]
        scenario: Option<PathBuf>,
    },
}

struct Failure {
    kind: String,
    message: String,
}

impl From<SarError> for Failure {
    fn from(e: SarError) -> Self {
        Failure {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

fn load(cli: &Cli, positional: &Option<PathBuf>) -> Result<Scenario, Failure> {
    let path = match (positional, &cli.config) {
        (Some(p), None) | (None, Some(p)) => p,
        (Some(a), Some(b)) if a == b => a,
        (Some(_), Some(_)) => {
            return Err(Failure {
                kind: "usage".into(),
                message: "scenario given both positionally and with --config".into(),
            })
        }
        (None, None) => {
            return Err(Failure {
                kind: "usage".into(),
                message: "no scenario file given".into(),
            })
        }
    };
    let mut s = Scenario::load(path)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let opts = RunOptions { verbose: cli.verbose };
    let out: &Path = &cli.out_dir;
    match &cli.command {
        Command::Simulate { scenario } => {
            let s = load(cli, scenario)?;
            print_json(&pipeline::run_simulate(&s, out, &opts)?);
        }
        Command::Image { cube, scenario } => {
            let s = load(cli, scenario)?;
            print_json(&pipeline::run_image(&s, cube, out, &opts)?);
        }
        Command::Measure { image } => {
            let metrology = match &cli.config {
                Some(p) => Scenario::load(p)?.metrology,
                None => Default::default(),
            };
            let m = pipeline::run_measure(image, &metrology, out, &opts)?;
            println!("{}", m.row.csv_fields().join(","));
            if let Some((_, e)) = m.failures.iter().find(|(q, _)| q == "width") {
                return Err(e.clone().into());
            }
        }
        Command::Sweep { scenario } => {
            let s = load(cli, scenario)?;
            let manifest = pipeline::run_scenario(&s, out, &opts)?;
            if cli.verbose {
                for f in &manifest.failures {
                    eprintln!("{} {}: {}", f.point, f.quantity, f.message);
                }
            }
            print_json(&manifest);
        }
        Command::Validate { scenario } => {
            let s = load(cli, scenario)?;
            print_json(&json!({ "valid": true, "scenario_id": s.id, "scenario_hash": s.hash() }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim() }));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::FAILURE
        }
    }
}
