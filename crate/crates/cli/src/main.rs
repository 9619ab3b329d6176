use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fbmin::{
    cmd_diagnose, cmd_figure1, cmd_hodograph, cmd_homogeneous, cmd_solve, init_threads,
    parse_config, solution_dir, CliError, FIGURE1_RESOLUTION, HOMOGENEOUS_NODES,
};

#[derive(Parser)]
#[command(name = "fbmin", version, about = "Minimizers of the vector cavitation functional and their free boundaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize and write fields, masks, trace and summary.
    Solve { config: PathBuf },
    /// Run diagnostics on a stored solution.
    Diagnose {
        config: PathBuf,
        /// Directory holding u1.fbm, u2.fbm, … (defaults to the output directory).
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Comma separated check names, or "all".
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
    },
    /// Two-component example with boundary data x₂⁻ and x₁⁺ plus the full suite.
    Figure1 {
        #[arg(long, default_value_t = FIGURE1_RESOLUTION)]
        resolution: usize,
        #[arg(long, default_value = "figure1")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Classify two-dimensional homogeneous minimizers via the arc eigenvalue.
    Homogeneous {
        #[arg(long, default_value_t = HOMOGENEOUS_NODES)]
        nodes: usize,
    },
    /// Hodograph transform on an axis-aligned box.
    Hodograph {
        config: PathBuf,
        /// Box as x0,x1,y0,y1; columns run along x₂ from y0.
        #[arg(long, allow_hyphen_values = true)]
        window: String,
        #[arg(long)]
        solution: Option<PathBuf>,
        /// 1-based component to invert (defaults to the largest at the box top).
        #[arg(long)]
        lead: Option<usize>,
        /// Coarse nodes per patch axis; the refined patch has 2n − 1.
        #[arg(long, default_value_t = 5)]
        ny: usize,
    },
}

fn parse_box(s: &str) -> Result<[f64; 4], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--window {s:?}: {e}")))?;
    v.try_into()
        .map_err(|_| CliError::Config(format!("--window {s:?}: expected x0,x1,y0,y1")))
}

fn print(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Solve { config } => {
            let cfg = parse_config(&config)?;
            print(&cmd_solve(&cfg)?);
        }
        Command::Diagnose {
            config,
            solution,
            checks,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(c) = checks {
                cfg.select_checks(&c)?;
            }
            let dir = solution_dir(&cfg, solution);
            cmd_diagnose(&cfg, &dir)?;
            eprintln!("all checks passed; report at {}", dir.join("report.json").display());
        }
        Command::Figure1 {
            resolution,
            out,
            seed,
        } => {
            cmd_figure1(resolution, &out, seed)?;
            eprintln!("all checks passed; artifacts in {}", out.display());
        }
        Command::Homogeneous { nodes } => print(&cmd_homogeneous(nodes)?),
        Command::Hodograph {
            config,
            window,
            solution,
            lead,
            ny,
        } => {
            let cfg = parse_config(&config)?;
            if ny < 5 {
                return Err(CliError::Config("--ny must be at least 5".into()));
            }
            let window = parse_box(&window)?;
            let dir = solution_dir(&cfg, solution);
            let lo = [window[0], window[2]];
            let hi = [window[1], window[3]];
            print(&cmd_hodograph(&cfg, &dir, lo, hi, lead, ny)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fbmin: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
