mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CommandError, Run};

#[derive(Parser)]
#[command(name = "droplet", version, about = "Harmonic maps into S² on the unit ball with tangential anchoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel loops
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fixed-order reductions for byte-identical output
    #[arg(long, global = true)]
    deterministic: bool,
    /// Print the summary as JSON
    #[arg(long, global = true)]
    json: bool,
    /// Grid size override (grid.m for solve2d, grid.n for solve3d and extend-check)
    #[arg(long, global = true)]
    resolution: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the reduced axisymmetric energy
    Solve2d(Common),
    /// Minimize the full 3D energy on a Cartesian grid
    Solve3d(Common),
    /// Exact energy bounds and their quadrature checks
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Shift the quadrature values by 5% to exercise the checker
        #[arg(long)]
        perturb: bool,
    },
    /// Reflection identities and the exterior energy equality
    ExtendCheck(Common),
    /// Density profile and monotonicity fit at a point
    Monotonicity(Common),
    /// Dyadic symmetrization of the non-equivariant fixture
    Symmetrize(Common),
    /// Scan for high-density points
    Defects(Common),
}

fn execute(name: &str, common: &Common, run: impl FnOnce(&config::Config) -> Result<Run, CommandError>) -> ExitCode {
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    droplet_core::par::set_deterministic(common.deterministic);
    let result = commands::load_config(name, common.config.as_deref(), common.resolution).and_then(|c| run(&c));
    let run = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(match e {
                CommandError::Runtime(_) => 3,
                _ => 2,
            });
        }
    };
    if let Err(e) = run.outputs.commit(&common.out) {
        eprintln!("error: writing {}: {e}", common.out.display());
        return ExitCode::from(3);
    }
    if common.json {
        println!("{}", serde_json::to_string_pretty(&run.to_json()).unwrap_or_default());
    } else {
        print!("{}", run.to_text());
    }
    if run.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve2d(c) => execute("solve2d", c, commands::solve2d),
        Command::Solve3d(c) => execute("solve3d", c, commands::solve3d),
        Command::Bounds { common, perturb } => execute("bounds", common, |c| commands::bounds(c, *perturb)),
        Command::ExtendCheck(c) => execute("extend-check", c, commands::extend_check),
        Command::Monotonicity(c) => execute("monotonicity", c, commands::monotonicity),
        Command::Symmetrize(c) => execute("symmetrize", c, commands::symmetrize_cmd),
        Command::Defects(c) => execute("defects", c, commands::defects),
    }
}
