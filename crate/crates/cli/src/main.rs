use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use signsteer::scenario::FieldSource;
use signsteer_cli::{self as cli, CliError, SweepAxes};

#[derive(Parser)]
#[command(
    name = "signsteer",
    version,
    about = "Steer the sign-change points of a reaction-diffusion state"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the scenario's `output_dir` or `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the perturbations used by `steer`; recorded in every summary.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full strategy on a scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Steer the scenario's initial state onto its target once.
    Steer {
        #[command(flatten)]
        common: Common,
        /// L² norm of the seeded perturbation added to the initial state.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
    },
    /// Evolve the scenario's initial state without control.
    Diffuse {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        horizon: f64,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Sample a profile with prescribed zeros.
    BuildProfile {
        #[command(flatten)]
        common: Common,
        /// Interior zeros, comma separated; overrides the scenario's target.
        #[arg(long, value_delimiter = ',')]
        zeros: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        signs: Vec<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 400)]
        n_cells: usize,
    },
    /// Track the zeros of a fixture under pure diffusion.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "two-mode")]
        fixture: String,
        #[arg(long, default_value_t = 400)]
        n_cells: usize,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 1e-5)]
        dt: f64,
    },
    /// Run a scenario over a grid of parameters.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n_cells: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
    },
}

fn require(config: Option<PathBuf>) -> Result<PathBuf, CliError> {
    config.ok_or_else(|| CliError::Config(anyhow::anyhow!("--config is required for this command")))
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let o =
                cli::cmd_simulate(&require(common.config)?, common.out.as_deref(), common.seed)?;
            let s = &o.summary;
            Ok(format!(
                "{}: {} rounds, final zeros {:?}, L² error {:.3e} <= {}, outputs in {}",
                s.scenario,
                s.rounds,
                s.final_zeros,
                s.final_l2_error,
                s.eta,
                o.dir.display()
            ))
        }
        Command::Steer { common, perturb } => {
            let o = cli::cmd_steer(
                &require(common.config)?,
                common.out.as_deref(),
                common.seed,
                perturb,
            )?;
            Ok(serde_json::to_string_pretty(&o).expect("report serializes"))
        }
        Command::Diffuse {
            common,
            horizon,
            dt,
        } => {
            let o = cli::cmd_diffuse(&require(common.config)?, common.out.as_deref(), horizon, dt)?;
            Ok(serde_json::to_string_pretty(&o).expect("report serializes"))
        }
        Command::BuildProfile {
            common,
            zeros,
            betas,
            signs,
            rho,
            n_cells,
        } => {
            let (source, n_cells) = if !zeros.is_empty() {
                let source = FieldSource {
                    zeros: Some(zeros),
                    betas: (!betas.is_empty()).then_some(betas),
                    signs: (!signs.is_empty()).then_some(signs),
                    rho,
                    ..FieldSource::default()
                };
                (source, n_cells)
            } else if let Some(path) = common.config {
                let (sc, _) = cli::load_scenario(&path)?;
                (sc.target, sc.grid.n_cells)
            } else {
                return Err(CliError::Config(anyhow::anyhow!(
                    "give --zeros or --config"
                )));
            };
            let out = common.out.unwrap_or_else(|| PathBuf::from("out/profile"));
            let o = cli::cmd_build_profile(&source, n_cells, &out)?;
            Ok(format!(
                "profile with sup {:.4}, |w'| <= {:.4}, |w''| <= {:.4} written to {}",
                o.sup,
                o.sup_d1,
                o.sup_d2,
                o.path.display()
            ))
        }
        Command::Track {
            common,
            fixture,
            n_cells,
            horizon,
            dt,
        } => {
            let out = common.out.unwrap_or_else(|| PathBuf::from("out/track"));
            let o = cli::cmd_track(&fixture, n_cells, horizon, dt, &out)?;
            Ok(match o.max_gap {
                Some(gap) => format!(
                    "final zeros {:?}, max gap to closed form {gap:.3e}",
                    o.final_zeros
                ),
                None => format!("final zeros {:?}", o.final_zeros),
            })
        }
        Command::Sweep {
            common,
            n_cells,
            epsilon,
            eta,
        } => {
            let axes = SweepAxes {
                n_cells,
                epsilon,
                eta,
            };
            let cells = cli::cmd_sweep(
                &require(common.config)?,
                common.out.as_deref(),
                common.seed,
                &axes,
            )?;
            Ok(format!("{} cells completed", cells.len()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
