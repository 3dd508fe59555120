use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nwi::bench::{self, BenchConfig};
use nwi::commands::{self, AdjointTamper, Engine};
use nwi::config::RunConfig;
use nwi::io::MapFormat;
use nwi::NwiError;

#[derive(Parser)]
#[command(name = "nwi", version, about = "Nonlinear waveform inversion for quantitative ultrasound")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured noise seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Nwi,
    Fwi,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Nwimap,
    Csv,
    Pgm,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured phantom's four property maps.
    Phantom,
    /// Record channel data for every planned emission.
    Simulate {
        /// Property maps to simulate through; the configured phantom when
        /// omitted.
        #[arg(long)]
        maps: Option<PathBuf>,
    },
    /// Check adjoint gradients against finite differences.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt_adjoint: Option<f64>,
    },
    /// Reconstruct property maps from recorded channel data.
    Invert {
        #[arg(value_enum)]
        engine: EngineArg,
        /// Directory written by `simulate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// NRMSE of estimated maps against reference maps.
    Eval {
        /// Directory holding the estimated maps.
        #[arg(long)]
        est: PathBuf,
        /// Directory holding the reference maps.
        #[arg(long)]
        truth: PathBuf,
        /// Score the absorbing layer as well.
        #[arg(long)]
        include_pml: bool,
    },
    /// Convert property maps to another format.
    Export {
        /// Directory holding the maps to convert.
        #[arg(long)]
        maps: PathBuf,
        #[arg(long, value_enum, default_value = "pgm")]
        format: FormatArg,
    },
    /// Time the adjoint engine and the matrix-form baseline.
    Bench {
        /// Timed runs per size; the median is reported.
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn list(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let out = cli.out.as_path();
    let say = !cli.quiet;
    match cli.command {
        Command::Phantom => {
            let files = commands::phantom(&cfg, out)?;
            if say {
                list(&files);
            }
        }
        Command::Simulate { maps } => {
            let report = commands::simulate(&cfg, maps.as_deref(), out)?;
            if say {
                for ((f, seed), peak) in report.files.iter().zip(&report.seeds).zip(&report.peaks) {
                    println!("wrote {} (seed {seed:#018x}, peak {peak:.3e} Pa)", f.display());
                }
            }
        }
        Command::Gradcheck { corrupt_adjoint } => {
            let tamper = corrupt_adjoint.map_or(AdjointTamper::None, AdjointTamper::Scale);
            let report = commands::gradcheck(&cfg, tamper)?;
            if say {
                print!("{}", report.table());
            }
            if !report.passed() {
                let failed: Vec<&str> = report.rows.iter().filter(|r| !r.passed).map(|r| r.property.name()).collect();
                return Err(NwiError::GradcheckFailed(failed.join(", ")).into());
            }
        }
        Command::Invert { engine, data } => {
            let engine = match engine {
                EngineArg::Nwi => Engine::Nwi,
                EngineArg::Fwi => Engine::Fwi,
            };
            let report = commands::invert(&cfg, &data, out, engine)
                .with_context(|| format!("{} inversion of {}", engine.name(), data.display()))?;
            if say {
                for (i, l) in report.outcome.round_losses.iter().enumerate() {
                    println!("round {i:>3}  loss {l:.6e}");
                }
                list(&report.files);
            }
        }
        Command::Eval {
            est,
            truth,
            include_pml,
        } => {
            let width = (!include_pml).then_some(cfg.pml.width);
            let scores = commands::eval(&est, &truth, &cfg.bounds(), width)?;
            if say {
                print!("{}", commands::eval_table(&scores));
            }
        }
        Command::Export { maps, format } => {
            let format = match format {
                FormatArg::Nwimap => MapFormat::Nwimap,
                FormatArg::Csv => MapFormat::Csv,
                FormatArg::Pgm => MapFormat::Pgm,
            };
            let files = commands::export(&cfg, &maps, out, format)?;
            if say {
                list(&files);
            }
        }
        Command::Bench { repetitions } => {
            let bcfg = BenchConfig {
                repetitions,
                ..BenchConfig::default()
            };
            let report = bench::run(&bcfg)?;
            let files = report.write(out)?;
            if say {
                print!("{}", report.summary());
                list(&files);
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
