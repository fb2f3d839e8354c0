#![allow(clippy::needless_range_loop)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qpoisson_core::wick::DEFAULT_TERM_BUDGET;
use qpoisson_core::{Error, KernelMethod};

mod commands;
mod output;
mod verify;

use output::{config_hash, ErrorReport, Manifest, RunDir, VERSIONS};

#[derive(Debug, Parser, Serialize)]
#[command(name = "qpoisson", version, about = "Batch runner for the low-density-limit pipeline")]
struct Cli {
    /// Model document (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output directory for artifacts and the run manifest.
    #[arg(long, global = true, default_value = "qpoisson-out")]
    #[serde(skip)]
    out: PathBuf,
    /// Master seed for stochastic commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Term budget for finite-fugacity correlators.
    #[arg(long, global = true, default_value_t = DEFAULT_TERM_BUDGET as u64)]
    budget: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Pv,
    Resolvent,
}

/// Kernel route selection shared by every command that needs `γ`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Pv)]
    pub method: MethodArg,
    /// Resolvent regularization; defaults to the mesh width.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Log-subtraction refinement of the bin rule.
    #[arg(long)]
    pub log_subtraction: bool,
}

impl KernelArgs {
    pub fn method(&self, delta_e: f64) -> KernelMethod {
        match self.method {
            MethodArg::Pv => KernelMethod::PvBins {
                log_subtraction: self.log_subtraction,
            },
            MethodArg::Resolvent => KernelMethod::ResolventEta {
                eta: self.eta.unwrap_or(delta_e),
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InversionArgs {
    #[arg(long, default_value_t = 1e12)]
    pub cond_threshold: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub residual_tol: f64,
}

/// Slot word over the two formfactor letters: `0 ↦ N_{g₀,g₁}`, `1 ↦ N_{g₁,g₀}`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct WordArgs {
    /// Letters `0`/`1`; defaults to the alternating word `0101…` of length `--order`.
    #[arg(long)]
    pub word: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Smearing horizon.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "name")]
enum Command {
    /// Bin-resolved spectral densities of the formfactors.
    Spectral,
    /// Kernel table `γ`, `γ̃` per bin.
    Gamma {
        #[command(flatten)]
        kernel: KernelArgs,
    },
    /// `T₀`, `T₁` and `R_{m,n}` per bin.
    Scattering {
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        inversion: InversionArgs,
    },
    /// S-matrix unitarity defects, optionally across halvings of the mesh width.
    Smatrix {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Number of mesh levels (ΔE, ΔE/2, …).
        #[arg(long, default_value_t = 1)]
        refine: usize,
        /// Occupied bins compared with the Lippmann-Schwinger solve per level.
        #[arg(long, default_value_t = 0)]
        oracle_bins: usize,
    },
    /// Finite-fugacity correlator with per-diagram values.
    Correlator {
        #[command(flatten)]
        word: WordArgs,
        #[arg(long, default_value_t = 0.1)]
        xi: f64,
    },
    /// Causal-limit correlator and block constants.
    Limit {
        #[command(flatten)]
        word: WordArgs,
        #[command(flatten)]
        kernel: KernelArgs,
    },
    /// `|finite-ξ − limit|` over a fugacity sweep with fitted order.
    Converge {
        #[command(flatten)]
        word: WordArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
        xis: Vec<f64>,
    },
    /// Drift `Γ` and `e^{−Γt}`.
    Drift {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// Order-by-order series for `φ_L(U_t)` against `e^{−Γt}`.
    Series {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 4)]
        max_order: usize,
    },
    /// Reduced-dynamics generator, its pre-dual and Choi spectrum.
    Generator {
        #[command(flatten)]
        kernel: KernelArgs,
    },
    /// Density matrices under `e^{tG*}`.
    Evolve {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4")]
        times: Vec<f64>,
        /// Initial state as JSON rows of `{re, im}`; defaults to the first basis projector.
        #[arg(long)]
        rho0: Option<PathBuf>,
    },
    /// Collision Monte Carlo of the quantum Poisson QSDE.
    Mc {
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1000)]
        n_traj: usize,
        #[arg(long)]
        rate_scale: Option<f64>,
        #[arg(long, default_value_t = 1e-8)]
        calibration_threshold: f64,
        #[arg(long)]
        rho0: Option<PathBuf>,
    },
    /// Runs the identity and invariant checks on the model.
    Verify {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectral => "spectral",
            Command::Gamma { .. } => "gamma",
            Command::Scattering { .. } => "scattering",
            Command::Smatrix { .. } => "smatrix",
            Command::Correlator { .. } => "correlator",
            Command::Limit { .. } => "limit",
            Command::Converge { .. } => "converge",
            Command::Drift { .. } => "drift",
            Command::Series { .. } => "series",
            Command::Generator { .. } => "generator",
            Command::Evolve { .. } => "evolve",
            Command::Mc { .. } => "mc",
            Command::Verify { .. } => "verify",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> (String, u8) {
    if let Some(e) = err.downcast_ref::<Error>() {
        let code = match e {
            Error::Config(_) | Error::Model(_) | Error::Argument(_) => 2,
            Error::Resource { .. } => 4,
            _ => 3,
        };
        return (e.kind().to_string(), code);
    }
    if err.downcast_ref::<std::io::Error>().is_some() || err.downcast_ref::<serde_json::Error>().is_some() {
        return ("config".into(), 2);
    }
    ("numerical".into(), 3)
}

fn run(cli: &Cli, dir: &mut RunDir, hash: &mut String) -> anyhow::Result<()> {
    let text = match &cli.model {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read model {}", p.display()))?,
        None => return Err(Error::Config("--model is required".into()).into()),
    };
    let doc = qpoisson_core::ModelDocument::from_json(&text)?;
    let config = serde_json::json!({
        "model": serde_json::to_value(&doc)?,
        "run": serde_json::to_value(cli)?,
    });
    *hash = config_hash(&config);
    let model = doc.load()?;
    let ctx = commands::Context {
        model: &model,
        seed: cli.seed,
        budget: cli.budget as u128,
    };
    match &cli.command {
        Command::Spectral => commands::spectral(&ctx, dir),
        Command::Gamma { kernel } => commands::gamma(&ctx, dir, kernel),
        Command::Scattering { kernel, inversion } => commands::scattering(&ctx, dir, kernel, inversion),
        Command::Smatrix {
            kernel,
            refine,
            oracle_bins,
        } => commands::smatrix(&ctx, dir, kernel, *refine, *oracle_bins),
        Command::Correlator { word, xi } => commands::correlator(&ctx, dir, word, *xi),
        Command::Limit { word, kernel } => commands::limit(&ctx, dir, word, kernel),
        Command::Converge { word, kernel, xis } => commands::converge(&ctx, dir, word, kernel, xis),
        Command::Drift { kernel, t } => commands::drift(&ctx, dir, kernel, *t),
        Command::Series { kernel, t, max_order } => commands::series(&ctx, dir, kernel, *t, *max_order),
        Command::Generator { kernel } => commands::generator(&ctx, dir, kernel),
        Command::Evolve { kernel, times, rho0 } => commands::evolve(&ctx, dir, kernel, times, rho0.as_deref()),
        Command::Mc {
            kernel,
            dt,
            horizon,
            n_traj,
            rate_scale,
            calibration_threshold,
            rho0,
        } => commands::mc(
            &ctx,
            dir,
            kernel,
            commands::McArgs {
                dt: *dt,
                horizon: *horizon,
                n_traj: *n_traj,
                rate_scale: *rate_scale,
                calibration_threshold: *calibration_threshold,
                rho0: rho0.as_deref(),
            },
        ),
        Command::Verify { tol } => verify::verify(&ctx, dir, *tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut dir = match RunDir::create(&cli.out) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let mut hash = String::new();
    let result = run(&cli, &mut dir, &mut hash);
    let (complete, code) = match &result {
        Ok(()) => (true, 0u8),
        Err(e) => {
            let (kind, code) = exit_code(e);
            let report = ErrorReport {
                kind,
                message: format!("{e:#}"),
                exit_code: code,
            };
            eprintln!("error: {}", report.message);
            if let Err(w) = dir.json("error.json", &report) {
                eprintln!("error: {w:#}");
            }
            (false, code)
        }
    };
    let manifest = Manifest {
        command: cli.command.name(),
        config_hash: hash,
        versions: &VERSIONS,
        seed: cli.seed,
        budget: cli.budget,
        wall_time_s: start.elapsed().as_secs_f64(),
        complete,
        artifacts: dir.artifacts().to_vec(),
    };
    if let Err(e) = dir.json("manifest.json", &manifest) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
