//! `vibronic`: surfaces, degeneracies, couplings, geometric phases and fits
//! for complex Jahn–Teller models, written as CSV or JSON tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::RunConfig;

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "VIBRONIC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "vibronic", version, about = "Complex Jahn-Teller / pseudo-Jahn-Teller resonance toolkit", long_about = None)]
struct Cli {
    /// JSON run configuration supplying defaults for any flag (unknown keys are rejected).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Output {
    /// Output file (written atomically); standard output when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RegionArgs {
    #[arg(long)]
    pub rho_min: Option<f64>,
    #[arg(long)]
    pub rho_max: Option<f64>,
    /// Degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub phi_min: Option<f64>,
    /// Degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub phi_max: Option<f64>,
    /// Radial spacing of the coarse scan.
    #[arg(long)]
    pub d_rho: Option<f64>,
    /// Angular spacing of the coarse scan (degrees).
    #[arg(long)]
    pub d_phi: Option<f64>,
    /// Radius beyond which results are flagged as extrapolated.
    #[arg(long)]
    pub validity_radius: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Adiabatic surfaces on a grid: qx,qy,re_v1,im_v1,…,rigidity.
    Surface {
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        /// qx=min:max:n,qy=min:max:n or rho=min:max:n,phi=min:max:n (degrees).
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Closed-form surfaces along the qy = 0 slice.
    Slice {
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        /// min:max:n.
        #[arg(long, allow_hyphen_values = true)]
        qx: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Geometric phase of the two lowest states around a circle.
    Berry {
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        /// qx,qy.
        #[arg(long, allow_hyphen_values = true)]
        center: Option<String>,
        #[arg(long)]
        radius: Option<f64>,
        /// Initial number of loop points (refined automatically, at least 16).
        #[arg(long)]
        points: Option<usize>,
        /// Start angle on the loop (degrees).
        #[arg(long, allow_hyphen_values = true)]
        start: Option<f64>,
        /// line-integral or holonomy.
        #[arg(long)]
        method: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Nonadiabatic couplings on a grid.
    Nac {
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// perturbative, numeric or analytic (two-state model; indices follow the closed-form frame).
        #[arg(long)]
        method: Option<String>,
        /// single-valued or raw.
        #[arg(long)]
        gauge: Option<String>,
        /// Finite-difference step of the numeric method.
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Conical intersections and exceptional points in an annular sector.
    FindEp {
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[command(flatten)]
        region: RegionArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Seams where the real or the imaginary parts of V1 and V2 coincide.
    Seams {
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[command(flatten)]
        region: RegionArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Fit slice data (qx,branch,eps_n,gamma_n,v_ion) with the pjt or jt model.
    Fit {
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// pjt or jt.
        #[arg(long)]
        model: Option<String>,
        /// 2 or 3 (pjt only).
        #[arg(long)]
        order: Option<u8>,
        /// Parameter file used as the starting point.
        #[arg(long, value_name = "FILE")]
        init: Option<PathBuf>,
        #[arg(long)]
        weight_re: Option<f64>,
        #[arg(long)]
        weight_im: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Breit-Wigner fit of a time-delay curve (e,ddelta_de).
    BwFit {
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// Number of resonances.
        #[arg(long)]
        n_res: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Seeded synthetic data: slice samples from --params, or a time-delay curve from --resonances.
    Synth {
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        /// Slice grid min:max:n.
        #[arg(long, allow_hyphen_values = true)]
        qx: Option<String>,
        /// Time-delay resonances position:width,….
        #[arg(long)]
        resonances: Option<String>,
        /// Constant background of the time delay.
        #[arg(long, allow_hyphen_values = true)]
        background: Option<f64>,
        /// Energy grid min:max:n of the time delay.
        #[arg(long, allow_hyphen_values = true)]
        energies: Option<String>,
        /// Gaussian noise standard deviation.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        v_ion: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Check parameter and data files against their schemas without computing.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), commands::Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| vibronic::Error::Schema(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        vibronic::init_thread_pool(n)?;
    }
    use commands as c;
    match cli.command {
        Command::Surface { params, grid, output } => c::surface(&cfg, params, grid, output),
        Command::Slice { params, qx, output } => c::slice(&cfg, params, qx, output),
        Command::Berry {
            params,
            center,
            radius,
            points,
            start,
            method,
            output,
        } => c::berry(&cfg, c::BerryArgs {
            params,
            center,
            radius,
            points,
            start,
            method,
            output,
        }),
        Command::Nac {
            params,
            grid,
            method,
            gauge,
            step,
            output,
        } => c::nac(&cfg, c::NacArgs {
            params,
            grid,
            method,
            gauge,
            step,
            output,
        }),
        Command::FindEp { params, region, output } => c::find_ep(&cfg, params, region, output),
        Command::Seams { params, region, output } => c::seams(&cfg, params, region, output),
        Command::Fit {
            data,
            model,
            order,
            init,
            weight_re,
            weight_im,
            max_iter,
            output,
        } => c::fit(&cfg, c::FitArgs {
            data,
            model,
            order,
            init,
            weight_re,
            weight_im,
            max_iter,
            output,
        }),
        Command::BwFit { data, n_res, max_iter, output } => c::bw_fit(&cfg, data, n_res, max_iter, output),
        Command::Synth {
            params,
            qx,
            resonances,
            background,
            energies,
            sigma,
            seed,
            v_ion,
            output,
        } => c::synth(&cfg, c::SynthArgs {
            params,
            qx,
            resonances,
            background,
            energies,
            sigma,
            seed,
            v_ion,
            output,
        }),
        Command::Validate { files, out } => c::validate(&cfg, files, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Report(code)) => ExitCode::from(code),
        Err(commands::Failure::Error(e)) => {
            let mut body = json!({
                "kind": e.kind(),
                "message": e.to_string(),
                "exit_code": e.exit_code(),
            });
            if let vibronic::Error::NonConvergence { iterations, sse, best } = &e {
                body["iterations"] = json!(iterations);
                body["sse"] = vibronic::io::num(*sse);
                body["best"] = json!(best.iter().map(|x| vibronic::io::num(*x)).collect::<Vec<_>>());
            }
            if let vibronic::Error::Refinement { segment, .. } = &e {
                body["segment"] = json!([segment.0, segment.1]);
            }
            eprint!("{}", vibronic::io::to_json_string(&json!({ "error": body })));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
