//! Command-line front end. Exit status: 0 on success, 1 for a bad
//! configuration, 2 when a verification run misses its tolerance.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kpzlab::environment::DisorderKind;
use kpzlab::harness::{self, Format, Report};
use kpzlab::moments::BetaMethod;
use kpzlab::she::NoiseKind;

const DEFAULT_SEED: &str = "1";

#[derive(Parser)]
#[command(
    name = "kpzlab",
    version,
    about = "Weak-disorder random walks, the SHE and Beta-polymer moments"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Rademacher,
    /// Uniform on [−1, 1].
    Uniform,
    /// 2ε^{-1/2}(B − ½), B ~ Beta(1/ε, 1/ε).
    Beta,
}

impl From<Dist> for DisorderKind {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Rademacher => DisorderKind::Rademacher,
            Dist::Uniform => DisorderKind::UniformBounded { a: 1.0 },
            Dist::Beta => DisorderKind::BetaSymmetric,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Gaussian,
    TwoPoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Contour,
    ClosedForm,
}

#[derive(Subcommand)]
enum Command {
    /// Rescaled SSRW probability against its Gaussian limit along ε.
    LdpCheck {
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        v: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        m1: i32,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        m2: i32,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.02")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Walk DP against the chaos expansion on random environments.
    ChaosVerify {
        #[arg(long, default_value_t = 8)]
        n: u64,
        #[arg(long, env = "KPZLAB_SEED", default_value = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Dist::Uniform)]
        dist: Dist,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Exhaustive equality in law of the polymer and the reversed walk.
    LawCheck {
        #[arg(long, default_value_t = 3)]
        n: u64,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo over environments of the rescaled walk probability.
    RwreMc {
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        v: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        replicas: u64,
        #[arg(long, value_enum, default_value_t = Dist::Rademacher)]
        dist: Dist,
        #[arg(long, env = "KPZLAB_SEED", default_value = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Replicas of the finite-difference SHE.
    SheSolve {
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        v: f64,
        #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
        sigma: f64,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, default_value_t = 0.02)]
        dx: f64,
        #[arg(long, default_value_t = 6.0)]
        half_width: f64,
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        #[arg(long, env = "KPZLAB_SEED", default_value = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Noise::Gaussian)]
        noise: Noise,
        #[command(flatten)]
        output: Output,
    },
    /// Rescaled Beta-polymer moments against SHE moments.
    Moments {
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1024)]
        quad_points: usize,
        #[arg(long, default_value_t = 400)]
        she_points: usize,
        #[arg(long, value_enum, default_value_t = Method::Contour)]
        method: Method,
        #[command(flatten)]
        output: Output,
    },
    /// Saddle point of the Beta-polymer exponent and its quadratic expansion.
    CriticalPoint {
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
        #[command(flatten)]
        output: Output,
    },
}

/// Runs the command; the bool says whether failing tolerances are an error.
fn run(command: Command) -> kpzlab::Result<(Report, Output, bool)> {
    Ok(match command {
        Command::LdpCheck {
            v,
            t,
            x,
            m1,
            m2,
            eps,
            tolerance,
            output,
        } => {
            let cfg = harness::LdpCheckConfig {
                v,
                t,
                x,
                m1,
                m2,
                eps,
                tolerance,
            };
            (harness::ldp_check(&cfg)?, output, true)
        }
        Command::ChaosVerify {
            n,
            seed,
            dist,
            eps,
            trials,
            output,
        } => {
            let cfg = harness::ChaosVerifyConfig {
                n,
                seed,
                dist: dist.into(),
                eps,
                trials,
                ..Default::default()
            };
            (harness::chaos_verify(&cfg)?, output, true)
        }
        Command::LawCheck { n, eps, output } => {
            (harness::law_check(&harness::LawCheckConfig { n, eps })?, output, true)
        }
        Command::RwreMc {
            v,
            t,
            x,
            eps,
            replicas,
            dist,
            seed,
            output,
        } => {
            let cfg = harness::RwreMcConfig {
                v,
                t,
                x,
                eps,
                replicas,
                dist: dist.into(),
                seed,
            };
            (harness::rwre_mc(&cfg)?, output, false)
        }
        Command::SheSolve {
            v,
            sigma,
            t,
            x,
            dx,
            half_width,
            replicas,
            seed,
            noise,
            output,
        } => {
            let noise = match noise {
                Noise::Gaussian => NoiseKind::Gaussian,
                Noise::TwoPoint => NoiseKind::TwoPoint,
            };
            let cfg = harness::SheRunConfig {
                v,
                sigma,
                t,
                x,
                dx,
                half_width,
                replicas,
                seed,
                noise,
            };
            (harness::she_run(&cfg)?, output, false)
        }
        Command::Moments {
            k,
            gamma,
            t,
            x,
            eps,
            quad_points,
            she_points,
            method,
            output,
        } => {
            let method = match method {
                Method::Contour => BetaMethod::Contour,
                Method::ClosedForm => BetaMethod::ClosedForm,
            };
            let cfg = harness::MomentsConfig {
                k,
                gamma,
                t,
                x,
                eps,
                quad_points,
                she_points,
                method,
            };
            (harness::moments(&cfg)?, output, false)
        }
        Command::CriticalPoint {
            gamma,
            eps,
            t,
            x,
            output,
        } => {
            let cfg = harness::CriticalPointConfig {
                gamma,
                eps,
                t,
                x,
                ..Default::default()
            };
            (harness::critical_point_run(&cfg)?, output, true)
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("kpzlab: {e}");
            return ExitCode::from(1);
        }
    }
    let (report, output, verify) = match run(cli.command) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("kpzlab: {e}");
            return ExitCode::from(if e.is_config() { 1 } else { 2 });
        }
    };
    let format = match output.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    if let Err(e) = report.write(format, output.out.as_deref()) {
        eprintln!("kpzlab: {e}");
        return ExitCode::from(1);
    }
    if verify && !report.passed {
        eprintln!("kpzlab: {} missed its tolerance", report.manifest.command);
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
