use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opave_cli::config::{default_output, read_config_file, RunConfig};
use opave_cli::runner::{
    execute_compare, execute_gen, execute_reference, execute_run, CliError,
};

#[derive(Parser)]
#[command(
    name = "opave",
    about = "Benchmark harness for operator-averaged splitting solvers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance file (or one file per pixel for unmixing).
    Gen(GenArgs),
    /// Run one solver on an instance and write a CSV trace plus metadata.
    Run(RunArgs),
    /// Produce a high-accuracy reference solution for an instance file.
    Reference(ReferenceArgs),
    /// Run several method configs on a shared instance and summarize
    /// iterations and seconds to RMSE thresholds.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenArgs {
    /// inverse_integration | unmixing
    #[arg(long)]
    experiment: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target SNR in dB ("inf" for noiseless).
    #[arg(long, default_value = "30")]
    snr_db: String,
    /// Regularization weight for unmixing instances.
    #[arg(long)]
    mu: Option<f64>,
    /// gaussian | synthetic_smooth
    #[arg(long, default_value = "gaussian")]
    dict: String,
    #[arg(long, default_value_t = 5)]
    k_sparse: usize,
    /// Pixel count for unmixing.
    #[arg(long, default_value_t = 1)]
    pixels: usize,
    /// Output file (inverse_integration) or directory (unmixing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Config file; CLI flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    /// fb | pd | pnp | admm | condat
    #[arg(long)]
    solver: Option<String>,
    /// scalar | ssn_variable | fixed_hessian
    #[arg(long)]
    averaging: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps_reg: Option<f64>,
    #[arg(long)]
    band_eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dict: Option<String>,
    #[arg(long)]
    k_sparse: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    record_stride: Option<usize>,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReferenceArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// One config file per method; at least two.
    #[arg(long = "method-config", required = true)]
    method_config: Vec<PathBuf>,
    /// Output directory for per-method CSVs and summary.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_run_config(a: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => read_config_file(path)?,
        None => RunConfig::default(),
    };
    let mut set = |key: &str, v: Option<String>| -> Result<(), CliError> {
        if let Some(v) = v {
            cfg.apply(key, &v)?;
        }
        Ok(())
    };
    set("experiment", a.experiment.clone())?;
    set("solver", a.solver.clone())?;
    set("averaging", a.averaging.clone())?;
    set("lambda", a.lambda.map(|v| v.to_string()))?;
    set("tau", a.tau.map(|v| v.to_string()))?;
    set("gamma", a.gamma.map(|v| v.to_string()))?;
    set("sigma", a.sigma.map(|v| v.to_string()))?;
    set("rho", a.rho.map(|v| v.to_string()))?;
    set("mu", a.mu.map(|v| v.to_string()))?;
    set("eps", a.eps.map(|v| v.to_string()))?;
    set("eps-reg", a.eps_reg.map(|v| v.to_string()))?;
    set("band-eps", a.band_eps.map(|v| v.to_string()))?;
    set("seed", a.seed.map(|v| v.to_string()))?;
    set("snr-db", a.snr_db.clone())?;
    set("n", a.n.map(|v| v.to_string()))?;
    set("dict", a.dict.clone())?;
    set("k-sparse", a.k_sparse.map(|v| v.to_string()))?;
    set("max-iters", a.max_iters.map(|v| v.to_string()))?;
    set("tol", a.tol.map(|v| v.to_string()))?;
    set("record-stride", a.record_stride.map(|v| v.to_string()))?;
    set(
        "instance",
        a.instance.as_ref().map(|p| p.display().to_string()),
    )?;
    set(
        "reference",
        a.reference.as_ref().map(|p| p.display().to_string()),
    )?;
    set("out", a.out.as_ref().map(|p| p.display().to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => {
            let mut cfg = RunConfig::default();
            cfg.apply("experiment", &a.experiment)?;
            cfg.apply("n", &a.n.to_string())?;
            cfg.apply("seed", &a.seed.to_string())?;
            cfg.apply("snr-db", &a.snr_db)?;
            cfg.apply("dict", &a.dict)?;
            cfg.apply("k-sparse", &a.k_sparse.to_string())?;
            if let Some(mu) = a.mu {
                cfg.apply("mu", &mu.to_string())?;
            }
            let out = a.out.unwrap_or_else(|| default_output("instance.txt"));
            let paths = execute_gen(&cfg, a.pixels, &out)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Run(a) => {
            let mut cfg = build_run_config(&a)?;
            if a.out.is_none() && a.config.is_none() {
                cfg.output = default_output("run.csv");
            }
            let artifacts = execute_run(&cfg)?;
            println!(
                "wrote {} ({} iterations, residual {:?})",
                artifacts.csv_path.display(),
                artifacts.trace.iterations,
                artifacts.trace.final_residual()
            );
            println!("wrote {}", artifacts.meta_path.display());
            println!("reference at {}", artifacts.reference_path.display());
            Ok(())
        }
        Command::Reference(a) => {
            let out = a.out.unwrap_or_else(|| default_output("reference.txt"));
            let converged = execute_reference(&a.instance, &out)?;
            println!("wrote {} (converged: {converged})", out.display());
            Ok(())
        }
        Command::Compare(a) => {
            let out = a.out.unwrap_or_else(|| default_output("compare"));
            let summary = execute_compare(&a.method_config, &out)?;
            println!("wrote {}", summary.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
