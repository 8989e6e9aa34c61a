use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hho_core::assembly::NewtonOptions;
use hho_core::cases::CaseKind;
use hho_core::harness::{self, acceptance, RunConfig};
use hho_core::Mesh;

#[derive(Parser)]
#[command(name = "hho-leray", version, about = "HHO convergence studies for degenerate Leray-Lions problems")]
struct Cli {
    /// Caps the number of worker threads.
    #[arg(long, env = "HHO_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs a convergence study on the structured triangular mesh family.
    Run {
        #[arg(long)]
        case: CaseKind,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Degeneracy parameter (nondeg-flux only).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        quad_degree: Option<usize>,
        /// Relative Newton residual tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Directory receiving `<case>.csv` and `<case>.md`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the acceptance criteria and prints one line per criterion.
    Accept {
        /// Reduced mesh sequences for a quick check.
        #[arg(long)]
        smoke: bool,
    },
    /// Prints size and shape statistics of a mesh file.
    MeshInfo { file: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(threads) = cli.threads.filter(|&t| t > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Run { case, p, k, n, delta, quad_degree, tol, out } => {
            let mut config = RunConfig::new(case, p, k, n);
            config.delta = delta;
            config.quad_degree = quad_degree;
            config.out_dir = out;
            if let Some(tol) = tol {
                anyhow::ensure!(tol > 0.0, "--tol must be positive");
                config.newton = NewtonOptions { tolerance: tol, ..NewtonOptions::default() };
            }
            let results = harness::run_study(&config)?;
            print!("{}", harness::to_csv(&results)?);
            println!();
            print!("{}", harness::emit_table(&results));
            Ok(true)
        }
        Command::Accept { smoke } => {
            let mut all = true;
            for outcome in acceptance::run_all(smoke) {
                println!("{outcome}");
                all &= outcome.passed;
            }
            println!("{}", if all { "all criteria passed" } else { "some criteria failed" });
            Ok(all)
        }
        Command::MeshInfo { file } => {
            let mesh = Mesh::load(&file).with_context(|| format!("reading {}", file.display()))?;
            let s = mesh.stats();
            println!("vertices            {}", mesh.vertices().len());
            println!("elements            {}", mesh.num_elements());
            println!("faces               {}", mesh.num_faces());
            println!("boundary faces      {}", mesh.num_boundary_faces());
            println!("internal faces      {}", mesh.num_internal_faces());
            println!("area                {:.12}", mesh.total_area());
            println!("h                   {:.6e}", s.h);
            println!("element diameter    [{:.6e}, {:.6e}]", s.min_element_diameter, s.max_element_diameter);
            println!("min angle (deg)     {:.4}", s.min_angle.to_degrees());
            println!("h_F / h_T           [{:.6}, {:.6}]", s.min_face_element_ratio, s.max_face_element_ratio);
            Ok(true)
        }
    }
}
