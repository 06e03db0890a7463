use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddps::cli::{
    cmd_analyze_matrix, cmd_gen_graph, cmd_rate, cmd_run_many, exit_code, RunOverrides, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "ddps", version, about = "Projected subgradient optimization over directed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random strongly connected digraph as an edge list.
    GenGraph {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 0.15)]
        edge_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the solver for one or more configs and write trace CSVs.
    Run {
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        record_every: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Power the augmented mixing matrix and fit its geometric decay.
    AnalyzeMatrix {
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to the capped automatic choice.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        k_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the optimality gap of a trace against ln K / sqrt(K).
    Rate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::GenGraph {
            nodes,
            edge_prob,
            seed,
            out,
        } => report(cmd_gen_graph(nodes, edge_prob, seed, &out)),
        Command::Run {
            config,
            out,
            seed,
            iters,
            record_every,
            jobs,
        } => {
            let overrides = RunOverrides {
                out,
                seed,
                iters,
                record_every,
            };
            let mut code = EXIT_OK;
            for (i, result) in cmd_run_many(&config, &overrides, jobs).into_iter().enumerate() {
                if i > 0 {
                    println!();
                }
                match result {
                    Ok(summary) => println!("{summary}"),
                    Err(e) => {
                        eprintln!("error: {}: {e}", config[i].display());
                        code = code.max(exit_code(&e));
                    }
                }
            }
            code
        }
        Command::AnalyzeMatrix {
            graph,
            epsilon,
            k_max,
            out,
        } => report(cmd_analyze_matrix(&graph, epsilon, k_max, &out)),
        Command::Rate { trace, out } => report(cmd_rate(&trace, out.as_deref()).map(|fit| {
            format!(
                "slope: {}\nr^2: {}\npoints: {}",
                fit.slope, fit.r_squared, fit.points
            )
        })),
    };
    ExitCode::from(code as u8)
}

fn report<T: std::fmt::Display>(result: ddps::Result<T>) -> i32 {
    match result {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
