use std::path::PathBuf;
use std::process::ExitCode;

use blockmg::harness::{self, RunConfig};
use blockmg::{Error, Result, SchemeOrder};
use clap::{Args, Parser, Subcommand};

/// Block-structured AMR multigrid benchmark.
#[derive(Parser, Debug)]
#[command(name = "blockmg", version, about)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the configured problem and report errors, cycles and volume.
    Solve(RunArgs),
    /// Sweep block sizes and schemes and report grid convergence.
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Block sizes, each twice the previous one.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        sizes: Vec<usize>,
        /// Schemes to compare (defaults to all three).
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<SchemeOrder>,
    },
    /// Print the per-exchange communication volume on every multigrid level.
    CommVolume(RunArgs),
    /// Print leaf counts, balance violations and the rank distribution.
    CheckForest(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named configuration: poisson-fig6, fig2 or fig1.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    block_size: Option<usize>,
    /// constant, linear or quadratic.
    #[arg(long)]
    scheme: Option<SchemeOrder>,
    /// Number of simulated ranks.
    #[arg(long)]
    ranks: Option<usize>,
    #[arg(long)]
    max_cycles: Option<usize>,
    #[arg(long)]
    coarse_iters: Option<usize>,
    /// Directory for report and CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_file(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => {
                return Err(Error::Config {
                    field: "config".into(),
                    message: "pass --config <file> or --preset <name>".into(),
                })
            }
        };
        if let Some(n) = self.block_size {
            cfg.block_size = n;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(r) = self.ranks {
            cfg.ranks = r;
        }
        if let Some(c) = self.max_cycles {
            cfg.solver.max_cycles = c;
        }
        if let Some(c) = self.coarse_iters {
            cfg.solver.coarse_iters = c;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.load()?;
            let run = harness::run_solve(&cfg)?;
            let text = run.render();
            print!("{text}");
            if let Some(dir) = &cfg.out {
                harness::write_artifacts(
                    dir,
                    &[
                        ("report.txt", text),
                        ("history.csv", run.history_csv()),
                        ("volume.csv", run.volume_total.to_csv()),
                    ],
                )?;
            }
            Ok(0)
        }
        Command::Convergence { run, sizes, schemes } => {
            let cfg = run.load()?;
            let schemes = if schemes.is_empty() {
                SchemeOrder::ALL.to_vec()
            } else {
                schemes
            };
            let table = harness::run_convergence(&cfg, &sizes, &schemes)?;
            let text = table.render();
            print!("{text}");
            if let Some(dir) = &cfg.out {
                harness::write_artifacts(
                    dir,
                    &[("convergence.txt", text), ("convergence.csv", table.to_csv())],
                )?;
            }
            Ok(0)
        }
        Command::CommVolume(args) => {
            let cfg = args.load()?;
            let csv = harness::comm_volume(&cfg)?.to_csv();
            print!("{csv}");
            if let Some(dir) = &cfg.out {
                harness::write_artifacts(dir, &[("volume.csv", csv)])?;
            }
            Ok(0)
        }
        Command::CheckForest(args) => {
            let cfg = args.load()?;
            let report = harness::check_forest(&cfg)?;
            print!("{}", report.render());
            Ok(if report.violations.is_empty() && report.volume_ok { 0 } else { 3 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
