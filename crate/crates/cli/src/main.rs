use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use efld_lab::commands::{self, exit_code, PlotRequest, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY};
use efld_lab::config::{RunConfig, SweepAxis, SweepSpec};
use efld_lab::runner::resolve_data_dir;
use efld_core::{Error, Result};

#[derive(Parser)]
#[command(name = "efld-lab", version, about = "Train, sweep, verify and plot exponential-family Langevin dynamics runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory holding the MNIST IDX files; falls back to $EFLD_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seeds as `a..b`, `a..=b`, `a,b,c` or one number; `0..run.repeats` by default.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed and write ledgers, aggregates and plots.
    Train(RunArgs),
    /// Train once per sweep value and overlay the results.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep axis; overrides the [sweep] table.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values for --axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Run a property suite: divergences, theorem2, mixture, lemmas, gradients, convergence or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-trial margins here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot columns of ledger CSVs.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "t")]
        x: String,
        #[arg(long, value_delimiter = ',', default_value = "our_bound")]
        y: Vec<String>,
        #[arg(long)]
        log: bool,
        #[arg(long)]
        title: Option<String>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

fn threads(flag: Option<usize>) -> usize {
    flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn train(args: &RunArgs) -> Result<i32> {
    let cfg = RunConfig::load(&args.config)?;
    let seeds = commands::seeds_or_default(args.seeds.as_deref(), &cfg)?;
    let data_dir = resolve_data_dir(args.data_dir.as_deref());
    let out = commands::train(&cfg, &seeds, data_dir.as_deref(), threads(args.threads))?;
    commands::write_train_outputs(&cfg, &out, &args.out)?;
    for w in out.runs.iter().flat_map(|r| &r.warnings).take(1) {
        eprintln!("warning: {w}");
    }
    for r in &out.runs {
        println!("seed {}: train_err {:.4} test_err {:.4}", r.seed, r.final_train_err, r.final_test_err);
    }
    println!(
        "median final our_bound {:.6e}, train_err {:.4}, test_err {:.4}; outputs in {}",
        out.final_median("our_bound"),
        out.final_median("train_err"),
        out.final_median("test_err"),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn sweep(args: &RunArgs, axis: Option<&str>, values: &[f64]) -> Result<i32> {
    let cfg = RunConfig::load(&args.config)?;
    let spec = match (axis, &cfg.sweep) {
        (Some(a), _) => SweepSpec {
            axis: SweepAxis::from_name(a)
                .ok_or_else(|| Error::config(format!("unknown sweep axis `{a}`; expected alpha, beta, corruption_fraction or n")))?,
            values: values.to_vec(),
        },
        (None, Some(s)) => s.clone(),
        (None, None) => return Err(Error::config("no sweep: give --axis and --values or a [sweep] table")),
    };
    let seeds = commands::seeds_or_default(args.seeds.as_deref(), &cfg)?;
    let data_dir = resolve_data_dir(args.data_dir.as_deref());
    let out = commands::sweep(&cfg, &spec, &seeds, data_dir.as_deref(), threads(args.threads))?;
    commands::write_sweep_outputs(&cfg, &out, &args.out)?;
    for arm in &out.arms {
        println!(
            "{}: final our_bound {:.6e}, test_err {:.4}",
            arm.label,
            efld_lab::aggregate::median(&arm.finals("our_bound")),
            efld_lab::aggregate::median(&arm.finals("test_err"))
        );
    }
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(args) => train(&args),
        Command::Sweep { run, axis, values } => sweep(&run, axis.as_deref(), &values),
        Command::Verify { suite, seed, out } => {
            let report = commands::verify(&suite, seed, out.as_deref())?;
            println!("suite {suite}, base seed {seed}");
            print!("{}", report.render());
            Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Plot { csv, x, y, log, title, out } => {
            commands::write_plot(&PlotRequest { csvs: csv, x, y, log_y: log, title }, &out)?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
