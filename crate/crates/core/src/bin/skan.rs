use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use skan::budget::{budget_table, skan_hidden_size, DEFAULT_BUDGET, DEFAULT_SPLINE_ORDER};
use skan::gradcheck::{gradcheck, TOLERANCE};
use skan::harness::{evaluate, RecordWriter};
use skan::mnist::load_mnist;
use skan::network::{format_dims, parse_dims};
use skan::{
    lr_grid, sweep, train_once, BasisId, Exec, GridSpec, Precision, SkanNetwork, Split, SweepPlan,
    TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "skan",
    version,
    about = "Train and benchmark single-parameter KANs on MNIST"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write per-epoch metrics as CSV.
    Train(TrainArgs),
    /// Learning-rate sweep with repeats; writes all runs plus a best-per-lr summary.
    Sweep(SweepArgs),
    /// Compare analytic gradients with finite differences on a small network.
    Gradcheck(GradcheckArgs),
    /// Hidden-layer sizes of a two-layer spline KAN under a parameter budget.
    Budget(BudgetArgs),
    /// Evaluate a saved network checkpoint on the MNIST test split.
    Eval(EvalArgs),
    /// List the basis functions.
    Bases,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value = "lss")]
    basis: BasisId,
    #[arg(long, default_value = "784,100,10")]
    dims: DimsArg,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Directory holding the four standard MNIST IDX files (optionally .gz).
    #[arg(long, default_value = "data/mnist")]
    data_dir: PathBuf,
    /// Train in 32-bit floats.
    #[arg(long)]
    f32: bool,
    /// Run every kernel on the calling thread.
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn precision(&self) -> Precision {
        if self.f32 {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    fn exec(&self) -> Exec {
        if self.deterministic {
            Exec::Deterministic
        } else {
            Exec::Parallel
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.004)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs.csv")]
    out: PathBuf,
    /// Write the trained network here.
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// paper (27 rates), paper30 (19 rates), or LO:HI:N.
    #[arg(long, default_value = "paper")]
    grid: GridSpec,
    /// Repeats per learning rate [default: 10 with --paper, else 1].
    #[arg(long)]
    repeats: Option<usize>,
    /// Reference protocol: `paper` grid, 10 repeats, 10 epochs.
    #[arg(long)]
    paper: bool,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Runs trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    /// Best-per-lr summary [default: <out>.summary.csv].
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "lss")]
    basis: BasisId,
    #[arg(long, default_value = "4,3,2")]
    dims: DimsArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 784)]
    n_in: usize,
    #[arg(long, default_value_t = 10)]
    n_out: usize,
    #[arg(long, default_value_t = DEFAULT_SPLINE_ORDER)]
    spline_order: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "data/mnist")]
    data_dir: PathBuf,
}

/// Layer sizes, comma-separated.
#[derive(Clone, Debug)]
struct DimsArg(Vec<usize>);

impl std::str::FromStr for DimsArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_dims(s).map(DimsArg).map_err(|e| e.to_string())
    }
}

fn csv_writer(path: &Path) -> Result<RecordWriter<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(RecordWriter::new(BufWriter::new(file))?)
}

fn run_train(args: TrainArgs) -> Result<ExitCode> {
    let (train, test) = load_mnist(&args.common.data_dir)?;
    let cfg = TrainConfig {
        basis: args.common.basis,
        dims: args.common.dims.0.clone(),
        lr: args.lr,
        epochs: args.common.epochs,
        batch: args.common.batch,
        seed: args.seed,
        precision: args.common.precision(),
        exec: args.common.exec(),
    };
    let outcome = train_once(&cfg, &train, &test)?;
    let mut w = csv_writer(&args.out)?;
    w.write(&outcome.records)?;
    if let Some(path) = &args.save {
        outcome.network.save(path)?;
    }
    match outcome.final_test_accuracy() {
        Some(acc) => println!(
            "final test accuracy {acc:.4}; rows written to {}",
            args.out.display()
        ),
        None => println!("run diverged; rows written to {}", args.out.display()),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(args: SweepArgs) -> Result<ExitCode> {
    let grid = if args.paper {
        GridSpec::Paper
    } else {
        args.grid.clone()
    };
    let repeats = args.repeats.unwrap_or(if args.paper { 10 } else { 1 });
    let epochs = if args.paper { 10 } else { args.common.epochs };
    let plan = SweepPlan {
        lr_grid: lr_grid(&grid)?,
        repeats,
        epochs,
        basis: args.common.basis,
        dims: args.common.dims.0.clone(),
        seed_base: args.seed_base,
        batch: args.common.batch,
        precision: args.common.precision(),
        exec: args.common.exec(),
        jobs: args.jobs,
    };
    println!(
        "sweep {} {}: {} learning rates x {} repeats x {} epochs",
        plan.basis,
        format_dims(&plan.dims),
        plan.lr_grid.len(),
        plan.repeats,
        plan.epochs
    );
    let (train, test) = load_mnist(&args.common.data_dir)?;
    let mut w = csv_writer(&args.out)?;
    let result = sweep(&plan, &train, &test, |rows| w.write(rows))?;
    let summary_path = args
        .summary
        .unwrap_or_else(|| args.out.with_extension("summary.csv"));
    csv_writer(&summary_path)?.write(&result.summary)?;
    for row in result.summary.iter().filter(|r| r.split == Split::Test) {
        match row.metrics {
            Some(m) => println!(
                "lr {:<8} seed {:<3} test acc {:.4} f1 {:.4}",
                row.lr, row.seed, m.accuracy, m.f1
            ),
            None => println!("lr {:<8} diverged", row.lr),
        }
    }
    println!(
        "runs: {}  summary: {}",
        args.out.display(),
        summary_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let report = gradcheck(args.basis, &args.dims.0, args.seed)?;
    println!(
        "{} {}: checked {} parameters, skipped {} near kinks, max rel err {:.3e} (tolerance {:.0e})",
        report.basis,
        format_dims(&report.dims),
        report.checked,
        report.skipped,
        report.max_rel_err,
        TOLERANCE
    );
    if report.passed() {
        println!("PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        if let Some((l, i, j)) = report.worst {
            println!("worst parameter: layer {l}, k[{i},{j}]");
        }
        println!("FAIL");
        Ok(ExitCode::FAILURE)
    }
}

fn run_budget(args: BudgetArgs) -> Result<ExitCode> {
    let rows = budget_table(args.budget, args.n_in, args.n_out, args.spline_order, 1..=5)?;
    println!(
        "budget {} for [{}, hidden, {}], spline order {}",
        args.budget, args.n_in, args.n_out, args.spline_order
    );
    println!("{:>9} {:>7} {:>10}", "grid", "hidden", "params");
    for r in rows {
        println!("{:>9} {:>7} {:>10}", r.grid_size, r.hidden, r.params);
    }
    let skan = skan_hidden_size(args.budget, args.n_in, args.n_out)?;
    println!(
        "{:>9} {:>7} {:>10}",
        "skan",
        skan,
        (args.n_in + args.n_out) * skan
    );
    Ok(ExitCode::SUCCESS)
}

fn run_eval(args: EvalArgs) -> Result<ExitCode> {
    let net = SkanNetwork::<f64>::load(&args.checkpoint)?;
    let (_, test) = load_mnist(&args.data_dir)?;
    if net.dims().first() != Some(&784) || net.dims().last() != Some(&10) {
        bail!(
            "checkpoint dims {} do not map 784 pixels to 10 classes",
            format_dims(net.dims())
        );
    }
    let m = evaluate(&net, &test, Split::Test, Exec::Parallel)?;
    println!(
        "{} {}: test loss {:.4} accuracy {:.4} f1 {:.4}",
        net.basis().map_or("?", BasisId::cli_name),
        format_dims(net.dims()),
        m.loss,
        m.accuracy,
        m.f1
    );
    Ok(ExitCode::SUCCESS)
}

fn run_bases() -> Result<ExitCode> {
    for (b, t) in skan::basis::list_trainable() {
        println!("{:<14} {:<18} {:?}", b.cli_name(), b.display_name(), t);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Budget(a) => run_budget(a),
        Command::Eval(a) => run_eval(a),
        Command::Bases => run_bases(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
