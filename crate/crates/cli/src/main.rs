//! `efcil`: generate datasets, run strategies, sweep hyperparameters and
//! summarize results.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use efcil_core::data::{generate_synthetic, save_dataset, DatasetFormat, Protocol, SyntheticSpec};
use efcil_core::harness::{self, Overrides, SweepGrid};
use efcil_core::strategy::{DistillMode, EvalMode, ReferenceCache, Strategy};
use efcil_core::{Error, Result};

#[derive(Parser)]
#[command(name = "efcil", version, about = "Exemplar-free class-incremental learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to disk.
    GenData(GenData),
    /// Run one strategy on one protocol for each seed.
    Run(RunArgs),
    /// Repeat a run over a grid of alpha, beta or tau, or the ablation grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `alpha=0.5,1,2`, `beta=...`, `tau=...` or `ablation`.
        #[arg(long)]
        grid: String,
    },
    /// Aggregate the run records in a directory into curves and a summary.
    Report { dir: PathBuf },
    /// Side-by-side table of several run directories.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Print JSON with rank fields instead of the text table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct GenData {
    /// JSON synthetic spec; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "binary")]
    format: DatasetFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `B<init>-<steps>`, e.g. B4-2.
    #[arg(long)]
    protocol: Option<Protocol>,
    /// finetune, featstar or rad.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// heads or nme.
    #[arg(long)]
    eval_mode: Option<EvalMode>,
    /// kl or l2.
    #[arg(long)]
    distill_mode: Option<DistillMode>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn experiment(&self) -> Result<harness::ExperimentConfig> {
        let overrides = Overrides {
            protocol: self.protocol,
            strategy: self.strategy,
            seed: self.seed,
            seeds: self.seeds.clone(),
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau,
            eval_mode: self.eval_mode,
            distill_mode: self.distill_mode,
            out: self.out.clone(),
            workers: self.workers,
        };
        harness::parse_config(self.config.as_deref(), &overrides)
    }
}

fn gen_data(args: &GenData) -> Result<()> {
    let mut spec: SyntheticSpec = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid spec {}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(v) = args.classes {
        spec.n_classes = v;
    }
    if let Some(v) = args.side {
        spec.side = v;
    }
    if let Some(v) = args.samples {
        spec.samples_per_class = v;
    }
    if let Some(v) = args.noise {
        spec.noise_sigma = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    let ds = generate_synthetic(&spec)?;
    save_dataset(&ds, &args.out, args.format)?;
    println!(
        "wrote {} samples ({} classes, {}x{}) to {}  sha256 {}",
        ds.samples().len(),
        ds.n_classes(),
        ds.side(),
        ds.side(),
        args.out.display(),
        ds.content_hash()
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn run(args: &RunArgs) -> Result<i32> {
    let config = args.experiment()?;
    let outcome = harness::run_experiment(&config, &ReferenceCache::new())?;
    for r in &outcome.records {
        println!(
            "{}  avg_acc {:.4}  F_T {}  I_T {}  ({:.1}s)",
            config.run_stem(r.seed),
            r.metrics.avg_acc,
            fmt_opt(r.metrics.final_forgetting()),
            fmt_opt(r.metrics.final_intransigence()),
            r.wall_clock_secs
        );
    }
    for f in &outcome.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    println!("records in {}", config.out.display());
    Ok(outcome.exit_code())
}

fn sweep(args: &RunArgs, grid: &str) -> Result<i32> {
    let config = args.experiment()?;
    let grid = SweepGrid::parse(grid)?;
    let outcome = harness::sweep(&config, &grid, &ReferenceCache::new(), Some(&config.out))?;
    print!("{}", outcome.table(grid == SweepGrid::Ablation));
    for (point, f) in &outcome.failures {
        eprintln!("{point} seed {} failed: {}", f.seed, f.error);
    }
    Ok(outcome.failures.first().map_or(0, |(_, f)| f.exit_code))
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenData(args) => gen_data(&args).map(|_| 0),
        Command::Run(args) => run(&args),
        Command::Sweep { run, grid } => sweep(&run, &grid),
        Command::Report { dir } => {
            let report = harness::report(&dir)?;
            print!("{}", report.summary_text());
            Ok(0)
        }
        Command::Compare { dirs, json } => {
            let table = harness::compare(&dirs)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.text());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
