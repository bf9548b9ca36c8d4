use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpmi::data::{gen_skewed_purchases, save_csv_dataset};
use dpmi::dp::{account_training, default_orders, expected_steps};
use dpmi::experiment::{persist, report_summary, sweep, DatasetSpec, ExperimentConfig};
use dpmi::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dpmi",
    version,
    about = "Membership inference against LDP and CDP models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Gen {
        /// Dataset spec JSON (`{"generator": "carts", ...}`).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path. Skewed data writes `<stem>_train.csv` and
        /// `<stem>_test.csv` next to it.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one configuration: the unprotected reference plus the configured
    /// privacy mode.
    Run(RunArgs),
    /// Run the reference and every point of the config's sweep grid.
    Sweep(RunArgs),
    /// Query the RDP accountant for DP-SGD training.
    Account(AccountArgs),
    /// Summarize a results directory.
    Report {
        #[arg(long, env = "DPMI_OUT")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to $DPMI_OUT).
    #[arg(long, env = "DPMI_OUT")]
    out: PathBuf,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace rows of an experiment id already in results.csv.
    #[arg(long)]
    force: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct AccountArgs {
    /// Training set size.
    #[arg(long)]
    records: usize,
    /// Lot size.
    #[arg(long)]
    batch: usize,
    #[arg(long)]
    epochs: usize,
    /// Noise multiplier z.
    #[arg(long)]
    noise: f64,
    /// Defaults to 1 / records.
    #[arg(long)]
    delta: Option<f64>,
    /// Overrides the step count derived from records, batch and epochs.
    #[arg(long)]
    steps: Option<u64>,
}

fn gen(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::Io {
        path: config.into(),
        source: e,
    })?;
    let mut spec: DatasetSpec = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: config.into(),
        source: e,
    })?;
    if let Some(s) = seed {
        match &mut spec {
            DatasetSpec::Skewed(x) => x.seed = s,
            DatasetSpec::Carts(x) => x.seed = s,
            DatasetSpec::Gray(x) => x.seed = s,
            DatasetSpec::Csv { .. } => {}
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    match &spec {
        DatasetSpec::Skewed(s) => {
            let (train, test) = gen_skewed_purchases(s)?;
            let stem = out.file_stem().unwrap_or_default().to_string_lossy();
            for (part, ds) in [("train", &train), ("test", &test)] {
                let p = out.with_file_name(format!("{stem}_{part}.csv"));
                save_csv_dataset(ds, &p)?;
                println!("wrote {} ({} records)", p.display(), ds.len());
            }
        }
        DatasetSpec::Csv { .. } => {
            return Err(Error::Config(
                "gen needs a generator spec, not a CSV source".into(),
            ))
        }
        other => {
            let ds = other.load()?.data;
            save_csv_dataset(&ds, out)?;
            println!("wrote {} ({} records)", out.display(), ds.len());
        }
    }
    Ok(())
}

fn run(args: &RunArgs, as_sweep: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if as_sweep && cfg.sweep.is_none() {
        return Err(Error::Config("config has no `sweep` grid".into()));
    }
    if !as_sweep {
        cfg.sweep = None;
    }
    let out = sweep(&cfg, args.jobs)?;
    persist(&cfg, &out, &args.out, args.force)?;
    let failed = out.rows.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{}: {} rows written to {}{}",
        cfg.id,
        out.rows.len(),
        args.out.display(),
        if failed > 0 {
            format!(" ({failed} failed)")
        } else {
            String::new()
        }
    );
    Ok(())
}

fn account(a: &AccountArgs) -> Result<()> {
    let steps = match a.steps {
        Some(s) => s,
        None => expected_steps(a.records, a.batch, a.epochs)?,
    };
    if a.records == 0 {
        return Err(Error::InvalidParameter("records must be positive".into()));
    }
    let q = a.batch.min(a.records) as f64 / a.records as f64;
    let delta = a.delta.unwrap_or(1.0 / a.records as f64);
    let spent = account_training(q, a.noise, steps, delta, &default_orders())?;
    println!("q={q} steps={steps} z={} delta={delta}", a.noise);
    println!("epsilon={} (order {})", spent.epsilon, spent.order);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen { config, out, seed } => gen(config, out, *seed),
        Command::Run(a) => run(a, false),
        Command::Sweep(a) => run(a, true),
        Command::Account(a) => account(a),
        Command::Report { out } => report_summary(out).map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
