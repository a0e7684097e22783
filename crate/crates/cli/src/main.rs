//! `stlf`: train, forecast and evaluate dilated recurrent load forecasters.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use stlf_core::cli_io::{self, RunConfig, SynthConfig};
use stlf_core::network::CellVariant;
use stlf_core::preprocess::DateRange;

#[derive(Parser)]
#[command(name = "stlf", version, about = "Hourly load forecasting with dilated recurrent cells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a `series_id,timestamp,load_mw` CSV and write a dataset store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Write a dataset store back out as CSV.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate triple-seasonal synthetic series as CSV.
    Synth(SynthArgs),
    /// Train an ensemble on all days before the test range.
    Train(TrainArgs),
    /// Write 24 hourly point forecasts and 90% intervals per day.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Restrict to one series; all series by default.
        #[arg(long)]
        series: Option<String>,
        /// First target day (YYYY-MM-DD).
        #[arg(long)]
        from: NaiveDate,
        /// Last target day; defaults to `--from`.
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Score models over the test range and write Table-style reports.
    Evaluate {
        /// Model files; repeat for several.
        #[arg(long = "model", required_unless_present = "baseline")]
        models: Vec<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        /// Test range start; defaults to 1 January of the final year.
        #[arg(long)]
        from: Option<NaiveDate>,
        /// Test range end; defaults to the last day of data.
        #[arg(long)]
        to: Option<NaiveDate>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also score the same-hour-last-week baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Finite-difference gradient checks for one cell.
    Gradcheck {
        /// lstm1|lstm2|gru1|gru2|dlstm|drnn|adrnn
        #[arg(long)]
        cell: CellVariant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the analytic gradients; every case should then fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 4)]
    series: usize,
    /// Length in days, starting 2016-01-01.
    #[arg(long, default_value_t = 1096)]
    days: usize,
    /// Relative noise standard deviation.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    store: PathBuf,
    /// TOML config; see the README for keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// paper|desk, used when no config file is given.
    #[arg(long, default_value = "paper")]
    preset: String,
    /// Overrides the config's cell.
    #[arg(long)]
    cell: Option<CellVariant>,
    /// Overrides the config's ensemble seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Overrides the number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

fn run_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::preset(&args.preset, args.cell.unwrap_or(CellVariant::AdRnn))?,
    };
    if let Some(cell) = args.cell {
        cfg.model.cell = cell;
    }
    if let Some(seeds) = &args.seeds {
        cfg.training.seeds = seeds.clone();
    }
    if let Some(e) = args.epochs {
        cfg.training.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Fails early, naming the path, when an input file is missing.
fn inputs_exist(paths: &[&PathBuf]) -> Result<()> {
    for p in paths {
        anyhow::ensure!(p.is_file(), "input file {} not found", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { input, .. } => inputs_exist(&[input])?,
        Command::Export { store, .. } => inputs_exist(&[store])?,
        Command::Train(a) => inputs_exist(&[&a.store].into_iter().chain(&a.config).collect::<Vec<_>>())?,
        Command::Forecast { model, store, .. } => inputs_exist(&[model, store])?,
        Command::Evaluate { models, store, .. } => inputs_exist(&models.iter().chain([store]).collect::<Vec<_>>())?,
        Command::Synth(_) | Command::Gradcheck { .. } => {}
    }
    match cli.command {
        Command::Ingest { input, store } => {
            let manifest = cli_io::cmd_ingest(&input, &store)?;
            print!("{}", manifest.summary());
        }
        Command::Export { store, output } => cli_io::cmd_export(&store, &output)?,
        Command::Synth(a) => {
            let cfg = SynthConfig { series: a.series, days: a.days, noise: a.noise, seed: a.seed, ..SynthConfig::default() };
            for e in cli_io::cmd_synth(&cfg, &a.output)? {
                println!("{}: {} hours from {} to {}", e.series_id, e.hours, e.start, e.end);
            }
        }
        Command::Train(a) => {
            let cfg = run_config(&a)?;
            let summary = cli_io::cmd_train(&a.store, &cfg, &a.output)?;
            println!(
                "{}: {} samples from {} to {}",
                summary.label, summary.samples, summary.train_range.from, summary.train_range.to
            );
            for m in summary.members {
                for l in &m.log {
                    println!(
                        "  seed {} epoch {:>2}: lr {:.0e}, batch {}, {} updates, loss {:.5}",
                        m.seed, l.epoch, l.learning_rate, l.batch_size, l.updates, l.mean_loss
                    );
                }
                println!("  seed {}: {} updates, final loss {:.5}", m.seed, m.updates, m.final_loss);
            }
        }
        Command::Forecast { model, store, series, from, to, csv, json } => {
            let range = DateRange::new(from, to.unwrap_or(from));
            let rows = cli_io::cmd_forecast(&model, &store, series.as_deref(), range, csv.as_deref(), json.as_deref())?;
            if csv.is_none() && json.is_none() {
                cli_io::write_forecast_csv(std::io::stdout().lock(), &rows)?;
            }
        }
        Command::Evaluate { models, store, from, to, out_dir, baseline } => {
            let range = match (from, to) {
                (Some(f), Some(t)) => Some(DateRange::new(f, t)),
                (None, None) => None,
                _ => bail!("give both --from and --to, or neither"),
            };
            let report = cli_io::cmd_evaluate(&models, &store, range, &out_dir, baseline)?;
            println!("test range {} to {}", report.test_range.from, report.test_range.to);
            for m in &report.models {
                println!(
                    "{:<14} MAPE {:.3}  RMSE {:.2}  in PI {:.2}%  Winkler {:.4}",
                    m.model, m.mean.point.mape, m.mean.point.rmse, m.mean.pi.pi_in, m.mean.pi.winkler_normalized
                );
            }
            println!("reports written to {}", out_dir.display());
        }
        Command::Gradcheck { cell, seed, corrupt } => {
            let s = cli_io::cmd_gradcheck(cell, seed, corrupt)?;
            for c in &s.cases {
                println!("{} {} (max relative error {:.3e}, tolerance {:.0e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.report.max_relative_error, c.tolerance);
                for b in &c.report.blocks {
                    println!("    {:<20} {:>6} checked  worst {:.3e}", b.block, b.checked, b.worst_relative_error);
                }
            }
            if !s.passed {
                bail!("gradient check failed for {} (max relative error {:.3e})", cell.label(), s.max_relative_error);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
