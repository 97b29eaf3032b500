//! `eqlab`: run equalizer sweeps, extract Pareto fronts and draw figures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eqlab::explore::{
    checks, pareto_table, plot_results, read_results, run_cells, write_outputs, ExperimentConfig, ExperimentResult,
};
use eqlab::registry::Registry;

/// Cell failure fraction above which a sweep exits nonzero.
const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Parser)]
#[command(name = "eqlab", version, about = "Equalizer design-space exploration for simulated optical links")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one (model, seed, SNR) cell.
    Simulate {
        /// Model id from the config grid; the first model when absent.
        #[arg(long)]
        model: Option<String>,
        /// SNR in dB; the first grid value when absent.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Run the full grid and write CSVs, Pareto tables and plots.
    Sweep,
    /// Pareto fronts and budget optima from a results CSV.
    Pareto {
        /// Results CSV written by `sweep`.
        results: PathBuf,
        /// MAC budget; taken from `--config` or 2000 when absent.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Figures from a results CSV.
    Plot {
        results: PathBuf,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Run the oracle and invariant suites.
    Selftest {
        /// Instances per randomized suite.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common.config.as_ref().context("--config is required for this subcommand")?;
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn workers(common: &Common) -> usize {
    common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn budget(common: &Common, explicit: Option<f64>) -> Result<f64> {
    if let Some(b) = explicit {
        return Ok(b);
    }
    match &common.config {
        Some(p) => Ok(ExperimentConfig::load(p)?.mac_budget),
        None => Ok(2000.0),
    }
}

fn report(res: &ExperimentResult) {
    for r in &res.rows {
        println!(
            "{:<14} {:<40} seed {:>3} snr {:>5} macs {:>9.1} ser {:.3e} ber {:.3e}",
            r.scenario, r.model_id, r.seed, r.snr_db, r.macs_per_symbol, r.ser, r.ber
        );
    }
    for f in &res.failures {
        eprintln!("FAILED {} {} seed {} snr {}: {}", f.scenario, f.model_id, f.seed, f.snr_db, f.error);
    }
}

fn finish(res: &ExperimentResult, dir: &Path, cfg: &ExperimentConfig) -> Result<ExitCode> {
    write_outputs(dir, cfg, res)?;
    if !res.rows.is_empty() {
        plot_results(&res.rows, cfg.mac_budget, &dir.join("plots"))?;
    }
    report(res);
    println!("wrote {}", dir.display());
    if res.failure_fraction() > MAX_FAILURE_FRACTION {
        eprintln!(
            "{} of {} cells failed (more than {:.0}%)",
            res.failures.len(),
            res.cells(),
            MAX_FAILURE_FRACTION * 100.0
        );
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest(instances: usize) -> Result<ExitCode> {
    let mut ok = true;
    let mut line = |name: &str, pass: bool, detail: String| {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };
    for snr in [7.5, 8.5, 9.5] {
        let p = checks::awgn_oracle(snr, 1_000_000, 1)?;
        line(
            "awgn",
            p.rel_error() <= 0.1,
            format!("snr {snr} dB ber {:.4e} theory {:.4e}", p.measured, p.theory),
        );
    }
    let h = checks::pcs_entropy()?;
    line("pcs", (h - 4.6).abs() <= 1e-6, format!("entropy {h:.9} bits"));
    for s in checks::gradient_suites(instances)? {
        line(
            "gradient",
            s.max_rel_error < 1e-5,
            format!("{} max rel err {:.2e} over {}", s.name, s.max_rel_error, s.instances),
        );
    }
    let bad = checks::pareto_oracle(instances, 7);
    line("pareto", bad == 0, format!("{bad} mismatches in {instances} instances"));
    let audits = checks::mac_audit(20, 11)?;
    let wrong: Vec<_> = audits.iter().filter(|a| !a.ok()).collect();
    line("macs", wrong.is_empty(), format!("{} of {} models off: {wrong:?}", wrong.len(), audits.len()));
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let c = &cli.common;
    let registry = Registry::default();
    match cli.command {
        Command::Simulate { model, snr } => {
            let mut cfg = load_config(c)?;
            cfg.seeds.truncate(1);
            if cfg.seeds.is_empty() {
                bail!("no seed configured; pass --seed");
            }
            cfg.snr_db = vec![match snr {
                Some(s) => s,
                None => *cfg.snr_db.first().context("empty SNR grid; pass --snr")?,
            }];
            cfg.rates = cfg.rates.map(|mut r| {
                r.gbd.truncate(1);
                r
            });
            let only = match model {
                Some(m) => m,
                None => {
                    let first = cfg.models.first().context("config has no models")?;
                    let fam = match cfg.scenario {
                        eqlab::explore::Scenario::Imdd => registry
                            .expand_imdd(&first.family, &first.params)?
                            .first()
                            .map(|m| m.id()),
                        eqlab::explore::Scenario::CoherentPcs => registry
                            .expand_blind(&first.family, &first.params)?
                            .first()
                            .map(|m| m.id()),
                    };
                    fam.context("first model grid is empty")?
                }
            };
            let res = run_cells(&cfg, &registry, workers(c), Some(&only))?;
            let dir = cfg.out.clone();
            finish(&res, &dir, &cfg)
        }
        Command::Sweep => {
            let cfg = load_config(c)?;
            let res = run_cells(&cfg, &registry, workers(c), None)?;
            let dir = cfg.out.clone();
            finish(&res, &dir, &cfg)
        }
        Command::Pareto { results, budget: b } => {
            let rows = read_results(&results)?;
            let b = budget(c, b)?;
            let table = pareto_table(&rows, b);
            for r in table.iter().filter(|r| r.on_front) {
                println!(
                    "{:<14} snr {:>5} seed {:>4} {:<40} macs {:>9.1} {} {:.3e}{}",
                    r.scenario,
                    r.snr_db,
                    r.seed,
                    r.model_id,
                    r.macs_per_symbol,
                    r.metric,
                    r.value,
                    if r.budget_optimal { "  <- budget optimum" } else { "" }
                );
            }
            if let Some(dir) = &c.out {
                std::fs::create_dir_all(dir)?;
                eqlab::explore::output::write_pareto_csv(&dir.join("pareto.csv"), &table)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { results, budget: b } => {
            let rows = read_results(&results)?;
            let dir = c.out.clone().unwrap_or_else(|| results.with_file_name("plots"));
            for p in plot_results(&rows, budget(c, b)?, &dir)? {
                println!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { instances } => selftest(instances),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
