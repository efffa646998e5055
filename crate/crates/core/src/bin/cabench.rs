use std::path::PathBuf;
use std::process::ExitCode;

use caratheodory::bench::{self, verify, ExperimentConfig};
use caratheodory::data;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cabench", about = "Run recombination-accelerated optimizer experiments")]
struct Cli {
    /// Output directory (file path for gen-data).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every optimizer in a config.
    Run { config: PathBuf },
    /// Run the (gamma, n) grid of a config.
    Sweep { config: PathBuf },
    /// Check invariants on seeded instances.
    Verify,
    /// Write a generated dataset as CSV, e.g. `gen-data dataset_a n=1000 d=50`.
    GenData { generator: String, params: Vec<String> },
}

fn load(path: &std::path::Path, seed: Option<u64>) -> caratheodory::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    Ok(cfg)
}

fn gen_data(generator: &str, params: &[String], seed: Option<u64>, out: Option<PathBuf>) -> caratheodory::Result<PathBuf> {
    let (mut n, mut d, mut s) = (1000usize, 0usize, seed.unwrap_or(0));
    for p in params {
        let bad = || caratheodory::Error::InvalidConfig(format!("bad parameter {p:?}, expected n=, d= or seed="));
        let (k, v) = p.split_once('=').ok_or_else(bad)?;
        match k {
            "n" => n = v.parse().map_err(|_| bad())?,
            "d" => d = v.parse().map_err(|_| bad())?,
            "seed" if seed.is_none() => s = v.parse().map_err(|_| bad())?,
            "seed" => {}
            _ => return Err(bad()),
        }
    }
    let data = data::generate(generator, n, d, s)?;
    let path = out.unwrap_or_else(|| PathBuf::from(format!("{generator}.csv")));
    bench::write_dataset_csv(&data, &path)?;
    Ok(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.cmd {
        Cmd::Run { config } => load(&config, cli.seed).and_then(|cfg| {
            let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
            let s = bench::run(&cfg, &out)?;
            for o in &s.optimizers {
                match &o.error {
                    None => println!(
                        "{:<12} loss {:.6e}  fpe {:>10.3}  time {:.3}s  recombinations {}",
                        o.label,
                        o.final_loss.unwrap_or(f64::NAN),
                        o.full_pass_equivalent,
                        o.wall_clock_s,
                        o.recombinations
                    ),
                    Some(e) => println!("{:<12} error: {e}", o.label),
                }
            }
            println!("wrote {}", out.display());
            Ok(())
        }),
        Cmd::Sweep { config } => load(&config, cli.seed).and_then(|cfg| {
            let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
            for r in bench::sweep(&cfg, &out)? {
                println!(
                    "gamma {:<8} n {:<8} time ratio {:>8.2}  fpe ratio {:>8.2}",
                    r.gamma, r.n, r.time_ratio, r.fpe_ratio
                );
            }
            println!("wrote {}", out.join("aggregate.csv").display());
            Ok(())
        }),
        Cmd::Verify => {
            let checks = verify::run_all(cli.seed.unwrap_or(0));
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                return ExitCode::FAILURE;
            }
        }
        Cmd::GenData { generator, params } => gen_data(&generator, &params, cli.seed, cli.out.clone()).map(|p| {
            println!("wrote {}", p.display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
