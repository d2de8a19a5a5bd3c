use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use m2x_core::auction::{settle_many, Price};
use m2x_core::identity::AgentId;
use m2x_core::ledger::{FileFault, Ledger};
use m2x_core::sim::{self, Scenario, SimError};

#[derive(Parser)]
#[command(name = "m2xsim", version, about = "EV charging marketplace simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its metrics and ledger.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's own seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Per-EV rows.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Human-readable dump of the ledger.
        #[arg(long)]
        ledger_json: Option<PathBuf>,
    },
    /// Check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Check a ledger file's hash chain and signatures.
    VerifyLedger { path: PathBuf },
    /// Settle a one-shot market given as `id:price` lists.
    Auction {
        #[arg(long, value_delimiter = ',')]
        buyers: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        sellers: Vec<String>,
    },
}

fn parse_bids(entries: &[String]) -> Result<Vec<(AgentId, Price)>> {
    entries
        .iter()
        .filter(|e| !e.is_empty())
        .map(|e| {
            let (id, price) = e
                .rsplit_once(':')
                .with_context(|| format!("expected id:price, got {e:?}"))?;
            let price: u32 = price.parse().with_context(|| format!("bad price in {e:?}"))?;
            Ok((AgentId::new(id), Price(price)))
        })
        .collect()
}

fn run(
    scenario: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    ledger: Option<PathBuf>,
    csv: Option<PathBuf>,
    ledger_json: Option<PathBuf>,
) -> Result<ExitCode> {
    let s = Scenario::load(&scenario)?;
    let outcome = match sim::run_with_seed(&s, seed.unwrap_or(s.seed)) {
        Ok(o) => o,
        Err(SimError::InvalidScenario(vs)) => {
            for v in vs {
                eprintln!("{v}");
            }
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    let metrics = serde_json::to_string_pretty(&outcome.metrics)?;
    match out {
        Some(p) => std::fs::write(&p, metrics).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{metrics}"),
    }
    if let Some(p) = ledger {
        outcome
            .ledger
            .write_to(&p)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = csv {
        let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        outcome.metrics.write_csv(BufWriter::new(f))?;
    }
    if let Some(p) = ledger_json {
        std::fs::write(&p, serde_json::to_string_pretty(&outcome.ledger.to_json())?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("M2XSIM_LOG", "warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            out,
            ledger,
            csv,
            ledger_json,
        } => run(scenario, seed, out, ledger, csv, ledger_json),
        Command::Validate { scenario } => {
            let violations = Scenario::load(&scenario)?.validate();
            if violations.is_empty() {
                println!("ok");
                return Ok(ExitCode::SUCCESS);
            }
            for v in &violations {
                println!("{v}");
            }
            Ok(ExitCode::FAILURE)
        }
        Command::VerifyLedger { path } => {
            let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            match Ledger::verify_bytes(&bytes) {
                Ok(()) => {
                    println!("ok");
                    Ok(ExitCode::SUCCESS)
                }
                Err(FileFault::Block(b)) => {
                    println!("{}", b.index);
                    eprintln!("{b}");
                    Ok(ExitCode::FAILURE)
                }
                Err(e @ FileFault::Header(_)) => {
                    println!("0");
                    eprintln!("{e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Auction { buyers, sellers } => {
            let buyers = parse_bids(&buyers)?;
            let sellers = parse_bids(&sellers)?;
            if buyers.is_empty() && sellers.is_empty() {
                bail!("no bids given");
            }
            println!("{}", serde_json::to_string_pretty(&settle_many(&buyers, &sellers))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
