use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use safekeeper_harness::bench::{self, CountingAlloc, Target};
use safekeeper_harness::model_check::{self, ModelConfig};
use safekeeper_harness::{scenarios, vectors};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

#[derive(Parser)]
#[command(
    name = "harness",
    about = "Runs SafeKeeper scenarios, attacks and benchmarks on a virtual clock"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Names of the built-in scenarios.
    List,
    /// Runs one scenario; exits non-zero if any assertion fails.
    Run {
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Prints the full report as JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Throughput of `enclave-raw` or `server-path`, plus heap per salt.
    Bench {
        target: Target,
        /// Seconds of wall-clock measurement.
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
        /// Distinct salts for the memory measurement; 0 skips it.
        #[arg(long, default_value_t = 1_000_000)]
        salts: usize,
    },
    /// Exhaustive search of the replication protocol.
    ModelCheck {
        #[arg(long, default_value_t = 3)]
        replicas: usize,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        /// Prints the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Writes the known-answer vectors shared with the browser demo.
    Vectors {
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            for name in scenarios::list() {
                println!("{name}");
            }
        }
        Command::Run { scenario, seed, json } => {
            let report = match scenarios::run_scenario(&scenario, seed) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                print!("{}", report.render());
            }
            if !report.passed {
                return ExitCode::FAILURE;
            }
        }
        Command::Bench {
            target,
            duration,
            salts,
        } => {
            let t = bench::throughput(target, Duration::from_secs_f64(duration));
            println!(
                "{}: {} operations in {:.2} s = {:.0}/s",
                serde_json::to_value(t.target).unwrap().as_str().unwrap(),
                t.operations,
                t.seconds,
                t.per_second
            );
            for n in [0, salts] {
                if n == 0 && salts == 0 {
                    continue;
                }
                match bench::memory(n) {
                    Some(m) => println!(
                        "memory at {} salts: baseline {} B, loaded {} B, {:.1} B/salt",
                        m.salts, m.baseline_bytes, m.loaded_bytes, m.bytes_per_salt
                    ),
                    None => println!("memory: counting allocator not installed"),
                }
            }
        }
        Command::ModelCheck { replicas, depth, json } => {
            let report = model_check::check(ModelConfig {
                replicas,
                depth,
                ..Default::default()
            });
            if json {
                println!("{}", serde_json::to_string_pretty(&report).unwrap());
            } else {
                println!(
                    "{} distinct states, {} transitions, max live rate sum {}, max holders {}, {} violations",
                    report.distinct_states,
                    report.transitions,
                    report.max_live_rate_sum,
                    report.max_holders,
                    report.violations.len()
                );
                for v in &report.violations {
                    println!("  {}: {}", v.property, v.detail);
                }
            }
            if !report.violations.is_empty() {
                return ExitCode::FAILURE;
            }
        }
        Command::Vectors { out } => {
            let text = serde_json::to_string_pretty(&vectors::generate()).unwrap() + "\n";
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        eprintln!("writing {}: {e}", path.display());
                        return ExitCode::FAILURE;
                    }
                }
                None => print!("{text}"),
            }
        }
    }
    ExitCode::SUCCESS
}
