use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use intent_grasp::dialogue::Policy;
use intent_grasp::eval::BenchmarkConfig;
use intent_grasp_harness::commands::{self, GenDataConfig, Overrides, ReplaySpec};
use intent_grasp_harness::{http, ServiceConfig, Store};

#[derive(Parser)]
#[command(name = "intent-grasp", version, about = "Clarification-dialogue grasping: datasets, benchmarks and a session service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// JSON config file for the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Comma-separated round limits (T).
    #[arg(long, value_delimiter = ',')]
    rounds: Option<Vec<usize>>,
    /// Comma-separated policies: prograsp, literal, aint_only, silent, random.
    #[arg(long, value_delimiter = ',', value_parser = parse_policy)]
    policy: Option<Vec<Policy>>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            lambdas: self.lambda.clone(),
            rounds: self.rounds.clone(),
            policies: self.policy.clone(),
        }
    }

    fn load<T: serde::de::DeserializeOwned + Default>(&self) -> anyhow::Result<T> {
        match &self.config {
            Some(p) => commands::load_json(p),
            None => Ok(T::default()),
        }
    }
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    Policy::parse(s).ok_or_else(|| format!("unknown policy {s:?}"))
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted dialogue records as a JSON dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dataset.json")]
        out: PathBuf,
    },
    /// Run the benchmark; writes the report CSV and raw episodes as JSON lines beside it.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Run the lambda x T grid for prograsp; writes JSON.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun one episode and print its transcript.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episode: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP session API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Session log path (overrides the config's `log`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Address to bind.
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => commands::write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData { common, out } => {
            let n = commands::gen_data(common.load::<GenDataConfig>()?, &common.overrides(), &out)?;
            eprintln!("wrote {n} records to {}", out.display());
        }
        Command::Bench { common, out } => {
            let r = commands::bench(common.load::<BenchmarkConfig>()?, &common.overrides(), &out)?;
            for (split, index, msg) in &r.generation_failures {
                eprintln!("skipped {} scene {index}: {msg}", split.name());
            }
            eprintln!(
                "wrote {} rows to {} and {} episodes to {}",
                r.table.rows.len(),
                out.display(),
                r.episodes.len(),
                commands::episodes_path(&out).display()
            );
        }
        Command::Sweep { common, out } => {
            let r = commands::sweep(common.load::<BenchmarkConfig>()?, &common.overrides())?;
            emit(out.as_ref(), &(serde_json::to_string_pretty(&r)? + "\n"))?;
        }
        Command::Replay { common, episode, out } => {
            let spec: ReplaySpec = commands::load_json(&episode)?;
            emit(out.as_ref(), &commands::replay(spec, &common.overrides())?)?;
        }
        Command::Serve { common, port, out, host } => {
            let mut config = common.load::<ServiceConfig>()?;
            if out.is_some() {
                config.log = out;
            }
            let store = Arc::new(Store::open(config)?);
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(async move {
                let (addr, server) = http::bind(store, SocketAddr::new(host, port)).await?;
                eprintln!("listening on http://{addr}");
                tokio::select! {
                    r = server => r?,
                    _ = tokio::signal::ctrl_c() => {}
                }
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
