use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vmpsp::config::{build_default_config, FrameConfig, ScenarioSection};
use vmpsp::harness::{emit_results, format_results, run_monte_carlo, Scenario};
use vmpsp::receivers::ReceiverKind;
use vmpsp::Result;

/// Worker threads for frame-parallel simulation; defaults to all cores.
const WORKERS_ENV: &str = "VMPSP_WORKERS";

#[derive(Parser)]
#[command(name = "vmpsp", version, about = "MIMO-OFDM VMP-SP receiver simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo BER / MSE / noise-estimate simulation.
    Run {
        /// TOML configuration (system keys plus an optional [scenario] table).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated receivers, e.g. psc-dd,i-djc-dd,lmmse.
        #[arg(long, value_delimiter = ',')]
        receiver: Vec<ReceiverKind>,
        /// Comma-separated Eb/N0 points in dB.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ebn0: Vec<f64>,
        #[arg(long)]
        frames: Option<u64>,
        /// Iterations for every iterative receiver (default per receiver).
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the EM-restricted variant of I-DJC-DD.
        #[arg(long)]
        em: bool,
        /// Keep all frames even after enough errors are collected.
        #[arg(long)]
        no_early_exit: bool,
        /// Output CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the built-in oracle and property checks.
    Selftest,
}

fn init_pool() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| vmpsp::Error::InvalidConfig(format!("{WORKERS_ENV}={v}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| vmpsp::Error::InvalidConfig(e.to_string()))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn scenario_from(
    cfg: FrameConfig,
    section: ScenarioSection,
    receiver: Vec<ReceiverKind>,
    ebn0: Vec<f64>,
    frames: Option<u64>,
    iters: Option<usize>,
    seed: Option<u64>,
    em: bool,
    early_exit: bool,
) -> Result<Scenario> {
    let mut kinds = if receiver.is_empty() {
        section
            .receivers
            .unwrap_or_default()
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<ReceiverKind>>>()?
    } else {
        receiver
    };
    if kinds.is_empty() {
        kinds.push(ReceiverKind::IDjcDd);
    }
    if em || section.em.unwrap_or(false) {
        for k in kinds.iter_mut() {
            if *k == ReceiverKind::IDjcDd {
                *k = ReceiverKind::IDjcDdEm;
            }
        }
    }
    let iters = iters.or(section.iterations);
    let eb_n0_db = if !ebn0.is_empty() {
        ebn0
    } else {
        section.eb_n0_db.unwrap_or_else(|| vec![cfg.eb_n0_db])
    };
    Ok(Scenario {
        receivers: kinds
            .into_iter()
            .map(|k| {
                let it = if k == ReceiverKind::LmmseBaseline {
                    1
                } else {
                    iters.unwrap_or(k.default_iterations())
                };
                (k, it)
            })
            .collect(),
        eb_n0_db,
        frames: frames.or(section.frames).unwrap_or(100),
        master_seed: seed.or(section.seed).unwrap_or(1),
        early_exit,
        cfg,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_pool().and_then(|()| match cli.command {
        Command::Run {
            config,
            receiver,
            ebn0,
            frames,
            iters,
            seed,
            em,
            no_early_exit,
            out,
        } => {
            let (cfg, section) = match config {
                Some(p) => FrameConfig::load(&p)?,
                None => (build_default_config(), None),
            };
            let s = scenario_from(
                cfg,
                section.unwrap_or_default(),
                receiver,
                ebn0,
                frames,
                iters,
                seed,
                em,
                !no_early_exit,
            )?;
            let table = run_monte_carlo(&s)?;
            match out {
                Some(p) => emit_results(&table, &p)?,
                None => print!("{}", format_results(&table)),
            }
            Ok(true)
        }
        Command::Selftest => {
            let report = vmpsp::oracle::run_selftest();
            for c in &report {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(report.iter().all(|c| c.passed))
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
