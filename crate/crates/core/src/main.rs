use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use pass_swipt::allocation::Protocol;
use pass_swipt::harness::sweep::sweep_energy_bound;
use pass_swipt::harness::{
    load_config, multi_user_point, pareto_filter, run_check, single_pair_point, sweep_multi_user,
    sweep_single_pair, write_csv, Check, ParetoPoint, Pipeline, RunConfig,
};
use pass_swipt::system::{SystemModel, TransmitterKind};
use pass_swipt::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    SinglePair,
    Fdma,
    Tdma,
    Noma,
    Con1,
    Con2,
    Sweep,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Access {
    Fdma,
    Tdma,
    Noma,
}

impl From<Access> for Protocol {
    fn from(a: Access) -> Self {
        match a {
            Access::Fdma => Protocol::Fdma,
            Access::Tdma => Protocol::Tdma,
            Access::Noma => Protocol::Noma,
        }
    }
}

/// Rate-energy optimisation for pinching-antenna SWIPT downlinks.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Single energy threshold in watts instead of a sweep.
    #[arg(long, conflicts_with = "rho")]
    eps: Option<f64>,
    /// Single rate-energy weight instead of a sweep.
    #[arg(long)]
    rho: Option<f64>,
    /// Access scheme for con1/con2; defaults to the [sweep] protocol, then tdma.
    #[arg(long, value_enum)]
    access: Option<Access>,
    /// Oracle to run.
    #[arg(long, value_enum, default_value = "placement")]
    check: Check,
    /// Record wall-clock seconds per point (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
}

enum Outcome {
    Points(Vec<ParetoPoint>),
    Written,
}

fn multi_user(cli: &Cli, cfg: &RunConfig, kind: TransmitterKind, protocol: Protocol) -> Result<Vec<ParetoPoint>> {
    let model = SystemModel::of_kind(kind, cfg.scenario.clone());
    let pso = cfg.pso.with_seed(cli.seed);
    match cli.eps {
        Some(eps) => {
            let bound = sweep_energy_bound(&model, &pso)?;
            Ok(vec![multi_user_point(&model, protocol, eps, &pso, Some(&bound), cli.timing)])
        }
        None => sweep_multi_user(&model, protocol, &cfg.sweep.eps, &pso, cli.timing),
    }
}

fn single_pair(cli: &Cli, cfg: &RunConfig) -> Vec<ParetoPoint> {
    match cli.rho {
        Some(rho) => vec![single_pair_point(&cfg.scenario, rho, cli.timing)],
        None => sweep_single_pair(&cfg.scenario, &cfg.sweep.rho, cli.timing),
    }
}

fn baseline_protocol(cli: &Cli, cfg: &RunConfig) -> Protocol {
    match (cli.access, cfg.sweep.pipeline) {
        (Some(a), _) => a.into(),
        (None, Some(Pipeline::MultiUser(_, p))) => p,
        _ => Protocol::Tdma,
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(&cli.config)?;
    if let Some(rho) = cli.rho {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("--rho must lie in [0, 1], got {rho}")));
        }
    }
    let points = match cli.command {
        Command::SinglePair => single_pair(cli, &cfg),
        Command::Fdma => multi_user(cli, &cfg, TransmitterKind::Pass, Protocol::Fdma)?,
        Command::Tdma => multi_user(cli, &cfg, TransmitterKind::Pass, Protocol::Tdma)?,
        Command::Noma => multi_user(cli, &cfg, TransmitterKind::Pass, Protocol::Noma)?,
        Command::Con1 => multi_user(cli, &cfg, TransmitterKind::Con1, baseline_protocol(cli, &cfg))?,
        Command::Con2 => multi_user(cli, &cfg, TransmitterKind::Con2, baseline_protocol(cli, &cfg))?,
        Command::Sweep => match cfg.sweep.pipeline {
            Some(Pipeline::SinglePair) => single_pair(cli, &cfg),
            Some(Pipeline::MultiUser(kind, protocol)) => multi_user(cli, &cfg, kind, protocol)?,
            None => return Err(Error::Config("sweep needs a protocol in the [sweep] section".into())),
        },
        Command::Oracle => {
            let control = cli.rho.or(cli.eps).unwrap_or(0.0);
            let report = run_check(cli.check, &cfg.scenario, control, &cfg.pso.with_seed(cli.seed))?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(BufWriter::new(File::create(&cli.out)?));
            w.serialize(&report)?;
            w.flush()?;
            println!(
                "{}: pipeline {} oracle {} deviation {:e}",
                report.check, report.pipeline, report.oracle, report.deviation
            );
            return Ok(Outcome::Written);
        }
    };
    let points = pareto_filter(points);
    write_csv(BufWriter::new(File::create(&cli.out)?), &points)?;
    for p in &points {
        println!(
            "{} control={} min_rate={:.6} bit/s/Hz min_energy={:.6} uW feasible={}",
            p.kind,
            p.control,
            p.min_rate_bps_hz,
            p.min_energy_w * 1e6,
            p.feasible
        );
    }
    Ok(Outcome::Points(points))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.jobs);
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(Outcome::Points(points)) if !points.is_empty() && points.iter().all(|p| !p.feasible) => {
            eprintln!("every point is infeasible");
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
