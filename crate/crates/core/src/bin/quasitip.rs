use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasitip::io::{Command, RunConfig, Sidecar};
use quasitip::{cli, Boundary, Error};

/// Two interacting bosons in a quasiperiodic chain.
#[derive(Parser, Debug)]
#[command(name = "quasitip", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Single-particle spectrum, participation numbers and SP minibands.
    SpSpectrum,
    /// Two-particle eigenstates with participation numbers and TP labels.
    TpSpectrum,
    /// Largest participation number as a function of U.
    Sweep,
    /// Wave-packet spreading from an adjacent pair.
    Evolve,
    /// (U, λ) phase-diagram scan.
    Scan,
    /// Fock-space overlap statistics and resonance estimates.
    Fock,
    /// Re-run the command recorded in a sidecar JSON file.
    Replay { sidecar: PathBuf },
}

#[derive(Args, Debug)]
struct Opts {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    u: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// open or periodic.
    #[arg(long, global = true)]
    boundary: Option<Boundary>,
    /// Final time.
    #[arg(long, global = true)]
    t: Option<f64>,
    /// Number of sample intervals.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Left site of the initial pair (evolve).
    #[arg(long, global = true)]
    l0: Option<usize>,
    /// U grid as start,end,step (sweep).
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    u_grid: Option<Vec<f64>>,
    /// Energy window lower,upper (tp-spectrum).
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    window: Option<Vec<f64>>,
    #[arg(long, global = true)]
    dense_limit: Option<usize>,
    /// Write eigenvectors to a binary file (tp-spectrum).
    #[arg(long, global = true)]
    dump_vectors: bool,
    /// Scan preset: desk or paper.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    realizations: Option<usize>,
    /// Comma-separated initial positions for scan realizations.
    #[arg(long, global = true, value_delimiter = ',')]
    seed_positions: Option<Vec<usize>>,
    /// Metal threshold σ_c (scan); default N/10.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Continue a scan from its state file.
    #[arg(long, global = true)]
    resume: bool,
    /// Miniband distance for resonance estimates (fock).
    #[arg(long, global = true)]
    gap: Option<f64>,
    /// Output directory [env: QUASITIP_OUT, default: quasitip-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the compute pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Progress messages on standard error (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Opts {
    fn to_config(&self) -> quasitip::Result<RunConfig> {
        Ok(RunConfig {
            n: self.n,
            lambda: self.lambda,
            u: self.u,
            beta: self.beta,
            alpha: self.alpha,
            boundary: self.boundary,
            t: self.t,
            samples: self.samples,
            l0: self.l0,
            u_grid: fixed("--u-grid", &self.u_grid)?,
            window: fixed("--window", &self.window)?,
            dense_limit: self.dense_limit,
            dump_vectors: self.dump_vectors.then_some(true),
            preset: self.preset.clone(),
            realizations: self.realizations,
            seed_positions: self.seed_positions.clone(),
            threshold: self.threshold,
            resume: self.resume.then_some(true),
            gap: self.gap,
            out: self.out.clone(),
            threads: self.threads,
            verbosity: (self.verbose > 0).then_some(self.verbose),
            ..Default::default()
        })
    }
}

fn fixed<const K: usize>(flag: &str, values: &Option<Vec<f64>>) -> quasitip::Result<Option<[f64; K]>> {
    values
        .as_deref()
        .map(|v| {
            v.try_into()
                .map_err(|_| Error::Config(format!("{flag} takes {K} comma-separated numbers, got {}", v.len())))
        })
        .transpose()
}

fn resolve(cli: &Cli) -> quasitip::Result<RunConfig> {
    let flags = cli.opts.to_config()?;
    let (base, command) = match &cli.command {
        Sub::Replay { sidecar } => {
            let s = Sidecar::read(sidecar)?;
            (s.config, None)
        }
        other => {
            let base = match &cli.opts.config {
                Some(path) => RunConfig::load(path)?,
                None => RunConfig::default(),
            };
            let command = match other {
                Sub::SpSpectrum => Command::SpSpectrum,
                Sub::TpSpectrum => Command::TpSpectrum,
                Sub::Sweep => Command::Sweep,
                Sub::Evolve => Command::Evolve,
                Sub::Scan => Command::Scan,
                Sub::Fock => Command::Fock,
                Sub::Replay { .. } => unreachable!(),
            };
            (base, Some(command))
        }
    };
    let mut config = base.merged(&flags);
    if command.is_some() {
        config.command = command;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> quasitip::Result<()> {
    let config = resolve(cli)?;
    if let Some(threads) = config.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let verbose = config.verbosity.unwrap_or(0) > 0;
    let log = move |msg: &str| {
        if verbose {
            eprintln!("quasitip: {msg}");
        }
    };
    let report = cli::run(&config, &log)?;
    for f in report.files.iter().chain(report.sidecar.iter()) {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("quasitip: error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
