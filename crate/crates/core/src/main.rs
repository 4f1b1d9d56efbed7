use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qstmz::analytics::SchemeId;
use qstmz::network::LossSpec;
use qstmz::runner::{
    self, Engine, SchemeConfig, SweepAxis, TransferMode, DEFAULT_TRAJECTORIES, TABLE1_TRAJECTORIES,
};
use qstmz::{Error, Result};

#[derive(Parser)]
#[command(name = "qstmz", version, about = "Squeezed-light-enhanced atom interferometry simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and report every signal variant.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run a configuration across values of one parameter.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// r, q, phi, eta or n_t
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Also accepts `both`.
        #[arg(long = "engines", default_value = "analytic")]
        engines: EngineChoice,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Reproduce the nine Table I sensitivities with the phase-space engine.
    Table1 {
        #[arg(long, default_value_t = TABLE1_TRAJECTORIES)]
        trajectories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Cross-check the phase-space estimators against exact results.
    Validate {
        #[arg(long, default_value_t = 20_000)]
        trajectories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineChoice {
    Analytic,
    Tw,
    Both,
}

impl EngineChoice {
    fn engines(self) -> Vec<Engine> {
        match self {
            EngineChoice::Analytic => vec![Engine::Analytic],
            EngineChoice::Tw => vec![Engine::Tw],
            EngineChoice::Both => vec![Engine::Analytic, Engine::Tw],
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

/// Flags override fields read from `--config`.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with the same field names as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<SchemeId>,
    #[arg(long)]
    n_atoms: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    theta_sq: Option<f64>,
    #[arg(long, conflicts_with = "pulse_area")]
    q: Option<f64>,
    #[arg(long)]
    pulse_area: Option<f64>,
    #[arg(long, value_enum)]
    transfer: Option<TransferArg>,
    #[arg(long)]
    steps: Option<usize>,
    /// Phases to evaluate (comma-separated).
    #[arg(long, value_delimiter = ',')]
    phi: Option<Vec<f64>>,
    /// site=transmission, repeatable.
    #[arg(long)]
    eta: Vec<LossSpec>,
    #[arg(long)]
    recycled: bool,
    /// Explicit recycling gain for the single-mode scheme.
    #[arg(long)]
    gain: Option<f64>,
    #[arg(long)]
    n_lo: Option<f64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    engine: Option<Engine>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransferArg {
    Integrate,
    Analytic,
}

impl ConfigArgs {
    fn build(self) -> Result<SchemeConfig> {
        let mut c = match &self.config {
            Some(path) => serde_json::from_reader::<_, SchemeConfig>(io::BufReader::new(File::open(path)?))?,
            None => {
                let missing = |f: &str| Error::Validation(format!("--{f} is required without --config"));
                let scheme = self.scheme.ok_or_else(|| missing("scheme"))?;
                let n = self.n_atoms.ok_or_else(|| missing("n-atoms"))?;
                let r = self.r.ok_or_else(|| missing("r"))?;
                let mut c = SchemeConfig::new(scheme, n, r, self.engine.unwrap_or(Engine::Analytic));
                c.trajectories = DEFAULT_TRAJECTORIES;
                c
            }
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        set!(scheme, n_atoms, r, theta_sq, steps, n_lo, trajectories, seed, engine, phi);
        if self.q.is_some() {
            c.q = self.q;
            c.pulse_area = None;
        }
        if self.pulse_area.is_some() {
            c.pulse_area = self.pulse_area;
            c.q = None;
        }
        if let Some(t) = self.transfer {
            c.transfer = match t {
                TransferArg::Integrate => TransferMode::Integrate,
                TransferArg::Analytic => TransferMode::Analytic,
            };
        }
        for spec in self.eta {
            c.eta.insert(spec.site, spec.eta);
        }
        c.recycled |= self.recycled;
        if let Some(g) = self.gain {
            c.gains = runner::Gains::Explicit { g, g_plus: 0.0, g_minus: 0.0 };
        }
        c.validate()?;
        Ok(c)
    }
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn emit<T: serde::Serialize>(out: &OutputArgs, rows: &[runner::CsvRow], json: &T) -> Result<()> {
    let mut w = sink(&out.out)?;
    match out.format {
        Format::Csv => runner::write_csv(rows, &mut w)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, json)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { cfg, out } => {
            let res = runner::run_scheme(&cfg.build()?)?;
            emit(&out, &runner::rows_from(&res, None, ""), &res)
        }
        Command::Sweep { cfg, axis, values, engines, out } => {
            let rows = runner::sweep(&cfg.build()?, axis, &values, &engines.engines())?;
            emit(&out, &rows, &rows)
        }
        Command::Table1 { trajectories, seed, out } => {
            let entries = runner::reproduce_table1(trajectories, seed)?;
            let mut w = sink(&out.out)?;
            match out.format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &entries)?;
                    writeln!(w)?;
                }
                Format::Csv => {
                    let mut cw = csv::Writer::from_writer(&mut w);
                    for e in &entries {
                        cw.serialize(e)?;
                    }
                    cw.flush()?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::Validate { trajectories, seed } => {
            let checks = runner::validate_suite(trajectories, seed)?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::Indeterminate(format!("{failed} validation check(s) failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
