//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Segment};
use crate::config::RunConfig;
use crate::csv_io::{ColumnRef, MissingPolicy};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "psrcast", version, about = "PSR trajectory-image load forecasting")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single seed replacing the configured seed list (the generator seed for `synth`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// CSV input, overriding `data.path`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Value column, by zero-based index or header name.
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long)]
    pub has_header: bool,
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Fill gaps by linear interpolation instead of failing.
    #[arg(long)]
    pub interpolate: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Delay, embedding dimension and largest Lyapunov exponent of a series.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Segment::All)]
        segment: Segment,
        /// Skip the MI / FNN profile CSVs.
        #[arg(long)]
        no_profiles: bool,
    },
    /// Dump one trajectory image as CSV and PGM.
    Embed {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Segment::All)]
        segment: Segment,
        /// First sample of the window within the segment.
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Generate the synthetic chaotic load series.
    Synth {
        /// Destination CSV (default: <out>/synth.csv).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Train every configured seed into a run directory.
    Train {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a run directory, or run the `[eval.grid]` sweep with --grid.
    Evaluate {
        /// Run directory (default: --out / config `out`).
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        grid: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Attention maps and RAM of one test window.
    Explain {
        #[arg(long)]
        run: Option<PathBuf>,
        /// Test window index.
        #[arg(long, default_value_t = 0)]
        window: usize,
        /// Explain one output step instead of the summed forecast.
        #[arg(long)]
        step: Option<usize>,
        /// Destination (default: <run>/explain/window_<i>).
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Full model against the variant without the local branch.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
    },
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.data {
            cfg.data.path = Some(p.clone());
        }
        if let Some(c) = &self.column {
            cfg.data.column = match c.parse::<usize>() {
                Ok(i) => ColumnRef::Index(i),
                Err(_) => ColumnRef::Name(c.clone()),
            };
        }
        if self.has_header {
            cfg.data.has_header = true;
        }
        if let Some(d) = self.delimiter {
            cfg.data.delimiter = d;
        }
        if self.interpolate {
            cfg.data.missing = MissingPolicy::LinearInterpolate;
        }
    }
}

/// Loads the config file (relative data paths resolve against its directory)
/// and applies command-line overrides.
fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            let base = path.parent().unwrap_or(Path::new(""));
            if let Some(p) = cfg.data.path.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            cfg
        }
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Synth { length, .. } => {
            if let Some(s) = cli.seed {
                cfg.synth.seed = s;
            }
            if let Some(l) = length {
                cfg.synth.length = *l;
            }
        }
        Command::Analyze { data, .. }
        | Command::Embed { data, .. }
        | Command::Train { data }
        | Command::Evaluate { data, .. }
        | Command::Ablate { data } => {
            data.apply(&mut cfg);
            if let Some(s) = cli.seed {
                cfg.train.seeds = vec![s];
                cfg.eval.grid.seeds = vec![s];
            }
        }
        Command::Explain { .. } => {}
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializes"));
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Analyze {
            segment, no_profiles, ..
        } => print_json(&commands::cmd_analyze(&cfg, *segment, !no_profiles)?),
        Command::Embed { segment, start, .. } => print_json(&commands::cmd_embed(&cfg, *segment, *start)?),
        Command::Synth { output, .. } => {
            let path = commands::cmd_synth(&cfg, output.clone())?;
            println!("{}", path.display());
        }
        Command::Train { .. } => print_json(&commands::cmd_train(&cfg)?),
        Command::Evaluate { run, grid, .. } => {
            let reports = if *grid {
                commands::cmd_evaluate_grid(&cfg)?
            } else {
                commands::cmd_evaluate_run(run.as_deref().unwrap_or(&cfg.out))?
            };
            print!("{}", psrcast_core::evaluation::render_results_table(&reports));
        }
        Command::Explain { run, window, step, dest } => {
            let dir = run.clone().unwrap_or_else(|| cfg.out.clone());
            print_json(&commands::cmd_explain(&dir, *window, *step, dest.clone())?);
        }
        Command::Ablate { .. } => {
            for r in commands::cmd_ablate(&cfg)? {
                println!(
                    "{} {} {}: full {:.4} no_local {:.4} ({:+.2}%)",
                    r.lookback, r.horizon, r.metric, r.full, r.no_local, r.improvement_pct
                );
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
