use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pacc_sim::run::run;
use pacc_sim::scenario::{parse_config, ScenarioConfig, ScenarioKind};
use pacc_sim::summary::summarize;
use pacc_sim::trace::Trace;

#[derive(Parser)]
#[command(name = "pacc", version, about = "Run collaborative carrying scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Simulated duration, s.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<String>,
        /// Trace rows per second.
        #[arg(long)]
        log_rate: Option<f64>,
    },
    /// Print the full default config of a scenario kind.
    DumpDefaults {
        /// rr_rigid, rr_rope, hr_rigid or custom
        kind: String,
    },
    /// Recompute the summary of an existing trace.
    ReplaySummary { trace: PathBuf },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, duration, seed, out_dir, log_rate } => (|| {
            let mut cfg = load(&config)?;
            if let Some(d) = duration {
                cfg.duration = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out_dir {
                cfg.out_dir = o;
            }
            if let Some(r) = log_rate {
                cfg.log_rate = r;
            }
            cfg.validate().map_err(|e| e.to_string())?;
            let (report, files) = run(&cfg).map_err(|e| e.to_string())?;
            print!("{}", report.summary.to_text());
            eprintln!("trace: {}", files.trace.display());
            eprintln!("summary: {}", files.summary.display());
            if let Some(e) = &report.error {
                eprintln!("error: {e}");
            }
            if let Some(t) = report.fallen_at {
                eprintln!("a robot fell at t = {t:.3} s");
            }
            Ok(report.exit_code() as u8)
        })(),
        Command::DumpDefaults { kind } => match ScenarioKind::parse(&kind) {
            Some(k) => {
                print!("{}", ScenarioConfig::defaults(k).emit());
                Ok(0)
            }
            None => Err(format!(
                "unknown kind {kind:?}; expected one of {}",
                ScenarioKind::ALL.map(|k| k.as_str()).join(", ")
            )),
        },
        Command::ReplaySummary { trace } => (|| {
            let file = std::fs::File::open(&trace).map_err(|e| format!("{}: {e}", trace.display()))?;
            let t = Trace::read(file).map_err(|e| e.to_string())?;
            let s = summarize(&t).map_err(|e| e.to_string())?;
            print!("{}", s.to_text());
            Ok(0)
        })(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
