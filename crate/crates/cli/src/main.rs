use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use magcrawl::harness::{self, Format, ScenarioConfig, SweepKind};
use magcrawl::teleop::{self, ClientMsg, Param, Scene, Session, DEFAULT_TICK_RATE_HZ};

mod serve;

#[derive(Parser)]
#[command(name = "magcrawl", version, about = "Magnetic crawler simulator: sweeps, validation and live steering")]
struct Cli {
    /// Scenario config (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Accepted for reproducible scripts; the simulator is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Field,
    Pose,
    Stride,
    Speed,
    Foot,
    Convoy,
    Phase,
}

impl From<Kind> for SweepKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Field => SweepKind::Field,
            Kind::Pose => SweepKind::Pose,
            Kind::Stride => SweepKind::Stride,
            Kind::Speed => SweepKind::Speed,
            Kind::Foot => SweepKind::Foot,
            Kind::Convoy => SweepKind::Convoy,
            Kind::Phase => SweepKind::Phase,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Fmt {
    Csv,
    Json,
}

impl From<Fmt> for Format {
    fn from(f: Fmt) -> Self {
        match f {
            Fmt::Csv => Format::Csv,
            Fmt::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one parameter sweep and write it as a table.
    Sweep {
        kind: Kind,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Fmt,
    },
    /// Compare the model against every reference value; exits 1 on a hard-gate failure.
    Validate {
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the steering protocol over a websocket at /ws.
    SteerServe {
        #[arg(long, default_value = "straight")]
        scene: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_TICK_RATE_HZ)]
        tick_rate: f64,
        /// Append every applied input to this JSON-lines log.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Drive the session from a recorded log instead of clients.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Run a headless session and write one telemetry frame per line.
    Scenario {
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, default_value_t = 600)]
        ticks: u64,
        #[arg(long, default_value_t = DEFAULT_TICK_RATE_HZ)]
        tick_rate: f64,
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn build_session(cfg: &ScenarioConfig, scene: &str, tick_rate: f64) -> magcrawl::Result<Session> {
    let scene = Scene::resolve(scene)?;
    Session::new(scene, cfg.actuation(), cfg.geometry(), cfg.convoy_config(), tick_rate)
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    match cli.cmd {
        Cmd::Sweep { kind, out, format } => {
            let table = harness::run_sweep(kind.into(), &cfg)?;
            let mut w = output(&out)?;
            w.write_all(harness::render(&table, format.into())?.as_bytes())?;
            w.flush()?;
        }
        Cmd::Validate { out } => {
            let report = harness::validate_all(&cfg)?;
            print!("{}", report.summary());
            if let Some(p) = out {
                std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            if !report.passed {
                eprintln!("hard gates failed: {}", report.hard_failures.join(", "));
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::SteerServe { scene, port, tick_rate, record, replay } => {
            let session = build_session(&cfg, &scene, tick_rate)?;
            let log = match replay {
                Some(p) => Some(teleop::read_log(BufReader::new(File::open(p)?))?),
                None => None,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(session, port, record, log))?;
        }
        Cmd::Scenario { scene, ticks, tick_rate, record, replay, out } => {
            let scene = scene.unwrap_or_else(|| cfg.scene.clone());
            let mut session = build_session(&cfg, &scene, tick_rate)?;
            let log = match replay {
                Some(p) => teleop::read_log(BufReader::new(File::open(p)?))?,
                None => vec![
                    teleop::LogEntry {
                        tick: 0,
                        msg: ClientMsg::Start { scene: scene.clone(), units: cfg.convoy.n_units },
                    },
                    teleop::LogEntry { tick: 0, msg: ClientMsg::Set { param: Param::Freq, value: cfg.sim.freq_hz } },
                ],
            };
            let mut w = output(&out)?;
            let mut i = 0;
            for _ in 0..ticks {
                while i < log.len() && log[i].tick == session.tick_count() {
                    session.submit(log[i].msg.clone());
                    i += 1;
                }
                let (frame, errs) = session.tick();
                for e in errs {
                    eprintln!("tick {}: {}: {}", frame.tick, e.code, e.text);
                }
                writeln!(w, "{}", serde_json::to_string(&frame)?)?;
            }
            w.flush()?;
            if let Some(p) = record {
                teleop::write_log(session.log(), BufWriter::new(File::create(p)?))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
