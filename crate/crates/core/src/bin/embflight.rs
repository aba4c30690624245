use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use embflight::config::{InputSource, RunConfig};
use embflight::course::{generate_course, write_scores_csv, CourseGenParams};
use embflight::linksim::{measure_roundtrip, write_latency_csv, LinkProfile};
use embflight::pilot::{run_episode, EpisodeConfig, Strategy};
use embflight::record::{replay, Recorder};
use embflight::server::{serve, ServeOptions};
use embflight::session::Session;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "embflight",
    version,
    about = "Fixed-wing mimicry flight simulator and test harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session service for a cockpit client.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7070")]
        listen: String,
        /// Write a JSON-lines session log.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Keep serving after the session completes.
        #[arg(long)]
        linger: bool,
    },
    /// Fly a generated course with the pursuit pilot and report the scores.
    PilotRun {
        #[arg(long, value_enum, default_value_t = Strategy::Attitude)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Link profile between pilot and vehicle; omit for a direct wire.
        #[arg(long)]
        link: Option<String>,
        #[arg(long, default_value_t = 84)]
        count: usize,
        #[arg(long, default_value_t = 40.0)]
        spacing: f64,
        /// Report JSON; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-waypoint CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep emission frequency over an emulated link and write the latency curve.
    LinkBench {
        #[arg(long)]
        profile: String,
        /// Inclusive integer range `lo:hi` in Hz.
        #[arg(long, default_value = "30:30")]
        freq_sweep: String,
        #[arg(long, default_value_t = 2000)]
        packets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-drive a recorded session log.
    Replay {
        log: PathBuf,
        /// Compare every regenerated frame with the recorded one.
        #[arg(long)]
        verify: bool,
    },
    /// Generate a waypoint course.
    CourseGen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 84)]
        count: usize,
        #[arg(long, default_value_t = 40.0)]
        spacing: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a session headless with the pursuit pilot and record it.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 600)]
        ticks: u64,
        #[arg(long)]
        record: PathBuf,
    },
    /// Print the default run configuration.
    DefaultConfig,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::from_path(p)?),
        None => {
            let mut cfg = RunConfig::default();
            cfg.apply_env()?;
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn parse_sweep(s: &str) -> Result<(u32, u32)> {
    let (lo, hi) = s.split_once(':').unwrap_or((s, s));
    let lo: u32 = lo.trim().parse().with_context(|| format!("bad sweep start in {s:?}"))?;
    let hi: u32 = hi.trim().parse().with_context(|| format!("bad sweep end in {s:?}"))?;
    if lo == 0 || hi < lo {
        bail!("sweep must satisfy 1 <= lo <= hi, got {s:?}");
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve {
            config,
            listen,
            record,
            linger,
        } => {
            let cfg = load_config(&config)?;
            let handle = serve(cfg, listen.as_str(), ServeOptions { record, linger })?;
            eprintln!("listening on {}", handle.local_addr());
            handle.join();
        }
        Command::PilotRun {
            strategy,
            seed,
            link,
            count,
            spacing,
            out,
            csv,
        } => {
            let link = match link.as_deref() {
                None | Some("none") => None,
                Some(name) => {
                    Some(LinkProfile::by_name(name).with_context(|| format!("unknown link profile {name:?}"))?)
                }
            };
            let course = generate_course(seed, count, spacing, &CourseGenParams::default())?;
            let cfg = EpisodeConfig {
                strategy,
                link,
                link_seed: seed,
                ..Default::default()
            };
            let report = run_episode(&course, &cfg);
            let mut w = output(&out)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            if let Some(path) = csv {
                write_scores_csv(&report.records, File::create(&path)?)?;
            }
        }
        Command::LinkBench {
            profile,
            freq_sweep,
            packets,
            seed,
            out,
        } => {
            let profile =
                LinkProfile::by_name(&profile).with_context(|| format!("unknown link profile {profile:?}"))?;
            let (lo, hi) = parse_sweep(&freq_sweep)?;
            let rows: Vec<_> = (lo..=hi)
                .map(|f| measure_roundtrip(&profile, f as f64, packets, seed))
                .collect();
            let mut w = output(&out)?;
            write_latency_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::Replay { log, verify } => {
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let summary = replay(file)?;
            println!("replayed {} ticks", summary.ticks);
            if summary.truncated {
                println!("log ends in a partial line; replayed the complete prefix");
            }
            if verify {
                for m in &summary.mismatches {
                    println!("line {} (tick {}): {}", m.line, m.tick, m.detail);
                }
                if !summary.is_clean() {
                    bail!("{} of {} ticks diverged", summary.mismatches.len(), summary.ticks);
                }
                println!("all frames match");
            }
        }
        Command::CourseGen {
            seed,
            count,
            spacing,
            out,
        } => {
            let course = generate_course(seed, count, spacing, &CourseGenParams::default())?;
            let mut w = output(&out)?;
            serde_json::to_writer_pretty(&mut w, &course)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Simulate { config, ticks, record } => {
            let mut cfg = load_config(&config)?;
            cfg.input = InputSource::Pilot;
            let mut session = Session::new(cfg.clone())?;
            let mut rec = Recorder::new(BufWriter::new(File::create(&record)?), &cfg)?;
            for _ in 0..ticks {
                let out = session.tick();
                rec.record(&out)?;
                if session.is_complete() {
                    break;
                }
            }
            rec.flush()?;
        }
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&RunConfig::default())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
