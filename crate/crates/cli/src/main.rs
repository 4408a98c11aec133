use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use skillguard_core::analysis::SecretMode;
use skillguard_core::pipeline::{
    BackendKind, Config, FetcherKind, Pipeline, PipelineError, Stage, StageOutcome, SCAN_OUT,
};

/// Repository-aware security scanning for agent skills.
#[derive(Parser, Debug)]
#[command(name = "skillguard", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Content store directory.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Output directory (for `scan`, a path ending in .jsonl names the report file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Reference time for repository metadata scoring (RFC 3339).
    #[arg(long, global = true)]
    as_of: Option<DateTime<Utc>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Backend {
    Heuristic,
    Remote,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Heuristic => BackendKind::Heuristic,
            Backend::Remote => BackendKind::Remote,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fetcher {
    Local,
    Git,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Offline,
    Validate,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fetch index entries into the content store.
    Ingest {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        fetcher: Option<Fetcher>,
        /// Root of `<owner>/<repository>/` trees for the local fetcher.
        #[arg(long)]
        forge_root: Option<PathBuf>,
        #[arg(long)]
        git_base_url: Option<String>,
        #[arg(long)]
        timeout_secs: Option<u64>,
        #[arg(long)]
        max_bytes: Option<u64>,
    },
    /// File inventory, endpoints, trackers and secrets per skill.
    Analyze {
        #[arg(long)]
        trackers: Option<PathBuf>,
        #[arg(long)]
        geo: Option<PathBuf>,
        #[arg(long)]
        detectors: Option<PathBuf>,
        #[arg(long)]
        secrets_mode: Option<Mode>,
    },
    /// Rule, bytecode, pipeline and behavioral scan.
    Scan {
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Questionnaire features and risk score.
    Features {
        #[arg(long)]
        backend: Option<Backend>,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Combine scan severity and risk into flag verdicts.
    Flag,
    /// Repository-context rescoring of flagged skills.
    Context {
        /// Flag file (defaults to the flag stage output).
        #[arg(long)]
        flagged: Option<PathBuf>,
        #[arg(long)]
        repos: Option<PathBuf>,
        #[arg(long)]
        backend: Option<Backend>,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Cross-scanner agreement statistics.
    Agree {
        /// Directory of external flag files.
        #[arg(long)]
        flags: Option<PathBuf>,
        #[arg(long)]
        universe: Option<String>,
    },
    /// Namespace hijacking audit of index references.
    Hijack {
        #[arg(long)]
        index: Option<PathBuf>,
        /// `replay:FILE` or `live`.
        #[arg(long)]
        forge: Option<String>,
        #[arg(long)]
        retirement_threshold: Option<u64>,
    },
    /// Human and JSON summaries of the stage outputs.
    Report,
    /// All stages in order.
    Run,
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn build(cli: Cli) -> Result<(Pipeline, Option<Stage>), PipelineError> {
    let mut cfg = match &cli.common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let c = cli.common;
    let mut scan_file = None;
    match &c.out {
        Some(p) if matches!(cli.command, Command::Scan { .. }) && p.extension().is_some_and(|e| e == "jsonl") => {
            scan_file = Some(p.clone());
        }
        other => set(&mut cfg.out, other.clone()),
    }
    set(&mut cfg.store, c.store);
    set(&mut cfg.workers, c.workers);
    set(&mut cfg.as_of, c.as_of);

    let stage = match cli.command {
        Command::Ingest {
            index,
            fetcher,
            forge_root,
            git_base_url,
            timeout_secs,
            max_bytes,
        } => {
            let i = &mut cfg.ingest;
            set(&mut i.index, index);
            if let Some(f) = fetcher {
                i.fetcher = match f {
                    Fetcher::Local => FetcherKind::Local,
                    Fetcher::Git => FetcherKind::Git,
                };
            }
            set(&mut i.forge_root, forge_root);
            set(&mut i.git_base_url, git_base_url);
            set(&mut i.timeout_secs, timeout_secs);
            set(&mut i.max_bytes, max_bytes);
            Some(Stage::Ingest)
        }
        Command::Analyze {
            trackers,
            geo,
            detectors,
            secrets_mode,
        } => {
            let a = &mut cfg.analyze;
            set(&mut a.trackers, trackers);
            set(&mut a.geo, geo);
            set(&mut a.detectors, detectors);
            if let Some(m) = secrets_mode {
                a.secrets_mode = match m {
                    Mode::Offline => SecretMode::Offline,
                    Mode::Validate => SecretMode::Validate,
                };
            }
            Some(Stage::Analyze)
        }
        Command::Scan { rules } => {
            set(&mut cfg.scan.rules, rules);
            Some(Stage::Scan)
        }
        Command::Features { backend, endpoint } => {
            if let Some(b) = backend {
                cfg.features.backend = b.into();
            }
            set(&mut cfg.features.endpoint, endpoint);
            Some(Stage::Features)
        }
        Command::Flag => Some(Stage::Flag),
        Command::Context {
            flagged,
            repos,
            backend,
            endpoint,
        } => {
            let x = &mut cfg.context;
            set(&mut x.flagged, flagged);
            set(&mut x.repos, repos);
            if let Some(b) = backend {
                x.backend = b.into();
            }
            set(&mut x.endpoint, endpoint);
            Some(Stage::Context)
        }
        Command::Agree { flags, universe } => {
            set(&mut cfg.agree.flags, flags);
            set(&mut cfg.agree.universe, universe);
            Some(Stage::Agree)
        }
        Command::Hijack {
            index,
            forge,
            retirement_threshold,
        } => {
            let h = &mut cfg.hijack;
            set(&mut h.index, index);
            set(&mut h.forge, forge);
            set(&mut h.retirement_threshold, retirement_threshold);
            Some(Stage::Hijack)
        }
        Command::Report => Some(Stage::Report),
        Command::Run => None,
    };
    let command = std::env::args().collect::<Vec<_>>().join(" ");
    let mut pipeline = Pipeline::new(cfg).with_command(command);
    if let Some(f) = scan_file {
        pipeline = pipeline.with_output(SCAN_OUT, f);
    }
    Ok((pipeline, stage))
}

fn print(outcome: &StageOutcome) {
    let files: Vec<String> = outcome.outputs.iter().map(|p| p.display().to_string()).collect();
    println!("{}: {} {}", outcome.stage, files.join(", "), outcome.stats);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build(cli).and_then(|(pipeline, stage)| {
        let outcomes = match stage {
            Some(s) => vec![pipeline.run_stage(s)?],
            None => pipeline.run()?,
        };
        Ok((pipeline, outcomes))
    });
    match result {
        Ok((_, outcomes)) => {
            for o in &outcomes {
                print(o);
            }
            if let Some(report) = outcomes.iter().find(|o| o.stage == Stage::Report) {
                if let Some(txt) = report.outputs.get(1) {
                    if let Ok(t) = std::fs::read_to_string(txt) {
                        print!("\n{t}");
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
