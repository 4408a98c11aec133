//! Stage orchestration. Every stage reads its predecessors' outputs from the
//! output directory, writes line-delimited JSON sorted by skill digest, and
//! drops a `<stem>.manifest.json` beside its primary output. Timestamps live
//! only in manifests, so content outputs are byte-identical across reruns.
//!
//! Config keys (TOML; relative paths resolve against the config file):
//!
//! | key | meaning |
//! |---|---|
//! | `store`, `out` | content store and output directory |
//! | `as_of` | RFC 3339 scoring time for repository metadata |
//! | `workers` | per-stage parallelism |
//! | `ingest.index`, `ingest.fetcher` (`local`/`git`), `ingest.forge_root`, `ingest.git_base_url`, `ingest.timeout_secs`, `ingest.max_bytes` | corpus ingest |
//! | `analyze.trackers`, `analyze.geo`, `analyze.detectors`, `analyze.secrets_mode`, `analyze.validate_timeout_secs` | static analysis |
//! | `scan.rules` | rule file (bundled starter rules if absent) |
//! | `features.backend` (`heuristic`/`remote`), `features.endpoint`, `features.timeout_secs` | questionnaire |
//! | `context.repos`, `context.flagged`, `context.backend`, `context.endpoint`, `context.timeout_secs` | repository context |
//! | `agree.flags`, `agree.universe`, `agree.include_own` | scanner agreement |
//! | `hijack.index`, `hijack.forge` (`replay:FILE`/`live`), `hijack.retirement_threshold`, `hijack.api_base`, `hijack.token_env` | hijack audit |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Display, Write as _};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::Digest as _;

use crate::analysis::{
    analyze, bundled_detectors, load_detectors, AnalysisContext, GeoTable, HttpSecretValidator, PublicSuffixList,
    SecretDetector, SecretMode, SecretValidator, TrackerList,
};
use crate::context::{
    aggregate_cross_repo, build_context_bundle, cross_repo_dispersion, display, metadata_score, most_relevant,
    AlignmentAssessment, AlignmentBackend, BundleStats, Category, ContextError, ContextScore, Dispersion,
    HeuristicAlignment, RemoteAlignment, RepoMetadata, RepoScore,
};
use crate::features::{
    extract_features, is_flagged, risk_score, AnalysisBackend, BackendRequest, HeuristicBackend, HttpTransport,
    RemoteBackend, RiskAssessment,
};
use crate::hijack::{audit_index, AuditSummary, ForgeClient, LiveForge, ReplayForge};
use crate::ingest::{
    ingest_entries, ingest_index, ContentStore, FetchBudget, FetchStatus, FileTree, IndexEntry, LocalFixtureFetcher,
    RepoFetcher, ShallowGitFetcher,
};
use crate::scanner::{scan, Overall, RuleSet, ScanReport};
use crate::skill::Digest;
use crate::stats::{
    agreement, common_universe, flag_sets_from_verdicts, read_flag_lines, repo_aggregate, AgreementReport, RateSummary,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Scanner id under which this tool's own verdicts appear in flag files.
pub const OWN_SCANNER_ID: &str = "skillguard";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Analyze,
    Scan,
    Features,
    Flag,
    Context,
    Agree,
    Hijack,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Analyze,
        Stage::Scan,
        Stage::Features,
        Stage::Flag,
        Stage::Context,
        Stage::Agree,
        Stage::Hijack,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Analyze => "analyze",
            Stage::Scan => "scan",
            Stage::Features => "features",
            Stage::Flag => "flag",
            Stage::Context => "context",
            Stage::Agree => "agree",
            Stage::Hijack => "hijack",
            Stage::Report => "report",
        }
    }

    /// Classification (scan, features, flag) shares one code; the report has
    /// its own.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Ingest => 2,
            Stage::Analyze => 3,
            Stage::Scan | Stage::Features | Stage::Flag => 4,
            Stage::Context => 5,
            Stage::Agree => 6,
            Stage::Hijack => 7,
            Stage::Report => 8,
        }
    }
}

impl Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("malformed input: {0}")]
    MalformedInput(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Stage { stage, .. } => stage.exit_code(),
            PipelineError::MalformedInput(_) => Stage::Report.exit_code(),
        }
    }
}

trait At<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Display> At<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            message: e.to_string(),
        })
    }
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FetcherKind {
    #[default]
    Local,
    Git,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub index: Option<PathBuf>,
    pub fetcher: FetcherKind,
    pub forge_root: Option<PathBuf>,
    pub git_base_url: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_bytes: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub trackers: Option<PathBuf>,
    pub geo: Option<PathBuf>,
    pub detectors: Option<PathBuf>,
    pub secrets_mode: SecretMode,
    pub validate_timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub repos: Option<PathBuf>,
    /// Flag file to rescore; defaults to the flag stage output.
    pub flagged: Option<PathBuf>,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreeConfig {
    /// Directory of external `*.jsonl` flag files.
    pub flags: Option<PathBuf>,
    pub universe: Option<String>,
    /// Include this tool's own verdicts as one scanner (default true).
    pub include_own: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HijackConfig {
    pub index: Option<PathBuf>,
    pub forge: Option<String>,
    pub retirement_threshold: Option<u64>,
    pub api_base: Option<String>,
    /// Environment variable holding an API token for the live forge.
    pub token_env: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub as_of: Option<DateTime<Utc>>,
    pub workers: Option<usize>,
    pub ingest: IngestConfig,
    pub analyze: AnalyzeConfig,
    pub scan: ScanConfig,
    pub features: BackendConfig,
    pub context: ContextConfig,
    pub agree: AgreeConfig,
    pub hijack: HijackConfig,
}

fn rebase(p: &mut Option<PathBuf>, base: &Path) {
    if let Some(x) = p {
        if x.is_relative() {
            *x = base.join(&*x);
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        cfg.rebase(&base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.store,
            &mut self.out,
            &mut self.ingest.index,
            &mut self.ingest.forge_root,
            &mut self.analyze.trackers,
            &mut self.analyze.geo,
            &mut self.analyze.detectors,
            &mut self.scan.rules,
            &mut self.context.repos,
            &mut self.context.flagged,
            &mut self.agree.flags,
            &mut self.hijack.index,
        ] {
            rebase(p, base);
        }
        if let Some(file) = self.hijack.forge.as_deref().and_then(|f| f.strip_prefix("replay:")) {
            if Path::new(file).is_relative() {
                self.hijack.forge = Some(format!("replay:{}", base.join(file).display()));
            }
        }
    }

    fn store_dir(&self) -> PathBuf {
        self.store.clone().unwrap_or_else(|| "store".into())
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| "out".into())
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or(4).max(1)
    }
}

// ---------------------------------------------------------------------------
// Run manifests and JSONL plumbing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub stage: Stage,
    pub config: serde_json::Value,
    /// Input path to SHA-256 (directories hash their sorted file contents).
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub stats: serde_json::Value,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let stem = primary_output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    primary_output.with_file_name(format!("{stem}.manifest.json"))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn digest_input(path: &Path) -> String {
    if path.is_dir() {
        let Ok(tree) = FileTree::from_dir(path) else {
            return "unreadable".into();
        };
        let mut h = sha2::Sha256::new();
        for p in tree.paths() {
            let Ok(content) = tree.read(p) else {
                return "unreadable".into();
            };
            h.update(p.as_bytes());
            h.update([0]);
            h.update((content.len() as u64).to_be_bytes());
            h.update(&content);
        }
        hex::encode(h.finalize())
    } else {
        match fs::read(path) {
            Ok(b) => Digest::of(&b).to_hex(),
            Err(_) => "missing".into(),
        }
    }
}

fn write_atomic(path: &Path, content: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)?;
    fs::rename(tmp, path)
}

fn jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("rows serialize");
        out.push(b'\n');
    }
    out
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("value serializes");
    v.push(b'\n');
    v
}

/// Reads a JSONL file; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub stats: serde_json::Value,
}

// ---------------------------------------------------------------------------
// Stage rows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IngestRow {
    /// Empty for failed fetches.
    pub digest: String,
    pub platform: String,
    pub owner: String,
    pub repository: String,
    pub subpath: String,
    pub fetch_status: FetchStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagRow {
    pub scanner_id: String,
    pub digest: Digest,
    pub flagged: bool,
    pub overall: Overall,
    pub risk: u8,
    /// Repositories the skill was found in.
    pub repos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRow {
    pub digest: Digest,
    pub repo_id: String,
    pub subpath: String,
    pub codebase: Decimal,
    pub metadata: Decimal,
    pub combined: Decimal,
    pub category: Category,
    pub suspicious: bool,
    pub assessment: AlignmentAssessment,
    pub bundle: BundleStats,
}

impl ContextRow {
    fn score(&self) -> ContextScore {
        ContextScore {
            codebase: self.codebase,
            metadata: self.metadata,
            combined: self.combined,
            category: self.category,
            suspicious: self.suspicious,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unavailable {
    pub repo_id: String,
    pub subpath: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillContextRow {
    pub digest: Digest,
    pub repos_scored: usize,
    /// Repositories averaged into `score`.
    pub retained: Vec<String>,
    pub score: Option<ContextScore>,
    pub dispersion: Option<Dispersion>,
    pub unavailable: Vec<Unavailable>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScannerCounts {
    pub scanner_id: String,
    pub scanned: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementFile {
    pub universe: String,
    pub scanners: Vec<ScannerCounts>,
    pub report: AgreementReport,
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

pub const INGEST_OUT: &str = "ingest.jsonl";
pub const ANALYSIS_OUT: &str = "analysis.jsonl";
pub const SCAN_OUT: &str = "scan.jsonl";
pub const FEATURES_OUT: &str = "features.jsonl";
pub const FLAGS_OUT: &str = "flags.jsonl";
pub const CONTEXT_OUT: &str = "context.jsonl";
pub const CONTEXT_SKILLS_OUT: &str = "context_skills.jsonl";
pub const AGREEMENT_OUT: &str = "agreement.json";
pub const HIJACK_OUT: &str = "hijack.jsonl";
pub const HIJACK_SUMMARY_OUT: &str = "hijack_summary.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TXT: &str = "summary.txt";

pub struct Pipeline {
    cfg: Config,
    command: String,
    overrides: BTreeMap<&'static str, PathBuf>,
}

struct Recorder<'a> {
    pipeline: &'a Pipeline,
    stage: Stage,
    started_at: String,
    inputs: BTreeMap<String, String>,
}

impl Recorder<'_> {
    fn input(&mut self, path: &Path) {
        self.inputs.insert(path.display().to_string(), digest_input(path));
    }

    fn store_input(&mut self, digests: &[Digest]) {
        let mut h = sha2::Sha256::new();
        for d in digests {
            h.update(d.as_bytes());
        }
        self.inputs.insert("store digests".into(), hex::encode(h.finalize()));
    }

    fn finish(self, outputs: Vec<PathBuf>, stats: serde_json::Value) -> Result<StageOutcome, PipelineError> {
        let manifest = RunManifest {
            command: self.pipeline.command.clone(),
            stage: self.stage,
            config: serde_json::to_value(&self.pipeline.cfg).unwrap_or_default(),
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            stats: stats.clone(),
            tool_version: TOOL_VERSION.to_string(),
            started_at: self.started_at,
            finished_at: now(),
        };
        let primary = outputs.first().expect("stage has an output");
        write_atomic(&manifest_path(primary), &pretty(&manifest)).at(self.stage)?;
        Ok(StageOutcome {
            stage: self.stage,
            outputs,
            stats,
        })
    }
}

impl Pipeline {
    pub fn new(cfg: Config) -> Self {
        Self {
            cfg,
            command: "run".into(),
            overrides: BTreeMap::new(),
        }
    }

    /// Command line recorded in run manifests.
    pub fn with_command(mut self, command: impl Into<String>) -> Self {
        self.command = command.into();
        self
    }

    /// Places the output named `name` (e.g. [`SCAN_OUT`]) at `path`.
    pub fn with_output(mut self, name: &'static str, path: impl Into<PathBuf>) -> Self {
        self.overrides.insert(name, path.into());
        self
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn output(&self, name: &'static str) -> PathBuf {
        self.overrides
            .get(name)
            .cloned()
            .unwrap_or_else(|| self.cfg.out_dir().join(name))
    }

    fn recorder(&self, stage: Stage) -> Recorder<'_> {
        Recorder {
            pipeline: self,
            stage,
            started_at: now(),
            inputs: BTreeMap::new(),
        }
    }

    fn pool(&self, stage: Stage) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers())
            .build()
            .at(stage)
    }

    fn open_store(&self, stage: Stage) -> Result<ContentStore, PipelineError> {
        ContentStore::open(self.cfg.store_dir()).at(stage)
    }

    fn rules(&self, stage: Stage) -> Result<RuleSet, PipelineError> {
        match &self.cfg.scan.rules {
            Some(p) => RuleSet::load(p).at(stage),
            None => Ok(RuleSet::starter()),
        }
    }

    fn detectors(&self, stage: Stage) -> Result<Vec<SecretDetector>, PipelineError> {
        match &self.cfg.analyze.detectors {
            Some(p) => load_detectors(&fs::read_to_string(p).at(stage)?).at(stage),
            None => Ok(bundled_detectors()),
        }
    }

    /// Runs every configured stage in order. Context and hijack are skipped
    /// when their inputs (`context.repos`, `hijack.forge`) are not set.
    pub fn run(&self) -> Result<Vec<StageOutcome>, PipelineError> {
        let mut outcomes = vec![
            self.ingest()?,
            self.analyze()?,
            self.scan()?,
            self.features()?,
            self.flag()?,
        ];
        if self.cfg.context.repos.is_some() {
            outcomes.push(self.context()?);
        }
        outcomes.push(self.agree()?);
        if self.cfg.hijack.forge.is_some() {
            outcomes.push(self.hijack()?);
        }
        outcomes.push(self.report()?);
        Ok(outcomes)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Analyze => self.analyze(),
            Stage::Scan => self.scan(),
            Stage::Features => self.features(),
            Stage::Flag => self.flag(),
            Stage::Context => self.context(),
            Stage::Agree => self.agree(),
            Stage::Hijack => self.hijack(),
            Stage::Report => self.report(),
        }
    }

    pub fn ingest(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Ingest;
        let mut rec = self.recorder(S);
        let c = &self.cfg.ingest;
        let index = c.index.as_ref().ok_or_else(|| config_err("ingest.index is required"))?;
        rec.input(index);
        let parsed = ingest_index(File::open(index).at(S)?).at(S)?;
        let budget = FetchBudget::new(
            Duration::from_secs(c.timeout_secs.unwrap_or(120)),
            c.max_bytes.unwrap_or(209_715_200),
        )
        .map_err(|e| config_err(e.to_string()))?;
        let fetcher: Arc<dyn RepoFetcher> = match c.fetcher {
            FetcherKind::Local => {
                let root = c
                    .forge_root
                    .as_ref()
                    .ok_or_else(|| config_err("ingest.forge_root is required for the local fetcher"))?;
                rec.input(root);
                Arc::new(LocalFixtureFetcher::new(root))
            }
            FetcherKind::Git => Arc::new(ShallowGitFetcher::new(
                c.git_base_url.clone().unwrap_or_else(|| "https://github.com".into()),
            )),
        };
        let store = self.open_store(S)?;
        let before = store.catalog().at(S)?.len();
        let summary = ingest_entries(&parsed.entries, &budget, fetcher, &store, self.cfg.workers()).at(S)?;
        let mut rows: Vec<IngestRow> = store.catalog().at(S)?[before..]
            .iter()
            .map(|r| IngestRow {
                digest: r.digest.clone(),
                platform: r.platform.clone(),
                owner: r.owner.clone(),
                repository: r.repository.clone(),
                subpath: r.subpath.clone(),
                fetch_status: r.fetch_status,
            })
            .collect();
        rows.sort();
        let out = self.output(INGEST_OUT);
        write_atomic(&out, &jsonl(&rows)).at(S)?;
        let mut stats = serde_json::to_value(&summary).unwrap_or_default();
        stats["skipped_index_lines"] = parsed.skipped.into();
        rec.finish(vec![out], stats)
    }

    fn stored(&self, stage: Stage) -> Result<(ContentStore, Vec<Digest>), PipelineError> {
        let store = self.open_store(stage)?;
        let digests = store.digests().at(stage)?;
        Ok((store, digests))
    }

    pub fn analyze(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Analyze;
        let mut rec = self.recorder(S);
        let a = &self.cfg.analyze;
        let geo = match &a.geo {
            Some(p) => {
                rec.input(p);
                GeoTable::load(BufReader::new(File::open(p).at(S)?)).at(S)?
            }
            None => GeoTable::default(),
        };
        let trackers = match &a.trackers {
            Some(p) => {
                rec.input(p);
                TrackerList::load(BufReader::new(File::open(p).at(S)?)).at(S)?
            }
            None => TrackerList::default(),
        };
        if let Some(p) = &a.detectors {
            rec.input(p);
        }
        let detectors = self.detectors(S)?;
        let http = HttpSecretValidator::new(Duration::from_secs(a.validate_timeout_secs.unwrap_or(10)));
        let ctx = AnalysisContext {
            suffix_list: PublicSuffixList::bundled(),
            geo: &geo,
            trackers: &trackers,
            detectors: &detectors,
            script_suffixes: crate::analysis::default_script_suffixes(),
            mode: a.secrets_mode,
            validator: match a.secrets_mode {
                SecretMode::Validate => Some(&http as &dyn SecretValidator),
                SecretMode::Offline => None,
            },
        };
        let (store, digests) = self.stored(S)?;
        rec.store_input(&digests);
        let rows = self.pool(S)?.install(|| {
            digests
                .par_iter()
                .map(|d| {
                    let artifact = store.get(d).at(S)?;
                    analyze(&artifact, &ctx).at(S)
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let secrets: usize = rows.iter().map(|r| r.secrets.len()).sum();
        let out = self.output(ANALYSIS_OUT);
        write_atomic(&out, &jsonl(&rows)).at(S)?;
        rec.finish(
            vec![out],
            serde_json::json!({ "skills": rows.len(), "secret_findings": secrets }),
        )
    }

    pub fn scan(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Scan;
        let mut rec = self.recorder(S);
        if let Some(p) = &self.cfg.scan.rules {
            rec.input(p);
        }
        let rules = self.rules(S)?;
        let (store, digests) = self.stored(S)?;
        rec.store_input(&digests);
        let reports = self.pool(S)?.install(|| {
            digests
                .par_iter()
                .map(|d| store.get(d).map(|a| scan(&a, &rules)).at(S))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let mut by_overall: BTreeMap<Overall, usize> = BTreeMap::new();
        for r in &reports {
            *by_overall.entry(r.overall).or_default() += 1;
        }
        let out = self.output(SCAN_OUT);
        write_atomic(&out, &jsonl(&reports)).at(S)?;
        rec.finish(
            vec![out],
            serde_json::json!({ "skills": reports.len(), "rules": rules.len(), "overall": by_overall }),
        )
    }

    fn analysis_backend(&self, stage: Stage) -> Result<Box<dyn AnalysisBackend>, PipelineError> {
        let f = &self.cfg.features;
        Ok(match f.backend {
            BackendKind::Heuristic => Box::new(HeuristicBackend::new(
                PublicSuffixList::bundled(),
                self.detectors(stage)?.into(),
                Arc::new(self.rules(stage)?),
            )),
            BackendKind::Remote => {
                let endpoint = f
                    .endpoint
                    .clone()
                    .ok_or_else(|| config_err("features.endpoint is required for the remote backend"))?;
                Box::new(RemoteBackend::http(
                    endpoint,
                    Duration::from_secs(f.timeout_secs.unwrap_or(60)),
                ))
            }
        })
    }

    pub fn features(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Features;
        let mut rec = self.recorder(S);
        let backend = self.analysis_backend(S)?;
        let (store, digests) = self.stored(S)?;
        rec.store_input(&digests);
        let rows = self.pool(S)?.install(|| {
            digests
                .par_iter()
                .map(|d| {
                    let artifact = store.get(d).at(S)?;
                    let vector = extract_features(&artifact, backend.as_ref()).at(S)?;
                    // Approximate request size (4 bytes per token) for cost accounting.
                    let request = serde_json::to_string(&BackendRequest::for_artifact(&artifact)).unwrap_or_default();
                    Ok((risk_score(*d, &vector), request.len() / 4))
                })
                .collect::<Result<Vec<_>, PipelineError>>()
        })?;
        let approx_tokens: usize = rows.iter().map(|(_, t)| t).sum();
        let rows: Vec<RiskAssessment> = rows.into_iter().map(|(r, _)| r).collect();
        let out = self.output(FEATURES_OUT);
        write_atomic(&out, &jsonl(&rows)).at(S)?;
        rec.finish(
            vec![out],
            serde_json::json!({
                "skills": rows.len(),
                "backend": self.cfg.features.backend,
                "approx_request_tokens": approx_tokens,
            }),
        )
    }

    pub fn flag(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Flag;
        let mut rec = self.recorder(S);
        let (scan_path, features_path) = (self.output(SCAN_OUT), self.output(FEATURES_OUT));
        rec.input(&scan_path);
        rec.input(&features_path);
        let reports: Vec<ScanReport> = read_jsonl(&scan_path).at(S)?;
        let mut assessments: BTreeMap<Digest, RiskAssessment> = BTreeMap::new();
        for a in read_jsonl::<RiskAssessment>(&features_path).at(S)? {
            if assessments.insert(a.digest, a).is_some() {
                return Err(PipelineError::Stage {
                    stage: S,
                    message: "duplicate digest in features output".into(),
                });
            }
        }
        if reports.len() != assessments.len() {
            return Err(PipelineError::Stage {
                stage: S,
                message: format!("{} scan reports but {} assessments", reports.len(), assessments.len()),
            });
        }
        let origins = self.open_store(S)?.origins().at(S)?;
        let mut rows = Vec::with_capacity(reports.len());
        for r in &reports {
            let a = assessments.get(&r.digest).ok_or_else(|| PipelineError::Stage {
                stage: S,
                message: format!("no assessment for {}", r.digest),
            })?;
            let repos: BTreeSet<String> = origins
                .get(&r.digest)
                .into_iter()
                .flatten()
                .map(|o| o.repo_id())
                .collect();
            rows.push(FlagRow {
                scanner_id: OWN_SCANNER_ID.into(),
                digest: r.digest,
                flagged: is_flagged(r, a).at(S)?,
                overall: r.overall,
                risk: a.risk,
                repos: repos.into_iter().collect(),
            });
        }
        rows.sort_by_key(|r| r.digest);
        let flagged = rows.iter().filter(|r| r.flagged).count();
        let out = self.output(FLAGS_OUT);
        write_atomic(&out, &jsonl(&rows)).at(S)?;
        rec.finish(
            vec![out],
            serde_json::json!({ "skills": rows.len(), "flagged": flagged }),
        )
    }

    fn alignment_backend(&self, stage: Stage) -> Result<Box<dyn AlignmentBackend>, PipelineError> {
        let c = &self.cfg.context;
        Ok(match c.backend {
            BackendKind::Heuristic => Box::new(HeuristicAlignment::new(self.rules(stage)?)),
            BackendKind::Remote => {
                let endpoint = c
                    .endpoint
                    .clone()
                    .ok_or_else(|| config_err("context.endpoint is required for the remote backend"))?;
                Box::new(RemoteAlignment::new(
                    endpoint,
                    HttpTransport::new(Duration::from_secs(c.timeout_secs.unwrap_or(60))),
                ))
            }
        })
    }

    pub fn context(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Context;
        let mut rec = self.recorder(S);
        let repos_dir = self
            .cfg
            .context
            .repos
            .clone()
            .ok_or_else(|| config_err("context.repos is required"))?;
        rec.input(&repos_dir);
        let flags_path = self
            .cfg
            .context
            .flagged
            .clone()
            .unwrap_or_else(|| self.output(FLAGS_OUT));
        rec.input(&flags_path);
        let as_of = self.cfg.as_of.unwrap_or_else(Utc::now);
        let backend = self.alignment_backend(S)?;
        let flagged: BTreeSet<Digest> = read_jsonl::<FlagRow>(&flags_path)
            .at(S)?
            .into_iter()
            .filter(|r| r.flagged)
            .map(|r| r.digest)
            .collect();
        let origins = self.open_store(S)?.origins().at(S)?;

        // One job per (skill, repository, subpath) with repository context.
        let mut jobs: Vec<(Digest, String, String, String)> = Vec::new();
        for d in &flagged {
            let mut seen = BTreeSet::new();
            for o in origins.get(d).into_iter().flatten() {
                if o.platform == crate::ingest::Platform::Hosted.as_str() {
                    continue;
                }
                if seen.insert((o.repo_id(), o.subpath.clone())) {
                    jobs.push((*d, o.owner.clone(), o.repository.clone(), o.subpath.clone()));
                }
            }
        }
        jobs.sort();

        let score_one =
            |owner: &str,
             repo: &str,
             subpath: &str|
             -> Result<Result<(ContextScore, AlignmentAssessment, BundleStats), String>, PipelineError> {
                let dir = repos_dir.join(owner).join(repo);
                if !dir.is_dir() {
                    return Ok(Err("repository not available".into()));
                }
                let meta_path = repos_dir.join(owner).join(format!("{repo}.meta.json"));
                let meta: RepoMetadata = match fs::read_to_string(&meta_path) {
                    Ok(t) => match serde_json::from_str(&t) {
                        Ok(m) => m,
                        Err(e) => return Ok(Err(format!("malformed metadata: {e}"))),
                    },
                    Err(_) => return Ok(Err("repository metadata not available".into())),
                };
                let tree = FileTree::from_dir(&dir).at(S)?;
                let bundle = match build_context_bundle(&tree, subpath) {
                    Ok(b) => b,
                    Err(e @ (ContextError::MissingSkillFile(_) | ContextError::Unreadable { .. })) => {
                        return Ok(Err(e.to_string()))
                    }
                    Err(e) => return Err(e).at(S),
                };
                let metadata = match metadata_score(&meta, as_of) {
                    Ok(m) => m,
                    Err(e @ ContextError::ClockSkew { .. }) => return Ok(Err(e.to_string())),
                    Err(e) => return Err(e).at(S),
                };
                let assessment = backend.assess(&bundle).at(S)?;
                let score = ContextScore::new(&assessment, metadata).at(S)?;
                Ok(Ok((score, assessment, bundle.stats())))
            };
        let results = self.pool(S)?.install(|| {
            jobs.par_iter()
                .map(|(_, owner, repo, subpath)| score_one(owner, repo, subpath))
                .collect::<Result<Vec<_>, _>>()
        })?;

        let mut rows = Vec::new();
        let mut per_skill: BTreeMap<Digest, (Vec<ContextRow>, Vec<Unavailable>)> =
            flagged.iter().map(|d| (*d, Default::default())).collect();
        for ((digest, owner, repo, subpath), result) in jobs.into_iter().zip(results) {
            let repo_id = format!("{owner}/{repo}");
            let slot = per_skill.get_mut(&digest).expect("job digests are flagged");
            match result {
                Ok((score, assessment, bundle)) => {
                    let row = ContextRow {
                        digest,
                        repo_id,
                        subpath,
                        codebase: score.codebase,
                        metadata: score.metadata,
                        combined: score.combined,
                        category: score.category,
                        suspicious: score.suspicious,
                        assessment,
                        bundle,
                    };
                    slot.0.push(row.clone());
                    rows.push(row);
                }
                Err(reason) => slot.1.push(Unavailable {
                    repo_id,
                    subpath,
                    reason,
                }),
            }
        }

        let mut skills = Vec::with_capacity(per_skill.len());
        for (digest, (scored, unavailable)) in per_skill {
            // A repository holding several copies counts once (first subpath).
            let mut per_repo: BTreeMap<&str, RepoScore> = BTreeMap::new();
            for r in &scored {
                per_repo.entry(&r.repo_id).or_insert_with(|| RepoScore {
                    repo_id: r.repo_id.clone(),
                    score: r.score(),
                });
            }
            let repo_scores: Vec<RepoScore> = per_repo.into_values().collect();
            let score = if repo_scores.is_empty() {
                None
            } else {
                Some(aggregate_cross_repo(&repo_scores).at(S)?)
            };
            let dispersion = if repo_scores.len() >= 2 {
                let codebase: Vec<Decimal> = repo_scores.iter().map(|r| r.score.codebase).collect();
                Some(cross_repo_dispersion(&codebase).at(S)?)
            } else {
                None
            };
            skills.push(SkillContextRow {
                digest,
                repos_scored: repo_scores.len(),
                retained: most_relevant(&repo_scores)
                    .into_iter()
                    .map(|r| r.repo_id.clone())
                    .collect(),
                score,
                dispersion,
                unavailable,
            });
        }

        let (out, out_skills) = (self.output(CONTEXT_OUT), self.output(CONTEXT_SKILLS_OUT));
        write_atomic(&out, &jsonl(&rows)).at(S)?;
        write_atomic(&out_skills, &jsonl(&skills)).at(S)?;
        let suspicious = skills.iter().filter(|s| s.score.is_some_and(|c| c.suspicious)).count();
        rec.finish(
            vec![out, out_skills],
            serde_json::json!({
                "as_of": as_of.to_rfc3339_opts(SecondsFormat::Secs, true),
                "flagged_skills": skills.len(),
                "repo_scores": rows.len(),
                "suspicious": suspicious,
            }),
        )
    }

    pub fn agree(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Agree;
        let mut rec = self.recorder(S);
        let universe = self.cfg.agree.universe.clone().unwrap_or_else(|| "common".into());
        if universe != "common" {
            return Err(config_err(format!(
                "agree.universe `{universe}` is not supported (use `common`)"
            )));
        }
        let mut verdicts = BTreeMap::new();
        if let Some(dir) = &self.cfg.agree.flags {
            rec.input(dir);
            let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                .at(S)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            paths.sort();
            for p in paths {
                read_flag_lines(
                    BufReader::new(File::open(&p).at(S)?),
                    &p.display().to_string(),
                    &mut verdicts,
                )
                .at(S)?;
            }
        }
        if self.cfg.agree.include_own.unwrap_or(true) {
            let own = self.output(FLAGS_OUT);
            rec.input(&own);
            read_flag_lines(
                BufReader::new(File::open(&own).at(S)?),
                &own.display().to_string(),
                &mut verdicts,
            )
            .at(S)?;
        }
        let sets = flag_sets_from_verdicts(verdicts);
        let universe_set = common_universe(&sets);
        let report = agreement(&sets, &universe_set).at(S)?;
        let file = AgreementFile {
            universe,
            scanners: sets
                .iter()
                .map(|s| ScannerCounts {
                    scanner_id: s.scanner_id.clone(),
                    scanned: s.scanned.len(),
                    flagged: s.flagged.len(),
                })
                .collect(),
            report,
        };
        let out = self.output(AGREEMENT_OUT);
        write_atomic(&out, &pretty(&file)).at(S)?;
        rec.finish(
            vec![out],
            serde_json::json!({ "scanners": sets.len(), "universe_size": universe_set.len() }),
        )
    }

    fn forge(&self, spec: &str) -> Result<Box<dyn ForgeClient>, PipelineError> {
        const S: Stage = Stage::Hijack;
        if let Some(file) = spec.strip_prefix("replay:") {
            let f = File::open(file).map_err(|e| config_err(format!("{file}: {e}")))?;
            return Ok(Box::new(ReplayForge::load(BufReader::new(f)).at(S)?));
        }
        if spec == "live" {
            let h = &self.cfg.hijack;
            let token = h.token_env.as_deref().and_then(|v| std::env::var(v).ok());
            let base = h.api_base.clone().unwrap_or_else(|| "https://api.github.com".into());
            return Ok(Box::new(
                LiveForge::new(base, Duration::from_secs(30)).with_token(token),
            ));
        }
        Err(config_err(format!(
            "hijack.forge `{spec}` must be `replay:FILE` or `live`"
        )))
    }

    pub fn hijack(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Hijack;
        let mut rec = self.recorder(S);
        let h = &self.cfg.hijack;
        let index = h
            .index
            .as_ref()
            .or(self.cfg.ingest.index.as_ref())
            .ok_or_else(|| config_err("hijack.index (or ingest.index) is required"))?;
        rec.input(index);
        let spec = h
            .forge
            .as_deref()
            .ok_or_else(|| config_err("hijack.forge is required"))?;
        if let Some(file) = spec.strip_prefix("replay:") {
            rec.input(Path::new(file));
        }
        let forge = self.forge(spec)?;
        let entries: Vec<IndexEntry> = ingest_index(File::open(index).at(S)?).at(S)?.entries;
        let audit = audit_index(&entries, forge.as_ref(), h.retirement_threshold, self.cfg.workers());
        let (out, out_summary) = (self.output(HIJACK_OUT), self.output(HIJACK_SUMMARY_OUT));
        write_atomic(&out, &jsonl(&audit.entries)).at(S)?;
        write_atomic(&out_summary, &pretty(&audit.summary)).at(S)?;
        rec.finish(
            vec![out, out_summary],
            serde_json::to_value(&audit.summary).unwrap_or_default(),
        )
    }

    pub fn report(&self) -> Result<StageOutcome, PipelineError> {
        const S: Stage = Stage::Report;
        let mut rec = self.recorder(S);
        let inputs = ReportInputs {
            scan: self.output(SCAN_OUT),
            flags: self.output(FLAGS_OUT),
            context_skills: self.output(CONTEXT_SKILLS_OUT),
            agreement: self.output(AGREEMENT_OUT),
            hijack_summary: self.output(HIJACK_SUMMARY_OUT),
        };
        for p in inputs.paths() {
            if p.exists() {
                rec.input(p);
            }
        }
        let summary = render_report(&inputs)?;
        let (json, txt) = (self.output(SUMMARY_JSON), self.output(SUMMARY_TXT));
        write_atomic(&json, &pretty(&summary)).at(S)?;
        write_atomic(&txt, summary.to_text().as_bytes()).at(S)?;
        rec.finish(
            vec![json, txt],
            serde_json::json!({ "skills_scanned": summary.skills_scanned }),
        )
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Inputs to [`render_report`]; `scan` and `flags` are required, the rest
/// are optional and their sections are omitted when absent.
#[derive(Debug, Clone)]
pub struct ReportInputs {
    pub scan: PathBuf,
    pub flags: PathBuf,
    pub context_skills: PathBuf,
    pub agreement: PathBuf,
    pub hijack_summary: PathBuf,
}

impl ReportInputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            scan: dir.join(SCAN_OUT),
            flags: dir.join(FLAGS_OUT),
            context_skills: dir.join(CONTEXT_SKILLS_OUT),
            agreement: dir.join(AGREEMENT_OUT),
            hijack_summary: dir.join(HIJACK_SUMMARY_OUT),
        }
    }

    fn paths(&self) -> [&Path; 5] {
        [
            &self.scan,
            &self.flags,
            &self.context_skills,
            &self.agreement,
            &self.hijack_summary,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextLine {
    pub digest: Digest,
    /// One-decimal display of the combined score.
    pub combined: String,
    pub category: Category,
    pub suspicious: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub flagged_skills: usize,
    pub rescored: usize,
    pub suspicious: usize,
    pub suspicious_rate: f64,
    pub categories: BTreeMap<Category, usize>,
    pub mean_combined: Option<String>,
    pub skills: Vec<ContextLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub scanners: Vec<ScannerCounts>,
    pub universe_size: usize,
    pub union_size: usize,
    /// Row a, column b: P(b flags | a flagged).
    pub probabilities: Vec<Vec<Option<f64>>>,
    pub flagged_by_k: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub skills_scanned: usize,
    pub overall: BTreeMap<Overall, usize>,
    pub flagged: usize,
    pub flag_rate: f64,
    pub repo_level: RateSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hijack: Option<AuditSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementSummary>,
}

fn malformed(msg: impl Into<String>) -> PipelineError {
    PipelineError::MalformedInput(msg.into())
}

fn optional<T>(path: &Path, read: impl FnOnce(&Path) -> Result<T, String>) -> Result<Option<T>, PipelineError> {
    if path.exists() {
        read(path).map(Some).map_err(malformed)
    } else {
        Ok(None)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Builds the run summary. Digests that disagree across inputs (a flag row
/// for an unscanned skill, a differing severity, a rescored skill that was
/// not flagged) are `MalformedInput`.
pub fn render_report(inputs: &ReportInputs) -> Result<Summary, PipelineError> {
    let reports: Vec<ScanReport> = read_jsonl(&inputs.scan).map_err(malformed)?;
    let flags: Vec<FlagRow> = read_jsonl(&inputs.flags).map_err(malformed)?;

    let mut overall_of: BTreeMap<Digest, Overall> = BTreeMap::new();
    for r in &reports {
        if overall_of.insert(r.digest, r.overall).is_some() {
            return Err(malformed(format!("digest {} scanned twice", r.digest)));
        }
    }
    let mut skill_flags: BTreeMap<Digest, bool> = BTreeMap::new();
    let mut mapping: BTreeMap<Digest, BTreeSet<String>> = BTreeMap::new();
    for f in &flags {
        match overall_of.get(&f.digest) {
            None => return Err(malformed(format!("flag row for unscanned digest {}", f.digest))),
            Some(o) if *o != f.overall => {
                return Err(malformed(format!(
                    "digest {}: scan says {o}, flags say {}",
                    f.digest, f.overall
                )))
            }
            _ => {}
        }
        if skill_flags.insert(f.digest, f.flagged).is_some() {
            return Err(malformed(format!("digest {} flagged twice", f.digest)));
        }
        mapping.insert(f.digest, f.repos.iter().cloned().collect());
    }
    if skill_flags.len() != overall_of.len() {
        return Err(malformed(format!(
            "{} scanned skills but {} flag rows",
            overall_of.len(),
            skill_flags.len()
        )));
    }
    let repo_level = repo_aggregate(&skill_flags, &mapping)
        .map_err(|e| malformed(e.to_string()))?
        .summary;

    let mut overall: BTreeMap<Overall, usize> = BTreeMap::new();
    for o in overall_of.values() {
        *overall.entry(*o).or_default() += 1;
    }
    let flagged = skill_flags.values().filter(|f| **f).count();

    let context = optional(&inputs.context_skills, read_jsonl::<SkillContextRow>)?
        .map(|rows| {
            let mut categories = BTreeMap::new();
            let mut skills = Vec::new();
            let mut total = Decimal::ZERO;
            for r in &rows {
                if skill_flags.get(&r.digest) != Some(&true) {
                    return Err(malformed(format!("context row for unflagged digest {}", r.digest)));
                }
                if let Some(s) = r.score {
                    *categories.entry(s.category).or_default() += 1;
                    total += s.combined;
                    skills.push(ContextLine {
                        digest: r.digest,
                        combined: display(s.combined),
                        category: s.category,
                        suspicious: s.suspicious,
                    });
                }
            }
            let suspicious = skills.iter().filter(|s| s.suspicious).count();
            Ok(ContextSummary {
                flagged_skills: rows.len(),
                rescored: skills.len(),
                suspicious,
                suspicious_rate: ratio(suspicious, skills.len()),
                categories,
                mean_combined: (!skills.is_empty()).then(|| display(total / Decimal::from(skills.len()))),
                skills,
            })
        })
        .transpose()?;

    let agreement = optional(&inputs.agreement, read_json::<AgreementFile>)?.map(|a| AgreementSummary {
        scanners: a.scanners,
        universe_size: a.report.universe_size,
        union_size: a.report.union_size,
        probabilities: a.report.probabilities,
        flagged_by_k: a.report.flagged_by_k,
    });
    let hijack = optional(&inputs.hijack_summary, read_json::<AuditSummary>)?;

    Ok(Summary {
        skills_scanned: reports.len(),
        overall,
        flagged,
        flag_rate: ratio(flagged, reports.len()),
        repo_level,
        context,
        hijack,
        agreement,
    })
}

fn pct(r: f64) -> String {
    format!("{:.2}%", r * 100.0)
}

impl Summary {
    /// Plain-text tables for humans.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "  {k:<28} {v}");
        };
        let _ = writeln!(s, "Skills");
        row(&mut s, "scanned", self.skills_scanned.to_string());
        for (o, n) in &self.overall {
            row(&mut s, &format!("severity {o}"), n.to_string());
        }
        row(&mut s, "flagged", format!("{} ({})", self.flagged, pct(self.flag_rate)));
        let r = &self.repo_level;
        row(&mut s, "repositories", r.repos.to_string());
        row(
            &mut s,
            "flagged repositories",
            format!("{} ({})", r.flagged_repos, pct(r.repo_rate)),
        );

        if let Some(c) = &self.context {
            let _ = writeln!(s, "\nRepository context");
            row(&mut s, "flagged skills", c.flagged_skills.to_string());
            row(&mut s, "rescored", c.rescored.to_string());
            row(
                &mut s,
                "suspicious",
                format!("{} ({})", c.suspicious, pct(c.suspicious_rate)),
            );
            for (cat, n) in &c.categories {
                row(&mut s, &format!("category {}", category_name(*cat)), n.to_string());
            }
            if let Some(m) = &c.mean_combined {
                row(&mut s, "mean combined", m.clone());
            }
            for l in &c.skills {
                let line = format!(
                    "  {}  {:>5}  {:<12} {}",
                    &l.digest.to_hex()[..12],
                    l.combined,
                    category_name(l.category),
                    if l.suspicious { "suspicious" } else { "" }
                );
                let _ = writeln!(s, "{}", line.trim_end());
            }
        }

        if let Some(h) = &self.hijack {
            let _ = writeln!(s, "\nHijack audit");
            row(&mut s, "entries", h.entries.to_string());
            for (v, n) in &h.verdicts {
                let name = serde_json::to_value(v)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                row(&mut s, &format!("verdict {name}"), n.to_string());
            }
            row(&mut s, "probe errors", h.errors.to_string());
            row(&mut s, "vulnerable repositories", h.vulnerable_repos.to_string());
            row(&mut s, "affected skills", h.affected_skills.to_string());
            let opt = |v: Option<u64>| v.map_or("-".into(), |v| v.to_string());
            row(
                &mut s,
                "installs median / max",
                format!("{} / {}", opt(h.installs_median), opt(h.installs_max)),
            );
        }

        if let Some(a) = &self.agreement {
            let _ = writeln!(s, "\nScanner agreement (P(column flags | row flagged))");
            row(&mut s, "common universe", a.universe_size.to_string());
            row(&mut s, "flagged by any", a.union_size.to_string());
            let w = a.scanners.iter().map(|c| c.scanner_id.len()).max().unwrap_or(0).max(6);
            let _ = write!(s, "  {:<w$}", "");
            for c in &a.scanners {
                let _ = write!(s, " {:>w$}", c.scanner_id);
            }
            let _ = writeln!(s);
            for (c, probs) in a.scanners.iter().zip(&a.probabilities) {
                let _ = write!(s, "  {:<w$}", c.scanner_id);
                for p in probs {
                    let cell = p.map_or("-".into(), |p| format!("{p:.3}"));
                    let _ = write!(s, " {cell:>w$}");
                }
                let _ = writeln!(s);
            }
            for (k, n) in &a.flagged_by_k {
                row(&mut s, &format!("flagged by exactly {k}"), n.to_string());
            }
        }
        s
    }
}

fn category_name(c: Category) -> &'static str {
    match c {
        Category::Low => "low",
        Category::Intermediate => "intermediate",
        Category::High => "high",
    }
}
