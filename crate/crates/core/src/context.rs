//! Repository-aware rescoring: context bundles, metadata maturity, codebase
//! alignment, the 70/30 combination, categories, suspicious-repository
//! detection and cross-repository aggregation.
//!
//! Metadata buckets (each signal scores one cell; the score is their mean):
//!
//! | signal  | buckets                                                     |
//! |---------|-------------------------------------------------------------|
//! | size    | < 2 MB → 20, 2–50 MB → 60, > 50 MB → 100                    |
//! | age     | < 2 weeks → 10, < 4 months → 40, ≤ 1 year → 70, else 100    |
//! | recency | < 1 week → 100, < 1 month → 70, < 6 months → 40, else 10    |
//! | stars   | 0 → 0, 1–99 → 40, 100–999 → 80, ≥ 1000 → 100               |
//! | forks   | 0 → 0, 1–99 → 50, ≥ 100 → 100                               |
//! | issues  | 0 → 20, 1–20 → 70, > 20 → 100                               |
//!
//! MB is 10^6 bytes; a week is 7 days, a month 30, four months 120, six months
//! 182 and a year 365.
//!
//! Codebase points: baseline by maliciousness (low 40, medium 20, high 0),
//! plus domain match (0/10/20), code similarity (0/10/20), README
//! consistency (0/5/10) and 7 for support signals.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use chrono::{DateTime, Duration, Utc};
use regex::Regex;
use rust_decimal::{Decimal, MathematicalOps, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::features::Transport;
use crate::ingest::{is_under, FileTree};
use crate::scanner::{scan, Overall, RuleSet};
use crate::skill::{parse_manifest, Origin, SkillArtifact, SkillFile};

pub const MANIFEST_LINE_BUDGET: usize = 200;
pub const MAX_CODE_FILES: usize = 3;
pub const CODE_FILE_LINES: usize = 100;

pub const CODE_SUFFIXES: [&str; 28] = [
    "py", "js", "mjs", "cjs", "ts", "tsx", "jsx", "sh", "bash", "zsh", "ps1", "rb", "go", "rs", "java", "kt", "swift",
    "c", "h", "cc", "cpp", "hpp", "cs", "php", "lua", "pl", "scala", "r",
];

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("no SKILL.md at `{0}`")]
    MissingSkillFile(String),
    #[error("repository created at {created_at} is after the scoring time {now}")]
    ClockSkew {
        created_at: DateTime<Utc>,
        now: DateTime<Utc>,
    },
    #[error("score {0} outside 0–100")]
    OutOfRange(Decimal),
    #[error("no scores to aggregate")]
    EmptyInput,
    #[error("dispersion needs at least two repositories, got {0}")]
    InsufficientRepos(usize),
    #[error("cannot read `{path}`: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("alignment backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("alignment answer failed schema validation: {0}")]
    MalformedBackendAnswer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Low,
    Intermediate,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoMetadata {
    pub size_bytes: u64,
    pub created_at: DateTime<Utc>,
    pub last_update: DateTime<Utc>,
    pub stars: u64,
    pub forks: u64,
    pub open_issues: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentAssessment {
    pub domain_match: Level,
    pub code_similarity: Level,
    pub readme_consistency: Level,
    pub support_signals: bool,
    pub maliciousness: Level,
    pub is_security_tool: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextScore {
    pub codebase: Decimal,
    pub metadata: Decimal,
    pub combined: Decimal,
    pub category: Category,
    pub suspicious: bool,
}

impl ContextScore {
    pub fn new(assessment: &AlignmentAssessment, metadata: Decimal) -> Result<Self, ContextError> {
        let codebase = codebase_score(assessment);
        let combined = combine(codebase, metadata)?;
        Ok(Self {
            codebase,
            metadata,
            combined,
            category: categorize(combined),
            suspicious: detect_suspicious(assessment),
        })
    }
}

/// Metadata scores are sixths and aggregates are thirds, so exact decimal
/// arithmetic leaves residue in the last few of its 28 digits (145/3 · 0.3
/// becomes 14.4999…9). Comparisons and display settle that residue first.
pub const SETTLE_DP: u32 = 24;

fn settle(x: Decimal) -> Decimal {
    x.round_dp(SETTLE_DP)
}

/// One-decimal display rounding, half away from zero.
pub fn display(score: Decimal) -> String {
    format!(
        "{:.1}",
        settle(score).round_dp_with_strategy(1, RoundingStrategy::MidpointAwayFromZero)
    )
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

const MB: u64 = 1_000_000;

fn bucket_size(bytes: u64) -> u32 {
    match bytes {
        b if b < 2 * MB => 20,
        b if b <= 50 * MB => 60,
        _ => 100,
    }
}

fn bucket_age(age: Duration) -> u32 {
    match age {
        a if a < Duration::days(14) => 10,
        a if a < Duration::days(120) => 40,
        a if a <= Duration::days(365) => 70,
        _ => 100,
    }
}

fn bucket_recency(since: Duration) -> u32 {
    match since {
        s if s < Duration::days(7) => 100,
        s if s < Duration::days(30) => 70,
        s if s < Duration::days(182) => 40,
        _ => 10,
    }
}

fn bucket_stars(n: u64) -> u32 {
    match n {
        0 => 0,
        1..=99 => 40,
        100..=999 => 80,
        _ => 100,
    }
}

fn bucket_forks(n: u64) -> u32 {
    match n {
        0 => 0,
        1..=99 => 50,
        _ => 100,
    }
}

fn bucket_issues(n: u64) -> u32 {
    match n {
        0 => 20,
        1..=20 => 70,
        _ => 100,
    }
}

pub fn metadata_score(meta: &RepoMetadata, now: DateTime<Utc>) -> Result<Decimal, ContextError> {
    if meta.created_at > now {
        return Err(ContextError::ClockSkew {
            created_at: meta.created_at,
            now,
        });
    }
    let since_update = (now - meta.last_update).max(Duration::zero());
    let total = bucket_size(meta.size_bytes)
        + bucket_age(now - meta.created_at)
        + bucket_recency(since_update)
        + bucket_stars(meta.stars)
        + bucket_forks(meta.forks)
        + bucket_issues(meta.open_issues);
    Ok(Decimal::from(total) / Decimal::from(6))
}

fn level_points(level: Level, medium: u32, high: u32) -> u32 {
    match level {
        Level::Low => 0,
        Level::Medium => medium,
        Level::High => high,
    }
}

pub fn codebase_score(a: &AlignmentAssessment) -> Decimal {
    let baseline = match a.maliciousness {
        Level::Low => 40,
        Level::Medium => 20,
        Level::High => 0,
    };
    let points = baseline
        + level_points(a.domain_match, 10, 20)
        + level_points(a.code_similarity, 10, 20)
        + level_points(a.readme_consistency, 5, 10)
        + if a.support_signals { 7 } else { 0 };
    Decimal::from(points)
}

fn check_range(x: Decimal) -> Result<Decimal, ContextError> {
    if x < Decimal::ZERO || x > Decimal::ONE_HUNDRED {
        return Err(ContextError::OutOfRange(x));
    }
    Ok(x)
}

/// `0.7·codebase + 0.3·metadata`, exact.
pub fn combine(codebase: Decimal, metadata: Decimal) -> Result<Decimal, ContextError> {
    let (c, m) = (check_range(codebase)?, check_range(metadata)?);
    Ok((Decimal::from(7) * c + Decimal::from(3) * m) / Decimal::TEN)
}

pub fn categorize(combined: Decimal) -> Category {
    let combined = settle(combined);
    if combined < Decimal::from(40) {
        Category::Low
    } else if combined < Decimal::from(60) {
        Category::Intermediate
    } else {
        Category::High
    }
}

/// Aligned with the codebase, shows maliciousness, and is not a security tool.
pub fn detect_suspicious(a: &AlignmentAssessment) -> bool {
    a.maliciousness != Level::Low
        && !a.is_security_tool
        && (a.domain_match != Level::Low || a.code_similarity != Level::Low)
}

// ---------------------------------------------------------------------------
// Cross-repository
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoScore {
    pub repo_id: String,
    pub score: ContextScore,
}

/// The (at most) three repositories with the highest metadata score; ties go
/// to the higher codebase score, then the smaller repo id.
pub fn most_relevant(scores: &[RepoScore]) -> Vec<&RepoScore> {
    let mut ranked: Vec<&RepoScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .metadata
            .cmp(&a.score.metadata)
            .then(b.score.codebase.cmp(&a.score.codebase))
            .then(a.repo_id.cmp(&b.repo_id))
    });
    ranked.truncate(3);
    ranked
}

/// Means over [`most_relevant`]; suspicious if any retained repo is.
pub fn aggregate_cross_repo(scores: &[RepoScore]) -> Result<ContextScore, ContextError> {
    if scores.is_empty() {
        return Err(ContextError::EmptyInput);
    }
    let ranked = most_relevant(scores);
    let n = Decimal::from(ranked.len());
    let mean = |f: fn(&ContextScore) -> Decimal| ranked.iter().map(|r| f(&r.score)).sum::<Decimal>() / n;
    let combined = mean(|s| s.combined);
    Ok(ContextScore {
        codebase: mean(|s| s.codebase),
        metadata: mean(|s| s.metadata),
        combined,
        category: categorize(combined),
        suspicious: ranked.iter().any(|r| r.score.suspicious),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dispersion {
    pub variance: Decimal,
    pub std: Decimal,
    pub range: Decimal,
}

/// Population variance, standard deviation and range of codebase scores.
pub fn cross_repo_dispersion(codebase_scores: &[Decimal]) -> Result<Dispersion, ContextError> {
    if codebase_scores.len() < 2 {
        return Err(ContextError::InsufficientRepos(codebase_scores.len()));
    }
    let n = Decimal::from(codebase_scores.len());
    let mean = codebase_scores.iter().sum::<Decimal>() / n;
    let variance = codebase_scores.iter().map(|x| (x - mean) * (x - mean)).sum::<Decimal>() / n;
    let max = codebase_scores.iter().max().copied().unwrap_or_default();
    let min = codebase_scores.iter().min().copied().unwrap_or_default();
    Ok(Dispersion {
        variance,
        std: variance.sqrt().unwrap_or_default(),
        range: max - min,
    })
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeExcerpt {
    pub path: String,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub skill_md_excerpt: String,
    pub readme_excerpt: String,
    pub code_files: Vec<CodeExcerpt>,
    pub has_readme: bool,
    pub has_code: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleStats {
    pub manifest_lines: usize,
    pub readme_lines: usize,
    pub code_files: usize,
    pub code_lines: usize,
}

impl ContextBundle {
    pub fn stats(&self) -> BundleStats {
        BundleStats {
            manifest_lines: self.skill_md_excerpt.lines().count(),
            readme_lines: self.readme_excerpt.lines().count(),
            code_files: self.code_files.len(),
            code_lines: self.code_files.iter().map(|c| c.excerpt.lines().count()).sum(),
        }
    }
}

fn head(text: &str, n: usize) -> String {
    text.lines().take(n).collect::<Vec<_>>().join("\n")
}

fn parent(path: &str) -> &str {
    path.rsplit_once('/').map_or(".", |(d, _)| d)
}

fn components(dir: &str) -> Vec<&str> {
    if dir == "." || dir.is_empty() {
        Vec::new()
    } else {
        dir.split('/').collect()
    }
}

fn tree_distance(a: &str, b: &str) -> usize {
    let (a, b) = (components(a), components(b));
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    a.len() + b.len() - 2 * common
}

fn is_readme(path: &str) -> bool {
    !path.contains('/') && {
        let l = path.to_ascii_lowercase();
        l == "readme" || l.strip_prefix("readme.").is_some_and(|ext| !ext.contains('.'))
    }
}

fn read_text(tree: &FileTree, path: &str) -> Result<String, ContextError> {
    tree.read(path)
        .map(|b| String::from_utf8_lossy(&b).into_owned())
        .map_err(|e| ContextError::Unreadable {
            path: path.into(),
            reason: e.to_string(),
        })
}

/// SKILL.md then the root README within a shared line budget, plus up to three
/// repository code files outside the skill directory, ranked by: same parent
/// directory as the skill, then tree distance, then size (largest first),
/// then path.
pub fn build_context_bundle(tree: &FileTree, skill_path: &str) -> Result<ContextBundle, ContextError> {
    let skill_dir = if skill_path.is_empty() {
        "."
    } else {
        skill_path.trim_end_matches('/')
    };
    let manifest_path = if skill_dir == "." {
        "SKILL.md".to_string()
    } else {
        format!("{skill_dir}/SKILL.md")
    };
    if !tree.contains(&manifest_path) {
        return Err(ContextError::MissingSkillFile(skill_dir.to_string()));
    }
    let skill_md_excerpt = head(&read_text(tree, &manifest_path)?, MANIFEST_LINE_BUDGET);
    let remaining = MANIFEST_LINE_BUDGET - skill_md_excerpt.lines().count();

    let readme = tree
        .paths()
        .filter(|p| is_readme(p))
        .min_by_key(|p| (p.len(), p.to_string()));
    let readme_excerpt = match readme {
        Some(p) if remaining > 0 => head(&read_text(tree, p)?, remaining),
        _ => String::new(),
    };

    let skill_parent = parent(skill_dir);
    let mut candidates: Vec<(bool, usize, u64, &str)> = tree
        .paths()
        .filter(|p| !is_under(p, skill_dir) && CODE_SUFFIXES.contains(&crate::skill::suffix_of(p).as_str()))
        .map(|p| {
            let dir = parent(p);
            (
                dir != skill_parent,
                tree_distance(dir, skill_dir),
                tree.len_of(p).unwrap_or(0),
                p,
            )
        })
        .collect();
    candidates.sort_by(|a, b| (a.0, a.1, std::cmp::Reverse(a.2), a.3).cmp(&(b.0, b.1, std::cmp::Reverse(b.2), b.3)));
    let code_files = candidates
        .into_iter()
        .take(MAX_CODE_FILES)
        .map(|(_, _, _, p)| {
            Ok(CodeExcerpt {
                path: p.to_string(),
                excerpt: head(&read_text(tree, p)?, CODE_FILE_LINES),
            })
        })
        .collect::<Result<Vec<_>, ContextError>>()?;

    Ok(ContextBundle {
        skill_md_excerpt,
        readme_excerpt,
        has_readme: readme.is_some(),
        has_code: !code_files.is_empty(),
        code_files,
    })
}

// ---------------------------------------------------------------------------
// Alignment backends
// ---------------------------------------------------------------------------

/// Judges how well a skill aligns with its repository. One call per
/// (skill, repository); no state carried between calls.
pub trait AlignmentBackend: Send + Sync {
    fn assess(&self, bundle: &ContextBundle) -> Result<AlignmentAssessment, ContextError>;
}

const STOPWORDS: &[&str] = &[
    "this",
    "that",
    "with",
    "from",
    "your",
    "have",
    "will",
    "when",
    "what",
    "which",
    "into",
    "then",
    "than",
    "them",
    "they",
    "their",
    "there",
    "these",
    "those",
    "also",
    "only",
    "each",
    "more",
    "most",
    "some",
    "such",
    "other",
    "about",
    "after",
    "before",
    "should",
    "would",
    "could",
    "using",
    "used",
    "use",
    "uses",
    "make",
    "makes",
    "file",
    "files",
    "name",
    "description",
    "skill",
    "skills",
    "true",
    "false",
    "none",
    "null",
    "return",
    "import",
    "self",
    "def",
    "function",
    "const",
    "http",
    "https",
    "www",
    "com",
    "example",
    "like",
    "just",
    "must",
    "need",
    "needs",
    "does",
    "done",
    "here",
    "where",
    "while",
    "following",
    "step",
    "steps",
    "first",
    "data",
];

const SECURITY_TERMS: &[&str] = &[
    "security",
    "pentest",
    "penetration",
    "red team",
    "redteam",
    "vulnerability",
    "vulnerabilities",
    "exploit",
    "malware",
    "forensics",
    "ctf",
    "threat",
    "offensive",
    "payload",
    "audit",
    "scanner",
    "detection",
    "incident response",
];

const SUPPORT_TERMS: &[&str] = &[
    "install",
    "usage",
    "license",
    "contributing",
    "example",
    "test",
    "documentation",
    "changelog",
];

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z][a-z0-9]*|[A-Z]+(?:[0-9]+)?").expect("word regex"))
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    word_re()
        .find_iter(text)
        .map(|m| m.as_str().to_ascii_lowercase())
        .filter(|w| w.len() >= 4 && !STOPWORDS.contains(&w.as_str()))
}

/// Most frequent words, ties broken alphabetically.
fn keywords(text: &str, n: usize) -> Vec<String> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for w in words(text) {
        *freq.entry(w).or_default() += 1;
    }
    let mut v: Vec<_> = freq.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(n).map(|(w, _)| w).collect()
}

fn coverage(keys: &[String], vocabulary: &BTreeSet<String>) -> f64 {
    if keys.is_empty() {
        return 0.0;
    }
    keys.iter().filter(|k| vocabulary.contains(*k)).count() as f64 / keys.len() as f64
}

fn level(ratio: f64, medium: f64, high: f64) -> Level {
    if ratio >= high {
        Level::High
    } else if ratio >= medium {
        Level::Medium
    } else {
        Level::Low
    }
}

/// Deterministic lexical alignment judge.
pub struct HeuristicAlignment {
    rules: RuleSet,
}

impl HeuristicAlignment {
    pub fn new(rules: RuleSet) -> Self {
        Self { rules }
    }
}

impl Default for HeuristicAlignment {
    fn default() -> Self {
        Self::new(RuleSet::starter())
    }
}

impl AlignmentBackend for HeuristicAlignment {
    fn assess(&self, b: &ContextBundle) -> Result<AlignmentAssessment, ContextError> {
        let manifest = parse_manifest(&b.skill_md_excerpt).ok();
        let skill_keys = keywords(&b.skill_md_excerpt, 20);
        let readme_vocab: BTreeSet<String> = words(&b.readme_excerpt).collect();
        let code_text: String = b
            .code_files
            .iter()
            .map(|c| format!("{}\n{}\n", c.path, c.excerpt))
            .collect();
        let code_vocab: BTreeSet<String> = words(&code_text).collect();

        let domain_match = if b.has_readme {
            level(coverage(&skill_keys, &readme_vocab), 0.15, 0.4)
        } else {
            Level::Low
        };
        let code_similarity = if b.has_code {
            level(coverage(&skill_keys, &code_vocab), 0.1, 0.3)
        } else {
            Level::Low
        };

        let readme_lower = b.readme_excerpt.to_lowercase();
        let name = manifest.as_ref().map(|m| m.name.to_lowercase()).unwrap_or_default();
        let name_mentioned =
            !name.is_empty() && (readme_lower.contains(&name) || readme_lower.contains(&name.replace(['-', '_'], " ")));
        let desc_keys = manifest
            .as_ref()
            .map(|m| keywords(&m.description, 10))
            .unwrap_or_default();
        let readme_consistency = if name_mentioned {
            Level::High
        } else if coverage(&desc_keys, &readme_vocab) >= 0.5 {
            Level::Medium
        } else {
            Level::Low
        };

        let support_signals = SUPPORT_TERMS.iter().filter(|t| readme_lower.contains(*t)).count() >= 2;

        let mut files = vec![SkillFile::new("SKILL.md", b.skill_md_excerpt.as_bytes()).expect("fixed path")];
        for c in &b.code_files {
            if let Ok(f) = SkillFile::new(&format!("repo/{}", c.path), c.excerpt.as_bytes()) {
                files.push(f);
            }
        }
        let maliciousness = match SkillArtifact::new(files, Origin::default()).map(|a| scan(&a, &self.rules).overall) {
            Ok(Overall::Critical) => Level::High,
            Ok(Overall::High) => Level::Medium,
            _ => Level::Low,
        };

        let all_lower = format!("{}\n{}", b.skill_md_excerpt.to_lowercase(), readme_lower);
        let is_security_tool = SECURITY_TERMS.iter().filter(|t| all_lower.contains(*t)).count() >= 2;

        Ok(AlignmentAssessment {
            domain_match,
            code_similarity,
            readme_consistency,
            support_signals,
            maliciousness,
            is_security_tool,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlignmentAnswer {
    assessment: AlignmentAssessment,
}

pub fn parse_alignment_answer(body: &str) -> Result<AlignmentAssessment, ContextError> {
    serde_json::from_str::<AlignmentAnswer>(body)
        .map(|a| a.assessment)
        .map_err(|e| ContextError::MalformedBackendAnswer(e.to_string()))
}

/// Sends the bundle as JSON and expects `{"assessment": {...}}`; one retry on
/// a malformed answer.
pub struct RemoteAlignment<T: Transport> {
    endpoint: String,
    transport: T,
}

impl<T: Transport> RemoteAlignment<T> {
    pub fn new(endpoint: impl Into<String>, transport: T) -> Self {
        Self {
            endpoint: endpoint.into(),
            transport,
        }
    }
}

impl<T: Transport> AlignmentBackend for RemoteAlignment<T> {
    fn assess(&self, bundle: &ContextBundle) -> Result<AlignmentAssessment, ContextError> {
        let body = serde_json::to_string(bundle).expect("bundle serializes");
        let mut last = None;
        for _ in 0..2 {
            let answer = self
                .transport
                .post_json(&self.endpoint, &body)
                .map_err(|e| ContextError::BackendUnavailable(e.0))?;
            match parse_alignment_answer(&answer) {
                Ok(a) => return Ok(a),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("two attempts were made"))
    }
}
