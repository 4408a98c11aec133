//! Corpus ingestion: index documents, repository fetchers, fetch budgets and
//! the content-addressed artifact store.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::Duration;

use chrono::{SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::skill::{Digest, Origin, SkillArtifact, SkillError, SkillFile, MANIFEST_FILE};

pub const DEFAULT_CLONE_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_MAX_SKILL_DIR_BYTES: u64 = 200 * 1024 * 1024;

/// Marker file that makes the local fixture fetcher answer `auth-required`.
pub const PRIVATE_MARKER: &str = ".skillguard-private";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("unreadable index source: {0}")]
    UnreadableSource(#[source] io::Error),
    #[error("fetch budget values must be strictly positive")]
    InvalidBudget,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no stored artifact for digest {0}")]
    NotFound(Digest),
    #[error("stored object {0} fails digest re-verification")]
    CorruptEntry(Digest),
    #[error("malformed catalog line {line}: {reason}")]
    MalformedCatalog { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// Index entries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Platform {
    Hosted,
    GitFolder,
    GitRoot,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Hosted => "hosted",
            Platform::GitFolder => "git-folder",
            Platform::GitRoot => "git-root",
        }
    }

    pub fn has_repository_context(self) -> bool {
        !matches!(self, Platform::Hosted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub platform: Platform,
    pub owner: String,
    pub repository: String,
    #[serde(default)]
    pub subpath: String,
    #[serde(default, deserialize_with = "scalar_map")]
    pub listing_metadata: BTreeMap<String, String>,
}

fn scalar_map<'de, D>(de: D) -> Result<BTreeMap<String, String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw: BTreeMap<String, serde_json::Value> = Deserialize::deserialize(de)?;
    raw.into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => Ok((k, s)),
            serde_json::Value::Number(n) => Ok((k, n.to_string())),
            serde_json::Value::Bool(b) => Ok((k, b.to_string())),
            other => Err(serde::de::Error::custom(format!(
                "listing_metadata.{k} must be a scalar, got {other}"
            ))),
        })
        .collect()
}

impl IndexEntry {
    fn validate(&self) -> Result<(), &'static str> {
        if self.owner.is_empty() || self.repository.is_empty() {
            return Err("owner and repository are required");
        }
        match self.platform {
            Platform::GitFolder if self.subpath.is_empty() => Err("git-folder entry without subpath"),
            Platform::GitRoot if !self.subpath.is_empty() => Err("git-root entry with subpath"),
            _ => Ok(()),
        }
    }

    pub fn repo_id(&self) -> String {
        format!("{}/{}", self.owner, self.repository)
    }

    pub fn metadata_u64(&self, key: &str) -> Option<u64> {
        self.listing_metadata.get(key)?.trim().parse().ok()
    }
}

#[derive(Debug, Default)]
pub struct IndexParse {
    pub entries: Vec<IndexEntry>,
    pub skipped: usize,
}

/// Reads an index JSONL document. Malformed lines are counted and skipped.
pub fn ingest_index(source: impl Read) -> Result<IndexParse, IngestError> {
    let mut out = IndexParse::default();
    for line in BufReader::new(source).lines() {
        let line = line.map_err(IngestError::UnreadableSource)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<IndexEntry>(&line) {
            Ok(e) if e.validate().is_ok() => out.entries.push(e),
            _ => out.skipped += 1,
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Candidate filtering
// ---------------------------------------------------------------------------

/// A repository activity event (e.g. from an event archive).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepoEvent {
    pub repo: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub activity: Vec<String>,
}

/// Repositories whose title or activity text contains any keyword.
pub fn filter_candidates<'a>(events: impl IntoIterator<Item = &'a RepoEvent>, keywords: &[String]) -> Vec<String> {
    let keywords: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    if keywords.is_empty() {
        return out;
    }
    for ev in events {
        if seen.contains(&ev.repo) {
            continue;
        }
        let hit = std::iter::once(&ev.title)
            .chain(ev.activity.iter())
            .map(|s| s.to_lowercase())
            .any(|s| keywords.iter().any(|k| s.contains(k.as_str())));
        if hit {
            seen.insert(ev.repo.clone());
            out.push(ev.repo.clone());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// File trees and fetchers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Source {
    Memory(Arc<[u8]>),
    Disk(PathBuf),
}

#[derive(Debug, Clone)]
struct TreeFile {
    len: u64,
    source: Source,
}

/// Removes a scratch clone directory once the last tree referencing it drops.
#[derive(Debug)]
struct ScratchDir(PathBuf);

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

/// Repository file tree. File sizes are known up front; disk-backed contents
/// are read lazily so budgets can be checked before anything is loaded.
#[derive(Debug, Clone, Default)]
pub struct FileTree {
    files: BTreeMap<String, TreeFile>,
    _scratch: Option<Arc<ScratchDir>>,
}

impl FileTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: &str, content: impl Into<Vec<u8>>) {
        let content: Vec<u8> = content.into();
        self.files.insert(
            path.to_string(),
            TreeFile {
                len: content.len() as u64,
                source: Source::Memory(content.into()),
            },
        );
    }

    pub fn from_files<'a>(files: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> Self {
        let mut t = Self::new();
        for (p, c) in files {
            t.insert(p, c);
        }
        t
    }

    /// Indexes a directory on disk; `.git` and the private marker are skipped.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut tree = Self::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d)? {
                let entry = entry?;
                let name = entry.file_name();
                if name == ".git" || name == PRIVATE_MARKER {
                    continue;
                }
                let ft = entry.file_type()?;
                let path = entry.path();
                if ft.is_dir() {
                    stack.push(path);
                } else if ft.is_file() {
                    let rel = path
                        .strip_prefix(dir)
                        .expect("walk stays under root")
                        .to_string_lossy()
                        .replace('\\', "/");
                    let len = entry.metadata()?.len();
                    tree.files.insert(
                        rel,
                        TreeFile {
                            len,
                            source: Source::Disk(path),
                        },
                    );
                }
            }
        }
        Ok(tree)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.files.contains_key(path)
    }

    pub fn len_of(&self, path: &str) -> Option<u64> {
        self.files.get(path).map(|f| f.len)
    }

    pub fn read(&self, path: &str) -> io::Result<Vec<u8>> {
        match self.files.get(path) {
            None => Err(io::Error::new(io::ErrorKind::NotFound, path.to_string())),
            Some(TreeFile {
                source: Source::Memory(b),
                ..
            }) => Ok(b.to_vec()),
            Some(TreeFile {
                source: Source::Disk(p),
                ..
            }) => fs::read(p),
        }
    }

    /// Paths under directory `dir` (`"."` is the root), with the prefix kept.
    pub fn paths_under<'a>(&'a self, dir: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.paths().filter(move |p| is_under(p, dir))
    }

    pub fn bytes_under(&self, dir: &str) -> u64 {
        self.files
            .iter()
            .filter(|(p, _)| is_under(p, dir))
            .map(|(_, f)| f.len)
            .sum()
    }
}

pub(crate) fn is_under(path: &str, dir: &str) -> bool {
    dir == "." || dir.is_empty() || path.strip_prefix(dir).is_some_and(|r| r.starts_with('/'))
}

pub(crate) fn relative_to<'a>(path: &'a str, dir: &str) -> &'a str {
    if dir == "." || dir.is_empty() {
        path
    } else {
        &path[dir.len() + 1..]
    }
}

/// Every directory holding a file named exactly `SKILL.md`, sorted.
pub fn discover_skills(tree: &FileTree) -> Vec<String> {
    let mut dirs: Vec<String> = tree
        .paths()
        .filter_map(|p| match p.rsplit_once('/') {
            Some((dir, name)) if name == MANIFEST_FILE => Some(dir.to_string()),
            None if p == MANIFEST_FILE => Some(".".to_string()),
            _ => None,
        })
        .collect();
    dirs.sort();
    dirs.dedup();
    dirs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "kebab-case")]
pub enum FetchFailure {
    #[error("skill path missing from repository")]
    MissingPath,
    #[error("repository does not exist")]
    MissingRepo,
    #[error("repository requires authentication")]
    AuthRequired,
    #[error("fetch exceeded the clone timeout")]
    Timeout,
    #[error("skill directory exceeds the size budget")]
    SizeExceeded,
}

/// Resolves `(owner, repository)` to a file tree.
pub trait RepoFetcher: Send + Sync {
    fn fetch(&self, owner: &str, repository: &str) -> Result<FileTree, FetchFailure>;
}

/// Serves repositories from `<root>/<owner>/<repository>/` on disk.
#[derive(Debug, Clone)]
pub struct LocalFixtureFetcher {
    root: PathBuf,
}

impl LocalFixtureFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl RepoFetcher for LocalFixtureFetcher {
    fn fetch(&self, owner: &str, repository: &str) -> Result<FileTree, FetchFailure> {
        if owner.contains(['/', '\\'])
            || owner.starts_with('.')
            || repository.contains(['/', '\\'])
            || repository.starts_with('.')
        {
            return Err(FetchFailure::MissingRepo);
        }
        let dir = self.root.join(owner).join(repository);
        if !dir.is_dir() {
            return Err(FetchFailure::MissingRepo);
        }
        if dir.join(PRIVATE_MARKER).exists() {
            return Err(FetchFailure::AuthRequired);
        }
        FileTree::from_dir(&dir).map_err(|_| FetchFailure::MissingRepo)
    }
}

/// Shallow (`--depth 1`) clones through the `git` executable.
#[derive(Debug, Clone)]
pub struct ShallowGitFetcher {
    base_url: String,
    scratch_root: PathBuf,
}

static CLONE_SEQ: AtomicU64 = AtomicU64::new(0);

impl ShallowGitFetcher {
    /// `base_url` is e.g. `https://github.com`; clones `<base>/<owner>/<repo>`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            scratch_root: std::env::temp_dir(),
        }
    }

    pub fn with_scratch_root(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch_root = dir.into();
        self
    }
}

impl RepoFetcher for ShallowGitFetcher {
    fn fetch(&self, owner: &str, repository: &str) -> Result<FileTree, FetchFailure> {
        let dest = self.scratch_root.join(format!(
            "skillguard-clone-{}-{}",
            std::process::id(),
            CLONE_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let scratch = Arc::new(ScratchDir(dest.clone()));
        let url = format!("{}/{}/{}", self.base_url, owner, repository);
        let output = Command::new("git")
            .args(["clone", "--quiet", "--depth", "1", "--no-tags", &url])
            .arg(&dest)
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("GIT_ASKPASS", "true")
            .output()
            .map_err(|_| FetchFailure::MissingRepo)?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr).to_lowercase();
            let auth = [
                "authentication",
                "could not read username",
                "terminal prompts disabled",
                "permission denied",
            ];
            return Err(if auth.iter().any(|m| stderr.contains(m)) {
                FetchFailure::AuthRequired
            } else {
                FetchFailure::MissingRepo
            });
        }
        let mut tree = FileTree::from_dir(&dest).map_err(|_| FetchFailure::MissingRepo)?;
        tree._scratch = Some(scratch);
        Ok(tree)
    }
}

// ---------------------------------------------------------------------------
// Fetching skills under a budget
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchBudget {
    clone_timeout: Duration,
    max_skill_dir_bytes: u64,
}

impl Default for FetchBudget {
    fn default() -> Self {
        Self {
            clone_timeout: DEFAULT_CLONE_TIMEOUT,
            max_skill_dir_bytes: DEFAULT_MAX_SKILL_DIR_BYTES,
        }
    }
}

impl FetchBudget {
    pub fn new(clone_timeout: Duration, max_skill_dir_bytes: u64) -> Result<Self, IngestError> {
        if clone_timeout.is_zero() || max_skill_dir_bytes == 0 {
            return Err(IngestError::InvalidBudget);
        }
        Ok(Self {
            clone_timeout,
            max_skill_dir_bytes,
        })
    }

    pub fn clone_timeout(&self) -> Duration {
        self.clone_timeout
    }

    pub fn max_skill_dir_bytes(&self) -> u64 {
        self.max_skill_dir_bytes
    }
}

fn fetch_with_timeout(
    fetcher: &Arc<dyn RepoFetcher>,
    entry: &IndexEntry,
    timeout: Duration,
) -> Result<FileTree, FetchFailure> {
    let (tx, rx) = mpsc::channel();
    let fetcher = Arc::clone(fetcher);
    let (owner, repo) = (entry.owner.clone(), entry.repository.clone());
    thread::spawn(move || {
        let _ = tx.send(fetcher.fetch(&owner, &repo));
    });
    match rx.recv_timeout(timeout) {
        Ok(res) => res,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(FetchFailure::Timeout),
        // fetcher thread panicked
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(FetchFailure::MissingRepo),
    }
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Fetches the skill(s) an index entry points at.
///
/// Folder and hosted entries yield the artifact rooted at `subpath`; git-root
/// entries yield one artifact per discovered SKILL.md directory. If any skill
/// directory exceeds the byte budget the whole entry fails, so callers never
/// see a partial result.
pub fn fetch_skill(
    entry: &IndexEntry,
    budget: &FetchBudget,
    fetcher: &Arc<dyn RepoFetcher>,
) -> Result<Vec<SkillArtifact>, FetchFailure> {
    let tree = fetch_with_timeout(fetcher, entry, budget.clone_timeout)?;
    let roots = match entry.platform {
        Platform::GitRoot => {
            let found = discover_skills(&tree);
            if found.is_empty() {
                return Err(FetchFailure::MissingPath);
            }
            found
        }
        Platform::GitFolder | Platform::Hosted => {
            if entry.subpath.is_empty() {
                vec![".".to_string()]
            } else {
                vec![crate::skill::normalize_path(&entry.subpath).map_err(|_| FetchFailure::MissingPath)?]
            }
        }
    };

    for root in &roots {
        let manifest = if root == "." {
            MANIFEST_FILE.to_string()
        } else {
            format!("{root}/{MANIFEST_FILE}")
        };
        if !tree.contains(&manifest) {
            return Err(FetchFailure::MissingPath);
        }
        if tree.bytes_under(root) > budget.max_skill_dir_bytes {
            return Err(FetchFailure::SizeExceeded);
        }
    }

    let retrieved_at = now_rfc3339();
    let mut artifacts = Vec::with_capacity(roots.len());
    for root in roots {
        let mut files = Vec::new();
        for path in tree.paths_under(&root) {
            let content = tree.read(path).map_err(|_| FetchFailure::MissingPath)?;
            let file = SkillFile::new(relative_to(path, &root), content).map_err(|_| FetchFailure::MissingPath)?;
            files.push(file);
        }
        let origin = Origin {
            platform: entry.platform.as_str().to_string(),
            owner: entry.owner.clone(),
            repository: entry.repository.clone(),
            subpath: if root == "." { String::new() } else { root },
            retrieved_at: retrieved_at.clone(),
        };
        let artifact = SkillArtifact::new(files, origin).map_err(|e| match e {
            SkillError::MissingManifest => FetchFailure::MissingPath,
            _ => FetchFailure::MissingPath,
        })?;
        if artifact.total_bytes() > budget.max_skill_dir_bytes {
            return Err(FetchFailure::SizeExceeded);
        }
        artifacts.push(artifact);
    }
    Ok(artifacts)
}

// ---------------------------------------------------------------------------
// Content-addressed store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FetchStatus {
    Ok,
    MissingPath,
    MissingRepo,
    AuthRequired,
    Timeout,
    SizeExceeded,
}

impl From<FetchFailure> for FetchStatus {
    fn from(f: FetchFailure) -> Self {
        match f {
            FetchFailure::MissingPath => FetchStatus::MissingPath,
            FetchFailure::MissingRepo => FetchStatus::MissingRepo,
            FetchFailure::AuthRequired => FetchStatus::AuthRequired,
            FetchFailure::Timeout => FetchStatus::Timeout,
            FetchFailure::SizeExceeded => FetchStatus::SizeExceeded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogRecord {
    /// Hex digest; empty unless `fetch_status` is ok.
    pub digest: String,
    pub platform: String,
    pub owner: String,
    pub repository: String,
    pub subpath: String,
    pub retrieved_at: String,
    pub fetch_status: FetchStatus,
    pub stored_at: String,
}

impl CatalogRecord {
    pub fn origin(&self) -> Origin {
        Origin {
            platform: self.platform.clone(),
            owner: self.owner.clone(),
            repository: self.repository.clone(),
            subpath: self.subpath.clone(),
            retrieved_at: self.retrieved_at.clone(),
        }
    }

    pub fn repo_id(&self) -> String {
        format!("{}/{}", self.owner, self.repository)
    }
}

/// On-disk layout: `objects/<first2hex>/<fullhex>` holds the canonical
/// encoding; `catalog.jsonl` is an append-only list of [`CatalogRecord`]s.
#[derive(Debug)]
pub struct ContentStore {
    root: PathBuf,
    catalog_lock: Mutex<()>,
}

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

impl ContentStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("objects"))?;
        Ok(Self {
            root,
            catalog_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn object_path(&self, digest: &Digest) -> PathBuf {
        let hex = digest.to_hex();
        self.root.join("objects").join(&hex[..2]).join(hex)
    }

    fn catalog_path(&self) -> PathBuf {
        self.root.join("catalog.jsonl")
    }

    /// Writes the object (write-then-rename) unless already present, without
    /// touching the catalog.
    pub fn write_object(&self, artifact: &SkillArtifact) -> Result<(), StoreError> {
        let path = self.object_path(&artifact.digest());
        if path.exists() {
            return Ok(());
        }
        let dir = path.parent().expect("object path has parent");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&artifact.canonical_encoding())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn append_catalog(&self, records: &[CatalogRecord]) -> Result<(), StoreError> {
        let _guard = self.catalog_lock.lock().expect("catalog lock poisoned");
        let mut f = OpenOptions::new().create(true).append(true).open(self.catalog_path())?;
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).expect("record serializes");
            buf.push(b'\n');
        }
        f.write_all(&buf)?;
        Ok(())
    }

    fn ok_record(artifact: &SkillArtifact) -> CatalogRecord {
        let o = &artifact.origin;
        CatalogRecord {
            digest: artifact.digest().to_hex(),
            platform: o.platform.clone(),
            owner: o.owner.clone(),
            repository: o.repository.clone(),
            subpath: o.subpath.clone(),
            retrieved_at: o.retrieved_at.clone(),
            fetch_status: FetchStatus::Ok,
            stored_at: now_rfc3339(),
        }
    }

    pub fn failure_record(entry: &IndexEntry, status: FetchStatus) -> CatalogRecord {
        let now = now_rfc3339();
        CatalogRecord {
            digest: String::new(),
            platform: entry.platform.as_str().to_string(),
            owner: entry.owner.clone(),
            repository: entry.repository.clone(),
            subpath: entry.subpath.clone(),
            retrieved_at: now.clone(),
            fetch_status: status,
            stored_at: now,
        }
    }

    /// Stores an artifact. Idempotent per digest; every call adds one origin
    /// to the catalog.
    pub fn put(&self, artifact: &SkillArtifact) -> Result<CatalogRecord, StoreError> {
        self.write_object(artifact)?;
        let rec = Self::ok_record(artifact);
        self.append_catalog(std::slice::from_ref(&rec))?;
        Ok(rec)
    }

    /// Loads and re-verifies an artifact. The origin is the first catalog
    /// record for the digest.
    pub fn get(&self, digest: &Digest) -> Result<SkillArtifact, StoreError> {
        let bytes = match fs::read(self.object_path(digest)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(*digest)),
            Err(e) => return Err(e.into()),
        };
        if Digest::of(&bytes) != *digest {
            return Err(StoreError::CorruptEntry(*digest));
        }
        let hex = digest.to_hex();
        let origin = self
            .catalog()?
            .into_iter()
            .find(|r| r.digest == hex)
            .map(|r| r.origin())
            .unwrap_or_default();
        SkillArtifact::from_canonical(&bytes, origin).map_err(|_| StoreError::CorruptEntry(*digest))
    }

    pub fn catalog(&self) -> Result<Vec<CatalogRecord>, StoreError> {
        let f = match File::open(self.catalog_path()) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|e| StoreError::MalformedCatalog {
                line: i + 1,
                reason: e.to_string(),
            })?;
            out.push(rec);
        }
        Ok(out)
    }

    /// Distinct stored digests, sorted.
    pub fn digests(&self) -> Result<Vec<Digest>, StoreError> {
        let mut set = BTreeSet::new();
        for r in self.catalog()? {
            if r.fetch_status == FetchStatus::Ok {
                if let Ok(d) = r.digest.parse() {
                    set.insert(d);
                }
            }
        }
        Ok(set.into_iter().collect())
    }

    /// All origins per stored digest, in catalog order.
    pub fn origins(&self) -> Result<BTreeMap<Digest, Vec<Origin>>, StoreError> {
        let mut map: BTreeMap<Digest, Vec<Origin>> = BTreeMap::new();
        for r in self.catalog()? {
            if r.fetch_status == FetchStatus::Ok {
                if let Ok(d) = r.digest.parse() {
                    map.entry(d).or_default().push(r.origin());
                }
            }
        }
        Ok(map)
    }
}

// ---------------------------------------------------------------------------
// Batch ingest
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub entries: usize,
    pub records: usize,
    pub stored: usize,
    pub unique: usize,
    pub by_status: BTreeMap<String, usize>,
}

/// Fetches every entry with at most `workers` concurrent fetches and records
/// exactly one catalog record per failed entry, or one per fetched skill.
/// Catalog lines are appended in index order.
pub fn ingest_entries(
    entries: &[IndexEntry],
    budget: &FetchBudget,
    fetcher: Arc<dyn RepoFetcher>,
    store: &ContentStore,
    workers: usize,
) -> Result<IngestSummary, StoreError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let outcomes: Vec<Result<Vec<SkillArtifact>, FetchFailure>> =
        pool.install(|| entries.par_iter().map(|e| fetch_skill(e, budget, &fetcher)).collect());

    let mut records = Vec::new();
    let mut summary = IngestSummary {
        entries: entries.len(),
        ..Default::default()
    };
    let mut unique = BTreeSet::new();
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(artifacts) => {
                for a in artifacts {
                    store.write_object(&a)?;
                    unique.insert(a.digest());
                    summary.stored += 1;
                    records.push(ContentStore::ok_record(&a));
                }
            }
            Err(f) => records.push(ContentStore::failure_record(entry, f.into())),
        }
    }
    for r in &records {
        let key = serde_json::to_value(r.fetch_status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *summary.by_status.entry(key).or_default() += 1;
    }
    summary.records = records.len();
    summary.unique = unique.len();
    store.append_catalog(&records)?;
    Ok(summary)
}
