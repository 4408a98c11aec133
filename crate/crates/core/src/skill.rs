//! Skill data model: SKILL.md manifests, skill files, artifacts and their
//! canonical content digests.
//!
//! An artifact's digest is SHA-256 over a canonical encoding of its file set.
//! Files are sorted bytewise by path and each one is framed as
//!
//! ```text
//! path bytes | 0x00 | content length (u64, big-endian) | content bytes
//! ```
//!
//! The same encoding is what the content-addressed store writes to disk, so a
//! stored object can always be re-verified against its name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

pub const MANIFEST_FILE: &str = "SKILL.md";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SkillError {
    #[error("duplicate path in artifact: {0}")]
    DuplicatePath(String),
    #[error("invalid path {path:?}: {reason}")]
    InvalidPath { path: String, reason: &'static str },
    #[error("artifact has no SKILL.md")]
    MissingManifest,
    #[error("truncated or malformed canonical encoding")]
    MalformedEncoding,
    #[error("invalid digest: {0}")]
    InvalidDigest(String),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no frontmatter: first line must be `---`")]
    NoFrontmatter,
    #[error("frontmatter is not terminated by a `---` line")]
    UnterminatedFrontmatter,
    #[error("missing required field `{0}`")]
    MissingRequiredField(&'static str),
    #[error("duplicate frontmatter key `{0}`")]
    DuplicateKey(String),
    #[error("malformed frontmatter line {line}: {text:?}")]
    MalformedLine { line: usize, text: String },
}

// ---------------------------------------------------------------------------
// Digest
// ---------------------------------------------------------------------------

/// SHA-256 digest of a skill artifact's canonical encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Hashes arbitrary bytes.
    pub fn of(data: &[u8]) -> Self {
        Self(Sha256::digest(data).into())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl FromStr for Digest {
    type Err = SkillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| SkillError::InvalidDigest(s.to_string()))?;
        Ok(Self(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Files and artifacts
// ---------------------------------------------------------------------------

/// One file of a skill, addressed by a normalized relative path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillFile {
    path: String,
    content: Vec<u8>,
    suffix: String,
}

impl SkillFile {
    /// Normalizes `path` to forward slashes and rejects absolute paths,
    /// `..` segments and NUL bytes.
    pub fn new(path: &str, content: impl Into<Vec<u8>>) -> Result<Self, SkillError> {
        let path = normalize_path(path)?;
        let suffix = suffix_of(&path);
        Ok(Self {
            path,
            content: content.into(),
            suffix,
        })
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn content(&self) -> &[u8] {
        &self.content
    }

    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    /// Content decoded as UTF-8, replacing invalid sequences.
    pub fn text(&self) -> std::borrow::Cow<'_, str> {
        String::from_utf8_lossy(&self.content)
    }
}

pub fn normalize_path(raw: &str) -> Result<String, SkillError> {
    let invalid = |reason| SkillError::InvalidPath {
        path: raw.to_string(),
        reason,
    };
    if raw.contains('\0') {
        return Err(invalid("contains NUL"));
    }
    let slashed = raw.replace('\\', "/");
    if slashed.starts_with('/') {
        return Err(invalid("absolute path"));
    }
    let mut segments = Vec::new();
    for seg in slashed.split('/') {
        match seg {
            "" | "." => continue,
            ".." => return Err(invalid("parent directory segment")),
            s => segments.push(s),
        }
    }
    if segments.is_empty() {
        return Err(invalid("empty path"));
    }
    Ok(segments.join("/"))
}

/// Lowercase text after the final `.` of the final path segment.
pub fn suffix_of(path: &str) -> String {
    let name = path.rsplit('/').next().unwrap_or(path);
    match name.rfind('.') {
        Some(i) => name[i + 1..].to_ascii_lowercase(),
        None => String::new(),
    }
}

/// Where an artifact was retrieved from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Origin {
    pub platform: String,
    pub owner: String,
    pub repository: String,
    #[serde(default)]
    pub subpath: String,
    #[serde(default)]
    pub retrieved_at: String,
}

impl Origin {
    pub fn repo_id(&self) -> String {
        format!("{}/{}", self.owner, self.repository)
    }
}

/// A skill's complete file set plus its canonical digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillArtifact {
    files: Vec<SkillFile>,
    digest: Digest,
    pub origin: Origin,
}

impl SkillArtifact {
    pub fn new(files: Vec<SkillFile>, origin: Origin) -> Result<Self, SkillError> {
        let mut files = files;
        files.sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
        if let Some(w) = files.windows(2).find(|w| w[0].path == w[1].path) {
            return Err(SkillError::DuplicatePath(w[0].path.clone()));
        }
        if !files.iter().any(|f| f.path == MANIFEST_FILE) {
            return Err(SkillError::MissingManifest);
        }
        let digest = Digest::of(&encode_sorted(&files));
        Ok(Self { files, digest, origin })
    }

    /// Rebuilds an artifact from its canonical encoding.
    pub fn from_canonical(bytes: &[u8], origin: Origin) -> Result<Self, SkillError> {
        Self::new(decode_canonical(bytes)?, origin)
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    /// Files in canonical (bytewise path) order.
    pub fn files(&self) -> &[SkillFile] {
        &self.files
    }

    pub fn file(&self, path: &str) -> Option<&SkillFile> {
        self.files.iter().find(|f| f.path == path)
    }

    pub fn manifest_file(&self) -> &SkillFile {
        self.file(MANIFEST_FILE).expect("artifact invariant: SKILL.md present")
    }

    pub fn canonical_encoding(&self) -> Vec<u8> {
        encode_sorted(&self.files)
    }

    /// Sum of file content lengths.
    pub fn total_bytes(&self) -> u64 {
        self.files.iter().map(|f| f.content.len() as u64).sum()
    }
}

fn encode_sorted(files: &[SkillFile]) -> Vec<u8> {
    let cap = files.iter().map(|f| f.path.len() + 9 + f.content.len()).sum();
    let mut out = Vec::with_capacity(cap);
    for f in files {
        out.extend_from_slice(f.path.as_bytes());
        out.push(0);
        out.extend_from_slice(&(f.content.len() as u64).to_be_bytes());
        out.extend_from_slice(&f.content);
    }
    out
}

/// Canonical encoding of an arbitrary file set.
pub fn canonical_encoding(files: &[SkillFile]) -> Result<Vec<u8>, SkillError> {
    let mut sorted: Vec<SkillFile> = files.to_vec();
    sorted.sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
    if let Some(w) = sorted.windows(2).find(|w| w[0].path == w[1].path) {
        return Err(SkillError::DuplicatePath(w[0].path.clone()));
    }
    Ok(encode_sorted(&sorted))
}

/// SHA-256 over the canonical encoding of `files`. Independent of input order.
pub fn artifact_digest(files: &[SkillFile]) -> Result<Digest, SkillError> {
    Ok(Digest::of(&canonical_encoding(files)?))
}

pub fn decode_canonical(mut bytes: &[u8]) -> Result<Vec<SkillFile>, SkillError> {
    let mut files = Vec::new();
    while !bytes.is_empty() {
        let nul = bytes
            .iter()
            .position(|&b| b == 0)
            .ok_or(SkillError::MalformedEncoding)?;
        let path = std::str::from_utf8(&bytes[..nul]).map_err(|_| SkillError::MalformedEncoding)?;
        let rest = &bytes[nul + 1..];
        if rest.len() < 8 {
            return Err(SkillError::MalformedEncoding);
        }
        let len = u64::from_be_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let rest = &rest[8..];
        if rest.len() < len {
            return Err(SkillError::MalformedEncoding);
        }
        files.push(SkillFile::new(path, &rest[..len])?);
        bytes = &rest[len..];
    }
    Ok(files)
}

/// Result of [`dedup`].
#[derive(Debug, Default)]
pub struct Dedup {
    pub unique: Vec<SkillArtifact>,
    /// Every origin per digest, the retained one first.
    pub duplicates: BTreeMap<Digest, Vec<Origin>>,
}

/// Keeps the first artifact per digest in input order.
pub fn dedup(artifacts: impl IntoIterator<Item = SkillArtifact>) -> Dedup {
    let mut seen = BTreeSet::new();
    let mut out = Dedup::default();
    for a in artifacts {
        out.duplicates.entry(a.digest).or_default().push(a.origin.clone());
        if seen.insert(a.digest) {
            out.unique.push(a);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// SKILL.md
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillManifest {
    pub name: String,
    pub description: String,
    pub extra_metadata: IndexMap<String, String>,
    pub body: String,
}

fn is_key(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn unquote(v: &str) -> &str {
    let b = v.as_bytes();
    if b.len() >= 2 && (b[0] == b'"' || b[0] == b'\'') && b[b.len() - 1] == b[0] {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

/// Parses a SKILL.md document.
///
/// Frontmatter holds flat `key: value` lines. Indented lines and `- ` list
/// items continue the previous key and are kept verbatim, so nested YAML
/// survives as a single string value. Blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<SkillManifest, ParseError> {
    let mut lines = text.split('\n');
    let first = lines.next().ok_or(ParseError::NoFrontmatter)?;
    if first.trim_end_matches('\r') != "---" {
        return Err(ParseError::NoFrontmatter);
    }

    let mut pairs: IndexMap<String, String> = IndexMap::new();
    let mut last_key: Option<String> = None;
    let mut closed = false;
    let mut consumed = first.len() + 1;

    for (idx, raw) in lines.by_ref().enumerate() {
        consumed += raw.len() + 1;
        let line = raw.trim_end_matches('\r');
        if line == "---" {
            closed = true;
            break;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with([' ', '\t']) || line.starts_with("- ") {
            let key = last_key.as_ref().ok_or_else(|| ParseError::MalformedLine {
                line: idx + 2,
                text: line.to_string(),
            })?;
            let v = pairs.get_mut(key).expect("key inserted");
            if !v.is_empty() {
                v.push('\n');
            }
            v.push_str(line);
            continue;
        }
        let (key, value) =
            line.split_once(':')
                .filter(|(k, _)| is_key(k))
                .ok_or_else(|| ParseError::MalformedLine {
                    line: idx + 2,
                    text: line.to_string(),
                })?;
        if pairs.contains_key(key) {
            return Err(ParseError::DuplicateKey(key.to_string()));
        }
        pairs.insert(key.to_string(), unquote(value.trim()).to_string());
        last_key = Some(key.to_string());
    }

    if !closed {
        return Err(ParseError::UnterminatedFrontmatter);
    }
    let body = text.get(consumed.min(text.len())..).unwrap_or("").to_string();

    let mut take = |field: &'static str| match pairs.shift_remove(field) {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(ParseError::MissingRequiredField(field)),
    };
    let name = take("name")?;
    let description = take("description")?;
    Ok(SkillManifest {
        name,
        description,
        extra_metadata: pairs,
        body,
    })
}

fn render_value(v: &str) -> String {
    let needs_quotes = v.starts_with(['"', '\''])
        || v.trim() != v
        || (v.len() >= 2 && v.ends_with(['"', '\'']) && v.starts_with(['"', '\'']));
    if needs_quotes && !v.contains('\n') {
        format!("\"{v}\"")
    } else {
        v.to_string()
    }
}

/// Renders a manifest in the format [`parse_manifest`] accepts.
pub fn render_manifest(m: &SkillManifest) -> String {
    let mut out = String::from("---\n");
    let mut push = |k: &str, v: &str| {
        out.push_str(k);
        if v.contains('\n') && (v.starts_with([' ', '\t']) || v.starts_with("- ")) {
            // nested block: every line is a continuation line
            out.push_str(":\n");
            out.push_str(v);
        } else {
            out.push_str(": ");
            out.push_str(&render_value(v));
        }
        out.push('\n');
    };
    push("name", &m.name);
    push("description", &m.description);
    for (k, v) in &m.extra_metadata {
        push(k, v);
    }
    out.push_str("---\n");
    out.push_str(&m.body);
    out
}
