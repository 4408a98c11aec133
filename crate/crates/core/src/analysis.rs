//! Static analysis of skill artifacts: endpoint extraction, eTLD+1
//! resolution, geolocation and tracker lookup, script inventory, and
//! embedded-secret detection.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{self, BufRead};
use std::net::{Ipv4Addr, Ipv6Addr};
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::skill::{Digest, SkillArtifact};

const BUNDLED_SUFFIX_LIST: &str = include_str!("../data/public_suffix_list.dat");
const BUNDLED_DETECTORS: &str = include_str!("../data/secret_detectors.json");

pub const DEFAULT_SCRIPT_SUFFIXES: [&str; 8] = ["py", "sh", "js", "ts", "bash", "zsh", "ps1", "rb"];

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("validate mode requested without a validator")]
    ValidationUnavailable,
    #[error("malformed detector `{id}`: {reason}")]
    MalformedDetector { id: String, reason: String },
    #[error("malformed geo table line {line}: {reason}")]
    MalformedGeoTable { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// Endpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Url,
    Ipv4,
    Ipv6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum Continent {
    NA,
    EU,
    AS,
    SA,
    AF,
    OC,
    AN,
    #[default]
    #[serde(rename = "unknown")]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub raw: String,
    pub kind: EndpointKind,
    pub host: String,
    /// `None` when unresolved (IP hosts, hosts without a public suffix).
    pub etld1: Option<String>,
    pub continent: Continent,
    pub source_path: String,
}

impl Endpoint {
    pub fn is_ip(&self) -> bool {
        self.kind != EndpointKind::Url || self.host.parse::<std::net::IpAddr>().is_ok()
    }
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)\bhttps?://(?:\[[0-9a-f:.]+\]|[^\s/?#"'<>()\[\]{}`\\|^]+)(?:[/?#][^\s"'<>()\[\]{}`\\|^]*)?"#)
            .expect("url regex")
    })
}

fn ipv4_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d{1,3}(?:\.\d{1,3}){3}").expect("ipv4 regex"))
}

fn ipv6_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\[[0-9a-f:.]+\]|[0-9a-f]{0,4}(?::[0-9a-f]{0,4}){2,7}(?:(?::|\.)\d{1,3}(?:\.\d{1,3}){3})?")
            .expect("ipv6 regex")
    })
}

/// Byte spans of valid dotted-quad IPv4 literals that are not part of a
/// longer dotted number (so `1.2.3.4000` and `1.2.3.4.5` are rejected).
pub(crate) fn ipv4_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    ipv4_re()
        .find_iter(text)
        .filter(|m| {
            let before_ok = m.start() == 0 || {
                let b = bytes[m.start() - 1];
                !(b.is_ascii_digit() || b == b'.')
            };
            let after = &bytes[m.end()..];
            let after_ok = match after {
                [] => true,
                [b, ..] if b.is_ascii_digit() => false,
                [b'.', n, ..] if n.is_ascii_digit() => false,
                _ => true,
            };
            before_ok && after_ok && m.as_str().parse::<Ipv4Addr>().is_ok()
        })
        .map(|m| (m.start(), m.end()))
        .collect()
}

fn ipv6_spans(text: &str) -> Vec<(usize, usize, String)> {
    let bytes = text.as_bytes();
    let ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_' || b == b':' || b == b'.';
    ipv6_re()
        .find_iter(text)
        .filter_map(|m| {
            let s = m.as_str();
            let inner = s.strip_prefix('[').and_then(|r| r.strip_suffix(']'));
            let bracketed = inner.is_some();
            let addr = inner.unwrap_or(s);
            if !bracketed {
                let before_ok = m.start() == 0 || !ident(bytes[m.start() - 1]);
                let after_ok = m.end() == bytes.len() || !ident(bytes[m.end()]);
                // require a decimal digit somewhere so identifiers like `dead::beef` are skipped
                if !before_ok || !after_ok || !addr.bytes().any(|b| b.is_ascii_digit()) {
                    return None;
                }
            }
            addr.parse::<Ipv6Addr>().ok()?;
            Some((m.start(), m.end(), addr.to_ascii_lowercase()))
        })
        .collect()
}

fn url_host(url: &str) -> Option<String> {
    let rest = url.split_once("://")?.1;
    let authority = rest.split(['/', '?', '#']).next()?;
    let hostport = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    let host = if let Some(r) = hostport.strip_prefix('[') {
        r.split(']').next()?
    } else {
        hostport.split(':').next()?
    };
    let host = host.trim_end_matches('.').to_ascii_lowercase();
    (!host.is_empty()).then_some(host)
}

/// Endpoints found in one text, in offset order, before deduplication.
pub fn endpoints_in_text(text: &str, source_path: &str) -> Vec<Endpoint> {
    let mut found: Vec<(usize, Endpoint)> = Vec::new();
    let mut url_spans = Vec::new();
    for m in url_re().find_iter(text) {
        let raw = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?', '*']);
        let Some(host) = url_host(raw) else { continue };
        url_spans.push((m.start(), m.end()));
        found.push((
            m.start(),
            Endpoint {
                raw: raw.to_string(),
                kind: EndpointKind::Url,
                host,
                etld1: None,
                continent: Continent::Unknown,
                source_path: source_path.to_string(),
            },
        ));
    }
    let inside_url = |s: usize| url_spans.iter().any(|&(a, b)| s >= a && s < b);
    for (s, e) in ipv4_spans(text) {
        if inside_url(s) {
            continue;
        }
        let raw = &text[s..e];
        found.push((
            s,
            Endpoint {
                raw: raw.to_string(),
                kind: EndpointKind::Ipv4,
                host: raw.to_string(),
                etld1: None,
                continent: Continent::Unknown,
                source_path: source_path.to_string(),
            },
        ));
    }
    for (s, e, addr) in ipv6_spans(text) {
        if inside_url(s) {
            continue;
        }
        found.push((
            s,
            Endpoint {
                raw: text[s..e].to_string(),
                kind: EndpointKind::Ipv6,
                host: addr,
                etld1: None,
                continent: Continent::Unknown,
                source_path: source_path.to_string(),
            },
        ));
    }
    found.sort_by_key(|(off, _)| *off);
    found.into_iter().map(|(_, e)| e).collect()
}

/// Every URL, IPv4 and IPv6 endpoint in every file of the artifact, ordered by
/// path then offset, unique per `(raw, source_path)`.
pub fn extract_endpoints(artifact: &SkillArtifact) -> Vec<Endpoint> {
    let mut out = Vec::new();
    for file in artifact.files() {
        let mut seen = HashSet::new();
        for ep in endpoints_in_text(&file.text(), file.path()) {
            if seen.insert(ep.raw.clone()) {
                out.push(ep);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Public suffix list
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct PublicSuffixList {
    rules: HashSet<String>,
    wildcards: HashSet<String>,
    exceptions: HashSet<String>,
}

impl PublicSuffixList {
    /// Parses the standard list format (`//` comments, `*.` wildcards, `!`
    /// exceptions). Only the first whitespace-delimited token of a line counts.
    pub fn parse(text: &str) -> Self {
        let mut list = Self::default();
        for line in text.lines() {
            let Some(rule) = line.split_whitespace().next() else {
                continue;
            };
            if rule.starts_with("//") {
                continue;
            }
            let rule = rule.to_lowercase();
            if let Some(r) = rule.strip_prefix("*.") {
                list.wildcards.insert(r.to_string());
            } else if let Some(r) = rule.strip_prefix('!') {
                list.exceptions.insert(r.to_string());
            } else {
                list.rules.insert(rule);
            }
        }
        list
    }

    pub fn bundled() -> &'static Self {
        static LIST: OnceLock<PublicSuffixList> = OnceLock::new();
        LIST.get_or_init(|| Self::parse(BUNDLED_SUFFIX_LIST))
    }

    pub fn len(&self) -> usize {
        self.rules.len() + self.wildcards.len() + self.exceptions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of labels in the longest matching public suffix, if any rule
    /// matches. Hosts with no matching rule have no public suffix.
    fn suffix_labels(&self, labels: &[&str]) -> Option<usize> {
        for i in 0..labels.len() {
            let candidate = labels[i..].join(".");
            if self.exceptions.contains(&candidate) {
                return Some(labels.len() - i - 1);
            }
            if self.rules.contains(&candidate) {
                return Some(labels.len() - i);
            }
            if i + 1 < labels.len() && self.wildcards.contains(&labels[i + 1..].join(".")) {
                return Some(labels.len() - i);
            }
        }
        None
    }

    /// Registrable domain (public suffix plus one label).
    pub fn resolve_etld1(&self, host: &str) -> Option<String> {
        let host = host.trim_end_matches('.').to_lowercase();
        if host.is_empty() || host.parse::<std::net::IpAddr>().is_ok() {
            return None;
        }
        let labels: Vec<&str> = host.split('.').collect();
        if labels.iter().any(|l| l.is_empty()) {
            return None;
        }
        let n = self.suffix_labels(&labels)?;
        if n == 0 || n >= labels.len() {
            return None;
        }
        Some(labels[labels.len() - n - 1..].join("."))
    }
}

pub fn resolve_etld1(host: &str, suffix_list: &PublicSuffixList) -> Option<String> {
    suffix_list.resolve_etld1(host)
}

// ---------------------------------------------------------------------------
// Geolocation and trackers
// ---------------------------------------------------------------------------

/// Offline eTLD+1 → continent table.
#[derive(Debug, Clone, Default)]
pub struct GeoTable(HashMap<String, Continent>);

#[derive(Deserialize)]
struct GeoLine {
    etld1: String,
    continent: Continent,
}

impl GeoTable {
    pub fn from_pairs<I: IntoIterator<Item = (String, Continent)>>(pairs: I) -> Self {
        Self(pairs.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect())
    }

    /// JSONL of `{etld1, continent}`.
    pub fn load(reader: impl BufRead) -> Result<Self, AnalysisError> {
        let mut map = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let g: GeoLine = serde_json::from_str(&line).map_err(|e| AnalysisError::MalformedGeoTable {
                line: i + 1,
                reason: e.to_string(),
            })?;
            map.insert(g.etld1.to_lowercase(), g.continent);
        }
        Ok(Self(map))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn geolocate(etld1: &str, geo_table: &GeoTable) -> Continent {
    geo_table
        .0
        .get(&etld1.to_lowercase())
        .copied()
        .unwrap_or(Continent::Unknown)
}

/// Lowercase eTLD+1 tracker domains.
#[derive(Debug, Clone, Default)]
pub struct TrackerList(HashSet<String>);

impl TrackerList {
    pub fn from_domains<I: IntoIterator<Item = S>, S: AsRef<str>>(domains: I) -> Self {
        Self(domains.into_iter().map(|d| d.as_ref().trim().to_lowercase()).collect())
    }

    /// Newline-delimited; blank lines and `#` comments ignored.
    pub fn load(reader: impl BufRead) -> Result<Self, AnalysisError> {
        let mut set = HashSet::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                set.insert(t.to_lowercase());
            }
        }
        Ok(Self(set))
    }

    pub fn contains(&self, etld1: &str) -> bool {
        self.0.contains(etld1)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerMatch {
    pub endpoint: Endpoint,
    pub tracker: String,
}

pub fn match_trackers(endpoints: &[Endpoint], trackers: &TrackerList) -> Vec<TrackerMatch> {
    endpoints
        .iter()
        .filter_map(|e| {
            let d = e.etld1.as_ref()?;
            trackers.contains(d).then(|| TrackerMatch {
                endpoint: e.clone(),
                tracker: d.clone(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Scripts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ScriptInventory {
    pub counts_by_suffix: BTreeMap<String, usize>,
    pub has_scripts: bool,
    /// Script files that do not live under `scripts/`.
    pub nonconforming_scripts: Vec<String>,
}

pub fn default_script_suffixes() -> BTreeSet<String> {
    DEFAULT_SCRIPT_SUFFIXES.iter().map(|s| s.to_string()).collect()
}

pub fn script_inventory(artifact: &SkillArtifact, script_suffixes: &BTreeSet<String>) -> ScriptInventory {
    let mut inv = ScriptInventory::default();
    for f in artifact.files() {
        if !script_suffixes.contains(f.suffix()) {
            continue;
        }
        *inv.counts_by_suffix.entry(f.suffix().to_string()).or_default() += 1;
        if !f.path().starts_with("scripts/") {
            inv.nonconforming_scripts.push(f.path().to_string());
        }
    }
    inv.has_scripts = !inv.counts_by_suffix.is_empty();
    inv
}

// ---------------------------------------------------------------------------
// Secrets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationDescriptor {
    pub method: String,
    /// `{secret}` is substituted with the matched value.
    pub url_template: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectorSpec {
    detector_id: String,
    pattern: String,
    #[serde(default)]
    validation: Option<ValidationDescriptor>,
}

#[derive(Debug, Clone)]
pub struct SecretDetector {
    pub detector_id: String,
    pub pattern: Regex,
    pub validation: Option<ValidationDescriptor>,
}

impl SecretDetector {
    pub fn new(id: &str, pattern: &str) -> Result<Self, AnalysisError> {
        Ok(Self {
            detector_id: id.to_string(),
            pattern: Regex::new(pattern).map_err(|e| AnalysisError::MalformedDetector {
                id: id.to_string(),
                reason: e.to_string(),
            })?,
            validation: None,
        })
    }
}

/// Parses a detector rules file: `[{detector_id, pattern, validation?}]`.
pub fn load_detectors(json: &str) -> Result<Vec<SecretDetector>, AnalysisError> {
    let specs: Vec<DetectorSpec> = serde_json::from_str(json).map_err(|e| AnalysisError::MalformedDetector {
        id: "<file>".into(),
        reason: e.to_string(),
    })?;
    specs
        .into_iter()
        .map(|s| {
            let mut d = SecretDetector::new(&s.detector_id, &s.pattern)?;
            d.validation = s.validation;
            Ok(d)
        })
        .collect()
}

pub fn bundled_detectors() -> Vec<SecretDetector> {
    load_detectors(BUNDLED_DETECTORS).expect("bundled detectors are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validation {
    NotAttempted,
    Valid,
    Invalid,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SecretMode {
    #[default]
    Offline,
    Validate,
}

/// Checks a candidate credential against its provider. Only called in
/// validate mode.
pub trait SecretValidator: Sync {
    fn validate(&self, detector: &SecretDetector, secret: &str) -> Validation;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretFinding {
    pub detector_id: String,
    pub source_path: String,
    pub line: usize,
    pub redacted_match: String,
    pub validation: Validation,
}

/// Masks all but a short prefix and suffix.
pub fn redact(secret: &str) -> String {
    let chars: Vec<char> = secret.chars().collect();
    let keep = (chars.len() / 4).min(4);
    let mut out: String = chars[..keep].iter().collect();
    out.extend(std::iter::repeat_n('*', chars.len() - 2 * keep));
    out.extend(&chars[chars.len() - keep..]);
    out
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset].iter().filter(|&&b| b == b'\n').count() + 1
}

pub fn detect_secrets(
    artifact: &SkillArtifact,
    detectors: &[SecretDetector],
    mode: SecretMode,
    validator: Option<&dyn SecretValidator>,
) -> Result<Vec<SecretFinding>, AnalysisError> {
    let validator = match mode {
        SecretMode::Offline => None,
        SecretMode::Validate => Some(validator.ok_or(AnalysisError::ValidationUnavailable)?),
    };
    let mut out = Vec::new();
    for file in artifact.files() {
        let text = file.text();
        for det in detectors {
            for m in det.pattern.find_iter(&text) {
                let validation = match validator {
                    None => Validation::NotAttempted,
                    Some(v) => v.validate(det, m.as_str()),
                };
                out.push(SecretFinding {
                    detector_id: det.detector_id.clone(),
                    source_path: file.path().to_string(),
                    line: line_of(&text, m.start()),
                    redacted_match: redact(m.as_str()),
                    validation,
                });
            }
        }
    }
    out.sort_by(|a, b| (&a.source_path, a.line, &a.detector_id).cmp(&(&b.source_path, b.line, &b.detector_id)));
    Ok(out)
}

/// Validates credentials over HTTP using each detector's declared endpoint.
/// 2xx means valid, 401/403 invalid, anything else indeterminate. Detectors
/// without a validation descriptor are reported indeterminate without a call.
pub struct HttpSecretValidator {
    agent: ureq::Agent,
}

impl HttpSecretValidator {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl SecretValidator for HttpSecretValidator {
    fn validate(&self, detector: &SecretDetector, secret: &str) -> Validation {
        let Some(desc) = &detector.validation else {
            return Validation::Indeterminate;
        };
        let url = desc.url_template.replace("{secret}", secret);
        let auth = format!("Bearer {secret}");
        let res = match desc.method.to_ascii_uppercase().as_str() {
            "GET" => self.agent.get(&url).header("Authorization", &auth).call(),
            "POST" => self.agent.post(&url).header("Authorization", &auth).send_empty(),
            _ => return Validation::Indeterminate,
        };
        match res.map(|r| r.status().as_u16()) {
            Ok(200..=299) => Validation::Valid,
            Ok(401 | 403) => Validation::Invalid,
            _ => Validation::Indeterminate,
        }
    }
}

// ---------------------------------------------------------------------------
// Per-artifact record
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub suffix: String,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub digest: Digest,
    pub files: Vec<FileEntry>,
    pub endpoints: Vec<Endpoint>,
    pub trackers: Vec<TrackerMatch>,
    pub scripts: ScriptInventory,
    pub secrets: Vec<SecretFinding>,
}

/// Read-only lookup tables shared across artifacts.
pub struct AnalysisContext<'a> {
    pub suffix_list: &'a PublicSuffixList,
    pub geo: &'a GeoTable,
    pub trackers: &'a TrackerList,
    pub detectors: &'a [SecretDetector],
    pub script_suffixes: BTreeSet<String>,
    pub mode: SecretMode,
    pub validator: Option<&'a dyn SecretValidator>,
}

/// Endpoints with eTLD+1 and continent filled in.
pub fn resolved_endpoints(artifact: &SkillArtifact, psl: &PublicSuffixList, geo: &GeoTable) -> Vec<Endpoint> {
    let mut eps = extract_endpoints(artifact);
    for e in &mut eps {
        if e.kind == EndpointKind::Url {
            e.etld1 = psl.resolve_etld1(&e.host);
        }
        if let Some(d) = &e.etld1 {
            e.continent = geolocate(d, geo);
        }
    }
    eps
}

pub fn analyze(artifact: &SkillArtifact, ctx: &AnalysisContext<'_>) -> Result<AnalysisRecord, AnalysisError> {
    let endpoints = resolved_endpoints(artifact, ctx.suffix_list, ctx.geo);
    let trackers = match_trackers(&endpoints, ctx.trackers);
    Ok(AnalysisRecord {
        digest: artifact.digest(),
        files: artifact
            .files()
            .iter()
            .map(|f| FileEntry {
                path: f.path().to_string(),
                suffix: f.suffix().to_string(),
                size: f.content().len() as u64,
            })
            .collect(),
        scripts: script_inventory(artifact, &ctx.script_suffixes),
        secrets: detect_secrets(artifact, ctx.detectors, ctx.mode, ctx.validator)?,
        endpoints,
        trackers,
    })
}
