//! Deterministic four-module scanner: static rule matching, compiled-artifact
//! integrity, shell-pipeline analysis and lexical behavioral heuristics.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use globset::{Glob, GlobMatcher};
use regex::{Regex, RegexSet};
use serde::{Deserialize, Serialize};

use crate::analysis::{ipv4_spans, DEFAULT_SCRIPT_SUFFIXES};
use crate::skill::{Digest, SkillArtifact, SkillFile};

const STARTER_RULES: &str = include_str!("../data/rules/starter.json");

#[derive(Debug, thiserror::Error)]
pub enum ScanError {
    #[error("malformed rule `{id}`: {reason}")]
    MalformedRule { id: String, reason: String },
    #[error("cannot read rule file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Low => "LOW",
            Severity::Medium => "MEDIUM",
            Severity::High => "HIGH",
            Severity::Critical => "CRITICAL",
        })
    }
}

/// Report-level severity; `None` when there are no findings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Overall {
    #[default]
    None,
    Low,
    Medium,
    High,
    Critical,
}

impl From<Severity> for Overall {
    fn from(s: Severity) -> Self {
        match s {
            Severity::Low => Overall::Low,
            Severity::Medium => Overall::Medium,
            Severity::High => Overall::High,
            Severity::Critical => Overall::Critical,
        }
    }
}

impl Overall {
    pub fn is_high_or_critical(self) -> bool {
        self >= Overall::High
    }
}

impl fmt::Display for Overall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Overall::None => f.write_str("NONE"),
            Overall::Low => Severity::Low.fmt(f),
            Overall::Medium => Severity::Medium.fmt(f),
            Overall::High => Severity::High.fmt(f),
            Overall::Critical => Severity::Critical.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanModule {
    Static,
    BytecodeIntegrity,
    Pipeline,
    Behavioral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanFinding {
    pub module: ScanModule,
    pub rule_id: String,
    pub source_path: String,
    pub line: Option<usize>,
    pub severity: Severity,
    pub note: String,
}

impl ScanFinding {
    fn new(
        module: ScanModule,
        rule_id: &str,
        file: &SkillFile,
        line: Option<usize>,
        severity: Severity,
        note: impl Into<String>,
    ) -> Self {
        Self {
            module,
            rule_id: rule_id.to_string(),
            source_path: file.path().to_string(),
            line,
            severity,
            note: note.into(),
        }
    }

    fn sort_key(&self) -> (ScanModule, &str, Option<usize>, &str) {
        (self.module, &self.source_path, self.line, &self.rule_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub digest: Digest,
    pub findings: Vec<ScanFinding>,
    pub overall: Overall,
}

impl ScanReport {
    pub fn new(digest: Digest, mut findings: Vec<ScanFinding>) -> Self {
        findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let overall = overall_of(&findings);
        Self {
            digest,
            findings,
            overall,
        }
    }
}

pub fn overall_of(findings: &[ScanFinding]) -> Overall {
    findings
        .iter()
        .map(|f| Overall::from(f.severity))
        .max()
        .unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Pattern {
    Literal(String),
    Regex(Regex),
}

impl Pattern {
    fn first_match(&self, text: &str) -> Option<usize> {
        match self {
            Pattern::Literal(s) => text.find(s.as_str()),
            Pattern::Regex(r) => r.find(text).map(|m| m.start()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combinator {
    Any,
    All,
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub severity: Severity,
    pub combinator: Combinator,
    pub patterns: Vec<Pattern>,
    pub file_glob: Option<GlobMatcher>,
    pub description: String,
}

impl Rule {
    /// Offset of the first location satisfying the rule in `text`.
    fn first_location(&self, text: &str) -> Option<usize> {
        let mut hits = self.patterns.iter().map(|p| p.first_match(text));
        match self.combinator {
            Combinator::Any => hits.flatten().min(),
            Combinator::All => hits.try_fold(usize::MAX, |acc, h| h.map(|o| acc.min(o))),
        }
    }

    fn applies_to(&self, path: &str) -> bool {
        self.file_glob.as_ref().is_none_or(|g| g.is_match(path))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PatternSpec {
    Tagged { kind: String, pattern: String },
    Literal { literal: String },
    Regex { regex: String },
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum MatchSpec {
    Any(Vec<PatternSpec>),
    All(Vec<PatternSpec>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleSpec {
    id: String,
    severity: Severity,
    #[serde(rename = "match")]
    matcher: MatchSpec,
    #[serde(default)]
    file_glob: Option<String>,
    #[serde(default)]
    description: String,
}

impl RuleSpec {
    fn compile(self) -> Result<Rule, ScanError> {
        let bad = |reason: String| ScanError::MalformedRule {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(bad("empty id".into()));
        }
        let (combinator, specs) = match &self.matcher {
            MatchSpec::Any(p) => (Combinator::Any, p),
            MatchSpec::All(p) => (Combinator::All, p),
        };
        if specs.is_empty() {
            return Err(bad("no patterns".into()));
        }
        let mut patterns = Vec::with_capacity(specs.len());
        for spec in specs {
            let (kind, pat) = match spec {
                PatternSpec::Tagged { kind, pattern } => (kind.as_str(), pattern),
                PatternSpec::Literal { literal } => ("literal", literal),
                PatternSpec::Regex { regex } => ("regex", regex),
            };
            if pat.is_empty() {
                return Err(bad("empty pattern".into()));
            }
            patterns.push(match kind {
                "literal" => Pattern::Literal(pat.clone()),
                "regex" => Pattern::Regex(Regex::new(pat).map_err(|e| bad(e.to_string()))?),
                other => return Err(bad(format!("unknown pattern kind `{other}`"))),
            });
        }
        let file_glob = match &self.file_glob {
            None => None,
            Some(g) => Some(Glob::new(g).map_err(|e| bad(e.to_string()))?.compile_matcher()),
        };
        Ok(Rule {
            severity: self.severity,
            combinator,
            patterns,
            file_glob,
            description: self.description.clone(),
            id: self.id,
        })
    }
}

/// Ordered, read-only rule collection.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_json(json: &str) -> Result<Self, ScanError> {
        let specs: Vec<RuleSpec> = serde_json::from_str(json).map_err(|e| ScanError::MalformedRule {
            id: "<file>".into(),
            reason: e.to_string(),
        })?;
        let mut set = Self::empty();
        for spec in specs {
            set.push(spec.compile()?)?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, ScanError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn starter() -> Self {
        Self::from_json(STARTER_RULES).expect("starter rule pack is valid")
    }

    pub fn push(&mut self, rule: Rule) -> Result<(), ScanError> {
        if self.rules.iter().any(|r| r.id == rule.id) {
            return Err(ScanError::MalformedRule {
                id: rule.id,
                reason: "duplicate id".into(),
            });
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset].iter().filter(|&&b| b == b'\n').count() + 1
}

pub fn scan_static_rules(artifact: &SkillArtifact, rules: &RuleSet) -> Vec<ScanFinding> {
    let mut out = Vec::new();
    for file in artifact.files() {
        let text = file.text();
        for rule in rules.rules().iter().filter(|r| r.applies_to(file.path())) {
            if let Some(off) = rule.first_location(&text) {
                let note = if rule.description.is_empty() {
                    rule.id.clone()
                } else {
                    rule.description.clone()
                };
                out.push(ScanFinding::new(
                    ScanModule::Static,
                    &rule.id,
                    file,
                    Some(line_at(&text, off)),
                    rule.severity,
                    note,
                ));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Compiled artifacts
// ---------------------------------------------------------------------------

fn file_name(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

fn stem_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

/// Directory where the source for a compiled file is expected; `__pycache__`
/// entries map to their parent.
fn source_dir(path: &str) -> &str {
    let dir = path.rsplit_once('/').map_or("", |(d, _)| d);
    match dir.rsplit_once('/') {
        Some((parent, "__pycache__")) => parent,
        None if dir == "__pycache__" => "",
        _ => dir,
    }
}

pub fn scan_bytecode_integrity(artifact: &SkillArtifact) -> Vec<ScanFinding> {
    let mut out = Vec::new();
    for file in artifact.files().iter().filter(|f| f.suffix() == "pyc") {
        let stem = stem_of(file_name(file.path()));
        let dir = source_dir(file.path());
        let expected = if dir.is_empty() {
            format!("{stem}.py")
        } else {
            format!("{dir}/{stem}.py")
        };
        if artifact.file(&expected).is_none() {
            out.push(ScanFinding::new(
                ScanModule::BytecodeIntegrity,
                "orphan-compiled-artifact",
                file,
                None,
                Severity::High,
                format!("orphan compiled artifact: no {expected}"),
            ));
        }
        match pyc_source_name(file.content()) {
            Some(src) => {
                let src_stem = stem_of(file_name(&src.replace('\\', "/"))).to_string();
                if src_stem != stem {
                    out.push(ScanFinding::new(
                        ScanModule::BytecodeIntegrity,
                        "compiled-source-mismatch",
                        file,
                        None,
                        Severity::High,
                        format!("compiled from `{src}`, stored as `{stem}`"),
                    ));
                }
            }
            None => out.push(ScanFinding::new(
                ScanModule::BytecodeIntegrity,
                "opaque-compiled-artifact",
                file,
                None,
                Severity::Medium,
                "opaque compiled artifact",
            )),
        }
    }
    out
}

/// Layout of a marshalled code object, selected by the pyc magic number.
#[derive(Clone, Copy)]
struct CodeLayout {
    int_fields: usize,
    objects_before_filename: usize,
}

fn layout_for_magic(magic: u16) -> Option<(usize, CodeLayout)> {
    match magic {
        // 3.3 - 3.6
        3230..=3389 => Some((
            12,
            CodeLayout {
                int_fields: 5,
                objects_before_filename: 6,
            },
        )),
        // 3.7
        3390..=3412 => Some((
            16,
            CodeLayout {
                int_fields: 5,
                objects_before_filename: 6,
            },
        )),
        // 3.8 - 3.10: posonlyargcount added
        3413..=3494 => Some((
            16,
            CodeLayout {
                int_fields: 6,
                objects_before_filename: 6,
            },
        )),
        // 3.11+: nlocals dropped, locals merged into localsplus
        3495..=3999 => Some((
            16,
            CodeLayout {
                int_fields: 5,
                objects_before_filename: 5,
            },
        )),
        _ => None,
    }
}

/// Stored source filename (`co_filename`) of the top-level code object.
pub fn pyc_source_name(data: &[u8]) -> Option<String> {
    if data.len() < 4 || &data[2..4] != b"\r\n" {
        return None;
    }
    let magic = u16::from_le_bytes([data[0], data[1]]);
    let (header, layout) = layout_for_magic(magic)?;
    let mut r = Marshal {
        data,
        pos: header,
        refs: Vec::new(),
        layout,
        depth: 0,
    };
    match r.object().ok()? {
        MValue::Code { filename } => filename,
        _ => None,
    }
}

#[derive(Clone, Debug)]
enum MValue {
    Str(String),
    Code { filename: Option<String> },
    Other,
}

struct Marshal<'a> {
    data: &'a [u8],
    pos: usize,
    refs: Vec<MValue>,
    layout: CodeLayout,
    depth: usize,
}

type MResult<T> = Result<T, ()>;

impl Marshal<'_> {
    fn take(&mut self, n: usize) -> MResult<&[u8]> {
        let end = self.pos.checked_add(n).ok_or(())?;
        let s = self.data.get(self.pos..end).ok_or(())?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> MResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn i32(&mut self) -> MResult<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().map_err(|_| ())?))
    }

    fn len(&mut self) -> MResult<usize> {
        usize::try_from(self.i32()?).map_err(|_| ())
    }

    fn object(&mut self) -> MResult<MValue> {
        self.depth += 1;
        if self.depth > 256 {
            return Err(());
        }
        let code = self.u8()?;
        let flag = code & 0x80 != 0;
        let slot = flag.then(|| {
            self.refs.push(MValue::Other);
            self.refs.len() - 1
        });
        let v = match code & 0x7f {
            b'0' | b'N' | b'F' | b'T' | b'S' | b'.' => MValue::Other,
            b'i' => {
                self.take(4)?;
                MValue::Other
            }
            b'I' | b'g' => {
                self.take(8)?;
                MValue::Other
            }
            b'y' => {
                self.take(16)?;
                MValue::Other
            }
            b'f' => {
                let n = self.u8()? as usize;
                self.take(n)?;
                MValue::Other
            }
            b'x' => {
                for _ in 0..2 {
                    let n = self.u8()? as usize;
                    self.take(n)?;
                }
                MValue::Other
            }
            b'l' => {
                let n = self.i32()?.unsigned_abs() as usize;
                self.take(n.checked_mul(2).ok_or(())?)?;
                MValue::Other
            }
            b's' => {
                let n = self.len()?;
                self.take(n)?;
                MValue::Other
            }
            b't' | b'u' | b'a' | b'A' => {
                let n = self.len()?;
                MValue::Str(String::from_utf8_lossy(self.take(n)?).into_owned())
            }
            b'z' | b'Z' => {
                let n = self.u8()? as usize;
                MValue::Str(String::from_utf8_lossy(self.take(n)?).into_owned())
            }
            b'(' | b'[' | b'<' | b'>' => {
                let n = self.len()?;
                for _ in 0..n {
                    self.object()?;
                }
                MValue::Other
            }
            b')' => {
                let n = self.u8()? as usize;
                for _ in 0..n {
                    self.object()?;
                }
                MValue::Other
            }
            b'{' => {
                loop {
                    if self.data.get(self.pos) == Some(&b'0') {
                        self.pos += 1;
                        break;
                    }
                    self.object()?;
                    self.object()?;
                }
                MValue::Other
            }
            b'r' => {
                let idx = self.len()?;
                self.refs.get(idx).cloned().ok_or(())?
            }
            b'c' => {
                self.take(4 * self.layout.int_fields)?;
                for _ in 0..self.layout.objects_before_filename {
                    self.object()?;
                }
                let filename = match self.object()? {
                    MValue::Str(s) => Some(s),
                    _ => None,
                };
                // name, [qualname], firstlineno, line table, [exception table]
                let modern = self.layout.objects_before_filename == 5;
                for _ in 0..if modern { 2 } else { 1 } {
                    self.object()?;
                }
                self.take(4)?;
                for _ in 0..if modern { 2 } else { 1 } {
                    self.object()?;
                }
                MValue::Code { filename }
            }
            _ => return Err(()),
        };
        if let Some(i) = slot {
            self.refs[i] = v.clone();
        }
        self.depth -= 1;
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Shell pipelines
// ---------------------------------------------------------------------------

const SHELL_SUFFIXES: [&str; 6] = ["sh", "bash", "zsh", "ksh", "ps1", "command"];

/// Logical lines (continuations joined) with their 1-based starting line.
fn logical_lines(text: &str, first_line: usize) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = first_line;
    for (i, raw) in text.lines().enumerate() {
        if cur.is_empty() {
            start = first_line + i;
        }
        match raw.strip_suffix('\\') {
            Some(head) => {
                cur.push_str(head);
                cur.push(' ');
            }
            None => {
                cur.push_str(raw);
                out.push((start, std::mem::take(&mut cur)));
            }
        }
    }
    if !cur.is_empty() {
        out.push((start, cur));
    }
    out
}

/// Fenced code blocks of a markdown text with the line of their first body line.
pub(crate) fn fenced_blocks(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut open: Option<(String, usize, String)> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim_start();
        let fence: String = t.chars().take_while(|&c| c == '`' || c == '~').collect();
        let is_fence = fence.len() >= 3 && fence.chars().all(|c| c == fence.chars().next().unwrap());
        match &mut open {
            None if is_fence => open = Some((fence, i + 2, String::new())),
            None => {}
            Some((f, _, _)) if is_fence && t.starts_with(f.as_str()) && t[f.len()..].trim().is_empty() => {
                let (_, s, body) = open.take().unwrap();
                out.push((s, body));
            }
            Some((_, _, body)) => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    if let Some((_, s, body)) = open {
        out.push((s, body));
    }
    out
}

fn shell_units(file: &SkillFile) -> Vec<(usize, String)> {
    let text = file.text();
    if SHELL_SUFFIXES.contains(&file.suffix()) {
        logical_lines(&text, 1)
    } else if matches!(file.suffix(), "md" | "markdown") {
        fenced_blocks(&text)
            .into_iter()
            .flat_map(|(s, b)| logical_lines(&b, s))
            .collect()
    } else {
        Vec::new()
    }
}

pub(crate) struct PipelinePatterns {
    pub download_exec: RegexSet,
    pub privilege: Regex,
    pub history_off: Regex,
    pub network: Regex,
}

pub(crate) fn pipeline_patterns() -> &'static PipelinePatterns {
    static P: OnceLock<PipelinePatterns> = OnceLock::new();
    P.get_or_init(|| {
        let fetch = r"(?:curl|wget|fetch|iwr|irm|invoke-webrequest|invoke-restmethod|aria2c|http)";
        let interp = r"(?:(?:ba|z|k|da|fi|c|tc)?sh|python[0-9.]*|perl|ruby|node|php|iex|invoke-expression|pwsh|powershell|source)";
        PipelinePatterns {
            download_exec: RegexSet::new([
                format!(r"(?i)\b{fetch}\b[^|\n]*\|\s*(?:sudo\s+(?:-\S+\s+)*|env\s+)?{interp}\b"),
                format!(r"(?i)\b{interp}\s+<\(\s*{fetch}\b"),
                format!(r#"(?i)\b{interp}\s+-c\s+["']?\$\(\s*{fetch}\b"#),
                format!(r#"(?i)\beval\s+["']?\$\(\s*{fetch}\b"#),
                r"(?i)\b(?:iex|invoke-expression)\s*\(?\s*\(?\s*(?:new-object\s+(?:system\.)?net\.webclient|iwr|irm|invoke-webrequest|invoke-restmethod)".to_string(),
            ])
            .expect("download patterns"),
            privilege: Regex::new(r"\|\s*(?:sudo|doas|su|pkexec|runas)\b").expect("privilege pattern"),
            history_off: Regex::new(
                r"(?i)\bunset\s+HISTFILE\b|\bHISTFILE=/dev/null|\bHIST(?:FILE)?SIZE=0\b|\bset\s+\+o\s+history\b|\bhistory\s+-c\b|\bset\s+\+x\b|HistorySaveStyle\s+SaveNothing",
            )
            .expect("history pattern"),
            network: Regex::new(
                r"(?i)\b(?:curl|wget|nc|ncat|socat|ssh|scp|rsync|ftp|telnet|invoke-webrequest|invoke-restmethod|iwr|irm)\b|/dev/(?:tcp|udp)/",
            )
            .expect("network pattern"),
        }
    })
}

pub fn scan_pipelines(artifact: &SkillArtifact) -> Vec<ScanFinding> {
    let p = pipeline_patterns();
    let mut out = Vec::new();
    for file in artifact.files() {
        let units = shell_units(file);
        let mut history_line = None;
        let mut network_after_history = false;
        for (line, text) in &units {
            let code = text.trim_start();
            if code.starts_with('#') {
                continue;
            }
            if p.download_exec.is_match(code) {
                out.push(ScanFinding::new(
                    ScanModule::Pipeline,
                    "download-to-interpreter",
                    file,
                    Some(*line),
                    Severity::Critical,
                    "remote content piped into an interpreter",
                ));
            }
            if p.privilege.is_match(code) {
                out.push(ScanFinding::new(
                    ScanModule::Pipeline,
                    "pipe-to-privilege",
                    file,
                    Some(*line),
                    Severity::High,
                    "output piped into a privilege-elevation command",
                ));
            }
            if history_line.is_some() && p.network.is_match(code) {
                network_after_history = true;
            }
            if history_line.is_none() && p.history_off.is_match(code) {
                history_line = Some(*line);
            }
        }
        if let (Some(line), true) = (history_line, network_after_history) {
            out.push(ScanFinding::new(
                ScanModule::Pipeline,
                "history-disabled-before-network",
                file,
                Some(line),
                Severity::Medium,
                "history or tracing disabled before network use",
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Behavioral heuristics
// ---------------------------------------------------------------------------

/// Sensitive locations: credential stores, shell history, key directories.
pub const SENSITIVE_PATHS: [&str; 22] = [
    r"~/\.ssh\b",
    r"\.ssh/",
    r"\bid_(?:rsa|dsa|ecdsa|ed25519)\b",
    r"\.aws/(?:credentials|config)",
    r"\.azure/",
    r"\.config/gcloud",
    r"\.kube/config",
    r"\.docker/config\.json",
    r"\.git-credentials",
    r"\.netrc\b",
    r"\.npmrc\b",
    r"\.pypirc\b",
    r"\.(?:bash|zsh|sh)_history\b",
    r"/etc/(?:shadow|passwd|sudoers)\b",
    r"\.gnupg\b",
    r"(?i)keychain",
    r"Login Data|Cookies\.sqlite|cookies\.sqlite",
    r"\bwallet\.dat\b|\.electrum\b|Exodus/exodus\.wallet",
    r#"["'/]\.env["']"#,
    r"(?i)\bsecrets?\.(?:json|ya?ml|toml)\b",
    r"\.claude/\.credentials|\.config/gh/hosts\.yml",
    r"(?i)\bos\.environ\b\s*(?:\)|$|\.copy\(\)|\.items\(\))",
];

/// Outbound-network primitives across common scripting languages.
pub const NETWORK_TOKENS: [&str; 24] = [
    r"\brequests\.(?:get|post|put|patch|delete|request|Session)\b",
    r"\burllib(?:\.request|2)?\b|\burlopen\(",
    r"\bhttp\.client\b|\bHTTPS?Connection\(",
    r"\bhttpx\.",
    r"\baiohttp\b",
    r"\bsocket\.(?:socket|create_connection)\b",
    r"\bsmtplib\b|\bftplib\b|\bparamiko\b",
    r"\bfetch\(",
    r"\baxios\b",
    r"\bXMLHttpRequest\b",
    r"\bhttps?\.(?:request|get)\(",
    r"\bnet\.(?:connect|createConnection|Socket)\b",
    r"\bWebSocket\(",
    r"\bcurl\b",
    r"\bwget\b",
    r"\bn(?:c|cat)\b\s+-?\w",
    r"\bsocat\b",
    r"(?i)\binvoke-(?:webrequest|restmethod)\b|\b(?:iwr|irm)\b\s",
    r"(?i)net\.webclient",
    r"/dev/(?:tcp|udp)/",
    r"\bNet::HTTP\b|\bopen-uri\b",
    r"\bLWP::|\bHTTP::Tiny\b",
    r"\bscp\b|\brsync\b",
    r"\bdns\.resolver\b|\bnslookup\b",
];

struct BehaviorPatterns {
    sensitive: RegexSet,
    network: RegexSet,
}

fn behavior_patterns() -> &'static BehaviorPatterns {
    static P: OnceLock<BehaviorPatterns> = OnceLock::new();
    P.get_or_init(|| BehaviorPatterns {
        sensitive: RegexSet::new(SENSITIVE_PATHS).expect("sensitive patterns"),
        network: RegexSet::new(NETWORK_TOKENS).expect("network patterns"),
    })
}

fn is_comment(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with('#') || t.starts_with("//") || t.starts_with("--") || t.starts_with("REM ")
}

fn is_local_ip(ip: &str) -> bool {
    ip.starts_with("127.") || ip == "0.0.0.0"
}

/// First lines showing a sensitive read, a network primitive, and a
/// non-loopback IPv4 literal in a script file.
pub(crate) struct BehaviorSignals {
    pub sensitive: Option<usize>,
    pub network: Option<usize>,
    pub raw_ip: Option<usize>,
}

pub(crate) fn behavior_signals(text: &str) -> BehaviorSignals {
    let p = behavior_patterns();
    let mut s = BehaviorSignals {
        sensitive: None,
        network: None,
        raw_ip: None,
    };
    for (i, line) in text.lines().enumerate() {
        if is_comment(line) {
            continue;
        }
        if s.sensitive.is_none() && p.sensitive.is_match(line) {
            s.sensitive = Some(i + 1);
        }
        if s.network.is_none() && p.network.is_match(line) {
            s.network = Some(i + 1);
        }
        if s.raw_ip.is_none() && ipv4_spans(line).iter().any(|&(a, b)| !is_local_ip(&line[a..b])) {
            s.raw_ip = Some(i + 1);
        }
    }
    s
}

pub(crate) fn is_script(file: &SkillFile) -> bool {
    DEFAULT_SCRIPT_SUFFIXES.contains(&file.suffix()) || SHELL_SUFFIXES.contains(&file.suffix())
}

pub fn scan_behavior(artifact: &SkillArtifact) -> Vec<ScanFinding> {
    let mut out = Vec::new();
    for file in artifact.files().iter().filter(|f| is_script(f)) {
        let s = behavior_signals(&file.text());
        let finding = match (s.sensitive, s.network, s.raw_ip) {
            (Some(l), Some(_), _) => Some((
                "possible-exfiltration",
                l,
                Severity::High,
                "possible exfiltration: sensitive read and outbound network",
            )),
            (None, Some(_), Some(l)) => Some((
                "raw-ip-network",
                l,
                Severity::Medium,
                "outbound network to a raw IP literal",
            )),
            (Some(l), None, _) => Some(("sensitive-read", l, Severity::Low, "reads a sensitive path")),
            _ => None,
        };
        if let Some((id, line, sev, note)) = finding {
            out.push(ScanFinding::new(
                ScanModule::Behavioral,
                id,
                file,
                Some(line),
                sev,
                note,
            ));
        }
    }
    out
}

pub fn scan(artifact: &SkillArtifact, rules: &RuleSet) -> ScanReport {
    let mut findings = scan_static_rules(artifact, rules);
    findings.extend(scan_bytecode_integrity(artifact));
    findings.extend(scan_pipelines(artifact));
    findings.extend(scan_behavior(artifact));
    ScanReport::new(artifact.digest(), findings)
}

impl PartialOrd for ScanFinding {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScanFinding {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key()
            .cmp(&other.sort_key())
            .then_with(|| self.severity.cmp(&other.severity))
            .then_with(|| self.note.cmp(&other.note))
    }
}
