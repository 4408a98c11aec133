//! Repository-namespace hijacking audit for index entries that point at forge
//! repositories.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::IndexEntry;

/// Stars at or above which a vulnerable reference has elevated impact.
pub const ELEVATED_STARS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HijackError {
    #[error("forge unavailable: {0}")]
    ForgeUnavailable(String),
    #[error("malformed scenario line {line}: {reason}")]
    MalformedScenario { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepoLookup {
    Ok,
    Redirect { owner: String, repo: String },
    NotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountLookup {
    Exists,
    NotFound,
}

pub trait ForgeClient: Send + Sync {
    fn repo_lookup(&self, owner: &str, repo: &str) -> Result<RepoLookup, HijackError>;
    fn account_lookup(&self, owner: &str) -> Result<AccountLookup, HijackError>;
    /// Star count if the forge reports one.
    fn stars(&self, _owner: &str, _repo: &str) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ReferenceState {
    Ok,
    Redirected { new_owner: String, new_repo: String },
    MissingRepoOwnerExists,
    MissingOwner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Popularity {
    pub stars: u64,
    pub installs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceStatus {
    pub state: ReferenceState,
    /// `None` when unknown or irrelevant (state `ok`).
    pub owner_name_free: Option<bool>,
    pub popularity: Popularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    PossiblyProtected,
    Vulnerable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Impact {
    Low,
    Elevated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HijackVerdict {
    pub verdict: Verdict,
    pub impact: Impact,
    pub rationale: String,
}

fn popularity_of(entry: &IndexEntry, forge: &dyn ForgeClient) -> Popularity {
    let stars = entry
        .metadata_u64("stars")
        .or_else(|| forge.stars(&entry.owner, &entry.repository))
        .unwrap_or(0);
    let installs = entry
        .metadata_u64("installs")
        .or_else(|| entry.metadata_u64("downloads"));
    Popularity { stars, installs }
}

pub fn probe_reference(entry: &IndexEntry, forge: &dyn ForgeClient) -> Result<ReferenceStatus, HijackError> {
    let (owner, repo) = (entry.owner.as_str(), entry.repository.as_str());
    let (state, owner_name_free) = match forge.repo_lookup(owner, repo)? {
        RepoLookup::Ok => (ReferenceState::Ok, None),
        RepoLookup::Redirect {
            owner: new_owner,
            repo: new_repo,
        } => {
            let free = forge.account_lookup(owner)? == AccountLookup::NotFound;
            (ReferenceState::Redirected { new_owner, new_repo }, Some(free))
        }
        RepoLookup::NotFound => match forge.account_lookup(owner)? {
            AccountLookup::Exists => (ReferenceState::MissingRepoOwnerExists, Some(false)),
            AccountLookup::NotFound => (ReferenceState::MissingOwner, Some(true)),
        },
    };
    Ok(ReferenceStatus {
        state,
        owner_name_free,
        popularity: popularity_of(entry, forge),
    })
}

/// `retirement_threshold` is the install count at which the forge is assumed
/// to retire a namespace; `None` never downgrades a vulnerable verdict.
pub fn classify_hijackability(status: &ReferenceStatus, retirement_threshold: Option<u64>) -> HijackVerdict {
    let safe = |why: &str| HijackVerdict {
        verdict: Verdict::Safe,
        impact: Impact::Low,
        rationale: why.to_string(),
    };
    if status.state == ReferenceState::Ok {
        return safe("reference resolves to the original repository");
    }
    if status.owner_name_free != Some(true) {
        return safe("original owner name is not registrable");
    }
    let impact = if status.popularity.stars >= ELEVATED_STARS {
        Impact::Elevated
    } else {
        Impact::Low
    };
    if let (Some(installs), Some(threshold)) = (status.popularity.installs, retirement_threshold) {
        if installs >= threshold {
            return HijackVerdict {
                verdict: Verdict::PossiblyProtected,
                impact,
                rationale: format!(
                    "owner name free, but {installs} installs reach the retirement threshold {threshold}"
                ),
            };
        }
    }
    HijackVerdict {
        verdict: Verdict::Vulnerable,
        impact,
        rationale: format!(
            "owner name free; namespace can be recreated ({} stars)",
            status.popularity.stars
        ),
    }
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryAudit {
    pub owner: String,
    pub repository: String,
    pub subpath: String,
    pub status: Option<ReferenceStatus>,
    pub verdict: Option<HijackVerdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AuditSummary {
    pub entries: usize,
    pub skipped_hosted: usize,
    pub errors: usize,
    pub verdicts: BTreeMap<Verdict, usize>,
    pub vulnerable_repos: usize,
    pub elevated_repos: usize,
    pub affected_skills: usize,
    pub installs_median: Option<u64>,
    pub installs_max: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HijackAudit {
    pub entries: Vec<EntryAudit>,
    pub summary: AuditSummary,
}

/// Lower median.
pub fn lower_median(values: &mut [u64]) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    Some(values[(values.len() - 1) / 2])
}

/// Probes every forge-backed entry (each repository once, on `workers`
/// threads) and summarizes verdicts per repository. Hosted entries are
/// skipped; transport failures are recorded per entry.
pub fn audit_index(
    entries: &[IndexEntry],
    forge: &dyn ForgeClient,
    retirement_threshold: Option<u64>,
    workers: usize,
) -> HijackAudit {
    let mut repos: Vec<(&str, &str)> = entries
        .iter()
        .filter(|e| e.platform.has_repository_context())
        .map(|e| (e.owner.as_str(), e.repository.as_str()))
        .collect();
    repos.sort_unstable();
    repos.dedup();

    type Lookup = Result<(RepoLookup, Option<AccountLookup>), HijackError>;
    let probe = |&(owner, repo): &(&str, &str)| -> Lookup {
        let r = forge.repo_lookup(owner, repo)?;
        let a = match r {
            RepoLookup::Ok => None,
            _ => Some(forge.account_lookup(owner)?),
        };
        Ok((r, a))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build();
    let results: Vec<Lookup> = match &pool {
        Ok(p) => p.install(|| repos.par_iter().map(probe).collect()),
        Err(_) => repos.iter().map(probe).collect(),
    };
    let cache: HashMap<(&str, &str), Lookup> = repos.iter().copied().zip(results).collect();

    /// Replays a cached lookup so `probe_reference` keeps a single mapping.
    struct Cached<'a> {
        lookup: &'a Lookup,
        inner: &'a dyn ForgeClient,
    }
    impl ForgeClient for Cached<'_> {
        fn repo_lookup(&self, _: &str, _: &str) -> Result<RepoLookup, HijackError> {
            self.lookup.clone().map(|(r, _)| r)
        }
        fn account_lookup(&self, _: &str) -> Result<AccountLookup, HijackError> {
            match self.lookup {
                Ok((_, Some(a))) => Ok(*a),
                Ok((_, None)) => Ok(AccountLookup::Exists),
                Err(e) => Err(e.clone()),
            }
        }
        fn stars(&self, owner: &str, repo: &str) -> Option<u64> {
            self.inner.stars(owner, repo)
        }
    }

    let mut audits = Vec::with_capacity(entries.len());
    let mut summary = AuditSummary {
        entries: entries.len(),
        ..Default::default()
    };
    let mut repo_worst: BTreeMap<(String, String), (Verdict, Impact)> = BTreeMap::new();
    let mut affected_installs = Vec::new();
    for e in entries {
        let mut audit = EntryAudit {
            owner: e.owner.clone(),
            repository: e.repository.clone(),
            subpath: e.subpath.clone(),
            status: None,
            verdict: None,
            error: None,
        };
        if !e.platform.has_repository_context() {
            summary.skipped_hosted += 1;
            audit.verdict = Some(HijackVerdict {
                verdict: Verdict::Safe,
                impact: Impact::Low,
                rationale: "hosted archive; no forge reference".into(),
            });
            *summary.verdicts.entry(Verdict::Safe).or_default() += 1;
            audits.push(audit);
            continue;
        }
        let lookup = &cache[&(e.owner.as_str(), e.repository.as_str())];
        match probe_reference(e, &Cached { lookup, inner: forge }) {
            Ok(status) => {
                let v = classify_hijackability(&status, retirement_threshold);
                *summary.verdicts.entry(v.verdict).or_default() += 1;
                let key = (e.owner.clone(), e.repository.clone());
                let worst = repo_worst.entry(key).or_insert((Verdict::Safe, Impact::Low));
                if (v.verdict, v.impact == Impact::Elevated) > (worst.0, worst.1 == Impact::Elevated) {
                    *worst = (v.verdict, v.impact);
                }
                if v.verdict == Verdict::Vulnerable {
                    summary.affected_skills += 1;
                    affected_installs.extend(status.popularity.installs);
                }
                audit.status = Some(status);
                audit.verdict = Some(v);
            }
            Err(err) => {
                summary.errors += 1;
                audit.error = Some(err.to_string());
            }
        }
        audits.push(audit);
    }
    summary.vulnerable_repos = repo_worst.values().filter(|(v, _)| *v == Verdict::Vulnerable).count();
    summary.elevated_repos = repo_worst
        .values()
        .filter(|(v, i)| *v == Verdict::Vulnerable && *i == Impact::Elevated)
        .count();
    summary.installs_max = affected_installs.iter().copied().max();
    summary.installs_median = lower_median(&mut affected_installs);
    HijackAudit {
        entries: audits,
        summary,
    }
}

// ---------------------------------------------------------------------------
// Forge clients
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioRepoLookup {
    Ok,
    Redirect { owner: String, repo: String },
    NotFound,
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioAccountLookup {
    Exists,
    NotFound,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub owner: String,
    pub repo: String,
    pub repo_lookup: ScenarioRepoLookup,
    pub account_lookup: ScenarioAccountLookup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stars: Option<u64>,
}

/// Answers lookups from recorded scenarios; never touches the network.
#[derive(Debug, Clone, Default)]
pub struct ReplayForge {
    repos: HashMap<(String, String), Scenario>,
    accounts: HashMap<String, ScenarioAccountLookup>,
}

impl ReplayForge {
    pub fn new(scenarios: impl IntoIterator<Item = Scenario>) -> Self {
        let mut f = Self::default();
        for s in scenarios {
            f.accounts.entry(s.owner.clone()).or_insert(s.account_lookup);
            f.repos.insert((s.owner.clone(), s.repo.clone()), s);
        }
        f
    }

    /// JSONL scenarios; blank lines ignored.
    pub fn load(reader: impl BufRead) -> Result<Self, HijackError> {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| HijackError::MalformedScenario {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| HijackError::MalformedScenario {
                line: i + 1,
                reason: e.to_string(),
            })?);
        }
        Ok(Self::new(out))
    }
}

fn unavailable(what: &str) -> HijackError {
    HijackError::ForgeUnavailable(format!("no usable scenario for {what}"))
}

impl ForgeClient for ReplayForge {
    fn repo_lookup(&self, owner: &str, repo: &str) -> Result<RepoLookup, HijackError> {
        let s = self
            .repos
            .get(&(owner.to_string(), repo.to_string()))
            .ok_or_else(|| unavailable(&format!("{owner}/{repo}")))?;
        match &s.repo_lookup {
            ScenarioRepoLookup::Ok => Ok(RepoLookup::Ok),
            ScenarioRepoLookup::Redirect { owner, repo } => Ok(RepoLookup::Redirect {
                owner: owner.clone(),
                repo: repo.clone(),
            }),
            ScenarioRepoLookup::NotFound => Ok(RepoLookup::NotFound),
            ScenarioRepoLookup::Unavailable => Err(HijackError::ForgeUnavailable(format!(
                "{owner}/{repo}: transport error"
            ))),
        }
    }

    fn account_lookup(&self, owner: &str) -> Result<AccountLookup, HijackError> {
        match self.accounts.get(owner) {
            Some(ScenarioAccountLookup::Exists) => Ok(AccountLookup::Exists),
            Some(ScenarioAccountLookup::NotFound) => Ok(AccountLookup::NotFound),
            Some(ScenarioAccountLookup::Unavailable) => {
                Err(HijackError::ForgeUnavailable(format!("{owner}: transport error")))
            }
            None => Err(unavailable(owner)),
        }
    }

    fn stars(&self, owner: &str, repo: &str) -> Option<u64> {
        self.repos
            .get(&(owner.to_string(), repo.to_string()))
            .and_then(|s| s.stars)
    }
}

/// GitHub-style REST forge: `GET /repos/{owner}/{repo}` answers 200, a
/// 301/302/307 redirect, or 404; `GET /users/{owner}` answers 200 or 404.
pub struct LiveForge {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl LiveForge {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .max_redirects(0)
            .timeout_global(Some(timeout))
            .user_agent("skillguard")
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: None,
            agent,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    fn get(&self, url: &str) -> Result<(u16, Option<String>, serde_json::Value), HijackError> {
        let mut req = self.agent.get(url).header("Accept", "application/vnd.github+json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut res = req.call().map_err(|e| HijackError::ForgeUnavailable(e.to_string()))?;
        let status = res.status().as_u16();
        let location = res
            .headers()
            .get("location")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let body = res.body_mut().read_json().unwrap_or(serde_json::Value::Null);
        Ok((status, location, body))
    }

    fn absolute(&self, location: &str) -> String {
        if location.starts_with("http://") || location.starts_with("https://") {
            location.to_string()
        } else {
            format!("{}/{}", self.base_url, location.trim_start_matches('/'))
        }
    }
}

fn full_name(body: &serde_json::Value) -> Option<(String, String)> {
    let (o, r) = body.get("full_name")?.as_str()?.split_once('/')?;
    Some((o.to_string(), r.to_string()))
}

impl ForgeClient for LiveForge {
    fn repo_lookup(&self, owner: &str, repo: &str) -> Result<RepoLookup, HijackError> {
        let url = format!("{}/repos/{owner}/{repo}", self.base_url);
        let (status, location, body) = self.get(&url)?;
        match status {
            200 => match full_name(&body) {
                Some((o, r)) if !o.eq_ignore_ascii_case(owner) || !r.eq_ignore_ascii_case(repo) => {
                    Ok(RepoLookup::Redirect { owner: o, repo: r })
                }
                _ => Ok(RepoLookup::Ok),
            },
            301 | 302 | 307 | 308 => {
                let loc = location.ok_or_else(|| HijackError::ForgeUnavailable("redirect without location".into()))?;
                let (s, _, body) = self.get(&self.absolute(&loc))?;
                match (s, full_name(&body)) {
                    (200, Some((o, r))) => Ok(RepoLookup::Redirect { owner: o, repo: r }),
                    _ => Err(HijackError::ForgeUnavailable(format!(
                        "unresolvable redirect for {owner}/{repo}"
                    ))),
                }
            }
            404 => Ok(RepoLookup::NotFound),
            s => Err(HijackError::ForgeUnavailable(format!("HTTP {s} for {owner}/{repo}"))),
        }
    }

    fn account_lookup(&self, owner: &str) -> Result<AccountLookup, HijackError> {
        match self.get(&format!("{}/users/{owner}", self.base_url))?.0 {
            200 => Ok(AccountLookup::Exists),
            404 => Ok(AccountLookup::NotFound),
            s => Err(HijackError::ForgeUnavailable(format!("HTTP {s} for account {owner}"))),
        }
    }

    fn stars(&self, owner: &str, repo: &str) -> Option<u64> {
        let (status, _, body) = self.get(&format!("{}/repos/{owner}/{repo}", self.base_url)).ok()?;
        (status == 200)
            .then(|| body.get("stargazers_count")?.as_u64())
            .flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Platform;

    fn entry(owner: &str, repo: &str, stars: Option<u64>, installs: Option<u64>) -> IndexEntry {
        let mut meta = BTreeMap::new();
        if let Some(s) = stars {
            meta.insert("stars".to_string(), s.to_string());
        }
        if let Some(i) = installs {
            meta.insert("installs".to_string(), i.to_string());
        }
        IndexEntry {
            platform: Platform::GitRoot,
            owner: owner.into(),
            repository: repo.into(),
            subpath: String::new(),
            listing_metadata: meta,
        }
    }

    fn sc(owner: &str, repo: &str, r: ScenarioRepoLookup, a: ScenarioAccountLookup) -> Scenario {
        Scenario {
            owner: owner.into(),
            repo: repo.into(),
            repo_lookup: r,
            account_lookup: a,
            stars: None,
        }
    }

    fn status(state: ReferenceState, free: Option<bool>, stars: u64, installs: Option<u64>) -> ReferenceStatus {
        ReferenceStatus {
            state,
            owner_name_free: free,
            popularity: Popularity { stars, installs },
        }
    }

    #[test]
    fn probe_states() {
        use ScenarioAccountLookup as A;
        use ScenarioRepoLookup as R;
        let forge = ReplayForge::new([
            sc("fine", "t", R::Ok, A::Exists),
            sc(
                "old",
                "tool",
                R::Redirect {
                    owner: "neo".into(),
                    repo: "tool".into(),
                },
                A::NotFound,
            ),
            sc("gone", "x", R::NotFound, A::NotFound),
        ]);
        assert_eq!(
            probe_reference(&entry("fine", "t", None, None), &forge).unwrap().state,
            ReferenceState::Ok
        );
        let s = probe_reference(&entry("old", "tool", None, None), &forge).unwrap();
        assert_eq!(
            (s.state, s.owner_name_free),
            (
                ReferenceState::Redirected {
                    new_owner: "neo".into(),
                    new_repo: "tool".into()
                },
                Some(true)
            )
        );
        let s = probe_reference(&entry("gone", "x", None, None), &forge).unwrap();
        assert_eq!((s.state, s.owner_name_free), (ReferenceState::MissingOwner, Some(true)));
        assert!(matches!(
            probe_reference(&entry("nobody", "x", None, None), &forge),
            Err(HijackError::ForgeUnavailable(_))
        ));
    }

    #[test]
    fn classification_table() {
        let redirected = ReferenceState::Redirected {
            new_owner: "n".into(),
            new_repo: "r".into(),
        };
        let v = classify_hijackability(&status(redirected.clone(), Some(true), 159, None), None);
        assert_eq!((v.verdict, v.impact), (Verdict::Vulnerable, Impact::Elevated));
        let v = classify_hijackability(&status(ReferenceState::MissingOwner, Some(true), 2, None), None);
        assert_eq!((v.verdict, v.impact), (Verdict::Vulnerable, Impact::Low));
        let v = classify_hijackability(&status(redirected.clone(), Some(true), 0, Some(50_000)), Some(10_000));
        assert_eq!(v.verdict, Verdict::PossiblyProtected);
        let v = classify_hijackability(&status(redirected.clone(), Some(true), 0, Some(50_000)), None);
        assert_eq!(v.verdict, Verdict::Vulnerable);
        let v = classify_hijackability(&status(redirected, Some(false), 500, None), Some(1));
        assert_eq!(v.verdict, Verdict::Safe);
        let v = classify_hijackability(&status(ReferenceState::Ok, Some(true), 500, None), None);
        assert_eq!(v.verdict, Verdict::Safe);
    }

    #[test]
    fn audit_groups_by_repo() {
        use ScenarioAccountLookup as A;
        use ScenarioRepoLookup as R;
        let forge = ReplayForge::new([
            sc("a", "ok", R::Ok, A::Exists),
            sc(
                "b",
                "moved",
                R::Redirect {
                    owner: "c".into(),
                    repo: "moved".into(),
                },
                A::NotFound,
            ),
            sc("d", "gone", R::NotFound, A::NotFound),
            sc("e", "taken", R::NotFound, A::Exists),
        ]);
        let mut entries = vec![
            entry("a", "ok", Some(9), Some(10)),
            entry("e", "taken", Some(9), Some(10)),
            entry("x", "unknown", None, None),
        ];
        for i in [25, 2032, 7, 300] {
            entries.push(entry("b", "moved", Some(159), Some(i)));
        }
        for _ in 0..3 {
            entries.push(entry("d", "gone", Some(2), None));
        }
        let mut hosted = entry("h", "h", None, None);
        hosted.platform = Platform::Hosted;
        entries.push(hosted);
        let audit = audit_index(&entries, &forge, None, 4);
        let s = &audit.summary;
        assert_eq!((s.vulnerable_repos, s.affected_skills, s.elevated_repos), (2, 7, 1));
        assert_eq!((s.installs_median, s.installs_max), (Some(25), Some(2032)));
        assert_eq!((s.errors, s.skipped_hosted), (1, 1));
        assert_eq!(audit.entries.len(), entries.len());
        assert_eq!(audit, audit_index(&entries, &forge, None, 1));
    }

    #[test]
    fn median_is_lower() {
        assert_eq!(lower_median(&mut [2032, 25]), Some(25));
        assert_eq!(lower_median(&mut [3, 1, 2]), Some(2));
        assert_eq!(lower_median(&mut []), None);
    }

    #[test]
    fn scenario_format() {
        let text = r#"{"owner":"o","repo":"r","repo_lookup":{"redirect":{"owner":"n","repo":"r2"}},"account_lookup":"not_found","stars":159}
{"owner":"p","repo":"q","repo_lookup":"unavailable","account_lookup":"exists"}
"#;
        let f = ReplayForge::load(text.as_bytes()).unwrap();
        assert_eq!(f.stars("o", "r"), Some(159));
        assert!(matches!(f.repo_lookup("o", "r"), Ok(RepoLookup::Redirect { .. })));
        assert!(f.repo_lookup("p", "q").is_err());
        assert!(ReplayForge::load(&b"{\"owner\":1}"[..]).is_err());
    }
}
