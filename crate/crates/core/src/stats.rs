//! Cross-scanner agreement and repository-level aggregation of skill flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::skill::Digest;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("universe is not covered by the scanned set of `{0}`")]
    UniverseNotCovered(String),
    #[error("flagged digest {0} has no repository mapping")]
    UnmappedDigest(Digest),
    #[error("scanner `{0}` flags digests it did not scan")]
    FlaggedNotScanned(String),
    #[error("{file}:{line}: {reason}")]
    MalformedFlagLine { file: String, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSet {
    pub scanner_id: String,
    pub flagged: BTreeSet<Digest>,
    pub scanned: BTreeSet<Digest>,
}

impl FlagSet {
    pub fn new(
        scanner_id: impl Into<String>,
        scanned: BTreeSet<Digest>,
        flagged: BTreeSet<Digest>,
    ) -> Result<Self, StatsError> {
        let scanner_id = scanner_id.into();
        if !flagged.is_subset(&scanned) {
            return Err(StatsError::FlaggedNotScanned(scanner_id));
        }
        Ok(Self {
            scanner_id,
            flagged,
            scanned,
        })
    }
}

/// One line of a flag file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagLine {
    pub scanner_id: String,
    pub digest: Digest,
    pub flagged: bool,
}

/// Reads flag lines from a reader, grouping by scanner. A digest listed twice
/// for one scanner with different verdicts is rejected.
pub fn read_flag_lines(
    reader: impl BufRead,
    file: &str,
    into: &mut BTreeMap<String, BTreeMap<Digest, bool>>,
) -> Result<(), StatsError> {
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| StatsError::MalformedFlagLine {
            file: file.to_string(),
            line: i + 1,
            reason,
        };
        let fl: FlagLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let verdicts = into.entry(fl.scanner_id).or_default();
        match verdicts.insert(fl.digest, fl.flagged) {
            Some(prev) if prev != fl.flagged => return Err(bad(format!("conflicting verdicts for {}", fl.digest))),
            _ => {}
        }
    }
    Ok(())
}

pub fn flag_sets_from_verdicts(verdicts: BTreeMap<String, BTreeMap<Digest, bool>>) -> Vec<FlagSet> {
    verdicts
        .into_iter()
        .map(|(scanner_id, v)| FlagSet {
            scanner_id,
            flagged: v.iter().filter(|(_, f)| **f).map(|(d, _)| *d).collect(),
            scanned: v.into_keys().collect(),
        })
        .collect()
}

/// All `*.jsonl` files in `dir`, in name order, merged per scanner.
pub fn load_flag_dir(dir: &Path) -> Result<Vec<FlagSet>, StatsError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut verdicts = BTreeMap::new();
    for p in paths {
        let f = io::BufReader::new(fs::File::open(&p)?);
        read_flag_lines(f, &p.display().to_string(), &mut verdicts)?;
    }
    Ok(flag_sets_from_verdicts(verdicts))
}

/// Skills scanned by every scanner.
pub fn common_universe(sets: &[FlagSet]) -> BTreeSet<Digest> {
    let mut iter = sets.iter();
    let Some(first) = iter.next() else {
        return BTreeSet::new();
    };
    iter.fold(first.scanned.clone(), |acc, s| {
        acc.intersection(&s.scanned).copied().collect()
    })
}

fn check_universe(sets: &[FlagSet], universe: &BTreeSet<Digest>) -> Result<(), StatsError> {
    match sets.iter().find(|s| !universe.is_subset(&s.scanned)) {
        Some(s) => Err(StatsError::UniverseNotCovered(s.scanner_id.clone())),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCell {
    /// |flagged_A ∩ flagged_B ∩ U|
    pub joint: usize,
    /// |flagged_A ∩ U|
    pub base: usize,
}

impl OverlapCell {
    /// `None` when scanner A flags nothing in the universe.
    pub fn probability(&self) -> Option<f64> {
        (self.base > 0).then(|| self.joint as f64 / self.base as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub scanners: Vec<String>,
    /// `cells[a][b]` holds the counts behind P(b flags | a flags).
    pub cells: Vec<Vec<OverlapCell>>,
}

impl OverlapMatrix {
    pub fn probability(&self, a: usize, b: usize) -> Option<f64> {
        self.cells[a][b].probability()
    }

    pub fn probabilities(&self) -> Vec<Vec<Option<f64>>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(OverlapCell::probability).collect())
            .collect()
    }
}

pub fn conditional_overlap(sets: &[FlagSet], universe: &BTreeSet<Digest>) -> Result<OverlapMatrix, StatsError> {
    check_universe(sets, universe)?;
    let within: Vec<BTreeSet<Digest>> = sets
        .iter()
        .map(|s| s.flagged.intersection(universe).copied().collect())
        .collect();
    let cells = within
        .iter()
        .map(|a| {
            within
                .iter()
                .map(|b| OverlapCell {
                    joint: a.intersection(b).count(),
                    base: a.len(),
                })
                .collect()
        })
        .collect();
    Ok(OverlapMatrix {
        scanners: sets.iter().map(|s| s.scanner_id.clone()).collect(),
        cells,
    })
}

/// Count of universe skills flagged by exactly k scanners, for k in 1..=n.
pub fn flagged_by_k(sets: &[FlagSet], universe: &BTreeSet<Digest>) -> Result<BTreeMap<usize, usize>, StatsError> {
    check_universe(sets, universe)?;
    let mut per_skill: BTreeMap<Digest, usize> = BTreeMap::new();
    for s in sets {
        for d in s.flagged.intersection(universe) {
            *per_skill.entry(*d).or_default() += 1;
        }
    }
    let mut hist: BTreeMap<usize, usize> = (1..=sets.len()).map(|k| (k, 0)).collect();
    for k in per_skill.into_values() {
        *hist.entry(k).or_default() += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub skills: usize,
    pub flagged_skills: usize,
    pub skill_rate: f64,
    pub repos: usize,
    pub flagged_repos: usize,
    pub repo_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoAggregate {
    pub repos: BTreeMap<String, bool>,
    pub summary: RateSummary,
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// A repository is flagged iff any skill it contains is flagged.
pub fn repo_aggregate(
    skill_flags: &BTreeMap<Digest, bool>,
    mapping: &BTreeMap<Digest, BTreeSet<String>>,
) -> Result<RepoAggregate, StatsError> {
    let mut repos: BTreeMap<String, bool> = BTreeMap::new();
    for (digest, &flagged) in skill_flags {
        match mapping.get(digest) {
            Some(ids) => {
                for id in ids {
                    *repos.entry(id.clone()).or_default() |= flagged;
                }
            }
            None if flagged => return Err(StatsError::UnmappedDigest(*digest)),
            None => {}
        }
    }
    let flagged_skills = skill_flags.values().filter(|f| **f).count();
    let flagged_repos = repos.values().filter(|f| **f).count();
    Ok(RepoAggregate {
        summary: RateSummary {
            skills: skill_flags.len(),
            flagged_skills,
            skill_rate: rate(flagged_skills, skill_flags.len()),
            repos: repos.len(),
            flagged_repos,
            repo_rate: rate(flagged_repos, repos.len()),
        },
        repos,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub universe_size: usize,
    pub union_size: usize,
    pub matrix: OverlapMatrix,
    pub probabilities: Vec<Vec<Option<f64>>>,
    pub flagged_by_k: BTreeMap<usize, usize>,
}

pub fn agreement(sets: &[FlagSet], universe: &BTreeSet<Digest>) -> Result<AgreementReport, StatsError> {
    let matrix = conditional_overlap(sets, universe)?;
    let hist = flagged_by_k(sets, universe)?;
    let union: BTreeSet<&Digest> = sets.iter().flat_map(|s| s.flagged.intersection(universe)).collect();
    Ok(AgreementReport {
        universe_size: universe.len(),
        union_size: union.len(),
        probabilities: matrix.probabilities(),
        matrix,
        flagged_by_k: hist,
    })
}
