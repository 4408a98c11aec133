use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rust_decimal::Decimal;
use skillguard_core::context::{
    aggregate_cross_repo, categorize, codebase_score, combine, AlignmentAssessment, ContextScore, Level, RepoScore,
};
use skillguard_core::features::{is_flagged, risk_score, FeatureVector, BOOLEAN_FEATURES};
use skillguard_core::scanner::{overall_of, Overall, ScanFinding, ScanModule, ScanReport, Severity};
use skillguard_core::skill::{canonical_encoding, decode_canonical, Digest, Origin, SkillArtifact, SkillFile};
use skillguard_core::stats::{agreement, common_universe, repo_aggregate, FlagSet};

fn tenths() -> impl Strategy<Value = Decimal> {
    (0i64..=1000).prop_map(|n| Decimal::new(n, 1))
}

fn level() -> impl Strategy<Value = Level> {
    prop_oneof![Just(Level::Low), Just(Level::Medium), Just(Level::High)]
}

fn assessment() -> impl Strategy<Value = AlignmentAssessment> {
    (level(), level(), level(), any::<bool>(), level(), any::<bool>()).prop_map(|(d, c, r, s, m, t)| {
        AlignmentAssessment {
            domain_match: d,
            code_similarity: c,
            readme_consistency: r,
            support_signals: s,
            maliciousness: m,
            is_security_tool: t,
        }
    })
}

fn severity() -> impl Strategy<Value = Severity> {
    prop_oneof![
        Just(Severity::Low),
        Just(Severity::Medium),
        Just(Severity::High),
        Just(Severity::Critical)
    ]
}

fn files() -> impl Strategy<Value = Vec<SkillFile>> {
    (
        proptest::collection::vec(any::<u8>(), 0..64),
        proptest::collection::btree_map(
            "[a-z]{1,6}(/[a-z]{1,6}){0,2}\\.[a-z]{1,3}",
            proptest::collection::vec(any::<u8>(), 0..64),
            0..6,
        ),
    )
        .prop_map(|(manifest, rest)| {
            let mut v = vec![SkillFile::new("SKILL.md", manifest).unwrap()];
            v.extend(rest.into_iter().map(|(p, c)| SkillFile::new(&p, c).unwrap()));
            v
        })
}

fn vector() -> impl Strategy<Value = FeatureVector> {
    proptest::collection::vec(any::<bool>(), BOOLEAN_FEATURES.len()).prop_map(|bits| {
        let mut v = FeatureVector::default();
        for (name, on) in BOOLEAN_FEATURES.iter().zip(bits) {
            v.set(name, on);
        }
        v
    })
}

fn raise(l: Level) -> Level {
    match l {
        Level::Low => Level::Medium,
        _ => Level::High,
    }
}

fn finding(severity: Severity) -> ScanFinding {
    ScanFinding {
        module: ScanModule::Static,
        rule_id: "r".into(),
        source_path: "SKILL.md".into(),
        line: None,
        severity,
        note: String::new(),
    }
}

proptest! {
    #[test]
    fn digest_ignores_file_order(files in files(), seed in any::<u64>()) {
        let a = SkillArtifact::new(files.clone(), Origin::default()).unwrap();
        let mut shuffled = files;
        let n = shuffled.len();
        shuffled.rotate_left((seed as usize) % n);
        shuffled.reverse();
        let b = SkillArtifact::new(shuffled, Origin::default()).unwrap();
        prop_assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn canonical_encoding_round_trips(files in files()) {
        let a = SkillArtifact::new(files, Origin::default()).unwrap();
        let bytes = a.canonical_encoding();
        prop_assert_eq!(Digest::of(&bytes), a.digest());
        let decoded = decode_canonical(&bytes).unwrap();
        prop_assert_eq!(canonical_encoding(&decoded).unwrap(), bytes);
        prop_assert_eq!(decoded.as_slice(), a.files());
    }

    #[test]
    fn appending_a_byte_changes_the_digest(files in files(), idx in any::<usize>(), byte in any::<u8>()) {
        let a = SkillArtifact::new(files.clone(), Origin::default()).unwrap();
        let k = idx % files.len();
        let mut content = files[k].content().to_vec();
        content.push(byte);
        let mut changed = files.clone();
        changed[k] = SkillFile::new(files[k].path(), content).unwrap();
        let b = SkillArtifact::new(changed, Origin::default()).unwrap();
        prop_assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn combine_is_the_exact_weighted_sum(c in tenths(), m in tenths()) {
        let x = combine(c, m).unwrap();
        prop_assert_eq!(x * Decimal::TEN, Decimal::from(7) * c + Decimal::from(3) * m);
        prop_assert!(x >= c.min(m) && x <= c.max(m));
    }

    #[test]
    fn combine_of_equal_inputs_is_identity(x in tenths()) {
        prop_assert_eq!(combine(x, x).unwrap(), x);
    }

    #[test]
    fn combine_is_monotone(c in tenths(), m in tenths(), d in tenths()) {
        let base = combine(c, m).unwrap();
        if c + d <= Decimal::ONE_HUNDRED {
            prop_assert!(combine(c + d, m).unwrap() >= base);
        }
        if m + d <= Decimal::ONE_HUNDRED {
            prop_assert!(combine(c, m + d).unwrap() >= base);
        }
    }

    #[test]
    fn combine_rejects_out_of_range(x in tenths(), extra in 1i64..1000) {
        let over = Decimal::ONE_HUNDRED + Decimal::new(extra, 1);
        prop_assert!(combine(over, x).is_err());
        prop_assert!(combine(x, -Decimal::new(extra, 1)).is_err());
    }

    #[test]
    fn categorize_is_monotone(a in tenths(), b in tenths()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(categorize(lo) <= categorize(hi));
    }

    #[test]
    fn codebase_score_is_monotone(a in assessment(), which in 0usize..5) {
        let base = codebase_score(&a);
        prop_assert!(base >= Decimal::ZERO && base <= Decimal::from(97));
        let mut b = a;
        match which {
            0 => b.domain_match = raise(a.domain_match),
            1 => b.code_similarity = raise(a.code_similarity),
            2 => b.readme_consistency = raise(a.readme_consistency),
            3 => b.support_signals = true,
            _ => b.maliciousness = raise(a.maliciousness),
        }
        if which == 4 {
            prop_assert!(codebase_score(&b) <= base);
        } else {
            prop_assert!(codebase_score(&b) >= base);
        }
    }

    #[test]
    fn risk_is_bounded_and_monotone(v in vector(), extra in 0usize..BOOLEAN_FEATURES.len()) {
        let d = Digest::of(b"x");
        let r = risk_score(d, &v).risk;
        prop_assert!((1..=5).contains(&r));
        let mut more = v;
        more.set(BOOLEAN_FEATURES[extra], true);
        prop_assert!(risk_score(d, &more).risk >= r);
    }

    #[test]
    fn overall_is_the_maximum_severity(sevs in proptest::collection::vec(severity(), 0..8)) {
        let findings: Vec<ScanFinding> = sevs.iter().map(|s| finding(*s)).collect();
        let want = sevs.iter().max().map(|s| Overall::from(*s)).unwrap_or(Overall::None);
        prop_assert_eq!(overall_of(&findings), want);
        prop_assert_eq!(ScanReport::new(Digest::of(b"x"), findings).overall, want);
    }

    #[test]
    fn flag_rule_is_monotone(s in severity(), t in severity(), v in vector(), extra in 0usize..BOOLEAN_FEATURES.len()) {
        let d = Digest::of(b"x");
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        let mut more = v;
        more.set(BOOLEAN_FEATURES[extra], true);
        let before = is_flagged(&ScanReport::new(d, vec![finding(lo)]), &risk_score(d, &v)).unwrap();
        let after = is_flagged(&ScanReport::new(d, vec![finding(hi)]), &risk_score(d, &more)).unwrap();
        prop_assert!(!before || after);
    }

    #[test]
    fn histogram_mass_equals_union(
        matrix in proptest::collection::vec(proptest::collection::vec((any::<bool>(), any::<bool>()), 1..5), 1..60)
    ) {
        let n = matrix[0].len();
        let mut sets = Vec::new();
        for s in 0..n {
            let mut scanned = BTreeSet::new();
            let mut flagged = BTreeSet::new();
            for (i, row) in matrix.iter().enumerate() {
                let d = Digest::of(&(i as u64).to_be_bytes());
                let (seen, flag) = row.get(s).copied().unwrap_or((true, false));
                if seen || i % 2 == 0 {
                    scanned.insert(d);
                    if flag {
                        flagged.insert(d);
                    }
                }
            }
            sets.push(FlagSet::new(format!("s{s}"), scanned, flagged).unwrap());
        }
        let universe = common_universe(&sets);
        let report = agreement(&sets, &universe).unwrap();
        let mass: usize = report.flagged_by_k.iter().filter(|(k, _)| **k > 0).map(|(_, v)| v).sum();
        let union = universe.iter().filter(|d| sets.iter().any(|s| s.flagged.contains(d))).count();
        prop_assert_eq!(mass, union);
        prop_assert_eq!(report.union_size, union);
        for (a, row) in report.matrix.cells.iter().enumerate() {
            prop_assert_eq!(row[a].joint, row[a].base);
            for cell in row {
                prop_assert!(cell.joint <= cell.base);
            }
        }
    }

    #[test]
    fn flagging_a_skill_never_lowers_repo_counts(
        skills in proptest::collection::vec((any::<bool>(), proptest::collection::btree_set(0u8..12, 1..4)), 1..40),
        pick in any::<usize>()
    ) {
        let mut flags = BTreeMap::new();
        let mut mapping = BTreeMap::new();
        for (i, (f, repos)) in skills.iter().enumerate() {
            let d = Digest::of(&(i as u64).to_be_bytes());
            flags.insert(d, *f);
            mapping.insert(d, repos.iter().map(|r| format!("o/r{r}")).collect::<BTreeSet<_>>());
        }
        let before = repo_aggregate(&flags, &mapping).unwrap();
        let d = *flags.keys().nth(pick % flags.len()).unwrap();
        flags.insert(d, true);
        let after = repo_aggregate(&flags, &mapping).unwrap();
        prop_assert!(after.summary.flagged_repos >= before.summary.flagged_repos);
        prop_assert!(after.summary.flagged_skills >= before.summary.flagged_skills);
        for (repo, flagged) in &before.repos {
            prop_assert!(!flagged || after.repos[repo]);
        }
    }

    #[test]
    fn aggregating_identical_scores_is_identity(a in assessment(), m in 0i64..=600, copies in 1usize..6) {
        let score = ContextScore::new(&a, Decimal::from(m) / Decimal::from(6)).unwrap();
        let scores: Vec<RepoScore> = (0..copies).map(|i| RepoScore { repo_id: format!("o/r{i}"), score }).collect();
        let agg = aggregate_cross_repo(&scores).unwrap();
        prop_assert_eq!(agg.category, score.category);
        prop_assert_eq!(agg.suspicious, score.suspicious);
        prop_assert_eq!(agg.codebase.normalize(), score.codebase.normalize());
        let tolerance = Decimal::new(1, 20);
        prop_assert!((agg.combined - score.combined).abs() < tolerance);
        prop_assert!((agg.metadata - score.metadata).abs() < tolerance);
    }
}
