//! Subjective study processing: per-subject Z-scores, subject rejection,
//! MOS tables, inter-subject consistency and a synthetic rater simulator.

mod io;
mod metrics;
mod simulate;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{mean, sample_variance, Real};

pub use io::{read_mos_csv, read_ratings_csv, sessions_from_records, write_mos_csv, write_ratings_csv};
pub use metrics::{average_ranks, lcc, srcc};
pub use simulate::{gold_pool, simulate_raters, RaterModel, SpamMode, GOLD_POOL_SIZE};

/// Contents per HIT used in the crowdsourced study (initial and later value).
pub const HIT_SIZES: [usize; 2] = [60, 210];
pub const REPEATS_PER_HIT: usize = 5;
pub const GOLDS_PER_HIT: usize = 5;
pub const MIN_ACCEPTANCE_RATE: f64 = 0.75;
pub const CONSISTENCY_SPLITS: usize = 25;
pub const MIN_SCORE: f64 = 1.0;
pub const MAX_SCORE: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord<T> {
    pub subject_id: String,
    pub content_id: String,
    pub raw_score: T,
    pub is_repeat: bool,
    pub is_gold: bool,
}

impl<T: Real> RatingRecord<T> {
    pub fn validate(&self) -> Result<()> {
        let s = self.raw_score.as_f64();
        if !(MIN_SCORE..=MAX_SCORE).contains(&s) {
            return Err(Error::Range(format!(
                "score {s} of {}/{} outside [{MIN_SCORE}, {MAX_SCORE}]",
                self.subject_id, self.content_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectSession<T> {
    pub subject_id: String,
    pub acceptance_rate: T,
    pub records: Vec<RatingRecord<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosEntry<T> {
    pub mos: T,
    pub rating_count: usize,
    pub z_mean: T,
    pub z_std: T,
}

/// Per-content MOS keyed by content id (sorted).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MosTable<T> {
    pub entries: BTreeMap<String, MosEntry<T>>,
}

impl<T: Real> MosTable<T> {
    /// Table from bare MOS values, e.g. a simulation ground truth.
    pub fn from_scores<I, S>(scores: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
    {
        let mut entries = BTreeMap::new();
        for (id, mos) in scores {
            if !(mos >= T::zero() && mos <= T::lit(100.0)) {
                return Err(Error::Range(format!("MOS {mos} outside [0, 100]")));
            }
            let z_mean = mos * T::lit(6.0) / T::lit(100.0) - T::lit(3.0);
            entries.insert(id.into(), MosEntry { mos, rating_count: 1, z_mean, z_std: T::zero() });
        }
        Ok(MosTable { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mos(&self, id: &str) -> Option<T> {
        self.entries.get(id).map(|e| e.mos)
    }

    /// MOS values of the ids present in both tables, in id order.
    pub fn paired(&self, other: &MosTable<T>) -> (Vec<T>, Vec<T>) {
        self.entries
            .iter()
            .filter_map(|(id, e)| other.entries.get(id).map(|o| (e.mos, o.mos)))
            .unzip()
    }
}

/// Maps a mean Z-score to `[0, 100]` with the fixed affine `(z + 3) * 100 / 6`.
pub fn z_to_mos<T: Real>(z: T) -> T {
    ((z + T::lit(3.0)) * T::lit(100.0) / T::lit(6.0)).max(T::zero()).min(T::lit(100.0))
}

/// Standardizes with the sample (n-1) standard deviation.
pub fn znormalize<T: Real>(raw: &[T]) -> Result<Vec<T>> {
    let m = mean(raw).ok_or_else(|| Error::Degenerate("Z-scores of an empty list".into()))?;
    let sd = sample_variance(raw)
        .map(|v| v.sqrt())
        .filter(|sd| *sd > T::zero())
        .ok_or_else(|| Error::Degenerate("Z-scores need at least two distinct values".into()))?;
    Ok(raw.iter().map(|&x| (x - m) / sd).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectionPolicy {
    /// Sessions at or below this platform acceptance rate are rejected.
    pub min_acceptance_rate: f64,
    /// Mean absolute repeat difference allowed, in units of the study-wide
    /// standard deviation of raw scores.
    pub repeat_threshold: f64,
    /// Sessions where strictly more than this fraction of scores share one
    /// value are rejected.
    pub max_identical_fraction: f64,
}

impl Default for RejectionPolicy {
    fn default() -> Self {
        RejectionPolicy {
            min_acceptance_rate: MIN_ACCEPTANCE_RATE,
            repeat_threshold: 1.0,
            max_identical_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RejectionReason {
    AcceptanceRate { rate: f64 },
    RepeatInconsistency { mean_abs_diff: f64, limit: f64 },
    IdenticalScores { fraction: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RejectionReport {
    pub accepted: BTreeSet<String>,
    pub rejected: BTreeMap<String, Vec<RejectionReason>>,
    pub sigma_all: f64,
}

/// Applies the three rejection rules to every session. A subject is accepted
/// only if all of its sessions pass.
pub fn assess_subjects<T: Real>(sessions: &[SubjectSession<T>], policy: &RejectionPolicy) -> Result<RejectionReport> {
    let all: Vec<f64> = sessions
        .iter()
        .flat_map(|s| s.records.iter().map(|r| r.raw_score.as_f64()))
        .collect();
    let sigma_all = sample_variance(&all).map(f64::sqrt).unwrap_or(0.0);
    let mut report = RejectionReport { sigma_all, ..Default::default() };
    for s in sessions {
        let mut reasons = Vec::new();
        let rate = s.acceptance_rate.as_f64();
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Validation(format!("acceptance rate {rate} of {}", s.subject_id)));
        }
        if rate <= policy.min_acceptance_rate {
            reasons.push(RejectionReason::AcceptanceRate { rate });
        }

        let diffs = repeat_differences(s)?;
        let mean_abs_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let limit = policy.repeat_threshold * sigma_all;
        if mean_abs_diff > limit {
            reasons.push(RejectionReason::RepeatInconsistency { mean_abs_diff, limit });
        }

        let fraction = modal_fraction(s);
        if fraction > policy.max_identical_fraction {
            reasons.push(RejectionReason::IdenticalScores { fraction });
        }

        if reasons.is_empty() {
            report.accepted.insert(s.subject_id.clone());
        } else {
            report.rejected.entry(s.subject_id.clone()).or_default().extend(reasons);
        }
    }
    for id in report.rejected.keys() {
        report.accepted.remove(id);
    }
    Ok(report)
}

pub fn reject_subjects<T: Real>(sessions: &[SubjectSession<T>], policy: &RejectionPolicy) -> Result<BTreeSet<String>> {
    assess_subjects(sessions, policy).map(|r| r.accepted)
}

/// `|first - repeat|` for every repeat record, paired with the session's
/// non-repeat rating of the same content.
fn repeat_differences<T: Real>(s: &SubjectSession<T>) -> Result<Vec<f64>> {
    let firsts: BTreeMap<&str, f64> = s
        .records
        .iter()
        .filter(|r| !r.is_repeat)
        .map(|r| (r.content_id.as_str(), r.raw_score.as_f64()))
        .collect();
    let mut diffs = Vec::new();
    for r in s.records.iter().filter(|r| r.is_repeat) {
        let first = firsts.get(r.content_id.as_str()).ok_or_else(|| {
            Error::Structure(format!(
                "repeat of {} in session {} has no first rating",
                r.content_id, s.subject_id
            ))
        })?;
        diffs.push((first - r.raw_score.as_f64()).abs());
    }
    if diffs.is_empty() {
        return Err(Error::Structure(format!("session {} has no repeat pairs", s.subject_id)));
    }
    Ok(diffs)
}

fn modal_fraction<T: Real>(s: &SubjectSession<T>) -> f64 {
    if s.records.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for r in &s.records {
        *counts.entry(r.raw_score.as_f64().to_bits()).or_default() += 1;
    }
    *counts.values().max().unwrap() as f64 / s.records.len() as f64
}

/// Z-scores per content from the given subjects, excluding repeat records.
fn content_zscores<T: Real>(
    records: &[RatingRecord<T>],
    subjects: &BTreeSet<String>,
) -> Result<BTreeMap<String, Vec<T>>> {
    let mut by_subject: BTreeMap<&str, Vec<&RatingRecord<T>>> = BTreeMap::new();
    for r in records.iter().filter(|r| subjects.contains(&r.subject_id)) {
        r.validate()?;
        by_subject.entry(r.subject_id.as_str()).or_default().push(r);
    }
    let mut by_content: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for (subject, recs) in by_subject {
        let raw: Vec<T> = recs.iter().map(|r| r.raw_score).collect();
        let z = znormalize(&raw).map_err(|e| Error::Degenerate(format!("subject {subject}: {e}")))?;
        for (r, z) in recs.iter().zip(z) {
            if !r.is_repeat {
                by_content.entry(r.content_id.clone()).or_default().push(z);
            }
        }
    }
    Ok(by_content)
}

fn aggregate<T: Real>(by_content: BTreeMap<String, Vec<T>>) -> MosTable<T> {
    let entries = by_content
        .into_iter()
        .map(|(id, zs)| {
            let z_mean = mean(&zs).expect("nonempty");
            let z_std = sample_variance(&zs).map(|v| v.sqrt()).unwrap_or(T::zero());
            (id, MosEntry { mos: z_to_mos(z_mean), rating_count: zs.len(), z_mean, z_std })
        })
        .collect();
    MosTable { entries }
}

/// MOS per content from accepted subjects: Z-normalize each subject, average
/// by content, map to `[0, 100]`. Repeat records count towards a subject's
/// Z statistics but not towards content means.
pub fn compute_mos<T: Real>(records: &[RatingRecord<T>], accepted: &BTreeSet<String>) -> Result<MosTable<T>> {
    let by_content = content_zscores(records, accepted)?;
    let missing: BTreeSet<String> = records
        .iter()
        .filter(|r| !by_content.contains_key(&r.content_id))
        .map(|r| r.content_id.clone())
        .collect();
    if !missing.is_empty() || by_content.is_empty() {
        return Err(Error::Coverage(missing.into_iter().collect()));
    }
    Ok(aggregate(by_content))
}

/// Mean LCC between the MOS of two random disjoint equal halves of the
/// accepted subjects over `n_splits` seeded splits. Gold contents are left
/// out of the comparison (each subject sees a different handful of them),
/// as are contents missing from either half.
pub fn inter_subject_consistency<T: Real>(
    records: &[RatingRecord<T>],
    accepted: &BTreeSet<String>,
    n_splits: usize,
    seed: u64,
) -> Result<T> {
    let subjects: Vec<String> = accepted.iter().cloned().collect();
    if subjects.len() < 4 {
        return Err(Error::Split(format!("need at least 4 accepted subjects, got {}", subjects.len())));
    }
    if n_splits == 0 {
        return Err(Error::Split("zero splits requested".into()));
    }
    let golds: BTreeSet<&str> = records.iter().filter(|r| r.is_gold).map(|r| r.content_id.as_str()).collect();
    let study_only = |mut t: MosTable<T>| {
        t.entries.retain(|id, _| !golds.contains(id.as_str()));
        t
    };
    let half = subjects.len() / 2;
    let mut total = T::zero();
    for split in 0..n_splits {
        let mut order = subjects.clone();
        order.shuffle(&mut rng::substream(seed, split as u64));
        let a: BTreeSet<String> = order[..half].iter().cloned().collect();
        let b: BTreeSet<String> = order[half..2 * half].iter().cloned().collect();
        let mos_a = study_only(aggregate(content_zscores(records, &a)?));
        let mos_b = study_only(aggregate(content_zscores(records, &b)?));
        let (xa, xb) = mos_a.paired(&mos_b);
        if xa.len() < 3 {
            return Err(Error::Split(format!("split {split} leaves {} shared contents", xa.len())));
        }
        total = total + lcc(&xa, &xb)?;
    }
    Ok(total / T::from_usize_lossy(n_splits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(subject: &str, content: &str, score: f64, repeat: bool) -> RatingRecord<f64> {
        RatingRecord {
            subject_id: subject.into(),
            content_id: content.into(),
            raw_score: score,
            is_repeat: repeat,
            is_gold: false,
        }
    }

    fn session(subject: &str, scores: &[f64], repeats: &[(usize, f64)]) -> SubjectSession<f64> {
        let mut records: Vec<_> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| rec(subject, &format!("c{i}"), s, false))
            .collect();
        records.extend(repeats.iter().map(|&(i, s)| rec(subject, &format!("c{i}"), s, true)));
        SubjectSession { subject_id: subject.into(), acceptance_rate: 0.9, records }
    }

    #[test]
    fn znormalize_cases() {
        let z = znormalize(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(z[2], 0.0);
        let expected: [f64; 5] = [-1.2649, -0.6325, 0.0, 0.6325, 1.2649];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!(matches!(znormalize(&[7.0, 7.0, 7.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_subject_mos() {
        let records = vec![rec("s", "a", 20.0, false), rec("s", "b", 50.0, false), rec("s", "c", 80.0, false)];
        let accepted: BTreeSet<String> = ["s".to_string()].into();
        let t = compute_mos(&records, &accepted).unwrap();
        assert!((t.mos("a").unwrap() - 100.0 / 3.0).abs() < 0.01);
        assert!((t.mos("b").unwrap() - 50.0).abs() < 1e-12);
        assert!((t.mos("c").unwrap() - 200.0 / 3.0).abs() < 0.01);
        assert_eq!(t.entries["a"].rating_count, 1);
        match compute_mos(&records, &BTreeSet::new()) {
            Err(Error::Coverage(ids)) => assert_eq!(ids, vec!["a", "b", "c"]),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn mos_clamps_extreme_z() {
        assert_eq!(z_to_mos(4.0), 100.0);
        assert_eq!(z_to_mos(-3.5), 0.0);
        assert_eq!(z_to_mos(0.0), 50.0);
    }

    #[test]
    fn rejection_rules() {
        let scores: Vec<f64> = (0..20).map(|i| 5.0 + 4.5 * i as f64).collect();
        let faithful = session("good", &scores, &[(0, 5.0), (3, 18.5), (6, 32.0), (9, 45.5), (12, 59.0)]);
        let constant = session("const", &[50.0; 20], &[(0, 50.0), (1, 50.0), (2, 50.0), (3, 50.0), (4, 50.0)]);
        let mut low_rate = faithful.clone();
        low_rate.subject_id = "lowrate".into();
        low_rate.acceptance_rate = 0.75;
        for r in &mut low_rate.records {
            r.subject_id = "lowrate".into();
        }
        let report = assess_subjects(&[faithful, constant, low_rate], &RejectionPolicy::default()).unwrap();
        assert_eq!(report.accepted, ["good".to_string()].into());
        assert!(matches!(report.rejected["const"][0], RejectionReason::IdenticalScores { .. }));
        assert!(matches!(report.rejected["lowrate"][0], RejectionReason::AcceptanceRate { .. }));
    }

    #[test]
    fn repeat_inconsistency_rejected() {
        // Faithful raters set sigma_all; the erratic one repeats 3 sigma away.
        let scores: Vec<f64> = (0..20).map(|i| 5.0 + 4.5 * i as f64).collect();
        let exact: Vec<(usize, f64)> = (0..5).map(|i| (i, scores[i])).collect();
        let mut sessions: Vec<_> = (0..4).map(|s| session(&format!("f{s}"), &scores, &exact)).collect();
        let all: Vec<f64> = sessions.iter().flat_map(|s| s.records.iter().map(|r| r.raw_score)).collect();
        let sigma = sample_variance(&all).unwrap().sqrt();
        let shifted: Vec<(usize, f64)> = (15..20).map(|i| (i, scores[i] - 3.0 * sigma)).collect();
        sessions.push(session("erratic", &scores, &shifted));
        let report = assess_subjects(&sessions, &RejectionPolicy::default()).unwrap();
        assert!(!report.accepted.contains("erratic"));
        match &report.rejected["erratic"][0] {
            RejectionReason::RepeatInconsistency { mean_abs_diff, limit } => {
                assert!((mean_abs_diff - 3.0 * sigma).abs() < 1e-9);
                assert!(*mean_abs_diff > 2.0 * limit);
            }
            other => panic!("unexpected reason {other:?}"),
        }
        assert_eq!(report.accepted.len(), 4);
    }

    #[test]
    fn session_without_repeats_is_structure_error() {
        let s = session("x", &[1.0, 2.0, 3.0], &[]);
        assert!(matches!(reject_subjects(&[s], &RejectionPolicy::default()), Err(Error::Structure(_))));
    }

    #[test]
    fn identical_raters_are_fully_consistent() {
        let mut records = Vec::new();
        for s in 0..8 {
            for c in 0..10 {
                records.push(rec(&format!("s{s}"), &format!("c{c}"), 10.0 + 7.0 * c as f64, false));
            }
        }
        let accepted: BTreeSet<String> = (0..8).map(|s| format!("s{s}")).collect();
        let c = inter_subject_consistency(&records, &accepted, CONSISTENCY_SPLITS, 3).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        let few: BTreeSet<String> = (0..3).map(|s| format!("s{s}")).collect();
        assert!(matches!(inter_subject_consistency(&records, &few, 5, 3), Err(Error::Split(_))));
    }

    proptest! {
        #[test]
        fn znormalize_affine_invariant(
            x in proptest::collection::vec(1.0f64..100.0, 3..40),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
        ) {
            if let Ok(z) = znormalize(&x) {
                let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let zy = znormalize(&y).unwrap();
                for (p, q) in z.iter().zip(&zy) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}
