//! Synthetic raters standing in for a crowdsourced study.
//!
//! Every simulated HIT holds `N` ratings: `N - 10` fresh contents, 5 gold
//! contents drawn from a fixed pool, and 5 repeats of items already shown in
//! the same HIT. Fresh contents are dealt from one seeded permutation so that
//! coverage across raters is balanced.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{MosTable, RatingRecord, SubjectSession, GOLDS_PER_HIT, MAX_SCORE, MIN_SCORE, REPEATS_PER_HIT};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

pub const GOLD_POOL_SIZE: usize = 15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum SpamMode {
    #[default]
    None,
    /// Always answers the given score.
    Constant(f64),
    /// Uniform random scores over the rating range.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterModel {
    pub gain: f64,
    pub bias: f64,
    pub noise_sigma: f64,
    #[serde(default)]
    pub spam_mode: SpamMode,
    #[serde(default = "default_acceptance_rate")]
    pub acceptance_rate: f64,
}

fn default_acceptance_rate() -> f64 {
    1.0
}

impl RaterModel {
    pub fn faithful(noise_sigma: f64) -> Self {
        RaterModel { gain: 1.0, bias: 0.0, noise_sigma, spam_mode: SpamMode::None, acceptance_rate: 1.0 }
    }

    pub fn spammer(mode: SpamMode) -> Self {
        RaterModel { spam_mode: mode, ..Self::faithful(0.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Validation(format!("rater gain {} must be positive", self.gain)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) || !self.bias.is_finite() {
            return Err(Error::Validation("rater bias/noise must be finite, noise nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.acceptance_rate) {
            return Err(Error::Validation(format!("acceptance rate {}", self.acceptance_rate)));
        }
        Ok(())
    }

    fn rate(&self, truth: f64, rng: &mut rng::Rng) -> f64 {
        match self.spam_mode {
            SpamMode::Constant(v) => v.clamp(MIN_SCORE, MAX_SCORE),
            SpamMode::Random => rng.random_range(MIN_SCORE..=MAX_SCORE),
            SpamMode::None => {
                let noise = if self.noise_sigma > 0.0 {
                    Normal::new(0.0, self.noise_sigma).expect("valid sigma").sample(rng)
                } else {
                    0.0
                };
                (self.gain * truth + self.bias + noise).clamp(MIN_SCORE, MAX_SCORE)
            }
        }
    }
}

/// The fixed gold pool: ids `gold-00..gold-14` with true MOS spread evenly
/// over `[10, 90]`.
pub fn gold_pool() -> Vec<(String, f64)> {
    (0..GOLD_POOL_SIZE)
        .map(|i| (format!("gold-{i:02}"), 10.0 + 80.0 * i as f64 / (GOLD_POOL_SIZE - 1) as f64))
        .collect()
}

/// One session per rater model. Ratings are
/// `clamp(gain * truth + bias + N(0, noise_sigma), 1, 100)` unless a spam
/// mode overrides them.
pub fn simulate_raters<T: Real>(
    true_mos: &MosTable<T>,
    models: &[RaterModel],
    n_contents_per_hit: usize,
    seed: u64,
) -> Result<Vec<SubjectSession<T>>> {
    let overhead = REPEATS_PER_HIT + GOLDS_PER_HIT;
    if n_contents_per_hit <= overhead {
        return Err(Error::Structure(format!(
            "HIT size {n_contents_per_hit} cannot hold {REPEATS_PER_HIT} repeats, {GOLDS_PER_HIT} golds and a fresh content"
        )));
    }
    let fresh = n_contents_per_hit - overhead;
    if fresh > true_mos.len() {
        return Err(Error::Structure(format!(
            "{fresh} fresh contents per HIT but only {} contents available",
            true_mos.len()
        )));
    }
    for m in models {
        m.validate()?;
    }
    let mut contents: Vec<(String, f64)> =
        true_mos.entries.iter().map(|(id, e)| (id.clone(), e.mos.as_f64())).collect();
    contents.shuffle(&mut rng::substream(seed, u64::MAX));
    let golds = gold_pool();

    let mut sessions = Vec::with_capacity(models.len());
    for (s, model) in models.iter().enumerate() {
        let mut rng = rng::substream(seed, s as u64);
        let subject_id = format!("sim-{s:04}");
        let mut items: Vec<(String, f64, bool)> = (0..fresh)
            .map(|j| {
                let (id, mos) = &contents[(s * fresh + j) % contents.len()];
                (id.clone(), *mos, false)
            })
            .collect();
        items.extend(golds.choose_multiple(&mut rng, GOLDS_PER_HIT).map(|(id, mos)| (id.clone(), *mos, true)));
        items.shuffle(&mut rng);

        let mut records: Vec<RatingRecord<T>> = items
            .iter()
            .map(|(id, truth, gold)| RatingRecord {
                subject_id: subject_id.clone(),
                content_id: id.clone(),
                raw_score: T::lit(model.rate(*truth, &mut rng)),
                is_repeat: false,
                is_gold: *gold,
            })
            .collect();
        let repeated: Vec<&(String, f64, bool)> = items.choose_multiple(&mut rng, REPEATS_PER_HIT).collect();
        for (id, truth, gold) in repeated {
            let first = records.iter().position(|r| &r.content_id == id).expect("shown item");
            let at = rng.random_range(first + 1..=records.len());
            records.insert(
                at,
                RatingRecord {
                    subject_id: subject_id.clone(),
                    content_id: id.clone(),
                    raw_score: T::lit(model.rate(*truth, &mut rng)),
                    is_repeat: true,
                    is_gold: *gold,
                },
            );
        }
        sessions.push(SubjectSession { subject_id, acceptance_rate: T::lit(model.acceptance_rate), records });
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    fn truth(n: usize) -> MosTable<f64> {
        MosTable::from_scores((0..n).map(|i| (format!("c{i:03}"), 10.0 + 80.0 * i as f64 / (n - 1) as f64))).unwrap()
    }

    #[test]
    fn identity_rater_reproduces_truth() {
        let t = truth(60);
        let sessions = simulate_raters(&t, &[RaterModel::faithful(0.0)], 60, 4).unwrap();
        let s = &sessions[0];
        assert_eq!(s.records.len(), 60);
        assert_eq!(s.records.iter().filter(|r| r.is_repeat).count(), 5);
        assert_eq!(s.records.iter().filter(|r| r.is_gold && !r.is_repeat).count(), 5);
        let golds: std::collections::BTreeMap<String, f64> = gold_pool().into_iter().collect();
        for r in &s.records {
            let expected = t.mos(&r.content_id).or_else(|| golds.get(&r.content_id).copied()).unwrap();
            assert_eq!(r.raw_score, expected);
        }
    }

    #[test]
    fn structure_errors() {
        let t = truth(60);
        assert!(matches!(simulate_raters(&t, &[RaterModel::faithful(1.0)], 10, 0), Err(Error::Structure(_))));
        assert!(simulate_raters(&t, &[RaterModel::faithful(1.0)], 11, 0).is_ok());
        assert!(matches!(simulate_raters(&truth(5), &[RaterModel::faithful(1.0)], 60, 0), Err(Error::Structure(_))));
        let bad = RaterModel { gain: 0.0, ..RaterModel::faithful(1.0) };
        assert!(matches!(simulate_raters(&t, &[bad], 60, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn deterministic_and_spam_rejected() {
        let t = truth(50);
        let mut models = vec![RaterModel::faithful(5.0); 6];
        models.push(RaterModel::spammer(SpamMode::Constant(50.0)));
        let a = simulate_raters(&t, &models, 60, 9).unwrap();
        assert_eq!(a, simulate_raters(&t, &models, 60, 9).unwrap());
        let accepted = reject_subjects(&a, &RejectionPolicy::default()).unwrap();
        assert_eq!(accepted.len(), 6);
        assert!(!accepted.contains("sim-0006"));
    }

    #[test]
    fn repeats_follow_their_first_rating() {
        let sessions = simulate_raters(&truth(30), &[RaterModel::faithful(2.0)], 25, 1).unwrap();
        let recs = &sessions[0].records;
        for (i, r) in recs.iter().enumerate().filter(|(_, r)| r.is_repeat) {
            assert!(recs[..i].iter().any(|p| !p.is_repeat && p.content_id == r.content_id));
        }
    }
}
