//! Histogram-matched subset selection.
//!
//! Picks `k` candidates so that the marginal histogram of each of the six
//! sampling features over the selection is as close as possible (L1) to a
//! target histogram. Selection is greedy forward addition followed by
//! first-improvement local search over single and pair swaps.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;
use crate::ugcfeat::{FeatureVector, FEATURE_NAMES};

const MASS_TOLERANCE: f64 = 1e-9;
const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    pub edges: Vec<T>,
    pub mass: Vec<T>,
}

impl<T: Real> Histogram<T> {
    pub fn new(edges: Vec<T>, mass: Vec<T>) -> Result<Self> {
        let h = Histogram { edges, mass };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 || self.mass.len() + 1 != self.edges.len() {
            return Err(Error::Shape(format!(
                "{} edges for {} bins",
                self.edges.len(),
                self.mass.len()
            )));
        }
        if self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation("histogram edges must be strictly increasing".into()));
        }
        if self.mass.iter().any(|m| !(*m >= T::zero())) {
            return Err(Error::Validation("histogram mass must be nonnegative".into()));
        }
        let total: T = self.mass.iter().copied().sum();
        if (total.as_f64() - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Validation(format!("histogram mass sums to {total}")));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    /// Bin of `v`: interior boundaries belong to the right bin, the last bin
    /// is closed on the right.
    pub fn bin_of(&self, v: T) -> Result<usize> {
        bin_index(&self.edges, v)
    }
}

fn bin_index<T: Real>(edges: &[T], v: T) -> Result<usize> {
    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    if !(v >= lo && v <= hi) {
        return Err(Error::Range(format!("value {v} outside [{lo}, {hi}]")));
    }
    let idx = edges.partition_point(|&e| e <= v);
    Ok((idx - 1).min(edges.len() - 2))
}

pub fn build_histogram<T: Real>(values: &[T], edges: &[T]) -> Result<Histogram<T>> {
    if values.is_empty() {
        return Err(Error::Size("histogram of an empty value list".into()));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("histogram edges must be strictly increasing".into()));
    }
    let mut counts = vec![0usize; edges.len() - 1];
    for &v in values {
        counts[bin_index(edges, v)?] += 1;
    }
    let n = T::from_usize_lossy(values.len());
    Ok(Histogram {
        edges: edges.to_vec(),
        mass: counts.into_iter().map(|c| T::from_usize_lossy(c) / n).collect(),
    })
}

/// L1 distance between two histograms over identical edges, in `[0, 2]`.
pub fn histogram_distance<T: Real>(a: &Histogram<T>, b: &Histogram<T>) -> Result<T> {
    if a.edges != b.edges {
        return Err(Error::Shape("histograms have different edges".into()));
    }
    Ok(a.mass.iter().zip(&b.mass).map(|(&x, &y)| (x - y).abs()).sum())
}

/// Target histograms, one per sampling feature in [`FEATURE_NAMES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet<T> {
    pub histograms: [Histogram<T>; 6],
}

impl<T: Real> TargetSet<T> {
    /// Parses `{"brightness": {"edges": [...], "mass": [...]}, ...}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, Histogram<f64>> = serde_json::from_str(text)?;
        let mut hists = Vec::with_capacity(6);
        for name in FEATURE_NAMES {
            let h = map
                .get(name)
                .ok_or_else(|| Error::Validation(format!("targets missing feature '{name}'")))?;
            hists.push(Histogram::new(
                h.edges.iter().map(|&e| T::lit(e)).collect(),
                h.mass.iter().map(|&m| T::lit(m)).collect(),
            )?);
        }
        if let Some(extra) = map.keys().find(|k| !FEATURE_NAMES.contains(&k.as_str())) {
            return Err(Error::Validation(format!("unknown target feature '{extra}'")));
        }
        Ok(TargetSet { histograms: hists.try_into().expect("six histograms") })
    }

    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, Histogram<f64>> = FEATURE_NAMES
            .iter()
            .zip(&self.histograms)
            .map(|(name, h)| {
                (
                    *name,
                    Histogram {
                        edges: h.edges.iter().map(|e| e.as_f64()).collect(),
                        mass: h.mass.iter().map(|m| m.as_f64()).collect(),
                    },
                )
            })
            .collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }
}

#[derive(Clone, Debug)]
pub struct SamplingProblem<T> {
    pub candidates: Vec<FeatureVector<T>>,
    pub targets: TargetSet<T>,
    pub k: usize,
}

impl<T: Real> SamplingProblem<T> {
    pub fn new(candidates: Vec<FeatureVector<T>>, targets: TargetSet<T>, k: usize) -> Result<Self> {
        let p = SamplingProblem { candidates, targets, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.candidates.len() {
            return Err(Error::Size(format!(
                "cannot select {} of {} candidates",
                self.k,
                self.candidates.len()
            )));
        }
        self.bin_table().map(|_| ())
    }

    /// Bin index of every candidate for every feature.
    fn bin_table(&self) -> Result<Vec<[usize; 6]>> {
        self.candidates
            .iter()
            .map(|c| {
                let vals = c.as_array();
                let mut bins = [0usize; 6];
                for f in 0..6 {
                    bins[f] = self.targets.histograms[f]
                        .bin_of(vals[f])
                        .map_err(|e| Error::Range(format!("feature {}: {e}", FEATURE_NAMES[f])))?;
                }
                Ok(bins)
            })
            .collect()
    }

    /// Objective `J(S)`: sum over features of the L1 distance between the
    /// selection's histogram and the target.
    pub fn objective(&self, selection: &[usize]) -> Result<T> {
        if selection.is_empty() {
            return Err(Error::Size("objective of an empty selection".into()));
        }
        let bins = self.bin_table()?;
        let mut state = CountState::new(&self.targets);
        for &i in selection {
            let b = bins.get(i).ok_or_else(|| Error::Bounds(format!("candidate {i}")))?;
            state.add(b);
        }
        Ok(state.objective(&self.targets, selection.len()))
    }

    /// Per-feature L1 distances of a selection.
    pub fn feature_distances(&self, selection: &[usize]) -> Result<[T; 6]> {
        let mut out = [T::zero(); 6];
        for (f, target) in self.targets.histograms.iter().enumerate() {
            let vals: Vec<T> = selection.iter().map(|&i| self.candidates[i].as_array()[f]).collect();
            out[f] = histogram_distance(&build_histogram(&vals, &target.edges)?, target)?;
        }
        Ok(out)
    }
}

struct CountState {
    counts: Vec<Vec<usize>>,
}

impl CountState {
    fn new<T: Real>(targets: &TargetSet<T>) -> Self {
        CountState { counts: targets.histograms.iter().map(|h| vec![0; h.bins()]).collect() }
    }

    fn add(&mut self, bins: &[usize; 6]) {
        for f in 0..6 {
            self.counts[f][bins[f]] += 1;
        }
    }

    fn remove(&mut self, bins: &[usize; 6]) {
        for f in 0..6 {
            self.counts[f][bins[f]] -= 1;
        }
    }

    fn objective<T: Real>(&self, targets: &TargetSet<T>, n: usize) -> T {
        let n = T::from_usize_lossy(n);
        self.counts
            .iter()
            .zip(&targets.histograms)
            .map(|(counts, h)| {
                counts
                    .iter()
                    .zip(&h.mass)
                    .map(|(&c, &m)| (T::from_usize_lossy(c) / n - m).abs())
                    .sum::<T>()
            })
            .sum()
    }
}

/// Greedy add-then-swap selection. Returns `k` distinct indices in ascending
/// order. The seed fixes the scan order of the swap passes.
pub fn greedy_sample<T: Real>(problem: &SamplingProblem<T>, seed: u64) -> Result<Vec<usize>> {
    problem.validate()?;
    let n = problem.candidates.len();
    let k = problem.k;
    let bins = problem.bin_table()?;
    let targets = &problem.targets;

    let mut selected = vec![false; n];
    let mut state = CountState::new(targets);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let mut best: Option<(usize, T)> = None;
        for c in (0..n).filter(|&c| !selected[c]) {
            state.add(&bins[c]);
            let j = state.objective(targets, chosen.len() + 1);
            state.remove(&bins[c]);
            if best.is_none_or(|(_, bj)| j < bj) {
                best = Some((c, j));
            }
        }
        let (c, _) = best.expect("at least one unselected candidate");
        selected[c] = true;
        state.add(&bins[c]);
        chosen.push(c);
    }

    let mut rng = rng::seeded(seed);
    let mut current = state.objective(targets, k);
    let eps = T::lit(IMPROVEMENT_EPS);
    loop {
        if swap_pass(&mut chosen, &mut selected, &mut state, &bins, targets, &mut current, eps, 1, &mut rng)
            || swap_pass(&mut chosen, &mut selected, &mut state, &bins, targets, &mut current, eps, 2, &mut rng)
        {
            continue;
        }
        break;
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// One first-improvement pass exchanging `width` selected items for `width`
/// unselected ones, visited in shuffled order. Returns whether a swap was
/// applied.
#[allow(clippy::too_many_arguments)]
fn swap_pass<T: Real>(
    chosen: &mut [usize],
    selected: &mut [bool],
    state: &mut CountState,
    bins: &[[usize; 6]],
    targets: &TargetSet<T>,
    current: &mut T,
    eps: T,
    width: usize,
    rng: &mut rng::Rng,
) -> bool {
    let k = chosen.len();
    if width > k || width > selected.len() - k {
        return false;
    }
    let mut outs = index_tuples(k, width);
    let mut ins = index_tuples(selected.len() - k, width);
    outs.shuffle(rng);
    ins.shuffle(rng);
    let free: Vec<usize> = (0..selected.len()).filter(|&c| !selected[c]).collect();
    for slots in &outs {
        for picks in &ins {
            let old: Vec<usize> = slots.iter().map(|&s| chosen[s]).collect();
            let new: Vec<usize> = picks.iter().map(|&p| free[p]).collect();
            old.iter().for_each(|&c| state.remove(&bins[c]));
            new.iter().for_each(|&c| state.add(&bins[c]));
            let j = state.objective(targets, k);
            if j < *current - eps {
                for (&s, (&o, &c)) in slots.iter().zip(old.iter().zip(&new)) {
                    selected[o] = false;
                    selected[c] = true;
                    chosen[s] = c;
                }
                *current = j;
                return true;
            }
            new.iter().for_each(|&c| state.remove(&bins[c]));
            old.iter().for_each(|&c| state.add(&bins[c]));
        }
    }
    false
}

/// Increasing index tuples of length `width` (1 or 2) drawn from `0..n`.
fn index_tuples(n: usize, width: usize) -> Vec<Vec<usize>> {
    match width {
        1 => (0..n).map(|i| vec![i]).collect(),
        _ => (0..n).flat_map(|i| (i + 1..n).map(move |j| vec![i, j])).collect(),
    }
}
