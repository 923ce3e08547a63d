//! Problem instances, rankings, choice vectors and sparse ranking models.
//!
//! Items are labelled `1..=n`; item 1 is the no-buy option and belongs to
//! every assortment. Assortments are addressed by their 0-based index in the
//! instance (files use 1-based ids). Every per-pair vector is laid out
//! assortment-major with items ascending inside each assortment.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label of the no-buy option.
pub const NO_BUY: usize = 1;

/// The assortment universe together with the flat (assortment, item) pair index.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n: usize,
    assortments: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    // For every item (0-based), the (assortment, pair) slots it occupies.
    membership: Vec<Vec<(usize, usize)>>,
}

impl Instance {
    /// Builds an instance over items `1..=n`.
    ///
    /// Each set is sorted and deduplicated; the no-buy item is inserted where
    /// missing. Sets that coincide after this normalization are rejected.
    pub fn new(n: usize, assortments: Vec<Vec<usize>>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInstance(format!("need n >= 2, got {n}")));
        }
        if assortments.is_empty() {
            return Err(Error::InvalidInstance("no assortments given".into()));
        }
        let mut sets = Vec::with_capacity(assortments.len());
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        for (j, mut set) in assortments.into_iter().enumerate() {
            if let Some(&bad) = set.iter().find(|&&i| i == 0 || i > n) {
                return Err(Error::InvalidInstance(format!(
                    "assortment {} contains item {bad} outside 1..={n}",
                    j + 1
                )));
            }
            set.sort_unstable();
            set.dedup();
            if set.first() != Some(&NO_BUY) {
                log::warn!("assortment {} lacks the no-buy item; inserting it", j + 1);
                set.insert(0, NO_BUY);
            }
            if let Some(prev) = seen.insert(set.clone(), j) {
                return Err(Error::InvalidInstance(format!(
                    "assortments {} and {} are identical",
                    prev + 1,
                    j + 1
                )));
            }
            sets.push(set);
        }

        let mut offsets = Vec::with_capacity(sets.len() + 1);
        let mut membership = vec![Vec::new(); n];
        let mut acc = 0;
        for (j, set) in sets.iter().enumerate() {
            offsets.push(acc);
            for (k, &item) in set.iter().enumerate() {
                membership[item - 1].push((j, acc + k));
            }
            acc += set.len();
        }
        offsets.push(acc);

        Ok(Self {
            n,
            assortments: sets,
            offsets,
            membership,
        })
    }

    /// Number of items, including the no-buy option.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of assortments.
    pub fn m(&self) -> usize {
        self.assortments.len()
    }

    /// Total number of (assortment, item) pairs.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn assortments(&self) -> &[Vec<usize>] {
        &self.assortments
    }

    pub fn assortment(&self, j: usize) -> &[usize] {
        &self.assortments[j]
    }

    /// Pair-index range of assortment `j`.
    pub fn block(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// Flat index of the pair (assortment `j`, `item`), if `item` belongs to it.
    pub fn pair_index(&self, j: usize, item: usize) -> Option<usize> {
        let set = self.assortments.get(j)?;
        set.binary_search(&item).ok().map(|k| self.offsets[j] + k)
    }

    /// All pairs `(assortment, item)` in pair-index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assortments
            .iter()
            .enumerate()
            .flat_map(|(j, set)| set.iter().map(move |&i| (j, i)))
    }

    /// The `(assortment, pair)` slots holding `item`.
    pub fn slots_of(&self, item: usize) -> &[(usize, usize)] {
        &self.membership[item - 1]
    }

    /// Builds the 0/1 vertex vector of `ranking`.
    pub fn vertex(&self, ranking: &Ranking) -> Result<ChoiceVector> {
        self.check_ranking(ranking)?;
        let pos = ranking.positions();
        let mut out = vec![0.0; self.dim()];
        self.mark_vertex(&pos, |pair| out[pair] = 1.0);
        Ok(ChoiceVector::from_vec(out))
    }

    /// Calls `mark` with the pair index of the top choice in every assortment.
    /// `pos[i - 1]` is the position of item `i`.
    pub(crate) fn mark_vertex(&self, pos: &[usize], mut mark: impl FnMut(usize)) {
        for j in 0..self.m() {
            let set = &self.assortments[j];
            let best = (0..set.len()).min_by_key(|&k| pos[set[k] - 1]).unwrap();
            mark(self.offsets[j] + best);
        }
    }

    pub(crate) fn check_ranking(&self, ranking: &Ranking) -> Result<()> {
        if ranking.len() != self.n {
            return Err(Error::InvalidRanking(format!(
                "ranking has {} items, instance has {}",
                ranking.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Mixture prediction `sum_k w_k * vertex(r_k)`.
    pub fn predict(&self, model: &SparseModel) -> Result<ChoiceVector> {
        let mut out = vec![0.0; self.dim()];
        for (r, w) in model.support() {
            self.check_ranking(r)?;
            let pos = r.positions();
            self.mark_vertex(&pos, |pair| out[pair] += w);
        }
        Ok(ChoiceVector::from_vec(out))
    }

    /// Largest deviation of any assortment block sum from 1.
    pub fn block_sum_error(&self, x: &ChoiceVector) -> f64 {
        (0..self.m())
            .map(|j| (x.as_slice()[self.block(j)].iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// A strict preference order over items `1..=n`, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i == 0 || i > n || std::mem::replace(&mut seen[i - 1], true) {
                return Err(Error::InvalidRanking(format!(
                    "{order:?} is not a permutation of 1..={n}"
                )));
            }
        }
        Ok(Self(order))
    }

    pub fn identity(n: usize) -> Self {
        Self((1..=n).collect())
    }

    pub(crate) fn from_order_unchecked(order: Vec<usize>) -> Self {
        debug_assert!(Ranking::new(order.clone()).is_ok());
        Self(order)
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `positions()[i - 1]` is the rank position of item `i` (0 = top).
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (k, &i) in self.0.iter().enumerate() {
            pos[i - 1] = k;
        }
        pos
    }
}

impl std::fmt::Display for Ranking {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Per-pair probability vector in pair-index order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChoiceVector(Vec<f64>);

impl ChoiceVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for ChoiceVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A finitely supported distribution over rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseModel {
    support: Vec<(Ranking, f64)>,
}

impl SparseModel {
    pub fn new(support: Vec<(Ranking, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidModel("empty support".into()));
        }
        let n = support[0].0.len();
        let mut seen = HashMap::new();
        let mut total = 0.0;
        for (r, w) in &support {
            if r.len() != n {
                return Err(Error::InvalidModel("rankings of different lengths".into()));
            }
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidModel(format!("weight {w} of {r} is not positive")));
            }
            if seen.insert(r, ()).is_some() {
                return Err(Error::InvalidModel(format!("ranking {r} listed twice")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { support })
    }

    pub fn single(r: Ranking) -> Self {
        Self {
            support: vec![(r, 1.0)],
        }
    }

    pub fn support(&self) -> impl Iterator<Item = (&Ranking, f64)> {
        self.support.iter().map(|(r, w)| (r, *w))
    }

    /// Number of rankings with positive weight.
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    /// Item count of the rankings in the support.
    pub fn n(&self) -> usize {
        self.support[0].0.len()
    }
}

/// Accumulates ranking weights while a solver runs, merging repeats.
#[derive(Debug, Clone, Default)]
pub(crate) struct ModelBuilder {
    index: HashMap<Ranking, usize>,
    support: Vec<(Ranking, f64)>,
}

impl ModelBuilder {
    pub fn add(&mut self, r: &Ranking, w: f64) {
        match self.index.get(r) {
            Some(&k) => self.support[k].1 += w,
            None => {
                self.index.insert(r.clone(), self.support.len());
                self.support.push((r.clone(), w));
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, w) in &mut self.support {
            *w *= factor;
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    /// Drops zero weights and renormalizes to sum 1.
    pub fn build(&self) -> SparseModel {
        let support: Vec<_> = self
            .support
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .cloned()
            .collect();
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        SparseModel {
            support: support.into_iter().map(|(r, w)| (r, w / total)).collect(),
        }
    }
}

/// One observed choice: `item` picked from assortment index `assortment`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub item: usize,
    pub assortment: usize,
}

/// Raw choice counts per pair and per assortment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalStats {
    counts_pair: Vec<u64>,
    counts_assort: Vec<u64>,
    total: u64,
}

/// Empirical choice probabilities and which assortments have been observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub probs: ChoiceVector,
    pub mask: Vec<bool>,
}

impl Snapshot {
    /// A fully observed snapshot.
    pub fn exact(probs: ChoiceVector, m: usize) -> Self {
        Self {
            probs,
            mask: vec![true; m],
        }
    }
}

impl EmpiricalStats {
    pub fn new(inst: &Instance) -> Self {
        Self {
            counts_pair: vec![0; inst.dim()],
            counts_assort: vec![0; inst.m()],
            total: 0,
        }
    }

    /// Adds a batch of observations. The batch is validated as a whole first,
    /// so a rejected batch leaves the counts untouched.
    pub fn record(&mut self, inst: &Instance, obs: &[Observation]) -> Result<()> {
        let pairs = obs
            .iter()
            .map(|o| {
                inst.pair_index(o.assortment, o.item)
                    .ok_or(Error::InvalidObservation {
                        item: o.item,
                        assortment: o.assortment + 1,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        for (o, pair) in obs.iter().zip(pairs) {
            self.counts_pair[pair] += 1;
            self.counts_assort[o.assortment] += 1;
        }
        self.total += obs.len() as u64;
        Ok(())
    }

    pub(crate) fn record_pair(&mut self, assortment: usize, pair: usize) {
        self.counts_pair[pair] += 1;
        self.counts_assort[assortment] += 1;
        self.total += 1;
    }

    pub fn counts_pair(&self) -> &[u64] {
        &self.counts_pair
    }

    pub fn counts_assort(&self) -> &[u64] {
        &self.counts_assort
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Conditional choice frequencies. Unobserved assortments get a zero block
    /// and are masked out.
    pub fn empirical_probs(&self, inst: &Instance) -> Snapshot {
        let mut probs = vec![0.0; inst.dim()];
        let mut mask = vec![false; inst.m()];
        for j in 0..inst.m() {
            let q = self.counts_assort[j];
            if q == 0 {
                continue;
            }
            mask[j] = true;
            for k in inst.block(j) {
                probs[k] = self.counts_pair[k] as f64 / q as f64;
            }
        }
        Snapshot {
            probs: ChoiceVector(probs),
            mask,
        }
    }
}

/// Mean absolute error between two choice vectors.
pub fn mae(p: &ChoiceVector, q: &ChoiceVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = p.0.iter().zip(&q.0).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / p.len() as f64)
}

/// Mean absolute error over the pairs of masked-in assortments only.
pub fn mae_masked(inst: &Instance, p: &ChoiceVector, q: &ChoiceVector, mask: &[bool]) -> Result<f64> {
    inst.check_len(p.len())?;
    inst.check_len(q.len())?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in (0..inst.m()).filter(|&j| mask[j]) {
        for k in inst.block(j) {
            sum += (p.0[k] - q.0[k]).abs();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst3() -> Instance {
        Instance::new(3, vec![vec![1, 2], vec![1, 2, 3]]).unwrap()
    }

    fn r(order: &[usize]) -> Ranking {
        Ranking::new(order.to_vec()).unwrap()
    }

    #[test]
    fn builds_pair_index_assortment_major() {
        let inst = inst3();
        assert_eq!(inst.m(), 2);
        assert_eq!(inst.dim(), 5);
        let pairs: Vec<_> = inst.pairs().collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 1), (1, 2), (1, 3)]);
        for (k, (j, i)) in pairs.into_iter().enumerate() {
            assert_eq!(inst.pair_index(j, i), Some(k));
        }
        assert_eq!(inst.pair_index(0, 3), None);
    }

    #[test]
    fn inserts_missing_no_buy() {
        let inst = Instance::new(3, vec![vec![2], vec![1, 2, 3]]).unwrap();
        assert_eq!(inst.assortment(0), &[1, 2]);
        assert_eq!(inst.dim(), 5);
    }

    #[test]
    fn rejects_bad_instances() {
        assert!(Instance::new(2, vec![vec![1, 2], vec![2, 1]]).is_err());
        assert!(Instance::new(1, vec![vec![1]]).is_err());
        assert!(Instance::new(3, vec![vec![1, 4]]).is_err());
        assert!(Instance::new(3, vec![vec![0, 2]]).is_err());
        // {2} and {1,2} coincide once the no-buy item is inserted
        assert!(Instance::new(3, vec![vec![2], vec![1, 2]]).is_err());
    }

    #[test]
    fn vertex_examples() {
        let inst = inst3();
        let v = |o: &[usize]| inst.vertex(&r(o)).unwrap().into_vec();
        assert_eq!(v(&[2, 1, 3]), vec![0., 1., 0., 1., 0.]);
        assert_eq!(v(&[1, 2, 3]), vec![1., 0., 1., 0., 0.]);
        assert_eq!(v(&[3, 2, 1]), vec![0., 1., 0., 0., 1.]);
        assert!(inst.vertex(&r(&[1, 2])).is_err());
    }

    #[test]
    fn ranking_validation() {
        assert!(Ranking::new(vec![1, 1, 2]).is_err());
        assert!(Ranking::new(vec![0, 1]).is_err());
        assert!(Ranking::new(vec![1, 3]).is_err());
        assert_eq!(r(&[3, 1, 2]).positions(), vec![1, 2, 0]);
    }

    #[test]
    fn predict_examples() {
        let inst = inst3();
        let single = SparseModel::single(r(&[1, 2, 3]));
        assert_eq!(inst.predict(&single).unwrap(), inst.vertex(&r(&[1, 2, 3])).unwrap());

        let mix = SparseModel::new(vec![(r(&[1, 2, 3]), 0.5), (r(&[3, 2, 1]), 0.5)]).unwrap();
        let x = inst.predict(&mix).unwrap();
        assert_eq!(x.as_slice(), &[0.5, 0.5, 0.5, 0.0, 0.5]);
        assert!(inst.block_sum_error(&x) < 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(SparseModel::new(vec![]).is_err());
        assert!(SparseModel::new(vec![(r(&[1, 2]), 0.6)]).is_err());
        assert!(SparseModel::new(vec![(r(&[1, 2]), 0.5), (r(&[1, 2]), 0.5)]).is_err());
        assert!(SparseModel::new(vec![(r(&[1, 2]), 1.0), (r(&[2, 1]), 0.0)]).is_err());
    }

    #[test]
    fn builder_merges_repeats() {
        let mut b = ModelBuilder::default();
        b.add(&r(&[1, 2]), 0.25);
        b.add(&r(&[2, 1]), 0.25);
        b.add(&r(&[1, 2]), 0.5);
        assert_eq!(b.len(), 2);
        let m = b.build();
        let w: Vec<f64> = m.support().map(|(_, w)| w).collect();
        assert_eq!(w, vec![0.75, 0.25]);
    }

    fn obs(item: usize, assortment_id: usize) -> Observation {
        Observation {
            item,
            assortment: assortment_id - 1,
        }
    }

    #[test]
    fn record_and_empirical_probs() {
        let inst = Instance::new(3, vec![vec![1, 2], vec![1, 2, 3]]).unwrap();
        let mut stats = EmpiricalStats::new(&inst);
        stats
            .record(&inst, &[obs(2, 1), obs(1, 1), obs(2, 1), obs(3, 2)])
            .unwrap();
        assert_eq!(stats.counts_pair(), &[1, 2, 0, 0, 1]);
        assert_eq!(stats.counts_assort(), &[3, 1]);
        assert_eq!(stats.total(), 4);

        let before = stats.clone();
        stats.record(&inst, &[]).unwrap();
        assert_eq!(stats, before);

        let snap = stats.empirical_probs(&inst);
        assert_eq!(snap.probs.as_slice(), &[1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0, 1.0]);
        assert_eq!(snap.mask, vec![true, true]);
    }

    #[test]
    fn rejected_batch_is_atomic() {
        let inst = inst3();
        let mut stats = EmpiricalStats::new(&inst);
        let err = stats.record(&inst, &[obs(1, 1), obs(3, 1)]).unwrap_err();
        assert!(matches!(err, Error::InvalidObservation { item: 3, assortment: 1 }));
        assert_eq!(stats.total(), 0);
    }

    #[test]
    fn unobserved_assortments_are_masked() {
        let inst = inst3();
        let mut stats = EmpiricalStats::new(&inst);
        stats.record(&inst, &[obs(1, 1)]).unwrap();
        let snap = stats.empirical_probs(&inst);
        assert_eq!(snap.mask, vec![true, false]);
        assert_eq!(snap.probs.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mae_examples() {
        let p = ChoiceVector::from(vec![0.5, 0.5, 1.0, 0.0, 0.0]);
        let q = ChoiceVector::from(vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(mae(&p, &p).unwrap(), 0.0);
        assert!((mae(&p, &q).unwrap() - 0.2).abs() < 1e-15);
        let a = ChoiceVector::from(vec![1.0, 0.0]);
        let b = ChoiceVector::from(vec![0.0, 1.0]);
        assert_eq!(mae(&a, &b).unwrap(), 1.0);
        assert!(mae(&a, &p).is_err());
    }

    #[test]
    fn masked_mae_skips_unobserved_blocks() {
        let inst = inst3();
        let p = ChoiceVector::from(vec![0.5, 0.5, 1.0, 0.0, 0.0]);
        let q = ChoiceVector::from(vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(mae_masked(&inst, &p, &q, &[true, false]).unwrap(), 0.5);
        assert_eq!(mae_masked(&inst, &p, &q, &[false, false]).unwrap(), 0.0);
    }
}
