//! Mixed multinomial-logit ground truth, assortment sampling and
//! observation streams.
//!
//! The simulator works with `n` products plus the no-choice option. Utility
//! index 0 is the no-choice option and maps to internal item 1; product `i`
//! maps to internal item `i + 1`, so instances built here have `n + 1` items.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Open01};
use serde::{Deserialize, Serialize};

use crate::data::DataSource;
use crate::error::{Error, Result};
use crate::model::{ChoiceVector, EmpiricalStats, Instance, Observation, Snapshot, NO_BUY};

/// Number of utilities boosted by the intensity factor in every segment.
pub const BOOSTED_PER_SEGMENT: usize = 4;

/// Default size of the first observation batch in a stream.
pub const DEFAULT_INITIAL_OBSERVATIONS: usize = 2000;

pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A finite mixture of MNL models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedMnl {
    /// Mixing weights, one per segment.
    pub weights: Vec<f64>,
    /// `utilities[i][k]`: utility of option `i` (0 = no choice) in segment `k`.
    pub utilities: Vec<Vec<f64>>,
}

impl MixedMnl {
    pub fn new(weights: Vec<f64>, utilities: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || utilities.len() < 2 {
            return Err(Error::Config("need at least one segment and one product".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config("mixing weights must lie on the simplex".into()));
        }
        if utilities.iter().any(|row| row.len() != k || row.iter().any(|&u| !(u > 0.0) || !u.is_finite())) {
            return Err(Error::Config("utilities must be positive with one entry per segment".into()));
        }
        Ok(Self { weights, utilities })
    }

    /// Number of products, excluding the no-choice option.
    pub fn n_products(&self) -> usize {
        self.utilities.len() - 1
    }

    /// Item count of instances over this model's products.
    pub fn n_items(&self) -> usize {
        self.utilities.len()
    }

    pub fn segments(&self) -> usize {
        self.weights.len()
    }
}

/// Draws a mixed MNL over `n_products` products with `segments` components
/// and intensity `intensity`.
///
/// In every segment, four options (no-choice included) get utility
/// `intensity * q` and the rest `q / 10`, with `q ~ U(0, 1)`. The mixing
/// weights are uniform on the simplex.
pub fn gen_mmnl(n_products: usize, segments: usize, intensity: f64, seed: u64) -> Result<MixedMnl> {
    if n_products < 1 || n_products + 1 < BOOSTED_PER_SEGMENT {
        return Err(Error::Config(format!(
            "need at least {} options to boost, got {}",
            BOOSTED_PER_SEGMENT,
            n_products + 1
        )));
    }
    if segments < 1 {
        return Err(Error::Config("need at least one segment".into()));
    }
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::Config(format!("intensity {intensity} must be positive")));
    }
    let mut rng = rng_from_seed(seed);
    let options = n_products + 1;
    let mut utilities = vec![vec![0.0; segments]; options];
    for k in 0..segments {
        let q: Vec<f64> = (0..options).map(|_| rng.sample(Open01)).collect();
        let boosted = sample(&mut rng, options, BOOSTED_PER_SEGMENT);
        for i in 0..options {
            utilities[i][k] = q[i] / 10.0;
        }
        for i in boosted.iter() {
            utilities[i][k] = intensity * q[i];
        }
    }
    let raw: Vec<f64> = (0..segments).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();
    Ok(MixedMnl { weights, utilities })
}

/// Choice probabilities over `assortment ∪ {no-buy}` (internal item labels),
/// ordered by ascending item.
pub fn mmnl_probs(model: &MixedMnl, assortment: &[usize]) -> Result<Vec<f64>> {
    let mut items = assortment.to_vec();
    if let Some(&bad) = items.iter().find(|&&i| i == 0 || i > model.n_items()) {
        return Err(Error::InvalidInstance(format!("unknown item {bad}")));
    }
    items.push(NO_BUY);
    items.sort_unstable();
    items.dedup();

    let mut probs = vec![0.0; items.len()];
    for (k, &w) in model.weights.iter().enumerate() {
        let denom: f64 = items.iter().map(|&i| model.utilities[i - 1][k]).sum();
        for (p, &i) in probs.iter_mut().zip(&items) {
            *p += w * model.utilities[i - 1][k] / denom;
        }
    }
    Ok(probs)
}

/// Largest number of distinct product subsets of size `1..=n/2`.
pub fn max_assortments(n_products: usize) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for s in 1..=n_products / 2 {
        binom = binom * (n_products - s + 1) as u128 / s as u128;
        total += binom;
    }
    total
}

/// Draws `count` distinct assortments (internal labels, no-buy included).
///
/// Each draw picks a size uniformly from `1..=n/2`, then that many products
/// uniformly without replacement; repeats are redrawn.
pub fn sample_assortments(n_products: usize, count: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if count < 1 {
        return Err(Error::Config("need at least one assortment".into()));
    }
    let available = max_assortments(n_products);
    if count as u128 > available {
        return Err(Error::Config(format!(
            "{count} assortments requested but only {available} distinct ones exist"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let size = rng.random_range(1..=n_products / 2);
        let mut set: Vec<usize> = sample(&mut rng, n_products, size)
            .iter()
            .map(|i| i + 2)
            .collect();
        set.push(NO_BUY);
        set.sort_unstable();
        if seen.insert(set.clone()) {
            out.push(set);
        }
    }
    Ok(out)
}

/// Exact choice probabilities of `model` on every assortment of `inst`.
pub fn exact_choice_vector(model: &MixedMnl, inst: &Instance) -> Result<ChoiceVector> {
    if inst.n() != model.n_items() {
        return Err(Error::InvalidInstance(format!(
            "instance has {} items, model has {}",
            inst.n(),
            model.n_items()
        )));
    }
    let mut out = Vec::with_capacity(inst.dim());
    for set in inst.assortments() {
        out.extend(mmnl_probs(model, set)?);
    }
    Ok(ChoiceVector::from_vec(out))
}

/// One simulated consumer: a uniformly displayed assortment and the choice
/// made from it.
pub fn draw_observation(model: &MixedMnl, inst: &Instance, rng: &mut impl Rng) -> Result<Observation> {
    let j = rng.random_range(0..inst.m());
    let set = inst.assortment(j);
    let probs = mmnl_probs(model, set)?;
    Ok(Observation {
        item: set[pick(&probs, rng)],
        assortment: j,
    })
}

fn pick(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Batch size between consecutive snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    Finite(usize),
    /// Exact probabilities at every iteration.
    Exact,
}

impl std::str::FromStr for Batch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "exact" | "∞" => Ok(Batch::Exact),
            other => match other.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Batch::Finite(k)),
                _ => Err(Error::Config(format!("bad batch size '{s}'"))),
            },
        }
    }
}

impl std::fmt::Display for Batch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Batch::Finite(k) => write!(f, "{k}"),
            Batch::Exact => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    pub initial_observations: usize,
    pub batch: Batch,
    pub seed: u64,
}

impl StreamConfig {
    pub fn new(batch: Batch, seed: u64) -> Self {
        Self {
            initial_observations: DEFAULT_INITIAL_OBSERVATIONS,
            batch,
            seed,
        }
    }
}

/// Simulated observation stream; one snapshot per solver iteration.
pub struct StreamSource {
    model: MixedMnl,
    inst: Instance,
    cfg: StreamConfig,
    rng: Rng64,
    stats: EmpiricalStats,
    log: Vec<Observation>,
    exact: Option<ChoiceVector>,
    snapshots: usize,
}

pub fn make_data_source(model: &MixedMnl, inst: &Instance, cfg: StreamConfig) -> Result<StreamSource> {
    let exact = match cfg.batch {
        Batch::Exact => Some(exact_choice_vector(model, inst)?),
        Batch::Finite(0) => return Err(Error::Config("batch size must be at least 1".into())),
        Batch::Finite(_) => {
            if inst.n() != model.n_items() {
                return Err(Error::InvalidInstance("instance and model item counts differ".into()));
            }
            None
        }
    };
    Ok(StreamSource {
        model: model.clone(),
        inst: inst.clone(),
        cfg,
        rng: rng_from_seed(cfg.seed),
        stats: EmpiricalStats::new(inst),
        log: Vec::new(),
        exact,
        snapshots: 0,
    })
}

impl StreamSource {
    fn draw(&mut self, count: usize) {
        for _ in 0..count {
            let o = draw_observation(&self.model, &self.inst, &mut self.rng).expect("model matches instance");
            let pair = self.inst.pair_index(o.assortment, o.item).unwrap();
            self.stats.record_pair(o.assortment, pair);
            self.log.push(o);
        }
    }

    pub fn stats(&self) -> &EmpiricalStats {
        &self.stats
    }

    /// Every observation drawn so far, in order.
    pub fn log(&self) -> &[Observation] {
        &self.log
    }
}

impl DataSource for StreamSource {
    fn next_snapshot(&mut self) -> Option<Snapshot> {
        self.snapshots += 1;
        if let Some(p) = &self.exact {
            return Some(Snapshot::exact(p.clone(), self.inst.m()));
        }
        let count = match (self.snapshots, self.cfg.batch) {
            (1, _) => self.cfg.initial_observations,
            (_, Batch::Finite(k)) => k,
            (_, Batch::Exact) => unreachable!(),
        };
        self.draw(count);
        Some(self.stats.empirical_probs(&self.inst))
    }

    fn observations_used(&self) -> Option<u64> {
        self.exact.is_none().then(|| self.stats.total())
    }
}
