//! Experiment harness: generated instances on disk, fits, held-out
//! evaluation and grid sweeps.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataSource, StaticSource};
use crate::distance::Distance;
use crate::dual::{dual_run, DualConfig};
use crate::error::{Error, Result};
use crate::fit::{FitResult, DEFAULT_STOP_MAE};
use crate::fw::{fw_run, FwConfig};
use crate::io;
use crate::model::{mae, ChoiceVector, Instance, Ranking, SparseModel};
use crate::sim::{self, Batch, MixedMnl, StreamConfig};

pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Fw,
    Dual,
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fw" => Ok(Algo::Fw),
            "dual" => Ok(Algo::Dual),
            _ => Err(Error::Config(format!("unknown algorithm '{s}' (expected fw or dual)"))),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Fw => "fw",
            Algo::Dual => "dual",
        })
    }
}

/// Experiment grid and generation parameters. Every field has a default,
/// so a JSON config file only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Products, excluding the no-choice option.
    pub n: usize,
    pub k_mix: usize,
    /// Intensity `L` of the boosted utilities.
    pub intensity: f64,
    pub m_train: usize,
    pub m_test: usize,
    pub n_instances: usize,
    pub algo: Algo,
    pub distances: Vec<String>,
    pub max_iter: usize,
    pub stop_train_mae: Option<f64>,
    /// Training prefixes swept; empty means `[m_train]`.
    pub train_m: Vec<usize>,
    /// Batch sizes (`"inf"` for exact data); empty means a static fit.
    pub kappas: Vec<String>,
    pub initial_observations: usize,
    pub seed: u64,
    /// Worker threads for sweeps; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10,
            k_mix: 5,
            intensity: 5.0,
            m_train: 20,
            m_test: 100,
            n_instances: 10,
            algo: Algo::Dual,
            distances: vec!["l2".into()],
            max_iter: DEFAULT_MAX_ITER,
            stop_train_mae: Some(DEFAULT_STOP_MAE),
            train_m: Vec::new(),
            kappas: Vec::new(),
            initial_observations: sim::DEFAULT_INITIAL_OBSERVATIONS,
            seed: 0,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_instances < 1 {
            return Err(Error::Config("n_instances must be at least 1".into()));
        }
        if self.m_train < 1 || self.m_test < 1 {
            return Err(Error::Config("need at least one training and one test assortment".into()));
        }
        let available = sim::max_assortments(self.n);
        if (self.m_train + self.m_test) as u128 > available {
            return Err(Error::Config(format!(
                "m_train + m_test = {} exceeds the {available} distinct assortments over {} products",
                self.m_train + self.m_test,
                self.n
            )));
        }
        if let Some(&m) = self.train_m.iter().find(|&&m| m < 1 || m > self.m_train) {
            return Err(Error::Config(format!("train_m {m} outside 1..={}", self.m_train)));
        }
        for d in self.distance_grid()? {
            self.fit_spec(d)?;
        }
        self.kappa_grid()?;
        Ok(())
    }

    pub fn distance_grid(&self) -> Result<Vec<Distance>> {
        if self.distances.is_empty() {
            return Err(Error::Config("no distance given".into()));
        }
        self.distances.iter().map(|d| d.parse()).collect()
    }

    /// Batch sizes swept; `None` stands for a static fit.
    pub fn kappa_grid(&self) -> Result<Vec<Option<Batch>>> {
        if self.kappas.is_empty() {
            return Ok(vec![None]);
        }
        self.kappas.iter().map(|k| k.parse().map(Some)).collect()
    }

    pub fn train_m_grid(&self) -> Vec<usize> {
        if self.train_m.is_empty() {
            vec![self.m_train]
        } else {
            self.train_m.clone()
        }
    }

    pub fn fit_spec(&self, distance: Distance) -> Result<FitSpec> {
        let spec = FitSpec {
            algo: self.algo,
            distance,
            max_iter: self.max_iter,
            stop_train_mae: self.stop_train_mae,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Deterministic child seed for `(master, instance, purpose)`.
pub fn derive_seed(master: u64, instance: u64, purpose: u64) -> u64 {
    let mut z = master
        .wrapping_add(instance.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(purpose.wrapping_mul(0xD1B5_4A32_D192_ED03));
    for _ in 0..2 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const SEED_TRUTH: u64 = 0;
const SEED_ASSORTMENTS: u64 = 1;
const SEED_STREAM: u64 = 2;
const SEED_PROBE: u64 = 3;

/// One generated problem: ground truth, train/test instances and their
/// exact choice vectors.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub index: usize,
    pub truth: MixedMnl,
    pub train: Instance,
    pub test: Instance,
    pub p_train: ChoiceVector,
    pub p_test: ChoiceVector,
    /// Seed of the observation stream used by dynamic fits.
    pub stream_seed: u64,
}

impl GeneratedInstance {
    pub fn generate(cfg: &ExperimentConfig, index: usize) -> Result<Self> {
        let i = index as u64;
        let truth = sim::gen_mmnl(cfg.n, cfg.k_mix, cfg.intensity, derive_seed(cfg.seed, i, SEED_TRUTH))?;
        let sets = sim::sample_assortments(cfg.n, cfg.m_train + cfg.m_test, derive_seed(cfg.seed, i, SEED_ASSORTMENTS))?;
        let (train_sets, test_sets) = sets.split_at(cfg.m_train);
        let train = Instance::new(cfg.n + 1, train_sets.to_vec())?;
        let test = Instance::new(cfg.n + 1, test_sets.to_vec())?;
        let p_train = sim::exact_choice_vector(&truth, &train)?;
        let p_test = sim::exact_choice_vector(&truth, &test)?;
        Ok(Self {
            index,
            truth,
            train,
            test,
            p_train,
            p_test,
            stream_seed: derive_seed(cfg.seed, i, SEED_STREAM),
        })
    }

    /// The first `m` training assortments with their exact vector.
    pub fn train_prefix(&self, m: usize) -> Result<(Instance, ChoiceVector)> {
        if m < 1 || m > self.train.m() {
            return Err(Error::Config(format!("training prefix {m} outside 1..={}", self.train.m())));
        }
        if m == self.train.m() {
            return Ok((self.train.clone(), self.p_train.clone()));
        }
        let inst = Instance::new(self.train.n(), self.train.assortments()[..m].to_vec())?;
        let end = self.train.block(m - 1).end;
        Ok((inst, ChoiceVector::from_vec(self.p_train.as_slice()[..end].to_vec())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        io::write_ground_truth(&dir.join(files::TRUTH), &self.truth)?;
        io::write_instance(&dir.join(files::TRAIN), &self.train)?;
        io::write_instance(&dir.join(files::TEST), &self.test)?;
        io::write_choice_vector(&dir.join(files::P_TRAIN), &self.train, &self.p_train)?;
        io::write_choice_vector(&dir.join(files::P_TEST), &self.test, &self.p_test)?;
        io::write_json(&dir.join(files::META), &Meta { index: self.index, stream_seed: self.stream_seed })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: Meta = io::read_json(&dir.join(files::META))?;
        let train = io::read_instance(&dir.join(files::TRAIN))?;
        let test = io::read_instance(&dir.join(files::TEST))?;
        Ok(Self {
            index: meta.index,
            truth: io::read_ground_truth(&dir.join(files::TRUTH))?,
            p_train: io::read_choice_vector(&dir.join(files::P_TRAIN), &train)?,
            p_test: io::read_choice_vector(&dir.join(files::P_TEST), &test)?,
            train,
            test,
            stream_seed: meta.stream_seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    index: usize,
    stream_seed: u64,
}

/// File names inside an instance directory.
pub mod files {
    pub const TRUTH: &str = "ground_truth.json";
    pub const TRAIN: &str = "train_instance.json";
    pub const TEST: &str = "test_instance.json";
    pub const P_TRAIN: &str = "p_train.csv";
    pub const P_TEST: &str = "p_test.csv";
    pub const META: &str = "meta.json";
    pub const MODEL: &str = "model.json";
    pub const TRACE: &str = "trace.csv";
    pub const SUMMARY: &str = "summary.csv";
    pub const OBSERVATIONS: &str = "observations.csv";
}

pub fn instance_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("instance_{index:03}"))
}

/// Writes `n_instances` instance directories under `out`.
pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    (0..cfg.n_instances)
        .map(|i| {
            let dir = instance_dir(out, i);
            GeneratedInstance::generate(cfg, i)?.save(&dir)?;
            Ok(dir)
        })
        .collect()
}

/// Solver choice for a single fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub algo: Algo,
    pub distance: Distance,
    pub max_iter: usize,
    pub stop_train_mae: Option<f64>,
}

impl FitSpec {
    pub fn validate(&self) -> Result<()> {
        match self.algo {
            Algo::Fw => self.fw_config().validate(),
            Algo::Dual => self.dual_config().validate(),
        }
    }

    fn fw_config(&self) -> FwConfig {
        let mut c = FwConfig::new(self.distance.clone(), self.max_iter);
        c.stop_train_mae = self.stop_train_mae;
        c
    }

    fn dual_config(&self) -> DualConfig {
        let mut c = DualConfig::new(self.distance.clone(), self.max_iter);
        c.stop_train_mae = self.stop_train_mae;
        c
    }

    pub fn run<S: DataSource + ?Sized>(&self, inst: &Instance, source: &mut S) -> Result<FitOutcome> {
        let start = Instant::now();
        let (fit, certificate, regret_bound) = match self.algo {
            Algo::Fw => (fw_run(inst, &self.fw_config(), source)?, None, None),
            Algo::Dual => {
                let (fit, report) = dual_run(inst, &self.dual_config(), source)?;
                let bound = report.regret_bound();
                (fit, Some(report.certificate), Some(bound))
            }
        };
        Ok(FitOutcome {
            fit,
            certificate,
            regret_bound,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub fit: FitResult,
    /// Final regret certificate of a dual run.
    pub certificate: Option<f64>,
    /// `G sqrt(2 omega / T)` for the run's horizon.
    pub regret_bound: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub algo: Algo,
    pub distance: String,
    pub train_m: usize,
    pub kappa: String,
    pub iterations: usize,
    pub sparsity: usize,
    pub train_mae: f64,
    pub stopped_by_rule: bool,
    pub observations: Option<u64>,
    pub certificate: Option<f64>,
    pub regret_bound: Option<f64>,
    pub wall_time_s: f64,
}

impl FitSummary {
    fn new(spec: &FitSpec, train_m: usize, kappa: Option<Batch>, out: &FitOutcome) -> Self {
        Self {
            algo: spec.algo,
            distance: spec.distance.name().into(),
            train_m,
            kappa: kappa_label(kappa),
            iterations: out.fit.iterations_used,
            sparsity: out.fit.sparsity(),
            train_mae: out.fit.train_mae,
            stopped_by_rule: out.fit.stopped_by_rule,
            observations: out.fit.observations_used,
            certificate: out.certificate,
            regret_bound: out.regret_bound,
            wall_time_s: out.wall_time,
        }
    }
}

fn kappa_label(kappa: Option<Batch>) -> String {
    kappa.map_or_else(|| "static".into(), |b| b.to_string())
}

fn stream_source(inst: &GeneratedInstance, train: &Instance, batch: Batch, initial: usize) -> Result<sim::StreamSource> {
    let mut cfg = StreamConfig::new(batch, inst.stream_seed);
    cfg.initial_observations = initial;
    sim::make_data_source(&inst.truth, train, cfg)
}

/// Fits on the exact training vector, optionally restricted to the first
/// `train_m` assortments.
pub fn fit_static(inst: &GeneratedInstance, spec: &FitSpec, train_m: Option<usize>) -> Result<(FitOutcome, FitSummary)> {
    let m = train_m.unwrap_or(inst.train.m());
    let (train, p) = inst.train_prefix(m)?;
    let out = spec.run(&train, &mut StaticSource::exact(&train, p))?;
    let summary = FitSummary::new(spec, m, None, &out);
    Ok((out, summary))
}

/// Fits on a simulated observation stream with batch size `batch`. Also
/// returns the observation log for sampled streams.
pub fn fit_dynamic(
    inst: &GeneratedInstance,
    spec: &FitSpec,
    batch: Batch,
    initial: usize,
    train_m: Option<usize>,
) -> Result<(FitOutcome, FitSummary, Vec<crate::model::Observation>)> {
    let m = train_m.unwrap_or(inst.train.m());
    let (train, _) = inst.train_prefix(m)?;
    let mut source = stream_source(inst, &train, batch, initial)?;
    let out = spec.run(&train, &mut source)?;
    let summary = FitSummary::new(spec, m, Some(batch), &out);
    Ok((out, summary, source.log().to_vec()))
}

/// Writes the model, trace and one-row summary of a fit into `dir`.
pub fn save_fit(dir: &Path, spec: &FitSpec, out: &FitOutcome, summary: &FitSummary) -> Result<()> {
    io::write_model(&dir.join(files::MODEL), &out.fit.model)?;
    match spec.algo {
        Algo::Fw => io::write_fw_trace(&dir.join(files::TRACE), &out.fit.trace)?,
        Algo::Dual => io::write_dual_trace(&dir.join(files::TRACE), &out.fit.trace)?,
    }
    io::write_rows(&dir.join(files::SUMMARY), std::slice::from_ref(summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    #[serde(rename = "MAE_test")]
    pub mae_test: f64,
    pub num_rankings: usize,
}

/// Test-set MAE of `model` against the exact test vector.
pub fn evaluate(inst: &GeneratedInstance, model: &SparseModel) -> Result<EvalRow> {
    if model.n() != inst.test.n() {
        return Err(Error::InvalidModel(format!(
            "model ranks {} items but the instance has {}",
            model.n(),
            inst.test.n()
        )));
    }
    let pred = inst.test.predict(model)?;
    Ok(EvalRow {
        mae_test: mae(&inst.p_test, &pred)?,
        num_rankings: model.sparsity(),
    })
}

/// One fit plus evaluation inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub train_m: usize,
    pub kappa: String,
    pub labels: String,
    pub instance: usize,
    #[serde(rename = "MAE_test")]
    pub mae_test: f64,
    pub num_rankings: usize,
    pub iterations: usize,
    pub train_mae: f64,
    pub stopped_by_rule: bool,
    pub observations: Option<u64>,
    pub certificate: Option<f64>,
    pub regret_bound: Option<f64>,
    /// Largest `certificate(t) - bound(t)` over the trace of a dual run,
    /// with the bound for `t` steps at the run's step size.
    pub worst_running_gap: Option<f64>,
}

/// Per-cell means over instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub train_m: usize,
    pub kappa: String,
    pub labels: String,
    #[serde(rename = "MAE_test")]
    pub mae_test: f64,
    pub num_rankings: f64,
    pub iterations: f64,
    pub train_mae: f64,
    pub instances: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellRow>,
}

fn run_cell(cfg: &ExperimentConfig, inst: &GeneratedInstance, m: usize, distance: &Distance, kappa: Option<Batch>) -> Result<RunRecord> {
    let spec = cfg.fit_spec(distance.clone())?;
    let (out, summary) = match kappa {
        None => fit_static(inst, &spec, Some(m))?,
        Some(b) => {
            let (o, s, _) = fit_dynamic(inst, &spec, b, cfg.initial_observations, Some(m))?;
            (o, s)
        }
    };
    let eval = evaluate(inst, &out.fit.model)?;
    let worst_running_gap = match spec.algo {
        Algo::Fw => None,
        Algo::Dual => {
            let (train, _) = inst.train_prefix(m)?;
            let c = spec.dual_config().constants(&train)?;
            out.fit
                .trace
                .iter()
                .map(|r| r.certificate.unwrap() - c.regret_bound_at(r.t))
                .reduce(f64::max)
        }
    };
    Ok(RunRecord {
        train_m: m,
        kappa: summary.kappa,
        labels: distance.name().into(),
        instance: inst.index,
        mae_test: eval.mae_test,
        num_rankings: eval.num_rankings,
        iterations: summary.iterations,
        train_mae: summary.train_mae,
        stopped_by_rule: summary.stopped_by_rule,
        observations: summary.observations,
        certificate: summary.certificate,
        regret_bound: summary.regret_bound,
        worst_running_gap,
    })
}

/// Runs generate, fit and evaluate over the grid `train_m x distances x
/// kappas x instances`. Runs execute in parallel; results are ordered by
/// cell key and instance.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let distances = cfg.distance_grid()?;
    let kappas = cfg.kappa_grid()?;
    let ms = cfg.train_m_grid();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    pool.install(|| {
        let instances: Vec<GeneratedInstance> = (0..cfg.n_instances)
            .into_par_iter()
            .map(|i| GeneratedInstance::generate(cfg, i))
            .collect::<Result<_>>()?;

        let mut jobs = Vec::new();
        for (mi, &m) in ms.iter().enumerate() {
            for (di, d) in distances.iter().enumerate() {
                for (ki, &k) in kappas.iter().enumerate() {
                    for inst in &instances {
                        jobs.push(((mi, di, ki), m, d, k, inst));
                    }
                }
            }
        }
        let mut runs: Vec<((usize, usize, usize), RunRecord)> = jobs
            .into_par_iter()
            .map(|(key, m, d, k, inst)| Ok((key, run_cell(cfg, inst, m, d, k)?)))
            .collect::<Result<_>>()?;
        runs.sort_by_key(|(key, r)| (*key, r.instance));

        let mut cells = Vec::new();
        for chunk in runs.chunk_by(|a, b| a.0 == b.0) {
            let k = chunk.len() as f64;
            let first = &chunk[0].1;
            let mean = |f: fn(&RunRecord) -> f64| chunk.iter().map(|(_, r)| f(r)).sum::<f64>() / k;
            cells.push(CellRow {
                train_m: first.train_m,
                kappa: first.kappa.clone(),
                labels: first.labels.clone(),
                mae_test: mean(|r| r.mae_test),
                num_rankings: mean(|r| r.num_rankings as f64),
                iterations: mean(|r| r.iterations as f64),
                train_mae: mean(|r| r.train_mae),
                instances: chunk.len(),
            });
        }
        Ok(SweepResult {
            runs: runs.into_iter().map(|(_, r)| r).collect(),
            cells,
        })
    })
}

/// Default probe steps `10^-1 .. 10^-4`.
pub const DEFAULT_ALPHAS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Curvature ratios at `x = p_train` towards a random vertex.
pub fn probe(inst: &GeneratedInstance, distance: &Distance, alphas: &[f64], seed: u64) -> Result<Vec<f64>> {
    let mut rng = sim::rng_from_seed(derive_seed(seed, inst.index as u64, SEED_PROBE));
    let mut order: Vec<usize> = (1..=inst.train.n()).collect();
    order.shuffle(&mut rng);
    let s = inst.train.vertex(&Ranking::new(order)?)?;
    let mask = vec![true; inst.train.m()];
    distance.curvature_probe(&inst.train, &inst.p_train, &s, &mask, alphas, None)
}
