//! Flat-file formats: JSON for instances and models, CSV for vectors,
//! observations, costs and traces. Assortment ids in files are 1-based.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::TraceRow;
use crate::model::{ChoiceVector, Instance, Observation, Ranking, SparseModel};
use crate::sim::MixedMnl;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::parse(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::parse(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    r.deserialize()
        .map(|row| row.map_err(|e| Error::parse(path, e)))
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    assortments: Vec<Vec<usize>>,
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    let f: InstanceFile = read_json(path)?;
    Instance::new(f.n, f.assortments)
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<()> {
    write_json(
        path,
        &InstanceFile {
            n: inst.n(),
            assortments: inst.assortments().to_vec(),
        },
    )
}

#[derive(Serialize, Deserialize)]
struct ObservationRow {
    item: usize,
    assortment_id: usize,
}

/// Reads an observation log; rows are checked against `inst`.
pub fn read_observations(path: &Path, inst: &Instance) -> Result<Vec<Observation>> {
    read_csv::<ObservationRow>(path)?
        .into_iter()
        .map(|r| {
            let j = r
                .assortment_id
                .checked_sub(1)
                .filter(|&j| j < inst.m())
                .ok_or_else(|| Error::parse(path, format!("assortment id {} out of range", r.assortment_id)))?;
            if inst.pair_index(j, r.item).is_none() {
                return Err(Error::InvalidObservation {
                    item: r.item,
                    assortment: r.assortment_id,
                });
            }
            Ok(Observation { item: r.item, assortment: j })
        })
        .collect()
}

pub fn write_observations(path: &Path, obs: &[Observation]) -> Result<()> {
    write_csv(
        path,
        obs.iter().map(|o| ObservationRow {
            item: o.item,
            assortment_id: o.assortment + 1,
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct ProbRow {
    assortment_id: usize,
    item: usize,
    prob: f64,
}

#[derive(Serialize, Deserialize)]
struct CostRow {
    assortment_id: usize,
    item: usize,
    cost: f64,
}

/// Places `(assortment_id, item, value)` rows into pair order.
fn pair_values(path: &Path, inst: &Instance, rows: impl Iterator<Item = (usize, usize, f64)>) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut values = vec![0.0; inst.dim()];
    let mut seen = vec![false; inst.dim()];
    for (id, item, v) in rows {
        let k = id
            .checked_sub(1)
            .filter(|&j| j < inst.m())
            .and_then(|j| inst.pair_index(j, item))
            .ok_or_else(|| Error::parse(path, format!("({id}, {item}) is not a pair of the instance")))?;
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::parse(path, format!("pair ({id}, {item}) listed twice")));
        }
        values[k] = v;
    }
    Ok((values, seen))
}

/// Reads a choice vector; every pair of `inst` must be present.
pub fn read_choice_vector(path: &Path, inst: &Instance) -> Result<ChoiceVector> {
    let rows = read_csv::<ProbRow>(path)?;
    let (values, seen) = pair_values(path, inst, rows.into_iter().map(|r| (r.assortment_id, r.item, r.prob)))?;
    if let Some(k) = seen.iter().position(|s| !s) {
        let (j, i) = inst.pairs().nth(k).unwrap();
        return Err(Error::parse(path, format!("missing pair ({}, {i})", j + 1)));
    }
    if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::parse(path, "probabilities must lie in [0, 1]"));
    }
    Ok(ChoiceVector::from_vec(values))
}

pub fn write_choice_vector(path: &Path, inst: &Instance, p: &ChoiceVector) -> Result<()> {
    inst.check_len(p.len())?;
    write_csv(
        path,
        inst.pairs().zip(p.as_slice()).map(|((j, item), &prob)| ProbRow {
            assortment_id: j + 1,
            item,
            prob,
        }),
    )
}

/// Reads an oracle cost vector; pairs not listed cost zero.
pub fn read_costs(path: &Path, inst: &Instance) -> Result<Vec<f64>> {
    let rows = read_csv::<CostRow>(path)?;
    Ok(pair_values(path, inst, rows.into_iter().map(|r| (r.assortment_id, r.item, r.cost)))?.0)
}

pub fn write_costs(path: &Path, inst: &Instance, c: &[f64]) -> Result<()> {
    inst.check_len(c.len())?;
    write_csv(
        path,
        inst.pairs().zip(c).map(|((j, item), &cost)| CostRow {
            assortment_id: j + 1,
            item,
            cost,
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct RankingWeight {
    ranking: Vec<usize>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    support: Vec<RankingWeight>,
}

pub fn read_model(path: &Path) -> Result<SparseModel> {
    let f: ModelFile = read_json(path)?;
    let support = f
        .support
        .into_iter()
        .map(|rw| {
            if rw.ranking.len() != f.n {
                return Err(Error::InvalidModel(format!("ranking of length {} in a model over {} items", rw.ranking.len(), f.n)));
            }
            Ok((Ranking::new(rw.ranking)?, rw.weight))
        })
        .collect::<Result<Vec<_>>>()?;
    SparseModel::new(support)
}

pub fn write_model(path: &Path, model: &SparseModel) -> Result<()> {
    write_json(
        path,
        &ModelFile {
            n: model.n(),
            support: model
                .support()
                .map(|(r, w)| RankingWeight {
                    ranking: r.order().to_vec(),
                    weight: w,
                })
                .collect(),
        },
    )
}

pub fn read_ground_truth(path: &Path) -> Result<MixedMnl> {
    let m: MixedMnl = read_json(path)?;
    MixedMnl::new(m.weights, m.utilities)
}

pub fn write_ground_truth(path: &Path, model: &MixedMnl) -> Result<()> {
    write_json(path, model)
}

#[derive(Serialize)]
struct FwTraceRow {
    t: usize,
    objective: f64,
    sparsity: usize,
}

#[derive(Serialize)]
struct DualTraceRow {
    t: usize,
    train_mae: f64,
    certificate_running: f64,
    sparsity: usize,
}

/// Writes `t,objective,sparsity`.
pub fn write_fw_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    write_csv(
        path,
        trace.iter().map(|r| FwTraceRow {
            t: r.t,
            objective: r.objective,
            sparsity: r.sparsity,
        }),
    )
}

/// Writes `t,train_mae,certificate_running,sparsity`.
pub fn write_dual_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    write_csv(
        path,
        trace.iter().map(|r| DualTraceRow {
            t: r.t,
            train_mae: r.train_mae,
            certificate_running: r.certificate.unwrap_or(f64::NAN),
            sparsity: r.sparsity,
        }),
    )
}

#[derive(Serialize)]
struct ProbeRow {
    alpha: f64,
    ratio: f64,
}

pub fn write_probe(path: &Path, alphas: &[f64], ratios: &[f64]) -> Result<()> {
    write_csv(
        path,
        alphas.iter().zip(ratios).map(|(&alpha, &ratio)| ProbeRow { alpha, ratio }),
    )
}

/// Writes arbitrary serializable rows as CSV with a header.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv(path, rows)
}

/// Appends rows to a CSV, writing the header only when the file is new.
pub fn append_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let fresh = !path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
