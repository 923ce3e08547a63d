//! Exact linear minimization over the rankings polytope.
//!
//! Given a cost per (assortment, item) pair, find the ranking whose vertex
//! has the smallest total cost. Among optimal rankings the lexicographically
//! smallest preference order is returned, so every solver here agrees
//! exactly on its output.
//!
//! Objective values are always accumulated as `sum_j c[top_j]` in assortment
//! order. Both solvers compare values computed this way, which keeps their
//! tie-breaking identical in floating point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Instance, Ranking};

/// Default item-count limit for [`solve_enum`].
pub const ENUM_LIMIT: usize = 10;

/// An optimal ranking with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub ranking: Ranking,
    pub value: f64,
    pub nodes_explored: u64,
}

/// `<vertex(ranking), c>`, summed over assortments in order.
pub fn ranking_value(inst: &Instance, ranking: &Ranking, c: &[f64]) -> Result<f64> {
    inst.check_ranking(ranking)?;
    inst.check_len(c.len())?;
    Ok(value_of_positions(inst, &ranking.positions(), c))
}

fn value_of_positions(inst: &Instance, pos: &[usize], c: &[f64]) -> f64 {
    let mut total = 0.0;
    inst.mark_vertex(pos, |pair| total += c[pair]);
    total
}

fn check_costs(inst: &Instance, c: &[f64]) -> Result<()> {
    inst.check_len(c.len())?;
    if let Some(k) = c.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("cost {k} is not finite")));
    }
    Ok(())
}

/// Exhaustive search over all `n!` rankings in lexicographic order.
pub fn solve_enum(inst: &Instance, c: &[f64]) -> Result<OracleResult> {
    solve_enum_with_limit(inst, c, ENUM_LIMIT)
}

pub fn solve_enum_with_limit(inst: &Instance, c: &[f64], limit: usize) -> Result<OracleResult> {
    check_costs(inst, c)?;
    let n = inst.n();
    if n > limit {
        return Err(Error::EnumerationGuard { n, limit });
    }
    let mut order: Vec<usize> = (1..=n).collect();
    let mut pos: Vec<usize> = (0..n).collect();
    let mut best_value = value_of_positions(inst, &pos, c);
    let mut best = order.clone();
    let mut count = 1u64;
    while next_permutation(&mut order) {
        count += 1;
        for (k, &i) in order.iter().enumerate() {
            pos[i - 1] = k;
        }
        let v = value_of_positions(inst, &pos, c);
        // strict: the earliest optimum in lexicographic order wins
        if v < best_value {
            best_value = v;
            best.copy_from_slice(&order);
        }
    }
    Ok(OracleResult {
        ranking: Ranking::from_order_unchecked(best),
        value: best_value,
        nodes_explored: count,
    })
}

fn next_permutation(a: &mut [usize]) -> bool {
    let Some(i) = a.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = a.iter().rposition(|&x| x > a[i]).unwrap();
    a.swap(i, j);
    a[i + 1..].reverse();
    true
}

/// Depth-first branch-and-bound over preference-order prefixes.
///
/// A node fixes the top items of the ranking. An assortment's contribution is
/// fixed once its first member enters the prefix; every other assortment is
/// bounded below by its cheapest member. Items whose assortments are all
/// fixed no longer affect the objective, so only the smallest such item is
/// branched on.
pub fn solve_bnb(inst: &Instance, c: &[f64]) -> Result<OracleResult> {
    check_costs(inst, c)?;
    let mut search = Search::new(inst, c);
    search.run();
    let Search {
        best_order,
        best_value,
        nodes,
        ..
    } = search;
    Ok(OracleResult {
        ranking: Ranking::from_order_unchecked(best_order),
        value: best_value,
        nodes_explored: nodes,
    })
}

/// The branch-and-bound lower bound at the node fixing `prefix`.
///
/// Exposed so the bound can be checked against enumeration of completions.
pub fn prefix_lower_bound(inst: &Instance, c: &[f64], prefix: &[usize]) -> Result<f64> {
    check_costs(inst, c)?;
    let mut search = Search::new(inst, c);
    for &item in prefix {
        if item == 0 || item > inst.n() || search.placed[item - 1] {
            return Err(Error::InvalidRanking(format!("bad prefix {prefix:?}")));
        }
        search.place(item);
    }
    Ok(search.bound())
}

struct Search<'a> {
    inst: &'a Instance,
    c: &'a [f64],
    min_cost: Vec<f64>,
    fixed: Vec<Option<f64>>,
    open: usize,
    // number of still-open assortments containing each item
    open_count: Vec<usize>,
    placed: Vec<bool>,
    prefix: Vec<usize>,
    best_order: Vec<usize>,
    best_value: f64,
    nodes: u64,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, c: &'a [f64]) -> Self {
        let n = inst.n();
        let min_cost = (0..inst.m())
            .map(|j| c[inst.block(j)].iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let open_count = (1..=n).map(|i| inst.slots_of(i).len()).collect();
        let identity: Vec<usize> = (0..n).collect();
        Self {
            inst,
            c,
            min_cost,
            fixed: vec![None; inst.m()],
            open: inst.m(),
            open_count,
            placed: vec![false; n],
            prefix: Vec::with_capacity(n),
            best_order: (1..=n).collect(),
            best_value: value_of_positions(inst, &identity, c),
            nodes: 0,
        }
    }

    fn bound(&self) -> f64 {
        let mut total = 0.0;
        for (f, m) in self.fixed.iter().zip(&self.min_cost) {
            total += f.unwrap_or(*m);
        }
        total
    }

    /// Places `item` next; returns the assortments it fixed.
    fn place(&mut self, item: usize) -> Vec<usize> {
        let mut newly = Vec::new();
        for &(j, pair) in self.inst.slots_of(item) {
            if self.fixed[j].is_none() {
                self.fixed[j] = Some(self.c[pair]);
                newly.push(j);
                for &other in self.inst.assortment(j) {
                    self.open_count[other - 1] -= 1;
                }
            }
        }
        self.open -= newly.len();
        self.placed[item - 1] = true;
        self.prefix.push(item);
        newly
    }

    fn unplace(&mut self, item: usize, newly: &[usize]) {
        for &j in newly {
            self.fixed[j] = None;
            for &other in self.inst.assortment(j) {
                self.open_count[other - 1] += 1;
            }
        }
        self.open += newly.len();
        self.placed[item - 1] = false;
        self.prefix.pop();
    }

    /// Whether a node with this bound may still hold a better (value, order).
    fn worth_exploring(&self, bound: f64) -> bool {
        if bound < self.best_value {
            return true;
        }
        if bound > self.best_value {
            return false;
        }
        // equal bound: only prefixes that can still be lexicographically smaller
        self.prefix.as_slice() <= &self.best_order[..self.prefix.len()]
    }

    fn run(&mut self) {
        self.visit(self.bound());
    }

    fn visit(&mut self, bound: f64) {
        self.nodes += 1;
        if self.open == 0 {
            let mut order = self.prefix.clone();
            order.extend((1..=self.inst.n()).filter(|&i| !self.placed[i - 1]));
            if bound < self.best_value || (bound == self.best_value && order < self.best_order) {
                self.best_value = bound;
                self.best_order = order;
            }
            return;
        }

        let mut children: Vec<(f64, usize)> = Vec::new();
        for item in 1..=self.inst.n() {
            if self.placed[item - 1] {
                continue;
            }
            let neutral = self.open_count[item - 1] == 0;
            let newly = self.place(item);
            children.push((self.bound(), item));
            self.unplace(item, &newly);
            if neutral {
                break;
            }
        }
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        for (child_bound, item) in children {
            let newly = self.place(item);
            if self.worth_exploring(child_bound) {
                self.visit(child_bound);
            }
            self.unplace(item, &newly);
        }
    }
}

/// Writes the linear-ordering integer program for `min <a(sigma), c>` in LP
/// text format.
///
/// Variables `x_i_k` (item i ranked above item k) carry antisymmetry and
/// transitivity rows; `y_i_j` marks item i as the top choice in assortment j
/// and may only be set when i precedes every other member of the assortment.
pub fn write_ip(inst: &Instance, c: &[f64], out: &mut impl Write) -> std::io::Result<()> {
    let n = inst.n();
    writeln!(out, "\\ rankings subproblem: n = {n}, m = {}", inst.m())?;
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    for (k, (j, i)) in inst.pairs().enumerate() {
        write!(out, " {} {} y_{i}_{}", if c[k] < 0.0 { '-' } else { '+' }, c[k].abs(), j + 1)?;
    }
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for i in 1..=n {
        for k in i + 1..=n {
            writeln!(out, " anti_{i}_{k}: x_{i}_{k} + x_{k}_{i} = 1")?;
        }
    }
    for i in 1..=n {
        for k in 1..=n {
            for l in 1..=n {
                if i != k && k != l && i != l {
                    writeln!(out, " trans_{i}_{k}_{l}: x_{i}_{k} + x_{k}_{l} - x_{i}_{l} <= 1")?;
                }
            }
        }
    }
    for (j, set) in inst.assortments().iter().enumerate() {
        let terms: Vec<String> = set.iter().map(|i| format!("y_{i}_{}", j + 1)).collect();
        writeln!(out, " pick_{}: {} = 1", j + 1, terms.join(" + "))?;
        for &i in set {
            for &k in set.iter().filter(|&&k| k != i) {
                writeln!(out, " top_{i}_{k}_{}: y_{i}_{} - x_{i}_{k} <= 0", j + 1, j + 1)?;
            }
        }
    }
    writeln!(out, "Binaries")?;
    for i in 1..=n {
        for k in (1..=n).filter(|&k| k != i) {
            writeln!(out, " x_{i}_{k}")?;
        }
    }
    for (j, i) in inst.pairs() {
        writeln!(out, " y_{i}_{}", j + 1)?;
    }
    writeln!(out, "End")
}

pub fn export_ip(inst: &Instance, c: &[f64], path: &Path) -> Result<()> {
    check_costs(inst, c)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_ip(inst, c, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
