//! Distance measures `D(x, p)` between model and empirical choice vectors.
//!
//! Only the pairs of masked-in assortments take part in any computation;
//! masked-out coordinates of a subgradient are zero.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ChoiceVector, Instance};

/// Dual norm radius of the dual ball `Y`.
pub const DUAL_RADIUS: f64 = 1.0;

const BALL_SLACK: f64 = 1e-9;

/// A distance measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Distance {
    /// `||x - p||_1`
    L1,
    /// `||x - p||_2`
    L2,
    /// `||x - p||_inf`
    Linf,
    /// `0.5 * ||x - p||_2^2`
    SquaredL2,
    /// `sum_j w_j KL(p_j, x_j)`. Weights are renormalized over the masked-in
    /// assortments; an empty vector means uniform weights.
    WeightedKl(Vec<f64>),
}

/// Geometry of the dual ball `Y = { y : ||y||_* <= 1 }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualBall {
    /// Unit l-infinity ball (dual of l1).
    Linf,
    /// Unit Euclidean ball.
    L2,
    /// Unit l1 ball (dual of l-infinity).
    L1,
}

impl DualBall {
    pub fn norm(self, y: &[f64]) -> f64 {
        match self {
            DualBall::Linf => norm_inf(y),
            DualBall::L2 => norm_2(y),
            DualBall::L1 => norm_1(y),
        }
    }

    /// Euclidean projection onto the ball.
    pub fn project(self, y: &[f64]) -> Vec<f64> {
        match self {
            DualBall::Linf => y.iter().map(|v| v.clamp(-DUAL_RADIUS, DUAL_RADIUS)).collect(),
            DualBall::L2 => {
                let norm = norm_2(y);
                if norm <= DUAL_RADIUS {
                    y.to_vec()
                } else {
                    y.iter().map(|v| v * DUAL_RADIUS / norm).collect()
                }
            }
            DualBall::L1 => project_l1_ball(y, DUAL_RADIUS),
        }
    }

    /// `max omega - min omega` over the ball for `omega(y) = 0.5 ||y||_2^2`.
    pub fn set_width(self, dim: usize) -> f64 {
        match self {
            DualBall::Linf => 0.5 * dim as f64 * DUAL_RADIUS * DUAL_RADIUS,
            DualBall::L2 | DualBall::L1 => 0.5 * DUAL_RADIUS * DUAL_RADIUS,
        }
    }
}

impl Distance {
    /// Short name used on the command line and in output files.
    pub fn name(&self) -> &'static str {
        match self {
            Distance::L1 => "l1",
            Distance::L2 => "l2",
            Distance::Linf => "linf",
            Distance::SquaredL2 => "sql2",
            Distance::WeightedKl(_) => "wkl",
        }
    }

    pub fn is_norm(&self) -> bool {
        matches!(self, Distance::L1 | Distance::L2 | Distance::Linf)
    }

    /// Finite curvature constant, so Frank-Wolfe converges.
    pub fn supports_fw(&self) -> bool {
        matches!(self, Distance::SquaredL2)
    }

    pub fn supports_dual(&self) -> bool {
        self.is_norm()
    }

    /// The dual ball `Y` for norm distances.
    pub fn dual_ball(&self) -> Option<DualBall> {
        match self {
            Distance::L1 => Some(DualBall::Linf),
            Distance::L2 => Some(DualBall::L2),
            Distance::Linf => Some(DualBall::L1),
            _ => None,
        }
    }

    /// Constants `(L_D, L_D*)` of the dual regularity condition.
    pub fn lipschitz_constants(&self) -> Option<(f64, f64)> {
        self.is_norm().then_some((1.0, 1.0))
    }

    /// Triangle modulus `g_D(w) = R sqrt(2w)` of the squared Euclidean distance.
    pub fn triangle_modulus(&self, w: f64, m: usize) -> Option<f64> {
        matches!(self, Distance::SquaredL2).then(|| diameter_bound(m) * (2.0 * w).sqrt())
    }

    /// The primal norm `||v||` for norm distances.
    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        match self {
            Distance::L1 => Ok(norm_1(v)),
            Distance::L2 => Ok(norm_2(v)),
            Distance::Linf => Ok(norm_inf(v)),
            _ => Err(self.unsupported("not a norm")),
        }
    }

    /// A point of `Y` attaining `max_{y in Y} <v, y> = ||v||`.
    pub fn norm_witness(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Distance::L1 => Ok(v.iter().map(|&a| sign(a)).collect()),
            Distance::L2 => {
                let norm = norm_2(v);
                Ok(if norm == 0.0 {
                    vec![0.0; v.len()]
                } else {
                    v.iter().map(|a| a / norm).collect()
                })
            }
            Distance::Linf => {
                let mut y = vec![0.0; v.len()];
                if let Some(k) = first_argmax_abs(v.iter().copied()) {
                    y[k] = sign(v[k]);
                }
                Ok(y)
            }
            _ => Err(self.unsupported("not a norm")),
        }
    }

    pub fn value(&self, inst: &Instance, x: &ChoiceVector, p: &ChoiceVector, mask: &[bool]) -> Result<f64> {
        inst.check_len(x.len())?;
        inst.check_len(p.len())?;
        let (x, p) = (x.as_slice(), p.as_slice());
        let diff = || masked_coords(inst, mask).map(|k| x[k] - p[k]);
        Ok(match self {
            Distance::L1 => diff().map(f64::abs).sum(),
            Distance::L2 => diff().map(|d| d * d).sum::<f64>().sqrt(),
            Distance::Linf => diff().map(f64::abs).fold(0.0, f64::max),
            Distance::SquaredL2 => 0.5 * diff().map(|d| d * d).sum::<f64>(),
            Distance::WeightedKl(w) => {
                let w = kl_weights(w, inst, mask)?;
                let mut total = 0.0;
                for j in (0..inst.m()).filter(|&j| mask[j]) {
                    for k in inst.block(j) {
                        if p[k] == 0.0 {
                            continue;
                        }
                        if x[k] <= 0.0 {
                            return Ok(f64::INFINITY);
                        }
                        total += w[j] * p[k] * (p[k] / x[k]).ln();
                    }
                }
                total
            }
        })
    }

    /// A subgradient of `D(., p)` at `x`.
    pub fn subgradient(&self, inst: &Instance, x: &ChoiceVector, p: &ChoiceVector, mask: &[bool]) -> Result<Vec<f64>> {
        inst.check_len(x.len())?;
        inst.check_len(p.len())?;
        let (x, p) = (x.as_slice(), p.as_slice());
        let mut g = vec![0.0; x.len()];
        match self {
            Distance::L1 => {
                for k in masked_coords(inst, mask) {
                    g[k] = sign(x[k] - p[k]);
                }
            }
            Distance::L2 => {
                let norm = masked_coords(inst, mask)
                    .map(|k| (x[k] - p[k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    for k in masked_coords(inst, mask) {
                        g[k] = (x[k] - p[k]) / norm;
                    }
                }
            }
            Distance::Linf => {
                let mut best: Option<(usize, f64)> = None;
                for k in masked_coords(inst, mask) {
                    let d = (x[k] - p[k]).abs();
                    if d > 0.0 && best.is_none_or(|(_, b)| d > b) {
                        best = Some((k, d));
                    }
                }
                if let Some((k, _)) = best {
                    g[k] = sign(x[k] - p[k]);
                }
            }
            Distance::SquaredL2 => {
                for k in masked_coords(inst, mask) {
                    g[k] = x[k] - p[k];
                }
            }
            Distance::WeightedKl(w) => {
                let w = kl_weights(w, inst, mask)?;
                for j in (0..inst.m()).filter(|&j| mask[j]) {
                    for k in inst.block(j) {
                        if p[k] == 0.0 {
                            continue;
                        }
                        if x[k] <= 0.0 {
                            return Err(Error::Domain(format!(
                                "x[{k}] = {} while p[{k}] = {} > 0",
                                x[k], p[k]
                            )));
                        }
                        g[k] = -w[j] * p[k] / x[k];
                    }
                }
            }
        }
        Ok(g)
    }

    /// `D_*(y, p) = <y, p>` on the masked-in coordinates, for `y` in `Y`.
    pub fn conjugate_value(&self, inst: &Instance, y: &[f64], p: &ChoiceVector, mask: &[bool]) -> Result<f64> {
        let ball = self
            .dual_ball()
            .ok_or_else(|| self.unsupported("no closed-form conjugate"))?;
        inst.check_len(y.len())?;
        inst.check_len(p.len())?;
        let norm = ball.norm(y);
        if norm > DUAL_RADIUS + BALL_SLACK {
            return Err(Error::OutsideDualBall { norm });
        }
        let p = p.as_slice();
        Ok(masked_coords(inst, mask).map(|k| y[k] * p[k]).sum())
    }

    /// Euclidean projection onto the dual ball.
    pub fn dual_project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let ball = self
            .dual_ball()
            .ok_or_else(|| self.unsupported("no dual ball"))?;
        Ok(ball.project(y))
    }

    /// Second-order remainder ratios along the segment from `p` towards `s`:
    /// `(D(p + a(s - p), p) - D(p, p) - a <s - p, g>) / a^2` for each `a`.
    ///
    /// `g` is the subgradient selection at `x = p`; `None` uses
    /// [`Distance::subgradient`] evaluated there.
    pub fn curvature_probe(
        &self,
        inst: &Instance,
        p: &ChoiceVector,
        s: &ChoiceVector,
        mask: &[bool],
        alphas: &[f64],
        selection: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        inst.check_len(p.len())?;
        inst.check_len(s.len())?;
        let g = match selection {
            Some(g) => {
                inst.check_len(g.len())?;
                g.to_vec()
            }
            None => self.subgradient(inst, p, p, mask)?,
        };
        let base = self.value(inst, p, p, mask)?;
        let slope: f64 = masked_coords(inst, mask)
            .map(|k| (s.as_slice()[k] - p.as_slice()[k]) * g[k])
            .sum();
        alphas
            .iter()
            .map(|&a| {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::Config(format!("probe step {a} outside (0, 1]")));
                }
                let x: Vec<f64> = p
                    .as_slice()
                    .iter()
                    .zip(s.as_slice())
                    .map(|(pv, sv)| (1.0 - a) * pv + a * sv)
                    .collect();
                let d = self.value(inst, &ChoiceVector::from_vec(x), p, mask)?;
                Ok((d - base - a * slope) / (a * a))
            })
            .collect()
    }

    /// Fit value in distance units: `sqrt(2 D)` for the squared Euclidean
    /// distance, `D` otherwise.
    pub fn reported_fit(&self, value: f64) -> f64 {
        match self {
            Distance::SquaredL2 => (2.0 * value).sqrt(),
            _ => value,
        }
    }

    fn unsupported(&self, reason: &str) -> Error {
        Error::UnsupportedDistance {
            distance: self.name().into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Distance::L1),
            "l2" => Ok(Distance::L2),
            "linf" => Ok(Distance::Linf),
            "sql2" => Ok(Distance::SquaredL2),
            "wkl" => Ok(Distance::WeightedKl(Vec::new())),
            other => Err(Error::Config(format!("unknown distance '{other}'"))),
        }
    }
}

/// Euclidean diameter bound `sqrt(2m)` of the rankings polytope.
pub fn diameter_bound(m: usize) -> f64 {
    (2.0 * m as f64).sqrt()
}

fn masked_coords<'a>(inst: &'a Instance, mask: &'a [bool]) -> impl Iterator<Item = usize> + 'a {
    (0..inst.m()).filter(|&j| mask[j]).flat_map(|j| inst.block(j))
}

fn kl_weights(w: &[f64], inst: &Instance, mask: &[bool]) -> Result<Vec<f64>> {
    let m = inst.m();
    if w.is_empty() {
        let active = mask.iter().filter(|&&b| b).count().max(1);
        return Ok(vec![1.0 / active as f64; m]);
    }
    if w.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: w.len() });
    }
    if w.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Config("KL weights must be nonnegative".into()));
    }
    let total: f64 = (0..m).filter(|&j| mask[j]).map(|j| w[j]).sum();
    if total <= 0.0 {
        return Err(Error::Config("KL weights vanish on every observed assortment".into()));
    }
    Ok(w.iter().map(|v| v / total).collect())
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn first_argmax_abs(v: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, a) in v.enumerate() {
        let a = a.abs();
        if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
            best = Some((k, a));
        }
    }
    best.map(|(k, _)| k)
}

pub(crate) fn norm_1(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum()
}

pub(crate) fn norm_2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).fold(0.0, f64::max)
}

/// Projection onto `{ y : ||y||_1 <= radius }` by soft-thresholding, with the
/// threshold taken from the sorted cumulative sums of `|y|`.
fn project_l1_ball(y: &[f64], radius: f64) -> Vec<f64> {
    if norm_1(y) <= radius {
        return y.to_vec();
    }
    let mut mags: Vec<f64> = y.iter().map(|a| a.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (k + 1) as f64;
        if u > t {
            tau = t;
        } else {
            break;
        }
    }
    y.iter()
        .map(|&a| sign(a) * (a.abs() - tau).max(0.0))
        .collect()
}
