//! Hopfield associative memory.
//!
//! Weights are a symmetric `N × N` matrix with zero diagonal. Construction goes
//! through [`HopfieldNet::from_weights`] (validating) or the learning rules
//! below, so every value of [`HopfieldNet`] satisfies both invariants.
//!
//! Energy is `E(s) = −½ Σ_ij W_ij s_i s_j` and the local field is
//! `h_i = Σ_j W_ij s_j`. Flipping bit `i` changes the energy by `2 s_i h_i`.
//!
//! Fields within rounding noise of zero (`|h_i| ≤ 1e-12 · Σ_j |W_ij|`) are
//! treated as exactly zero, so cancelling sums such as Hebbian crosstalk of
//! `±1/N` terms neither flip a bit nor count as stabilizing it.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::patterns::{hamming, BipolarPattern, PatternSet};
use crate::seed;

#[derive(Debug, Clone)]
pub struct HopfieldNet {
    n: usize,
    /// Row-major `n × n`.
    weights: Vec<f64>,
    /// `Σ_j |W_ij|` per row, the scale of the rounding noise in `h_i`.
    row_l1: Vec<f64>,
}

impl PartialEq for HopfieldNet {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.weights == other.weights
    }
}

const FORMAT_HEADER: &str = "weightscape-hopfield v1";

/// Relative size below which a local field counts as zero.
pub const FIELD_RESOLUTION: f64 = 1e-12;

impl HopfieldNet {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            weights: vec![0.0; n * n],
            row_l1: vec![0.0; n],
        }
    }

    fn with_weights(n: usize, weights: Vec<f64>) -> Self {
        let row_l1 = weights.chunks(n.max(1)).map(|r| r.iter().map(|w| w.abs()).sum()).collect();
        Self { n, weights, row_l1 }
    }

    /// Validates exact symmetry, a zero diagonal and finite entries.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        check_dim(n * n, weights.len())?;
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::NetInvariant(format!(
                    "diagonal entry ({i},{i}) is {}",
                    weights[i * n + i]
                )));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() {
                    return Err(Error::NetInvariant(format!("entry ({i},{j}) is {w}")));
                }
                if w != weights[j * n + i] {
                    return Err(Error::NetInvariant(format!(
                        "asymmetric: W[{i},{j}] = {w} but W[{j},{i}] = {}",
                        weights[j * n + i]
                    )));
                }
            }
        }
        Ok(Self::with_weights(n, weights))
    }

    /// Hebbian storage: `W_ij = (1/N) Σ_μ ξ_i^μ ξ_j^μ` for `i ≠ j`, `W_ii = 0`.
    pub fn hebbian(ps: &PatternSet) -> Result<Self> {
        if ps.is_empty() {
            return Err(Error::EmptyPatternSet);
        }
        let n = ps.dim();
        let mut weights = vec![0.0; n * n];
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let sum: i64 = ps
                    .iter()
                    .map(|p| i64::from(p.get(i)) * i64::from(p.get(j)))
                    .sum();
                let w = sum as f64 * inv_n;
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
        Ok(Self::with_weights(n, weights))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    fn raw_field(&self, s: &BipolarPattern, i: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(s.bits())
            .map(|(w, &b)| w * f64::from(b))
            .sum()
    }

    fn field(&self, s: &BipolarPattern, i: usize) -> f64 {
        let h = self.raw_field(s, i);
        if h.abs() <= FIELD_RESOLUTION * self.row_l1[i] {
            0.0
        } else {
            h
        }
    }

    pub fn energy(&self, s: &BipolarPattern) -> Result<f64> {
        check_dim(self.n, s.len())?;
        let quad: f64 = (0..self.n)
            .map(|i| f64::from(s.get(i)) * self.raw_field(s, i))
            .sum();
        Ok(-0.5 * quad)
    }

    /// `h_i`, reported as exactly zero within rounding noise.
    pub fn local_field(&self, s: &BipolarPattern, i: usize) -> Result<f64> {
        check_dim(self.n, s.len())?;
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, len: self.n });
        }
        Ok(self.field(s, i))
    }

    /// `true` iff `p_i h_i > 0` for every `i`: every single-bit flip strictly
    /// raises the energy.
    pub fn is_stable(&self, p: &BipolarPattern) -> Result<bool> {
        check_dim(self.n, p.len())?;
        Ok((0..self.n).all(|i| f64::from(p.get(i)) * self.field(p, i) > 0.0))
    }

    pub fn stable_count(&self, ps: &PatternSet) -> Result<usize> {
        let mut count = 0;
        for p in ps.iter() {
            if self.is_stable(p)? {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Asynchronous recall with visit orders drawn from `seed`.
    ///
    /// Each sweep visits every index once, in a fresh seeded permutation, and
    /// sets `s_i ← sign(h_i)` (unchanged when `h_i = 0`). Stops after the first
    /// sweep without flips or after `max_sweeps`.
    pub fn recall(&self, probe: &BipolarPattern, max_sweeps: usize, seed: u64) -> Result<RecallResult> {
        let mut orders = VisitOrders::new(self.n, seed);
        self.recall_with_orders(probe, max_sweeps, &mut || orders.next_order())
    }

    /// Asynchronous recall with caller-supplied visit orders (one call per sweep).
    pub fn recall_with_orders(
        &self,
        probe: &BipolarPattern,
        max_sweeps: usize,
        next_order: &mut dyn FnMut() -> Vec<usize>,
    ) -> Result<RecallResult> {
        check_dim(self.n, probe.len())?;
        if max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        let mut state = probe.clone();
        let mut energy_trace = vec![self.energy(&state)?];
        let mut flips = Vec::new();
        let mut converged = false;
        let mut sweeps_used = 0;

        for sweep in 1..=max_sweeps {
            let order = next_order();
            validate_order(&order, self.n)?;
            let mut flipped = false;
            for i in order {
                let h = self.field(&state, i);
                let s = state.get(i);
                let new = if h > 0.0 {
                    1
                } else if h < 0.0 {
                    -1
                } else {
                    s
                };
                if new != s {
                    state.set(i, new);
                    flips.push(i);
                    flipped = true;
                }
            }
            energy_trace.push(self.energy(&state)?);
            sweeps_used = sweep;
            if !flipped {
                converged = true;
                break;
            }
        }

        Ok(RecallResult {
            final_state: state,
            sweeps_used,
            converged,
            energy_trace,
            flips,
        })
    }

    /// Dimension followed by the strict upper triangle, row by row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "dim {}", self.n);
        for i in 0..self.n.saturating_sub(1) {
            let row: Vec<String> = ((i + 1)..self.n)
                .map(|j| format!("{:?}", self.weight(i, j)))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(Error::Format("not a weightscape-hopfield v1 file".into()));
        }
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("dim "))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Format("missing `dim N` line".into()))?;
        let mut weights = vec![0.0; n * n];
        for i in 0..n.saturating_sub(1) {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing row {i}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Format(format!("bad weight {t:?}"))))
                .collect::<Result<_>>()?;
            check_dim(n - 1 - i, vals.len())?;
            for (k, v) in vals.into_iter().enumerate() {
                let j = i + 1 + k;
                weights[i * n + j] = v;
                weights[j * n + i] = v;
            }
        }
        Self::from_weights(n, weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Applies `ΔW = (η/N)(ξξᵀ − ξ′ξ′ᵀ)` off the diagonal, where `ξ′` is `ξ`
    /// with bit `k` flipped. The two outer products differ only in row and
    /// column `k`, where the difference is `2 ξ_k ξ_j`.
    fn apply_flip_correction(&mut self, xi: &BipolarPattern, k: usize, eta: f64) {
        let n = self.n;
        let scale = 2.0 * eta / n as f64;
        let xk = f64::from(xi.get(k));
        for j in (0..n).filter(|&j| j != k) {
            let d = scale * xk * f64::from(xi.get(j));
            let old = self.weights[k * n + j];
            let new = old + d;
            self.weights[k * n + j] = new;
            self.weights[j * n + k] = new;
            self.row_l1[j] += new.abs() - old.abs();
        }
        self.row_l1[k] = self.row(k).iter().map(|w| w.abs()).sum();
    }
}

fn validate_order(order: &[usize], n: usize) -> Result<()> {
    check_dim(n, order.len())?;
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!(
                "visit order is not a permutation of 0..{n}"
            )));
        }
    }
    Ok(())
}

/// Stream of seeded random permutations of `0..n`, one per sweep.
pub struct VisitOrders {
    rng: seed::Rng,
    order: Vec<usize>,
}

impl VisitOrders {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: seed::rng(seed),
            order: (0..n).collect(),
        }
    }

    pub fn next_order(&mut self) -> Vec<usize> {
        self.order.shuffle(&mut self.rng);
        self.order.clone()
    }
}

pub fn hebbian_weights(ps: &PatternSet) -> Result<HopfieldNet> {
    HopfieldNet::hebbian(ps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallResult {
    pub final_state: BipolarPattern,
    pub sweeps_used: usize,
    pub converged: bool,
    /// Energy of the probe, then after each sweep.
    pub energy_trace: Vec<f64>,
    /// Indices flipped, in the order the flips happened.
    pub flips: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterTrainConfig {
    /// At 1.0 a correction is exactly one Hebbian storage of the pattern
    /// minus one of the offending neighbor.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Random single-flip neighbors per pattern per iteration; `None` means `N`.
    pub neighbors_per_pattern: Option<usize>,
    pub seed: u64,
}

impl Default for IterTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            max_iters: 1000,
            neighbors_per_pattern: None,
            seed: 0,
        }
    }
}

impl IterTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if self.neighbors_per_pattern == Some(0) {
            return Err(Error::InvalidArgument("neighbors_per_pattern must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub violations: usize,
    pub stable_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Strictly stable stored patterns under the Hebbian starting point.
    pub initial_stable: usize,
    pub records: Vec<IterationRecord>,
}

impl TrainLog {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_stable(&self) -> usize {
        self.records
            .last()
            .map_or(self.initial_stable, |r| r.stable_count)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,violations,stable_count\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.iteration, r.violations, r.stable_count);
        }
        s
    }
}

/// Hebbian initialization followed by energy corrections.
///
/// Every iteration samples random single-flip neighbors `ξ′` of each stored
/// pattern `ξ`. When a neighbor is not strictly higher in energy than `ξ`, the
/// weights move by `(η/N)(ξξᵀ − ξ′ξ′ᵀ)` off the diagonal. Training stops as
/// soon as every stored pattern is strictly stable, or after `max_iters`.
pub fn iterative_train(ps: &PatternSet, cfg: &IterTrainConfig) -> Result<(HopfieldNet, TrainLog)> {
    cfg.validate()?;
    let mut net = HopfieldNet::hebbian(ps)?;
    let target = ps.len();
    let mut log = TrainLog {
        initial_stable: net.stable_count(ps)?,
        records: Vec::new(),
    };
    if log.initial_stable == target {
        return Ok((net, log));
    }

    let n = ps.dim();
    let per_pattern = cfg.neighbors_per_pattern.unwrap_or(n);
    let mut rng = seed::rng(cfg.seed);
    for iteration in 1..=cfg.max_iters {
        let mut violations = 0;
        for xi in ps.iter() {
            for _ in 0..per_pattern {
                let k = rng.gen_range(0..n);
                // E(ξ′) − E(ξ) = 2 ξ_k h_k
                let delta_e = 2.0 * f64::from(xi.get(k)) * net.field(xi, k);
                if delta_e <= 0.0 {
                    violations += 1;
                    net.apply_flip_correction(xi, k, cfg.learning_rate);
                }
            }
        }
        let stable_count = net.stable_count(ps)?;
        log.records.push(IterationRecord {
            iteration,
            violations,
            stable_count,
        });
        if stable_count == target {
            break;
        }
    }
    // Exact row norms, so the trained net behaves like its reloaded copy.
    Ok((HopfieldNet::with_weights(n, net.weights), log))
}

/// Outcome of recall-as-classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RecallLabelRepr", into = "RecallLabelRepr")]
pub enum RecallLabel {
    Class(u8),
    /// The fixed point is farther than the reject threshold from every prototype.
    Unrecalled,
}

/// JSON form: the class id, or the string `"unrecalled"`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RecallLabelRepr {
    Class(u8),
    Tag(String),
}

impl TryFrom<RecallLabelRepr> for RecallLabel {
    type Error = String;

    fn try_from(r: RecallLabelRepr) -> std::result::Result<Self, String> {
        match r {
            RecallLabelRepr::Class(c) => Ok(RecallLabel::Class(c)),
            RecallLabelRepr::Tag(t) if t == "unrecalled" => Ok(RecallLabel::Unrecalled),
            RecallLabelRepr::Tag(t) => Err(format!("unknown recall label {t:?}")),
        }
    }
}

impl From<RecallLabel> for RecallLabelRepr {
    fn from(v: RecallLabel) -> Self {
        match v {
            RecallLabel::Class(c) => RecallLabelRepr::Class(c),
            RecallLabel::Unrecalled => RecallLabelRepr::Tag("unrecalled".into()),
        }
    }
}

impl std::fmt::Display for RecallLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecallLabel::Class(c) => write!(f, "{c}"),
            RecallLabel::Unrecalled => f.write_str("unrecalled"),
        }
    }
}

/// Index of the prototype nearest to `state` (lowest index on ties) and its distance.
pub fn nearest_prototype(prototypes: &PatternSet, state: &BipolarPattern) -> Result<(usize, usize)> {
    let mut best = (0, usize::MAX);
    for (k, p) in prototypes.iter().enumerate() {
        let d = hamming(p, state)?;
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best)
}

/// Recalls `probe` and labels the fixed point with its nearest prototype.
///
/// Returns [`RecallLabel::Unrecalled`] when the nearest prototype is farther
/// than `reject_threshold` (no rejection when `None`).
pub fn recall_classify(
    net: &HopfieldNet,
    prototypes: &PatternSet,
    probe: &BipolarPattern,
    reject_threshold: Option<usize>,
    max_sweeps: usize,
    seed: u64,
) -> Result<(RecallLabel, BipolarPattern)> {
    let labels = prototypes
        .labels()
        .ok_or_else(|| Error::InvalidArgument("prototypes must be labeled".into()))?;
    check_dim(net.dim(), prototypes.dim())?;
    let fixed = net.recall(probe, max_sweeps, seed)?.final_state;
    let (k, d) = nearest_prototype(prototypes, &fixed)?;
    let label = match reject_threshold {
        Some(t) if d > t => RecallLabel::Unrecalled,
        _ => RecallLabel::Class(labels[k]),
    };
    Ok((label, fixed))
}
