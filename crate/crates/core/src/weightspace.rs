//! Weight-space structure of the two models.
//!
//! For the MLP: hidden-unit sign flips and permutations that leave the network
//! function unchanged (equioutput replicas), their exhaustive enumeration, the
//! rank-order ("order of ascendance") trace of one layer during training, and
//! partitions of a small enumerable pattern space into trained, generalized,
//! adversarial and irrelevant patterns.
//!
//! For the Hopfield net: a probe that applies the same kind of index
//! transforms to `W` and measures whether recall outcomes survive.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use itertools::Itertools;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hopfield::{HopfieldNet, VisitOrders};
use crate::mlp::{EpochObserver, Mlp, Sample, TrainConfig, TrainHistory};
use crate::patterns::{enumerate_space, BipolarPattern, MAX_ENUMERABLE_DIM};
use crate::seed;

/// Upper bound on the number of replicas [`enumerate_replicas`] will build.
pub const MAX_ENUMERATED_REPLICAS: u128 = 100_000;

/// Default tolerance for comparing a network with a transformed replica.
pub const EQUIOUTPUT_TOL: f64 = 1e-10;

/// Sign flips followed by a permutation of one hidden layer's units.
///
/// Unit `i` of the transformed layer is `sign_flips[π(i)] ? −1 : +1` times
/// unit `π(i)` of the original, where `π = permutation`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EquioutputTransform {
    layer_index: usize,
    permutation: Vec<usize>,
    sign_flips: Vec<bool>,
}

fn validate_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidTransform(format!("{perm:?} is not a bijection")));
        }
    }
    Ok(())
}

fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl EquioutputTransform {
    pub fn new(layer_index: usize, permutation: Vec<usize>, sign_flips: Vec<bool>) -> Result<Self> {
        validate_permutation(&permutation)?;
        if permutation.len() != sign_flips.len() {
            return Err(Error::InvalidTransform(format!(
                "permutation of {} units with {} sign flags",
                permutation.len(),
                sign_flips.len()
            )));
        }
        Ok(Self {
            layer_index,
            permutation,
            sign_flips,
        })
    }

    pub fn identity(layer_index: usize, width: usize) -> Self {
        Self {
            layer_index,
            permutation: (0..width).collect(),
            sign_flips: vec![false; width],
        }
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn sign_flips(&self) -> &[bool] {
        &self.sign_flips
    }

    pub fn width(&self) -> usize {
        self.permutation.len()
    }

    /// The transform equal to applying `self` and then `then`.
    pub fn compose(&self, then: &Self) -> Result<Self> {
        if self.layer_index != then.layer_index || self.width() != then.width() {
            return Err(Error::InvalidTransform(
                "can only compose transforms of the same layer".into(),
            ));
        }
        // Unit i after both = s2[π2(i)] · s1[π1(π2(i))] · original unit π1(π2(i)).
        let permutation: Vec<usize> = then.permutation.iter().map(|&j| self.permutation[j]).collect();
        let inv1 = invert_permutation(&self.permutation);
        let sign_flips = (0..self.width())
            .map(|m| self.sign_flips[m] ^ then.sign_flips[inv1[m]])
            .collect();
        Self::new(self.layer_index, permutation, sign_flips)
    }

    pub fn random(layer_index: usize, width: usize, rng: &mut impl rand::Rng) -> Self {
        use rand::seq::SliceRandom;
        let mut permutation: Vec<usize> = (0..width).collect();
        permutation.shuffle(rng);
        let sign_flips = (0..width).map(|_| rng.gen::<bool>()).collect();
        Self {
            layer_index,
            permutation,
            sign_flips,
        }
    }
}

/// Applies an equioutput transform: flipped units have their incoming row,
/// bias and outgoing column negated, then units are reordered.
pub fn apply_transform(m: &Mlp, t: &EquioutputTransform) -> Result<Mlp> {
    let k = t.layer_index;
    let layers = m.layers();
    if k + 1 >= layers.len() {
        return Err(Error::InvalidTransform(format!(
            "layer {k} is not a hidden layer of a {}-layer network",
            layers.len()
        )));
    }
    if !layers[k].activation().is_odd() {
        return Err(Error::InvalidTransform(format!(
            "layer {k} activation {:?} is not odd",
            layers[k].activation()
        )));
    }
    let width = layers[k].fan_out();
    if t.width() != width {
        return Err(Error::InvalidTransform(format!(
            "transform has {} units, layer {k} has {width}",
            t.width()
        )));
    }

    let sign = |unit: usize| if t.sign_flips[unit] { -1.0 } else { 1.0 };
    let mut out = m.clone();
    let (head, tail) = out.layers_mut().split_at_mut(k + 1);
    let (hidden, next) = (&mut head[k], &mut tail[0]);
    let src_hidden = &layers[k];
    let src_next = &layers[k + 1];
    let fan_in = src_hidden.fan_in();

    for (i, &src) in t.permutation.iter().enumerate() {
        let s = sign(src);
        for (dst, w) in hidden.weights_mut()[i * fan_in..(i + 1) * fan_in]
            .iter_mut()
            .zip(src_hidden.row(src))
        {
            *dst = s * w;
        }
        hidden.bias_mut()[i] = s * src_hidden.bias()[src];
        for o in 0..src_next.fan_out() {
            next.weights_mut()[o * width + i] = s * src_next.weight(o, src);
        }
    }
    Ok(out)
}

/// Largest absolute output difference between `a` and `b` over `probes`.
pub fn max_output_deviation(a: &Mlp, b: &Mlp, probes: &[Vec<f64>]) -> Result<f64> {
    check_dim(a.input_dim(), b.input_dim())?;
    check_dim(a.output_dim(), b.output_dim())?;
    let mut worst = 0.0f64;
    for x in probes {
        let ya = a.forward(x)?;
        let yb = b.forward(x)?;
        for (u, v) in ya.iter().zip(&yb) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

pub fn equioutput_check(a: &Mlp, b: &Mlp, probes: &[Vec<f64>], tol: f64) -> Result<bool> {
    Ok(max_output_deviation(a, b, probes)? <= tol)
}

/// `count` inputs uniform in `[−1, 1]^dim`.
pub fn default_probes(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect()
}

/// Size of the sign-flip/permutation group: `Π_k n_k! · 2^{n_k}`.
pub fn replica_count(hidden_sizes: &[usize]) -> Result<u128> {
    let overflow = || Error::Overflow(format!("replica count for {hidden_sizes:?} exceeds u128"));
    let mut total: u128 = 1;
    for &n in hidden_sizes {
        if n == 0 {
            return Err(Error::InvalidArgument("hidden sizes must be positive".into()));
        }
        let two_pow = 1u128.checked_shl(n as u32).filter(|_| n < 128).ok_or_else(overflow)?;
        total = total.checked_mul(two_pow).ok_or_else(overflow)?;
        for f in 2..=n as u128 {
            total = total.checked_mul(f).ok_or_else(overflow)?;
        }
    }
    Ok(total)
}

/// Every transform of one layer of `width` units (`width! · 2^width` of them).
pub fn layer_transforms(layer_index: usize, width: usize) -> impl Iterator<Item = EquioutputTransform> {
    (0..width).permutations(width).flat_map(move |perm| {
        (0..1u64 << width).map(move |mask| EquioutputTransform {
            layer_index,
            permutation: perm.clone(),
            sign_flips: (0..width).map(|u| mask >> u & 1 == 1).collect(),
        })
    })
}

/// All replicas of `m` under the full transform group of its hidden layers.
pub fn enumerate_replicas(m: &Mlp) -> Result<Vec<Mlp>> {
    let hidden = m.hidden_sizes();
    let count = replica_count(&hidden)?;
    if count > MAX_ENUMERATED_REPLICAS {
        return Err(Error::InvalidArgument(format!(
            "{count} replicas exceed the enumeration limit {MAX_ENUMERATED_REPLICAS}"
        )));
    }
    let mut replicas = vec![m.clone()];
    for (k, &width) in hidden.iter().enumerate() {
        let transforms: Vec<_> = layer_transforms(k, width).collect();
        replicas = replicas
            .iter()
            .map(|r| transforms.iter().map(|t| apply_transform(r, t)).collect::<Result<Vec<_>>>())
            .flatten_ok()
            .collect::<Result<_>>()?;
    }
    Ok(replicas)
}

fn parameter_key(m: &Mlp) -> Vec<u64> {
    // `+ 0.0` folds −0.0 into 0.0.
    m.parameters().iter().map(|v| (v + 0.0).to_bits()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub hidden_sizes: Vec<usize>,
    pub expected_replicas: u128,
    pub enumerated: usize,
    pub distinct_weight_vectors: usize,
    pub equioutput: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl ReplicaReport {
    pub fn all_equioutput(&self) -> bool {
        self.equioutput == self.enumerated
    }

    pub fn summary(&self) -> String {
        format!(
            "{}/{} transforms equioutput ({} distinct weight vectors, max deviation {:e})",
            self.equioutput, self.enumerated, self.distinct_weight_vectors, self.max_deviation
        )
    }
}

/// Enumerates every replica of `m` and checks distinctness and equioutput.
pub fn verify_replicas(m: &Mlp, probes: &[Vec<f64>], tol: f64) -> Result<ReplicaReport> {
    let replicas = enumerate_replicas(m)?;
    let mut keys = HashSet::new();
    let mut equioutput = 0;
    let mut max_deviation = 0.0f64;
    for r in &replicas {
        keys.insert(parameter_key(r));
        let dev = max_output_deviation(m, r, probes)?;
        max_deviation = max_deviation.max(dev);
        if dev <= tol {
            equioutput += 1;
        }
    }
    Ok(ReplicaReport {
        hidden_sizes: m.hidden_sizes(),
        expected_replicas: replica_count(&m.hidden_sizes())?,
        enumerated: replicas.len(),
        distinct_weight_vectors: keys.len(),
        equioutput,
        max_deviation,
        tolerance: tol,
    })
}

/// Kendall's tau-a between two equally long sequences, in `O(n log n)`.
///
/// Pairs tied in either sequence count as neither concordant nor discordant.
/// Returns `(tau, concordant == all pairs)`.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    check_dim(a.len(), b.len())?;
    let n = a.len();
    if n < 2 {
        return Ok((1.0, true));
    }
    let pairs = |k: u64| k * k.saturating_sub(1) / 2;
    let total = pairs(n as u64);

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let mut tied_a = 0u64;
    let mut tied_ab = 0u64;
    for group in idx.chunk_by(|&i, &j| a[i] == a[j]) {
        tied_a += pairs(group.len() as u64);
        for sub in group.chunk_by(|&i, &j| b[i] == b[j]) {
            tied_ab += pairs(sub.len() as u64);
        }
    }

    let mut seq: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let discordant = count_inversions(&mut seq);

    let mut sorted_b = b.to_vec();
    sorted_b.sort_by(f64::total_cmp);
    let tied_b: u64 = sorted_b
        .chunk_by(|x, y| x == y)
        .map(|g| pairs(g.len() as u64))
        .sum();

    let concordant = total - tied_a - tied_b + tied_ab - discordant;
    let tau = (concordant as f64 - discordant as f64) / total as f64;
    Ok((tau, concordant == total))
}

/// Strict inversions (`v[i] > v[j]`, `i < j`) by merge sort; sorts `v`.
fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inv += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    inv
}

/// Ascending rank of every value (ties broken by position).
pub fn ranks(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut r = vec![0; values.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscendanceSnapshot {
    pub epoch: usize,
    pub ranks: Vec<usize>,
    pub order_preserved: bool,
    pub kendall_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscendanceTrace {
    pub layer_index: usize,
    pub snapshots: Vec<AscendanceSnapshot>,
}

impl AscendanceTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,order_preserved,kendall_tau\n");
        for snap in &self.snapshots {
            let _ = writeln!(s, "{},{},{:?}", snap.epoch, snap.order_preserved, snap.kendall_tau);
        }
        s
    }
}

/// [`EpochObserver`] that records the weight ordering of one layer.
pub struct AscendanceRecorder {
    layer_index: usize,
    initial: Vec<f64>,
    trace: AscendanceTrace,
}

impl AscendanceRecorder {
    pub fn new(m: &Mlp, layer_index: usize) -> Result<Self> {
        if layer_index >= m.layers().len() {
            return Err(Error::InvalidArgument(format!(
                "layer {layer_index} does not exist in a {}-layer network",
                m.layers().len()
            )));
        }
        Ok(Self {
            layer_index,
            initial: Vec::new(),
            trace: AscendanceTrace {
                layer_index,
                snapshots: Vec::new(),
            },
        })
    }

    fn snapshot(&mut self, epoch: usize, m: &Mlp) {
        let w = m.layers()[self.layer_index].weights();
        let (kendall_tau, order_preserved) =
            kendall_tau(&self.initial, w).expect("layer shape is fixed during training");
        self.trace.snapshots.push(AscendanceSnapshot {
            epoch,
            ranks: ranks(w),
            order_preserved,
            kendall_tau,
        });
    }

    pub fn finish(self) -> AscendanceTrace {
        self.trace
    }
}

impl EpochObserver for AscendanceRecorder {
    fn on_start(&mut self, m: &Mlp) {
        self.initial = m.layers()[self.layer_index].weights().to_vec();
        self.trace.snapshots.clear();
        self.snapshot(0, m);
    }

    fn on_epoch(&mut self, epoch: usize, m: &Mlp) {
        self.snapshot(epoch, m);
    }
}

/// Trains `m` while recording the weight order of `layer_index` after every epoch.
pub fn ascendance_trace(
    m: &mut Mlp,
    data: &[Sample],
    cfg: &TrainConfig,
    layer_index: usize,
) -> Result<(TrainHistory, AscendanceTrace)> {
    let mut recorder = AscendanceRecorder::new(m, layer_index)?;
    let history = m.train(data, cfg, &mut recorder)?;
    Ok((history, recorder.finish()))
}

/// Anything that assigns a class to a bipolar pattern.
pub trait PatternClassifier {
    fn classify(&self, x: &BipolarPattern) -> Result<usize>;
}

impl PatternClassifier for Mlp {
    fn classify(&self, x: &BipolarPattern) -> Result<usize> {
        self.predict(&x.to_f64())
    }
}

/// Predicts one class for every pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantClassifier(pub usize);

impl PatternClassifier for ConstantClassifier {
    fn classify(&self, _: &BipolarPattern) -> Result<usize> {
        Ok(self.0)
    }
}

/// Looks every pattern up in a table indexed in [`enumerate_space`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupClassifier {
    table: Vec<usize>,
}

impl LookupClassifier {
    pub fn new(table: Vec<usize>) -> Result<Self> {
        if !table.len().is_power_of_two() {
            return Err(Error::Consistency(format!("lookup table of {} entries is not a 2^n space", table.len())));
        }
        Ok(Self { table })
    }

    /// Memorizes the oracle; irrelevant patterns map to `fallback`.
    pub fn memorizing(oracle: &[OracleLabel], fallback: usize) -> Result<Self> {
        Self::new(
            oracle
                .iter()
                .map(|o| match o {
                    OracleLabel::Class(c) => *c,
                    OracleLabel::Irrelevant => fallback,
                })
                .collect(),
        )
    }
}

impl PatternClassifier for LookupClassifier {
    fn classify(&self, x: &BipolarPattern) -> Result<usize> {
        check_dim(self.table.len().trailing_zeros() as usize, x.len())?;
        Ok(self.table[crate::patterns::space_index(x)?])
    }
}

/// Majority vote of the bits: class 1 for more `+1`s, class 0 for more `−1`s,
/// irrelevant on a tie.
pub fn majority_oracle(n: usize) -> Result<Vec<OracleLabel>> {
    Ok(enumerate_space(n)?
        .map(|p| {
            let ups = p.bits().iter().filter(|&&b| b == 1).count();
            match (2 * ups).cmp(&n) {
                std::cmp::Ordering::Greater => OracleLabel::Class(1),
                std::cmp::Ordering::Less => OracleLabel::Class(0),
                std::cmp::Ordering::Equal => OracleLabel::Irrelevant,
            }
        })
        .collect())
}

/// Ground truth for one pattern of an enumerable space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleLabel {
    Class(usize),
    Irrelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternClass {
    /// In the training set and predicted correctly.
    Trained,
    /// Not trained on, oracle-labeled, predicted correctly.
    Generalized,
    /// Mispredicted, within the radius of a correctly predicted pattern of its class.
    Adversarial,
    /// Everything else.
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub dim: usize,
    pub adversarial_radius: usize,
    pub p_t: usize,
    pub p_g: usize,
    pub p_a: usize,
    pub p_r: usize,
    pub p_u: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<PatternClass>>,
}

impl PartitionReport {
    pub fn identity_holds(&self) -> bool {
        self.p_u == self.p_t + self.p_g + self.p_a + self.p_r && self.p_u == 1 << self.dim
    }

    pub fn identity_line(&self) -> String {
        format!(
            "{} = P_t+P_g+P_a+P_r ({}+{}+{}+{})",
            self.p_u, self.p_t, self.p_g, self.p_a, self.p_r
        )
    }
}

/// Partitions the whole space `{−1, +1}^n` using a total `oracle` labeling
/// (indexed in [`enumerate_space`] order).
///
/// A pattern the oracle assigns to class `c` is *trained* or *generalized*
/// when the model predicts `c`, depending on membership in `train_set`. A
/// mispredicted class-`c` pattern is *adversarial* when some correctly
/// predicted class-`c` pattern lies within `adversarial_radius` bit flips,
/// and *irrelevant* otherwise. Oracle-irrelevant patterns are irrelevant.
pub fn partition_space(
    model: &dyn PatternClassifier,
    train_set: &[(BipolarPattern, usize)],
    oracle: &[OracleLabel],
    adversarial_radius: usize,
    keep_labels: bool,
) -> Result<PartitionReport> {
    let size = oracle.len();
    if !size.is_power_of_two() {
        return Err(Error::Consistency(format!(
            "oracle labels {size} patterns, not a full 2^n space"
        )));
    }
    let dim = size.trailing_zeros() as usize;
    if dim > MAX_ENUMERABLE_DIM {
        return Err(Error::SpaceTooLarge(dim));
    }

    let mut trained = HashSet::new();
    for (p, label) in train_set {
        check_dim(dim, p.len())?;
        let k = crate::patterns::space_index(p)?;
        match oracle[k] {
            OracleLabel::Class(c) if c == *label => {
                trained.insert(k);
            }
            other => {
                return Err(Error::Consistency(format!(
                    "training pattern {k} has label {label} but oracle says {other:?}"
                )))
            }
        }
    }

    let mut correct = vec![false; size];
    for (k, x) in enumerate_space(dim)?.enumerate() {
        if let OracleLabel::Class(c) = oracle[k] {
            correct[k] = model.classify(&x)? == c;
        }
    }

    let near_correct = |k: usize, c: usize| {
        (1..=adversarial_radius.min(dim)).any(|r| {
            (0..dim).combinations(r).any(|bits| {
                let j = bits.iter().fold(k, |acc, &b| acc ^ (1 << b));
                correct[j] && oracle[j] == OracleLabel::Class(c)
            })
        })
    };

    let mut counts: HashMap<PatternClass, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(if keep_labels { size } else { 0 });
    for k in 0..size {
        let class = match oracle[k] {
            OracleLabel::Irrelevant => PatternClass::Irrelevant,
            OracleLabel::Class(_) if correct[k] && trained.contains(&k) => PatternClass::Trained,
            OracleLabel::Class(_) if correct[k] => PatternClass::Generalized,
            OracleLabel::Class(c) if near_correct(k, c) => PatternClass::Adversarial,
            OracleLabel::Class(_) => PatternClass::Irrelevant,
        };
        *counts.entry(class).or_default() += 1;
        if keep_labels {
            labels.push(class);
        }
    }
    let get = |c| counts.get(&c).copied().unwrap_or(0);
    Ok(PartitionReport {
        dim,
        adversarial_radius,
        p_t: get(PatternClass::Trained),
        p_g: get(PatternClass::Generalized),
        p_a: get(PatternClass::Adversarial),
        p_r: get(PatternClass::Irrelevant),
        p_u: size,
        labels: keep_labels.then_some(labels),
    })
}

/// Index transforms of a Hopfield weight matrix.
///
/// Permutations act as `W′_ij = W_{π(i)π(j)}` and states as `s′_i = s_{π(i)}`.
/// Sign flips act as `W′_ij = d_i d_j W_ij` with `d_i = −1` for flipped units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopfieldTransform {
    /// Permute rows and columns and relabel probes the same way.
    Relabel(Vec<usize>),
    /// Flip rows and columns and flip the same probe bits.
    Gauge(Vec<bool>),
    /// Permute rows and columns; probes are left as they are.
    Permute(Vec<usize>),
    /// Flip rows and columns; probes are left as they are.
    SignFlip(Vec<bool>),
    /// Flip rows only (the MLP-style one-sided flip).
    RowSignFlip(Vec<bool>),
}

impl HopfieldTransform {
    pub fn name(&self) -> &'static str {
        match self {
            HopfieldTransform::Relabel(_) => "relabel",
            HopfieldTransform::Gauge(_) => "gauge",
            HopfieldTransform::Permute(_) => "permute",
            HopfieldTransform::SignFlip(_) => "sign_flip",
            HopfieldTransform::RowSignFlip(_) => "row_sign_flip",
        }
    }

    /// Whether probes are transformed along with the net.
    pub fn is_exact_symmetry(&self) -> bool {
        matches!(self, HopfieldTransform::Relabel(_) | HopfieldTransform::Gauge(_))
    }

    fn width(&self) -> usize {
        match self {
            HopfieldTransform::Relabel(p) | HopfieldTransform::Permute(p) => p.len(),
            HopfieldTransform::Gauge(f)
            | HopfieldTransform::SignFlip(f)
            | HopfieldTransform::RowSignFlip(f) => f.len(),
        }
    }

    /// The transformed net; one-sided flips fail the symmetry invariant.
    pub fn apply_to_net(&self, net: &HopfieldNet) -> Result<HopfieldNet> {
        let n = net.dim();
        if self.width() != n {
            return Err(Error::InvalidTransform(format!(
                "{} transform of width {} on a net of dimension {n}",
                self.name(),
                self.width()
            )));
        }
        let d = |f: &[bool], i: usize| if f[i] { -1.0 } else { 1.0 };
        let mut w = vec![0.0; n * n];
        match self {
            HopfieldTransform::Relabel(p) | HopfieldTransform::Permute(p) => {
                validate_permutation(p)?;
                for i in 0..n {
                    for j in 0..n {
                        w[i * n + j] = net.weight(p[i], p[j]);
                    }
                }
            }
            HopfieldTransform::Gauge(f) | HopfieldTransform::SignFlip(f) => {
                for i in 0..n {
                    for j in 0..n {
                        w[i * n + j] = d(f, i) * d(f, j) * net.weight(i, j);
                    }
                }
            }
            HopfieldTransform::RowSignFlip(f) => {
                for i in 0..n {
                    for j in 0..n {
                        w[i * n + j] = d(f, i) * net.weight(i, j);
                    }
                }
            }
        }
        HopfieldNet::from_weights(n, w)
    }

    fn map_state(&self, s: &BipolarPattern) -> Result<BipolarPattern> {
        match self {
            HopfieldTransform::Relabel(p) => s.permuted(p),
            HopfieldTransform::Gauge(f) => BipolarPattern::new(
                s.bits()
                    .iter()
                    .zip(f)
                    .map(|(&b, &flip)| if flip { -b } else { b })
                    .collect(),
            ),
            _ => Ok(s.clone()),
        }
    }

    /// Visit order on the transformed net matching `order` on the original.
    fn map_order(&self, order: Vec<usize>, inv: &[usize]) -> Vec<usize> {
        match self {
            HopfieldTransform::Relabel(_) => order.into_iter().map(|v| inv[v]).collect(),
            _ => order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub transform: String,
    pub exact_symmetry: bool,
    pub agreements: usize,
    pub probes: usize,
    pub agreement_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfieldProbeReport {
    pub dim: usize,
    pub outcomes: Vec<ProbeOutcome>,
}

impl HopfieldProbeReport {
    pub fn exact_symmetries_agree(&self) -> bool {
        self.outcomes
            .iter()
            .filter(|o| o.exact_symmetry)
            .all(|o| o.agreements == o.probes)
    }

    pub fn generic_disagreements(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| !o.exact_symmetry && o.agreements < o.probes)
            .count()
    }
}

/// Compares recall fixed points of `net` and each transformed net.
///
/// Probe `p` is recalled with visit orders seeded by
/// `derive_indexed(seed, p)` on both nets, with orders relabeled for
/// [`HopfieldTransform::Relabel`]. For exact symmetries the transformed
/// fixed point must equal the transformed original fixed point; for generic
/// transforms it must equal the original fixed point itself.
pub fn hopfield_equioutput_probe(
    net: &HopfieldNet,
    transforms: &[HopfieldTransform],
    probes: &[BipolarPattern],
    max_sweeps: usize,
    seed: u64,
) -> Result<HopfieldProbeReport> {
    let n = net.dim();
    let baseline: Vec<BipolarPattern> = probes
        .iter()
        .enumerate()
        .map(|(p, probe)| Ok(net.recall(probe, max_sweeps, seed::derive_indexed(seed, p as u64))?.final_state))
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::with_capacity(transforms.len());
    for t in transforms {
        let transformed = t.apply_to_net(net)?;
        let inv = match t {
            HopfieldTransform::Relabel(p) => invert_permutation(p),
            _ => Vec::new(),
        };
        let mut agreements = 0;
        for (p, (probe, base)) in probes.iter().zip(&baseline).enumerate() {
            let mut orders = VisitOrders::new(n, seed::derive_indexed(seed, p as u64));
            let mut next = || t.map_order(orders.next_order(), &inv);
            let fixed = transformed
                .recall_with_orders(&t.map_state(probe)?, max_sweeps, &mut next)?
                .final_state;
            if fixed == t.map_state(base)? {
                agreements += 1;
            }
        }
        outcomes.push(ProbeOutcome {
            transform: t.name().to_string(),
            exact_symmetry: t.is_exact_symmetry(),
            agreements,
            probes: probes.len(),
            agreement_fraction: if probes.is_empty() {
                1.0
            } else {
                agreements as f64 / probes.len() as f64
            },
        });
    }
    Ok(HopfieldProbeReport { dim: n, outcomes })
}
