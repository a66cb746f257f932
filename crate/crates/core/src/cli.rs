//! Command-line harness.
//!
//! Every subcommand reads one [`ExperimentConfig`]: built-in defaults, then an
//! optional TOML file, then command-line flags. The whole config is validated
//! and every artifact is computed in memory before the output directory is
//! touched, so a failing run leaves nothing behind.
//!
//! Component seeds come from [`seed::derive_seed`] with the names `split`,
//! `mlp-init`, `mlp-sgd`, `hopfield`, `attack`, `transfer`, `equioutput`,
//! `partition` and `landscape`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::adversarial::{generate_adversarial_set, transfer_experiment, TransferConfig};
use crate::error::{Error, Result};
use crate::hopfield::{iterative_train, HopfieldNet, IterTrainConfig};
use crate::landscape::{basin_depth_csv, basin_depth_report, geodesic_grid, mean_gap};
use crate::mlp::{one_hot, Mlp, Sample, TrainConfig};
use crate::patterns::{
    class_prototypes, encode_idx, enumerate_space, flip_bits, load_idx, BipolarPattern, GrayImage, PatternSet,
    MAX_ENUMERABLE_DIM,
};
use crate::seed;
use crate::weightspace::{
    ascendance_trace, default_probes, hopfield_equioutput_probe, majority_oracle, partition_space, replica_count,
    verify_replicas, ConstantClassifier, HopfieldProbeReport, HopfieldTransform, LookupClassifier, OracleLabel,
    PartitionReport, PatternClassifier, ReplicaReport, MAX_ENUMERATED_REPLICAS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Use all cores for the parallel inner loops instead of one thread.
    pub parallel: bool,
    pub data: DataConfig,
    pub mlp: MlpConfig,
    pub hopfield: HopfieldConfig,
    pub attack: AttackConfig,
    pub equioutput: EquioutputConfig,
    pub partition: PartitionConfig,
    pub landscape: LandscapeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            parallel: false,
            data: DataConfig::default(),
            mlp: MlpConfig::default(),
            hopfield: HopfieldConfig::default(),
            attack: AttackConfig::default(),
            equioutput: EquioutputConfig::default(),
            partition: PartitionConfig::default(),
            landscape: LandscapeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
    /// The data set is shuffled once, then split into these two disjoint parts.
    pub train_count: usize,
    pub test_count: usize,
    /// Binarization threshold for everything fed to the Hopfield net.
    pub threshold: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            images: PathBuf::from("data/mnist5k/images-idx3-ubyte"),
            labels: PathBuf::from("data/mnist5k/labels-idx1-ubyte"),
            train_count: 2000,
            test_count: 2000,
            threshold: crate::patterns::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Layer whose weight order is traced per epoch.
    pub ascendance_layer: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            layers: vec![784, 64, 10],
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            ascendance_layer: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PatternSource {
    /// Per-class majority prototypes of the training images.
    Prototypes,
    /// `random_count` uniform random patterns of dimension `random_dim`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopfieldConfig {
    pub patterns: PatternSource,
    pub random_dim: usize,
    pub random_count: usize,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub neighbors_per_pattern: Option<usize>,
    pub recall_max_sweeps: usize,
    pub reject_threshold: Option<usize>,
}

impl Default for HopfieldConfig {
    fn default() -> Self {
        let t = IterTrainConfig::default();
        Self {
            patterns: PatternSource::Prototypes,
            random_dim: 64,
            random_count: 20,
            learning_rate: t.learning_rate,
            max_iters: t.max_iters,
            neighbors_per_pattern: t.neighbors_per_pattern,
            recall_max_sweeps: 100,
            reject_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub count: usize,
    /// Also write the perturbed images as an IDX pair.
    pub dump_idx: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: crate::adversarial::DEFAULT_EPSILON,
            count: crate::adversarial::DEFAULT_COUNT,
            dump_idx: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquioutputConfig {
    pub layers: Vec<usize>,
    pub probes: usize,
    pub tolerance: f64,
    pub hopfield_dim: usize,
    pub hopfield_patterns: usize,
    pub hopfield_probes: usize,
    /// Bits flipped in a stored pattern to make each Hopfield probe.
    pub probe_noise_bits: usize,
}

impl Default for EquioutputConfig {
    fn default() -> Self {
        Self {
            layers: vec![2, 3, 2],
            probes: 100,
            tolerance: crate::weightspace::EQUIOUTPUT_TOL,
            hopfield_dim: 32,
            hopfield_patterns: 3,
            hopfield_probes: 30,
            probe_noise_bits: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PartitionModel {
    /// Returns the oracle class of every pattern.
    Memorizer,
    /// Always predicts `constant_class`.
    Constant,
    /// An MLP trained on the training patterns.
    Trained,
}

impl PartitionModel {
    pub fn name(self) -> &'static str {
        match self {
            PartitionModel::Memorizer => "memorizer",
            PartitionModel::Constant => "constant",
            PartitionModel::Trained => "trained",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub dim: usize,
    pub radius: usize,
    pub models: Vec<PartitionModel>,
    pub constant_class: usize,
    pub train_count: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            radius: 1,
            models: vec![PartitionModel::Memorizer, PartitionModel::Constant, PartitionModel::Trained],
            constant_class: 1,
            train_count: 6,
            hidden: 4,
            learning_rate: 0.1,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub dim: usize,
    pub count: usize,
    pub resolution: usize,
    /// Neighbors sampled per pattern for basin depths when `dim > 64`.
    pub samples_per_pattern: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            count: 20,
            resolution: 17,
            samples_per_pattern: 64,
        }
    }
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn require(ok: bool, path: &str, msg: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(invalid(path, msg))
    }
}

fn require_file(path: &Path, key: &str) -> Result<()> {
    require(path.is_file(), key, format_args!("{} does not exist", path.display()))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn mlp_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.mlp.learning_rate,
            epochs: self.mlp.epochs,
            batch_size: self.mlp.batch_size,
            seed: seed::derive_seed(self.seed, "mlp-sgd"),
        }
    }

    pub fn hopfield_train_config(&self) -> IterTrainConfig {
        IterTrainConfig {
            learning_rate: self.hopfield.learning_rate,
            max_iters: self.hopfield.max_iters,
            neighbors_per_pattern: self.hopfield.neighbors_per_pattern,
            seed: seed::derive_seed(self.seed, "hopfield"),
        }
    }

    /// Checks every field, and the data files when `needs_data`.
    pub fn validate(&self, needs_data: bool) -> Result<()> {
        require(!self.output_dir.as_os_str().is_empty(), "output_dir", "must not be empty")?;

        let d = &self.data;
        if needs_data {
            require_file(&d.images, "data.images")?;
            require_file(&d.labels, "data.labels")?;
        }
        require(d.train_count > 0, "data.train_count", "must be positive")?;
        require(d.test_count > 0, "data.test_count", "must be positive")?;
        require((0.0..=1.0).contains(&d.threshold), "data.threshold", "must lie in [0, 1]")?;

        let m = &self.mlp;
        require(m.layers.len() >= 2, "mlp.layers", "needs at least an input and an output size")?;
        require(m.layers.iter().all(|&s| s > 0), "mlp.layers", "sizes must be positive")?;
        self.mlp_train_config().validate().map_err(|e| invalid("mlp", e))?;
        require(
            m.ascendance_layer < m.layers.len() - 1,
            "mlp.ascendance_layer",
            format_args!("the net has {} weight layers", m.layers.len() - 1),
        )?;

        let h = &self.hopfield;
        self.hopfield_train_config().validate().map_err(|e| invalid("hopfield", e))?;
        require(h.random_dim > 0, "hopfield.random_dim", "must be positive")?;
        require(h.random_count > 0, "hopfield.random_count", "must be positive")?;
        require(h.recall_max_sweeps > 0, "hopfield.recall_max_sweeps", "must be positive")?;

        let a = &self.attack;
        require(a.epsilon.is_finite() && a.epsilon >= 0.0, "attack.epsilon", "must be finite and nonnegative")?;
        require(a.count > 0, "attack.count", "must be at least 1")?;

        let e = &self.equioutput;
        require(e.layers.len() >= 3, "equioutput.layers", "needs at least one hidden layer")?;
        require(e.layers.iter().all(|&s| s > 0), "equioutput.layers", "sizes must be positive")?;
        let replicas = replica_count(&e.layers[1..e.layers.len() - 1]).map_err(|err| invalid("equioutput.layers", err))?;
        require(
            replicas <= MAX_ENUMERATED_REPLICAS,
            "equioutput.layers",
            format_args!("{replicas} replicas exceed the enumeration limit {MAX_ENUMERATED_REPLICAS}"),
        )?;
        require(e.probes > 0, "equioutput.probes", "must be positive")?;
        require(e.tolerance.is_finite() && e.tolerance > 0.0, "equioutput.tolerance", "must be positive")?;
        require(e.hopfield_dim >= 2, "equioutput.hopfield_dim", "must be at least 2")?;
        require(e.hopfield_patterns > 0, "equioutput.hopfield_patterns", "must be positive")?;
        require(e.hopfield_probes > 0, "equioutput.hopfield_probes", "must be positive")?;
        require(
            e.probe_noise_bits <= e.hopfield_dim,
            "equioutput.probe_noise_bits",
            "cannot exceed equioutput.hopfield_dim",
        )?;

        let p = &self.partition;
        require(
            (1..=MAX_ENUMERABLE_DIM).contains(&p.dim),
            "partition.dim",
            format_args!("must lie in 1..={MAX_ENUMERABLE_DIM}"),
        )?;
        require(!p.models.is_empty(), "partition.models", "must name at least one model")?;
        require(p.constant_class < 2, "partition.constant_class", "the majority oracle has classes 0 and 1")?;
        let labeled = majority_oracle(p.dim)?.iter().filter(|o| **o != OracleLabel::Irrelevant).count();
        require(
            p.train_count <= labeled,
            "partition.train_count",
            format_args!("only {labeled} patterns carry a class"),
        )?;
        require(p.hidden > 0, "partition.hidden", "must be positive")?;
        require(
            p.learning_rate.is_finite() && p.learning_rate >= 0.0,
            "partition.learning_rate",
            "must be finite and nonnegative",
        )?;

        let l = &self.landscape;
        require(l.count >= 2, "landscape.count", "two stored patterns are needed as anchors")?;
        require(l.resolution >= 2, "landscape.resolution", "must be at least 2")?;
        require(
            l.resolution - 1 <= l.dim,
            "landscape.resolution",
            format_args!("needs {} extra flips but landscape.dim is {}", l.resolution - 1, l.dim),
        )?;
        require(
            l.dim <= crate::landscape::EXHAUSTIVE_NEIGHBOR_DIM || l.samples_per_pattern > 0,
            "landscape.samples_per_pattern",
            "must be positive for large dimensions",
        )?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "weightscape", version, about = "MLP and Hopfield weight-space experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Use all cores for parallel inner loops.
    #[arg(long, global = true)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Train the MLP; writes mlp.model, mlp_history.csv, ascendance.csv, mlp_eval.json.
    TrainMlp {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Hebbian then iterative training; writes hopfield.net, hopfield_iterations.csv, hopfield_patterns.json.
    TrainHopfield {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        patterns: Option<PatternSource>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// FGSM records transferred to the prototype net; writes transfer_report.json.
    Attack {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        /// Also write adversarial-images-idx3-ubyte and adversarial-labels-idx1-ubyte.
        #[arg(long)]
        dump_idx: bool,
        /// Use a saved MLP instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Use a saved Hopfield net instead of training one on the prototypes.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Replica enumeration and the Hopfield probe; writes equioutput.json.
    Equioutput {
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        #[arg(long)]
        probes: Option<usize>,
    },
    /// Pattern-space partition of a toy space; writes partition.json.
    Partition {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        radius: Option<usize>,
    },
    /// Energy surfaces before and after iterative training; writes landscape_*.csv/json and basin_depth_*.csv.
    Landscape {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
    },
}

impl Command {
    fn needs_data(&self) -> bool {
        matches!(self, Command::TrainMlp { .. } | Command::Attack { .. })
            || matches!(self, Command::TrainHopfield { patterns, .. } if *patterns != Some(PatternSource::Random))
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_data(cfg: &mut DataConfig, a: &DataArgs) {
    set(&mut cfg.images, a.images.clone());
    set(&mut cfg.labels, a.labels.clone());
    set(&mut cfg.train_count, a.train_count);
    set(&mut cfg.test_count, a.test_count);
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.seed, cli.global.seed);
    set(&mut cfg.output_dir, cli.global.output_dir.clone());
    cfg.parallel |= cli.global.parallel;
    match &cli.command {
        Command::TrainMlp { data, layers, learning_rate, epochs, batch_size } => {
            apply_data(&mut cfg.data, data);
            set(&mut cfg.mlp.layers, layers.clone());
            set(&mut cfg.mlp.learning_rate, *learning_rate);
            set(&mut cfg.mlp.epochs, *epochs);
            set(&mut cfg.mlp.batch_size, *batch_size);
        }
        Command::TrainHopfield { data, patterns, eta, max_iters } => {
            apply_data(&mut cfg.data, data);
            set(&mut cfg.hopfield.patterns, *patterns);
            set(&mut cfg.hopfield.learning_rate, *eta);
            set(&mut cfg.hopfield.max_iters, *max_iters);
        }
        Command::Attack { data, epsilon, count, dump_idx, .. } => {
            apply_data(&mut cfg.data, data);
            set(&mut cfg.attack.epsilon, *epsilon);
            set(&mut cfg.attack.count, *count);
            cfg.attack.dump_idx |= *dump_idx;
        }
        Command::Equioutput { layers, probes } => {
            set(&mut cfg.equioutput.layers, layers.clone());
            set(&mut cfg.equioutput.probes, *probes);
        }
        Command::Partition { dim, radius } => {
            set(&mut cfg.partition.dim, *dim);
            set(&mut cfg.partition.radius, *radius);
        }
        Command::Landscape { dim, count, resolution } => {
            set(&mut cfg.landscape.dim, *dim);
            set(&mut cfg.landscape.count, *count);
            set(&mut cfg.landscape.resolution, *resolution);
        }
    }
    Ok(cfg)
}

/// Files to write plus human-readable summary lines.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.artifacts.push((name.to_string(), contents.into()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }
}

/// Resolves, validates and runs a command; returns the summary lines.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let cfg = resolve_config(cli)?;
    cfg.validate(cli.command.needs_data())?;
    if let Command::Attack { model, net, .. } = &cli.command {
        for (path, key) in [(model, "--model"), (net, "--net")] {
            if let Some(p) = path {
                require_file(p, key)?;
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(if cfg.parallel { 0 } else { 1 })
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| execute(&cli.command, &cfg))?;

    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    for (name, contents) in &outcome.artifacts {
        let path = cfg.output_dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    }
    Ok(outcome.summary)
}

/// Computes a command's artifacts without writing anything.
pub fn execute(command: &Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match command {
        Command::TrainMlp { .. } => cmd_train_mlp(cfg),
        Command::TrainHopfield { .. } => cmd_train_hopfield(cfg),
        Command::Attack { model, net, .. } => cmd_attack(cfg, model.as_deref(), net.as_deref()),
        Command::Equioutput { .. } => cmd_equioutput(cfg),
        Command::Partition { .. } => cmd_partition(cfg),
        Command::Landscape { .. } => cmd_landscape(cfg),
    }
}

/// Loads the data set, shuffles it with the `split` seed and returns
/// disjoint (train, test) parts.
pub fn load_split(cfg: &ExperimentConfig) -> Result<(Vec<GrayImage>, Vec<GrayImage>)> {
    let mut all = load_idx(&cfg.data.images, &cfg.data.labels)?;
    let need = cfg.data.train_count + cfg.data.test_count;
    require(
        all.len() >= need,
        "data",
        format_args!(
            "{} holds {} images but train_count + test_count = {need}",
            cfg.data.images.display(),
            all.len()
        ),
    )?;
    all.shuffle(&mut seed::rng(seed::derive_seed(cfg.seed, "split")));
    all.truncate(need);
    let test = all.split_off(cfg.data.train_count);
    Ok((all, test))
}

fn to_samples(images: &[GrayImage], m: &Mlp) -> Result<Vec<Sample>> {
    let classes = m.output_dim();
    images
        .iter()
        .map(|img| {
            require(
                usize::from(img.label()) < classes,
                "mlp.layers",
                format_args!("label {} needs more than {classes} outputs", img.label()),
            )?;
            crate::error::check_dim(m.input_dim(), img.len())?;
            Ok(Sample::from_image(img, classes))
        })
        .collect()
}

/// Trains the configured MLP on `train`, tracing the ascendance layer.
pub fn train_mlp(
    cfg: &ExperimentConfig,
    train: &[GrayImage],
) -> Result<(Mlp, crate::mlp::TrainHistory, crate::weightspace::AscendanceTrace)> {
    let mut m = Mlp::init(&cfg.mlp.layers, seed::derive_seed(cfg.seed, "mlp-init"))?;
    let samples = to_samples(train, &m)?;
    let (history, trace) = ascendance_trace(&mut m, &samples, &cfg.mlp_train_config(), cfg.mlp.ascendance_layer)?;
    Ok((m, history, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEval {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_count: usize,
    pub test_count: usize,
}

fn cmd_train_mlp(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (train, test) = load_split(cfg)?;
    let (m, history, trace) = train_mlp(cfg, &train)?;
    let eval = MlpEval {
        train_accuracy: m.accuracy(&to_samples(&train, &m)?)?,
        test_accuracy: m.accuracy(&to_samples(&test, &m)?)?,
        train_count: train.len(),
        test_count: test.len(),
    };
    let mut out = Outcome::default();
    out.add("mlp.model", m.to_text());
    out.add("mlp_history.csv", history.to_csv());
    out.add("ascendance.csv", trace.to_csv());
    out.add_json("mlp_eval.json", &eval)?;
    out.summary.push(format!(
        "trained {:?} for {} epochs: train accuracy {:.4}, held-out accuracy {:.4}",
        cfg.mlp.layers, cfg.mlp.epochs, eval.train_accuracy, eval.test_accuracy
    ));
    Ok(out)
}

/// The stored patterns for the Hopfield commands.
pub fn hopfield_patterns(cfg: &ExperimentConfig, train: Option<&[GrayImage]>) -> Result<PatternSet> {
    match (cfg.hopfield.patterns, train) {
        (PatternSource::Random, _) => {
            let mut rng = seed::rng(seed::derive_seed(cfg.seed, "hopfield-patterns"));
            PatternSet::random(cfg.hopfield.random_dim, cfg.hopfield.random_count, &mut rng)
        }
        (PatternSource::Prototypes, Some(train)) => class_prototypes(train, cfg.data.threshold),
        (PatternSource::Prototypes, None) => Err(Error::Config("hopfield.patterns: prototypes need training images".into())),
    }
}

fn cmd_train_hopfield(cfg: &ExperimentConfig) -> Result<Outcome> {
    let train = match cfg.hopfield.patterns {
        PatternSource::Prototypes => Some(load_split(cfg)?.0),
        PatternSource::Random => None,
    };
    let ps = hopfield_patterns(cfg, train.as_deref())?;
    let (net, log) = iterative_train(&ps, &cfg.hopfield_train_config())?;
    let mut out = Outcome::default();
    out.add("hopfield.net", net.to_text());
    out.add("hopfield_iterations.csv", log.to_csv());
    out.add_json("hopfield_patterns.json", &ps)?;
    out.summary.push(format!(
        "{} patterns of dimension {}: {} stable under Hebbian weights, {} after {} iterations",
        ps.len(),
        ps.dim(),
        log.initial_stable,
        log.final_stable(),
        log.iterations()
    ));
    Ok(out)
}

fn cmd_attack(cfg: &ExperimentConfig, model: Option<&Path>, net: Option<&Path>) -> Result<Outcome> {
    let (train, test) = load_split(cfg)?;
    let m = match model {
        Some(path) => Mlp::load(path)?,
        None => train_mlp(cfg, &train)?.0,
    };
    let prototypes = class_prototypes(&train, cfg.data.threshold)?;
    let net = match net {
        Some(path) => HopfieldNet::load(path)?,
        None => iterative_train(&prototypes, &cfg.hopfield_train_config())?.0,
    };

    let mut records = generate_adversarial_set(
        &m,
        &test,
        cfg.attack.count,
        cfg.attack.epsilon,
        seed::derive_seed(cfg.seed, "attack"),
    )?;
    require(
        !records.is_empty(),
        "attack",
        "no test image could be attacked successfully; raise attack.epsilon",
    )?;
    let transfer_cfg = TransferConfig {
        threshold: cfg.data.threshold,
        reject_threshold: cfg.hopfield.reject_threshold,
        max_sweeps: cfg.hopfield.recall_max_sweeps,
        seed: seed::derive_seed(cfg.seed, "transfer"),
    };
    let report = transfer_experiment(&mut records, &net, &prototypes, cfg.attack.count, &transfer_cfg)?;

    let mut out = Outcome::default();
    out.add_json("transfer_report.json", &report)?;
    if cfg.attack.dump_idx {
        let perturbed: Vec<GrayImage> = records.iter().map(|r| r.perturbed.clone()).collect();
        let dim = perturbed[0].len();
        let side = (1..=dim).find(|s| s * s >= dim).unwrap_or(1);
        let (rows, cols) = if side * side == dim { (side, side) } else { (1, dim) };
        let (images, labels) = encode_idx(&perturbed, rows, cols)?;
        out.add("adversarial-images-idx3-ubyte", images);
        out.add("adversarial-labels-idx1-ubyte", labels);
    }
    out.summary.push(report.summary());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedTransform {
    pub transform: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquioutputReport {
    pub replicas: ReplicaReport,
    pub hopfield_probe: HopfieldProbeReport,
    pub rejected_transforms: Vec<RejectedTransform>,
}

/// A random net with small random biases so bias handling is exercised.
pub fn random_mlp(layers: &[usize], seed_: u64) -> Result<Mlp> {
    let mut m = Mlp::init(layers, seed_)?;
    let mut rng = seed::rng(seed::derive_indexed(seed_, 1));
    for layer in m.layers_mut() {
        for b in layer.bias_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    Ok(m)
}

fn random_permutation(n: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn random_flips(n: usize, rng: &mut seed::Rng) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

/// Noisy copies of `ps`, `noise_bits` flipped each, cycling through the patterns.
pub fn noisy_probes(ps: &PatternSet, count: usize, noise_bits: usize, rng: &mut seed::Rng) -> Result<Vec<BipolarPattern>> {
    (0..count)
        .map(|i| {
            let base = &ps.patterns()[i % ps.len()];
            let bits = rand::seq::index::sample(rng, ps.dim(), noise_bits).into_iter().collect();
            flip_bits(base, &bits)
        })
        .collect()
}

/// Relabel, gauge, permute and sign-flip transforms on a net of dimension `n`.
pub fn probe_transforms(n: usize, rng: &mut seed::Rng) -> Vec<HopfieldTransform> {
    vec![
        HopfieldTransform::Relabel(random_permutation(n, rng)),
        HopfieldTransform::Gauge(random_flips(n, rng)),
        HopfieldTransform::Permute(random_permutation(n, rng)),
        HopfieldTransform::SignFlip(random_flips(n, rng)),
    ]
}

fn cmd_equioutput(cfg: &ExperimentConfig) -> Result<Outcome> {
    let e = &cfg.equioutput;
    let base = seed::derive_seed(cfg.seed, "equioutput");
    let m = random_mlp(&e.layers, base)?;
    let probes = default_probes(m.input_dim(), e.probes, seed::derive_indexed(base, 2));
    let replicas = verify_replicas(&m, &probes, e.tolerance)?;

    let mut rng = seed::rng(seed::derive_indexed(base, 3));
    let ps = PatternSet::random(e.hopfield_dim, e.hopfield_patterns, &mut rng)?;
    let net = HopfieldNet::hebbian(&ps)?;
    let hopfield_probes = noisy_probes(&ps, e.hopfield_probes, e.probe_noise_bits, &mut rng)?;
    let transforms = probe_transforms(e.hopfield_dim, &mut rng);
    let probe = hopfield_equioutput_probe(
        &net,
        &transforms,
        &hopfield_probes,
        cfg.hopfield.recall_max_sweeps,
        seed::derive_indexed(base, 4),
    )?;
    let mut one_row = vec![false; e.hopfield_dim];
    one_row[0] = true;
    let row_flip = HopfieldTransform::RowSignFlip(one_row);
    let rejected_transforms = match row_flip.apply_to_net(&net) {
        Ok(_) => Vec::new(),
        Err(err) => vec![RejectedTransform { transform: row_flip.name().into(), error: err.to_string() }],
    };

    let mut out = Outcome::default();
    out.summary.push(replicas.summary());
    for o in &probe.outcomes {
        out.summary.push(format!(
            "hopfield {}{}: {}/{} recalls agree",
            o.transform,
            if o.exact_symmetry { " (exact symmetry)" } else { "" },
            o.agreements,
            o.probes
        ));
    }
    for r in &rejected_transforms {
        out.summary.push(format!("hopfield {}: rejected ({})", r.transform, r.error));
    }
    out.add_json("equioutput.json", &EquioutputReport { replicas, hopfield_probe: probe, rejected_transforms })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPartition {
    pub model: PartitionModel,
    pub report: PartitionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOutput {
    pub dim: usize,
    pub adversarial_radius: usize,
    /// Training patterns as indices in enumeration order.
    pub train_indices: Vec<usize>,
    pub oracle: Vec<OracleLabel>,
    pub models: Vec<ModelPartition>,
}

/// A seeded training set of class-labeled patterns from the majority oracle.
pub fn partition_train_set(cfg: &PartitionConfig, seed_: u64) -> Result<(Vec<OracleLabel>, Vec<usize>)> {
    let oracle = majority_oracle(cfg.dim)?;
    let mut labeled: Vec<usize> = (0..oracle.len()).filter(|&k| oracle[k] != OracleLabel::Irrelevant).collect();
    labeled.shuffle(&mut seed::rng(seed_));
    labeled.truncate(cfg.train_count);
    labeled.sort_unstable();
    Ok((oracle, labeled))
}

fn cmd_partition(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.partition;
    let base = seed::derive_seed(cfg.seed, "partition");
    let (oracle, train_indices) = partition_train_set(p, seed::derive_indexed(base, 0))?;
    let space: Vec<BipolarPattern> = enumerate_space(p.dim)?.collect();
    let class_of = |k: usize| match oracle[k] {
        OracleLabel::Class(c) => c,
        OracleLabel::Irrelevant => unreachable!("training patterns carry a class"),
    };
    let train: Vec<(BipolarPattern, usize)> = train_indices.iter().map(|&k| (space[k].clone(), class_of(k))).collect();

    let mut out = Outcome::default();
    let mut models = Vec::with_capacity(p.models.len());
    for &kind in &p.models {
        let model: Box<dyn PatternClassifier> = match kind {
            PartitionModel::Memorizer => Box::new(LookupClassifier::memorizing(&oracle, 0)?),
            PartitionModel::Constant => Box::new(ConstantClassifier(p.constant_class)),
            PartitionModel::Trained => {
                let mut m = Mlp::init(&[p.dim, p.hidden, 2], seed::derive_indexed(base, 1))?;
                let samples: Vec<Sample> =
                    train.iter().map(|(x, c)| Sample::new(x.to_f64(), one_hot(*c, 2))).collect();
                if !samples.is_empty() {
                    let tc = TrainConfig {
                        learning_rate: p.learning_rate,
                        epochs: p.epochs,
                        batch_size: samples.len().min(4),
                        seed: seed::derive_indexed(base, 2),
                    };
                    m.train(&samples, &tc, &mut ())?;
                }
                Box::new(m)
            }
        };
        let report = partition_space(model.as_ref(), &train, &oracle, p.radius, true)?;
        out.summary.push(format!("{}: {}", kind.name(), report.identity_line()));
        models.push(ModelPartition { model: kind, report });
    }
    out.add_json(
        "partition.json",
        &PartitionOutput { dim: p.dim, adversarial_radius: p.radius, train_indices, oracle, models },
    )?;
    Ok(out)
}

fn cmd_landscape(cfg: &ExperimentConfig) -> Result<Outcome> {
    let l = &cfg.landscape;
    let base = seed::derive_seed(cfg.seed, "landscape");
    let ps = PatternSet::random(l.dim, l.count, &mut seed::rng(seed::derive_indexed(base, 0)))?;
    let hebbian = HopfieldNet::hebbian(&ps)?;
    let train_cfg = IterTrainConfig { seed: seed::derive_indexed(base, 1), ..cfg.hopfield_train_config() };
    let (trained, log) = iterative_train(&ps, &train_cfg)?;

    let grid_seed = seed::derive_indexed(base, 2);
    let depth_seed = seed::derive_indexed(base, 3);
    let (a, b) = (&ps.patterns()[0], &ps.patterns()[1]);
    let mut out = Outcome::default();
    let mut gaps = Vec::new();
    for (tag, net) in [("before", &hebbian), ("after", &trained)] {
        let grid = geodesic_grid(net, a, b, l.resolution, grid_seed)?.with_anchor_ids("pattern 0", "pattern 1");
        out.add(&format!("landscape_{tag}.csv"), grid.to_csv());
        let mut meta = grid.metadata_json()?;
        meta.push('\n');
        out.add(&format!("landscape_{tag}.json"), meta);
        let depth = basin_depth_report(net, &ps, l.samples_per_pattern, depth_seed)?;
        out.add(&format!("basin_depth_{tag}.csv"), basin_depth_csv(&depth));
        gaps.push((mean_gap(&depth), net.stable_count(&ps)?));
    }
    out.summary.push(format!(
        "{} patterns of dimension {}: before training {} stable, mean gap {:.4}; after {} iterations {} stable, mean gap {:.4}",
        ps.len(),
        ps.dim(),
        gaps[0].1,
        gaps[0].0,
        log.iterations(),
        gaps[1].1,
        gaps[1].0
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("weightscape").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_validate_without_data() {
        ExperimentConfig::default().validate(false).unwrap();
    }

    #[test]
    fn precedence_is_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "seed = 5\n[mlp]\nepochs = 3\nbatch_size = 4\n").unwrap();
        let c = cli(&["--config", path.to_str().unwrap(), "train-mlp", "--epochs", "7"]);
        let cfg = resolve_config(&c).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.mlp.epochs, 7);
        assert_eq!(cfg.mlp.batch_size, 4);
        assert_eq!(cfg.mlp.learning_rate, MlpConfig::default().learning_rate);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_names_the_failing_key() {
        let mut cfg = ExperimentConfig::default();
        cfg.mlp.layers = vec![3];
        let msg = cfg.validate(false).unwrap_err().to_string();
        assert!(msg.contains("mlp.layers"), "{msg}");

        let mut cfg = ExperimentConfig::default();
        cfg.landscape.resolution = 100;
        assert!(cfg.validate(false).unwrap_err().to_string().contains("landscape.resolution"));

        let mut cfg = ExperimentConfig::default();
        cfg.data.images = PathBuf::from("/nonexistent/images");
        let msg = cfg.validate(true).unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/images"), "{msg}");
    }

    #[test]
    fn random_hopfield_source_needs_no_data() {
        let c = cli(&["train-hopfield", "--patterns", "random"]);
        assert!(!c.command.needs_data());
        assert!(cli(&["train-hopfield"]).command.needs_data());
        assert!(!cli(&["partition"]).command.needs_data());
    }

    #[test]
    fn partition_command_prints_identity_lines() {
        let cfg = ExperimentConfig::default();
        let out = execute(&cli(&["partition"]).command, &cfg).unwrap();
        assert_eq!(out.summary.len(), 3);
        for line in &out.summary {
            assert!(line.contains("16 = P_t+P_g+P_a+P_r"), "{line}");
        }
        assert_eq!(out.artifacts[0].0, "partition.json");
    }

    #[test]
    fn equioutput_command_reports_all_replicas() {
        let cfg = ExperimentConfig::default();
        let out = execute(&cli(&["equioutput"]).command, &cfg).unwrap();
        assert!(out.summary[0].starts_with("48/48 transforms equioutput"), "{}", out.summary[0]);
        assert!(out.summary.iter().any(|l| l.contains("rejected")));
    }
}
