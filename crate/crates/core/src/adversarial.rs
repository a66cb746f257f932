//! FGSM attacks on the MLP and their transfer to the associative memory.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hopfield::{recall_classify, HopfieldNet, RecallLabel};
use crate::mlp::{Mlp, Sample};
use crate::patterns::{binarize, hamming, GrayImage, PatternSet, DEFAULT_THRESHOLD};
use crate::seed;

pub const DEFAULT_EPSILON: f64 = 0.25;
pub const DEFAULT_COUNT: usize = 40;

fn sign_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clip_[0,1](x + ε · sign(∂ rms_loss / ∂x))` for the image's true label.
pub fn fgsm(m: &Mlp, img: &GrayImage, epsilon: f64) -> Result<GrayImage> {
    check_dim(m.input_dim(), img.len())?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let sample = Sample::from_image(img, m.output_dim());
    let grad = m.input_gradient(&sample)?;
    let pixels = img
        .pixels()
        .iter()
        .zip(&grad)
        .map(|(&x, &g)| within_budget(x, (x + epsilon * sign_or_zero(g)).clamp(0.0, 1.0), epsilon))
        .collect();
    GrayImage::new(pixels, img.label())
}

// Rounding in `x + eps` can overshoot the budget by an ulp; walk back toward `x`.
fn within_budget(x: f64, mut p: f64, epsilon: f64) -> f64 {
    while (p - x).abs() > epsilon {
        p = if p > x { p.next_down() } else { p.next_up() };
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRecord {
    /// Position of the original image in the scanned data set.
    pub source_index: usize,
    pub original: GrayImage,
    pub perturbed: GrayImage,
    pub epsilon: f64,
    pub true_label: u8,
    pub mlp_label_clean: u8,
    pub mlp_label_adv: u8,
    /// Filled in by [`transfer_experiment`].
    pub hopfield_label_adv: Option<RecallLabel>,
    pub hopfield_label_clean: Option<RecallLabel>,
}

impl AdversarialRecord {
    pub fn linf(&self) -> f64 {
        self.original
            .pixels()
            .iter()
            .zip(self.perturbed.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Scans `data` in a seeded random order and keeps successful FGSM attacks on
/// correctly classified images, stopping after `n` or when the data runs out.
pub fn generate_adversarial_set(
    m: &Mlp,
    data: &[GrayImage],
    n: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<AdversarialRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed));

    let mut records = Vec::with_capacity(n);
    for idx in order {
        if records.len() == n {
            break;
        }
        let img = &data[idx];
        let clean = m.predict(img.pixels())?;
        if clean != usize::from(img.label()) {
            continue;
        }
        let perturbed = fgsm(m, img, epsilon)?;
        let adv = m.predict(perturbed.pixels())?;
        if adv == clean {
            continue;
        }
        records.push(AdversarialRecord {
            source_index: idx,
            original: img.clone(),
            perturbed,
            epsilon,
            true_label: img.label(),
            mlp_label_clean: clean as u8,
            mlp_label_adv: adv as u8,
            hopfield_label_adv: None,
            hopfield_label_clean: None,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    /// Binarization threshold for images entering the Hopfield net.
    pub threshold: f64,
    /// Reject a fixed point farther than this from every prototype.
    pub reject_threshold: Option<usize>,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            reject_threshold: None,
            max_sweeps: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub source_index: usize,
    pub true_label: u8,
    pub mlp_label_clean: u8,
    pub mlp_label_adv: u8,
    pub hopfield_label_clean: RecallLabel,
    pub hopfield_label_adv: RecallLabel,
    pub linf: f64,
    /// Bits that differ between the binarized original and perturbed image.
    pub binarized_bits_changed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub n_requested: usize,
    pub n_generated: usize,
    pub epsilon: f64,
    pub mlp_fooled_fraction: f64,
    pub hopfield_fooled_fraction: f64,
    pub unrecalled_fraction: f64,
    /// Fraction of the clean originals the Hopfield path labels correctly.
    pub hopfield_clean_accuracy: f64,
    pub entries: Vec<TransferEntry>,
}

impl TransferReport {
    pub fn summary(&self) -> String {
        format!(
            "{}/{} adversarial images; MLP fooled {:.3}, Hopfield fooled {:.3}, unrecalled {:.3}",
            self.n_generated,
            self.n_requested,
            self.mlp_fooled_fraction,
            self.hopfield_fooled_fraction,
            self.unrecalled_fraction
        )
    }
}

/// Recalls every perturbed (and original) image through `net` and labels the
/// fixed points with `prototypes`.
///
/// Record `i` uses the recall seed `derive_indexed(cfg.seed, i)` for both
/// images, so identical binarized inputs give identical labels.
pub fn transfer_experiment(
    records: &mut [AdversarialRecord],
    net: &HopfieldNet,
    prototypes: &PatternSet,
    n_requested: usize,
    cfg: &TransferConfig,
) -> Result<TransferReport> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no adversarial records to transfer".into()));
    }
    if prototypes.labels().is_none() {
        return Err(Error::InvalidArgument("prototypes must be labeled".into()));
    }
    check_dim(net.dim(), prototypes.dim())?;

    let entries: Vec<TransferEntry> = records
        .par_iter_mut()
        .enumerate()
        .map(|(i, rec)| {
            check_dim(net.dim(), rec.perturbed.len())?;
            let recall_seed = seed::derive_indexed(cfg.seed, i as u64);
            let adv_bits = binarize(&rec.perturbed, cfg.threshold);
            let clean_bits = binarize(&rec.original, cfg.threshold);
            let classify = |p| {
                recall_classify(net, prototypes, p, cfg.reject_threshold, cfg.max_sweeps, recall_seed)
                    .map(|r| r.0)
            };
            let adv = classify(&adv_bits)?;
            let clean = classify(&clean_bits)?;
            rec.hopfield_label_adv = Some(adv);
            rec.hopfield_label_clean = Some(clean);
            Ok(TransferEntry {
                source_index: rec.source_index,
                true_label: rec.true_label,
                mlp_label_clean: rec.mlp_label_clean,
                mlp_label_adv: rec.mlp_label_adv,
                hopfield_label_clean: clean,
                hopfield_label_adv: adv,
                linf: rec.linf(),
                binarized_bits_changed: hamming(&adv_bits, &clean_bits)?,
            })
        })
        .collect::<Result<_>>()?;

    let n = entries.len() as f64;
    let frac = |pred: &dyn Fn(&TransferEntry) -> bool| entries.iter().filter(|e| pred(e)).count() as f64 / n;
    Ok(TransferReport {
        n_requested,
        n_generated: entries.len(),
        epsilon: records[0].epsilon,
        mlp_fooled_fraction: frac(&|e| e.mlp_label_adv != e.true_label),
        hopfield_fooled_fraction: frac(&|e| {
            matches!(e.hopfield_label_adv, RecallLabel::Class(c) if c != e.true_label)
        }),
        unrecalled_fraction: frac(&|e| e.hopfield_label_adv == RecallLabel::Unrecalled),
        hopfield_clean_accuracy: frac(&|e| e.hopfield_label_clean == RecallLabel::Class(e.true_label)),
        entries,
    })
}
