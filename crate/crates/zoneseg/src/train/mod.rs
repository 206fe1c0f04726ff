//! Training harness: weighted cross-entropy over softmax outputs, Adam with
//! decoupled-from-bias L2, k-fold cross-validation with per-epoch Dice
//! curves, and a held-out final test path. Inputs whose extents are not
//! divisible by the network's required multiple are padded (edge-clamp for
//! images, background for labels) and the padding is masked out of both the
//! loss and every metric.

pub mod metrics;

#[cfg(test)]
mod tests;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::augment::{apply_transform, sample_transform, AugmentationConfig};
use crate::engine::{adam_step, AdamHyper, AdamState, Elem, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{build_network, Model, NetworkSpec};
use crate::volume::{label_names, voxel_index, ImageVolume, LabelVolume};

pub use metrics::{
    dice_coefficient, dice_per_label, regional_dice, slab_sizes, soft_dice, summarize, DiceReport,
    Slab, SlabDice,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub folds: usize,
    /// Per-label loss weights; `None` selects the defaults for the label
    /// count (background 1, TZ 2, PZ 6, everything else 1).
    pub class_weights: Option<Vec<f64>>,
    pub model_seed: u64,
    pub shuffle_seed: u64,
    pub adam: AdamHyper,
    /// Emit one progress line per epoch on stderr.
    pub progress: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-5,
            epochs: 300,
            l2_lambda: 1e-5,
            folds: 5,
            class_weights: None,
            model_seed: 0,
            shuffle_seed: 0,
            adam: AdamHyper::default(),
            progress: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Config(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        if let Some(w) = &self.class_weights {
            if w.iter().any(|&v| v < 0.0) {
                return Err(Error::Config("class weights must be >= 0".into()));
            }
        }
        self.adam.validate()
    }

    pub fn resolve_weights(&self, n_labels: usize) -> Result<Vec<f64>> {
        match &self.class_weights {
            Some(w) => {
                if w.len() != n_labels {
                    return Err(Error::Config(format!(
                        "{} class weights for {n_labels} labels",
                        w.len()
                    )));
                }
                Ok(w.clone())
            }
            None => Ok(default_class_weights(n_labels)),
        }
    }
}

/// TZ is upweighted 2x and the thin PZ crescent 6x against background.
pub fn default_class_weights(n_labels: usize) -> Vec<f64> {
    let mut w = vec![1.0; n_labels];
    if n_labels > 1 {
        w[1] = 2.0;
    }
    if n_labels > 2 {
        w[2] = 6.0;
    }
    w
}

/// Mean weighted negative log-likelihood of the true label under `probs`,
/// averaged over voxels where `valid` holds.
pub fn weighted_cross_entropy<E: Elem>(
    tape: &Tape<E>,
    probs: &Tensor<E>,
    labels: &[u8],
    weights: &[f64],
    valid: Option<&[bool]>,
) -> Result<Tensor<E>> {
    tape.weighted_nll(probs, labels, weights, valid)
}

/// Seeded shuffle of `0..n` dealt round-robin into `folds` bins, so fold
/// sizes differ by at most one.
pub fn kfold_split(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::Config(format!("{folds} folds but only {n} volumes")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (j, id) in order.into_iter().enumerate() {
        out[j % folds].push(id);
    }
    Ok(out)
}

/// Pad offsets for aligning a volume to the network's required input
/// multiple. Padding is split evenly, with the extra voxel on the high side.
#[derive(Clone, Copy, Debug)]
pub struct Padding {
    /// Original extents in tensor order (depth, height, width) = (z, y, x).
    pub orig: (usize, usize, usize),
    pub padded: (usize, usize, usize),
    pub lo: (usize, usize, usize),
}

impl Padding {
    pub fn for_dims(dims: (usize, usize, usize), multiple: (usize, usize, usize)) -> Self {
        let (nx, ny, nz) = dims;
        let orig = (nz, ny, nx);
        let (md, mh, mw) = multiple;
        let pad = |n: usize, m: usize| (m - n % m) % m;
        let total = (pad(orig.0, md), pad(orig.1, mh), pad(orig.2, mw));
        Padding {
            orig,
            padded: (orig.0 + total.0, orig.1 + total.1, orig.2 + total.2),
            lo: (total.0 / 2, total.1 / 2, total.2 / 2),
        }
    }

    pub fn is_noop(&self) -> bool {
        self.orig == self.padded
    }

    /// Maps a padded index to the clamped source index on one axis.
    fn src(i: usize, lo: usize, n: usize) -> usize {
        (i.max(lo) - lo).min(n - 1)
    }
}

/// Edge-clamp pads the image and returns it as a `(1, D, H, W)` tensor.
pub fn pad_image(image: &ImageVolume, pad: &Padding) -> Tensor<f32> {
    let dims = image.header.dims;
    let (pd, ph, pw) = pad.padded;
    let (od, oh, ow) = pad.orig;
    let mut data = Vec::with_capacity(pd * ph * pw);
    for z in 0..pd {
        let sz = Padding::src(z, pad.lo.0, od);
        for y in 0..ph {
            let sy = Padding::src(y, pad.lo.1, oh);
            for x in 0..pw {
                let sx = Padding::src(x, pad.lo.2, ow);
                data.push(image.voxels[voxel_index(dims, sx, sy, sz)]);
            }
        }
    }
    Tensor::volume(1, pd, ph, pw, data).expect("consistent dims")
}

/// Background-pads the labels and marks the padding invalid.
pub fn pad_labels(labels: &LabelVolume, pad: &Padding) -> (Vec<u8>, Vec<bool>) {
    let dims = labels.header.dims;
    let (pd, ph, pw) = pad.padded;
    let (od, oh, ow) = pad.orig;
    let mut lbl = Vec::with_capacity(pd * ph * pw);
    let mut valid = Vec::with_capacity(pd * ph * pw);
    for z in 0..pd {
        for y in 0..ph {
            for x in 0..pw {
                let inside = (pad.lo.0..pad.lo.0 + od).contains(&z)
                    && (pad.lo.1..pad.lo.1 + oh).contains(&y)
                    && (pad.lo.2..pad.lo.2 + ow).contains(&x);
                valid.push(inside);
                lbl.push(if inside {
                    labels.voxels[voxel_index(dims, x - pad.lo.2, y - pad.lo.1, z - pad.lo.0)]
                } else {
                    0
                });
            }
        }
    }
    (lbl, valid)
}

/// Crops one channel plane of a padded `(D, H, W)` buffer back to the
/// original extents.
pub fn crop_plane<T: Copy>(padded: &[T], pad: &Padding) -> Vec<T> {
    let (pd, ph, pw) = pad.padded;
    debug_assert_eq!(padded.len(), pd * ph * pw);
    let _ = pd;
    let (od, oh, ow) = pad.orig;
    let mut out = Vec::with_capacity(od * oh * ow);
    for z in 0..od {
        for y in 0..oh {
            let row = ((z + pad.lo.0) * ph + (y + pad.lo.1)) * pw + pad.lo.2;
            out.extend_from_slice(&padded[row..row + ow]);
        }
    }
    out
}

/// A model plus per-parameter Adam state; one `step` is a full forward,
/// backward and update on a single volume.
pub struct Trainer {
    pub model: Model<f32>,
    opt: Vec<AdamState<f32>>,
    pub learning_rate: f64,
    pub l2_lambda: f64,
}

impl Trainer {
    pub fn new(model: Model<f32>, cfg: &TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = model
            .params
            .iter()
            .map(|p| AdamState::new(p.data.len(), cfg.adam))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trainer {
            model,
            opt,
            learning_rate: cfg.learning_rate,
            l2_lambda: cfg.l2_lambda,
        })
    }

    /// Returns the loss before the update.
    pub fn step(
        &mut self,
        image: &Tensor<f32>,
        labels: &[u8],
        valid: Option<&[bool]>,
        weights: &[f64],
    ) -> Result<f64> {
        let tape = Tape::new();
        let fwd = self.model.forward(&tape, image, &[])?;
        let loss = weighted_cross_entropy(&tape, &fwd.probs, labels, weights, valid)?;
        let grads = tape.backward(&loss)?;
        for (i, leaf) in fwd.param_leaves.iter().enumerate() {
            let Some(g) = grads.get(leaf) else { continue };
            let p = &mut self.model.params[i];
            adam_step(&mut p.data, g, &mut self.opt[i], self.learning_rate, self.l2_lambda, !p.is_bias)?;
        }
        Ok(loss.item() as f64)
    }
}

/// Segmentation of one volume: padded inference, then crop back. Returns the
/// hard prediction and the cropped per-label probability planes.
pub fn evaluate_volume(
    model: &Model<f32>,
    image: &ImageVolume,
) -> Result<(LabelVolume, Vec<Vec<f32>>)> {
    let pad = Padding::for_dims(image.header.dims, model.spec.required_input_multiple());
    let input = pad_image(image, &pad);
    let tape = Tape::inference();
    let fwd = model.forward(&tape, &input, &[])?;
    let (c, pd, ph, pw) = fwd.probs.dims4()?;
    let plane = pd * ph * pw;
    let probs: Vec<Vec<f32>> = (0..c)
        .map(|l| {
            let padded: Vec<f32> =
                fwd.probs.data()[l * plane..(l + 1) * plane].iter().map(|&v| v as f32).collect();
            crop_plane(&padded, &pad)
        })
        .collect();
    let n = probs[0].len();
    let mut pred = vec![0u8; n];
    for (i, p) in pred.iter_mut().enumerate() {
        let mut best = 0usize;
        for l in 1..c {
            if probs[l][i] > probs[best][i] {
                best = l;
            }
        }
        *p = best as u8;
    }
    let labels = LabelVolume::new(
        image.header.dims,
        image.header.spacing_mm,
        label_names(c),
        pred,
    )?;
    Ok((labels, probs))
}

#[derive(Clone, Debug)]
pub struct LabeledVolume {
    pub id: String,
    pub image: ImageVolume,
    pub labels: LabelVolume,
}

/// One `curves.csv` row: mean Dice over the volumes of one split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub fold: usize,
    pub split: String,
    pub label: String,
    pub dice: f64,
}

/// Final per-volume validation scores; each volume appears once, in the fold
/// that held it out.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerVolumeDice {
    pub id: String,
    pub fold: usize,
    pub label: String,
    pub dice: f64,
    pub soft_dice: f64,
}

#[derive(Debug)]
pub struct CrossvalOutcome {
    pub curves: Vec<CurveRow>,
    pub per_volume: Vec<PerVolumeDice>,
    pub summary: Vec<DiceReport>,
}

fn check_dataset(dataset: &[LabeledVolume], spec: &NetworkSpec) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for v in dataset {
        if !seen.insert(v.id.as_str()) {
            return Err(Error::Config(format!("duplicate volume id '{}'", v.id)));
        }
        if v.image.header.dims != v.labels.header.dims {
            return Err(Error::Data(format!(
                "volume '{}': image dims {:?} != label dims {:?}",
                v.id, v.image.header.dims, v.labels.header.dims
            )));
        }
        if v.labels.n_labels() != spec.labels {
            return Err(Error::Config(format!(
                "volume '{}' has {} label names, network expects {}",
                v.id,
                v.labels.n_labels(),
                spec.labels
            )));
        }
    }
    Ok(())
}

/// Volumes are scored in parallel; order-preserving collection keeps the
/// result identical at any thread count.
fn mean_split_dice(
    model: &Model<f32>,
    split: &[&LabeledVolume],
    n_labels: usize,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let per: Vec<Vec<f64>> = split
        .par_iter()
        .map(|v| {
            let (pred, _) = evaluate_volume(model, &v.image)?;
            dice_per_label(&pred.voxels, &v.labels.voxels, n_labels)
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0; n_labels];
    for d in &per {
        for (l, v) in d.iter().enumerate() {
            acc[l] += v;
        }
    }
    for a in acc.iter_mut() {
        *a /= split.len() as f64;
    }
    Ok(acc)
}

/// K-fold cross-validation. Every fold trains a fresh network on the other
/// folds, logging train and validation Dice per epoch; after the last epoch
/// the held-out volumes are scored individually and summarized per label.
pub fn run_crossval(
    dataset: &[LabeledVolume],
    spec: &NetworkSpec,
    cfg: &TrainingConfig,
    aug: Option<&AugmentationConfig>,
) -> Result<CrossvalOutcome> {
    cfg.validate()?;
    spec.validate()?;
    check_dataset(dataset, spec)?;
    if let Some(a) = aug {
        a.validate()?;
    }
    let weights = cfg.resolve_weights(spec.labels)?;
    let names = label_names(spec.labels);
    let folds = kfold_split(dataset.len(), cfg.folds, cfg.shuffle_seed)?;

    let mut curves = Vec::new();
    let mut per_volume = Vec::new();
    for (fold, val_idx) in folds.iter().enumerate() {
        let val: Vec<&LabeledVolume> = val_idx.iter().map(|&i| &dataset[i]).collect();
        let train: Vec<&LabeledVolume> = (0..dataset.len())
            .filter(|i| !val_idx.contains(i))
            .map(|i| &dataset[i])
            .collect();
        let model = build_network::<f32>(spec, cfg.model_seed.wrapping_add(fold as u64))?;
        let mut trainer = Trainer::new(model, cfg)?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.shuffle_seed.wrapping_add(0x9e3779b9 * (fold as u64 + 1)));

        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for &i in &order {
                let v = train[i];
                let (image, labels) = match aug {
                    Some(a) => {
                        let t = sample_transform(a, &mut rng);
                        apply_transform(&v.image, &v.labels, &t)?
                    }
                    None => (v.image.clone(), v.labels.clone()),
                };
                let pad =
                    Padding::for_dims(image.header.dims, trainer.model.spec.required_input_multiple());
                let input = pad_image(&image, &pad);
                let (lbl, valid) = pad_labels(&labels, &pad);
                let valid = if pad.is_noop() { None } else { Some(valid.as_slice()) };
                loss_sum += trainer.step(&input, &lbl, valid, &weights)?;
            }
            for (split, members) in [("train", &train), ("val", &val)] {
                let mean = mean_split_dice(&trainer.model, members, spec.labels)?;
                for l in 1..spec.labels {
                    curves.push(CurveRow {
                        epoch,
                        fold,
                        split: split.into(),
                        label: names[l].clone(),
                        dice: mean[l],
                    });
                }
            }
            if cfg.progress {
                eprintln!(
                    "fold {fold} epoch {epoch}: mean train loss {:.6}",
                    loss_sum / train.len() as f64
                );
            }
        }

        for v in &val {
            let (pred, probs) = evaluate_volume(&trainer.model, &v.image)?;
            for l in 1..spec.labels {
                per_volume.push(PerVolumeDice {
                    id: v.id.clone(),
                    fold,
                    label: names[l].clone(),
                    dice: dice_coefficient(&pred.voxels, &v.labels.voxels, l as u8)?,
                    soft_dice: soft_dice(&probs[l], &v.labels.voxels, l as u8)?,
                });
            }
        }
    }

    let summary = (1..spec.labels)
        .map(|l| {
            let vals: Vec<f64> = per_volume
                .iter()
                .filter(|p| p.label == names[l])
                .map(|p| p.dice)
                .collect();
            summarize(&names[l], &vals)
        })
        .collect();
    Ok(CrossvalOutcome { curves, per_volume, summary })
}

pub struct FinalTestOutcome {
    pub model: Model<f32>,
    pub per_volume: Vec<PerVolumeDice>,
    pub summary: Vec<DiceReport>,
}

/// Trains once on the full training set and scores a disjoint held-out set.
pub fn run_final_test(
    train: &[LabeledVolume],
    test: &[LabeledVolume],
    spec: &NetworkSpec,
    cfg: &TrainingConfig,
    aug: Option<&AugmentationConfig>,
) -> Result<FinalTestOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if test.is_empty() {
        return Err(Error::Config("final test set is empty".into()));
    }
    check_dataset(train, spec)?;
    check_dataset(test, spec)?;
    let train_ids: std::collections::BTreeSet<&str> =
        train.iter().map(|v| v.id.as_str()).collect();
    for v in test {
        if train_ids.contains(v.id.as_str()) {
            return Err(Error::Config(format!(
                "volume '{}' appears in both the train and test sets",
                v.id
            )));
        }
    }
    let weights = cfg.resolve_weights(spec.labels)?;
    let names = label_names(spec.labels);
    let model = build_network::<f32>(spec, cfg.model_seed)?;
    let mut trainer = Trainer::new(model, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let v = &train[i];
            let (image, labels) = match aug {
                Some(a) => {
                    let t = sample_transform(a, &mut rng);
                    apply_transform(&v.image, &v.labels, &t)?
                }
                None => (v.image.clone(), v.labels.clone()),
            };
            let pad = Padding::for_dims(image.header.dims, spec.required_input_multiple());
            let input = pad_image(&image, &pad);
            let (lbl, valid) = pad_labels(&labels, &pad);
            let valid = if pad.is_noop() { None } else { Some(valid.as_slice()) };
            loss_sum += trainer.step(&input, &lbl, valid, &weights)?;
        }
        if cfg.progress {
            eprintln!("epoch {epoch}: mean train loss {:.6}", loss_sum / train.len() as f64);
        }
    }
    let mut per_volume = Vec::new();
    for v in test {
        let (pred, probs) = evaluate_volume(&trainer.model, &v.image)?;
        for l in 1..spec.labels {
            per_volume.push(PerVolumeDice {
                id: v.id.clone(),
                fold: 0,
                label: names[l].clone(),
                dice: dice_coefficient(&pred.voxels, &v.labels.voxels, l as u8)?,
                soft_dice: soft_dice(&probs[l], &v.labels.voxels, l as u8)?,
            });
        }
    }
    let summary = (1..spec.labels)
        .map(|l| {
            let vals: Vec<f64> = per_volume
                .iter()
                .filter(|p| p.label == names[l])
                .map(|p| p.dice)
                .collect();
            summarize(&names[l], &vals)
        })
        .collect();
    Ok(FinalTestOutcome { model: trainer.model, per_volume, summary })
}

/// Values are written with shortest-roundtrip formatting so downstream
/// recomputation from the CSV is exact.
pub fn write_curves_csv(rows: &[CurveRow], path: &Path) -> Result<()> {
    let mut s = String::from("epoch,fold,split,label,dice\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.fold, r.split, r.label, r.dice));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_per_volume_csv(rows: &[PerVolumeDice], path: &Path) -> Result<()> {
    let mut s = String::from("id,fold,label,dice,soft_dice\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.id, r.fold, r.label, r.dice, r.soft_dice));
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn write_summary_csv(rows: &[DiceReport], path: &Path) -> Result<()> {
    let mut s = String::from("label,n,mean,sd,stderr\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.label, r.n, r.mean, r.sd, r.stderr));
    }
    std::fs::write(path, s)?;
    Ok(())
}
