//! Segmentation metrics: hard Dice overlap, soft (probability-weighted)
//! Dice, and Dice restricted to base/middle/apex slabs of the prostate
//! z-extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, LABEL_PZ, LABEL_TZ};

/// Hard Dice for one label: `2|A∩B| / (|A|+|B|)`, defined as 1.0 when both
/// masks are empty (perfect agreement on absence).
pub fn dice_coefficient(pred: &[u8], truth: &[u8], label: u8) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "dice over buffers of different length ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    let mut inter = 0usize;
    let mut a = 0usize;
    let mut b = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        let pa = p == label;
        let tb = t == label;
        a += pa as usize;
        b += tb as usize;
        inter += (pa && tb) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Hard Dice for every label `0..n_labels`.
pub fn dice_per_label(pred: &[u8], truth: &[u8], n_labels: usize) -> Result<Vec<f64>> {
    (0..n_labels).map(|l| dice_coefficient(pred, truth, l as u8)).collect()
}

/// Soft Dice for one label from the per-voxel probability of that label:
/// `2*Σ p_l(v)·1[t(v)=l] / (Σ p_l(v) + |t=l|)`. Both-empty is impossible
/// here since probabilities are strictly positive after softmax, but the
/// zero-denominator case is still mapped to 1.0.
pub fn soft_dice(label_probs: &[f32], truth: &[u8], label: u8) -> Result<f64> {
    if label_probs.len() != truth.len() {
        return Err(Error::Shape(format!(
            "soft dice over buffers of different length ({} vs {})",
            label_probs.len(),
            truth.len()
        )));
    }
    let mut num = 0.0f64;
    let mut psum = 0.0f64;
    let mut tsum = 0usize;
    for (&p, &t) in label_probs.iter().zip(truth) {
        let p = p as f64;
        psum += p;
        if t == label {
            num += p;
            tsum += 1;
        }
    }
    let den = psum + tsum as f64;
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(2.0 * num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slab {
    Base,
    Middle,
    Apex,
}

/// Slice counts `(base, middle, apex)` for a prostate extent of `n` axial
/// slices. Base and apex each take `ceil(n/5)` slices, the middle the rest;
/// for tiny extents the apex keeps its share and the base shrinks.
pub fn slab_sizes(n: usize) -> (usize, usize, usize) {
    let fifth = n.div_ceil(5);
    let apex = fifth.min(n);
    let base = fifth.min(n - apex);
    (base, n - base - apex, apex)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlabDice {
    pub slab: Slab,
    /// Inclusive z slice range of the slab, in volume coordinates.
    pub z_range: (usize, usize),
    /// `(label value, dice)` for every non-background label.
    pub dice: Vec<(u8, f64)>,
}

/// Dice per label restricted to the base, middle and apex thirds of the
/// prostate. The extent is the contiguous z range spanned by TZ or PZ voxels
/// in the ground truth; z increases toward the superior end, so the base slab
/// sits at the top of the range and the apex at the bottom.
pub fn regional_dice(pred: &LabelVolume, truth: &LabelVolume) -> Result<Vec<SlabDice>> {
    if pred.header.dims != truth.header.dims {
        return Err(Error::Shape(format!(
            "regional dice over volumes with different dims ({:?} vs {:?})",
            pred.header.dims, truth.header.dims
        )));
    }
    let (nx, ny, nz) = truth.header.dims;
    let slice_len = nx * ny;
    let has_prostate = |z: usize| {
        truth.voxels[z * slice_len..(z + 1) * slice_len]
            .iter()
            .any(|&v| v == LABEL_TZ || v == LABEL_PZ)
    };
    let z_lo = (0..nz).find(|&z| has_prostate(z));
    let Some(z_lo) = z_lo else {
        return Err(Error::Data("ground truth contains no prostate voxels".into()));
    };
    let z_hi = (0..nz).rev().find(|&z| has_prostate(z)).expect("nonempty extent");
    let n = z_hi - z_lo + 1;
    let (base, middle, apex) = slab_sizes(n);

    let n_labels = truth.n_labels().max(pred.n_labels());
    let slab_dice = |lo: usize, hi: usize| -> Result<Vec<(u8, f64)>> {
        let p = &pred.voxels[lo * slice_len..(hi + 1) * slice_len];
        let t = &truth.voxels[lo * slice_len..(hi + 1) * slice_len];
        (1..n_labels).map(|l| Ok((l as u8, dice_coefficient(p, t, l as u8)?))).collect()
    };

    let mut out = Vec::new();
    if apex > 0 {
        let (lo, hi) = (z_lo, z_lo + apex - 1);
        out.push(SlabDice { slab: Slab::Apex, z_range: (lo, hi), dice: slab_dice(lo, hi)? });
    }
    if middle > 0 {
        let (lo, hi) = (z_lo + apex, z_lo + apex + middle - 1);
        out.push(SlabDice { slab: Slab::Middle, z_range: (lo, hi), dice: slab_dice(lo, hi)? });
    }
    if base > 0 {
        let (lo, hi) = (z_hi - base + 1, z_hi);
        out.push(SlabDice { slab: Slab::Base, z_range: (lo, hi), dice: slab_dice(lo, hi)? });
    }
    Ok(out)
}

/// Mean, sample standard deviation and standard error over per-volume
/// scores; `sd` and `stderr` are 0 for fewer than two samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiceReport {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub stderr: f64,
}

pub fn summarize(label: &str, values: &[f64]) -> DiceReport {
    let n = values.len();
    if n == 0 {
        return DiceReport { label: label.into(), n: 0, mean: f64::NAN, sd: 0.0, stderr: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    DiceReport { label: label.into(), n, mean, sd, stderr: sd / (n as f64).sqrt() }
}
