//! Dataset label-balance statistics: per-volume TZ/(TZ+PZ) fraction and
//! background/TZ ratio, plus a histogram of the fractions.

use super::{LabelVolume, LABEL_BACKGROUND, LABEL_PZ, LABEL_TZ};

#[derive(Clone, Debug)]
pub struct VolumeBalance {
    pub id: String,
    /// `|TZ| / (|TZ| + |PZ|)`; `None` when the volume has no prostate voxels.
    pub tz_fraction: Option<f64>,
    /// `|background| / |TZ|`; `None` when the volume has no TZ voxels.
    pub bg_tz_ratio: Option<f64>,
    /// Volumes with zero prostate voxels are flagged and excluded from the
    /// fraction statistics.
    pub excluded: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct BalanceStats {
    pub per_volume: Vec<VolumeBalance>,
    pub histogram: Vec<HistogramBin>,
}

impl BalanceStats {
    pub fn mean_tz_fraction(&self) -> Option<f64> {
        let vals: Vec<f64> = self.per_volume.iter().filter_map(|v| v.tz_fraction).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

pub const HISTOGRAM_BINS: usize = 10;

pub fn label_balance_stats(dataset: &[(String, &LabelVolume)]) -> BalanceStats {
    let mut per_volume = Vec::with_capacity(dataset.len());
    for (id, vol) in dataset {
        let tz = vol.count(LABEL_TZ);
        let pz = vol.count(LABEL_PZ);
        let bg = vol.count(LABEL_BACKGROUND);
        let excluded = tz + pz == 0;
        per_volume.push(VolumeBalance {
            id: id.clone(),
            tz_fraction: if excluded { None } else { Some(tz as f64 / (tz + pz) as f64) },
            bg_tz_ratio: if tz == 0 { None } else { Some(bg as f64 / tz as f64) },
            excluded,
        });
    }
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lo: i as f64 / HISTOGRAM_BINS as f64,
            hi: (i + 1) as f64 / HISTOGRAM_BINS as f64,
            count: 0,
        })
        .collect();
    for v in &per_volume {
        if let Some(f) = v.tz_fraction {
            let bin = ((f * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            histogram[bin].count += 1;
        }
    }
    BalanceStats { per_volume, histogram }
}
