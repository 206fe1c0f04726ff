//! Deterministic synthetic phantom volumes standing in for a private MRI
//! archive: central ellipsoid TZ, thin posterior crescent PZ, and in 6-label
//! mode a superior bladder blob, a posterior rectum tube and two lateral
//! femur cylinders. The image is per-tissue base intensity plus a smooth
//! bias field plus Gaussian noise scaled by `difficulty`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    label_names, ImageVolume, LabelVolume, LABEL_BLADDER, LABEL_FEMUR, LABEL_PZ, LABEL_RECTUM,
    LABEL_TZ,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelMode {
    TwoLabel,
    SixLabel,
}

impl LabelMode {
    pub fn n_labels(self) -> usize {
        match self {
            LabelMode::TwoLabel => 3,
            LabelMode::SixLabel => 6,
        }
    }
}

impl std::str::FromStr for LabelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2label" | "3" => Ok(LabelMode::TwoLabel),
            "6label" | "6" => Ok(LabelMode::SixLabel),
            other => Err(Error::Usage(format!("unknown label mode '{other}' (2label|6label)"))),
        }
    }
}

const BASE_INTENSITY: [f64; 6] = [0.30, 0.62, 0.45, 0.85, 0.35, 0.92];

pub fn synth_phantom(
    seed: u64,
    dims: (usize, usize, usize),
    spacing_mm: (f64, f64, f64),
    label_mode: LabelMode,
    difficulty: f64,
) -> Result<(ImageVolume, LabelVolume)> {
    let (nx, ny, nz) = dims;
    if nx < 16 || ny < 16 || nz < 4 {
        return Err(Error::Config(format!(
            "dims {dims:?} too small to fit the phantom geometry (need >= 16x16x4)"
        )));
    }
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::Config(format!("difficulty must be in [0,1], got {difficulty}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = |rng: &mut ChaCha8Rng| rng.random_range(0.94..1.06);

    let (fx, fy, fz) = (nx as f64, ny as f64, nz as f64);
    let cx = 0.50 * fx + rng.random_range(-0.02..0.02) * fx;
    let cy = 0.45 * fy + rng.random_range(-0.02..0.02) * fy;
    let cz = 0.50 * fz + rng.random_range(-0.02..0.02) * fz;
    let tz_rx = 0.20 * fx * jitter(&mut rng);
    let tz_ry = 0.17 * fy * jitter(&mut rng);
    let tz_rz = 0.30 * fz * jitter(&mut rng);
    // outer prostate envelope; the posterior part outside TZ is the PZ
    let out_rx = tz_rx * 1.25;
    let out_ry = tz_ry * 1.35;
    let out_rz = tz_rz * 1.05;

    let bladder_c = (0.50 * fx, 0.32 * fy, 0.80 * fz);
    let bladder_r = (0.17 * fx, 0.14 * fy, 0.16 * fz);
    let rectum_c = (0.50 * fx, 0.84 * fy);
    let rectum_r = (0.10 * fx, 0.08 * fy);
    let femur_y = 0.50 * fy;
    let femur_r = 0.09 * fx;

    let ellipsoid = |x: f64, y: f64, z: f64, c: (f64, f64, f64), r: (f64, f64, f64)| {
        let dx = (x - c.0) / r.0;
        let dy = (y - c.1) / r.1;
        let dz = (z - c.2) / r.2;
        dx * dx + dy * dy + dz * dz <= 1.0
    };

    let n = nx * ny * nz;
    let mut labels = vec![0u8; n];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (px, py, pz) = (x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5);
                let i = super::voxel_index(dims, x, y, z);
                let mut lbl = 0u8;
                if label_mode == LabelMode::SixLabel {
                    let dfl = (px - 0.12 * fx) / femur_r;
                    let dfr = (px - 0.88 * fx) / femur_r;
                    let dfy = (py - femur_y) / femur_r;
                    if dfl * dfl + dfy * dfy <= 1.0 || dfr * dfr + dfy * dfy <= 1.0 {
                        lbl = LABEL_FEMUR;
                    }
                    let drx = (px - rectum_c.0) / rectum_r.0;
                    let dry = (py - rectum_c.1) / rectum_r.1;
                    if drx * drx + dry * dry <= 1.0 {
                        lbl = LABEL_RECTUM;
                    }
                    if ellipsoid(px, py, pz, bladder_c, bladder_r) {
                        lbl = LABEL_BLADDER;
                    }
                }
                if ellipsoid(px, py, pz, (cx, cy, cz), (out_rx, out_ry, out_rz)) && py > cy {
                    lbl = LABEL_PZ;
                }
                if ellipsoid(px, py, pz, (cx, cy, cz), (tz_rx, tz_ry, tz_rz)) {
                    lbl = LABEL_TZ;
                }
                labels[i] = lbl;
            }
        }
    }

    // smooth bias field + gaussian noise on top of per-tissue intensities
    let bias_amp = 0.04 + 0.06 * difficulty;
    let noise_sigma = 0.01 + 0.06 * difficulty;
    let (p1, p2, p3) = (
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    let mut voxels = Vec::with_capacity(n);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = super::voxel_index(dims, x, y, z);
                let base = BASE_INTENSITY[labels[i] as usize];
                let bias = bias_amp
                    * ((std::f64::consts::PI * x as f64 / fx + p1).sin()
                        + (std::f64::consts::PI * y as f64 / fy + p2).sin()
                        + (std::f64::consts::PI * z as f64 / fz + p3).sin())
                    / 3.0;
                let noise = noise_sigma * gaussian(&mut rng);
                voxels.push((base + bias + noise) as f32);
            }
        }
    }

    let image = ImageVolume::new(dims, spacing_mm, voxels)?;
    let labels = LabelVolume::new(dims, spacing_mm, label_names(label_mode.n_labels()), labels)?;
    Ok((image, labels))
}

/// Box-Muller standard normal from the seeded stream.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
