//! Joint image/label spatial augmentation: translations, in-plane rotations
//! about z, isotropic scaling, elastic deformation and left-right flips.
//! Applied as one combined inverse warp so the image is resampled once
//! (trilinear, clamp-to-edge) and the labels once (nearest, background
//! outside the field).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{voxel_index, ImageVolume, LabelVolume};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Max |translation| per axis in voxels (x, y, z).
    pub translate_max_vox: (f64, f64, f64),
    /// Max |rotation| about the z axis, degrees. Through-plane rotation is
    /// deliberately unavailable: thick slices make it destructive.
    pub rotate_max_deg: f64,
    /// Multiplicative isotropic scale range (lo, hi).
    pub scale_range: (f64, f64),
    pub elastic_grid_spacing_vox: usize,
    pub elastic_sigma_vox: f64,
    pub flip_prob: f64,
    pub translate_enabled: bool,
    pub rotate_enabled: bool,
    pub scale_enabled: bool,
    pub elastic_enabled: bool,
    pub flip_enabled: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            translate_max_vox: (5.0, 5.0, 1.0),
            rotate_max_deg: 10.0,
            scale_range: (0.9, 1.1),
            elastic_grid_spacing_vox: 16,
            elastic_sigma_vox: 2.0,
            flip_prob: 0.5,
            translate_enabled: true,
            rotate_enabled: true,
            scale_enabled: true,
            elastic_enabled: true,
            flip_enabled: true,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(0.0 < lo && lo <= 1.0 && 1.0 <= hi) {
            return Err(Error::Config(format!(
                "scale_range must satisfy 0 < lo <= 1 <= hi, got ({lo}, {hi})"
            )));
        }
        if self.elastic_sigma_vox < 0.0 {
            return Err(Error::Config("elastic displacement sigma must be >= 0".into()));
        }
        if self.elastic_enabled && self.elastic_grid_spacing_vox == 0 {
            return Err(Error::Config("elastic grid spacing must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!(
                "flip_prob must be in [0,1], got {}",
                self.flip_prob
            )));
        }
        Ok(())
    }
}

/// One drawn transform; every component is recorded for the run log.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TransformSpec {
    pub translate: (f64, f64, f64),
    pub rotate_deg: f64,
    pub scale: f64,
    pub flip_lr: bool,
    pub elastic: Option<ElasticSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ElasticSpec {
    pub grid_spacing_vox: usize,
    pub sigma_vox: f64,
    /// Sub-seed for the per-node displacement draws; the dense field is
    /// reconstructed from it in `apply_transform`.
    pub seed: u64,
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec {
            translate: (0.0, 0.0, 0.0),
            rotate_deg: 0.0,
            scale: 1.0,
            flip_lr: false,
            elastic: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self == &Self::identity()
    }
}

/// Draws each enabled component uniformly from its configured range.
pub fn sample_transform(config: &AugmentationConfig, rng: &mut ChaCha8Rng) -> TransformSpec {
    let uniform = |rng: &mut ChaCha8Rng, max: f64| {
        if max == 0.0 {
            0.0
        } else {
            rng.random_range(-max..=max)
        }
    };
    let translate = if config.translate_enabled {
        (
            uniform(rng, config.translate_max_vox.0),
            uniform(rng, config.translate_max_vox.1),
            uniform(rng, config.translate_max_vox.2),
        )
    } else {
        (0.0, 0.0, 0.0)
    };
    let rotate_deg = if config.rotate_enabled { uniform(rng, config.rotate_max_deg) } else { 0.0 };
    let scale = if config.scale_enabled {
        let (lo, hi) = config.scale_range;
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    } else {
        1.0
    };
    let elastic = if config.elastic_enabled && config.elastic_sigma_vox > 0.0 {
        Some(ElasticSpec {
            grid_spacing_vox: config.elastic_grid_spacing_vox,
            sigma_vox: config.elastic_sigma_vox,
            seed: rng.random(),
        })
    } else {
        None
    };
    let flip_lr = if config.flip_enabled {
        rng.random_range(0.0..1.0) < config.flip_prob
    } else {
        false
    };
    TransformSpec { translate, rotate_deg, scale, flip_lr, elastic }
}

/// Coarse per-node Gaussian displacements, trilinearly interpolated to a
/// dense per-voxel field.
struct ElasticField {
    nodes: Vec<(f64, f64, f64)>,
    grid: (usize, usize, usize),
    spacing: f64,
}

impl ElasticField {
    fn build(spec: &ElasticSpec, dims: (usize, usize, usize)) -> Self {
        let spacing = spec.grid_spacing_vox.max(1) as f64;
        let counts = (
            (dims.0 as f64 / spacing).floor() as usize + 2,
            (dims.1 as f64 / spacing).floor() as usize + 2,
            (dims.2 as f64 / spacing).floor() as usize + 2,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = counts.0 * counts.1 * counts.2;
        let nodes = (0..n)
            .map(|_| {
                (
                    spec.sigma_vox * gaussian(&mut rng),
                    spec.sigma_vox * gaussian(&mut rng),
                    spec.sigma_vox * gaussian(&mut rng),
                )
            })
            .collect();
        ElasticField { nodes, grid: counts, spacing }
    }

    fn displacement(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let (gx, gy, gz) = self.grid;
        let locate = |c: f64, n: usize| {
            let g = (c / self.spacing).max(0.0);
            let i0 = (g.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, g - i0 as f64)
        };
        let (x0, x1, fx) = locate(x, gx);
        let (y0, y1, fy) = locate(y, gy);
        let (z0, z1, fz) = locate(z, gz);
        let at = |xi: usize, yi: usize, zi: usize| self.nodes[(zi * gy + yi) * gx + xi];
        let mut acc = (0.0, 0.0, 0.0);
        for (zi, wz) in [(z0, 1.0 - fz), (z1, fz)] {
            for (yi, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                for (xi, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                    let w = wx * wy * wz;
                    if w == 0.0 {
                        continue;
                    }
                    let d = at(xi, yi, zi);
                    acc.0 += w * d.0;
                    acc.1 += w * d.1;
                    acc.2 += w * d.2;
                }
            }
        }
        acc
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Maps an output voxel coordinate back to its source coordinate. Forward
/// composition order is scale, rotate, translate, elastic, flip about the
/// volume center; this applies the inverses in reverse.
struct InverseWarp<'a> {
    dims: (usize, usize, usize),
    t: &'a TransformSpec,
    field: Option<ElasticField>,
    cos: f64,
    sin: f64,
}

impl<'a> InverseWarp<'a> {
    fn new(t: &'a TransformSpec, dims: (usize, usize, usize)) -> Self {
        let theta = -t.rotate_deg.to_radians();
        InverseWarp {
            dims,
            t,
            field: t.elastic.as_ref().map(|e| ElasticField::build(e, dims)),
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    fn source(&self, x: usize, y: usize, z: usize) -> (f64, f64, f64) {
        let (nx, ny, nz) = self.dims;
        let (cx, cy, cz) = ((nx - 1) as f64 / 2.0, (ny - 1) as f64 / 2.0, (nz - 1) as f64 / 2.0);
        let mut px = x as f64;
        let py0 = y as f64;
        let pz0 = z as f64;
        if self.t.flip_lr {
            px = (nx - 1) as f64 - px;
        }
        let (mut qx, mut qy, mut qz) = (px, py0, pz0);
        if let Some(f) = &self.field {
            let (dx, dy, dz) = f.displacement(qx, qy, qz);
            qx += dx;
            qy += dy;
            qz += dz;
        }
        qx -= self.t.translate.0;
        qy -= self.t.translate.1;
        qz -= self.t.translate.2;
        // rotate by -theta about the center, in-plane only
        let (rx, ry) = (qx - cx, qy - cy);
        let (ux, uy) = (rx * self.cos - ry * self.sin, rx * self.sin + ry * self.cos);
        qx = cx + ux;
        qy = cy + uy;
        // unscale about the center
        let s = self.t.scale;
        (cx + (qx - cx) / s, cy + (qy - cy) / s, cz + (qz - cz) / s)
    }
}

pub fn apply_transform(
    image: &ImageVolume,
    labels: &LabelVolume,
    t: &TransformSpec,
) -> Result<(ImageVolume, LabelVolume)> {
    let dims = image.header.dims;
    if labels.header.dims != dims {
        return Err(Error::Usage(format!(
            "image dims {:?} and label dims {:?} differ",
            dims, labels.header.dims
        )));
    }
    if t.is_identity() {
        return Ok((image.clone(), labels.clone()));
    }
    let warp = InverseWarp::new(t, dims);
    let (nx, ny, nz) = dims;
    let mut out_img = Vec::with_capacity(image.voxels.len());
    let mut out_lbl = Vec::with_capacity(labels.voxels.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (sx, sy, sz) = warp.source(x, y, z);
                out_img.push(sample_trilinear_clamped(&image.voxels, dims, sx, sy, sz));
                out_lbl.push(sample_nearest_background(&labels.voxels, dims, sx, sy, sz));
            }
        }
    }
    let img = ImageVolume { header: image.header.clone(), voxels: out_img };
    let lbl = LabelVolume { header: labels.header.clone(), voxels: out_lbl };
    Ok((img, lbl))
}

fn sample_trilinear_clamped(
    voxels: &[f32],
    dims: (usize, usize, usize),
    x: f64,
    y: f64,
    z: f64,
) -> f32 {
    let clamp = |c: f64, n: usize| c.max(0.0).min((n - 1) as f64);
    let (x, y, z) = (clamp(x, dims.0), clamp(y, dims.1), clamp(z, dims.2));
    let (x0, y0, z0) = (x.floor() as usize, y.floor() as usize, z.floor() as usize);
    let (x1, y1, z1) =
        ((x0 + 1).min(dims.0 - 1), (y0 + 1).min(dims.1 - 1), (z0 + 1).min(dims.2 - 1));
    let (fx, fy, fz) = (x - x0 as f64, y - y0 as f64, z - z0 as f64);
    let at = |xi, yi, zi| voxels[voxel_index(dims, xi, yi, zi)] as f64;
    let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
    let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
    let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
    let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    (c0 * (1.0 - fz) + c1 * fz) as f32
}

fn sample_nearest_background(
    voxels: &[u8],
    dims: (usize, usize, usize),
    x: f64,
    y: f64,
    z: f64,
) -> u8 {
    let (rx, ry, rz) = (x.round(), y.round(), z.round());
    if rx < 0.0
        || ry < 0.0
        || rz < 0.0
        || rx >= dims.0 as f64
        || ry >= dims.1 as f64
        || rz >= dims.2 as f64
    {
        return 0;
    }
    voxels[voxel_index(dims, rx as usize, ry as usize, rz as usize)]
}
