//! Physical-space resampling. Sample points sit at voxel centers; the output
//! grid covers the same physical extent, with clamp-to-edge at the borders.

use super::{ImageVolume, LabelVolume, Volume};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleMode {
    Trilinear,
    Nearest,
}

impl std::str::FromStr for ResampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trilinear" => Ok(ResampleMode::Trilinear),
            "nearest" => Ok(ResampleMode::Nearest),
            other => Err(Error::Usage(format!("unknown mode '{other}' (trilinear|nearest)"))),
        }
    }
}

fn output_dims(
    dims: (usize, usize, usize),
    old: (f64, f64, f64),
    new: (f64, f64, f64),
) -> (usize, usize, usize) {
    let round = |n: usize, o: f64, s: f64| ((n as f64 * o / s).round() as usize).max(1);
    (round(dims.0, old.0, new.0), round(dims.1, old.1, new.1), round(dims.2, old.2, new.2))
}

/// Continuous input index for output voxel center `i` under a spacing change.
#[inline]
fn source_coord(i: usize, new_sp: f64, old_sp: f64) -> f64 {
    ((i as f64 + 0.5) * new_sp) / old_sp - 0.5
}

pub fn resample(volume: &Volume, target_spacing_mm: (f64, f64, f64), mode: ResampleMode) -> Result<Volume> {
    let (sx, sy, sz) = target_spacing_mm;
    if !(sx > 0.0 && sy > 0.0 && sz > 0.0) {
        return Err(Error::Usage(format!("target spacing must be > 0, got {target_spacing_mm:?}")));
    }
    match (volume, mode) {
        (Volume::Labels(_), ResampleMode::Trilinear) => {
            Err(Error::Usage("label volumes must be resampled with nearest, not trilinear".into()))
        }
        (Volume::Image(v), ResampleMode::Trilinear) => Ok(Volume::Image(resample_trilinear(v, target_spacing_mm))),
        (Volume::Image(v), ResampleMode::Nearest) => {
            let f = resample_nearest(&v.voxels, v.header.dims, v.header.spacing_mm, target_spacing_mm);
            let mut header = v.header.clone();
            header.dims = f.1;
            header.spacing_mm = target_spacing_mm;
            Ok(Volume::Image(ImageVolume { header, voxels: f.0 }))
        }
        (Volume::Labels(v), ResampleMode::Nearest) => {
            let f = resample_nearest(&v.voxels, v.header.dims, v.header.spacing_mm, target_spacing_mm);
            let mut header = v.header.clone();
            header.dims = f.1;
            header.spacing_mm = target_spacing_mm;
            Ok(Volume::Labels(LabelVolume { header, voxels: f.0 }))
        }
    }
}

fn resample_trilinear(v: &ImageVolume, target: (f64, f64, f64)) -> ImageVolume {
    let dims = v.header.dims;
    let old = v.header.spacing_mm;
    let (nx, ny, nz) = output_dims(dims, old, target);
    let mut out = Vec::with_capacity(nx * ny * nz);
    let clamp = |c: f64, n: usize| c.max(0.0).min((n - 1) as f64);
    for z in 0..nz {
        let cz = clamp(source_coord(z, target.2, old.2), dims.2);
        let z0 = cz.floor() as usize;
        let z1 = (z0 + 1).min(dims.2 - 1);
        let fz = cz - z0 as f64;
        for y in 0..ny {
            let cy = clamp(source_coord(y, target.1, old.1), dims.1);
            let y0 = cy.floor() as usize;
            let y1 = (y0 + 1).min(dims.1 - 1);
            let fy = cy - y0 as f64;
            for x in 0..nx {
                let cx = clamp(source_coord(x, target.0, old.0), dims.0);
                let x0 = cx.floor() as usize;
                let x1 = (x0 + 1).min(dims.0 - 1);
                let fx = cx - x0 as f64;
                let at = |xi: usize, yi: usize, zi: usize| {
                    v.voxels[super::voxel_index(dims, xi, yi, zi)] as f64
                };
                let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
                let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
                let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
                let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
                let c0 = c00 * (1.0 - fy) + c10 * fy;
                let c1 = c01 * (1.0 - fy) + c11 * fy;
                out.push((c0 * (1.0 - fz) + c1 * fz) as f32);
            }
        }
    }
    let mut header = v.header.clone();
    header.dims = (nx, ny, nz);
    header.spacing_mm = target;
    ImageVolume { header, voxels: out }
}

fn resample_nearest<T: Copy>(
    voxels: &[T],
    dims: (usize, usize, usize),
    old: (f64, f64, f64),
    target: (f64, f64, f64),
) -> (Vec<T>, (usize, usize, usize)) {
    let (nx, ny, nz) = output_dims(dims, old, target);
    let pick = |i: usize, new_sp: f64, old_sp: f64, n: usize| -> usize {
        (source_coord(i, new_sp, old_sp).round().max(0.0) as usize).min(n - 1)
    };
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        let sz = pick(z, target.2, old.2, dims.2);
        for y in 0..ny {
            let sy = pick(y, target.1, old.1, dims.1);
            for x in 0..nx {
                let sx = pick(x, target.0, old.0, dims.0);
                out.push(voxels[super::voxel_index(dims, sx, sy, sz)]);
            }
        }
    }
    (out, (nx, ny, nz))
}
