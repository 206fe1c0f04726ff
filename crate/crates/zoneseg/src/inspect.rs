//! Feature-map introspection: pick a representative axial slice, tile the
//! maps of one tap into a contrast-normalized grayscale grid, and match the
//! final-layer maps of two runs by absolute Pearson correlation.

use std::path::Path;

use crate::engine::{Elem, Tensor};
use crate::error::{Error, Result};
use crate::volume::{LabelVolume, LABEL_PZ, LABEL_TZ};

/// Midpoint (rounded down) of the contiguous z range containing prostate
/// voxels in the ground truth.
pub fn mid_prostate_slice(labels: &LabelVolume) -> Result<usize> {
    let (nx, ny, nz) = labels.header.dims;
    let slice_len = nx * ny;
    let has = |z: usize| {
        labels.voxels[z * slice_len..(z + 1) * slice_len]
            .iter()
            .any(|&v| v == LABEL_TZ || v == LABEL_PZ)
    };
    let lo = (0..nz)
        .find(|&z| has(z))
        .ok_or_else(|| Error::Data("volume contains no prostate voxels".into()))?;
    let hi = (0..nz).rev().find(|&z| has(z)).expect("nonempty extent");
    Ok((lo + hi) / 2)
}

/// Full-resolution slice index mapped into a tap's coarser z grid.
pub fn tap_slice(full_res_z: usize, z_downsample: usize) -> usize {
    full_res_z / z_downsample.max(1)
}

/// Row-major near-square tiling of feature maps, one tile per channel.
/// Each tile is independently normalized (min to 0, max to 255, constant
/// maps to mid-gray) so low-amplitude maps stay visible.
#[derive(Clone, Debug)]
pub struct FeatureGrid {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub tile_size: (usize, usize),
}

pub fn render_feature_grid<E: Elem>(tap: &Tensor<E>, slice_z: usize) -> Result<FeatureGrid> {
    let (c, d, h, w) = tap.dims4()?;
    if slice_z >= d {
        return Err(Error::Usage(format!(
            "slice {slice_z} out of range for a tap with {d} slices"
        )));
    }
    let cols = (c as f64).sqrt().ceil() as usize;
    let rows = c.div_ceil(cols);
    let (width, height) = (cols * w, rows * h);
    let mut pixels = vec![0u8; width * height];
    let plane = d * h * w;
    for ch in 0..c {
        let base = ch * plane + slice_z * h * w;
        let map: Vec<f64> = (0..h * w).map(|i| tap.data()[base + i].to_f64()).collect();
        let min = map.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (tr, tc) = (ch / cols, ch % cols);
        for y in 0..h {
            for x in 0..w {
                let v = map[y * w + x];
                let g = if max > min {
                    ((v - min) / (max - min) * 255.0).round() as u8
                } else {
                    128
                };
                pixels[(tr * h + y) * width + tc * w + x] = g;
            }
        }
    }
    Ok(FeatureGrid { width, height, pixels, tile_rows: rows, tile_cols: cols, tile_size: (h, w) })
}

/// Binary (P5) PGM.
pub fn write_pgm(grid: &FeatureGrid, path: &Path) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", grid.width, grid.height).into_bytes();
    out.extend_from_slice(&grid.pixels);
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct MapMatch {
    pub map_index: usize,
    pub best_match_index: usize,
    pub abs_correlation: f64,
}

/// |Pearson| between two equal-length pixel vectors; zero-variance inputs
/// correlate with nothing.
fn abs_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    (cov / (va * vb).sqrt()).abs()
}

/// For every map of tap `a`, the best-correlated map of tap `b` on the same
/// slice. Both taps must have the same channel count and spatial shape.
pub fn match_feature_maps<E: Elem>(
    a: &Tensor<E>,
    b: &Tensor<E>,
    slice_z: usize,
) -> Result<Vec<MapMatch>> {
    let (ca, da, ha, wa) = a.dims4()?;
    let (cb, db, hb, wb) = b.dims4()?;
    if (ca, da, ha, wa) != (cb, db, hb, wb) {
        return Err(Error::Shape(format!(
            "tap shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if slice_z >= da {
        return Err(Error::Usage(format!(
            "slice {slice_z} out of range for a tap with {da} slices"
        )));
    }
    let plane = da * ha * wa;
    let slice_of = |t: &Tensor<E>, ch: usize| -> Vec<f64> {
        let base = ch * plane + slice_z * ha * wa;
        (0..ha * wa).map(|i| t.data()[base + i].to_f64()).collect()
    };
    let b_slices: Vec<Vec<f64>> = (0..cb).map(|ch| slice_of(b, ch)).collect();
    let mut out = Vec::with_capacity(ca);
    for ch in 0..ca {
        let sa = slice_of(a, ch);
        let mut best = 0usize;
        let mut best_corr = -1.0;
        for (j, sb) in b_slices.iter().enumerate() {
            let corr = abs_pearson(&sa, sb);
            if corr > best_corr {
                best = j;
                best_corr = corr;
            }
        }
        out.push(MapMatch { map_index: ch, best_match_index: best, abs_correlation: best_corr });
    }
    Ok(out)
}

pub fn write_matches_csv(rows: &[MapMatch], path: &Path) -> Result<()> {
    let mut s = String::from("map_index,best_match_index,abs_correlation\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.map_index, r.best_match_index, r.abs_correlation));
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{label_names, voxel_index};

    fn labels_with_extent(z_lo: usize, z_hi: usize, nz: usize) -> LabelVolume {
        let dims = (16, 16, nz);
        let mut v = vec![0u8; 16 * 16 * nz];
        for z in z_lo..=z_hi {
            v[voxel_index(dims, 8, 8, z)] = LABEL_TZ;
        }
        LabelVolume::new(dims, (1.0, 1.0, 1.0), label_names(3), v).unwrap()
    }

    #[test]
    fn mid_slice_rounds_down() {
        assert_eq!(mid_prostate_slice(&labels_with_extent(2, 7, 12)).unwrap(), 4);
        assert_eq!(mid_prostate_slice(&labels_with_extent(3, 3, 8)).unwrap(), 3);
    }

    #[test]
    fn mid_slice_of_empty_volume_errors() {
        let empty = LabelVolume::new(
            (16, 16, 4),
            (1.0, 1.0, 1.0),
            label_names(3),
            vec![0; 16 * 16 * 4],
        )
        .unwrap();
        assert!(matches!(mid_prostate_slice(&empty), Err(crate::Error::Data(_))));
    }

    #[test]
    fn grid_tiling_is_near_square() {
        let tap = Tensor::volume(10, 2, 4, 6, vec![0.0f32; 10 * 2 * 4 * 6]).unwrap();
        let g = render_feature_grid(&tap, 1).unwrap();
        assert_eq!((g.tile_rows, g.tile_cols), (3, 4));
        assert_eq!((g.width, g.height), (24, 12));
        assert_eq!(g.pixels.len(), 24 * 12);
    }

    #[test]
    fn per_tile_contrast_normalization() {
        // channel 0 constant, channel 1 a ramp
        let mut data = vec![7.0f32; 2 * 1 * 2 * 2];
        data[4..8].copy_from_slice(&[0.0, 1.0, 2.0, 3.0]);
        let tap = Tensor::volume(2, 1, 2, 2, data).unwrap();
        let g = render_feature_grid(&tap, 0).unwrap();
        // tiles side by side: constant tile mid-gray, ramp spans 0..255
        assert_eq!(g.pixels[0], 128);
        assert_eq!(g.pixels[2], 0);
        let last_row = g.width * (g.height - 1);
        assert_eq!(g.pixels[last_row + 3], 255);
    }

    #[test]
    fn pgm_header_and_payload() {
        let tap = Tensor::volume(4, 1, 3, 3, vec![0.5f32; 36]).unwrap();
        let g = render_feature_grid(&tap, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("grid.pgm");
        write_pgm(&g, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = format!("P5\n{} {}\n255\n", g.width, g.height);
        assert!(bytes.starts_with(header.as_bytes()));
        assert_eq!(bytes.len(), header.len() + g.width * g.height);
    }

    #[test]
    fn permuted_maps_match_with_unit_correlation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let (c, d, h, w) = (6, 2, 4, 4);
        let data: Vec<f32> = (0..c * d * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = Tensor::volume(c, d, h, w, data.clone()).unwrap();
        // b's channel k is a's channel (k+1) mod c
        let plane = d * h * w;
        let mut perm = vec![0.0f32; data.len()];
        for k in 0..c {
            let src = (k + 1) % c;
            perm[k * plane..(k + 1) * plane].copy_from_slice(&data[src * plane..(src + 1) * plane]);
        }
        let b = Tensor::volume(c, d, h, w, perm).unwrap();
        let matches = match_feature_maps(&a, &b, 1).unwrap();
        for m in &matches {
            assert_eq!(m.best_match_index, (m.map_index + c - 1) % c);
            assert!((m.abs_correlation - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sign_flipped_map_still_matches() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f32> = (0..2 * 1 * 4 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = Tensor::volume(2, 1, 4, 4, data.clone()).unwrap();
        let negated: Vec<f32> = data.iter().map(|v| -v).collect();
        let b = Tensor::volume(2, 1, 4, 4, negated).unwrap();
        let matches = match_feature_maps(&a, &b, 0).unwrap();
        assert_eq!(matches[0].best_match_index, 0);
        assert!((matches[0].abs_correlation - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::volume(2, 1, 4, 4, vec![0.0f32; 32]).unwrap();
        let b = Tensor::volume(2, 1, 4, 2, vec![0.0f32; 16]).unwrap();
        assert!(match_feature_maps(&a, &b, 0).is_err());
    }
}
