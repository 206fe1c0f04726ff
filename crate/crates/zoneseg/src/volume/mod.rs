//! Bit-exact `.zvol` volume container and the spatial conventions used
//! throughout: x = left-right (fastest varying), y = anterior-posterior,
//! z = inferior-superior (axial slices). Left-right flips flip x; base/apex
//! splits partition z.

pub mod phantom;
pub mod resample;
pub mod stats;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::engine::{Elem, Tensor};
use crate::error::{Error, Result};

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_TZ: u8 = 1;
pub const LABEL_PZ: u8 = 2;
pub const LABEL_BLADDER: u8 = 3;
pub const LABEL_RECTUM: u8 = 4;
pub const LABEL_FEMUR: u8 = 5;

pub fn label_names(n_labels: usize) -> Vec<String> {
    let all = ["background", "TZ", "PZ", "bladder", "rectum", "femur"];
    all[..n_labels].iter().map(|s| s.to_string()).collect()
}

const MAGIC: &[u8; 8] = b"ZSEGVOL1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
    Uint8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Image,
    Labels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    /// Extents `(nx, ny, nz)`; the voxel buffer is x fastest, then y, then z.
    pub dims: (usize, usize, usize),
    pub spacing_mm: (f64, f64, f64),
    pub dtype: Dtype,
    pub kind: Kind,
    pub label_names: Option<Vec<String>>,
}

impl VolumeHeader {
    pub fn voxel_count(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = self.dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Data(format!("all dims must be >= 1, got {:?}", self.dims)));
        }
        let (sx, sy, sz) = self.spacing_mm;
        if !(sx > 0.0 && sy > 0.0 && sz > 0.0) {
            return Err(Error::Data(format!(
                "all spacings must be > 0, got {:?}",
                self.spacing_mm
            )));
        }
        if self.kind == Kind::Labels && self.dtype != Dtype::Uint8 {
            return Err(Error::Data("labels volumes must use uint8".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageVolume {
    pub header: VolumeHeader,
    pub voxels: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    pub header: VolumeHeader,
    pub voxels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Image(ImageVolume),
    Labels(LabelVolume),
}

impl ImageVolume {
    pub fn new(dims: (usize, usize, usize), spacing_mm: (f64, f64, f64), voxels: Vec<f32>) -> Result<Self> {
        let header = VolumeHeader {
            dims,
            spacing_mm,
            dtype: Dtype::Float32,
            kind: Kind::Image,
            label_names: None,
        };
        header.validate()?;
        if voxels.len() != header.voxel_count() {
            return Err(Error::Data(format!(
                "dims {:?} imply {} voxels, buffer has {}",
                dims,
                header.voxel_count(),
                voxels.len()
            )));
        }
        Ok(ImageVolume { header, voxels })
    }

    /// View as a single-channel `(1, nz, ny, nx)` tensor; the buffer order
    /// matches the tensor layout directly.
    pub fn to_tensor<E: Elem>(&self) -> Tensor<E> {
        let (nx, ny, nz) = self.header.dims;
        let data = self.voxels.iter().map(|&v| E::from_f64(v as f64)).collect();
        Tensor::volume(1, nz, ny, nx, data).expect("consistent dims")
    }
}

impl LabelVolume {
    pub fn new(
        dims: (usize, usize, usize),
        spacing_mm: (f64, f64, f64),
        label_names: Vec<String>,
        voxels: Vec<u8>,
    ) -> Result<Self> {
        let header = VolumeHeader {
            dims,
            spacing_mm,
            dtype: Dtype::Uint8,
            kind: Kind::Labels,
            label_names: Some(label_names),
        };
        header.validate()?;
        if voxels.len() != header.voxel_count() {
            return Err(Error::Data(format!(
                "dims {:?} imply {} voxels, buffer has {}",
                dims,
                header.voxel_count(),
                voxels.len()
            )));
        }
        let v = LabelVolume { header, voxels };
        v.validate_values()?;
        Ok(v)
    }

    pub fn n_labels(&self) -> usize {
        self.header.label_names.as_ref().map(|n| n.len()).unwrap_or(0)
    }

    fn validate_values(&self) -> Result<()> {
        let n = self.n_labels();
        if let Some(bad) = self.voxels.iter().position(|&v| (v as usize) >= n) {
            return Err(Error::Data(format!(
                "label value {} at voxel {bad} out of range for {n} label names",
                self.voxels[bad]
            )));
        }
        Ok(())
    }

    pub fn count(&self, label: u8) -> usize {
        self.voxels.iter().filter(|&&v| v == label).count()
    }
}

pub fn write_volume(volume: &Volume, path: &Path) -> Result<()> {
    let (header, payload): (&VolumeHeader, Vec<u8>) = match volume {
        Volume::Image(v) => (
            &v.header,
            v.voxels.iter().flat_map(|f| f.to_le_bytes()).collect(),
        ),
        Volume::Labels(v) => (&v.header, v.voxels.clone()),
    };
    header.validate()?;
    let json = serde_json::to_vec(header).expect("serializable header");
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&[0u8; 8])?; // reserved
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&payload)?;
    f.flush()?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 16];
    f.read_exact(&mut magic)
        .map_err(|_| Error::Format { offset: 0, msg: "file shorter than magic".into() })?;
    if &magic[..8] != MAGIC {
        return Err(Error::Format { offset: 0, msg: "bad magic, not a .zvol file".into() });
    }
    let mut len8 = [0u8; 8];
    f.read_exact(&mut len8)
        .map_err(|_| Error::Format { offset: 16, msg: "truncated header length".into() })?;
    let hlen = u64::from_le_bytes(len8) as usize;
    let mut hbuf = vec![0u8; hlen];
    f.read_exact(&mut hbuf)
        .map_err(|_| Error::Format { offset: 24, msg: "truncated JSON header".into() })?;
    let header: VolumeHeader = serde_json::from_slice(&hbuf)
        .map_err(|e| Error::Format { offset: 24, msg: format!("bad JSON header: {e}") })?;
    header.validate()?;
    let payload_offset = 24 + hlen as u64;
    let n = header.voxel_count();
    match header.dtype {
        Dtype::Float32 => {
            let mut raw = vec![0u8; n * 4];
            f.read_exact(&mut raw).map_err(|_| Error::Format {
                offset: payload_offset,
                msg: format!("truncated payload, expected {} bytes", n * 4),
            })?;
            let voxels = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(Volume::Image(ImageVolume { header, voxels }))
        }
        Dtype::Uint8 => {
            let mut voxels = vec![0u8; n];
            f.read_exact(&mut voxels).map_err(|_| Error::Format {
                offset: payload_offset,
                msg: format!("truncated payload, expected {n} bytes"),
            })?;
            let v = LabelVolume { header, voxels };
            v.validate_values()?;
            Ok(Volume::Labels(v))
        }
    }
}

/// Flat index for `(x, y, z)` in the container layout.
#[inline]
pub fn voxel_index(dims: (usize, usize, usize), x: usize, y: usize, z: usize) -> usize {
    (z * dims.1 + y) * dims.0 + x
}
