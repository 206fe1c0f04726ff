//! The two 7-level U-net variants, built from a declarative spec.
//!
//! Level layout: encoder levels 1-3 (conv a, conv b, pool), bottom level 4,
//! decoder levels 5-7 (upsample, concat skip, conv a, conv b). Skip
//! connections join level i to level 8-i. The head is a 1x1x1 conv to the
//! last width, ReLU, a 1x1x1 conv to `labels` channels and a channel softmax.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::engine::{glorot_uniform_init, Elem, Tape, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_WIDTHS: [usize; 7] = [64, 128, 256, 512, 256, 128, 64];
pub const TAP_NAMES: [&str; 7] =
    ["conv1b", "conv2b", "conv3b", "conv4b", "conv5b", "conv6b", "conv7b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Aniso,
    Iso,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aniso" => Ok(Variant::Aniso),
            "iso" => Ok(Variant::Iso),
            other => Err(Error::Usage(format!("unknown variant '{other}' (aniso|iso)"))),
        }
    }
}

/// Declarative description of one network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub variant: Variant,
    /// Channel widths of the seven levels, mirror-symmetric.
    pub widths: [usize; 7],
    /// Output classes: 3 (background, TZ, PZ) or 6 (plus bladder, rectum,
    /// femur bones).
    pub labels: usize,
    /// Multiplier on all widths; fractions like 1/8 give minute-scale nets.
    pub width_scale: f64,
    /// Per-convolution channel normalization on the level convs.
    pub normalization: bool,
    /// Iso variant only: swap which conv of each pair is 2D. Default keeps
    /// the first conv 3D and the second 2D.
    #[serde(default)]
    pub iso_order_swapped: bool,
}

impl NetworkSpec {
    pub fn new(variant: Variant, labels: usize) -> Self {
        NetworkSpec {
            variant,
            widths: DEFAULT_WIDTHS,
            labels,
            width_scale: 1.0,
            normalization: true,
            iso_order_swapped: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels != 3 && self.labels != 6 {
            return Err(Error::Config(format!("labels must be 3 or 6, got {}", self.labels)));
        }
        for i in 0..7 {
            if self.widths[i] == 0 {
                return Err(Error::Config("widths must be >= 1".into()));
            }
            if self.widths[i] != self.widths[6 - i] {
                return Err(Error::Config(format!(
                    "widths must be mirror-symmetric, got {:?}",
                    self.widths
                )));
            }
        }
        if !(self.width_scale > 0.0) {
            return Err(Error::Config(format!(
                "width_scale must be > 0, got {}",
                self.width_scale
            )));
        }
        Ok(())
    }

    pub fn scaled_widths(&self) -> [usize; 7] {
        let mut out = [0usize; 7];
        for (o, &w) in out.iter_mut().zip(&self.widths) {
            *o = ((w as f64 * self.width_scale).round() as usize).max(1);
        }
        out
    }

    /// Encoder pooling windows in order, `(d, h, w)` per stage.
    pub fn pool_windows(&self) -> [(usize, usize, usize); 3] {
        match self.variant {
            Variant::Aniso => [(1, 2, 2), (1, 2, 2), (2, 2, 2)],
            Variant::Iso => [(2, 2, 2), (2, 2, 2), (2, 2, 2)],
        }
    }

    /// Decoder upsampling factors feeding levels 5, 6, 7.
    pub fn upsample_factors(&self) -> [(usize, usize, usize); 3] {
        match self.variant {
            Variant::Aniso => [(2, 2, 2), (1, 2, 2), (1, 2, 2)],
            Variant::Iso => [(2, 2, 2), (2, 2, 2), (2, 2, 2)],
        }
    }

    /// Kernel depth of a level conv: 1 for the in-plane (2D) convs, 3 for 3D.
    fn conv_kd(&self, level: usize, second: bool) -> usize {
        match self.variant {
            Variant::Aniso => match level {
                1 | 2 | 6 | 7 => 1,
                _ => 3,
            },
            Variant::Iso => {
                let second_is_2d = !self.iso_order_swapped;
                if second == second_is_2d {
                    1
                } else {
                    3
                }
            }
        }
    }

    /// Input extents must be divisible by these `(d, h, w)` multiples.
    pub fn required_input_multiple(&self) -> (usize, usize, usize) {
        let mut m = (1, 1, 1);
        for (pd, ph, pw) in self.pool_windows() {
            m = (m.0 * pd, m.1 * ph, m.2 * pw);
        }
        m
    }

    /// Cumulative downsampling factor `(d, h, w)` at a tap.
    pub fn tap_downsample(&self, tap: &str) -> Result<(usize, usize, usize)> {
        let level = TAP_NAMES
            .iter()
            .position(|&n| n == tap)
            .ok_or_else(|| Error::Usage(format!("unknown tap name '{tap}'")))?
            + 1;
        let pools = self.pool_windows();
        let stages = match level {
            1 | 7 => 0,
            2 | 6 => 1,
            3 | 5 => 2,
            _ => 3,
        };
        let mut m = (1, 1, 1);
        for &(pd, ph, pw) in pools.iter().take(stages) {
            m = (m.0 * pd, m.1 * ph, m.2 * pw);
        }
        Ok(m)
    }

    /// Channel width at a tap, after width scaling.
    pub fn tap_width(&self, tap: &str) -> Result<usize> {
        let level = TAP_NAMES
            .iter()
            .position(|&n| n == tap)
            .ok_or_else(|| Error::Usage(format!("unknown tap name '{tap}'")))?;
        Ok(self.scaled_widths()[level])
    }

    /// Shapes and names of every parameter, in deterministic build order.
    fn param_specs(&self) -> Vec<ParamSpec> {
        let w = self.scaled_widths();
        let ups = self.upsample_factors();
        let mut out = Vec::new();
        let mut conv = |name: &str, in_c: usize, out_c: usize, kd: usize, kh: usize, kw: usize| {
            out.push(ParamSpec {
                name: format!("{name}_w"),
                shape: vec![out_c, in_c, kd, kh, kw],
                is_bias: false,
            });
            out.push(ParamSpec { name: format!("{name}_b"), shape: vec![out_c], is_bias: true });
        };
        // encoder + bottom
        let enc_in = [1, w[0], w[1], w[2]];
        for level in 1..=4usize {
            let wi = w[level - 1];
            conv(
                &format!("conv{level}a"),
                enc_in[level - 1],
                wi,
                self.conv_kd(level, false),
                3,
                3,
            );
            conv(&format!("conv{level}b"), wi, wi, self.conv_kd(level, true), 3, 3);
        }
        // decoder
        for level in 5..=7usize {
            let wi = w[level - 1];
            let prev = w[level - 2];
            let skip = w[7 - level];
            let (fd, fh, fw) = ups[level - 5];
            conv(&format!("up{level}"), prev, wi, fd, fh, fw);
            conv(
                &format!("conv{level}a"),
                wi + skip,
                wi,
                self.conv_kd(level, false),
                3,
                3,
            );
            conv(&format!("conv{level}b"), wi, wi, self.conv_kd(level, true), 3, 3);
        }
        conv("head1", w[6], w[6], 1, 1, 1);
        conv("head2", w[6], self.labels, 1, 1, 1);
        out
    }
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    is_bias: bool,
}

/// Exact number of weights plus biases, computed from the spec alone.
pub fn parameter_count(spec: &NetworkSpec) -> usize {
    spec.param_specs()
        .iter()
        .map(|p| p.shape.iter().product::<usize>())
        .sum()
}

#[derive(Clone)]
pub struct Param<E> {
    pub name: String,
    pub shape: Vec<usize>,
    pub is_bias: bool,
    pub data: Vec<E>,
}

/// A built network: spec plus named parameter buffers. Parameters are plain
/// buffers; every forward pass watches them onto a fresh tape.
pub struct Model<E> {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub params: Vec<Param<E>>,
}

/// Result of a forward pass. `param_leaves` aligns with `Model::params` so a
/// trainer can look up gradients after `tape.backward`.
#[derive(Debug)]
pub struct Forward<E> {
    pub probs: Tensor<E>,
    pub taps: Vec<(String, Tensor<E>)>,
    pub param_leaves: Vec<Tensor<E>>,
}

/// Glorot-initializes all kernels from `seed`, drawing one sub-seed per
/// parameter in build order. Biases start at zero.
pub fn build_network<E: Elem>(spec: &NetworkSpec, seed: u64) -> Result<Model<E>> {
    use rand::{Rng, SeedableRng};
    spec.validate()?;
    let mut master = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for ps in spec.param_specs() {
        let sub_seed: u64 = master.random();
        let data = if ps.is_bias {
            vec![E::zero(); ps.shape.iter().product()]
        } else {
            let shape5: [usize; 5] = ps.shape.clone().try_into().map_err(|_| {
                Error::Config(format!("kernel {} is not 5-axis: {:?}", ps.name, ps.shape))
            })?;
            glorot_uniform_init(&shape5, sub_seed)?
        };
        params.push(Param { name: ps.name, shape: ps.shape, is_bias: ps.is_bias, data });
    }
    Ok(Model { spec: spec.clone(), seed, params })
}

impl<E: Elem> Model<E> {
    pub fn param(&self, name: &str) -> Option<&Param<E>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn cast<F: Elem>(&self) -> Model<F> {
        Model {
            spec: self.spec.clone(),
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    is_bias: p.is_bias,
                    data: p.data.iter().map(|&v| F::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Forward pass over one `(1, D, H, W)` volume. `capture` selects taps
    /// (`conv1b`..`conv7b`, or `head` for the softmax output); captured taps
    /// are the post-activation outputs of the second conv of each level.
    pub fn forward(&self, tape: &Tape<E>, image: &Tensor<E>, capture: &[&str]) -> Result<Forward<E>> {
        let (c, d, h, w) = image.dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("expected a single-channel image, got {c} channels")));
        }
        let (md, mh, mw) = self.spec.required_input_multiple();
        for (axis, extent, mult) in [("depth", d, md), ("height", h, mh), ("width", w, mw)] {
            if extent % mult != 0 {
                return Err(Error::Shape(format!(
                    "input {axis} extent {extent} is not divisible by {mult}"
                )));
            }
        }
        for cap in capture {
            if *cap != "head" && !TAP_NAMES.contains(cap) {
                return Err(Error::Usage(format!("unknown tap name '{cap}'")));
            }
        }

        let leaves: Vec<Tensor<E>> = self
            .params
            .iter()
            .map(|p| {
                let t = Tensor::new_internal_from_param(p);
                tape.watch(&t)
            })
            .collect();
        let get = |name: &str| -> &Tensor<E> {
            let i = self.params.iter().position(|p| p.name == name).expect("param exists");
            &leaves[i]
        };

        let mut taps: Vec<(String, Tensor<E>)> = Vec::new();
        let mut capture_tap = |name: &str, t: &Tensor<E>| {
            if capture.contains(&name) {
                taps.push((name.to_string(), t.clone()));
            }
        };

        let norm = self.spec.normalization;
        let block = |tape: &Tape<E>, x: &Tensor<E>, name: &str| -> Result<Tensor<E>> {
            let mut y = tape.conv3d(x, get(&format!("{name}_w")), get(&format!("{name}_b")))?;
            if norm {
                y = tape.channel_norm(&y)?;
            }
            Ok(tape.relu(&y))
        };

        let pools = self.spec.pool_windows();
        let ups = self.spec.upsample_factors();

        // encoder
        let l1 = block(tape, &block(tape, image, "conv1a")?, "conv1b")?;
        capture_tap("conv1b", &l1);
        let l2 = block(tape, &block(tape, &tape.maxpool(&l1, pools[0])?, "conv2a")?, "conv2b")?;
        capture_tap("conv2b", &l2);
        let l3 = block(tape, &block(tape, &tape.maxpool(&l2, pools[1])?, "conv3a")?, "conv3b")?;
        capture_tap("conv3b", &l3);
        let l4 = block(tape, &block(tape, &tape.maxpool(&l3, pools[2])?, "conv4a")?, "conv4b")?;
        capture_tap("conv4b", &l4);

        // decoder with skip connections (level i joined to level 8-i)
        let mut x = l4;
        for (level, skip) in [(5usize, &l3), (6, &l2), (7, &l1)] {
            let up = tape.upsample_transposed(
                &x,
                get(&format!("up{level}_w")),
                get(&format!("up{level}_b")),
                ups[level - 5],
            )?;
            let joined = tape.concat_channels(&up, skip)?;
            x = block(tape, &block(tape, &joined, &format!("conv{level}a"))?, &format!("conv{level}b"))?;
            let name = format!("conv{level}b");
            if capture.contains(&name.as_str()) {
                taps.push((name, x.clone()));
            }
        }

        // head: 1x1x1 convs, no normalization
        let hmid = tape.relu(&tape.conv3d(&x, get("head1_w"), get("head1_b"))?);
        let logits = tape.conv3d(&hmid, get("head2_w"), get("head2_b"))?;
        let probs = tape.softmax_channels(&logits)?;
        if capture.contains(&"head") {
            taps.push(("head".into(), probs.clone()));
        }
        Ok(Forward { probs, taps, param_leaves: leaves })
    }

    /// Hard segmentation: per-voxel argmax over the probability channels.
    pub fn predict(&self, image: &Tensor<E>) -> Result<Vec<u8>> {
        let tape = Tape::inference();
        let fwd = self.forward(&tape, image, &[])?;
        Ok(argmax_channels(&fwd.probs))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for p in &self.params {
            let bytes = (p.data.len() * 4) as u64;
            entries.push(serde_json::json!({
                "name": p.name,
                "shape": p.shape,
                "is_bias": p.is_bias,
                "offset": offset,
                "len": p.data.len(),
            }));
            offset += bytes;
        }
        let header = serde_json::json!({
            "format": "zsegckpt1",
            "spec": self.spec,
            "seed": self.seed,
            "params": entries,
        });
        let header_bytes = serde_json::to_vec(&header).expect("serializable header");
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for p in &self.params {
            for &v in &p.data {
                f.write_all(&(v.to_f64() as f32).to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut len8 = [0u8; 8];
    f.read_exact(&mut len8)
        .map_err(|_| Error::Format { offset: 0, msg: "truncated checkpoint header length".into() })?;
    let hlen = u64::from_le_bytes(len8) as usize;
    let mut hbuf = vec![0u8; hlen];
    f.read_exact(&mut hbuf)
        .map_err(|_| Error::Format { offset: 8, msg: "truncated checkpoint header".into() })?;
    let header: serde_json::Value = serde_json::from_slice(&hbuf)
        .map_err(|e| Error::Format { offset: 8, msg: format!("bad checkpoint header: {e}") })?;
    if header["format"] != "zsegckpt1" {
        return Err(Error::Format { offset: 8, msg: "not a zsegckpt1 checkpoint".into() });
    }
    let spec: NetworkSpec = serde_json::from_value(header["spec"].clone())
        .map_err(|e| Error::Format { offset: 8, msg: format!("bad spec in checkpoint: {e}") })?;
    let seed = header["seed"].as_u64().unwrap_or(0);
    let mut params = Vec::new();
    let mut pos = (8 + hlen) as u64;
    for e in header["params"].as_array().cloned().unwrap_or_default() {
        let name = e["name"].as_str().unwrap_or("").to_string();
        let shape: Vec<usize> =
            serde_json::from_value(e["shape"].clone()).map_err(|err| Error::Format {
                offset: pos,
                msg: format!("bad shape for parameter {name}: {err}"),
            })?;
        let len = e["len"].as_u64().unwrap_or(0) as usize;
        if shape.iter().product::<usize>() != len {
            return Err(Error::Format {
                offset: pos,
                msg: format!("parameter {name}: shape {shape:?} does not match length {len}"),
            });
        }
        let mut raw = vec![0u8; len * 4];
        f.read_exact(&mut raw).map_err(|_| Error::Format {
            offset: pos,
            msg: format!("truncated payload for parameter {name}"),
        })?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        pos += (len * 4) as u64;
        params.push(Param { name, shape, is_bias: e["is_bias"].as_bool().unwrap_or(false), data });
    }
    Ok(Model { spec, seed, params })
}

/// Per-voxel argmax over channels of a `(C, D, H, W)` probability tensor.
pub fn argmax_channels<E: Elem>(probs: &Tensor<E>) -> Vec<u8> {
    let (c, d, h, w) = probs.dims4().expect("4-axis tensor");
    let sp = d * h * w;
    let data = probs.data();
    (0..sp)
        .map(|v| {
            let mut best = 0usize;
            let mut best_v = data[v];
            for ch in 1..c {
                if data[ch * sp + v] > best_v {
                    best_v = data[ch * sp + v];
                    best = ch;
                }
            }
            best as u8
        })
        .collect()
}

impl<E: Elem> Tensor<E> {
    fn new_internal_from_param(p: &Param<E>) -> Tensor<E> {
        Tensor::from_vec(p.shape.clone(), p.data.clone()).expect("param shape consistent")
    }
}
