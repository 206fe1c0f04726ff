//! Forward ops and their backward closures. Every op runs eagerly and, when
//! the tape is recording, pushes a node whose closure produces gradients for
//! the tracked parents only.

use std::sync::Arc;

use super::tape::Tape;
use super::tensor::Tensor;
use super::{gemm_rowmajor, Elem};
use crate::error::{Error, Result};

const LOG_CLAMP: f64 = 1e-12;
const NORM_EPS: f64 = 1e-5;

impl<E: Elem> Tape<E> {
    /// Elementwise max(x, 0). Subgradient 0 at x = 0.
    pub fn relu(&self, x: &Tensor<E>) -> Tensor<E> {
        let out: Vec<E> = x.data().iter().map(|&v| v.max(E::zero())).collect();
        let node = match x.node {
            Some(px) if self.is_recording() => {
                let xd = x.data_arc();
                self.push(
                    vec![px],
                    out.len(),
                    Box::new(move |g| {
                        vec![g
                            .iter()
                            .zip(xd.iter())
                            .map(|(&gi, &xi)| if xi > E::zero() { gi } else { E::zero() })
                            .collect()]
                    }),
                )
            }
            _ => None,
        };
        Tensor::new_internal(x.shape().to_vec(), out, node)
    }

    pub fn add(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "add: mismatched shapes {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let out: Vec<E> = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        let node = self.binary_node(a, b, out.len(), move |g, which| {
            let _ = which;
            g.to_vec()
        });
        Ok(Tensor::new_internal(a.shape().to_vec(), out, node))
    }

    pub fn mul(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "mul: mismatched shapes {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let out: Vec<E> = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let (ad, bd) = (a.data_arc(), b.data_arc());
        let node = self.binary_node(a, b, out.len(), move |g, which| {
            let other: &[E] = if which == 0 { &bd } else { &ad };
            g.iter().zip(other).map(|(&gi, &o)| gi * o).collect()
        });
        Ok(Tensor::new_internal(a.shape().to_vec(), out, node))
    }

    pub fn sum(&self, x: &Tensor<E>) -> Tensor<E> {
        let total = x.data().iter().fold(E::zero(), |acc, &v| acc + v);
        let n = x.len();
        let node = match x.node {
            Some(px) if self.is_recording() => {
                self.push(vec![px], 1, Box::new(move |g| vec![vec![g[0]; n]]))
            }
            _ => None,
        };
        Tensor::new_internal(vec![1], vec![total], node)
    }

    /// Concatenates along the channel axis; `a`'s channels precede `b`'s.
    pub fn concat_channels(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (ca, d, h, w) = a.dims4()?;
        let (cb, db, hb, wb) = b.dims4()?;
        if (d, h, w) != (db, hb, wb) {
            return Err(Error::Shape(format!(
                "concat_channels: spatial mismatch ({d},{h},{w}) vs ({db},{hb},{wb})"
            )));
        }
        let mut out = Vec::with_capacity((ca + cb) * d * h * w);
        out.extend_from_slice(a.data());
        out.extend_from_slice(b.data());
        let na = a.len();
        let node = self.binary_node(a, b, out.len(), move |g, which| {
            if which == 0 {
                g[..na].to_vec()
            } else {
                g[na..].to_vec()
            }
        });
        Ok(Tensor::new_internal(vec![ca + cb, d, h, w], out, node))
    }

    /// Per-voxel softmax over the channel axis, with max subtraction for
    /// stability.
    pub fn softmax_channels(&self, logits: &Tensor<E>) -> Result<Tensor<E>> {
        let (c, d, h, w) = logits.dims4()?;
        if c < 2 {
            return Err(Error::Shape(format!("softmax_channels requires >= 2 channels, got {c}")));
        }
        let sp = d * h * w;
        let x = logits.data();
        let mut out = vec![E::zero(); x.len()];
        for v in 0..sp {
            let mut mx = x[v];
            for ch in 1..c {
                mx = mx.max(x[ch * sp + v]);
            }
            let mut z = E::zero();
            for ch in 0..c {
                let e = (x[ch * sp + v] - mx).exp();
                out[ch * sp + v] = e;
                z = z + e;
            }
            for ch in 0..c {
                out[ch * sp + v] = out[ch * sp + v] / z;
            }
        }
        let node = match logits.node {
            Some(px) if self.is_recording() => {
                let p = Arc::new(out.clone());
                self.push(
                    vec![px],
                    out.len(),
                    Box::new(move |g| {
                        let mut gin = vec![E::zero(); g.len()];
                        for v in 0..sp {
                            let mut dot = E::zero();
                            for ch in 0..c {
                                let i = ch * sp + v;
                                dot = dot + g[i] * p[i];
                            }
                            for ch in 0..c {
                                let i = ch * sp + v;
                                gin[i] = p[i] * (g[i] - dot);
                            }
                        }
                        vec![gin]
                    }),
                )
            }
            _ => None,
        };
        Ok(Tensor::new_internal(vec![c, d, h, w], out, node))
    }

    /// Normalizes each channel to zero mean / unit variance over the whole
    /// volume (batch size is one full volume, so these are instance
    /// statistics).
    pub fn channel_norm(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (c, d, h, w) = x.dims4()?;
        let sp = d * h * w;
        let eps = E::from_f64(NORM_EPS);
        let inv_n = E::from_f64(1.0 / sp as f64);
        let xd = x.data();
        let mut out = vec![E::zero(); xd.len()];
        let mut inv_std = vec![E::zero(); c];
        for ch in 0..c {
            let s = &xd[ch * sp..(ch + 1) * sp];
            let mean = s.iter().fold(E::zero(), |a, &v| a + v) * inv_n;
            let var = s.iter().fold(E::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_n;
            let is = (var + eps).sqrt().recip();
            inv_std[ch] = is;
            for (o, &v) in out[ch * sp..(ch + 1) * sp].iter_mut().zip(s) {
                *o = (v - mean) * is;
            }
        }
        let node = match x.node {
            Some(px) if self.is_recording() => {
                let y = Arc::new(out.clone());
                let inv_std = Arc::new(inv_std);
                self.push(
                    vec![px],
                    out.len(),
                    Box::new(move |g| {
                        let mut gin = vec![E::zero(); g.len()];
                        for ch in 0..c {
                            let ys = &y[ch * sp..(ch + 1) * sp];
                            let gs = &g[ch * sp..(ch + 1) * sp];
                            let mean_g = gs.iter().fold(E::zero(), |a, &v| a + v) * inv_n;
                            let mean_gy = gs
                                .iter()
                                .zip(ys)
                                .fold(E::zero(), |a, (&gi, &yi)| a + gi * yi)
                                * inv_n;
                            for ((o, &gi), &yi) in
                                gin[ch * sp..(ch + 1) * sp].iter_mut().zip(gs).zip(ys)
                            {
                                *o = inv_std[ch] * (gi - mean_g - yi * mean_gy);
                            }
                        }
                        vec![gin]
                    }),
                )
            }
            _ => None,
        };
        Ok(Tensor::new_internal(vec![c, d, h, w], out, node))
    }

    /// Same-padded 3D convolution; kernel depth 1 makes it a per-slice 2D
    /// convolution. Weights are `(out_c, in_c, kd, kh, kw)`, bias `(out_c)`.
    pub fn conv3d(
        &self,
        input: &Tensor<E>,
        weights: &Tensor<E>,
        bias: &Tensor<E>,
    ) -> Result<Tensor<E>> {
        let (ci, d, h, w) = input.dims4()?;
        let &[co, wci, kd, kh, kw] = match weights.shape() {
            s @ &[_, _, _, _, _] => <&[usize; 5]>::try_from(s).unwrap(),
            other => {
                return Err(Error::Shape(format!("conv3d: weights must be 5-axis, got {other:?}")))
            }
        };
        if wci != ci {
            return Err(Error::Shape(format!(
                "conv3d: input has {ci} channels, kernel expects {wci}"
            )));
        }
        if bias.shape() != [co] {
            return Err(Error::Shape(format!(
                "conv3d: bias shape {:?} does not match {co} output channels",
                bias.shape()
            )));
        }
        if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Config(format!(
                "conv3d: kernel extents must be odd for same padding, got ({kd},{kh},{kw})"
            )));
        }
        let dims = ConvDims { ci, d, h, w, co, kd, kh, kw };
        let n = d * h * w;
        let k = ci * kd * kh * kw;
        let col = im2col(input.data(), &dims);
        let mut out = vec![E::zero(); co * n];
        gemm_rowmajor(co, k, n, weights.data(), &col, &mut out);
        drop(col);
        for ch in 0..co {
            let b = bias.data()[ch];
            for o in &mut out[ch * n..(ch + 1) * n] {
                *o = *o + b;
            }
        }
        let node = if self.is_recording() {
            let parents: Vec<(usize, usize)> = [input.node, weights.node, bias.node]
                .iter()
                .enumerate()
                .filter_map(|(slot, id)| id.map(|id| (slot, id)))
                .collect();
            if parents.is_empty() {
                None
            } else {
                let ids: Vec<usize> = parents.iter().map(|&(_, id)| id).collect();
                let slots: Vec<usize> = parents.iter().map(|&(slot, _)| slot).collect();
                let xd = input.data_arc();
                let wd = weights.data_arc();
                self.push(
                    ids,
                    out.len(),
                    Box::new(move |g| {
                        conv3d_backward(g, &xd, &wd, &dims, &slots)
                    }),
                )
            }
        } else {
            None
        };
        Ok(Tensor::new_internal(vec![co, d, h, w], out, node))
    }

    /// Disjoint-window max pooling. Backward routes the gradient to the
    /// argmax voxel, first in scan order on ties.
    pub fn maxpool(&self, input: &Tensor<E>, window: (usize, usize, usize)) -> Result<Tensor<E>> {
        let (c, d, h, w) = input.dims4()?;
        let (pd, ph, pw) = window;
        for (name, extent, win) in [("depth", d, pd), ("height", h, ph), ("width", w, pw)] {
            if win == 0 || extent % win != 0 {
                return Err(Error::Shape(format!(
                    "maxpool: {name} extent {extent} not divisible by window {win}"
                )));
            }
        }
        let (od, oh, ow) = (d / pd, h / ph, w / pw);
        let x = input.data();
        let mut out = vec![E::zero(); c * od * oh * ow];
        let mut argmax = vec![0u32; out.len()];
        let mut oi = 0;
        for ch in 0..c {
            for z in 0..od {
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut best = E::neg_infinity();
                        let mut best_i = 0usize;
                        for dz in 0..pd {
                            for dy in 0..ph {
                                for dx in 0..pw {
                                    let i = ((ch * d + z * pd + dz) * h + y * ph + dy) * w
                                        + xo * pw
                                        + dx;
                                    if x[i] > best {
                                        best = x[i];
                                        best_i = i;
                                    }
                                }
                            }
                        }
                        out[oi] = best;
                        argmax[oi] = best_i as u32;
                        oi += 1;
                    }
                }
            }
        }
        let in_len = x.len();
        let node = match input.node {
            Some(px) if self.is_recording() => {
                let argmax = Arc::new(argmax);
                self.push(
                    vec![px],
                    out.len(),
                    Box::new(move |g| {
                        let mut gin = vec![E::zero(); in_len];
                        for (o, &src) in argmax.iter().enumerate() {
                            gin[src as usize] = gin[src as usize] + g[o];
                        }
                        vec![gin]
                    }),
                )
            }
            _ => None,
        };
        Ok(Tensor::new_internal(vec![c, od, oh, ow], out, node))
    }

    /// Transposed convolution with stride equal to the kernel extents, so
    /// each input voxel expands into a disjoint output block of the given
    /// factor. Weights are `(out_c, in_c, fd, fh, fw)`.
    pub fn upsample_transposed(
        &self,
        input: &Tensor<E>,
        weights: &Tensor<E>,
        bias: &Tensor<E>,
        factor: (usize, usize, usize),
    ) -> Result<Tensor<E>> {
        let (ci, d, h, w) = input.dims4()?;
        let &[co, wci, fd, fh, fw] = match weights.shape() {
            s @ &[_, _, _, _, _] => <&[usize; 5]>::try_from(s).unwrap(),
            other => {
                return Err(Error::Shape(format!(
                    "upsample_transposed: weights must be 5-axis, got {other:?}"
                )))
            }
        };
        if (fd, fh, fw) != factor {
            return Err(Error::Config(format!(
                "upsample_transposed: kernel extents ({fd},{fh},{fw}) must equal factor {factor:?}"
            )));
        }
        if wci != ci {
            return Err(Error::Shape(format!(
                "upsample_transposed: input has {ci} channels, kernel expects {wci}"
            )));
        }
        if bias.shape() != [co] {
            return Err(Error::Shape(format!(
                "upsample_transposed: bias shape {:?} does not match {co} output channels",
                bias.shape()
            )));
        }
        let (od, oh, ow) = (d * fd, h * fh, w * fw);
        let x = input.data();
        let wt = weights.data();
        let mut out = vec![E::zero(); co * od * oh * ow];
        for cho in 0..co {
            let b = bias.data()[cho];
            for o in &mut out[cho * od * oh * ow..(cho + 1) * od * oh * ow] {
                *o = b;
            }
            for chi in 0..ci {
                for dz in 0..fd {
                    for dy in 0..fh {
                        for dx in 0..fw {
                            let wv = wt[(((cho * ci + chi) * fd + dz) * fh + dy) * fw + dx];
                            for z in 0..d {
                                for y in 0..h {
                                    let orow =
                                        ((cho * od + z * fd + dz) * oh + y * fh + dy) * ow + dx;
                                    let irow = ((chi * d + z) * h + y) * w;
                                    for xv in 0..w {
                                        out[orow + xv * fw] =
                                            out[orow + xv * fw] + wv * x[irow + xv];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let node = if self.is_recording() {
            let parents: Vec<(usize, usize)> = [input.node, weights.node, bias.node]
                .iter()
                .enumerate()
                .filter_map(|(slot, id)| id.map(|id| (slot, id)))
                .collect();
            if parents.is_empty() {
                None
            } else {
                let ids: Vec<usize> = parents.iter().map(|&(_, id)| id).collect();
                let slots: Vec<usize> = parents.iter().map(|&(slot, _)| slot).collect();
                let xd = input.data_arc();
                let wd = weights.data_arc();
                let dims = (ci, d, h, w, co, fd, fh, fw);
                self.push(
                    ids,
                    out.len(),
                    Box::new(move |g| upsample_backward(g, &xd, &wd, dims, &slots)),
                )
            }
        } else {
            None
        };
        Ok(Tensor::new_internal(vec![co, od, oh, ow], out, node))
    }

    /// Weighted negative log-likelihood over per-voxel probabilities:
    /// `(1/N_valid) * sum_v weight(label_v) * -ln(max(p_v(label_v), 1e-12))`.
    /// Voxels where `valid` is false (padding) are excluded.
    pub fn weighted_nll(
        &self,
        probs: &Tensor<E>,
        labels: &[u8],
        weights: &[f64],
        valid: Option<&[bool]>,
    ) -> Result<Tensor<E>> {
        let (c, d, h, w) = probs.dims4()?;
        let sp = d * h * w;
        if labels.len() != sp {
            return Err(Error::Shape(format!(
                "weighted_nll: {} labels for {sp} voxels",
                labels.len()
            )));
        }
        if let Some(v) = valid {
            if v.len() != sp {
                return Err(Error::Shape(format!(
                    "weighted_nll: validity mask length {} for {sp} voxels",
                    v.len()
                )));
            }
        }
        let clamp = E::from_f64(LOG_CLAMP);
        let mut n_valid = 0usize;
        let mut total = E::zero();
        for v in 0..sp {
            if valid.map(|m| !m[v]).unwrap_or(false) {
                continue;
            }
            let lbl = labels[v] as usize;
            if lbl >= c {
                return Err(Error::Data(format!(
                    "weighted_nll: label {lbl} out of range for {c} classes at voxel {v}"
                )));
            }
            let wt = *weights.get(lbl).ok_or_else(|| {
                Error::Usage(format!("weighted_nll: no weight for label {lbl}"))
            })?;
            n_valid += 1;
            let p = probs.data()[lbl * sp + v].max(clamp);
            total = total - E::from_f64(wt) * p.ln();
        }
        if n_valid == 0 {
            return Err(Error::Data("weighted_nll: no valid voxels".into()));
        }
        let inv_n = E::from_f64(1.0 / n_valid as f64);
        let loss = total * inv_n;
        let node = match probs.node {
            Some(px) if self.is_recording() => {
                let pd = probs.data_arc();
                let labels: Arc<Vec<u8>> = Arc::new(labels.to_vec());
                let weights: Arc<Vec<f64>> = Arc::new(weights.to_vec());
                let valid: Option<Arc<Vec<bool>>> = valid.map(|v| Arc::new(v.to_vec()));
                self.push(
                    vec![px],
                    1,
                    Box::new(move |g| {
                        let mut gin = vec![E::zero(); pd.len()];
                        for v in 0..sp {
                            if valid.as_ref().map(|m| !m[v]).unwrap_or(false) {
                                continue;
                            }
                            let lbl = labels[v] as usize;
                            let i = lbl * sp + v;
                            let p = pd[i].max(clamp);
                            gin[i] = -g[0] * E::from_f64(weights[lbl]) * inv_n / p;
                        }
                        vec![gin]
                    }),
                )
            }
            _ => None,
        };
        Ok(Tensor::new_internal(vec![1], vec![loss], node))
    }

    /// Node builder for ops with two potentially-tracked parents whose
    /// per-parent gradients share one closure (`which` is 0 for `a`).
    fn binary_node(
        &self,
        a: &Tensor<E>,
        b: &Tensor<E>,
        len: usize,
        grad: impl Fn(&[E], usize) -> Vec<E> + 'static,
    ) -> Option<usize> {
        if !self.is_recording() {
            return None;
        }
        let parents: Vec<(usize, usize)> = [a.node, b.node]
            .iter()
            .enumerate()
            .filter_map(|(slot, id)| id.map(|id| (slot, id)))
            .collect();
        if parents.is_empty() {
            return None;
        }
        let ids: Vec<usize> = parents.iter().map(|&(_, id)| id).collect();
        let slots: Vec<usize> = parents.iter().map(|&(slot, _)| slot).collect();
        self.push(
            ids,
            len,
            Box::new(move |g| slots.iter().map(|&s| grad(g, s)).collect()),
        )
    }
}

#[derive(Clone, Copy)]
struct ConvDims {
    ci: usize,
    d: usize,
    h: usize,
    w: usize,
    co: usize,
    kd: usize,
    kh: usize,
    kw: usize,
}

/// Unrolls the padded input into a `(ci*kd*kh*kw) x (d*h*w)` matrix so the
/// convolution becomes one GEMM. Row copies are contiguous along x.
fn im2col<E: Elem>(x: &[E], dims: &ConvDims) -> Vec<E> {
    let &ConvDims { ci, d, h, w, kd, kh, kw, .. } = dims;
    let n = d * h * w;
    let (pd, ph, pw) = ((kd - 1) / 2, (kh - 1) / 2, (kw - 1) / 2);
    let mut col = vec![E::zero(); ci * kd * kh * kw * n];
    let mut r = 0usize;
    for c in 0..ci {
        for dz in 0..kd {
            let oz = dz as isize - pd as isize;
            for dy in 0..kh {
                let oy = dy as isize - ph as isize;
                for dx in 0..kw {
                    let ox = dx as isize - pw as isize;
                    let row = &mut col[r * n..(r + 1) * n];
                    r += 1;
                    let x0 = (-ox).max(0) as usize;
                    let x1 = ((w as isize - ox).max(0) as usize).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    for z in 0..d {
                        let iz = z as isize + oz;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for y in 0..h {
                            let iy = y as isize + oy;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src =
                                ((c * d + iz as usize) * h + iy as usize) * w + (x0 as isize + ox) as usize;
                            let dst = (z * h + y) * w + x0;
                            row[dst..dst + (x1 - x0)]
                                .copy_from_slice(&x[src..src + (x1 - x0)]);
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-adds a column matrix back into input layout (adjoint of im2col).
fn col2im<E: Elem>(col: &[E], dims: &ConvDims) -> Vec<E> {
    let &ConvDims { ci, d, h, w, kd, kh, kw, .. } = dims;
    let n = d * h * w;
    let (pd, ph, pw) = ((kd - 1) / 2, (kh - 1) / 2, (kw - 1) / 2);
    let mut x = vec![E::zero(); ci * n];
    let mut r = 0usize;
    for c in 0..ci {
        for dz in 0..kd {
            let oz = dz as isize - pd as isize;
            for dy in 0..kh {
                let oy = dy as isize - ph as isize;
                for dx in 0..kw {
                    let ox = dx as isize - pw as isize;
                    let row = &col[r * n..(r + 1) * n];
                    r += 1;
                    let x0 = (-ox).max(0) as usize;
                    let x1 = ((w as isize - ox).max(0) as usize).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    for z in 0..d {
                        let iz = z as isize + oz;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for y in 0..h {
                            let iy = y as isize + oy;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dst =
                                ((c * d + iz as usize) * h + iy as usize) * w + (x0 as isize + ox) as usize;
                            let src = (z * h + y) * w + x0;
                            for i in 0..(x1 - x0) {
                                x[dst + i] = x[dst + i] + row[src + i];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Gradients for the tracked conv3d parents listed in `slots`
/// (0 = input, 1 = weights, 2 = bias). The im2col matrix is recomputed here
/// rather than cached on the tape to keep peak memory flat.
fn conv3d_backward<E: Elem>(
    g: &[E],
    x: &[E],
    wt: &[E],
    dims: &ConvDims,
    slots: &[usize],
) -> Vec<Vec<E>> {
    let &ConvDims { ci, d, h, w, co, kd, kh, kw } = dims;
    let n = d * h * w;
    let k = ci * kd * kh * kw;
    let mut out = Vec::with_capacity(slots.len());
    for &slot in slots {
        match slot {
            0 => {
                // dcol = W^T (k x co) * g (co x n), then fold back to input
                let mut dcol = vec![E::zero(); k * n];
                unsafe {
                    E::gemm(
                        k,
                        co,
                        n,
                        E::one(),
                        wt.as_ptr(),
                        1,
                        k as isize,
                        g.as_ptr(),
                        n as isize,
                        1,
                        E::zero(),
                        dcol.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
                out.push(col2im(&dcol, dims));
            }
            1 => {
                // dW = g (co x n) * col^T (n x k)
                let col = im2col(x, dims);
                let mut dw = vec![E::zero(); co * k];
                unsafe {
                    E::gemm(
                        co,
                        n,
                        k,
                        E::one(),
                        g.as_ptr(),
                        n as isize,
                        1,
                        col.as_ptr(),
                        1,
                        n as isize,
                        E::zero(),
                        dw.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
                out.push(dw);
            }
            2 => {
                let mut db = vec![E::zero(); co];
                for ch in 0..co {
                    db[ch] = g[ch * n..(ch + 1) * n].iter().fold(E::zero(), |a, &v| a + v);
                }
                out.push(db);
            }
            _ => unreachable!(),
        }
    }
    out
}

#[allow(clippy::type_complexity)]
fn upsample_backward<E: Elem>(
    g: &[E],
    x: &[E],
    wt: &[E],
    (ci, d, h, w, co, fd, fh, fw): (usize, usize, usize, usize, usize, usize, usize, usize),
    slots: &[usize],
) -> Vec<Vec<E>> {
    let (od, oh, ow) = (d * fd, h * fh, w * fw);
    let mut out = Vec::with_capacity(slots.len());
    for &slot in slots {
        match slot {
            0 => {
                let mut gin = vec![E::zero(); ci * d * h * w];
                for cho in 0..co {
                    for chi in 0..ci {
                        for dz in 0..fd {
                            for dy in 0..fh {
                                for dx in 0..fw {
                                    let wv =
                                        wt[(((cho * ci + chi) * fd + dz) * fh + dy) * fw + dx];
                                    for z in 0..d {
                                        for y in 0..h {
                                            let orow = ((cho * od + z * fd + dz) * oh + y * fh + dy)
                                                * ow
                                                + dx;
                                            let irow = ((chi * d + z) * h + y) * w;
                                            for xv in 0..w {
                                                gin[irow + xv] =
                                                    gin[irow + xv] + wv * g[orow + xv * fw];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                out.push(gin);
            }
            1 => {
                let mut dw = vec![E::zero(); co * ci * fd * fh * fw];
                for cho in 0..co {
                    for chi in 0..ci {
                        for dz in 0..fd {
                            for dy in 0..fh {
                                for dx in 0..fw {
                                    let mut acc = E::zero();
                                    for z in 0..d {
                                        for y in 0..h {
                                            let orow = ((cho * od + z * fd + dz) * oh + y * fh + dy)
                                                * ow
                                                + dx;
                                            let irow = ((chi * d + z) * h + y) * w;
                                            for xv in 0..w {
                                                acc = acc + x[irow + xv] * g[orow + xv * fw];
                                            }
                                        }
                                    }
                                    dw[(((cho * ci + chi) * fd + dz) * fh + dy) * fw + dx] = acc;
                                }
                            }
                        }
                    }
                }
                out.push(dw);
            }
            2 => {
                let sp = od * oh * ow;
                let mut db = vec![E::zero(); co];
                for ch in 0..co {
                    db[ch] = g[ch * sp..(ch + 1) * sp].iter().fold(E::zero(), |a, &v| a + v);
                }
                out.push(db);
            }
            _ => unreachable!(),
        }
    }
    out
}
