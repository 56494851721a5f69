//! Visual predicate extractor and predicate/q-state saliency maps.
//!
//! A convolutional encoder turns the bird's-eye raster into feature maps,
//! global average pooling summarises each map, and a linear layer mixes the
//! pooled features into `M` predicate activations. Because the predicate
//! layer sits right after pooling, its weights also project the feature maps
//! into per-predicate activation maps, the same construction as a class
//! activation map.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{conv_output_size, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{he_tensor, BoundParams, ParamSet};
use crate::tensor::Tensor;

/// Semantic channels of the raster, in storage order.
pub const CHANNEL_NAMES: [&str; 5] = ["drivable", "lane_centerline", "road_boundary", "ado", "ego"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterSpec {
    pub channels: usize,
    /// Height and width in pixels.
    pub size: usize,
    /// Metres per pixel.
    pub resolution: f64,
}

impl Default for RasterSpec {
    fn default() -> Self {
        RasterSpec {
            channels: 5,
            size: 64,
            resolution: 0.5,
        }
    }
}

impl RasterSpec {
    pub fn numel(&self) -> usize {
        self.channels * self.size * self.size
    }
}

/// Binary ego-centric multichannel raster, ego heading pointing up.
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    spec: RasterSpec,
    cells: Vec<u8>,
}

impl BevRaster {
    pub fn new(spec: RasterSpec, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != spec.numel() {
            return Err(Error::shape(format!(
                "raster needs {} cells, got {}",
                spec.numel(),
                cells.len()
            )));
        }
        if cells.iter().any(|c| *c > 1) {
            return Err(Error::invalid("raster cells must be 0 or 1"));
        }
        Ok(BevRaster { spec, cells })
    }

    pub fn empty(spec: RasterSpec) -> Self {
        BevRaster {
            spec,
            cells: vec![0; spec.numel()],
        }
    }

    pub fn spec(&self) -> RasterSpec {
        self.spec
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> bool {
        let s = self.spec.size;
        self.cells[(channel * s + row) * s + col] != 0
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize) {
        let s = self.spec.size;
        self.cells[(channel * s + row) * s + col] = 1;
    }

    pub fn channel_count(&self, channel: usize) -> usize {
        let n = self.spec.size * self.spec.size;
        self.cells[channel * n..(channel + 1) * n].iter().filter(|c| **c != 0).count()
    }

    pub fn to_tensor(&self) -> Tensor {
        let s = self.spec.size;
        Tensor::new(
            vec![self.spec.channels, s, s],
            self.cells.iter().map(|c| f64::from(*c)).collect(),
        )
        .expect("raster shape")
    }
}

/// Convolutional encoder layout: 3x3 kernels by default, stride 2, ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            conv_channels: vec![8, 16, 16],
            kernel: 3,
            stride: 2,
            padding: 1,
        }
    }
}

impl EncoderSpec {
    /// `(K, H', W')` of the final feature maps.
    pub fn output_shape(&self, raster: &RasterSpec) -> Result<(usize, usize, usize)> {
        let mut size = raster.size;
        for _ in &self.conv_channels {
            size = conv_output_size(size, self.kernel, self.stride, self.padding)
                .ok_or_else(|| Error::shape("encoder output collapses to zero size"))?;
        }
        let k = *self
            .conv_channels
            .last()
            .ok_or_else(|| Error::invalid("encoder needs at least one layer"))?;
        Ok((k, size, size))
    }

    pub fn feature_channels(&self) -> usize {
        self.conv_channels.last().copied().unwrap_or(0)
    }
}

pub fn init_encoder<R: Rng + ?Sized>(params: &mut ParamSet, raster: &RasterSpec, spec: &EncoderSpec, rng: &mut R) {
    let mut cin = raster.channels;
    for (i, &cout) in spec.conv_channels.iter().enumerate() {
        let fan_in = cin * spec.kernel * spec.kernel;
        params.insert(
            &format!("conv{i}.weight"),
            he_tensor(&[cout, cin, spec.kernel, spec.kernel], fan_in, rng),
        );
        params.insert(&format!("conv{i}.bias"), Tensor::zeros(&[cout]));
        cin = cout;
    }
}

/// Feature maps `[K, H', W']` of a `[C, H, W]` input.
pub fn encode(tape: &mut Tape, bound: &BoundParams, spec: &EncoderSpec, x: Var) -> Result<Var> {
    let mut h = x;
    for i in 0..spec.conv_channels.len() {
        let w = bound.get(&format!("conv{i}.weight"))?;
        let b = bound.get(&format!("conv{i}.bias"))?;
        let c = tape.conv2d(h, w, spec.stride, spec.padding)?;
        let c = tape.add_bias(c, b)?;
        h = tape.relu(c)?;
    }
    Ok(h)
}

pub fn init_predicates<R: Rng + ?Sized>(params: &mut ParamSet, features: usize, predicates: usize, rng: &mut R) {
    params.insert("predicate.weight", he_tensor(&[predicates, features], features, rng));
    params.insert("predicate.bias", Tensor::zeros(&[predicates]));
}

/// Predicate vector `[M]` and the pre-pooling feature maps.
pub fn extract_predicates(tape: &mut Tape, bound: &BoundParams, spec: &EncoderSpec, x: Var) -> Result<(Var, Var)> {
    let features = encode(tape, bound, spec, x)?;
    let pooled = global_pool_column(tape, features)?;
    let w = bound.get("predicate.weight")?;
    let b = bound.get("predicate.bias")?;
    let m = tape.value(w).shape()[0];
    let lin = tape.matmul(w, pooled)?;
    let lin = tape.add_bias(lin, b)?;
    let pv = tape.reshape(lin, &[m])?;
    Ok((pv, features))
}

/// Global average pool of `[K, H, W]` reshaped into a `[K, 1]` column.
pub fn global_pool_column(tape: &mut Tape, features: Var) -> Result<Var> {
    let pooled = tape.global_avg_pool(features)?;
    let k = tape.value(pooled).numel();
    tape.reshape(pooled, &[k, 1])
}

fn normalize_unit(map: &mut [f64]) {
    let (lo, hi) = map
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        map.iter_mut().for_each(|v| *v = 0.0);
    } else {
        map.iter_mut().for_each(|v| *v = (*v - lo) / span);
    }
}

fn raw_activation(features: &Tensor, linear: &Tensor, m: usize) -> Result<Vec<f64>> {
    let fs = features.shape();
    let ls = linear.shape();
    if fs.len() != 3 || ls.len() != 2 || ls[1] != fs[0] {
        return Err(Error::shape(format!("features {fs:?} with predicate weights {ls:?}")));
    }
    if m >= ls[0] {
        return Err(Error::invalid(format!("predicate index {m} out of range {}", ls[0])));
    }
    let hw = fs[1] * fs[2];
    let mut out = vec![0.0; hw];
    for k in 0..fs[0] {
        let l = linear.data()[m * ls[1] + k];
        let plane = &features.data()[k * hw..(k + 1) * hw];
        out.iter_mut().zip(plane).for_each(|(o, f)| *o += l * f);
    }
    Ok(out)
}

/// `A_m(x, y) = sum_k L[m, k] f_k(x, y)`, min-max normalised to `[0, 1]`
/// (all zeros when the map is flat).
pub fn predicate_activation_map(features: &Tensor, linear: &Tensor, m: usize) -> Result<Tensor> {
    let mut out = raw_activation(features, linear, m)?;
    normalize_unit(&mut out);
    let fs = features.shape();
    Tensor::new(vec![fs[1], fs[2]], out)
}

/// Weight of predicate `m` in the saliency of state `n`:
/// `|pv_m| * sum_j max(W_m[n, j], 0)`.
pub fn saliency_weights(transitions: &Tensor, pv: &[f64], n: usize) -> Result<Vec<f64>> {
    let ws = transitions.shape();
    if ws.len() != 3 || ws[0] != pv.len() || ws[1] != ws[2] {
        return Err(Error::shape(format!("transitions {ws:?} with {} predicates", pv.len())));
    }
    let states = ws[1];
    if n >= states {
        return Err(Error::invalid(format!("state index {n} out of range {states}")));
    }
    Ok((0..pv.len())
        .map(|m| {
            let row = &transitions.data()[(m * states + n) * states..(m * states + n + 1) * states];
            pv[m].abs() * row.iter().map(|w| w.max(0.0)).sum::<f64>()
        })
        .collect())
}

/// Saliency of automaton state `n`: predicate activation maps weighted by
/// [`saliency_weights`], normalised to `[0, 1]` and bilinearly upsampled to
/// `out_size x out_size`.
pub fn qstate_saliency(
    features: &Tensor,
    linear: &Tensor,
    transitions: &Tensor,
    pv: &[f64],
    n: usize,
    out_size: usize,
) -> Result<Tensor> {
    let coeffs = saliency_weights(transitions, pv, n)?;
    saliency_from_weights(features, linear, &coeffs, out_size)
}

pub fn saliency_from_weights(features: &Tensor, linear: &Tensor, coeffs: &[f64], out_size: usize) -> Result<Tensor> {
    let fs = features.shape();
    let hw = fs[1] * fs[2];
    let mut map = vec![0.0; hw];
    for (m, c) in coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let a = raw_activation(features, linear, m)?;
        map.iter_mut().zip(&a).for_each(|(s, v)| *s += c * v);
    }
    normalize_unit(&mut map);
    let small = Tensor::new(vec![fs[1], fs[2]], map)?;
    Ok(upsample_bilinear(&small, out_size))
}

/// Bilinear resize of a `[h, w]` map with pixel-centre alignment.
pub fn upsample_bilinear(map: &Tensor, out_size: usize) -> Tensor {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let d = map.data();
    let mut out = vec![0.0; out_size * out_size];
    let sample = |src: usize, dst: usize, i: usize| -> (usize, usize, f64) {
        let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src - 1);
        (lo, hi, pos - lo as f64)
    };
    for r in 0..out_size {
        let (r0, r1, fr) = sample(h, out_size, r);
        for c in 0..out_size {
            let (c0, c1, fc) = sample(w, out_size, c);
            let top = d[r0 * w + c0] * (1.0 - fc) + d[r0 * w + c1] * fc;
            let bot = d[r1 * w + c0] * (1.0 - fc) + d[r1 * w + c1] * fc;
            out[r * out_size + c] = top * (1.0 - fr) + bot * fr;
        }
    }
    Tensor::new(vec![out_size, out_size], out).expect("square map")
}

/// Writes a `[h, w]` map with values in `[0, 1]` as a binary 8-bit PGM.
pub fn write_pgm<W: Write>(mut out: W, map: &Tensor) -> Result<()> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    write!(out, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = map
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}
