//! Plain pre-norm ViT encoder classifier in single precision.
//!
//! Linear weights are stored `[in, out]` so that `y = x·W + b`; every output
//! element accumulates its bias first and then the products in ascending
//! input index, which keeps results bit-identical from run to run.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorF32;

/// Label returned for inputs whose logits contain NaN. Never equal to a
/// real class index.
pub const INVALID_LABEL: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub depth: usize,
    pub mlp_ratio: f64,
    pub num_classes: usize,
    pub layernorm_eps: f64,
}

impl ViTConfig {
    /// 16×16 RGB input, 4×4 patches, d=64, 4 heads, 4 blocks (~205k parameters).
    pub fn toy_tiny() -> Self {
        Self {
            image_size: 16,
            patch_size: 4,
            channels: 3,
            embed_dim: 64,
            num_heads: 4,
            depth: 4,
            mlp_ratio: 4.0,
            num_classes: 10,
            layernorm_eps: 1e-6,
        }
    }

    pub fn toy_small() -> Self {
        Self {
            embed_dim: 128,
            num_heads: 4,
            depth: 6,
            ..Self::toy_tiny()
        }
    }

    pub fn toy_base() -> Self {
        Self {
            embed_dim: 192,
            num_heads: 6,
            depth: 8,
            ..Self::toy_tiny()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "toy-tiny" => Some(Self::toy_tiny()),
            "toy-small" => Some(Self::toy_small()),
            "toy-base" => Some(Self::toy_base()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.image_size == 0 || self.patch_size == 0 || self.channels == 0 {
            return bad("image_size, patch_size and channels must be positive");
        }
        if self.image_size % self.patch_size != 0 {
            return bad("image_size must be divisible by patch_size");
        }
        if self.embed_dim == 0 || self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return bad("embed_dim must be a positive multiple of num_heads");
        }
        if self.num_classes == 0 {
            return bad("num_classes must be positive");
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return bad("mlp_ratio must give a positive hidden width");
        }
        if !(self.layernorm_eps > 0.0) {
            return bad("layernorm_eps must be positive");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn num_patches(&self) -> usize {
        let g = self.image_size / self.patch_size;
        g * g
    }

    /// Sequence length including the class token.
    pub fn tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    /// Every weight tensor with its shape, sorted by name.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let h = self.mlp_hidden();
        let mut v = vec![
            ("patch_embed.weight".to_string(), vec![self.patch_dim(), d]),
            ("patch_embed.bias".to_string(), vec![d]),
            ("cls_token".to_string(), vec![d]),
            ("pos_embed".to_string(), vec![self.tokens(), d]),
            ("norm.weight".to_string(), vec![d]),
            ("norm.bias".to_string(), vec![d]),
            ("head.weight".to_string(), vec![d, self.num_classes]),
            ("head.bias".to_string(), vec![self.num_classes]),
        ];
        for i in 0..self.depth {
            let p = format!("blocks.{i}.");
            for n in ["norm1", "norm2"] {
                v.push((format!("{p}{n}.weight"), vec![d]));
                v.push((format!("{p}{n}.bias"), vec![d]));
            }
            for n in ["q", "k", "v", "o"] {
                v.push((format!("{p}attn.{n}.weight"), vec![d, d]));
                v.push((format!("{p}attn.{n}.bias"), vec![d]));
            }
            v.push((format!("{p}mlp.fc1.weight"), vec![d, h]));
            v.push((format!("{p}mlp.fc1.bias"), vec![h]));
            v.push((format!("{p}mlp.fc2.weight"), vec![h, d]));
            v.push((format!("{p}mlp.fc2.bias"), vec![d]));
        }
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let h = self.mlp_hidden();
        let c = self.num_classes;
        let embed = self.patch_dim() * d + d + d + self.tokens() * d;
        let block = 4 * (d * d + d) + 4 * d + (d * h + h) + (h * d + d);
        embed + self.depth * block + 2 * d + d * c + c
    }
}

#[derive(Debug, Clone)]
struct BlockSlots {
    norm1: (usize, usize),
    q: (usize, usize),
    k: (usize, usize),
    v: (usize, usize),
    o: (usize, usize),
    norm2: (usize, usize),
    fc1: (usize, usize),
    fc2: (usize, usize),
}

#[derive(Debug, Clone)]
struct Slots {
    patch: (usize, usize),
    cls: usize,
    pos: usize,
    blocks: Vec<BlockSlots>,
    norm: (usize, usize),
    head: (usize, usize),
}

/// Configuration plus weight tensors, kept in sorted-name order.
#[derive(Debug, Clone)]
pub struct ViTModel {
    config: ViTConfig,
    params: Vec<TensorF32>,
    slots: Slots,
}

impl ViTModel {
    /// Builds a model from named tensors; every expected tensor must be
    /// present with the shape the config implies, and nothing else.
    pub fn new(config: ViTConfig, mut params: Vec<TensorF32>) -> Result<Self> {
        config.validate()?;
        params.sort_by(|a, b| a.name.cmp(&b.name));
        let expected = config.tensor_shapes();
        let index: HashMap<&str, usize> = params
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.as_str(), i))
            .collect();
        if index.len() != params.len() {
            return Err(Error::Config("duplicate tensor names".into()));
        }
        for (name, shape) in &expected {
            let i = *index.get(name.as_str()).ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if &params[i].shape != shape {
                return Err(Error::Shape {
                    what: name.clone(),
                    expected: shape.clone(),
                    actual: params[i].shape.clone(),
                });
            }
        }
        if params.len() != expected.len() {
            let extra = params
                .iter()
                .find(|t| !expected.iter().any(|(n, _)| n == &t.name))
                .map(|t| t.name.clone())
                .unwrap_or_default();
            return Err(Error::Config(format!("unexpected tensor `{extra}`")));
        }

        let at = |n: &str| index[n];
        let pair = |n: &str| (at(&format!("{n}.weight")), at(&format!("{n}.bias")));
        let blocks = (0..config.depth)
            .map(|i| {
                let p = format!("blocks.{i}.");
                BlockSlots {
                    norm1: pair(&format!("{p}norm1")),
                    q: pair(&format!("{p}attn.q")),
                    k: pair(&format!("{p}attn.k")),
                    v: pair(&format!("{p}attn.v")),
                    o: pair(&format!("{p}attn.o")),
                    norm2: pair(&format!("{p}norm2")),
                    fc1: pair(&format!("{p}mlp.fc1")),
                    fc2: pair(&format!("{p}mlp.fc2")),
                }
            })
            .collect();
        let slots = Slots {
            patch: pair("patch_embed"),
            cls: at("cls_token"),
            pos: at("pos_embed"),
            blocks,
            norm: pair("norm"),
            head: pair("head"),
        };
        Ok(Self {
            config,
            params,
            slots,
        })
    }

    /// All-zero weights.
    pub fn zeros(config: ViTConfig) -> Result<Self> {
        let params = config
            .tensor_shapes()
            .into_iter()
            .map(|(n, s)| TensorF32::zeros(n, s))
            .collect();
        Self::new(config, params)
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    pub fn params(&self) -> &[TensorF32] {
        &self.params
    }

    /// Mutable access to weight values. Callers may change element values
    /// but must not rename or reshape tensors.
    pub fn params_mut(&mut self) -> &mut [TensorF32] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<TensorF32> {
        self.params
    }

    pub fn param(&self, name: &str) -> Option<&TensorF32> {
        self.params.iter().find(|t| t.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut TensorF32> {
        self.params.iter_mut().find(|t| t.name == name)
    }

    /// Parameter count summed over tensors.
    pub fn num_params(&self) -> usize {
        self.params.iter().map(TensorF32::len).sum()
    }

    /// Replaces weight values; names and shapes must match.
    pub fn set_params(&mut self, params: Vec<TensorF32>) -> Result<()> {
        *self = Self::new(self.config.clone(), params)?;
        Ok(())
    }

    fn data(&self, i: usize) -> &[f32] {
        &self.params[i].data
    }

    /// Logits `[n, num_classes]`, row-major. Non-finite values are passed
    /// through untouched.
    pub fn forward(&self, batch: &Batch) -> Result<Vec<f32>> {
        batch.check_against(&self.config)?;
        let per = self.config.channels * self.config.image_size * self.config.image_size;
        let mut logits = Vec::with_capacity(batch.len() * self.config.num_classes);
        for img in batch.images.data.chunks_exact(per) {
            logits.extend(self.forward_image(img));
        }
        Ok(logits)
    }

    /// Final-norm class-token features `[n, embed_dim]`, the head input.
    pub fn features(&self, batch: &Batch) -> Result<Vec<f32>> {
        batch.check_against(&self.config)?;
        let per = self.config.channels * self.config.image_size * self.config.image_size;
        let mut out = Vec::with_capacity(batch.len() * self.config.embed_dim);
        for img in batch.images.data.chunks_exact(per) {
            out.extend(self.features_image(img));
        }
        Ok(out)
    }

    fn forward_image(&self, img: &[f32]) -> Vec<f32> {
        let cls = self.features_image(img);
        linear(
            &cls,
            1,
            self.config.embed_dim,
            self.data(self.slots.head.0),
            self.data(self.slots.head.1),
            self.config.num_classes,
        )
    }

    fn features_image(&self, img: &[f32]) -> Vec<f32> {
        let c = &self.config;
        let d = c.embed_dim;
        let t = c.tokens();
        let eps = c.layernorm_eps as f32;

        let patches = patchify(img, c.channels, c.image_size, c.patch_size);
        let emb = linear(
            &patches,
            c.num_patches(),
            c.patch_dim(),
            self.data(self.slots.patch.0),
            self.data(self.slots.patch.1),
            d,
        );
        let mut x = Vec::with_capacity(t * d);
        x.extend_from_slice(self.data(self.slots.cls));
        x.extend_from_slice(&emb);
        for (xi, pi) in x.iter_mut().zip(self.data(self.slots.pos)) {
            *xi += pi;
        }

        for b in &self.slots.blocks {
            let h = layernorm(&x, d, self.data(b.norm1.0), self.data(b.norm1.1), eps);
            let a = self.mha(&h, b);
            for (xi, ai) in x.iter_mut().zip(&a) {
                *xi += ai;
            }
            let h = layernorm(&x, d, self.data(b.norm2.0), self.data(b.norm2.1), eps);
            let hid = c.mlp_hidden();
            let mut m = linear(&h, t, d, self.data(b.fc1.0), self.data(b.fc1.1), hid);
            m.iter_mut().for_each(|v| *v = gelu(*v));
            let m = linear(&m, t, hid, self.data(b.fc2.0), self.data(b.fc2.1), d);
            for (xi, mi) in x.iter_mut().zip(&m) {
                *xi += mi;
            }
        }

        // only the class token reaches the head
        layernorm(&x[..d], d, self.data(self.slots.norm.0), self.data(self.slots.norm.1), eps)
    }

    fn mha(&self, h: &[f32], b: &BlockSlots) -> Vec<f32> {
        let c = &self.config;
        let d = c.embed_dim;
        let t = c.tokens();
        let dk = c.head_dim();
        let q = linear(h, t, d, self.data(b.q.0), self.data(b.q.1), d);
        let k = linear(h, t, d, self.data(b.k.0), self.data(b.k.1), d);
        let v = linear(h, t, d, self.data(b.v.0), self.data(b.v.1), d);
        let mut heads = vec![0f32; t * d];
        let mut scores = vec![0f32; t * t];
        for head in 0..c.num_heads {
            let view = HeadView {
                n: t,
                stride: d,
                offset: head * dk,
                width: dk,
            };
            attention_head(&q, &k, &v, view, view, &mut scores, &mut heads);
        }
        linear(&heads, t, d, self.data(b.o.0), self.data(b.o.1), d)
    }

    /// Argmax labels, see [`predict_from_logits`].
    pub fn predict(&self, batch: &Batch) -> Result<Vec<u32>> {
        let logits = self.forward(batch)?;
        Ok(predict_from_logits(&logits, self.config.num_classes))
    }
}

/// Argmax per row; ties go to the lowest index; any NaN gives [`INVALID_LABEL`].
pub fn predict_from_logits(logits: &[f32], num_classes: usize) -> Vec<u32> {
    logits
        .chunks_exact(num_classes)
        .map(|row| {
            if row.iter().any(|v| v.is_nan()) {
                return INVALID_LABEL;
            }
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect()
}

/// Images `[n, channels, size, size]` plus optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: TensorF32,
    pub labels: Option<Vec<u32>>,
}

impl Batch {
    pub fn new(images: TensorF32, labels: Option<Vec<u32>>) -> Result<Self> {
        if images.shape.len() != 4 || images.shape[0] == 0 {
            return Err(Error::Dataset(format!(
                "images must be [n>=1, c, s, s], got {:?}",
                images.shape
            )));
        }
        if images.shape[2] != images.shape[3] {
            return Err(Error::Dataset("images must be square".into()));
        }
        if images.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite pixel value".into()));
        }
        if let Some(l) = &labels {
            if l.len() != images.shape[0] {
                return Err(Error::Dataset(format!(
                    "{} labels for {} images",
                    l.len(),
                    images.shape[0]
                )));
            }
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leading `n` images (and labels).
    pub fn take(&self, n: usize) -> Batch {
        let n = n.min(self.len());
        let per: usize = self.images.shape[1..].iter().product();
        let mut shape = self.images.shape.clone();
        shape[0] = n;
        Batch {
            images: TensorF32 {
                name: self.images.name.clone(),
                shape,
                data: self.images.data[..n * per].to_vec(),
            },
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
        }
    }

    fn check_against(&self, c: &ViTConfig) -> Result<()> {
        let want = [self.len(), c.channels, c.image_size, c.image_size];
        if self.images.shape != want {
            return Err(Error::Shape {
                what: "batch images".into(),
                expected: want.to_vec(),
                actual: self.images.shape.clone(),
            });
        }
        Ok(())
    }
}

/// Splits one `[c, s, s]` image into `[(s/p)², c·p·p]` patch rows, with
/// each row ordered channel, then patch row, then patch column.
pub fn patchify(img: &[f32], channels: usize, size: usize, patch: usize) -> Vec<f32> {
    let g = size / patch;
    let mut out = Vec::with_capacity(img.len());
    for py in 0..g {
        for px in 0..g {
            for ch in 0..channels {
                for dy in 0..patch {
                    let row = ch * size * size + (py * patch + dy) * size + px * patch;
                    out.extend_from_slice(&img[row..row + patch]);
                }
            }
        }
    }
    out
}

/// `x [n, in] · w [in, out] + b [out]`.
pub fn linear(x: &[f32], n: usize, input: usize, w: &[f32], b: &[f32], output: usize) -> Vec<f32> {
    debug_assert_eq!(x.len(), n * input);
    debug_assert_eq!(w.len(), input * output);
    debug_assert_eq!(b.len(), output);
    let mut y = Vec::with_capacity(n * output);
    for row in x.chunks_exact(input) {
        let start = y.len();
        y.extend_from_slice(b);
        let acc = &mut y[start..];
        for (&xv, wrow) in row.iter().zip(w.chunks_exact(output)) {
            for (a, &wv) in acc.iter_mut().zip(wrow) {
                *a += xv * wv;
            }
        }
    }
    y
}

/// Numerically stable softmax over each row of width `cols`, in place.
pub fn softmax_rows_in_place(x: &mut [f32], cols: usize) {
    for row in x.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

pub fn softmax_rows(x: &[f32], cols: usize) -> Vec<f32> {
    let mut y = x.to_vec();
    softmax_rows_in_place(&mut y, cols);
    y
}

#[derive(Debug, Clone, Copy)]
struct HeadView {
    n: usize,
    stride: usize,
    offset: usize,
    width: usize,
}

impl HeadView {
    fn row<'a>(&self, m: &'a [f32], i: usize) -> &'a [f32] {
        let s = i * self.stride + self.offset;
        &m[s..s + self.width]
    }
}

fn attention_head(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    qk: HeadView,
    vv: HeadView,
    scores: &mut [f32],
    out: &mut [f32],
) {
    let n = qk.n;
    let scale = 1.0 / (qk.width as f32).sqrt();
    for i in 0..n {
        let qi = qk.row(q, i);
        for j in 0..n {
            let kj = qk.row(k, j);
            let mut s = 0f32;
            for (a, b) in qi.iter().zip(kj) {
                s += a * b;
            }
            scores[i * n + j] = s * scale;
        }
    }
    softmax_rows_in_place(&mut scores[..n * n], n);
    for i in 0..n {
        let o = i * vv.stride + vv.offset;
        let orow = &mut out[o..o + vv.width];
        orow.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..n {
            let p = scores[i * n + j];
            for (x, &vj) in orow.iter_mut().zip(vv.row(v, j)) {
                *x += p * vj;
            }
        }
    }
}

/// `softmax(Q·Kᵀ / √d_k)·V` for `q, k: [n, d_k]` and `v: [n, d_v]`.
pub fn attention(q: &[f32], k: &[f32], v: &[f32], n: usize, d_k: usize, d_v: usize) -> Result<Vec<f32>> {
    if d_k == 0 {
        return Err(Error::Config("attention with d_k = 0".into()));
    }
    for (what, m, w) in [("Q", q, d_k), ("K", k, d_k), ("V", v, d_v)] {
        if m.len() != n * w {
            return Err(Error::Shape {
                what: what.into(),
                expected: vec![n, w],
                actual: vec![m.len()],
            });
        }
    }
    let qk = HeadView {
        n,
        stride: d_k,
        offset: 0,
        width: d_k,
    };
    let vv = HeadView {
        n,
        stride: d_v,
        offset: 0,
        width: d_v,
    };
    let mut scores = vec![0f32; n * n];
    let mut out = vec![0f32; n * d_v];
    attention_head(q, k, v, qk, vv, &mut scores, &mut out);
    Ok(out)
}

/// Per-row layer normalization over `d` features with affine `gamma`, `beta`.
pub fn layernorm(x: &[f32], d: usize, gamma: &[f32], beta: &[f32], eps: f32) -> Vec<f32> {
    let mut y = Vec::with_capacity(x.len());
    for row in x.chunks_exact(d) {
        let mean = row.iter().sum::<f32>() / d as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter().zip(gamma).zip(beta) {
            y.push((v - mean) * inv * g + b);
        }
    }
    y
}

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_rows(&[0.0, 0.0], 2), vec![0.5, 0.5]);
        let s = softmax_rows(&[1000.0, 0.0], 2);
        assert!((s[0] - 1.0).abs() < 1e-7 && s[1] >= 0.0 && s[1] < 1e-30);
        let s = softmax_rows(&[1f32.ln(), 2f32.ln(), 3f32.ln()], 3);
        for (a, b) in s.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_single_token_returns_v() {
        let out = attention(&[3.0, -1.0], &[0.5, 2.0], &[7.0, 8.0, 9.0], 1, 2, 3).unwrap();
        assert_eq!(out, vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn attention_zero_query_is_mean_of_v() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
        let out = attention(&[0.0; 6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &v, 3, 2, 2).unwrap();
        assert!((out[0] - 3.0).abs() < 1e-6 && (out[1] - 5.0).abs() < 1e-6);
        assert_eq!(out[0..2], out[2..4]);
    }

    #[test]
    fn attention_permutation_equivariant() {
        let (n, d) = (4, 3);
        let q: Vec<f32> = (0..n * d).map(|i| ((i * 7 % 11) as f32 - 5.0) * 0.3).collect();
        let k: Vec<f32> = (0..n * d).map(|i| ((i * 5 % 13) as f32 - 6.0) * 0.2).collect();
        let v: Vec<f32> = (0..n * d).map(|i| (i as f32).sin()).collect();
        let perm = [2, 0, 3, 1];
        let permute = |x: &[f32]| -> Vec<f32> { perm.iter().flat_map(|&r| x[r * d..(r + 1) * d].to_vec()).collect() };
        let out = attention(&q, &k, &v, n, d, d).unwrap();
        let out_p = attention(&permute(&q), &permute(&k), &permute(&v), n, d, d).unwrap();
        for (a, b) in permute(&out).iter().zip(&out_p) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_rejects_bad_shapes() {
        assert!(attention(&[], &[], &[], 1, 0, 1).is_err());
        assert!(attention(&[1.0], &[1.0, 2.0], &[1.0], 1, 1, 1).is_err());
    }

    #[test]
    fn layernorm_constant_row_is_zero() {
        let y = layernorm(&[3.0; 8], 8, &[1.0; 8], &[0.0; 8], 1e-6);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-6);
        // Φ(1) = 0.841344746068543
        assert!((gelu(1.0) - 0.841_344_75).abs() < 1e-6);
        assert!((gelu(-1.0) + 0.158_655_25).abs() < 1e-6);
    }

    #[test]
    fn predict_rules() {
        assert_eq!(predict_from_logits(&[0.1, 0.9], 2), vec![1]);
        assert_eq!(predict_from_logits(&[0.5, 0.5], 2), vec![0]);
        assert_eq!(predict_from_logits(&[f32::NAN, 1.0], 2), vec![INVALID_LABEL]);
        assert_eq!(predict_from_logits(&[f32::NEG_INFINITY, 1.0, f32::INFINITY], 3), vec![2]);
    }

    #[test]
    fn param_count_matches_shapes() {
        for c in [ViTConfig::toy_tiny(), ViTConfig::toy_small(), ViTConfig::toy_base()] {
            let from_shapes: usize = c.tensor_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
            assert_eq!(c.param_count(), from_shapes);
            assert_eq!(ViTModel::zeros(c.clone()).unwrap().num_params(), c.param_count());
        }
        assert!((100_000..1_000_000).contains(&ViTConfig::toy_tiny().param_count()));
    }

    #[test]
    fn config_validation() {
        let mut c = ViTConfig::toy_tiny();
        c.patch_size = 5;
        assert!(c.validate().is_err());
        let mut c = ViTConfig::toy_tiny();
        c.num_heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn model_rejects_wrong_shape_and_missing() {
        let c = ViTConfig::toy_tiny();
        let mut params = ViTModel::zeros(c.clone()).unwrap().into_params();
        let i = params.iter().position(|t| t.shape.len() == 2).unwrap();
        params[i].shape = vec![params[i].len()];
        assert!(matches!(ViTModel::new(c.clone(), params.clone()), Err(Error::Shape { .. })));
        params.remove(i);
        assert!(matches!(ViTModel::new(c, params), Err(Error::MissingTensor(_))));
    }

    #[test]
    fn patchify_orders_channel_row_col() {
        // 1 channel, 4×4 image, 2×2 patches
        let img: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let p = patchify(&img, 1, 4, 2);
        assert_eq!(&p[0..4], &[0.0, 1.0, 4.0, 5.0]);
        assert_eq!(&p[4..8], &[2.0, 3.0, 6.0, 7.0]);
        assert_eq!(&p[12..16], &[10.0, 11.0, 14.0, 15.0]);
    }

    #[test]
    fn linear_small() {
        // x = [1, 2], w = [[1, 0, 2], [3, 1, 0]], b = [0.5, 0, -1]
        let y = linear(&[1.0, 2.0], 1, 2, &[1.0, 0.0, 2.0, 3.0, 1.0, 0.0], &[0.5, 0.0, -1.0], 3);
        assert_eq!(y, vec![7.5, 2.0, 1.0]);
    }
}
