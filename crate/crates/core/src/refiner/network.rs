//! Two-branch color/depth fusion regressor.
//!
//! Each branch is three 3x3 stride-2 convolutions (8, 16, 32 channels). Hidden
//! layers use SiLU, `z * sigmoid(z)`, which is smooth everywhere.
//! The first layer's output is average-pooled down to the last layer's
//! spatial size and stacked with it, so every branch contributes an early
//! "spatial" tap and a late "semantic" tap. The two branches are stacked,
//! fused by a 1x1 convolution, pooled onto a small grid and regressed by two
//! fully-connected layers to `(w, h, xr, yb)` through a sigmoid.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::RefinerInput;

pub const INPUT_SIDE: usize = 100;
pub const INPUT_CHANNELS: usize = 3;
pub const CONV_WIDTHS: [usize; 3] = [8, 16, 32];
pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const FUSION_CHANNELS: usize = 16;
/// Side of the grid the fused map is average-pooled onto before the
/// fully-connected head.
pub const POOL_GRID: usize = 4;
pub const HIDDEN: usize = 128;
pub const OUTPUTS: usize = 4;

/// Spatial side after each convolution (padding 1).
pub const fn conv_out(side: usize) -> usize {
    (side + 2 - KERNEL) / STRIDE + 1
}

pub const SIDES: [usize; 4] = [
    INPUT_SIDE,
    conv_out(INPUT_SIDE),
    conv_out(conv_out(INPUT_SIDE)),
    conv_out(conv_out(conv_out(INPUT_SIDE))),
];

/// Channels per branch after stacking the early and late taps.
pub const BRANCH_CHANNELS: usize = CONV_WIDTHS[0] + CONV_WIDTHS[2];

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `(out, in)`; for convolutions `in = in_channels * 9` in
    /// `(channel, ky, kx)` order.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(out: usize, inp: usize) -> Self {
        Layer {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn glorot(out: usize, inp: usize, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Layer {
            weight: Array2::from_shape_fn((out, inp), |_| rng.random_range(-a..a)),
            bias: Array1::zeros(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub convs: [Layer; 3],
}

impl Branch {
    fn zeros() -> Self {
        let mut cin = INPUT_CHANNELS;
        let convs = CONV_WIDTHS.map(|cout| {
            let l = Layer::zeros(cout, cin * KERNEL * KERNEL);
            cin = cout;
            l
        });
        Branch { convs }
    }

    fn glorot(rng: &mut ChaCha8Rng) -> Self {
        let mut cin = INPUT_CHANNELS;
        let convs = CONV_WIDTHS.map(|cout| {
            let k = KERNEL * KERNEL;
            let l = Layer::glorot(cout, cin * k, cin * k, cout * k, rng);
            cin = cout;
            l
        });
        Branch { convs }
    }
}

/// Parameters of the fusion regressor. Gradients share this type.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinerModel {
    pub color: Branch,
    pub depth: Branch,
    pub fusion: Layer,
    pub fc1: Layer,
    pub fc2: Layer,
}

/// Name and shape of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Branch convolutions form the backbone.
    pub fn is_backbone(&self) -> bool {
        self.name.starts_with("color.") || self.name.starts_with("depth.")
    }
}

impl RefinerModel {
    pub fn zeros() -> Self {
        RefinerModel {
            color: Branch::zeros(),
            depth: Branch::zeros(),
            fusion: Layer::zeros(FUSION_CHANNELS, 2 * BRANCH_CHANNELS),
            fc1: Layer::zeros(HIDDEN, FUSION_CHANNELS * POOL_GRID * POOL_GRID),
            fc2: Layer::zeros(OUTPUTS, HIDDEN),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let color = Branch::glorot(&mut rng);
        let depth = Branch::glorot(&mut rng);
        let fusion = Layer::glorot(
            FUSION_CHANNELS,
            2 * BRANCH_CHANNELS,
            2 * BRANCH_CHANNELS,
            FUSION_CHANNELS,
            &mut rng,
        );
        let flat = FUSION_CHANNELS * POOL_GRID * POOL_GRID;
        let fc1 = Layer::glorot(HIDDEN, flat, flat, HIDDEN, &mut rng);
        let fc2 = Layer::glorot(OUTPUTS, HIDDEN, HIDDEN, OUTPUTS, &mut rng);
        RefinerModel {
            color,
            depth,
            fusion,
            fc1,
            fc2,
        }
    }

    fn layers(&self) -> Vec<(String, &Layer)> {
        let mut out = Vec::new();
        for (prefix, branch) in [("color", &self.color), ("depth", &self.depth)] {
            for (i, l) in branch.convs.iter().enumerate() {
                out.push((format!("{prefix}.conv{}", i + 1), l));
            }
        }
        out.push(("fusion".into(), &self.fusion));
        out.push(("fc1".into(), &self.fc1));
        out.push(("fc2".into(), &self.fc2));
        out
    }

    fn layers_mut(&mut self) -> Vec<(String, &mut Layer)> {
        let mut out = Vec::new();
        for (prefix, branch) in [("color", &mut self.color), ("depth", &mut self.depth)] {
            for (i, l) in branch.convs.iter_mut().enumerate() {
                out.push((format!("{prefix}.conv{}", i + 1), l));
            }
        }
        out.push(("fusion".into(), &mut self.fusion));
        out.push(("fc1".into(), &mut self.fc1));
        out.push(("fc2".into(), &mut self.fc2));
        out
    }

    /// Architecture descriptor: every tensor in storage order.
    pub fn architecture() -> Vec<TensorSpec> {
        Self::zeros().tensors().into_iter().map(|(spec, _)| spec).collect()
    }

    pub fn tensors(&self) -> Vec<(TensorSpec, &[f64])> {
        let mut out = Vec::new();
        for (name, l) in self.layers() {
            out.push((
                TensorSpec {
                    name: format!("{name}.weight"),
                    shape: l.weight.shape().to_vec(),
                },
                l.weight.as_slice().expect("standard layout"),
            ));
            out.push((
                TensorSpec {
                    name: format!("{name}.bias"),
                    shape: l.bias.shape().to_vec(),
                },
                l.bias.as_slice().expect("standard layout"),
            ));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(TensorSpec, &mut [f64])> {
        let mut out = Vec::new();
        for (name, l) in self.layers_mut() {
            let wshape = l.weight.shape().to_vec();
            let bshape = l.bias.shape().to_vec();
            out.push((
                TensorSpec {
                    name: format!("{name}.weight"),
                    shape: wshape,
                },
                l.weight.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                TensorSpec {
                    name: format!("{name}.bias"),
                    shape: bshape,
                },
                l.bias.as_slice_mut().expect("standard layout"),
            ));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(s, _)| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, optionally skipping backbone tensors.
    pub fn add_scaled(&mut self, other: &RefinerModel, scale: f64, include_backbone: bool) {
        let src = other.tensors();
        for ((spec, dst), (_, g)) in self.tensors_mut().into_iter().zip(src) {
            if !include_backbone && spec.is_backbone() {
                continue;
            }
            for (d, &v) in dst.iter_mut().zip(g) {
                *d += scale * v;
            }
        }
    }
}

/// im2col for a 3x3, stride-2, padding-1 convolution.
/// `input` is `(channels, side * side)`; output is `(channels * 9, out * out)`.
fn im2col(input: &Array2<f64>, side: usize) -> Array2<f64> {
    let channels = input.nrows();
    let out_side = conv_out(side);
    let mut col = Array2::zeros((channels * KERNEL * KERNEL, out_side * out_side));
    let src = input.as_slice().expect("standard layout");
    let dst = col.as_slice_mut().expect("standard layout");
    let p = out_side * out_side;
    for c in 0..channels {
        let plane = &src[c * side * side..(c + 1) * side * side];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (c * KERNEL + ky) * KERNEL + kx;
                let out_row = &mut dst[row * p..(row + 1) * p];
                for oy in 0..out_side {
                    let iy = (oy * STRIDE + ky) as isize - 1;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    let in_row = &plane[iy as usize * side..(iy as usize + 1) * side];
                    for ox in 0..out_side {
                        let ix = (ox * STRIDE + kx) as isize - 1;
                        if ix >= 0 && ix < side as isize {
                            out_row[oy * out_side + ox] = in_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`].
fn col2im(col: &Array2<f64>, channels: usize, side: usize) -> Array2<f64> {
    let out_side = conv_out(side);
    let p = out_side * out_side;
    let mut img = Array2::zeros((channels, side * side));
    let src = col.as_slice().expect("standard layout");
    let dst = img.as_slice_mut().expect("standard layout");
    for c in 0..channels {
        let plane = &mut dst[c * side * side..(c + 1) * side * side];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = (c * KERNEL + ky) * KERNEL + kx;
                let col_row = &src[row * p..(row + 1) * p];
                for oy in 0..out_side {
                    let iy = (oy * STRIDE + ky) as isize - 1;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    for ox in 0..out_side {
                        let ix = (ox * STRIDE + kx) as isize - 1;
                        if ix >= 0 && ix < side as isize {
                            plane[iy as usize * side + ix as usize] += col_row[oy * out_side + ox];
                        }
                    }
                }
            }
        }
    }
    img
}

/// Bin `i` of an adaptive pool from `input` to `output` cells covers
/// `[floor(i * input / output), ceil((i + 1) * input / output))`.
fn pool_bins(input: usize, output: usize) -> Vec<(usize, usize)> {
    (0..output)
        .map(|i| ((i * input) / output, ((i + 1) * input).div_ceil(output)))
        .collect()
}

/// Adaptive average pooling of `(channels, side * side)` onto `out * out`.
pub(crate) fn adaptive_pool(x: &Array2<f64>, side: usize, out: usize) -> Array2<f64> {
    let bins = pool_bins(side, out);
    let mut y = Array2::zeros((x.nrows(), out * out));
    for (c, row) in x.outer_iter().enumerate() {
        for (oy, &(y0, y1)) in bins.iter().enumerate() {
            for (ox, &(x0, x1)) in bins.iter().enumerate() {
                let mut acc = 0.0;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        acc += row[iy * side + ix];
                    }
                }
                y[[c, oy * out + ox]] = acc / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    y
}

fn adaptive_pool_backward(dy: &Array2<f64>, side: usize, out: usize) -> Array2<f64> {
    let bins = pool_bins(side, out);
    let mut dx = Array2::zeros((dy.nrows(), side * side));
    for c in 0..dy.nrows() {
        for (oy, &(y0, y1)) in bins.iter().enumerate() {
            for (ox, &(x0, x1)) in bins.iter().enumerate() {
                let g = dy[[c, oy * out + ox]] / ((y1 - y0) * (x1 - x0)) as f64;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        dx[[c, iy * side + ix]] += g;
                    }
                }
            }
        }
    }
    dx
}

pub(crate) fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

pub(crate) fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

fn check_finite<'a, I: IntoIterator<Item = &'a f64>>(values: I, layer: &str) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer.into() })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct ConvCache {
    col: Array2<f64>,
    /// Pre-activation `(out_channels, out_side^2)`.
    pre: Array2<f64>,
    out: Array2<f64>,
}

struct BranchCache {
    convs: Vec<ConvCache>,
}

/// Intermediate activations kept for backpropagation.
pub struct ForwardCache {
    color: BranchCache,
    depth: BranchCache,
    fused_in: Array2<f64>,
    fused_pre: Array2<f64>,
    pooled: Array1<f64>,
    hidden_pre: Array1<f64>,
    hidden: Array1<f64>,
    pub output: [f64; OUTPUTS],
}

fn branch_forward(branch: &Branch, input: &Array2<f64>, name: &str) -> Result<(Array2<f64>, BranchCache)> {
    let mut convs = Vec::with_capacity(3);
    let mut x = input.clone();
    for (i, layer) in branch.convs.iter().enumerate() {
        let col = im2col(&x, SIDES[i]);
        let mut pre = layer.weight.dot(&col);
        pre += &layer.bias.view().insert_axis(Axis(1));
        let out = pre.mapv(silu);
        check_finite(out.iter(), &format!("{name}.conv{}", i + 1))?;
        x = out.clone();
        convs.push(ConvCache { col, pre, out });
    }
    let early = adaptive_pool(&convs[0].out, SIDES[1], SIDES[3]);
    let features = ndarray::concatenate![Axis(0), early, convs[2].out];
    Ok((features, BranchCache { convs }))
}

/// Forward pass keeping the activations needed by [`backward`].
pub fn forward_cached(model: &RefinerModel, input: &RefinerInput) -> Result<ForwardCache> {
    let (color_feat, color) = branch_forward(&model.color, input.color(), "color")?;
    let (depth_feat, depth) = branch_forward(&model.depth, input.depth(), "depth")?;
    let fused_in = ndarray::concatenate![Axis(0), color_feat, depth_feat];

    let mut fused_pre = model.fusion.weight.dot(&fused_in);
    fused_pre += &model.fusion.bias.view().insert_axis(Axis(1));
    let fused = fused_pre.mapv(silu);
    check_finite(fused.iter(), "fusion")?;

    let pooled = adaptive_pool(&fused, SIDES[3], POOL_GRID);
    let pooled = Array1::from_iter(pooled.iter().copied());

    let hidden_pre = model.fc1.weight.dot(&pooled) + &model.fc1.bias;
    let hidden = hidden_pre.mapv(silu);
    check_finite(hidden.iter(), "fc1")?;

    let logits = model.fc2.weight.dot(&hidden) + &model.fc2.bias;
    check_finite(logits.iter(), "fc2")?;
    let mut output = [0.0; OUTPUTS];
    for (o, &z) in output.iter_mut().zip(logits.iter()) {
        *o = sigmoid(z);
    }
    Ok(ForwardCache {
        color,
        depth,
        fused_in,
        fused_pre,
        pooled,
        hidden_pre,
        hidden,
        output,
    })
}

/// Raw network outputs `[w, h, xr, yb]`, each in `(0, 1)`.
pub fn forward_raw(model: &RefinerModel, input: &RefinerInput) -> Result<[f64; OUTPUTS]> {
    Ok(forward_cached(model, input)?.output)
}

fn branch_backward(branch: &Branch, cache: &BranchCache, d_features: ndarray::ArrayView2<f64>, grads: &mut Branch) {
    let c1 = CONV_WIDTHS[0];
    let d_early = d_features.slice(s![..c1, ..]).to_owned();
    let mut d_out = d_features.slice(s![c1.., ..]).to_owned();
    let mut d_early_full = Some(adaptive_pool_backward(&d_early, SIDES[1], SIDES[3]));
    for i in (0..3).rev() {
        let conv = &cache.convs[i];
        ndarray::Zip::from(&mut d_out)
            .and(&conv.pre)
            .for_each(|d, &z| *d *= silu_grad(z));
        grads.convs[i].weight += &d_out.dot(&conv.col.t());
        grads.convs[i].bias += &d_out.sum_axis(Axis(1));
        if i == 0 {
            break;
        }
        let d_col = branch.convs[i].weight.t().dot(&d_out);
        let mut d_in = col2im(&d_col, CONV_WIDTHS[i - 1], SIDES[i]);
        if i == 1 {
            if let Some(e) = d_early_full.take() {
                d_in += &e;
            }
        }
        d_out = d_in;
    }
}

/// Accumulates `d loss / d params` into `grads`, given `d loss / d output`.
/// Backbone gradients are skipped when `include_backbone` is false.
pub fn backward(
    model: &RefinerModel,
    cache: &ForwardCache,
    d_output: &[f64; OUTPUTS],
    grads: &mut RefinerModel,
    include_backbone: bool,
) {
    let d_logits = Array1::from_iter(
        d_output
            .iter()
            .zip(cache.output.iter())
            .map(|(&g, &s)| g * s * (1.0 - s)),
    );
    grads.fc2.weight += &outer(&d_logits, &cache.hidden);
    grads.fc2.bias += &d_logits;

    let mut d_hidden = model.fc2.weight.t().dot(&d_logits);
    ndarray::Zip::from(&mut d_hidden)
        .and(&cache.hidden_pre)
        .for_each(|d, &z| *d *= silu_grad(z));
    grads.fc1.weight += &outer(&d_hidden, &cache.pooled);
    grads.fc1.bias += &d_hidden;

    let d_pooled = model.fc1.weight.t().dot(&d_hidden);
    let d_pooled = d_pooled
        .into_shape_with_order((FUSION_CHANNELS, POOL_GRID * POOL_GRID))
        .expect("pooled shape");
    let mut d_fused = adaptive_pool_backward(&d_pooled, SIDES[3], POOL_GRID);
    ndarray::Zip::from(&mut d_fused)
        .and(&cache.fused_pre)
        .for_each(|d, &z| *d *= silu_grad(z));
    grads.fusion.weight += &d_fused.dot(&cache.fused_in.t());
    grads.fusion.bias += &d_fused.sum_axis(Axis(1));

    if !include_backbone {
        return;
    }
    let d_fused_in = model.fusion.weight.t().dot(&d_fused);
    branch_backward(
        &model.color,
        &cache.color,
        d_fused_in.slice(s![..BRANCH_CHANNELS, ..]),
        &mut grads.color,
    );
    branch_backward(
        &model.depth,
        &cache.depth,
        d_fused_in.slice(s![BRANCH_CHANNELS.., ..]),
        &mut grads.depth,
    );
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}
