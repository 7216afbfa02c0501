use std::collections::BTreeMap;

use super::{BackboneConfig, ModelError, ModelParams, EMBEDDING_DIM, RADIOMICS_DIM};
use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::data::GrayImage;

/// Parameters registered on one tape, by name.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var, ModelError> {
        self.vars.get(name).copied().ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self { vars: vars.into_iter().collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Registers every parameter whose name starts with `prefix` on `tape`, as a
/// differentiable leaf when `trainable`, otherwise as a constant.
pub fn bind(tape: &mut Tape, params: &ModelParams, prefix: &str, trainable: bool) -> Bound {
    let vars = params
        .iter()
        .filter(|(name, _)| name.starts_with(prefix))
        .map(|(name, t)| {
            let t = t.clone();
            let v = if trainable { tape.leaf(t) } else { tape.constant(t) };
            (name.clone(), v)
        })
        .collect();
    Bound { vars }
}

/// `x W + 1 b` for `x: [n x d_in]`, `W: [d_in x d_out]`, `b: [1 x d_out]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
    let n = tape.value(x).shape()[0];
    let xw = tape.matmul(x, w)?;
    let ones = tape.constant(Tensor::full(&[n, 1], 1.0));
    let bias = tape.matmul(ones, b)?;
    tape.add(xw, bias)
}

fn conv3(tape: &mut Tape, bound: &Bound, name: &str, x: Var) -> Result<Var, ModelError> {
    let k = bound.get(name)?;
    Ok(tape.conv2d(x, k, 1, 1)?)
}

/// `relu(shortcut(x) + conv2(relu(conv1(x))))`; the shortcut is a 1x1 conv
/// when the channel count changes and the identity otherwise.
pub(crate) fn residual_block(tape: &mut Tape, bound: &Bound, prefix: &str, x: Var) -> Result<Var, ModelError> {
    let h = conv3(tape, bound, &format!("{prefix}.conv1.weight"), x)?;
    let h = tape.relu(h)?;
    let h = conv3(tape, bound, &format!("{prefix}.conv2.weight"), h)?;
    let skip = match bound.get(&format!("{prefix}.shortcut.weight")) {
        Ok(k) => tape.conv2d(x, k, 1, 0)?,
        Err(_) => x,
    };
    let sum = tape.add(skip, h)?;
    Ok(tape.relu(sum)?)
}

/// `(1 + M(x)) * T(x)` with trunk `T` = two residual blocks and mask
/// `M = sigmoid(upsample(conv(relu(conv(maxpool(x))))))`. Returns the output
/// and the mask.
pub fn attention_module_forward(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    x: Var,
) -> Result<(Var, Var), ModelError> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 3 || shape[1] < 4 || shape[2] < 4 {
        return Err(TensorError::Shape(format!("attention module needs extent >= 4, got {shape:?}")).into());
    }
    let t = residual_block(tape, bound, &format!("{prefix}.trunk1"), x)?;
    let t = residual_block(tape, bound, &format!("{prefix}.trunk2"), t)?;

    let m = tape.max_pool2d(x, 2)?;
    let m = conv3(tape, bound, &format!("{prefix}.mask.conv1.weight"), m)?;
    let m = tape.relu(m)?;
    let m = conv3(tape, bound, &format!("{prefix}.mask.conv2.weight"), m)?;
    let m = tape.upsample_nearest(m, 2)?;
    let mask = tape.sigmoid(m)?;

    let gated = tape.mul(mask, t)?;
    let out = tape.add(t, gated)?;
    Ok((out, mask))
}

pub struct ImageForward {
    /// `[1 x 128]` embedding.
    pub u: Var,
    /// Sigmoid masks of every attention module, in network order.
    pub masks: Vec<Var>,
}

/// Image tower on a `[1 x r x r]` input already on the tape.
pub fn image_forward(
    tape: &mut Tape,
    bound: &Bound,
    config: &BackboneConfig,
    input: Var,
) -> Result<ImageForward, ModelError> {
    let r = config.input_resolution;
    let shape = tape.value(input).shape();
    if shape != [1, r, r] {
        return Err(TensorError::Shape(format!("image input {shape:?}, expected [1, {r}, {r}]")).into());
    }
    let x = conv3(tape, bound, "image.stem.weight", input)?;
    let mut x = tape.relu(x)?;
    let mut masks = Vec::new();
    for s in 0..config.stage_channels.len() {
        if s > 0 {
            x = tape.max_pool2d(x, 2)?;
        }
        let stage = format!("image.stage{}", s + 1);
        x = residual_block(tape, bound, &format!("{stage}.res"), x)?;
        for a in 0..config.attention_modules {
            let (out, mask) = attention_module_forward(tape, bound, &format!("{stage}.attn{}", a + 1), x)?;
            x = out;
            masks.push(mask);
        }
    }
    let pooled = tape.global_avg_pool(x)?;
    let row = tape.reshape(pooled, &[1, config.final_channels()])?;
    let h = linear(tape, row, bound.get("image.head.fc1.weight")?, bound.get("image.head.fc1.bias")?)?;
    let h = tape.relu(h)?;
    let u = linear(tape, h, bound.get("image.head.fc2.weight")?, bound.get("image.head.fc2.bias")?)?;
    Ok(ImageForward { u, masks })
}

/// Radiomics tower on standardized inputs `[n x 102]`, giving `[n x 128]`.
pub fn radiomics_forward(tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, ModelError> {
    let shape = tape.value(x).shape();
    if shape.len() != 2 || shape[1] != RADIOMICS_DIM {
        return Err(TensorError::Shape(format!("radiomics input {shape:?}, expected [n, {RADIOMICS_DIM}]")).into());
    }
    let h = linear(tape, x, bound.get("radiomics.fc1.weight")?, bound.get("radiomics.fc1.bias")?)?;
    let h = tape.relu(h)?;
    Ok(linear(tape, h, bound.get("radiomics.fc2.weight")?, bound.get("radiomics.fc2.bias")?)?)
}

/// `((u - center) / scale) w + b` as a `[1 x 1]` tape value; `head_input`
/// holds the frozen `center` and `scale`.
pub fn classifier_logit(tape: &mut Tape, bound: &Bound, head_input: &Bound, u: Var) -> Result<Var, ModelError> {
    let centered = tape.sub(u, head_input.get("head_input.center")?)?;
    let scale = tape.value(head_input.get("head_input.scale")?).item();
    let z = tape.scale(centered, 1.0 / scale)?;
    Ok(linear(tape, z, bound.get("classifier.weight")?, bound.get("classifier.bias")?)?)
}

/// Bilinear resize to the configured resolution, then per-image
/// standardization to zero mean and unit variance (a flat image maps to 0).
pub fn image_input(image: &GrayImage, config: &BackboneConfig) -> Tensor {
    let r = config.input_resolution;
    let mut data = image.resize_square(r).to_unit_f32();
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let sd = (data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
    let inv = if sd > 1e-6 { 1.0 / sd } else { 0.0 };
    data.iter_mut().for_each(|v| *v = ((*v as f64 - mean) * inv) as f32);
    Tensor::new(vec![1, r, r], data).expect("resized to r x r")
}

fn inference_forward(
    image: &GrayImage,
    params: &ModelParams,
    config: &BackboneConfig,
) -> Result<(Tape, ImageForward), ModelError> {
    config.validate()?;
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params, "image.", false);
    let input = tape.constant(image_input(image, config));
    let fwd = image_forward(&mut tape, &bound, config, input)?;
    Ok((tape, fwd))
}

/// 128-dim embedding `u` of an image.
pub fn encode_image(image: &GrayImage, params: &ModelParams, config: &BackboneConfig) -> Result<Vec<f32>, ModelError> {
    let (tape, fwd) = inference_forward(image, params, config)?;
    Ok(tape.value(fwd.u).data().to_vec())
}

/// 128-dim embedding `v` of one standardized radiomics vector.
pub fn encode_radiomics(features: &[f32], params: &ModelParams) -> Result<Vec<f32>, ModelError> {
    if features.len() != RADIOMICS_DIM {
        return Err(TensorError::Shape(format!("radiomics vector of length {}", features.len())).into());
    }
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params, "radiomics.", false);
    let x = tape.constant(Tensor::new(vec![1, RADIOMICS_DIM], features.to_vec())?);
    let v = radiomics_forward(&mut tape, &bound, x)?;
    Ok(tape.value(v).data().to_vec())
}

/// Probability `sigmoid(w . (u - center) / scale + b)`, evaluated in `f64`.
pub fn classify(u: &[f32], params: &ModelParams) -> Result<f64, ModelError> {
    let get = |name: &str| params.get(name).ok_or_else(|| ModelError::MissingParam(name.into()));
    let (w, b) = (get("classifier.weight")?, get("classifier.bias")?);
    let (center, scale) = (get("head_input.center")?, get("head_input.scale")?.item() as f64);
    if u.len() != EMBEDDING_DIM {
        return Err(TensorError::Shape(format!("embedding of length {}", u.len())).into());
    }
    let z: f64 = u
        .iter()
        .zip(center.data())
        .zip(w.data())
        .map(|((&a, &c), &w)| (a as f64 - c as f64) / scale * w as f64)
        .sum::<f64>()
        + b.data()[0] as f64;
    Ok(stable_sigmoid(z))
}

pub(crate) fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mask of the last attention module, averaged over channels, upsampled
/// (nearest) to the input resolution and min-max scaled to `[0, 1]`; a
/// constant map becomes all zeros. Row-major `r x r`.
pub fn extract_attention_map(
    image: &GrayImage,
    params: &ModelParams,
    config: &BackboneConfig,
) -> Result<Vec<f32>, ModelError> {
    let (tape, fwd) = inference_forward(image, params, config)?;
    let last = *fwd.masks.last().ok_or_else(|| ModelError::Config("backbone has no attention modules".into()))?;
    let m = tape.value(last);
    let (c, h, w) = (m.shape()[0], m.shape()[1], m.shape()[2]);
    let mut avg = vec![0.0f64; h * w];
    for ch in 0..c {
        for (a, &v) in avg.iter_mut().zip(&m.data()[ch * h * w..(ch + 1) * h * w]) {
            *a += v as f64 / c as f64;
        }
    }
    let r = config.input_resolution;
    let factor = r / h;
    let up: Vec<f64> = (0..r * r).map(|i| avg[(i / r / factor) * w + (i % r) / factor]).collect();
    let lo = up.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = up.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(if hi > lo { up.iter().map(|v| ((v - lo) / (hi - lo)) as f32).collect() } else { vec![0.0; r * r] })
}
