use rand_distr::{Distribution, Normal};

use super::{BackboneConfig, ModelParams, EMBEDDING_DIM, HIDDEN_DIM, RADIOMICS_DIM};
use crate::autodiff::Tensor;
use crate::rng::substream;

/// Final conv of each residual branch starts at this fraction of He scale,
/// keeping activations bounded without normalization layers.
const BRANCH_GAIN: f64 = 0.25;

#[derive(Clone, Copy)]
enum Init {
    He(f64),
    Zeros,
}

fn conv(name: String, c_out: usize, c_in: usize, k: usize, init: Init) -> (String, Vec<usize>, Init) {
    (name, vec![c_out, c_in, k, k], init)
}

fn residual(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, c_in: usize, c: usize) {
    out.push(conv(format!("{prefix}.conv1.weight"), c, c_in, 3, Init::He(1.0)));
    out.push(conv(format!("{prefix}.conv2.weight"), c, c, 3, Init::He(BRANCH_GAIN)));
    if c_in != c {
        out.push(conv(format!("{prefix}.shortcut.weight"), c, c_in, 1, Init::He(1.0)));
    }
}

fn mlp(out: &mut Vec<(String, Vec<usize>, Init)>, prefix: &str, d_in: usize) {
    out.push((format!("{prefix}.fc1.weight"), vec![d_in, HIDDEN_DIM], Init::He(1.0)));
    out.push((format!("{prefix}.fc1.bias"), vec![1, HIDDEN_DIM], Init::Zeros));
    out.push((format!("{prefix}.fc2.weight"), vec![HIDDEN_DIM, EMBEDDING_DIM], Init::He(1.0)));
    out.push((format!("{prefix}.fc2.bias"), vec![1, EMBEDDING_DIM], Init::Zeros));
}

fn layout(config: &BackboneConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = vec![conv("image.stem.weight".into(), config.stem_channels, 1, 3, Init::He(1.0))];
    let mut c_in = config.stem_channels;
    for (s, &c) in config.stage_channels.iter().enumerate() {
        let stage = format!("image.stage{}", s + 1);
        residual(&mut out, &format!("{stage}.res"), c_in, c);
        for a in 0..config.attention_modules {
            let attn = format!("{stage}.attn{}", a + 1);
            residual(&mut out, &format!("{attn}.trunk1"), c, c);
            residual(&mut out, &format!("{attn}.trunk2"), c, c);
            out.push(conv(format!("{attn}.mask.conv1.weight"), c, c, 3, Init::He(1.0)));
            out.push(conv(format!("{attn}.mask.conv2.weight"), c, c, 3, Init::He(1.0)));
        }
        c_in = c;
    }
    mlp(&mut out, "image.head", config.final_channels());
    mlp(&mut out, "radiomics", RADIOMICS_DIM);
    out
}

/// Names and shapes of every tower parameter, in initialization order.
pub fn param_shapes(config: &BackboneConfig) -> Vec<(String, Vec<usize>)> {
    layout(config).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// He-normal initialization (std `sqrt(2 / fan_in)`), seeded per tensor so
/// each parameter's values depend only on `(seed, name)`.
pub fn init_params(config: &BackboneConfig, seed: u64) -> ModelParams {
    let mut params = ModelParams::new();
    for (name, shape, init) in layout(config) {
        let numel: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; numel],
            Init::He(gain) => {
                let fan_in: usize = if shape.len() == 4 { shape[1..].iter().product() } else { shape[0] };
                let std = gain * (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let mut rng = substream(seed, &format!("init/{name}"));
                (0..numel).map(|_| normal.sample(&mut rng) as f32).collect()
            }
        };
        params.insert(name, Tensor::new(shape, data).expect("layout shapes are consistent"));
    }
    params
}

/// Adds a zero-initialized linear head `u -> logit` with an identity input
/// normalization.
pub fn init_classifier(params: &mut ModelParams) {
    params.insert("classifier.weight".into(), Tensor::zeros(&[EMBEDDING_DIM, 1]));
    params.insert("classifier.bias".into(), Tensor::zeros(&[1, 1]));
    params.insert("head_input.center".into(), Tensor::zeros(&[1, EMBEDDING_DIM]));
    params.insert("head_input.scale".into(), Tensor::full(&[1, 1], 1.0));
}

/// Fits the frozen head input normalization `(u - center) / scale` to
/// `embeddings`: their mean, and their RMS distance from it.
pub fn fit_head_input(params: &mut ModelParams, embeddings: &[Vec<f32>]) {
    let n = embeddings.len().max(1) as f64;
    let mut center = vec![0.0f64; EMBEDDING_DIM];
    for u in embeddings {
        center.iter_mut().zip(u).for_each(|(c, &x)| *c += x as f64 / n);
    }
    let spread = embeddings
        .iter()
        .map(|u| u.iter().zip(&center).map(|(&x, c)| (x as f64 - c).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    let scale = if spread.sqrt() > 1e-6 { spread.sqrt() as f32 } else { 1.0 };
    let center: Vec<f32> = center.into_iter().map(|c| c as f32).collect();
    params.insert("head_input.center".into(), Tensor::new(vec![1, EMBEDDING_DIM], center).expect("embedding width"));
    params.insert("head_input.scale".into(), Tensor::full(&[1, 1], scale));
}

