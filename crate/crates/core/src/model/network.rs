use rayon::prelude::*;

use super::layers::{
    avg_pool2, avg_pool2_backward, conv3x3_backward, conv3x3_forward, global_avg_pool,
    global_avg_pool_backward, relu, relu_backward, softmax, FeatureMap,
};
use super::train::Sample;
use super::{ModelConfig, Params, PROB_FLOOR};
use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Resamples a patch to `input_size`² and maps channel values to
/// `v / 255 − 0.5`, planar RGB.
pub fn prepare_input(img: &RgbImage, input_size: usize) -> Vec<f64> {
    img.resize_bilinear_planar(input_size, input_size)
        .into_iter()
        .map(|v| v / 255.0 - 0.5)
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct StagePlan {
    transition: Option<ConvIdx>,
    blocks: Vec<(ConvIdx, ConvIdx)>,
}

/// Parameter view checked against a configuration.
#[derive(Debug)]
pub struct Network<'a> {
    params: &'a Params,
    input_size: usize,
    stem: ConvIdx,
    stages: Vec<StagePlan>,
    fc: ConvIdx,
}

struct BlockTrace {
    x: FeatureMap,
    pre1: FeatureMap,
    h1: FeatureMap,
    z: FeatureMap,
}

struct StageTrace {
    pool_in: Option<(usize, usize, usize)>,
    trans_in: Option<FeatureMap>,
    trans_pre: Option<FeatureMap>,
    blocks: Vec<BlockTrace>,
}

struct Trace {
    input: FeatureMap,
    stem_pre: FeatureMap,
    stages: Vec<StageTrace>,
    final_shape: (usize, usize, usize),
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

fn shape_of(f: &FeatureMap) -> (usize, usize, usize) {
    (f.channels, f.height, f.width)
}

impl<'a> Network<'a> {
    pub fn new(config: &ModelConfig, params: &'a Params) -> Result<Self> {
        config.validate()?;
        Params::zeros(config).check_layout(params)?;
        let mut next = 0usize;
        let mut conv = || {
            let idx = ConvIdx {
                weight: next,
                bias: next + 1,
            };
            next += 2;
            idx
        };
        let stem = conv();
        let stages = (0..config.widths.len())
            .map(|s| StagePlan {
                transition: (s > 0).then(&mut conv),
                blocks: (0..config.blocks_per_stage).map(|_| (conv(), conv())).collect(),
            })
            .collect();
        let fc = conv();
        Ok(Self {
            params,
            input_size: config.input_size,
            stem,
            stages,
            fc,
        })
    }

    fn w(&self, idx: usize) -> &[f64] {
        &self.params.tensors[idx].data
    }

    fn conv(&self, x: &FeatureMap, c: ConvIdx) -> FeatureMap {
        conv3x3_forward(x, self.w(c.weight), self.w(c.bias))
    }

    fn input_map(&self, input: &[f64]) -> Result<FeatureMap> {
        let s = self.input_size;
        if input.len() != 3 * s * s {
            return Err(Error::ShapeMismatch(format!(
                "input has {} values, expected 3x{s}x{s}",
                input.len()
            )));
        }
        Ok(FeatureMap {
            channels: 3,
            height: s,
            width: s,
            data: input.to_vec(),
        })
    }

    fn run(&self, input: &[f64]) -> Result<(Vec<f64>, Trace)> {
        let input = self.input_map(input)?;
        let stem_pre = self.conv(&input, self.stem);
        let mut x = relu(&stem_pre);
        let mut stages = Vec::with_capacity(self.stages.len());
        for plan in &self.stages {
            let mut st = StageTrace {
                pool_in: None,
                trans_in: None,
                trans_pre: None,
                blocks: Vec::with_capacity(plan.blocks.len()),
            };
            if let Some(t) = plan.transition {
                st.pool_in = Some(shape_of(&x));
                let pooled = avg_pool2(&x);
                let pre = self.conv(&pooled, t);
                x = relu(&pre);
                st.trans_in = Some(pooled);
                st.trans_pre = Some(pre);
            }
            for &(c1, c2) in &plan.blocks {
                let pre1 = self.conv(&x, c1);
                let h1 = relu(&pre1);
                let mut z = self.conv(&h1, c2);
                for (zv, xv) in z.data.iter_mut().zip(&x.data) {
                    *zv += xv;
                }
                let out = relu(&z);
                st.blocks.push(BlockTrace {
                    x: std::mem::replace(&mut x, out),
                    pre1,
                    h1,
                    z,
                });
            }
            stages.push(st);
        }
        let pooled = global_avg_pool(&x);
        let fw = self.w(self.fc.weight);
        let fb = self.w(self.fc.bias);
        let logits: Vec<f64> = (0..NUM_CLASSES)
            .map(|k| {
                fb[k]
                    + pooled
                        .iter()
                        .enumerate()
                        .map(|(c, g)| fw[k * pooled.len() + c] * g)
                        .sum::<f64>()
            })
            .collect();
        let probs = softmax(&logits);
        let trace = Trace {
            input,
            stem_pre,
            stages,
            final_shape: shape_of(&x),
            pooled,
            probs,
        };
        Ok((logits, trace))
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(input)?.0)
    }

    pub fn probabilities(&self, input: &[f64]) -> Result<[f64; NUM_CLASSES]> {
        let p = self.run(input)?.1.probs;
        Ok([p[0], p[1], p[2], p[3]])
    }

    /// Cross-entropy of one sample, its probabilities and the gradient of
    /// `scale · loss` with respect to every parameter.
    fn sample_gradient(&self, input: &[f64], label: usize, scale: f64) -> Result<(f64, Vec<f64>, Params)> {
        let (_, trace) = self.run(input)?;
        let mut grads = self.params.zeros_like();
        let p_true = trace.probs[label].max(PROB_FLOOR);
        let loss = -p_true.ln();

        let mut dlogits: Vec<f64> = trace.probs.clone();
        dlogits[label] -= 1.0;
        // Inside the floor the loss is constant in the logits.
        if trace.probs[label] < PROB_FLOOR {
            dlogits.iter_mut().for_each(|v| *v = 0.0);
        }
        dlogits.iter_mut().for_each(|v| *v *= scale);

        let feat = trace.pooled.len();
        let fw = self.w(self.fc.weight);
        let mut dpooled = vec![0.0; feat];
        {
            let gw = &mut grads.tensors[self.fc.weight].data;
            for k in 0..NUM_CLASSES {
                for c in 0..feat {
                    gw[k * feat + c] += dlogits[k] * trace.pooled[c];
                    dpooled[c] += fw[k * feat + c] * dlogits[k];
                }
            }
        }
        for (g, d) in grads.tensors[self.fc.bias].data.iter_mut().zip(&dlogits) {
            *g += d;
        }

        let mut d = global_avg_pool_backward(trace.final_shape, &dpooled);
        for (plan, st) in self.stages.iter().zip(&trace.stages).rev() {
            for (&(c1, c2), bt) in plan.blocks.iter().zip(&st.blocks).rev() {
                let dz = relu_backward(&bt.z, &d);
                let dh1 = self.conv_backward(&bt.h1, c2, &dz, &mut grads);
                let dpre1 = relu_backward(&bt.pre1, &dh1);
                let mut dx = self.conv_backward(&bt.x, c1, &dpre1, &mut grads);
                for (a, b) in dx.data.iter_mut().zip(&dz.data) {
                    *a += b;
                }
                d = dx;
            }
            if let (Some(t), Some(tin), Some(tpre), Some(shape)) =
                (plan.transition, &st.trans_in, &st.trans_pre, st.pool_in)
            {
                let dpre = relu_backward(tpre, &d);
                let dpool = self.conv_backward(tin, t, &dpre, &mut grads);
                d = avg_pool2_backward(shape, &dpool);
            }
        }
        let dstem = relu_backward(&trace.stem_pre, &d);
        self.conv_backward(&trace.input, self.stem, &dstem, &mut grads);
        Ok((loss, trace.probs, grads))
    }

    fn conv_backward(&self, input: &FeatureMap, c: ConvIdx, grad_out: &FeatureMap, grads: &mut Params) -> FeatureMap {
        debug_assert_eq!(c.bias, c.weight + 1);
        let (head, tail) = grads.tensors.split_at_mut(c.bias);
        conv3x3_backward(
            input,
            self.w(c.weight),
            grad_out,
            &mut head[c.weight].data,
            &mut tail[0].data,
        )
    }
}

pub fn forward_logits(config: &ModelConfig, params: &Params, input: &[f64]) -> Result<Vec<f64>> {
    Network::new(config, params)?.logits(input)
}

/// Class probabilities for every input of a non-empty batch.
pub fn forward(config: &ModelConfig, params: &Params, batch: &[Vec<f64>]) -> Result<Vec<[f64; NUM_CLASSES]>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("forward batch"));
    }
    let net = Network::new(config, params)?;
    batch.par_iter().map(|x| net.probabilities(x)).collect()
}

/// Mean cross-entropy over `batch`, its parameter gradient, and the number
/// of samples whose argmax matched the label. Per-sample work runs in
/// parallel; reductions happen in batch order.
pub fn loss_and_gradients(
    config: &ModelConfig,
    params: &Params,
    batch: &[&Sample],
) -> Result<(f64, Params, usize)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient batch"));
    }
    let net = Network::new(config, params)?;
    let scale = 1.0 / batch.len() as f64;
    let per_sample: Vec<(f64, Vec<f64>, Params)> = batch
        .par_iter()
        .map(|s| net.sample_gradient(&s.input, s.label.code(), scale))
        .collect::<Result<_>>()?;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    let mut correct = 0;
    for ((l, probs, g), s) in per_sample.iter().zip(batch) {
        loss += l;
        total.add_scaled(g, 1.0);
        if super::argmax(&[probs[0], probs[1], probs[2], probs[3]]) == s.label {
            correct += 1;
        }
    }
    Ok((loss * scale, total, correct))
}
