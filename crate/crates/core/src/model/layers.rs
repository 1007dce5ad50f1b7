//! Dense CHW kernels used by the network: 3×3 same-padding convolution,
//! rectifier, 2×2 average pooling, global average pooling and softmax.

/// Channel-major feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    fn same_shape(&self) -> Self {
        Self::zeros(self.channels, self.height, self.width)
    }
}

pub const KERNEL: usize = 3;

/// Range of output columns `x` for which `x + k - 1` is inside `[0, len)`.
#[inline]
fn valid_range(k: usize, len: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == KERNEL - 1 { len.saturating_sub(1) } else { len };
    (lo, hi)
}

/// `weight` is `[out][in][3][3]`, zero padding of one pixel.
pub fn conv3x3_forward(input: &FeatureMap, weight: &[f64], bias: &[f64]) -> FeatureMap {
    let (h, w) = (input.height, input.width);
    let out_ch = bias.len();
    let in_ch = input.channels;
    let mut out = FeatureMap::zeros(out_ch, h, w);
    let plane = h * w;
    for o in 0..out_ch {
        let dst = &mut out.data[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..in_ch {
            let src = input.plane(i);
            for ky in 0..KERNEL {
                let (y_lo, y_hi) = valid_range(ky, h);
                for kx in 0..KERNEL {
                    let k = weight[((o * in_ch + i) * KERNEL + ky) * KERNEL + kx];
                    if k == 0.0 {
                        continue;
                    }
                    let (x_lo, x_hi) = valid_range(kx, w);
                    for y in y_lo..y_hi {
                        let sy = y + ky - 1;
                        let d = &mut dst[y * w + x_lo..y * w + x_hi];
                        let s = &src[sy * w + x_lo + kx - 1..sy * w + x_hi + kx - 1];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += k * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn conv3x3_backward(
    input: &FeatureMap,
    weight: &[f64],
    grad_out: &FeatureMap,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> FeatureMap {
    let (h, w) = (input.height, input.width);
    let in_ch = input.channels;
    let out_ch = grad_out.channels;
    let mut grad_in = input.same_shape();
    let plane = h * w;
    for o in 0..out_ch {
        let go = grad_out.plane(o);
        grad_bias[o] += go.iter().sum::<f64>();
        for i in 0..in_ch {
            let src = input.plane(i);
            let gi = &mut grad_in.data[i * plane..(i + 1) * plane];
            for ky in 0..KERNEL {
                let (y_lo, y_hi) = valid_range(ky, h);
                for kx in 0..KERNEL {
                    let widx = ((o * in_ch + i) * KERNEL + ky) * KERNEL + kx;
                    let k = weight[widx];
                    let (x_lo, x_hi) = valid_range(kx, w);
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let sy = y + ky - 1;
                        let g = &go[y * w + x_lo..y * w + x_hi];
                        let start = sy * w + x_lo + kx - 1;
                        let len = x_hi - x_lo;
                        let s = &src[start..start + len];
                        for (gv, sv) in g.iter().zip(s) {
                            acc += gv * sv;
                        }
                        let d = &mut gi[start..start + len];
                        for (dv, gv) in d.iter_mut().zip(g) {
                            *dv += k * gv;
                        }
                    }
                    grad_weight[widx] += acc;
                }
            }
        }
    }
    grad_in
}

pub fn relu(x: &FeatureMap) -> FeatureMap {
    FeatureMap {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*x
    }
}

/// Gradient through a rectifier whose pre-activation was `pre`.
pub fn relu_backward(pre: &FeatureMap, grad: &FeatureMap) -> FeatureMap {
    FeatureMap {
        data: pre
            .data
            .iter()
            .zip(&grad.data)
            .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
            .collect(),
        ..*grad
    }
}

/// Non-overlapping 2×2 mean; a trailing odd row or column is dropped.
pub fn avg_pool2(x: &FeatureMap) -> FeatureMap {
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut out = FeatureMap::zeros(x.channels, oh, ow);
    for c in 0..x.channels {
        let src = x.plane(c);
        for y in 0..oh {
            for xx in 0..ow {
                let (r0, r1) = (2 * y * x.width, (2 * y + 1) * x.width);
                let s = src[r0 + 2 * xx] + src[r0 + 2 * xx + 1] + src[r1 + 2 * xx] + src[r1 + 2 * xx + 1];
                out.data[(c * oh + y) * ow + xx] = 0.25 * s;
            }
        }
    }
    out
}

pub fn avg_pool2_backward(input_shape: (usize, usize, usize), grad: &FeatureMap) -> FeatureMap {
    let (ch, h, w) = input_shape;
    let mut out = FeatureMap::zeros(ch, h, w);
    for c in 0..ch {
        for y in 0..grad.height {
            for x in 0..grad.width {
                let g = 0.25 * grad.data[(c * grad.height + y) * grad.width + x];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    out.data[(c * h + 2 * y + dy) * w + 2 * x + dx] += g;
                }
            }
        }
    }
    out
}

pub fn global_avg_pool(x: &FeatureMap) -> Vec<f64> {
    let n = x.plane_len() as f64;
    (0..x.channels)
        .map(|c| x.plane(c).iter().sum::<f64>() / n)
        .collect()
}

pub fn global_avg_pool_backward(shape: (usize, usize, usize), grad: &[f64]) -> FeatureMap {
    let (ch, h, w) = shape;
    let n = (h * w) as f64;
    let mut out = FeatureMap::zeros(ch, h, w);
    for c in 0..ch {
        let g = grad[c] / n;
        out.data[c * h * w..(c + 1) * h * w]
            .iter_mut()
            .for_each(|v| *v = g);
    }
    out
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
