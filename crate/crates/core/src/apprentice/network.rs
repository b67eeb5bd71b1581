//! Small convolutional policy/value network with a hand-written backward
//! pass.
//!
//! Four 3×3 same-padded convolutions, each followed by batch normalisation
//! and ReLU, then dropout and two linear heads: 21 policy logits and a tanh
//! value. Parameters live in one flat vector in declaration order.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::encoding::{StateEncoding, ENCODING_LEN, ENCODING_ROWS, ENCODING_WIDTH};
use super::{Apprentice, Prediction};
use crate::error::{HedgeError, Result};
use crate::mdp::{HedgeState, HedgingProblem, N_ACTIONS};
use crate::stats::{seeded_rng, SimRng};

pub const CONV_LAYERS: usize = 4;
pub const DEFAULT_CHANNELS: usize = 8;
const H: usize = ENCODING_ROWS;
const W: usize = ENCODING_WIDTH;
const HW: usize = H * W;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Named parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One training example: encoding, tree-policy target and outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub input: StateEncoding,
    pub target: [f64; N_ACTIONS],
    pub z: f64,
}

/// Mean loss over a batch, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub policy: f64,
    pub value: f64,
}

impl BatchLoss {
    pub fn total(&self) -> f64 {
        self.policy + self.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApprenticeNet {
    channels: usize,
    blocks: Vec<Block>,
    params: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

/// Per-layer values kept for the backward pass.
struct LayerCache {
    input: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch-norm output before ReLU.
    normed: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    features: Vec<f64>,
    mask: Vec<f64>,
    logits: Vec<f64>,
    values: Vec<f64>,
}

impl ApprenticeNet {
    /// He-initialised convolutions; zero heads, so a fresh net predicts the
    /// uniform policy and value zero for every state.
    pub fn new(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(HedgeError::InvalidParameter("network needs at least one channel".into()));
        }
        let blocks = Self::layout(channels);
        let total = blocks.last().map(|b| b.offset + b.len()).unwrap_or(0);
        let mut params = vec![0.0; total];
        let mut rng = seeded_rng(seed);
        for b in &blocks {
            let slice = &mut params[b.offset..b.offset + b.len()];
            if b.name.ends_with(".weight") && b.name.starts_with("conv") {
                let fan_in = (b.shape[1] * 9) as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid normal");
                slice.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
            } else if b.name.ends_with(".gamma") {
                slice.fill(1.0);
            }
        }
        Ok(Self {
            channels,
            blocks,
            params,
            running_mean: vec![0.0; CONV_LAYERS * channels],
            running_var: vec![1.0; CONV_LAYERS * channels],
        })
    }

    fn layout(c: usize) -> Vec<Block> {
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        for k in 0..CONV_LAYERS {
            let cin = if k == 0 { 1 } else { c };
            shapes.push((format!("conv{k}.weight"), vec![c, cin, 3, 3]));
            shapes.push((format!("bn{k}.gamma"), vec![c]));
            shapes.push((format!("bn{k}.beta"), vec![c]));
        }
        let f = c * HW;
        shapes.push(("policy.weight".into(), vec![N_ACTIONS, f]));
        shapes.push(("policy.bias".into(), vec![N_ACTIONS]));
        shapes.push(("value.weight".into(), vec![1, f]));
        shapes.push(("value.bias".into(), vec![1]));
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let b = Block { name, shape, offset };
                offset += b.len();
                b
            })
            .collect()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn running_stats(&self) -> (&[f64], &[f64]) {
        (&self.running_mean, &self.running_var)
    }

    pub(crate) fn from_parts(channels: usize, params: Vec<f64>, mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let net = Self::new(channels, 0)?;
        if params.len() != net.params.len() || mean.len() != net.running_mean.len() || var.len() != mean.len() {
            return Err(HedgeError::ShapeMismatch {
                expected: format!("{} parameters", net.params.len()),
                got: format!("{} parameters", params.len()),
            });
        }
        Ok(Self {
            params,
            running_mean: mean,
            running_var: var,
            ..net
        })
    }

    fn block(&self, name: &str) -> &Block {
        self.blocks.iter().find(|b| b.name == name).expect("known block")
    }

    fn slice(&self, name: &str) -> &[f64] {
        let b = self.block(name);
        &self.params[b.offset..b.offset + b.len()]
    }

    /// Inference with running batch-norm statistics and no dropout.
    pub fn forward(&self, input: &[f64]) -> Result<([f64; N_ACTIONS], f64)> {
        if input.len() != ENCODING_LEN {
            return Err(HedgeError::ShapeMismatch {
                expected: format!("{ENCODING_LEN} inputs"),
                got: format!("{} inputs", input.len()),
            });
        }
        let c = self.channels;
        let mut x = input.to_vec();
        for k in 0..CONV_LAYERS {
            let cin = if k == 0 { 1 } else { c };
            let mut y = conv_forward(&x, self.slice(&format!("conv{k}.weight")), 1, cin, c);
            let gamma = self.slice(&format!("bn{k}.gamma"));
            let beta = self.slice(&format!("bn{k}.beta"));
            for ch in 0..c {
                let m = self.running_mean[k * c + ch];
                let inv = 1.0 / (self.running_var[k * c + ch] + BN_EPS).sqrt();
                for v in &mut y[ch * HW..(ch + 1) * HW] {
                    *v = (gamma[ch] * (*v - m) * inv + beta[ch]).max(0.0);
                }
            }
            x = y;
        }
        let mut logits = [0.0; N_ACTIONS];
        let (wp, bp) = (self.slice("policy.weight"), self.slice("policy.bias"));
        let f = x.len();
        for (a, l) in logits.iter_mut().enumerate() {
            *l = bp[a] + dot(&wp[a * f..(a + 1) * f], &x);
        }
        let v = (self.slice("value.bias")[0] + dot(self.slice("value.weight"), &x)).tanh();
        Ok((logits, v))
    }

    pub fn predict_encoding(&self, enc: &StateEncoding) -> Result<Prediction> {
        let (logits, value) = self.forward(enc.as_slice())?;
        Ok(Prediction {
            policy: softmax(&logits),
            value,
        })
    }

    fn forward_train(&self, batch: &[Sample], dropout: f64, rng: Option<&mut SimRng>) -> ForwardCache {
        let b = batch.len();
        let c = self.channels;
        let mut x: Vec<f64> = batch.iter().flat_map(|s| s.input.0).collect();
        let mut layers = Vec::with_capacity(CONV_LAYERS);
        for k in 0..CONV_LAYERS {
            let cin = if k == 0 { 1 } else { c };
            let y = conv_forward(&x, self.slice(&format!("conv{k}.weight")), b, cin, c);
            let gamma = self.slice(&format!("bn{k}.gamma"));
            let beta = self.slice(&format!("bn{k}.beta"));
            let m = (b * HW) as f64;
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for i in 0..b {
                for ch in 0..c {
                    for v in &y[(i * c + ch) * HW..(i * c + ch + 1) * HW] {
                        mean[ch] += v;
                    }
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            for i in 0..b {
                for ch in 0..c {
                    for v in &y[(i * c + ch) * HW..(i * c + ch + 1) * HW] {
                        var[ch] += (v - mean[ch]).powi(2);
                    }
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = y;
            let mut normed = vec![0.0; xhat.len()];
            for i in 0..b {
                for ch in 0..c {
                    let r = (i * c + ch) * HW..(i * c + ch + 1) * HW;
                    for (xh, nm) in xhat[r.clone()].iter_mut().zip(&mut normed[r]) {
                        *xh = (*xh - mean[ch]) * inv_std[ch];
                        *nm = gamma[ch] * *xh + beta[ch];
                    }
                }
            }
            let out: Vec<f64> = normed.iter().map(|v| v.max(0.0)).collect();
            layers.push(LayerCache {
                input: x,
                xhat,
                inv_std,
                normed,
                mean,
                var,
            });
            x = out;
        }
        let f = c * HW;
        let mask: Vec<f64> = match rng {
            Some(rng) if dropout > 0.0 => (0..b * f)
                .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { 1.0 / (1.0 - dropout) })
                .collect(),
            _ => vec![1.0; b * f],
        };
        let dropped: Vec<f64> = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let (wp, bp) = (self.slice("policy.weight"), self.slice("policy.bias"));
        let (wv, bv) = (self.slice("value.weight"), self.slice("value.bias")[0]);
        let mut logits = vec![0.0; b * N_ACTIONS];
        let mut values = vec![0.0; b];
        for i in 0..b {
            let feat = &dropped[i * f..(i + 1) * f];
            for a in 0..N_ACTIONS {
                logits[i * N_ACTIONS + a] = bp[a] + dot(&wp[a * f..(a + 1) * f], feat);
            }
            values[i] = (bv + dot(wv, feat)).tanh();
        }
        ForwardCache {
            layers,
            features: dropped,
            mask,
            logits,
            values,
        }
    }

    /// Mean of `cross_entropy(target, π) + (z − v)²` over the batch with
    /// batch statistics, without touching any state.
    pub fn batch_loss(&self, batch: &[Sample]) -> BatchLoss {
        let cache = self.forward_train(batch, 0.0, None);
        losses(batch, &cache)
    }

    /// Loss and its gradient in the flat parameter order. Dropout is applied
    /// when `rng` is given.
    pub fn loss_and_gradient(
        &self,
        batch: &[Sample],
        dropout: f64,
        rng: Option<&mut SimRng>,
    ) -> (BatchLoss, Vec<f64>, Vec<(Vec<f64>, Vec<f64>)>) {
        let cache = self.forward_train(batch, dropout, rng);
        let loss = losses(batch, &cache);
        let grad = self.backward(batch, &cache);
        let stats = cache.layers.iter().map(|l| (l.mean.clone(), l.var.clone())).collect();
        (loss, grad, stats)
    }

    /// Blends batch statistics into the running averages used at inference.
    pub(crate) fn update_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)], batch_len: usize) {
        let c = self.channels;
        let m = (batch_len * HW) as f64;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for (k, (mean, var)) in stats.iter().enumerate() {
            for ch in 0..c {
                let i = k * c + ch;
                self.running_mean[i] = (1.0 - BN_MOMENTUM) * self.running_mean[i] + BN_MOMENTUM * mean[ch];
                self.running_var[i] = (1.0 - BN_MOMENTUM) * self.running_var[i] + BN_MOMENTUM * var[ch] * unbias;
            }
        }
    }

    fn backward(&self, batch: &[Sample], cache: &ForwardCache) -> Vec<f64> {
        let b = batch.len();
        let c = self.channels;
        let f = c * HW;
        let mut grad = vec![0.0; self.params.len()];
        let inv_b = 1.0 / b as f64;

        let mut dlogits = vec![0.0; b * N_ACTIONS];
        let mut dv = vec![0.0; b];
        for (i, s) in batch.iter().enumerate() {
            let p = softmax(&cache.logits[i * N_ACTIONS..(i + 1) * N_ACTIONS]);
            let mass: f64 = s.target.iter().sum();
            for a in 0..N_ACTIONS {
                dlogits[i * N_ACTIONS + a] = (mass * p[a] - s.target[a]) * inv_b;
            }
            let v = cache.values[i];
            dv[i] = 2.0 * (v - s.z) * (1.0 - v * v) * inv_b;
        }

        let (pw, pb) = (self.block("policy.weight").offset, self.block("policy.bias").offset);
        let (vw, vb) = (self.block("value.weight").offset, self.block("value.bias").offset);
        let wp = self.slice("policy.weight");
        let wv = self.slice("value.weight");
        let mut dfeat = vec![0.0; b * f];
        for i in 0..b {
            let feat = &cache.features[i * f..(i + 1) * f];
            let df = &mut dfeat[i * f..(i + 1) * f];
            for a in 0..N_ACTIONS {
                let g = dlogits[i * N_ACTIONS + a];
                grad[pb + a] += g;
                let row = &mut grad[pw + a * f..pw + (a + 1) * f];
                for ((gw, x), (d, w)) in row.iter_mut().zip(feat).zip(df.iter_mut().zip(&wp[a * f..(a + 1) * f])) {
                    *gw += g * x;
                    *d += g * w;
                }
            }
            grad[vb] += dv[i];
            for ((gw, x), (d, w)) in grad[vw..vw + f].iter_mut().zip(feat).zip(df.iter_mut().zip(wv)) {
                *gw += dv[i] * x;
                *d += dv[i] * w;
            }
        }
        for (d, m) in dfeat.iter_mut().zip(&cache.mask) {
            *d *= m;
        }

        let mut dout = dfeat;
        for k in (0..CONV_LAYERS).rev() {
            let layer = &cache.layers[k];
            let cin = if k == 0 { 1 } else { c };
            let gamma = self.slice(&format!("bn{k}.gamma"));
            let g_off = self.block(&format!("bn{k}.gamma")).offset;
            let b_off = self.block(&format!("bn{k}.beta")).offset;
            let m = (b * HW) as f64;
            // ReLU then batch norm
            let mut dxhat = vec![0.0; dout.len()];
            let mut sum_d = vec![0.0; c];
            let mut sum_dx = vec![0.0; c];
            for i in 0..b {
                for ch in 0..c {
                    for idx in (i * c + ch) * HW..(i * c + ch + 1) * HW {
                        let dn = if layer.normed[idx] > 0.0 { dout[idx] } else { 0.0 };
                        grad[g_off + ch] += dn * layer.xhat[idx];
                        grad[b_off + ch] += dn;
                        let dx = dn * gamma[ch];
                        dxhat[idx] = dx;
                        sum_d[ch] += dx;
                        sum_dx[ch] += dx * layer.xhat[idx];
                    }
                }
            }
            let mut dconv = dxhat;
            for i in 0..b {
                for ch in 0..c {
                    let (s1, s2, inv) = (sum_d[ch] / m, sum_dx[ch] / m, layer.inv_std[ch]);
                    for idx in (i * c + ch) * HW..(i * c + ch + 1) * HW {
                        dconv[idx] = inv * (dconv[idx] - s1 - layer.xhat[idx] * s2);
                    }
                }
            }
            let w_off = self.block(&format!("conv{k}.weight")).offset;
            let weights = self.slice(&format!("conv{k}.weight"));
            let (dw, dx) = conv_backward(&layer.input, weights, &dconv, b, cin, c);
            for (g, d) in grad[w_off..w_off + dw.len()].iter_mut().zip(&dw) {
                *g += d;
            }
            dout = dx;
        }
        grad
    }

    /// Plain L2 norm of the parameters, used in logs.
    pub fn param_norm(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    /// Randomises the heads; used by tests that need a non-trivial net.
    pub fn perturb_heads(&mut self, scale: f64, seed: u64) {
        let mut rng = seeded_rng(seed);
        let normal = Normal::new(0.0, scale).expect("valid normal");
        for name in ["policy.weight", "policy.bias", "value.weight", "value.bias"] {
            let b = self.block(name).clone();
            for p in &mut self.params[b.offset..b.offset + b.len()] {
                *p = normal.sample(&mut rng);
            }
        }
    }
}

impl Apprentice for ApprenticeNet {
    fn predict(&self, state: &HedgeState, problem: &HedgingProblem) -> Result<Prediction> {
        self.predict_encoding(&super::encode(state, problem))
    }
}

fn losses(batch: &[Sample], cache: &ForwardCache) -> BatchLoss {
    let b = batch.len() as f64;
    let mut policy = 0.0;
    let mut value = 0.0;
    for (i, s) in batch.iter().enumerate() {
        let logits = &cache.logits[i * N_ACTIONS..(i + 1) * N_ACTIONS];
        let lse = log_sum_exp(logits);
        for (t, l) in s.target.iter().zip(logits) {
            if *t > 0.0 {
                policy -= t * (l - lse);
            }
        }
        value += (s.z - cache.values[i]).powi(2);
    }
    BatchLoss {
        policy: policy / b,
        value: value / b,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> [f64; N_ACTIONS] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_ACTIONS];
    let mut total = 0.0;
    for (q, l) in p.iter_mut().zip(logits) {
        *q = (l - m).exp();
        total += *q;
    }
    p.iter_mut().for_each(|q| *q /= total);
    p
}

/// Same-padded 3×3 convolution over a `[batch, cin, H, W]` tensor.
fn conv_forward(x: &[f64], w: &[f64], b: usize, cin: usize, cout: usize) -> Vec<f64> {
    let mut y = vec![0.0; b * cout * HW];
    for n in 0..b {
        for o in 0..cout {
            let out = &mut y[(n * cout + o) * HW..(n * cout + o + 1) * HW];
            for i in 0..cin {
                let inp = &x[(n * cin + i) * HW..(n * cin + i + 1) * HW];
                let k = &w[(o * cin + i) * 9..(o * cin + i + 1) * 9];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wk = k[ky * 3 + kx];
                        let (y0, y1) = (1usize.saturating_sub(ky), (H + 1 - ky).min(H));
                        let (x0, x1) = (1usize.saturating_sub(kx), (W + 1 - kx).min(W));
                        for r in y0..y1 {
                            let rs = r + ky - 1;
                            for col in x0..x1 {
                                out[r * W + col] += wk * inp[rs * W + col + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Gradients of the convolution with respect to weights and input.
fn conv_backward(x: &[f64], w: &[f64], dy: &[f64], b: usize, cin: usize, cout: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; w.len()];
    let mut dx = vec![0.0; x.len()];
    for n in 0..b {
        for o in 0..cout {
            let g = &dy[(n * cout + o) * HW..(n * cout + o + 1) * HW];
            for i in 0..cin {
                let base_in = (n * cin + i) * HW;
                let kbase = (o * cin + i) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wk = w[kbase + ky * 3 + kx];
                        let mut acc = 0.0;
                        let (y0, y1) = (1usize.saturating_sub(ky), (H + 1 - ky).min(H));
                        let (x0, x1) = (1usize.saturating_sub(kx), (W + 1 - kx).min(W));
                        for r in y0..y1 {
                            let rs = r + ky - 1;
                            for col in x0..x1 {
                                let src = base_in + rs * W + col + kx - 1;
                                acc += g[r * W + col] * x[src];
                                dx[src] += g[r * W + col] * wk;
                            }
                        }
                        dw[kbase + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    (dw, dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u64) -> Sample {
        let mut rng = seeded_rng(seed);
        let mut input = [0.0; ENCODING_LEN];
        for r in 0..H {
            let v: f64 = rng.gen_range(-1.0..1.0);
            input[r * W..(r + 1) * W].fill(v);
        }
        let mut target = [0.0; N_ACTIONS];
        for t in target.iter_mut() {
            *t = rng.gen::<f64>();
        }
        let total: f64 = target.iter().sum();
        target.iter_mut().for_each(|t| *t /= total);
        Sample {
            input: StateEncoding(input),
            target,
            z: rng.gen_range(-1.0..1.0),
        }
    }

    #[test]
    fn fresh_net_is_uniform() {
        let net = ApprenticeNet::new(DEFAULT_CHANNELS, 1).unwrap();
        let p = net.predict_encoding(&sample(3).input).unwrap();
        assert!((p.policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.policy.iter().all(|q| (q - 1.0 / 21.0).abs() < 1e-12));
        assert_eq!(p.value, 0.0);
        assert!(net.forward(&[0.0; 5]).is_err());
    }

    #[test]
    fn uniform_policy_loss_is_log_21() {
        let net = ApprenticeNet::new(DEFAULT_CHANNELS, 1).unwrap();
        let mut s = sample(4);
        s.target = [1.0 / 21.0; N_ACTIONS];
        s.z = 0.0;
        let l = net.batch_loss(&[s, s]);
        assert!((l.policy - 21f64.ln()).abs() < 1e-12);
        assert_eq!(l.value, 0.0);
        assert!((21f64.ln() - 3.0445).abs() < 1e-4);
    }

    #[test]
    fn single_sample_loss_matches_hand_computation() {
        let mut net = ApprenticeNet::new(4, 2).unwrap();
        net.perturb_heads(0.3, 5);
        let mut s = sample(6);
        // a zero input makes every convolution output 0, so batch norm
        // returns beta = 0 and the heads reduce to their biases
        s.input = StateEncoding([0.0; ENCODING_LEN]);
        let l = net.batch_loss(&[s]);
        let bp = net.slice("policy.bias");
        let lse = log_sum_exp(bp);
        let ce: f64 = s.target.iter().zip(bp).map(|(t, l)| -t * (l - lse)).sum();
        let v = net.slice("value.bias")[0].tanh();
        assert!((l.policy - ce).abs() < 1e-12);
        assert!((l.value - (s.z - v).powi(2)).abs() < 1e-12);
        assert!((l.total() - ce - (s.z - v).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn inference_is_pure_and_bounded() {
        let mut net = ApprenticeNet::new(DEFAULT_CHANNELS, 7).unwrap();
        net.perturb_heads(1.0, 8);
        let before = net.clone();
        for seed in 0..50 {
            let s = sample(seed);
            let a = net.predict_encoding(&s.input).unwrap();
            let b = net.predict_encoding(&s.input).unwrap();
            assert_eq!(a, b);
            assert!(a.value.abs() <= 1.0);
            assert!((a.policy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(net, before);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = ApprenticeNet::new(4, 11).unwrap();
        net.perturb_heads(0.2, 12);
        let batch: Vec<Sample> = (0..10).map(|i| sample(100 + i)).collect();
        let (_, grad, _) = net.loss_and_gradient(&batch, 0.0, None);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let fd = (plus.batch_loss(&batch).total() - minus.batch_loss(&batch).total()) / (2.0 * h);
            let err = (fd - grad[i]).abs() / (fd.abs().max(grad[i].abs()).max(1e-4));
            worst = worst.max(err);
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }
}
