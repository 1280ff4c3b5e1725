//! Two-channel 1-D convolutional network with hand-written backpropagation
//! and AdamW training.
//!
//! Layout: three blocks of conv(k=7) → max-pool(3, stride 3) → tanh with 32,
//! 16 and 16 filters, then dense(16→32) → ReLU → dense(32→2) → log-softmax.
//! A 2×128 input shrinks 128 → 122 → 40 → 34 → 11 → 5 → 1.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{BeatLabel, BeatPair, BEAT_LEN};

pub const INPUT_CHANNELS: usize = 2;
pub const KERNEL: usize = 7;
pub const POOL: usize = 3;
const CONV_FILTERS: [usize; 3] = [32, 16, 16];
const HIDDEN: usize = 32;
const CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `[out][in][k]`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv1d {
    fn new(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / ((in_ch * kernel) as f64).sqrt();
        Conv1d {
            in_ch,
            out_ch,
            kernel,
            w: (0..out_ch * in_ch * kernel).map(|_| rng.random_range(-bound..bound)).collect(),
            b: (0..out_ch).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    fn out_len(&self, len: usize) -> usize {
        len + 1 - self.kernel
    }

    fn forward(&self, x: &[f64], len: usize) -> Vec<f64> {
        let lo = self.out_len(len);
        let k = self.kernel;
        let mut y = vec![0.0; self.out_ch * lo];
        for o in 0..self.out_ch {
            let yo = &mut y[o * lo..(o + 1) * lo];
            yo.fill(self.b[o]);
            for i in 0..self.in_ch {
                let xi = &x[i * len..(i + 1) * len];
                let wk = &self.w[(o * self.in_ch + i) * k..(o * self.in_ch + i + 1) * k];
                for (t, yt) in yo.iter_mut().enumerate() {
                    let win = &xi[t..t + k];
                    *yt += wk.iter().zip(win).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, x: &[f64], len: usize, dy: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let lo = self.out_len(len);
        let k = self.kernel;
        let mut dx = vec![0.0; self.in_ch * len];
        for o in 0..self.out_ch {
            let dyo = &dy[o * lo..(o + 1) * lo];
            gb[o] += dyo.iter().sum::<f64>();
            for i in 0..self.in_ch {
                let base = (o * self.in_ch + i) * k;
                let xi = &x[i * len..(i + 1) * len];
                let dxi = &mut dx[i * len..(i + 1) * len];
                for j in 0..k {
                    let wj = self.w[base + j];
                    let mut acc = 0.0;
                    for (t, &d) in dyo.iter().enumerate() {
                        acc += d * xi[t + j];
                        dxi[t + j] += wj * d;
                    }
                    gw[base + j] += acc;
                }
            }
        }
        dx
    }

    fn flops(&self, len: usize) -> u64 {
        (2 * self.in_ch * self.kernel * self.out_ch * self.out_len(len)) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Dense {
            inputs,
            outputs,
            w: (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect(),
            b: (0..outputs).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| self.b[o] + self.w[o * self.inputs..(o + 1) * self.inputs].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn backward(&self, x: &[f64], dy: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &d) in dy.iter().enumerate() {
            gb[o] += d;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                gw[row + i] += d * x[i];
                dx[i] += self.w[row + i] * d;
            }
        }
        dx
    }
}

fn max_pool(x: &[f64], channels: usize, len: usize) -> (Vec<f64>, Vec<usize>) {
    let lo = pool_len(len);
    let mut y = Vec::with_capacity(channels * lo);
    let mut arg = Vec::with_capacity(channels * lo);
    for c in 0..channels {
        for t in 0..lo {
            let start = c * len + t * POOL;
            let mut best = start;
            for j in start + 1..start + POOL {
                if x[j] > x[best] {
                    best = j;
                }
            }
            y.push(x[best]);
            arg.push(best);
        }
    }
    (y, arg)
}

pub fn pool_len(len: usize) -> usize {
    (len - POOL) / POOL + 1
}

/// Output of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnOutput {
    pub log_probs: [f64; 2],
    /// Larger of the two class probabilities.
    pub confidence: f64,
}

impl CnnOutput {
    /// Argmax class; equal outputs go to Normal.
    pub fn label(&self) -> BeatLabel {
        BeatLabel::from_abnormal(self.log_probs[1] > self.log_probs[0])
    }

    pub fn probs(&self) -> [f64; 2] {
        [self.log_probs[0].exp(), self.log_probs[1].exp()]
    }
}

fn log_softmax(z: &[f64]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    [z[0] - lse, z[1] - lse]
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    input: Vec<f64>,
    conv_out: [Vec<f64>; 3],
    pool_arg: [Vec<usize>; 3],
    act: [Vec<f64>; 3],
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub version: u32,
    pub seed: u64,
    pub input_len: usize,
    pub conv: [Conv1d; 3],
    pub fc1: Dense,
    pub fc2: Dense,
}

/// Parameter gradients, one flat vector per tensor in [`CnnModel::tensor_names`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl CnnModel {
    pub const VERSION: u32 = 1;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1 = Conv1d::new(INPUT_CHANNELS, CONV_FILTERS[0], KERNEL, &mut rng);
        let c2 = Conv1d::new(CONV_FILTERS[0], CONV_FILTERS[1], KERNEL, &mut rng);
        let c3 = Conv1d::new(CONV_FILTERS[1], CONV_FILTERS[2], KERNEL, &mut rng);
        let flat = CONV_FILTERS[2] * Self::shape_chain(BEAT_LEN)[6];
        CnnModel {
            version: Self::VERSION,
            seed,
            input_len: BEAT_LEN,
            conv: [c1, c2, c3],
            fc1: Dense::new(flat, HIDDEN, &mut rng),
            fc2: Dense::new(HIDDEN, CLASSES, &mut rng),
        }
    }

    /// Model with every weight and bias set to zero.
    pub fn zeros() -> Self {
        let mut m = CnnModel::new(0);
        for t in m.tensors_mut() {
            t.fill(0.0);
        }
        m
    }

    /// Sequence lengths through the conv/pool stack, followed by the
    /// flattened width, hidden width and class count.
    pub fn shape_chain(len: usize) -> Vec<usize> {
        let mut out = vec![len];
        let mut l = len;
        for _ in 0..3 {
            l = l + 1 - KERNEL;
            out.push(l);
            l = pool_len(l);
            out.push(l);
        }
        out.push(CONV_FILTERS[2] * l);
        out.push(HIDDEN);
        out.push(CLASSES);
        out
    }

    pub fn tensor_names() -> [&'static str; 10] {
        ["conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w", "conv3.b", "fc1.w", "fc1.b", "fc2.w", "fc2.b"]
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let [c1, c2, c3] = &self.conv;
        vec![&c1.w, &c1.b, &c2.w, &c2.b, &c3.w, &c3.b, &self.fc1.w, &self.fc1.b, &self.fc2.w, &self.fc2.b]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let [c1, c2, c3] = &mut self.conv;
        vec![
            &mut c1.w, &mut c1.b, &mut c2.w, &mut c2.b, &mut c3.w, &mut c3.b, &mut self.fc1.w, &mut self.fc1.b,
            &mut self.fc2.w, &mut self.fc2.b,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zero_grads(&self) -> Gradients {
        Gradients(self.tensors().iter().map(|t| vec![0.0; t.len()]).collect())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != INPUT_CHANNELS * self.input_len {
            return Err(Error::Shape(format!(
                "network input of length {} where {} expected",
                x.len(),
                INPUT_CHANNELS * self.input_len
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut len = self.input_len;
        let mut cur = x.to_vec();
        let mut conv_out: [Vec<f64>; 3] = Default::default();
        let mut pool_arg: [Vec<usize>; 3] = Default::default();
        let mut act: [Vec<f64>; 3] = Default::default();
        for (l, layer) in self.conv.iter().enumerate() {
            let y = layer.forward(&cur, len);
            len = layer.out_len(len);
            let (p, arg) = max_pool(&y, layer.out_ch, len);
            len = pool_len(len);
            let a: Vec<f64> = p.iter().map(|v| v.tanh()).collect();
            conv_out[l] = y;
            pool_arg[l] = arg;
            act[l] = a.clone();
            cur = a;
        }
        let mut hidden = self.fc1.forward(&cur);
        hidden.iter_mut().for_each(|h| *h = h.max(0.0));
        let logits = self.fc2.forward(&hidden);
        Trace {
            input: x.to_vec(),
            conv_out,
            pool_arg,
            act,
            hidden,
            logits,
        }
    }

    /// Forward pass on one 2×128 input laid out channel after channel.
    pub fn forward(&self, x: &[f64]) -> Result<CnnOutput> {
        self.check_input(x)?;
        Ok(self.output_of(&self.trace(x)))
    }

    fn output_of(&self, t: &Trace) -> CnnOutput {
        let lp = log_softmax(&t.logits);
        CnnOutput {
            log_probs: lp,
            confidence: lp[0].max(lp[1]).exp(),
        }
    }

    pub fn forward_pair(&self, pair: &BeatPair) -> Result<CnnOutput> {
        self.forward(&pair_input(pair))
    }

    /// Negative log-likelihood of `label` and its gradients scaled by
    /// `scale`, accumulated into `grads`.
    fn backward(&self, t: &Trace, label: usize, scale: f64, grads: &mut Gradients) -> f64 {
        let lp = log_softmax(&t.logits);
        let loss = -lp[label];
        let mut dz: Vec<f64> = lp.iter().map(|l| l.exp() * scale).collect();
        dz[label] -= scale;

        let g = &mut grads.0;
        let (gw, gb) = weight_bias(g, 8);
        let dh = self.fc2.backward(&t.hidden, &dz, gw, gb);
        let dh: Vec<f64> = dh.iter().zip(&t.hidden).map(|(d, h)| if *h > 0.0 { *d } else { 0.0 }).collect();
        let (gw, gb) = weight_bias(g, 6);
        let mut dcur = self.fc1.backward(&t.act[2], &dh, gw, gb);

        let mut lens = vec![self.input_len];
        for layer in &self.conv {
            let l = layer.out_len(*lens.last().unwrap());
            lens.push(pool_len(l));
        }
        for l in (0..3).rev() {
            let layer = &self.conv[l];
            // through tanh
            let dpool: Vec<f64> = dcur.iter().zip(&t.act[l]).map(|(d, a)| d * (1.0 - a * a)).collect();
            // through the pool
            let mut dconv = vec![0.0; t.conv_out[l].len()];
            for (d, &idx) in dpool.iter().zip(&t.pool_arg[l]) {
                dconv[idx] += d;
            }
            let input: &[f64] = if l == 0 { &t.input } else { &t.act[l - 1] };
            let (gw, gb) = weight_bias(g, 2 * l);
            dcur = layer.backward(input, lens[l], &dconv, gw, gb);
        }
        loss
    }

    /// Mean loss over a batch and its gradient.
    pub fn loss_and_grad(&self, inputs: &[&[f64]], labels: &[usize]) -> Result<(f64, Gradients)> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::Shape(format!("{} inputs for {} labels", inputs.len(), labels.len())));
        }
        let mut grads = self.zero_grads();
        let scale = 1.0 / inputs.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            self.check_input(x)?;
            loss += self.backward(&self.trace(x), y, scale, &mut grads) * scale;
        }
        Ok((loss, grads))
    }

    pub fn mean_loss(&self, inputs: &[&[f64]], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            total -= self.forward(x)?.log_probs[y];
        }
        Ok(total / inputs.len() as f64)
    }

    /// Floating-point operations of one forward pass: two per
    /// multiply-accumulate in conv and dense layers, plus one per pool
    /// comparison, activation and softmax element.
    pub fn forward_flops(&self) -> u64 {
        let mut len = self.input_len;
        let mut total = 0u64;
        for layer in &self.conv {
            total += layer.flops(len);
            len = layer.out_len(len);
            let pooled = pool_len(len);
            total += ((POOL - 1) * pooled * layer.out_ch) as u64; // comparisons
            total += (pooled * layer.out_ch) as u64; // tanh
            len = pooled;
        }
        total += (2 * self.fc1.inputs * self.fc1.outputs + self.fc1.outputs) as u64;
        total += (2 * self.fc2.inputs * self.fc2.outputs) as u64;
        total + (3 * CLASSES) as u64
    }
}

fn weight_bias(g: &mut [Vec<f64>], i: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = g[i..i + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Network input for a beat: single beat in channel 0, trio in channel 1.
pub fn pair_input(pair: &BeatPair) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * pair.single.values.len());
    v.extend_from_slice(&pair.single.values);
    v.extend_from_slice(&pair.trio.values);
    v
}

/// One labelled network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub label: BeatLabel,
}

impl Sample {
    pub fn from_pair(pair: &BeatPair) -> Self {
        Sample {
            input: pair_input(pair),
            label: pair.single.binary(),
        }
    }

    fn class(&self) -> usize {
        usize::from(self.label.is_abnormal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Seeds both the initial weights and the batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
            batch_size: 128,
            patience: 15,
            max_epochs: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl AdamW {
    fn new(model: &CnnModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamW { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, model: &mut CnnModel, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, p) in model.tensors_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads.0[k]);
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                p[i] -= cfg.lr * cfg.weight_decay * p[i];
                p[i] -= cfg.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Train a freshly initialized network with early stopping on validation
/// loss. Returns the weights of the best validation epoch.
pub fn cnn_train(train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<(CnnModel, TrainHistory)> {
    cnn_train_from(CnnModel::new(cfg.seed), train, val, cfg)
}

pub fn cnn_train_from(mut model: CnnModel, train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<(CnnModel, TrainHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidTrainingSet(format!(
            "{} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    let abnormal = train.iter().filter(|s| s.label.is_abnormal()).count();
    if abnormal == 0 || abnormal == train.len() {
        return Err(Error::InvalidTrainingSet("training set holds a single class".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }

    let val_x: Vec<&[f64]> = val.iter().map(|s| s.input.as_slice()).collect();
    let val_y: Vec<usize> = val.iter().map(Sample::class).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut opt = AdamW::new(&model);
    let mut history = TrainHistory {
        best_val_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = model.clone();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train[i].input.as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train[i].class()).collect();
            let (loss, grads) = model.loss_and_grad(&xs, &ys)?;
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut model, &grads, cfg);
        }
        let val_loss = model.mean_loss(&val_x, &val_y)?;
        history.train_loss.push(epoch_loss / train.len() as f64);
        history.val_loss.push(val_loss);
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.clone();
        } else if epoch - history.best_epoch >= cfg.patience {
            log::debug!("early stop at epoch {epoch}, best {}", history.best_epoch);
            break;
        }
    }
    Ok((best, history))
}
