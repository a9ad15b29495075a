//! From-scratch MLP engine for voxel occupancy classification.
//!
//! Input is a raw (x,y,z) voxel center, output is a sigmoid probability of
//! occupancy. Parameters live in a single flat `Vec<f64>` laid out exactly
//! like the NASV model file: per hidden layer, weights row-major (out x in)
//! then biases, ending with the 1 x w_last output head and its scalar bias.

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::sampling::TrainingSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Node counts the architecture search may use.
pub const ALLOWED_WIDTHS: [usize; 11] = [8, 12, 16, 20, 24, 28, 32, 40, 48, 56, 64];
/// Hidden-layer cap (8 total layers counting input and output).
pub const MAX_HIDDEN: usize = 6;
pub const INPUT_DIM: usize = 3;

const CLAMP_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Elu,
    Swish,
}

impl ActivationKind {
    pub fn code(self) -> u8 {
        match self {
            ActivationKind::Relu => 0,
            ActivationKind::Elu => 1,
            ActivationKind::Swish => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ActivationKind::Relu),
            1 => Ok(ActivationKind::Elu),
            2 => Ok(ActivationKind::Swish),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::Relu),
            "elu" => Ok(ActivationKind::Elu),
            "swish" => Ok(ActivationKind::Swish),
            _ => Err(Error::InvalidArch(format!("unknown activation '{s}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Elu => "elu",
            ActivationKind::Swish => "swish",
        }
    }
}

/// An activation function with its shape parameters (both default to 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActivationKind,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

impl Activation {
    pub fn new(kind: ActivationKind) -> Self {
        Activation { kind, alpha: 1.0, beta: 1.0 }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu)
    }

    pub fn elu() -> Self {
        Self::new(ActivationKind::Elu)
    }

    pub fn swish() -> Self {
        Self::new(ActivationKind::Swish)
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => {
                if x >= 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    self.alpha * (x.exp() - 1.0)
                }
            }
            ActivationKind::Swish => x * sigmoid(self.beta * x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    self.alpha * x.exp()
                }
            }
            ActivationKind::Swish => {
                let s = sigmoid(self.beta * x);
                s + self.beta * x * s * (1.0 - s)
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

/// One searched MLP architecture: ordered hidden layers of (width, activation).
/// Input dim is fixed at 3 and the output head at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub hidden: Vec<HiddenLayer>,
}

impl ArchSpec {
    /// Construct and validate against the search-space constraints.
    pub fn new(hidden: Vec<HiddenLayer>) -> Result<Self> {
        let spec = ArchSpec { hidden };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.len() > MAX_HIDDEN {
            return Err(Error::InvalidArch(format!(
                "{} hidden layers, need 1..={MAX_HIDDEN}",
                self.hidden.len()
            )));
        }
        for l in &self.hidden {
            if !ALLOWED_WIDTHS.contains(&l.width) {
                return Err(Error::InvalidArch(format!("width {} not allowed", l.width)));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    /// Compact text form, e.g. `32:relu,24:swish`.
    pub fn describe(&self) -> String {
        self.hidden
            .iter()
            .map(|l| format!("{}:{}", l.width, l.activation.kind.name()))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parse the `describe` form.
    pub fn parse(s: &str) -> Result<Self> {
        let mut hidden = Vec::new();
        for part in s.split(',') {
            let (w, a) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidArch(format!("bad layer '{part}', want WIDTH:ACT")))?;
            let width: usize = w
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArch(format!("bad width '{w}'")))?;
            hidden.push(HiddenLayer {
                width,
                activation: Activation::new(ActivationKind::parse(a.trim())?),
            });
        }
        ArchSpec::new(hidden)
    }
}

/// Exact scalar count: (3*w1 + w1) + sum(w_{i-1}*w_i + w_i) + (w_L + 1).
/// Counts any depth, including architectures beyond the search caps.
pub fn parameter_count(arch: &ArchSpec) -> usize {
    let mut total = 0;
    let mut fan_in = INPUT_DIM;
    for l in &arch.hidden {
        total += fan_in * l.width + l.width;
        fan_in = l.width;
    }
    total + fan_in + 1
}

/// Layout of the flat parameter vector for an architecture.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    /// Per hidden layer: (weight offset, bias offset, out dim, in dim).
    pub layers: Vec<(usize, usize, usize, usize)>,
    pub head_w: usize,
    pub head_b: usize,
    pub total: usize,
}

pub(crate) fn layout(arch: &ArchSpec) -> Layout {
    let mut layers = Vec::with_capacity(arch.hidden.len());
    let mut off = 0;
    let mut fan_in = INPUT_DIM;
    for l in &arch.hidden {
        layers.push((off, off + fan_in * l.width, l.width, fan_in));
        off += fan_in * l.width + l.width;
        fan_in = l.width;
    }
    Layout {
        layers,
        head_w: off,
        head_b: off + fan_in,
        total: off + fan_in + 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    arch: ArchSpec,
    params: Vec<f64>,
}

/// Reusable per-sample forward state (pre-activations and activations).
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

impl MlpNetwork {
    /// He-style uniform init scaled by fan-in, seeded.
    pub fn init(arch: ArchSpec, seed: u64) -> Self {
        let lay = layout(&arch);
        let mut params = vec![0.0; lay.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &(w_off, b_off, out, ind) in &lay.layers {
            let limit = (6.0 / ind as f64).sqrt();
            for p in &mut params[w_off..w_off + out * ind] {
                *p = rng.gen_range(-limit..limit);
            }
            let _ = b_off; // biases start at zero
        }
        let fan_in = arch.hidden.last().map(|l| l.width).unwrap_or(INPUT_DIM);
        let limit = (6.0 / fan_in as f64).sqrt();
        for p in &mut params[lay.head_w..lay.head_b] {
            *p = rng.gen_range(-limit..limit);
        }
        MlpNetwork { arch, params }
    }

    pub fn zeros(arch: ArchSpec) -> Self {
        let total = layout(&arch).total;
        MlpNetwork { arch, params: vec![0.0; total] }
    }

    pub fn from_params(arch: ArchSpec, params: Vec<f64>) -> Result<Self> {
        let total = layout(&arch).total;
        if params.len() != total {
            return Err(Error::InvalidArch(format!(
                "expected {total} parameters, got {}",
                params.len()
            )));
        }
        Ok(MlpNetwork { arch, params })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    /// Raw output logit for one position, recording layer state in `scratch`.
    pub fn forward_logit(&self, pos: &[f64; 3], scratch: &mut Scratch) -> f64 {
        let lay = layout(&self.arch);
        scratch.pre.resize(lay.layers.len(), Vec::new());
        scratch.act.resize(lay.layers.len(), Vec::new());
        for (li, &(w_off, b_off, out, ind)) in lay.layers.iter().enumerate() {
            let act_fn = self.arch.hidden[li].activation;
            let (done, rest) = scratch.act.split_at_mut(li);
            let input: &[f64] = if li == 0 { pos } else { &done[li - 1] };
            let pre_rows = &mut scratch.pre[li];
            let act_rows = &mut rest[0];
            pre_rows.resize(out, 0.0);
            act_rows.resize(out, 0.0);
            for o in 0..out {
                let row = &self.params[w_off + o * ind..w_off + (o + 1) * ind];
                let mut s = self.params[b_off + o];
                for i in 0..ind {
                    s += row[i] * input[i];
                }
                pre_rows[o] = s;
                act_rows[o] = act_fn.apply(s);
            }
        }
        let last: &[f64] = match scratch.act.last() {
            Some(v) => v,
            None => pos,
        };
        let fan_in = lay.head_b - lay.head_w;
        let mut logit = self.params[lay.head_b];
        for i in 0..fan_in {
            logit += self.params[lay.head_w + i] * last[i];
        }
        logit
    }

    /// Occupancy probabilities for a batch of positions.
    pub fn forward_batch(&self, positions: &[[f64; 3]]) -> Result<Vec<f64>> {
        let mut scratch = Scratch::default();
        let mut out = Vec::with_capacity(positions.len());
        for p in positions {
            let logit = self.forward_logit(p, &mut scratch);
            if !logit.is_finite() {
                return Err(Error::NumericOverflow);
            }
            out.push(sigmoid(logit));
        }
        Ok(out)
    }

    /// Backprop one sample. `dlogit` is dLoss/dlogit; gradients accumulate
    /// into `grads` (same flat layout as `params`). `scratch` must hold the
    /// forward state of this sample.
    fn backward(&self, pos: &[f64; 3], scratch: &Scratch, dlogit: f64, grads: &mut [f64]) {
        let lay = layout(&self.arch);
        let depth = lay.layers.len();
        let last = &scratch.act[depth - 1];

        grads[lay.head_b] += dlogit;
        let mut delta: Vec<f64> = Vec::with_capacity(last.len());
        for (i, &a) in last.iter().enumerate() {
            grads[lay.head_w + i] += dlogit * a;
            let act_fn = self.arch.hidden[depth - 1].activation;
            delta.push(dlogit * self.params[lay.head_w + i] * act_fn.derivative(scratch.pre[depth - 1][i]));
        }

        for li in (0..depth).rev() {
            let (w_off, b_off, out, ind) = lay.layers[li];
            let input: &[f64] = if li == 0 { pos } else { &scratch.act[li - 1] };
            for o in 0..out {
                let d = delta[o];
                grads[b_off + o] += d;
                let g_row = &mut grads[w_off + o * ind..w_off + (o + 1) * ind];
                for i in 0..ind {
                    g_row[i] += d * input[i];
                }
            }
            if li > 0 {
                let act_fn = self.arch.hidden[li - 1].activation;
                let mut prev = vec![0.0; ind];
                for o in 0..out {
                    let d = delta[o];
                    let row = &self.params[w_off + o * ind..w_off + (o + 1) * ind];
                    for i in 0..ind {
                        prev[i] += d * row[i];
                    }
                }
                for i in 0..ind {
                    prev[i] *= act_fn.derivative(scratch.pre[li - 1][i]);
                }
                delta = prev;
            }
        }
    }

    /// Write the bit-exact NASV model format.
    pub fn write_nasv<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"NASV")?;
        w.write_all(&[1u8, self.arch.hidden.len() as u8])?;
        for l in &self.arch.hidden {
            w.write_all(&(l.width as u16).to_le_bytes())?;
            w.write_all(&[l.activation.kind.code()])?;
        }
        for &p in &self.params {
            w.write_all(&(p as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_nasv<R: Read>(r: &mut R) -> Result<Self> {
        let mut head = [0u8; 6];
        r.read_exact(&mut head)?;
        if &head[0..4] != b"NASV" {
            return Err(Error::Format("bad magic, expected NASV".into()));
        }
        if head[4] != 1 {
            return Err(Error::Format(format!("unsupported NASV version {}", head[4])));
        }
        let depth = head[5] as usize;
        let mut hidden = Vec::with_capacity(depth);
        for _ in 0..depth {
            let mut rec = [0u8; 3];
            r.read_exact(&mut rec)?;
            hidden.push(HiddenLayer {
                width: u16::from_le_bytes([rec[0], rec[1]]) as usize,
                activation: Activation::new(ActivationKind::from_code(rec[2])?),
            });
        }
        let arch = ArchSpec { hidden };
        let total = layout(&arch).total;
        let mut params = Vec::with_capacity(total);
        let mut buf = [0u8; 4];
        for _ in 0..total {
            r.read_exact(&mut buf)?;
            params.push(f32::from_le_bytes(buf) as f64);
        }
        Ok(MlpNetwork { arch, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_nasv(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_nasv(&mut f)
    }
}

/// Mean binary cross-entropy with predictions clamped to [ε, 1-ε], ε = 1e-7.
pub fn loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch(predictions.len(), labels.len()));
    }
    let mut total = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        let p = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 2048,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            seed: 0,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    lr: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: cfg.adam_betas.0,
            beta2: cfg.adam_betas.1,
            lr: cfg.learning_rate,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

/// Adam on shuffled mini-batches of the cross-entropy loss. Returns the
/// per-epoch mean loss history. On divergence the parameters are rolled
/// back to the last finite epoch and an error is returned.
pub fn train(net: &mut MlpNetwork, data: &TrainingSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    assert!(!data.is_empty(), "training set must be nonempty");
    assert!(cfg.batch_size >= 1 && cfg.learning_rate > 0.0);
    let n_params = net.num_parameters();
    let mut adam = Adam::new(n_params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = vec![0.0; n_params];
    let mut scratch = Scratch::default();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let snapshot = net.params.clone();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / batch.len() as f64;
            for &si in batch {
                let s = &data.samples[si];
                let logit = net.forward_logit(&s.pos, &mut scratch);
                let p = sigmoid(logit);
                let pc = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
                epoch_loss -= s.label * pc.ln() + (1.0 - s.label) * (1.0 - pc).ln();
                net.backward(&s.pos, &scratch, (p - s.label) * inv, &mut grads);
            }
            adam.step(&mut net.params, &grads);
        }
        epoch_loss /= data.len() as f64;
        if !epoch_loss.is_finite() || net.params.iter().any(|p| !p.is_finite()) {
            net.params = snapshot;
            return Err(Error::Divergence { epoch });
        }
        history.push(epoch_loss);
    }
    Ok(history)
}

/// Mean cross-entropy loss and its gradient over a sample batch.
pub fn loss_and_gradient(net: &MlpNetwork, samples: &[crate::sampling::Sample]) -> (f64, Vec<f64>) {
    assert!(!samples.is_empty());
    let mut grads = vec![0.0; net.num_parameters()];
    let mut scratch = Scratch::default();
    let mut total = 0.0;
    let inv = 1.0 / samples.len() as f64;
    for s in samples {
        let p = sigmoid(net.forward_logit(&s.pos, &mut scratch));
        let pc = p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        total -= s.label * pc.ln() + (1.0 - s.label) * (1.0 - pc).ln();
        net.backward(&s.pos, &scratch, (p - s.label) * inv, &mut grads);
    }
    (total * inv, grads)
}

/// Fraction of all N^3 voxels whose thresholded prediction matches the grid.
pub fn full_grid_accuracy(net: &MlpNetwork, grid: &VoxelGrid) -> f64 {
    let mut scratch = Scratch::default();
    let mut correct = 0usize;
    for idx in 0..grid.len() {
        let logit = net.forward_logit(&grid.center(idx), &mut scratch);
        if (logit >= 0.0) == grid.get(idx) {
            correct += 1;
        }
    }
    correct as f64 / grid.len() as f64
}

/// Occupancy grid from network inference alone: voxel occupied iff the
/// predicted probability at its center is >= 0.5.
pub fn reconstruct(net: &MlpNetwork, resolution: u32) -> Result<VoxelGrid> {
    if resolution < 8 {
        return Err(Error::ResolutionTooSmall(resolution));
    }
    let mut grid = VoxelGrid::empty(resolution);
    let mut scratch = Scratch::default();
    for idx in 0..grid.len() {
        if net.forward_logit(&grid.center(idx), &mut scratch) >= 0.0 {
            grid.set(idx, true);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Sample;

    fn arch(widths: &[usize], act: Activation) -> ArchSpec {
        ArchSpec {
            hidden: widths
                .iter()
                .map(|&w| HiddenLayer { width: w, activation: act })
                .collect(),
        }
    }

    #[test]
    fn parameter_count_goldens() {
        // NI default: 8 hidden layers x 32 nodes (beyond our cap, still countable).
        assert_eq!(parameter_count(&arch(&[32; 8], Activation::relu())), 7553);
        // Largest network in the search space.
        assert_eq!(parameter_count(&arch(&[64; 6], Activation::relu())), 21121);
        // NI-13K: 8 hidden layers x 42 nodes.
        assert_eq!(parameter_count(&arch(&[42; 8], Activation::relu())), 12853);
        assert_eq!(parameter_count(&arch(&[8], Activation::relu())), 41);
    }

    #[test]
    fn parameter_count_matches_allocation_exhaustively() {
        for &w in &ALLOWED_WIDTHS {
            for depth in 1..=MAX_HIDDEN {
                let a = arch(&vec![w; depth], Activation::swish());
                let net = MlpNetwork::init(a.clone(), 1);
                assert_eq!(parameter_count(&a), net.num_parameters());
            }
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::relu().apply(-1.0), 0.0);
        assert_eq!(Activation::elu().apply(0.0), 0.0);
        assert_eq!(Activation::swish().apply(0.0), 0.0);
        assert!((Activation::swish().apply(1.0) - 0.7310585786300049).abs() < 1e-12);
        assert!((Activation::elu().apply(-1.0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn activation_derivative_matches_finite_differences() {
        let h = 1e-6;
        for act in [Activation::relu(), Activation::elu(), Activation::swish()] {
            for &x in &[-2.0, -0.5, 0.3, 1.7, 3.0] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!(
                    (act.derivative(x) - fd).abs() < 1e-5,
                    "{:?} at {x}: {} vs {fd}",
                    act.kind,
                    act.derivative(x)
                );
            }
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = MlpNetwork::zeros(arch(&[16, 16], Activation::relu()));
        let out = net.forward_batch(&[[0.3, -0.2, 0.9]]).unwrap();
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn batching_is_consistent() {
        let net = MlpNetwork::init(arch(&[24, 16], Activation::swish()), 11);
        let probe = [0.1, -0.4, 0.7];
        let single = net.forward_batch(&[probe]).unwrap()[0];
        let mut batch = vec![[0.0, 0.0, 0.0]; 1000];
        batch[537] = probe;
        let many = net.forward_batch(&batch).unwrap();
        assert!((many[537] - single).abs() < 1e-6);
    }

    /// Independent straight-line forward pass, structured differently from
    /// the implementation (nested Vec matrices, explicit math).
    fn naive_forward(net: &MlpNetwork, pos: [f64; 3]) -> f64 {
        let lay = layout(net.arch());
        let p = net.params();
        let mut x: Vec<f64> = pos.to_vec();
        for (li, &(w_off, b_off, out, ind)) in lay.layers.iter().enumerate() {
            let act = net.arch().hidden[li].activation;
            let mut next = Vec::with_capacity(out);
            for o in 0..out {
                let mut s = p[b_off + o];
                for (i, &xi) in x.iter().enumerate().take(ind) {
                    s += p[w_off + o * ind + i] * xi;
                }
                next.push(match act.kind {
                    ActivationKind::Relu => s.max(0.0),
                    ActivationKind::Elu => {
                        if s >= 0.0 {
                            s
                        } else {
                            act.alpha * (s.exp() - 1.0)
                        }
                    }
                    ActivationKind::Swish => s / (1.0 + (-act.beta * s).exp()),
                });
            }
            x = next;
        }
        let mut logit = p[lay.head_b];
        for (i, &xi) in x.iter().enumerate() {
            logit += p[lay.head_w + i] * xi;
        }
        1.0 / (1.0 + (-logit).exp())
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let kinds = [Activation::relu(), Activation::elu(), Activation::swish()];
            let a = arch(&[12, 20, 8], kinds[trial % 3]);
            let net = MlpNetwork::init(a, trial as u64);
            let pos = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let got = net.forward_batch(&[pos]).unwrap()[0];
            let want = naive_forward(&net, pos);
            assert!((got - want).abs() < 1e-6, "trial {trial}: {got} vs {want}");
        }
    }

    #[test]
    fn loss_closed_forms() {
        assert!(loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() <= 1e-6);
        assert!((loss(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((loss(&[0.9], &[0.0]).unwrap() - (-0.1f64.ln())).abs() < 1e-12);
        assert!(matches!(
            loss(&[0.5], &[1.0, 0.0]),
            Err(Error::LengthMismatch(1, 2))
        ));
        // Clamping bounds the loss by -ln(eps) for any input.
        assert!(loss(&[0.0], &[1.0]).unwrap() <= -CLAMP_EPS.ln() + 1e-9);
    }

    /// Analytic gradients vs central finite differences on small random nets.
    fn gradient_check(kind: Activation, seed: u64) -> (usize, usize) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.gen_range(1..=3);
        let a = arch(&vec![8; depth], kind);
        let mut net = MlpNetwork::init(a, seed.wrapping_add(99));
        let batch: Vec<Sample> = (0..16)
            .map(|i| Sample {
                pos: [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
                label: (i % 2) as f64,
                voxel: 0,
            })
            .collect();

        let batch_loss = |net: &MlpNetwork| -> f64 {
            let mut scratch = Scratch::default();
            let mut total = 0.0;
            for s in &batch {
                let p = sigmoid(net.forward_logit(&s.pos, &mut scratch)).clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
                total -= s.label * p.ln() + (1.0 - s.label) * (1.0 - p).ln();
            }
            total / batch.len() as f64
        };

        let mut grads = vec![0.0; net.num_parameters()];
        let mut scratch = Scratch::default();
        for s in &batch {
            let logit = net.forward_logit(&s.pos, &mut scratch);
            let p = sigmoid(logit);
            net.backward(&s.pos, &scratch, (p - s.label) / batch.len() as f64, &mut grads);
        }

        let h = 1e-4;
        let mut ok = 0;
        let total = net.num_parameters();
        for i in 0..total {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let lp = batch_loss(&net);
            net.params_mut()[i] = orig - h;
            let lm = batch_loss(&net);
            net.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = grads[i].abs().max(fd.abs()).max(1e-8);
            if (grads[i] - fd).abs() / denom < 1e-4 {
                ok += 1;
            }
        }
        (ok, total)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (i, kind) in [Activation::relu(), Activation::elu(), Activation::swish()]
            .into_iter()
            .enumerate()
        {
            let (ok, total) = gradient_check(kind, 100 + i as u64);
            assert!(
                ok as f64 > 0.99 * total as f64,
                "{:?}: only {ok}/{total} gradients within tolerance",
                kind.kind
            );
        }
    }

    /// Half-space occupancy grid: voxel occupied iff its center x < 0.
    fn half_space_grid(n: u32) -> VoxelGrid {
        let mut g = VoxelGrid::empty(n);
        for idx in 0..g.len() {
            if g.center(idx)[0] < 0.0 {
                g.set(idx, true);
            }
        }
        g
    }

    #[test]
    fn train_separates_half_space() {
        let g = half_space_grid(16);
        let s = crate::geometry::support_set(&g);
        let data = crate::sampling::build_training_set(&g, &s, 1).unwrap();
        let mut net = MlpNetwork::init(arch(&[8], Activation::relu()), 2);
        // Small batches: the toy set holds ~1.5k samples, so the default
        // batch of 2048 would collapse each epoch into a single step.
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-2,
            seed: 3,
            ..Default::default()
        };
        let history = train(&mut net, &data, &cfg).unwrap();
        assert_eq!(history.len(), 10);
        assert!(history.last().unwrap() < &history[0]);
        assert!(full_grid_accuracy(&net, &g) >= 0.999);
    }

    #[test]
    fn zero_epochs_leaves_network_unchanged() {
        let g = half_space_grid(8);
        let s = crate::geometry::support_set(&g);
        let data = crate::sampling::build_training_set(&g, &s, 1).unwrap();
        let net0 = MlpNetwork::init(arch(&[12], Activation::elu()), 4);
        let mut net = net0.clone();
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let history = train(&mut net, &data, &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(net, net0);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let g = half_space_grid(8);
        let s = crate::geometry::support_set(&g);
        let data = crate::sampling::build_training_set(&g, &s, 1).unwrap();
        let cfg = TrainConfig { epochs: 3, seed: 7, ..Default::default() };
        let mut a = MlpNetwork::init(arch(&[16], Activation::swish()), 9);
        let mut b = a.clone();
        train(&mut a, &data, &cfg).unwrap();
        train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let g = half_space_grid(8);
        let s = crate::geometry::support_set(&g);
        let data = crate::sampling::build_training_set(&g, &s, 1).unwrap();
        let mut net = MlpNetwork::init(arch(&[8], Activation::relu()), 2);
        net.params_mut()[0] = f64::NAN;
        let cfg = TrainConfig { epochs: 2, ..Default::default() };
        assert!(matches!(train(&mut net, &data, &cfg), Err(Error::Divergence { epoch: 0 })));
    }

    #[test]
    fn accuracy_matches_brute_force() {
        let g = half_space_grid(8);
        let net = MlpNetwork::init(arch(&[12, 8], Activation::swish()), 21);
        let acc = full_grid_accuracy(&net, &g);
        let mut correct = 0;
        let mut scratch = Scratch::default();
        for idx in 0..g.len() {
            let p = sigmoid(net.forward_logit(&g.center(idx), &mut scratch));
            if (p >= 0.5) == g.get(idx) {
                correct += 1;
            }
        }
        assert_eq!(acc, correct as f64 / g.len() as f64);
    }

    #[test]
    fn constant_positive_net_reconstructs_full_grid() {
        let mut net = MlpNetwork::zeros(arch(&[8], Activation::relu()));
        let lay = layout(net.arch());
        net.params_mut()[lay.head_b] = 5.0; // head bias only: logit 5 everywhere
        let g = reconstruct(&net, 8).unwrap();
        assert_eq!(g.count_occupied(), g.len());
    }

    #[test]
    fn nasv_round_trip_is_f32_exact() {
        let net = MlpNetwork::init(arch(&[24, 16], Activation::elu()), 31);
        let mut buf = Vec::new();
        net.write_nasv(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"NASV");
        assert_eq!(buf[4], 1);
        assert_eq!(buf[5], 2);
        let back = MlpNetwork::read_nasv(&mut buf.as_slice()).unwrap();
        assert_eq!(back.arch(), net.arch());
        for (a, b) in net.params().iter().zip(back.params()) {
            assert_eq!(*a as f32, *b as f32);
        }
        // A second write is byte-identical.
        let mut buf2 = Vec::new();
        back.write_nasv(&mut buf2).unwrap();
        let mut buf3 = Vec::new();
        back.write_nasv(&mut buf3).unwrap();
        assert_eq!(buf2, buf3);
    }

    #[test]
    fn arch_parse_round_trip() {
        let a = ArchSpec::parse("32:relu,24:swish,8:elu").unwrap();
        assert_eq!(a.describe(), "32:relu,24:swish,8:elu");
        assert!(ArchSpec::parse("9:relu").is_err());
        assert!(ArchSpec::parse("32:tanh").is_err());
        assert!(ArchSpec::parse("32:relu,32:relu,32:relu,32:relu,32:relu,32:relu,32:relu").is_err());
    }
}
