//! Reinforcement-learning architecture search.
//!
//! A categorical controller samples one (width, activation) decision per
//! hidden slot, with a terminate action available from slot 2 on. Candidate
//! children slice their parameters from shared supernet weights, train a few
//! proxy epochs, write the updates back, and are scored on the full grid.
//! The size-penalized reward drives a REINFORCE update with an EMA baseline.

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::neuralnet::{
    self, layout, Activation, ActivationKind, ArchSpec, HiddenLayer, MlpNetwork, TrainConfig,
    ALLOWED_WIDTHS, INPUT_DIM, MAX_HIDDEN,
};
use crate::sampling::TrainingSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

pub const ACC_BASE: f64 = 0.98;
pub const P_BASE: usize = 7553;
pub const P_MAX: usize = 21121;

/// reward = (Acc_val - 0.98) + (7553 - P_val) / 21121
pub fn reward_formula(acc: f64, size: usize) -> f64 {
    (acc - ACC_BASE) + (P_BASE as f64 - size as f64) / P_MAX as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub widths: Vec<usize>,
    pub activations: Vec<ActivationKind>,
    pub max_hidden: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            widths: ALLOWED_WIDTHS.to_vec(),
            activations: vec![ActivationKind::Relu, ActivationKind::Elu, ActivationKind::Swish],
            max_hidden: MAX_HIDDEN,
        }
    }
}

impl SearchSpace {
    /// Joint (width, activation) choices per slot, excluding terminate.
    pub fn num_choices(&self) -> usize {
        self.widths.len() * self.activations.len()
    }

    fn choice(&self, idx: usize) -> HiddenLayer {
        let w = self.widths[idx / self.activations.len()];
        let a = self.activations[idx % self.activations.len()];
        HiddenLayer { width: w, activation: Activation::new(a) }
    }

    fn choice_index(&self, layer: &HiddenLayer) -> Option<usize> {
        let wi = self.widths.iter().position(|&w| w == layer.width)?;
        let ai = self
            .activations
            .iter()
            .position(|&a| a == layer.activation.kind)?;
        Some(wi * self.activations.len() + ai)
    }
}

/// Per-slot categorical logits over {(width, activation)} ∪ {terminate}.
/// Terminate is unavailable at slot 1, so every network has a hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerPolicy {
    /// logits[slot][choice]; slots past the first carry a trailing
    /// terminate logit.
    pub logits: Vec<Vec<f64>>,
    pub baseline: f64,
    baseline_initialized: bool,
    pub temperature: f64,
}

impl ControllerPolicy {
    pub fn uniform(space: &SearchSpace) -> Self {
        let n = space.num_choices();
        let mut logits = vec![vec![0.0; n]];
        for _ in 1..space.max_hidden {
            logits.push(vec![0.0; n + 1]);
        }
        ControllerPolicy {
            logits,
            baseline: 0.0,
            baseline_initialized: false,
            temperature: 1.0,
        }
    }

    fn probabilities(&self, slot: usize) -> Vec<f64> {
        softmax(&self.logits[slot], self.temperature)
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Slot-by-slot categorical draw; drawing terminate at slot k ends the
/// network with k-1 hidden layers, and the final slot forces terminate after.
pub fn sample_architecture(
    policy: &ControllerPolicy,
    space: &SearchSpace,
    rng: &mut impl Rng,
) -> ArchSpec {
    let n = space.num_choices();
    let mut hidden = Vec::new();
    for slot in 0..space.max_hidden {
        let probs = policy.probabilities(slot);
        let draw = categorical(&probs, rng);
        if slot > 0 && draw == n {
            break; // terminate
        }
        hidden.push(space.choice(draw));
    }
    ArchSpec { hidden }
}

fn categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One NAS evaluation: architecture, full-grid proxy accuracy, exact size,
/// and the reward actually used for the policy update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub arch: ArchSpec,
    pub acc: f64,
    pub size: usize,
    pub reward: f64,
    pub round: usize,
    pub index_in_round: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Supernet: maximal hidden-slot tensors plus one output head per depth.
/// A child of widths (w1..wL) reads and writes the top-left w x fan_in
/// blocks of slots 1..L and the first wL weights of head L.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedWeights {
    /// Per slot: (weights 64 x fan_in row-major, biases 64). Slot 0 has
    /// fan_in 3, the rest 64.
    pub slots: Vec<(Vec<f64>, Vec<f64>)>,
    /// Per depth 1..=max_hidden: (head weights 64, head bias).
    pub heads: Vec<(Vec<f64>, f64)>,
    pub max_width: usize,
}

impl SharedWeights {
    pub fn init(max_hidden: usize, max_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slots = Vec::with_capacity(max_hidden);
        for slot in 0..max_hidden {
            let fan_in = if slot == 0 { INPUT_DIM } else { max_width };
            let limit = (6.0 / fan_in as f64).sqrt();
            let weights = (0..max_width * fan_in)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            slots.push((weights, vec![0.0; max_width]));
        }
        let limit = (6.0 / max_width as f64).sqrt();
        let heads = (0..max_hidden)
            .map(|_| ((0..max_width).map(|_| rng.gen_range(-limit..limit)).collect(), 0.0))
            .collect();
        SharedWeights { slots, heads, max_width }
    }

    /// Copy the child's parameter blocks out of the supernet.
    pub fn slice_child(&self, arch: &ArchSpec) -> MlpNetwork {
        let lay = layout(arch);
        let mut params = vec![0.0; lay.total];
        let mut fan_in = INPUT_DIM;
        for (li, l) in arch.hidden.iter().enumerate() {
            let (w_off, b_off, out, ind) = lay.layers[li];
            debug_assert_eq!((out, ind), (l.width, fan_in));
            let slot_fan_in = if li == 0 { INPUT_DIM } else { self.max_width };
            let (sw, sb) = &self.slots[li];
            for o in 0..out {
                for i in 0..ind {
                    params[w_off + o * ind + i] = sw[o * slot_fan_in + i];
                }
            }
            params[b_off..b_off + out].copy_from_slice(&sb[..out]);
            fan_in = l.width;
        }
        let depth = arch.hidden.len();
        let (hw, hb) = &self.heads[depth - 1];
        params[lay.head_w..lay.head_b].copy_from_slice(&hw[..fan_in]);
        params[lay.head_b] = *hb;
        MlpNetwork::from_params(arch.clone(), params).expect("layout is consistent")
    }

    /// Write a trained child's blocks back into the supernet.
    pub fn absorb_child(&mut self, net: &MlpNetwork) {
        let arch = net.arch();
        let lay = layout(arch);
        let params = net.params();
        let mut fan_in = INPUT_DIM;
        for (li, l) in arch.hidden.iter().enumerate() {
            let (w_off, b_off, out, ind) = lay.layers[li];
            let slot_fan_in = if li == 0 { INPUT_DIM } else { self.max_width };
            let (sw, sb) = &mut self.slots[li];
            for o in 0..out {
                for i in 0..ind {
                    sw[o * slot_fan_in + i] = params[w_off + o * ind + i];
                }
            }
            sb[..out].copy_from_slice(&params[b_off..b_off + out]);
            fan_in = l.width;
        }
        let depth = arch.hidden.len();
        let (hw, hb) = &mut self.heads[depth - 1];
        hw[..fan_in].copy_from_slice(&params[lay.head_w..lay.head_b]);
        *hb = params[lay.head_b];
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub rounds: usize,
    pub per_round: usize,
    /// Proxy-task epochs (e1).
    pub proxy_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub controller_lr: f64,
    pub baseline_decay: f64,
    pub temperature: f64,
    /// When false the reward degenerates to acc - 0.98 (size-reward ablation).
    pub size_reward: bool,
    /// Optional voxel subsample count for accuracy during search; `None`
    /// evaluates the full grid.
    pub acc_subsample: Option<usize>,
    /// Echoed into the candidate log so the train stage knows whether the
    /// filter-then-smallest step should apply. Does not affect the search.
    #[serde(default = "default_true")]
    pub postprocess: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rounds: 5,
            per_round: 6,
            proxy_epochs: 3,
            batch_size: 2048,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            controller_lr: 0.05,
            baseline_decay: 0.7,
            temperature: 1.0,
            size_reward: true,
            acc_subsample: None,
            postprocess: true,
            seed: 0,
        }
    }
}

fn search_accuracy(net: &MlpNetwork, grid: &VoxelGrid, cfg: &SearchConfig, seed: u64) -> f64 {
    match cfg.acc_subsample {
        None => neuralnet::full_grid_accuracy(net, grid),
        Some(k) if k >= grid.len() => neuralnet::full_grid_accuracy(net, grid),
        Some(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idxs = rand::seq::index::sample(&mut rng, grid.len(), k);
            let mut scratch = Default::default();
            let mut correct = 0usize;
            for idx in idxs {
                let logit = net.forward_logit(&grid.center(idx), &mut scratch);
                if (logit >= 0.0) == grid.get(idx) {
                    correct += 1;
                }
            }
            correct as f64 / k as f64
        }
    }
}

/// Train a child sliced from the supernet for e1 epochs, write the updates
/// back, and score it. Training divergence yields acc 0 with a note; the
/// search goes on.
pub fn proxy_train_and_score(
    arch: &ArchSpec,
    shared: &mut SharedWeights,
    data: &TrainingSet,
    grid: &VoxelGrid,
    cfg: &SearchConfig,
    round: usize,
    index_in_round: usize,
) -> CandidateRecord {
    let mut child = shared.slice_child(arch);
    let train_cfg = TrainConfig {
        epochs: cfg.proxy_epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        adam_betas: cfg.adam_betas,
        seed: cfg
            .seed
            .wrapping_mul(0x9e37_79b9)
            .wrapping_add((round * 1000 + index_in_round) as u64),
    };
    let size = neuralnet::parameter_count(arch);
    let (acc, note) = match neuralnet::train(&mut child, data, &train_cfg) {
        Ok(_) => {
            shared.absorb_child(&child);
            (search_accuracy(&child, grid, cfg, train_cfg.seed), None)
        }
        Err(e) => (0.0, Some(format!("proxy training diverged: {e}"))),
    };
    let reward = if cfg.size_reward {
        reward_formula(acc, size)
    } else {
        acc - ACC_BASE
    };
    CandidateRecord {
        arch: arch.clone(),
        acc,
        size,
        reward,
        round,
        index_in_round,
        note,
    }
}

/// Decision indices an architecture corresponds to, including the terminate
/// draw when the network is shorter than the slot budget.
fn decision_path(arch: &ArchSpec, space: &SearchSpace) -> Vec<(usize, usize)> {
    let n = space.num_choices();
    let mut path = Vec::new();
    for (slot, layer) in arch.hidden.iter().enumerate() {
        let idx = space
            .choice_index(layer)
            .expect("sampled architecture stays within the search space");
        path.push((slot, idx));
    }
    if arch.hidden.len() < space.max_hidden {
        path.push((arch.hidden.len(), n)); // explicit terminate decision
    }
    path
}

/// REINFORCE step over one round of records, then update the EMA baseline.
/// The first round seen initializes the baseline to its mean reward.
pub fn update_policy(
    policy: &mut ControllerPolicy,
    space: &SearchSpace,
    records: &[CandidateRecord],
    controller_lr: f64,
    baseline_decay: f64,
) {
    assert!(!records.is_empty(), "round must be nonempty");
    let mean_reward = records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64;
    if !policy.baseline_initialized {
        policy.baseline = mean_reward;
        policy.baseline_initialized = true;
    }
    // Gradients are taken at the round-start policy and applied together,
    // so one record cannot feed back into the others' updates.
    let probs: Vec<Vec<f64>> = (0..policy.logits.len())
        .map(|slot| policy.probabilities(slot))
        .collect();
    let mut steps: Vec<Vec<f64>> = policy.logits.iter().map(|l| vec![0.0; l.len()]).collect();
    for rec in records {
        let advantage = rec.reward - policy.baseline;
        for (slot, chosen) in decision_path(&rec.arch, space) {
            for (i, &p) in probs[slot].iter().enumerate() {
                let grad = if i == chosen { 1.0 - p } else { -p };
                steps[slot][i] += controller_lr * advantage * grad;
            }
        }
    }
    for (logits, step) in policy.logits.iter_mut().zip(&steps) {
        for (l, s) in logits.iter_mut().zip(step) {
            *l += s;
        }
    }
    policy.baseline = baseline_decay * policy.baseline + (1.0 - baseline_decay) * mean_reward;
    debug_assert!(policy.logits.iter().flatten().all(|l| l.is_finite()));
}

/// Full search: `rounds` x `per_round` candidates, proxy-trained against the
/// shared supernet, policy updated after each round.
pub fn run_search(
    grid: &VoxelGrid,
    data: &TrainingSet,
    space: &SearchSpace,
    cfg: &SearchConfig,
) -> Vec<CandidateRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = ControllerPolicy::uniform(space);
    policy.temperature = cfg.temperature;
    let mut shared = SharedWeights::init(space.max_hidden, 64, cfg.seed.wrapping_add(1));
    let mut records = Vec::with_capacity(cfg.rounds * cfg.per_round);
    for round in 1..=cfg.rounds {
        let mut round_records = Vec::with_capacity(cfg.per_round);
        for index_in_round in 1..=cfg.per_round {
            let arch = sample_architecture(&policy, space, &mut rng);
            let rec =
                proxy_train_and_score(&arch, &mut shared, data, grid, cfg, round, index_in_round);
            log::info!(
                "round {round} candidate {index_in_round}: [{}] acc {:.4} size {} reward {:.4}",
                rec.arch.describe(),
                rec.acc,
                rec.size,
                rec.reward
            );
            round_records.push(rec);
        }
        update_policy(&mut policy, space, &round_records, cfg.controller_lr, cfg.baseline_decay);
        records.extend(round_records);
    }
    records
}

/// JSON-lines candidate log: a header line echoing the search config, then
/// one CandidateRecord per line.
pub fn write_candidate_log(path: &Path, cfg: &SearchConfig, records: &[CandidateRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &serde_json::json!({ "search_config": cfg }))?;
    writeln!(f)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        writeln!(f)?;
    }
    Ok(())
}

pub fn read_candidate_log(path: &Path) -> Result<(SearchConfig, Vec<CandidateRecord>)> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty candidate log".into()))??;
    #[derive(Deserialize)]
    struct Header {
        search_config: SearchConfig,
    }
    let header: Header = serde_json::from_str(&header)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok((header.search_config, records))
}
