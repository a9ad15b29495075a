//! Post-processing over the candidate log: keep candidates within an
//! accuracy margin t of the best, pick the smallest, retrain from scratch.

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::metrics::{self, ReportMetrics};
use crate::nas::CandidateRecord;
use crate::neuralnet::{self, ArchSpec, MlpNetwork, TrainConfig};
use crate::sampling::TrainingSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Absolute accuracy margin below the best (t = 0.1% by default).
    pub threshold: f64,
    /// Final training epochs (e2).
    pub final_epochs: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { threshold: 0.001, final_epochs: 30 }
    }
}

/// Among records with acc >= max(acc) - t, the minimal parameter count;
/// ties broken by fewer hidden layers, then earlier discovery order.
pub fn select_candidate<'a>(
    records: &'a [CandidateRecord],
    cfg: &SelectionConfig,
) -> Result<&'a CandidateRecord> {
    let best_acc = records
        .iter()
        .map(|r| r.acc)
        .fold(f64::NEG_INFINITY, f64::max);
    records
        .iter()
        .filter(|r| r.acc >= best_acc - cfg.threshold)
        .min_by_key(|r| (r.size, r.arch.depth(), r.round, r.index_in_round))
        .ok_or(Error::NoCandidates)
}

/// The no-post-processing ablation: just the maximum-reward candidate
/// (earliest discovery on exact ties).
pub fn select_max_reward(records: &[CandidateRecord]) -> Result<&CandidateRecord> {
    records
        .iter()
        .min_by(|a, b| {
            b.reward
                .partial_cmp(&a.reward)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.round.cmp(&b.round))
                .then(a.index_in_round.cmp(&b.index_in_round))
        })
        .ok_or(Error::NoCandidates)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub arch: String,
    pub acc: f64,
    pub size: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub chosen: ArchSpec,
    pub chosen_acc: f64,
    pub chosen_size: usize,
    /// Candidates that passed the accuracy filter.
    pub filter_set: Vec<String>,
    pub rejected: Vec<RejectedCandidate>,
}

pub fn selection_report(records: &[CandidateRecord], cfg: &SelectionConfig) -> Result<SelectionReport> {
    let chosen = select_candidate(records, cfg)?.clone();
    let best_acc = records
        .iter()
        .map(|r| r.acc)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut filter_set = Vec::new();
    let mut rejected = Vec::new();
    for r in records {
        if r.acc < best_acc - cfg.threshold {
            rejected.push(RejectedCandidate {
                arch: r.arch.describe(),
                acc: r.acc,
                size: r.size,
                reason: format!("accuracy below best - t ({:.6} < {:.6})", r.acc, best_acc - cfg.threshold),
            });
        } else {
            filter_set.push(r.arch.describe());
            if r != &chosen {
                rejected.push(RejectedCandidate {
                    arch: r.arch.describe(),
                    acc: r.acc,
                    size: r.size,
                    reason: "passed filter but not the smallest".into(),
                });
            }
        }
    }
    Ok(SelectionReport {
        chosen: chosen.arch.clone(),
        chosen_acc: chosen.acc,
        chosen_size: chosen.size,
        filter_set,
        rejected,
    })
}

/// Retrain the selected architecture from a fresh seeded init (never from
/// supernet slices) for e2 epochs and score the reconstruction. On
/// divergence, retry once at half the learning rate.
pub fn finalize(
    arch: &ArchSpec,
    data: &TrainingSet,
    grid: &VoxelGrid,
    cfg: &SelectionConfig,
    train_cfg: &TrainConfig,
) -> Result<(MlpNetwork, ReportMetrics, Vec<f64>)> {
    let run = |lr: f64| -> Result<(MlpNetwork, Vec<f64>)> {
        let mut net = MlpNetwork::init(arch.clone(), train_cfg.seed);
        let tc = TrainConfig {
            epochs: cfg.final_epochs,
            learning_rate: lr,
            ..train_cfg.clone()
        };
        let history = neuralnet::train(&mut net, data, &tc)?;
        Ok((net, history))
    };
    let (net, history) = match run(train_cfg.learning_rate) {
        Ok(ok) => ok,
        Err(Error::Divergence { .. }) => {
            log::warn!("final training diverged; retrying at half learning rate");
            run(train_cfg.learning_rate / 2.0)?
        }
        Err(e) => return Err(e),
    };
    let recon = neuralnet::reconstruct(&net, grid.resolution())?;
    // CD is undefined against an empty reconstruction; report NaN there
    // rather than failing the whole finalize.
    let cd_x1000 = match metrics::chamfer(&recon, grid) {
        Ok(v) => v,
        Err(Error::EmptySurface) => f64::NAN,
        Err(e) => return Err(e),
    };
    let report = ReportMetrics {
        iou: metrics::iou(&recon, grid)?,
        cd_x1000,
        size: net.num_parameters(),
        resolution: grid.resolution(),
    };
    Ok((net, report, history))
}
