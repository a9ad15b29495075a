//! Class-boundary-oversampled training sets.
//!
//! With O non-support voxels, the set holds ⌊O/4⌋ seeded draws from the
//! non-support voxels plus ⌊O/4⌋ support-voxel samples built by whole-set
//! replication topped up with a seeded remainder, so K = 2⌊O/4⌋ ≈ O/2.

use crate::error::{Error, Result};
use crate::geometry::{SupportSet, VoxelGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Voxel center in normalized [-1,1] space.
    pub pos: [f64; 3],
    /// 1.0 occupied, 0.0 empty.
    pub label: f64,
    /// Flat voxel index the sample was taken from.
    pub voxel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
    pub seed: u64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Debug dump as CSV rows of x,y,z,label.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,y,z,label")?;
        for s in &self.samples {
            writeln!(f, "{},{},{},{}", s.pos[0], s.pos[1], s.pos[2], s.label as u8)?;
        }
        Ok(())
    }
}

pub fn build_training_set(grid: &VoxelGrid, support: &SupportSet, seed: u64) -> Result<TrainingSet> {
    build_training_set_with(grid, support, seed, false)
}

/// `nonsupport_with_replacement` switches the non-support quarter to draws
/// with replacement; the default samples without replacement for coverage.
pub fn build_training_set_with(
    grid: &VoxelGrid,
    support: &SupportSet,
    seed: u64,
    nonsupport_with_replacement: bool,
) -> Result<TrainingSet> {
    if support.is_empty() {
        return Err(Error::NoBoundary);
    }
    let mut is_support = vec![false; grid.len()];
    for &i in support.surface.iter().chain(&support.outer) {
        is_support[i] = true;
    }
    let non_support: Vec<usize> = (0..grid.len()).filter(|&i| !is_support[i]).collect();
    let take = non_support.len() / 4;
    if take == 0 {
        return Err(Error::GridTooSmall);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if nonsupport_with_replacement {
        use rand::Rng;
        (0..take)
            .map(|_| non_support[rng.gen_range(0..non_support.len())])
            .collect()
    } else {
        rand::seq::index::sample(&mut rng, non_support.len(), take)
            .iter()
            .map(|i| non_support[i])
            .collect()
    };

    // Support half: replicate the whole set, then top up the remainder by a
    // seeded draw without replacement. Per-voxel multiplicity stays within ±1.
    let support_all: Vec<usize> = support.surface.iter().chain(&support.outer).copied().collect();
    let reps = take / support_all.len();
    let rem = take % support_all.len();
    for _ in 0..reps {
        chosen.extend_from_slice(&support_all);
    }
    chosen.extend(
        rand::seq::index::sample(&mut rng, support_all.len(), rem)
            .iter()
            .map(|i| support_all[i]),
    );

    let samples = chosen
        .into_iter()
        .map(|idx| Sample {
            pos: grid.center(idx),
            label: if grid.get(idx) { 1.0 } else { 0.0 },
            voxel: idx,
        })
        .collect();
    Ok(TrainingSet { samples, seed })
}
