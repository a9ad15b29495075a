//! Compresses an individual 3D model into a tiny MLP that classifies binary
//! voxel occupancy, then reconstructs the model by network inference alone.
//!
//! Pipeline: load mesh -> normalize -> voxelize -> build boundary-oversampled
//! training set -> reinforcement-learning architecture search over small MLPs
//! with shared supernet weights -> post-select the smallest near-best
//! candidate -> retrain from scratch -> reconstruct -> score (IoU / Chamfer).
//!
//! No marching cubes or SDF anywhere: the network output *is* the occupancy.

pub mod error;
pub mod geometry;
pub mod mesh_io;
pub mod metrics;
pub mod nas;
pub mod neuralnet;
pub mod sampling;
pub mod selection;
pub mod shapes;

pub use error::{Error, Result};
pub use geometry::{Mesh, SupportSet, VoxelGrid};
pub use neuralnet::{Activation, ActivationKind, ArchSpec, MlpNetwork, TrainConfig};
pub use sampling::TrainingSet;
