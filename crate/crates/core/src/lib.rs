//! Double-embedding representation for bottom-up multi-person pose
//! estimation.
//!
//! Root-group joints (torso plus a center pseudo-joint) are grouped into
//! persons through a 1D tag field; limb and facial joints are attached to
//! those persons by following normalized displacement fields, hop by hop
//! (wrist to elbow to shoulder) or directly to the center. This crate
//! encodes ground-truth field stacks, decodes them back into poses, refines
//! low-confidence joints from confident neighbors, evaluates the training
//! objectives and computes OKS/AP and PCKh.

pub mod decoder;
pub mod defs;
pub mod encoder;
pub mod error;
pub mod grid;
pub mod io;
pub mod losses;
pub mod matching;
pub mod metrics;
pub mod noise;
pub mod refiner;
pub mod render;
pub mod rng;
pub mod scenegen;
pub mod skeleton;

pub use decoder::{assemble_poses, Decoder, DecoderConfig, Detection, TraceMode};
pub use encoder::{encode, EncoderConfig, FieldStack};
pub use error::{Error, Result};
pub use grid::Grid;
pub use refiner::refine_pose;
pub use skeleton::{default_coco_skeleton, mpii_skeleton, JointId, Keypoint, PersonPose, SkeletonSpec};
