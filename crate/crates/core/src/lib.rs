//! Computational core of a passive-hand perioperation rig.
//!
//! The crate covers the full chain from the wearable device to training data:
//!
//! * [`hand`]: kinematic chains of the passive hand variants, forward
//!   kinematics and contact-point Jacobians.
//! * [`linkage`]: the four-bar couplings between exoskeleton and hand joints.
//! * [`torque`]: joint torque recovery from contact forces and its
//!   observability.
//! * [`tactile`]: tactile frames, delta images and per-hand super-images.
//! * [`session`]: the encoder wire protocol, the chunked session container,
//!   the multi-stream recorder and the fixed-rate alignment.
//! * [`export`]: training episodes, augmentation and evaluation metrics.

pub mod config;
pub mod export;
pub mod hand;
pub mod linkage;
pub mod session;
pub mod tactile;
pub mod torque;
