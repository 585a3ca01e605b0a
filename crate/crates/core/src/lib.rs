//! Fock-space simulation of linear-optical heralding circuits and key-rate
//! estimation for device-independent QKD built on them.

pub mod cli;
pub mod diqkd;
pub mod error;
pub mod fock;
pub mod herald;
pub mod klm;
pub mod optics;
pub mod sources;

pub use error::{Error, Result};
pub use fock::{Branch, BranchEnsemble, FockState, Occupation};
