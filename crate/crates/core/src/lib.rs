//! Uplink simulator for cell-free massive MIMO with capacity-limited
//! backhaul: APs forward quantized channel estimates and quantized received
//! signals to a central unit that runs MRC, ZF or MMSE detection.

pub mod aterms;
pub mod airlink;
pub mod detection;
pub mod error;
pub mod fronthaul;
pub mod geometry;
pub mod quantizer;
pub mod random;
pub mod search;
pub mod simulator;

pub use detection::{Backhaul, DetectorKind, Scenario};
pub use error::{Error, Result};
pub use geometry::{Layout, NetworkDrop, PathLossModel};
pub use quantizer::{QuantizerDesign, QuantizerModel};
pub use simulator::{RateReport, SimConfig};
