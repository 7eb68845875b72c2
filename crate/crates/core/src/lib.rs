//! Link-level MIMO-OFDM simulation with receivers built from combined
//! variational message passing (channel weights, noise precision,
//! equalization) and sum-product message passing (demapping, decoding).

pub mod channel;
pub mod config;
pub mod error;
pub mod fec;
pub mod harness;
pub mod modem;
pub mod numerics;
pub mod oracle;
pub mod receivers;
pub mod vmp;

pub use error::{Error, Result};
