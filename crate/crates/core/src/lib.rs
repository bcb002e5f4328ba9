//! Powered Dirichlet-Hawkes process clustering of document streams.
//!
//! Documents arrive with a timestamp and a bag of words. Each is assigned
//! online to a cluster whose prior weight is its current Hawkes intensity
//! raised to a power `r`, and whose likelihood is a Dirichlet-Multinomial
//! predictive over the words seen in that cluster. Inference runs a particle
//! filter ([`smc`]).
//!
//! `r` trades off the two signals: `r = 0` clusters on text alone, `r = 1`
//! is the Dirichlet-Hawkes process, and large `r` lets the temporal signal
//! dominate.

pub mod commands;
pub mod error;
pub mod eval;
pub mod hawkes;
pub mod io;
pub mod math;
pub mod prior;
pub mod smc;
pub mod synth;
pub mod text;

pub use error::{PdhpError, Result};
pub use hawkes::{AlphaBank, AlphaSample, EventHistory, HawkesAccumulator, KernelBasis};
pub use prior::{pcrp_weights, pdhp_weights, PriorParams};
pub use smc::{run_stream, Document, PdhpConfig, StreamEngine, StreamResult};
pub use text::{DocBag, TextPrior, WordCounts};
