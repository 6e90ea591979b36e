//! Frequency-domain multimodal fusion with fidelity-based knowledge
//! retrieval, for medical visual question answering posed as C-way
//! classification.
//!
//! Pipeline per sample:
//!
//! 1. project text (300-d) and image features to `d_model` ([`data`]),
//! 2. take magnitude spectra, compress them with learnable filter banks and
//!    apply cross-modal sigmoid gates ([`fusion`]),
//! 3. retrieve the top-3 knowledge entries by state fidelity and aggregate
//!    them with a temperature softmax ([`quantum`]),
//! 4. concatenate and classify with a three-layer MLP ([`head`]),
//!
//! trained on cross-entropy plus intra- and cross-modal InfoNCE
//! ([`objectives`]) by the grouped cross-validation harness in [`trainer`].

// `!(x > 0.0)` also rejects NaN; row-index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod head;
pub mod kernel;
pub mod model;
pub mod objectives;
pub mod quantum;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use kernel::Tensor;
