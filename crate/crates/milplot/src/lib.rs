//! Byteplot malware-family classification at desk scale.
//!
//! The library converts raw byte sequences into greyscale byteplots, feeds
//! them either to a resize-based CNN baseline or to an attention-based
//! multiple-instance-learning classifier over 224x224 patches, generates
//! adversarial enlargement attacks, and measures both the information lost by
//! resizing and the resulting classification damage.

pub mod adversary;
pub mod baseline;
pub mod byteplot;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod harness;
pub mod manifest;
pub mod metrics;
pub mod mil;
pub mod tensor;

pub use tensor::Tensor;
