//! Character-level joint segmentation and tagging with a neural semi-Markov CRF.

pub mod corpus;
pub mod corruptor;
pub mod encoding;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod segfeat;
pub mod semicrf;
pub mod synth;
pub mod trainer;
