//! Detection of hallucinations and omissions in machine translation from
//! model traces: sentence-level detectors, attention optimal-transport
//! scores, word-level features, a group cross-validated combiner, ranking
//! evaluation, annotation candidate selection and a synthetic corpus
//! generator.

pub mod attn_ot;
pub mod combiner;
pub mod eval;
pub mod model;
pub mod scores;
pub mod selection;
pub mod sentence;
pub mod stats;
pub mod synth;
pub mod word;
