//! Word-level hallucination and omission features: segmentation, token to
//! word alignment, worst-token aggregation and gold word labels.

mod align;
mod features;
mod segment;

pub use align::{aggregate_to_words, align_tokens_to_words, gold_word_labels, Alignment};
pub use features::{
    token_features, token_features_halluc, token_features_omission, word_rows, TokenFeature, TokenFeatureRow,
    UnknownFeature, WordRow, WordTable,
};
pub use segment::{segment_words, WordSpan};
