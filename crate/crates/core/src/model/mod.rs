//! Domain types, trace-bundle ingestion, annotation markup and validation.

mod corpus;
mod direction;
mod markup;
mod record;
mod severity;

pub use corpus::{
    corpus_stats, filter_evaluable, load_corpus, load_corpus_with, merge_annotations, read_records, validation_report,
    write_corpus, Corpus, CorpusError, DirectionStats, LoadOptions, RecordViolations,
};
pub use direction::{parse_direction, Direction, MalformedDirection};
pub use markup::{parse_span_markup, render_span_markup, Delimiters, MarkupError};
pub use record::{
    char_slice, validate_record, AnnotatedSpan, Annotation, AttentionDistribution, ContributionMatrix, EmbeddingPair,
    Side, TokenSpan, TranslationRecord, Violation, ATTN_INGEST_TOL, ATTN_RENORM_TOL, ROW_MASS_TOL,
};
pub use severity::{Axis, LabelMap, Severity};
