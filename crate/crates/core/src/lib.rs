//! Word alignment over cross-lingual embeddings with explicit null alignment,
//! and hallucination/omission scoring for machine translation output.
//!
//! The pipeline per sentence pair:
//!
//! 1. [`embedding_io`] reads token or word embeddings and pools them to words.
//! 2. [`geometry`] builds the cosine cost matrix and the null word's distance.
//! 3. [`ot`] solves the transport problems (balanced, partial, one-side constrained).
//! 4. [`align`] turns costs or plans into binary alignments.
//! 5. [`detection`] scores hallucination and omission from OTTAWA output.
//! 6. [`evaluation`] computes AER and ROC AUC.

pub mod align;
pub mod detection;
pub mod embedding_io;
pub mod evaluation;
pub mod geometry;
pub mod ot;
pub mod pipeline;

pub use align::{align_record, ottawa_align, AlignerChoice, AlignmentMatrix, Strategy};
pub use detection::{sentence_scores, DetectionScores, ScoreOptions};
pub use embedding_io::{SentencePairRecord, WordEmbeddings};
pub use ot::{SolverConfig, TransportPlan};
