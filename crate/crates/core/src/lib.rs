//! Annotation, reporting and comparison engine for colonoscopy procedure
//! videos.
//!
//! * [`model`]: labels, intervals, tags and the per-procedure [`Timeline`].
//! * [`validate`]: whole-timeline diagnostics.
//! * [`ops`]: mutators, phase times, segment lookup and row layout.
//! * [`transcript`]: timestamped say-out-loud transcripts to tags.
//! * [`report`]: draft procedure reports and their finalization.
//! * [`compare`]: case digests, comparison tables and follow-up alignment.
//! * [`store`]: versioned project files.
//! * `synth` (feature `synth`): seeded random procedures and transcripts.

pub mod canonical;
pub mod compare;
pub mod fixtures;
pub mod model;
pub mod ops;
pub mod report;
pub mod store;
#[cfg(feature = "synth")]
pub mod synth;
pub mod transcript;
pub mod validate;

pub use model::{
    Annotation, AnnotationId, Fps, Interval, Label, LabelKind, ModelError, Tag, TagClass, TagId,
    TagOrigin, Timeline, VideoMeta,
};
pub use ops::{PhaseTimes, TimelineError};
pub use validate::{validate_timeline, Diagnostic, DiagnosticCode, Severity};
