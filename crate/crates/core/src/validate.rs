//! Whole-timeline checks.
//!
//! [`validate_timeline`] never fails; it reports what it finds as a list of
//! [`Diagnostic`]s. Errors mark broken invariants and block persistence.
//! Warnings flag data-quality issues (unannotated gaps, odd segment order,
//! a slow insertion) that a clinician may legitimately leave in place.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{AnnotationId, TagId, Timeline, DISTANCE_STEP_CM};
use crate::ops::compute_phase_times;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    SegmentOverlap,
    OutOfBounds,
    BadDistanceGranularity,
    EmptyTag,
    DuplicateId,
    AnomalyOutsideSegment,
    SegmentOrder,
    PhaseRatio,
    DistanceSnapped,
}

impl DiagnosticCode {
    pub fn severity(self) -> Severity {
        match self {
            DiagnosticCode::SegmentOverlap
            | DiagnosticCode::OutOfBounds
            | DiagnosticCode::BadDistanceGranularity
            | DiagnosticCode::EmptyTag
            | DiagnosticCode::DuplicateId => Severity::Error,
            DiagnosticCode::AnomalyOutsideSegment
            | DiagnosticCode::SegmentOrder
            | DiagnosticCode::PhaseRatio
            | DiagnosticCode::DistanceSnapped => Severity::Warning,
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Subject {
    Annotation(AnnotationId),
    Tag(TagId),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub message: String,
    pub subject: Subject,
    /// Frame the diagnostic is anchored at; used for ordering.
    pub frame: u64,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, subject: Subject, frame: u64, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: code.severity(),
            code,
            message: message.into(),
            subject,
            frame,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}: {}", self.severity, self.code, self.message)
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(Diagnostic::is_error)
}

pub fn errors_only(diagnostics: Vec<Diagnostic>) -> Vec<Diagnostic> {
    diagnostics.into_iter().filter(Diagnostic::is_error).collect()
}

/// Orders by severity, anchor frame, then code and subject for stability.
pub fn sort_diagnostics(diagnostics: &mut [Diagnostic]) {
    diagnostics.sort_by(|a, b| {
        (a.severity, a.frame, a.code, &a.subject, &a.message)
            .cmp(&(b.severity, b.frame, b.code, &b.subject, &b.message))
    });
}

pub fn validate_timeline(timeline: &Timeline) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_ids(timeline, &mut out);
    check_bounds(timeline, &mut out);
    check_segment_overlap(timeline, &mut out);
    check_tags(timeline, &mut out);
    check_anomaly_cover(timeline, &mut out);
    check_segment_order(timeline, &mut out);
    check_phase_ratio(timeline, &mut out);
    sort_diagnostics(&mut out);
    out
}

fn check_ids(timeline: &Timeline, out: &mut Vec<Diagnostic>) {
    let mut seen = HashSet::new();
    for a in &timeline.annotations {
        if !seen.insert(a.annotation_id.as_str()) {
            out.push(Diagnostic::new(
                DiagnosticCode::DuplicateId,
                Subject::Annotation(a.annotation_id.clone()),
                a.interval.start_frame(),
                format!("annotation id {} is used more than once", a.annotation_id),
            ));
        }
    }
    let mut seen = HashSet::new();
    for t in &timeline.tags {
        if !seen.insert(t.tag_id.as_str()) {
            out.push(Diagnostic::new(
                DiagnosticCode::DuplicateId,
                Subject::Tag(t.tag_id.clone()),
                t.frame,
                format!("tag id {} is used more than once", t.tag_id),
            ));
        }
    }
}

fn check_bounds(timeline: &Timeline, out: &mut Vec<Diagnostic>) {
    let frames = timeline.frame_count();
    for a in &timeline.annotations {
        if a.interval.end_frame() > frames {
            out.push(Diagnostic::new(
                DiagnosticCode::OutOfBounds,
                Subject::Annotation(a.annotation_id.clone()),
                a.interval.start_frame(),
                format!(
                    "{} interval {} exceeds the video's {frames} frames",
                    a.label, a.interval
                ),
            ));
        }
    }
    for t in &timeline.tags {
        if t.frame >= frames {
            out.push(Diagnostic::new(
                DiagnosticCode::OutOfBounds,
                Subject::Tag(t.tag_id.clone()),
                t.frame,
                format!("tag frame {} exceeds the video's {frames} frames", t.frame),
            ));
        }
    }
}

fn check_segment_overlap(timeline: &Timeline, out: &mut Vec<Diagnostic>) {
    let mut segments: Vec<_> = timeline.segments().collect();
    segments.sort_by_key(|a| (a.interval, &a.annotation_id));
    // Sweep keeping the segment that reaches furthest so far; any later start
    // before that end is an intersection.
    let mut reach: Option<&crate::model::Annotation> = None;
    for seg in segments {
        if let Some(prev) = reach {
            if seg.interval.start_frame() < prev.interval.end_frame() {
                out.push(Diagnostic::new(
                    DiagnosticCode::SegmentOverlap,
                    Subject::Annotation(seg.annotation_id.clone()),
                    seg.interval.start_frame(),
                    format!(
                        "segment {} {} overlaps segment {} {} ({})",
                        seg.label, seg.interval, prev.label, prev.interval, prev.annotation_id
                    ),
                ));
            }
        }
        if reach.is_none_or(|p| seg.interval.end_frame() > p.interval.end_frame()) {
            reach = Some(seg);
        }
    }
}

fn check_tags(timeline: &Timeline, out: &mut Vec<Diagnostic>) {
    for t in &timeline.tags {
        if t.is_empty() {
            out.push(Diagnostic::new(
                DiagnosticCode::EmptyTag,
                Subject::Tag(t.tag_id.clone()),
                t.frame,
                "tag carries no distance, findings or impressions",
            ));
        }
        if let Some(d) = t.distance_cm {
            if d % DISTANCE_STEP_CM != 0 {
                out.push(Diagnostic::new(
                    DiagnosticCode::BadDistanceGranularity,
                    Subject::Tag(t.tag_id.clone()),
                    t.frame,
                    format!("distance {d} cm is not a multiple of {DISTANCE_STEP_CM} cm"),
                ));
            }
        }
    }
}

fn check_anomaly_cover(timeline: &Timeline, out: &mut Vec<Diagnostic>) {
    let mut cover: Vec<(u64, u64)> = timeline
        .segments()
        .map(|a| (a.interval.start_frame(), a.interval.end_frame()))
        .collect();
    cover.sort_unstable();
    let merged = merge_ranges(cover);
    for a in timeline.anomalies() {
        let (s, e) = (a.interval.start_frame(), a.interval.end_frame());
        let covered = merged.iter().any(|&(ms, me)| ms <= s && e <= me);
        if !covered {
            out.push(Diagnostic::new(
                DiagnosticCode::AnomalyOutsideSegment,
                Subject::Annotation(a.annotation_id.clone()),
                s,
                format!("{} {} is not fully inside annotated segments", a.label, a.interval),
            ));
        }
    }
}

fn merge_ranges(sorted: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(sorted.len());
    for (s, e) in sorted {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}

/// Segments should climb towards the cecum during insertion and descend
/// during withdrawal. Without a cecum the turnaround is the first segment
/// with the highest anatomical index.
fn check_segment_order(timeline: &Timeline, out: &mut Vec<Diagnostic>) {
    let mut segments: Vec<_> = timeline.segments().collect();
    segments.sort_by_key(|a| (a.interval, &a.annotation_id));
    if segments.is_empty() {
        return;
    }
    let turn = match timeline.first_cecum() {
        Some(c) => segments
            .iter()
            .position(|a| a.annotation_id == c.annotation_id)
            .unwrap_or(0),
        None => {
            let max = segments
                .iter()
                .filter_map(|a| a.label.anatomical_index())
                .max()
                .unwrap_or(0);
            segments
                .iter()
                .position(|a| a.label.anatomical_index() == Some(max))
                .unwrap_or(0)
        }
    };
    let index = |i: usize| segments[i].label.anatomical_index().unwrap_or(0);
    for i in 1..segments.len() {
        let (prev, cur) = (index(i - 1), index(i));
        let inserting = i <= turn;
        let bad = if inserting { cur < prev } else { cur > prev };
        if bad {
            let seg = segments[i];
            out.push(Diagnostic::new(
                DiagnosticCode::SegmentOrder,
                Subject::Annotation(seg.annotation_id.clone()),
                seg.interval.start_frame(),
                format!(
                    "{} follows {} during {}",
                    seg.label.name(),
                    segments[i - 1].label.name(),
                    if inserting { "insertion" } else { "withdrawal" }
                ),
            ));
        }
    }
}

fn check_phase_ratio(timeline: &Timeline, out: &mut Vec<Diagnostic>) {
    let phases = compute_phase_times(timeline);
    if let (true, Some(cecum)) = (phases.is_slow_insertion(), timeline.first_cecum()) {
        out.push(Diagnostic::new(
            DiagnosticCode::PhaseRatio,
            Subject::Annotation(cecum.annotation_id.clone()),
            cecum.interval.start_frame(),
            format!(
                "insertion took {:.1} s, not less than withdrawal {:.1} s",
                phases.insertion_s.unwrap_or_default(),
                phases.withdrawal_s.unwrap_or_default()
            ),
        ));
    }
}
