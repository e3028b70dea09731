//! Draft procedure reports.
//!
//! Findings, impressions, phase times and the patient-context sections are
//! filled in from the timeline; preparation, procedure notes, complications
//! and recommendations are entered by hand. A report becomes `Complete` only
//! through [`finalize_report`] and cannot change afterwards.
//!
//! [`derive_findings`] is also the source of the comparison module's
//! anomaly list, so both views always agree.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_vec;
use crate::model::{Annotation, AnnotationId, Label, Timeline};
use crate::ops::{compute_phase_times, segment_containing, PhaseTimes};
use crate::validate::{errors_only, validate_timeline, Diagnostic};

/// Distance tags this many frames either side of an anomaly are associated
/// with it.
pub const DISTANCE_WINDOW_FRAMES: u64 = 150;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("timeline has {} error diagnostic(s)", .0.len())]
    InvalidTimeline(Vec<Diagnostic>),
    #[error("report is already complete")]
    AlreadyComplete,
    #[error("recommendations are required before the report can be completed")]
    MissingRecommendation,
    #[error("finding {0} is not inside any annotated segment")]
    UnlocatedFinding(AnnotationId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CompoundAttribute {
    WithBloodClot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingEntry {
    /// The anomaly annotation this entry describes.
    pub annotation_id: AnnotationId,
    pub anomaly_label: Label,
    pub segment: Option<Label>,
    pub distance_cm: Option<u32>,
    pub findings_text: Option<String>,
    pub impressions_text: Option<String>,
    pub snapshot_frame: u64,
    pub compound_attributes: BTreeSet<CompoundAttribute>,
    /// Blood-clot annotations folded into this entry.
    pub attached: Vec<AnnotationId>,
}

/// One entry per polyp and IBD annotation, plus one per blood clot that
/// touches no polyp. A clot overlapping polyps is attached to the polyp it
/// overlaps most (earliest polyp on ties).
///
/// Entries are ordered by distance from the anus, deepest first, with
/// undistanced entries last.
pub fn derive_findings(timeline: &Timeline) -> Vec<FindingEntry> {
    let polyps: Vec<&Annotation> = by_label(timeline, Label::Polyp);
    let ibds: Vec<&Annotation> = by_label(timeline, Label::Ibd);
    let clots: Vec<&Annotation> = by_label(timeline, Label::BloodClot);

    let mut attachments: BTreeMap<&AnnotationId, Vec<AnnotationId>> = BTreeMap::new();
    let mut lone_clots = Vec::new();
    for clot in clots {
        let host = polyps
            .iter()
            .map(|p| (p.interval.overlap_len(&clot.interval), *p))
            .filter(|(overlap, _)| *overlap > 0)
            .max_by(|a, b| {
                a.0.cmp(&b.0)
                    .then_with(|| (&b.1.interval, &b.1.annotation_id).cmp(&(&a.1.interval, &a.1.annotation_id)))
            });
        match host {
            Some((_, polyp)) => attachments
                .entry(&polyp.annotation_id)
                .or_default()
                .push(clot.annotation_id.clone()),
            None => lone_clots.push(clot),
        }
    }

    let mut entries: Vec<FindingEntry> = polyps
        .iter()
        .chain(ibds.iter())
        .chain(lone_clots.iter())
        .map(|a| {
            let attached = attachments.remove(&a.annotation_id).unwrap_or_default();
            finding_for(timeline, a, attached)
        })
        .collect();
    entries.sort_by(|a, b| {
        let key = |e: &FindingEntry| {
            (
                e.distance_cm.is_none(),
                Reverse(e.distance_cm),
                e.snapshot_frame,
                e.annotation_id.clone(),
            )
        };
        key(a).cmp(&key(b))
    });
    entries
}

fn by_label(timeline: &Timeline, label: Label) -> Vec<&Annotation> {
    let mut found: Vec<&Annotation> = timeline
        .annotations
        .iter()
        .filter(|a| a.label == label)
        .collect();
    found.sort_by(|a, b| (a.interval, &a.annotation_id).cmp(&(b.interval, &b.annotation_id)));
    found
}

fn finding_for(timeline: &Timeline, anomaly: &Annotation, attached: Vec<AnnotationId>) -> FindingEntry {
    let interval = anomaly.interval;
    let distance_cm = timeline
        .tags
        .iter()
        .filter_map(|t| t.distance_cm.map(|d| (interval.gap_to(t.frame), t, d)))
        .filter(|(gap, _, _)| *gap <= DISTANCE_WINDOW_FRAMES)
        .min_by(|a, b| (a.0, a.1.frame, &a.1.tag_id).cmp(&(b.0, b.1.frame, &b.1.tag_id)))
        .map(|(_, _, d)| d);
    let text_tag = timeline
        .tags
        .iter()
        .filter(|t| t.is_full_tag() && interval.contains(t.frame))
        .min_by(|a, b| (a.frame, &a.tag_id).cmp(&(b.frame, &b.tag_id)));
    let mut compound_attributes = BTreeSet::new();
    if !attached.is_empty() {
        compound_attributes.insert(CompoundAttribute::WithBloodClot);
    }
    FindingEntry {
        annotation_id: anomaly.annotation_id.clone(),
        anomaly_label: anomaly.label,
        segment: segment_containing(timeline, interval.start_frame()),
        distance_cm,
        findings_text: text_tag.and_then(|t| t.findings.clone()),
        impressions_text: text_tag.and_then(|t| t.impressions.clone()),
        snapshot_frame: interval.start_frame(),
        compound_attributes,
        attached,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportStatus {
    Draft,
    Complete,
}

/// Prior patient information keyed by section name:
/// `general_information`, `clinical_history_and_physicals`, `consent`,
/// `medications`. Other keys are ignored.
pub type PatientContext = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub procedure_id: String,
    pub status: ReportStatus,
    pub general_information: String,
    pub clinical_history_and_physicals: String,
    pub consent: String,
    pub medications: String,
    pub findings: Vec<FindingEntry>,
    pub impressions: String,
    pub preparation: String,
    pub procedure_notes: String,
    pub complications: String,
    pub recommendations: String,
    pub phase_times: PhaseTimes,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualSections {
    #[serde(default)]
    pub preparation: String,
    #[serde(default)]
    pub procedure_notes: String,
    #[serde(default)]
    pub complications: String,
    #[serde(default)]
    pub recommendations: String,
}

pub fn generate_report(timeline: &Timeline, context: &PatientContext) -> Result<Report, ReportError> {
    let errors = errors_only(validate_timeline(timeline));
    if !errors.is_empty() {
        return Err(ReportError::InvalidTimeline(errors));
    }
    let section = |key: &str| context.get(key).cloned().unwrap_or_default();
    let impressions: Vec<&str> = timeline
        .tags_in_order()
        .into_iter()
        .filter(|t| t.is_full_tag())
        .filter_map(|t| t.impressions.as_deref())
        .collect();
    Ok(Report {
        procedure_id: timeline.procedure_id.clone(),
        status: ReportStatus::Draft,
        general_information: section("general_information"),
        clinical_history_and_physicals: section("clinical_history_and_physicals"),
        consent: section("consent"),
        medications: section("medications"),
        findings: derive_findings(timeline),
        impressions: impressions.join("\n"),
        preparation: String::new(),
        procedure_notes: String::new(),
        complications: String::new(),
        recommendations: String::new(),
        phase_times: compute_phase_times(timeline),
    })
}

pub fn set_manual_sections(report: &Report, sections: ManualSections) -> Result<Report, ReportError> {
    if report.status != ReportStatus::Draft {
        return Err(ReportError::AlreadyComplete);
    }
    Ok(Report {
        preparation: sections.preparation,
        procedure_notes: sections.procedure_notes,
        complications: sections.complications,
        recommendations: sections.recommendations,
        ..report.clone()
    })
}

/// Marks a verified draft complete. Needs recommendations and a segment for
/// every finding.
pub fn finalize_report(report: &Report) -> Result<Report, ReportError> {
    if report.status != ReportStatus::Draft {
        return Err(ReportError::AlreadyComplete);
    }
    if report.recommendations.trim().is_empty() {
        return Err(ReportError::MissingRecommendation);
    }
    if let Some(unlocated) = report.findings.iter().find(|f| f.segment.is_none()) {
        return Err(ReportError::UnlocatedFinding(unlocated.annotation_id.clone()));
    }
    Ok(Report {
        status: ReportStatus::Complete,
        ..report.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderFormat {
    Structured,
    Document,
}

pub const DOCUMENT_SECTIONS: [&str; 10] = [
    "General Information",
    "Clinical History and Physicals",
    "Consent",
    "Medications",
    "Findings",
    "Impressions",
    "Preparation",
    "Procedure",
    "Complications",
    "Recommendations",
];

pub fn render_report(report: &Report, format: RenderFormat) -> Vec<u8> {
    match format {
        RenderFormat::Structured => {
            to_canonical_vec(report).expect("report serializes to JSON")
        }
        RenderFormat::Document => render_document(report).into_bytes(),
    }
}

pub fn parse_structured(bytes: &[u8]) -> serde_json::Result<Report> {
    serde_json::from_slice(bytes)
}

/// One-line summary: label, segment, distance and snapshot frame, then any
/// compound attribute, joined by spaced em dashes.
pub fn finding_line(entry: &FindingEntry) -> String {
    let segment = entry.segment.map_or("Unlocated", Label::display_name);
    let distance = match entry.distance_cm {
        Some(d) => format!("{d} cm from anus"),
        None => "distance not recorded".to_string(),
    };
    let mut line = format!(
        "{} — {} — {} — frame {}",
        entry.anomaly_label.display_name(),
        segment,
        distance,
        entry.snapshot_frame
    );
    if entry
        .compound_attributes
        .contains(&CompoundAttribute::WithBloodClot)
    {
        line.push_str(" — with blood clot");
    }
    line
}

fn render_document(report: &Report) -> String {
    let mut doc = String::new();
    let status = match report.status {
        ReportStatus::Draft => "Draft",
        ReportStatus::Complete => "Complete",
    };
    let _ = writeln!(doc, "Colonoscopy Report: {}", report.procedure_id);
    let _ = writeln!(doc, "Status: {status}");
    let p = &report.phase_times;
    match (p.insertion_s, p.cecum_dwell_s, p.withdrawal_s) {
        (Some(i), Some(c), Some(w)) if p.complete => {
            let _ = writeln!(doc, "Insertion time: {i:.1} s");
            let _ = writeln!(doc, "Cecum time: {c:.1} s");
            let _ = writeln!(doc, "Withdrawal time: {w:.1} s");
        }
        _ => {
            let _ = writeln!(doc, "Cecum not reached: insertion and withdrawal times not computed");
        }
    }

    let findings: String = report
        .findings
        .iter()
        .map(|f| {
            let mut block = finding_line(f);
            block.push('\n');
            if let Some(text) = &f.findings_text {
                let _ = writeln!(block, "    Findings: {}", text.trim());
            }
            if let Some(text) = &f.impressions_text {
                let _ = writeln!(block, "    Impressions: {}", text.trim());
            }
            block
        })
        .collect();
    let bodies = [
        report.general_information.as_str(),
        report.clinical_history_and_physicals.as_str(),
        report.consent.as_str(),
        report.medications.as_str(),
        findings.as_str(),
        report.impressions.as_str(),
        report.preparation.as_str(),
        report.procedure_notes.as_str(),
        report.complications.as_str(),
        report.recommendations.as_str(),
    ];
    for (heading, body) in DOCUMENT_SECTIONS.iter().zip(bodies) {
        let _ = writeln!(doc, "\n{heading}");
        let body = body.trim_end();
        if !body.is_empty() {
            let _ = writeln!(doc, "{body}");
        }
    }
    doc
}
