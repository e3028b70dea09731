//! Case digests, the multi-case comparison table, and anomaly alignment
//! between two procedures (e.g. an index colonoscopy and its follow-up).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{AnnotationId, Label, Timeline};
use crate::ops::{compute_phase_times, PhaseTimes};
use crate::report::{derive_findings, CompoundAttribute};
use crate::validate::{errors_only, validate_timeline, Diagnostic};

/// Default follow-up matching tolerance: two endoscope marking steps.
pub const DEFAULT_MATCH_THRESHOLD_CM: i64 = 10;

/// Placeholder for a time that was not computed.
pub const ABSENT: &str = "—";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("timeline {procedure_id} has {} error diagnostic(s)", .diagnostics.len())]
    InvalidTimeline {
        procedure_id: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("nothing to compare")]
    EmptyInput,
    #[error("threshold {0} cm must be a non-negative multiple of 5")]
    BadThreshold(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalySummary {
    pub annotation_id: AnnotationId,
    pub label: Label,
    pub segment: Option<Label>,
    pub distance_cm: Option<u32>,
    pub compound_attributes: BTreeSet<CompoundAttribute>,
}

/// Anomaly counts for one segment cell, rendered `P<i>/I<j>/B<k>`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyCounts {
    pub polyp: u32,
    pub ibd: u32,
    pub blood_clot: u32,
}

impl AnomalyCounts {
    pub fn add(&mut self, label: Label) {
        match label {
            Label::Polyp => self.polyp += 1,
            Label::Ibd => self.ibd += 1,
            Label::BloodClot => self.blood_clot += 1,
            _ => {}
        }
    }

    pub fn get(&self, label: Label) -> u32 {
        match label {
            Label::Polyp => self.polyp,
            Label::Ibd => self.ibd,
            Label::BloodClot => self.blood_clot,
            _ => 0,
        }
    }

    pub fn total(&self) -> u32 {
        self.polyp + self.ibd + self.blood_clot
    }
}

impl fmt::Display for AnomalyCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}/I{}/B{}", self.polyp, self.ibd, self.blood_clot)
    }
}

/// Where an anomaly sits: a colon segment, or nowhere (annotation gap).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SegmentSlot {
    Segment(Label),
    Unlocated,
}

impl From<Option<Label>> for SegmentSlot {
    fn from(segment: Option<Label>) -> Self {
        segment.map_or(SegmentSlot::Unlocated, SegmentSlot::Segment)
    }
}

impl Serialize for SegmentSlot {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SegmentSlot::Segment(label) => label.serialize(serializer),
            SegmentSlot::Unlocated => serializer.serialize_str("unlocated"),
        }
    }
}

impl<'de> Deserialize<'de> for SegmentSlot {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "unlocated" {
            return Ok(SegmentSlot::Unlocated);
        }
        let label: Label = s.parse().map_err(serde::de::Error::custom)?;
        if !label.is_segment() {
            return Err(serde::de::Error::custom(format!("{label} is not a segment")));
        }
        Ok(SegmentSlot::Segment(label))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub procedure_id: String,
    pub anomalies: Vec<AnomalySummary>,
    pub counts_by_segment: BTreeMap<SegmentSlot, AnomalyCounts>,
    pub phase_times: PhaseTimes,
    pub complete: bool,
}

impl CaseSummary {
    pub fn counts_in(&self, slot: SegmentSlot) -> AnomalyCounts {
        self.counts_by_segment.get(&slot).copied().unwrap_or_default()
    }
}

pub fn summarize_case(timeline: &Timeline) -> Result<CaseSummary, CompareError> {
    let errors = errors_only(validate_timeline(timeline));
    if !errors.is_empty() {
        return Err(CompareError::InvalidTimeline {
            procedure_id: timeline.procedure_id.clone(),
            diagnostics: errors,
        });
    }
    let anomalies: Vec<AnomalySummary> = derive_findings(timeline)
        .into_iter()
        .map(|f| AnomalySummary {
            annotation_id: f.annotation_id,
            label: f.anomaly_label,
            segment: f.segment,
            distance_cm: f.distance_cm,
            compound_attributes: f.compound_attributes,
        })
        .collect();
    let mut counts_by_segment: BTreeMap<SegmentSlot, AnomalyCounts> = BTreeMap::new();
    for a in &anomalies {
        counts_by_segment
            .entry(a.segment.into())
            .or_default()
            .add(a.label);
    }
    let phase_times = compute_phase_times(timeline);
    Ok(CaseSummary {
        procedure_id: timeline.procedure_id.clone(),
        anomalies,
        counts_by_segment,
        complete: phase_times.complete,
        phase_times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub procedure_id: String,
    /// One cell per segment in R, S, D, T, A, C order.
    pub segments: Vec<AnomalyCounts>,
    /// Anomalies outside every annotated segment.
    pub unlocated: AnomalyCounts,
    pub insertion_s: Option<f64>,
    pub withdrawal_s: Option<f64>,
    pub complete: bool,
    /// Insertion took at least as long as withdrawal.
    pub phase_ratio_warning: bool,
}

impl ComparisonRow {
    pub fn total(&self) -> u32 {
        self.segments.iter().map(AnomalyCounts::total).sum::<u32>() + self.unlocated.total()
    }

    pub fn cell(&self, segment: Label) -> AnomalyCounts {
        segment
            .anatomical_index()
            .and_then(|i| self.segments.get(i as usize))
            .copied()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const TABLE_HEADER: [&str; 10] = [
    "case",
    "R",
    "S",
    "D",
    "T",
    "A",
    "C",
    "insertion_s",
    "withdrawal_s",
    "complete",
];

fn format_seconds(value: Option<f64>) -> String {
    value.map_or_else(|| ABSENT.to_string(), |s| format!("{s:.1}"))
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(TABLE_HEADER).expect("in-memory write");
        for row in &self.rows {
            let mut record = vec![row.procedure_id.clone()];
            record.extend(row.segments.iter().map(ToString::to_string));
            record.push(format_seconds(row.insertion_s));
            record.push(format_seconds(row.withdrawal_s));
            record.push(row.complete.to_string());
            writer.write_record(&record).expect("in-memory write");
        }
        let bytes = writer.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("csv output is UTF-8")
    }
}

pub fn compare_cases(summaries: &[CaseSummary]) -> Result<ComparisonTable, CompareError> {
    if summaries.is_empty() {
        return Err(CompareError::EmptyInput);
    }
    let rows = summaries
        .iter()
        .map(|s| ComparisonRow {
            procedure_id: s.procedure_id.clone(),
            segments: Label::SEGMENTS
                .iter()
                .map(|&seg| s.counts_in(SegmentSlot::Segment(seg)))
                .collect(),
            unlocated: s.counts_in(SegmentSlot::Unlocated),
            insertion_s: s.phase_times.insertion_s,
            withdrawal_s: s.phase_times.withdrawal_s,
            complete: s.complete,
            phase_ratio_warning: s.phase_times.is_slow_insertion(),
        })
        .collect();
    Ok(ComparisonTable { rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyRef {
    pub procedure_id: String,
    pub annotation_id: AnnotationId,
    pub label: Label,
    pub segment: Option<Label>,
    pub distance_cm: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchStatus {
    Matched,
    OnlyLeft,
    OnlyRight,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyMatch {
    pub left: Option<AnomalyRef>,
    pub right: Option<AnomalyRef>,
    /// Right distance minus left distance; 0 when neither has a distance.
    pub delta_distance_cm: Option<i64>,
    pub status: MatchStatus,
}

fn anomaly_ref(summary: &CaseSummary, a: &AnomalySummary) -> AnomalyRef {
    AnomalyRef {
        procedure_id: summary.procedure_id.clone(),
        annotation_id: a.annotation_id.clone(),
        label: a.label,
        segment: a.segment,
        distance_cm: a.distance_cm,
    }
}

/// Pairs anomalies of two procedures that share label and segment and lie
/// within `threshold_cm` of each other.
///
/// Within each (label, segment) group the pairing maximises the number of
/// matches and, among those, minimises the summed |delta|. Anomalies without
/// a distance pair only with each other, in summary order. Unlocated
/// anomalies never match.
pub fn align_anomalies(
    left: &CaseSummary,
    right: &CaseSummary,
    threshold_cm: i64,
) -> Result<Vec<AnomalyMatch>, CompareError> {
    if threshold_cm < 0 || threshold_cm % 5 != 0 {
        return Err(CompareError::BadThreshold(threshold_cm));
    }
    type Group<'a> = (Vec<&'a AnomalySummary>, Vec<&'a AnomalySummary>);
    let mut groups: BTreeMap<(Label, Label), Group<'_>> = BTreeMap::new();
    let mut unlocated: Group<'_> = (Vec::new(), Vec::new());
    for a in &left.anomalies {
        match a.segment {
            Some(seg) => groups.entry((a.label, seg)).or_default().0.push(a),
            None => unlocated.0.push(a),
        }
    }
    for a in &right.anomalies {
        match a.segment {
            Some(seg) => groups.entry((a.label, seg)).or_default().1.push(a),
            None => unlocated.1.push(a),
        }
    }

    let only_left = |a: &AnomalySummary| AnomalyMatch {
        left: Some(anomaly_ref(left, a)),
        right: None,
        delta_distance_cm: None,
        status: MatchStatus::OnlyLeft,
    };
    let only_right = |a: &AnomalySummary| AnomalyMatch {
        left: None,
        right: Some(anomaly_ref(right, a)),
        delta_distance_cm: None,
        status: MatchStatus::OnlyRight,
    };

    let mut out = Vec::new();
    for (_, (ls, rs)) in groups {
        let (l_dist, l_none): (Vec<_>, Vec<_>) = ls.into_iter().partition(|a| a.distance_cm.is_some());
        let (r_dist, r_none): (Vec<_>, Vec<_>) = rs.into_iter().partition(|a| a.distance_cm.is_some());

        let mut matched: Vec<(&AnomalySummary, &AnomalySummary)> = l_none.iter().copied().zip(r_none.iter().copied()).collect();
        let mut left_rest: Vec<&AnomalySummary> = l_none.iter().skip(r_none.len()).copied().collect();
        let mut right_rest: Vec<&AnomalySummary> = r_none.iter().skip(l_none.len()).copied().collect();

        let mut l_sorted = l_dist;
        let mut r_sorted = r_dist;
        let by_distance = |a: &&AnomalySummary, b: &&AnomalySummary| {
            (a.distance_cm, &a.annotation_id).cmp(&(b.distance_cm, &b.annotation_id))
        };
        l_sorted.sort_by(by_distance);
        r_sorted.sort_by(by_distance);
        let l_values: Vec<i64> = l_sorted.iter().map(|a| i64::from(a.distance_cm.unwrap_or(0))).collect();
        let r_values: Vec<i64> = r_sorted.iter().map(|a| i64::from(a.distance_cm.unwrap_or(0))).collect();
        let pairs = optimal_pairs(&l_values, &r_values, threshold_cm);
        let mut l_used = vec![false; l_sorted.len()];
        let mut r_used = vec![false; r_sorted.len()];
        for &(i, j) in &pairs {
            l_used[i] = true;
            r_used[j] = true;
            matched.push((l_sorted[i], r_sorted[j]));
        }
        left_rest.extend(l_sorted.iter().zip(&l_used).filter(|(_, u)| !**u).map(|(a, _)| *a));
        right_rest.extend(r_sorted.iter().zip(&r_used).filter(|(_, u)| !**u).map(|(a, _)| *a));

        let delta = |l: &AnomalySummary, r: &AnomalySummary| -> i64 {
            match (l.distance_cm, r.distance_cm) {
                (Some(a), Some(b)) => i64::from(b) - i64::from(a),
                _ => 0,
            }
        };
        matched.sort_by(|(l1, r1), (l2, r2)| {
            (delta(l1, r1).abs(), l1.distance_cm, r1.distance_cm, &l1.annotation_id, &r1.annotation_id)
                .cmp(&(delta(l2, r2).abs(), l2.distance_cm, r2.distance_cm, &l2.annotation_id, &r2.annotation_id))
        });
        out.extend(matched.into_iter().map(|(l, r)| AnomalyMatch {
            left: Some(anomaly_ref(left, l)),
            right: Some(anomaly_ref(right, r)),
            delta_distance_cm: Some(delta(l, r)),
            status: MatchStatus::Matched,
        }));
        out.extend(left_rest.into_iter().map(only_left));
        out.extend(right_rest.into_iter().map(only_right));
    }
    out.extend(unlocated.0.into_iter().map(only_left));
    out.extend(unlocated.1.into_iter().map(only_right));
    Ok(out)
}

/// Candidate pairing built up by [`optimal_pairs`].
#[derive(Clone, Default)]
struct Plan {
    pairs: Vec<(usize, usize)>,
    cost: i64,
    /// Sorted (l + r, |l - r|) of each pair; a side-independent tie-break.
    shape: Vec<(i64, i64)>,
}

impl Plan {
    fn better_than(&self, other: &Plan) -> bool {
        (std::cmp::Reverse(self.pairs.len()), self.cost, &self.shape)
            < (std::cmp::Reverse(other.pairs.len()), other.cost, &other.shape)
    }

    fn with(&self, i: usize, j: usize, l: i64, r: i64) -> Plan {
        let mut next = self.clone();
        next.pairs.push((i, j));
        next.cost += (l - r).abs();
        let key = (l + r, (l - r).abs());
        let at = next.shape.partition_point(|k| *k <= key);
        next.shape.insert(at, key);
        next
    }
}

/// Maximum-cardinality, minimum-total-|delta| pairing of two ascending
/// value lists under `threshold`.
///
/// On a line some optimal pairing never crosses (swapping a crossed pair
/// keeps both within threshold and does not raise the cost), so a dynamic
/// program over prefixes is exact. Returns index pairs into the inputs.
fn optimal_pairs(left: &[i64], right: &[i64], threshold: i64) -> Vec<(usize, usize)> {
    let (n, m) = (left.len(), right.len());
    let mut table: Vec<Vec<Plan>> = vec![vec![Plan::default(); m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            // skipping is preferred on ties so equal values pair in id order
            let mut best = table[i - 1][j].clone();
            if table[i][j - 1].better_than(&best) {
                best = table[i][j - 1].clone();
            }
            let (l, r) = (left[i - 1], right[j - 1]);
            if (l - r).abs() <= threshold {
                let candidate = table[i - 1][j - 1].with(i - 1, j - 1, l, r);
                if candidate.better_than(&best) {
                    best = candidate;
                }
            }
            table[i][j] = best;
        }
    }
    let mut pairs = std::mem::take(&mut table[n][m].pairs);
    pairs.sort_unstable();
    pairs
}
