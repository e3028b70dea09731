//! Timeline mutators and derived views.
//!
//! Every mutator takes the timeline by reference and returns a new value;
//! the input is never modified. Mutators refuse any change that would
//! introduce an Error-level diagnostic, so a timeline built only through
//! them always validates clean of errors.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    ratio_to_f64, Annotation, AnnotationId, Interval, Label, Tag, TagId, TagOrigin, Timeline,
    DISTANCE_STEP_CM,
};
use crate::validate::{errors_only, validate_timeline, Diagnostic};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("{what} is outside the video's {frame_count} frames")]
    OutOfBounds { what: String, frame_count: u64 },
    #[error("segment {label} {interval} overlaps existing segment {existing}")]
    SegmentOverlap {
        label: Label,
        interval: Interval,
        existing: AnnotationId,
    },
    #[error("tag needs a distance, findings or impressions")]
    EmptyTag,
    #[error("distance {0} cm is not a multiple of 5 cm")]
    BadDistanceGranularity(u32),
    #[error("unknown annotation {0}")]
    UnknownAnnotation(AnnotationId),
    #[error("timeline has {} error diagnostic(s)", .0.len())]
    InvalidTimeline(Vec<Diagnostic>),
}

/// Fails with `InvalidTimeline` carrying the Error diagnostics, if any.
pub fn ensure_valid(timeline: &Timeline) -> Result<(), TimelineError> {
    let errors = errors_only(validate_timeline(timeline));
    if errors.is_empty() {
        Ok(())
    } else {
        Err(TimelineError::InvalidTimeline(errors))
    }
}

pub fn add_annotation(
    timeline: &Timeline,
    interval: Interval,
    label: Label,
) -> Result<(Timeline, AnnotationId), TimelineError> {
    add_annotation_with_note(timeline, interval, label, None)
}

pub fn add_annotation_with_note(
    timeline: &Timeline,
    interval: Interval,
    label: Label,
    note: Option<String>,
) -> Result<(Timeline, AnnotationId), TimelineError> {
    if interval.end_frame() > timeline.frame_count() {
        return Err(TimelineError::OutOfBounds {
            what: format!("interval {interval}"),
            frame_count: timeline.frame_count(),
        });
    }
    if label.is_segment() {
        if let Some(existing) = timeline
            .segments()
            .filter(|a| a.interval.overlaps(&interval))
            .min_by_key(|a| a.interval)
        {
            return Err(TimelineError::SegmentOverlap {
                label,
                interval,
                existing: existing.annotation_id.clone(),
            });
        }
    }
    let id = timeline.next_annotation_id();
    let mut next = timeline.clone();
    next.annotations.push(Annotation {
        annotation_id: id.clone(),
        interval,
        label,
        note,
    });
    Ok((next, id))
}

pub fn remove_annotation(timeline: &Timeline, id: &AnnotationId) -> Result<Timeline, TimelineError> {
    let pos = timeline
        .annotations
        .iter()
        .position(|a| &a.annotation_id == id)
        .ok_or_else(|| TimelineError::UnknownAnnotation(id.clone()))?;
    let mut next = timeline.clone();
    next.annotations.remove(pos);
    Ok(next)
}

/// Payload for [`add_tag`]. Blank strings count as absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagInput {
    #[serde(default)]
    pub distance_cm: Option<u32>,
    #[serde(default)]
    pub findings: Option<String>,
    #[serde(default)]
    pub impressions: Option<String>,
}

impl TagInput {
    pub fn distance(cm: u32) -> Self {
        TagInput {
            distance_cm: Some(cm),
            ..TagInput::default()
        }
    }

    pub fn findings(text: impl Into<String>) -> Self {
        TagInput {
            findings: Some(text.into()),
            ..TagInput::default()
        }
    }
}

fn non_blank(text: Option<String>) -> Option<String> {
    text.filter(|s| !s.trim().is_empty())
}

pub fn add_tag(
    timeline: &Timeline,
    frame: u64,
    input: TagInput,
    origin: TagOrigin,
) -> Result<(Timeline, TagId), TimelineError> {
    if frame >= timeline.frame_count() {
        return Err(TimelineError::OutOfBounds {
            what: format!("tag frame {frame}"),
            frame_count: timeline.frame_count(),
        });
    }
    let findings = non_blank(input.findings);
    let impressions = non_blank(input.impressions);
    if input.distance_cm.is_none() && findings.is_none() && impressions.is_none() {
        return Err(TimelineError::EmptyTag);
    }
    if let Some(d) = input.distance_cm {
        if d % DISTANCE_STEP_CM != 0 {
            return Err(TimelineError::BadDistanceGranularity(d));
        }
    }
    let id = timeline.next_tag_id();
    let mut next = timeline.clone();
    next.tags.push(Tag {
        tag_id: id.clone(),
        frame,
        distance_cm: input.distance_cm,
        findings,
        impressions,
        origin,
    });
    Ok((next, id))
}

/// Insertion, cecum dwell and withdrawal durations in seconds.
///
/// All three are `None` when the procedure has no cecum annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub insertion_s: Option<f64>,
    pub withdrawal_s: Option<f64>,
    pub cecum_dwell_s: Option<f64>,
    pub complete: bool,
}

impl PhaseTimes {
    pub fn incomplete() -> Self {
        PhaseTimes {
            insertion_s: None,
            withdrawal_s: None,
            cecum_dwell_s: None,
            complete: false,
        }
    }

    /// Insertion took at least as long as withdrawal.
    pub fn is_slow_insertion(&self) -> bool {
        match (self.insertion_s, self.withdrawal_s) {
            (Some(i), Some(w)) => self.complete && i >= w,
            _ => false,
        }
    }
}

/// Exact phase durations, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactPhaseTimes {
    pub insertion: Ratio<u64>,
    pub cecum_dwell: Ratio<u64>,
    pub withdrawal: Ratio<u64>,
}

pub fn exact_phase_times(timeline: &Timeline) -> Option<ExactPhaseTimes> {
    let cecum = timeline.first_cecum()?;
    let video = &timeline.video;
    let (start, end) = (cecum.interval.start_frame(), cecum.interval.end_frame());
    // Clamp so an out-of-bounds cecum on an unvalidated timeline cannot underflow.
    let end = end.min(video.frame_count());
    let start = start.min(end);
    Some(ExactPhaseTimes {
        insertion: video.frames_to_seconds(start),
        cecum_dwell: video.frames_to_seconds(end - start),
        withdrawal: video.frames_to_seconds(video.frame_count() - end),
    })
}

/// Insertion runs from frame 0 to the start of the earliest cecum interval,
/// withdrawal from its end to the last frame.
pub fn compute_phase_times(timeline: &Timeline) -> PhaseTimes {
    match exact_phase_times(timeline) {
        None => PhaseTimes::incomplete(),
        Some(exact) => PhaseTimes {
            insertion_s: Some(ratio_to_f64(exact.insertion)),
            withdrawal_s: Some(ratio_to_f64(exact.withdrawal)),
            cecum_dwell_s: Some(ratio_to_f64(exact.cecum_dwell)),
            complete: true,
        },
    }
}

pub fn segment_at(timeline: &Timeline, frame: u64) -> Result<Option<Label>, TimelineError> {
    if frame >= timeline.frame_count() {
        return Err(TimelineError::OutOfBounds {
            what: format!("frame {frame}"),
            frame_count: timeline.frame_count(),
        });
    }
    Ok(segment_containing(timeline, frame))
}

pub(crate) fn segment_containing(timeline: &Timeline, frame: u64) -> Option<Label> {
    timeline
        .segments()
        .filter(|a| a.interval.contains(frame))
        .min_by_key(|a| (a.interval, &a.annotation_id))
        .map(|a| a.label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub interval: Interval,
    pub label: Label,
    pub annotation_id: AnnotationId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutRow {
    pub layer: u8,
    pub entries: Vec<LayoutEntry>,
}

pub const LAYER_COUNT: usize = 4;

/// Four rows, one per layer, each sorted by start frame.
pub fn hierarchy_layout(timeline: &Timeline) -> Result<Vec<LayoutRow>, TimelineError> {
    ensure_valid(timeline)?;
    let mut rows: Vec<LayoutRow> = (0..LAYER_COUNT as u8)
        .map(|layer| LayoutRow {
            layer,
            entries: Vec::new(),
        })
        .collect();
    for a in &timeline.annotations {
        rows[a.layer() as usize].entries.push(LayoutEntry {
            interval: a.interval,
            label: a.label,
            annotation_id: a.annotation_id.clone(),
        });
    }
    for row in &mut rows {
        row.entries
            .sort_by(|a, b| (a.interval, &a.annotation_id).cmp(&(b.interval, &b.annotation_id)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fps, TagClass, VideoMeta};
    use proptest::prelude::*;

    fn timeline(frames: u64, fps: u64) -> Timeline {
        Timeline::new(
            "p",
            VideoMeta::new("v", frames, Fps::integer(fps).unwrap()).unwrap(),
        )
    }

    fn iv(s: u64, e: u64) -> Interval {
        Interval::new(s, e).unwrap()
    }

    fn label(c: char) -> Label {
        Label::from_code(c).unwrap()
    }

    #[test]
    fn add_cecum_to_empty_timeline() {
        let t = timeline(27000, 15);
        let (t2, id) = add_annotation(&t, iv(9000, 10500), label('C')).unwrap();
        assert_eq!(t2.annotations.len(), 1);
        assert_eq!(t2.annotation(&id).unwrap().layer(), 0);
        assert!(t.annotations.is_empty());
    }

    #[test]
    fn overlapping_segment_is_rejected() {
        let t = timeline(1000, 15);
        let (t, first) = add_annotation(&t, iv(100, 200), label('T')).unwrap();
        let err = add_annotation(&t, iv(150, 300), label('A')).unwrap_err();
        assert_eq!(
            err,
            TimelineError::SegmentOverlap {
                label: label('A'),
                interval: iv(150, 300),
                existing: first
            }
        );
        // adjacency is fine
        assert!(add_annotation(&t, iv(200, 300), label('A')).is_ok());
    }

    #[test]
    fn polyp_inside_segment_is_accepted() {
        let t = timeline(1000, 15);
        let (t, _) = add_annotation(&t, iv(100, 200), label('T')).unwrap();
        let (t, id) = add_annotation(&t, iv(150, 160), label('P')).unwrap();
        assert_eq!(t.annotation(&id).unwrap().layer(), 1);
    }

    #[test]
    fn out_of_bounds_annotation() {
        let t = timeline(1000, 15);
        assert!(matches!(
            add_annotation(&t, iv(900, 1001), label('R')),
            Err(TimelineError::OutOfBounds { .. })
        ));
        assert!(add_annotation(&t, iv(900, 1000), label('R')).is_ok());
    }

    #[test]
    fn remove_round_trips() {
        let t = timeline(1000, 15);
        let (with, id) = add_annotation(&t, iv(10, 20), label('P')).unwrap();
        let back = remove_annotation(&with, &id).unwrap();
        assert_eq!(back, t);
        assert!(back.annotations.is_empty());
        assert_eq!(
            remove_annotation(&t, &"a9".into()),
            Err(TimelineError::UnknownAnnotation("a9".into()))
        );
    }

    #[test]
    fn tag_rules() {
        let t = timeline(27000, 15);
        let (t1, id) = add_tag(&t, 4000, TagInput::distance(45), TagOrigin::Manual).unwrap();
        assert_eq!(t1.tag(&id).unwrap().classify(), TagClass::DistanceMark);

        let input = TagInput {
            distance_cm: Some(45),
            findings: Some("sessile polyp".into()),
            impressions: None,
        };
        let (t2, id) = add_tag(&t, 4000, input, TagOrigin::Manual).unwrap();
        assert_eq!(t2.tag(&id).unwrap().classify(), TagClass::FullTag);

        assert_eq!(
            add_tag(&t, 4000, TagInput::distance(47), TagOrigin::Manual),
            Err(TimelineError::BadDistanceGranularity(47))
        );
        assert_eq!(
            add_tag(&t, 4000, TagInput::default(), TagOrigin::Manual),
            Err(TimelineError::EmptyTag)
        );
        let blank = TagInput {
            findings: Some("   ".into()),
            ..TagInput::default()
        };
        assert_eq!(
            add_tag(&t, 4000, blank, TagOrigin::Manual),
            Err(TimelineError::EmptyTag)
        );
        assert!(matches!(
            add_tag(&t, 27000, TagInput::distance(45), TagOrigin::Manual),
            Err(TimelineError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn phase_times_hand_computed() {
        // 9000/15, 1500/15, 16500/15
        let t = timeline(27000, 15);
        let (t, _) = add_annotation(&t, iv(9000, 10500), label('C')).unwrap();
        let p = compute_phase_times(&t);
        assert!(p.complete);
        assert_eq!(p.insertion_s, Some(600.0));
        assert_eq!(p.cecum_dwell_s, Some(100.0));
        assert_eq!(p.withdrawal_s, Some(1100.0));
    }

    #[test]
    fn phase_times_incomplete_and_full_cecum() {
        let t = timeline(300, 30);
        assert_eq!(compute_phase_times(&t), PhaseTimes::incomplete());
        let (t, _) = add_annotation(&t, iv(0, 300), label('C')).unwrap();
        let p = compute_phase_times(&t);
        assert_eq!(
            (p.insertion_s, p.cecum_dwell_s, p.withdrawal_s),
            (Some(0.0), Some(10.0), Some(0.0))
        );
    }

    #[test]
    fn earliest_cecum_governs() {
        let t = timeline(3000, 30);
        let (t, _) = add_annotation(&t, iv(2000, 2100), label('C')).unwrap();
        let (t, _) = add_annotation(&t, iv(900, 1200), label('C')).unwrap();
        let p = compute_phase_times(&t);
        assert_eq!(p.insertion_s, Some(30.0));
        assert_eq!(p.cecum_dwell_s, Some(10.0));
    }

    #[test]
    fn segment_lookup() {
        let t = timeline(1000, 15);
        let (t, _) = add_annotation(&t, iv(100, 200), label('T')).unwrap();
        assert_eq!(segment_at(&t, 150).unwrap(), Some(label('T')));
        assert_eq!(segment_at(&t, 250).unwrap(), None);
        let (t, _) = add_annotation(&t, iv(0, 100), label('D')).unwrap();
        assert_eq!(segment_at(&t, 100).unwrap(), Some(label('T')));
        assert_eq!(segment_at(&t, 99).unwrap(), Some(label('D')));
        assert!(segment_at(&t, 1000).is_err());
    }

    #[test]
    fn empty_layout_has_four_rows() {
        let rows = hierarchy_layout(&timeline(10, 1)).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.entries.is_empty()));
        assert_eq!(rows.iter().map(|r| r.layer).collect::<Vec<_>>(), [0, 1, 2, 3]);
    }

    #[test]
    fn layout_rejects_invalid_timeline() {
        let mut t = timeline(1000, 15);
        for (code, s, e) in [('T', 100, 200), ('A', 150, 300)] {
            t.annotations.push(Annotation {
                annotation_id: t.next_annotation_id(),
                interval: iv(s, e),
                label: label(code),
                note: None,
            });
        }
        assert!(matches!(
            hierarchy_layout(&t),
            Err(TimelineError::InvalidTimeline(_))
        ));
    }

    #[test]
    fn layout_sorts_rows() {
        let t = timeline(1000, 15);
        let (t, _) = add_annotation(&t, iv(500, 600), label('A')).unwrap();
        let (t, _) = add_annotation(&t, iv(0, 100), label('R')).unwrap();
        let (t, _) = add_annotation(&t, iv(550, 560), label('B')).unwrap();
        let rows = hierarchy_layout(&t).unwrap();
        let starts: Vec<u64> = rows[0].entries.iter().map(|e| e.interval.start_frame()).collect();
        assert_eq!(starts, vec![0, 500]);
        assert_eq!(rows[3].entries.len(), 1);
    }

    proptest! {
        #[test]
        fn phase_time_conservation(
            frames in 1u64..500_000,
            fps_num in 1u64..120_000,
            fps_den in 1u64..1002,
            a in 0u64..500_000,
            b in 0u64..500_000,
        ) {
            let video = VideoMeta::new("v", frames, Fps::new(fps_num, fps_den).unwrap()).unwrap();
            let (s, e) = ((a % frames).min(b % frames), (a % frames).max(b % frames) + 1);
            let t = Timeline::new("p", video);
            let (t, _) = add_annotation(&t, iv(s, e), label('C')).unwrap();
            let exact = exact_phase_times(&t).unwrap();
            prop_assert_eq!(exact.insertion + exact.cecum_dwell + exact.withdrawal, t.video.duration());
            let p = compute_phase_times(&t);
            let sum = p.insertion_s.unwrap() + p.cecum_dwell_s.unwrap() + p.withdrawal_s.unwrap();
            prop_assert!((sum - t.video.duration_seconds()).abs() <= 1e-9 * t.video.duration_seconds().max(1.0));
        }

        #[test]
        fn tag_presence_combinations(mask in 1u8..8) {
            let input = TagInput {
                distance_cm: (mask & 1 != 0).then_some(40),
                findings: (mask & 2 != 0).then(|| "ulcer".to_string()),
                impressions: (mask & 4 != 0).then(|| "mild".to_string()),
            };
            let expect_mark = mask == 1;
            let (t, id) = add_tag(&timeline(100, 1), 3, input, TagOrigin::Manual).unwrap();
            prop_assert_eq!(t.tag(&id).unwrap().classify() == TagClass::DistanceMark, expect_mark);
        }
    }
}
