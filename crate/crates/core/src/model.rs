//! Domain types for a single annotated colonoscopy procedure.
//!
//! A [`Timeline`] binds a video to two kinds of marks:
//!
//! * [`Annotation`]s: half-open frame intervals carrying one of the nine
//!   [`Label`]s. Colon segments live on layer 0 and must not overlap each
//!   other; anomalies (polyp, IBD, blood clot) sit on layers 1 to 3 and may
//!   overlap anything.
//! * [`Tag`]s: single-frame events holding a distance-from-anus reading,
//!   findings text, impressions text, or any combination of them.
//!
//! Values here are plain data. Mutation goes through [`crate::ops`], and the
//! invariants that span the whole timeline are checked by
//! [`crate::validate::validate_timeline`].

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Distances read off the endoscope shaft come in steps of this many cm.
pub const DISTANCE_STEP_CM: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown label code {0:?}")]
    UnknownLabelCode(String),
    #[error("interval [{start}, {end}) is empty")]
    EmptyInterval { start: u64, end: u64 },
    #[error("frame count must be at least 1")]
    NoFrames,
    #[error("invalid frame rate {0:?}")]
    InvalidFps(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    Segment,
    Anomaly,
}

/// One of the nine annotation labels.
///
/// Segments are listed in anatomical order from the anus inwards, so the
/// derived `Ord` matches `anatomical_index` for segment labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Rectum,
    Sigmoid,
    Descending,
    Transverse,
    Ascending,
    Cecum,
    Polyp,
    Ibd,
    BloodClot,
}

impl Label {
    pub const ALL: [Label; 9] = [
        Label::Rectum,
        Label::Sigmoid,
        Label::Descending,
        Label::Transverse,
        Label::Ascending,
        Label::Cecum,
        Label::Polyp,
        Label::Ibd,
        Label::BloodClot,
    ];

    /// Segment labels in anatomical order (R, S, D, T, A, C).
    pub const SEGMENTS: [Label; 6] = [
        Label::Rectum,
        Label::Sigmoid,
        Label::Descending,
        Label::Transverse,
        Label::Ascending,
        Label::Cecum,
    ];

    pub const ANOMALIES: [Label; 3] = [Label::Polyp, Label::Ibd, Label::BloodClot];

    pub fn from_code(code: char) -> Result<Label, ModelError> {
        Ok(match code {
            'R' => Label::Rectum,
            'S' => Label::Sigmoid,
            'D' => Label::Descending,
            'T' => Label::Transverse,
            'A' => Label::Ascending,
            'C' => Label::Cecum,
            'P' => Label::Polyp,
            'I' => Label::Ibd,
            'B' => Label::BloodClot,
            other => return Err(ModelError::UnknownLabelCode(other.to_string())),
        })
    }

    pub fn code(self) -> char {
        match self {
            Label::Rectum => 'R',
            Label::Sigmoid => 'S',
            Label::Descending => 'D',
            Label::Transverse => 'T',
            Label::Ascending => 'A',
            Label::Cecum => 'C',
            Label::Polyp => 'P',
            Label::Ibd => 'I',
            Label::BloodClot => 'B',
        }
    }

    pub fn kind(self) -> LabelKind {
        match self {
            Label::Polyp | Label::Ibd | Label::BloodClot => LabelKind::Anomaly,
            _ => LabelKind::Segment,
        }
    }

    pub fn is_segment(self) -> bool {
        self.kind() == LabelKind::Segment
    }

    /// Timeline row: 0 for every segment, then P=1, I=2, B=3.
    pub fn layer(self) -> u8 {
        match self {
            Label::Polyp => 1,
            Label::Ibd => 2,
            Label::BloodClot => 3,
            _ => 0,
        }
    }

    /// Position along the colon for segment labels, R=0 through C=5.
    pub fn anatomical_index(self) -> Option<u8> {
        match self {
            Label::Rectum => Some(0),
            Label::Sigmoid => Some(1),
            Label::Descending => Some(2),
            Label::Transverse => Some(3),
            Label::Ascending => Some(4),
            Label::Cecum => Some(5),
            _ => None,
        }
    }

    /// Lower-case name used in transcripts and tag text.
    pub fn name(self) -> &'static str {
        match self {
            Label::Rectum => "rectum",
            Label::Sigmoid => "sigmoid",
            Label::Descending => "descending",
            Label::Transverse => "transverse",
            Label::Ascending => "ascending",
            Label::Cecum => "cecum",
            Label::Polyp => "polyp",
            Label::Ibd => "IBD",
            Label::BloodClot => "blood clot",
        }
    }

    /// Capitalised name used in rendered documents.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::Rectum => "Rectum",
            Label::Sigmoid => "Sigmoid",
            Label::Descending => "Descending",
            Label::Transverse => "Transverse",
            Label::Ascending => "Ascending",
            Label::Cecum => "Cecum",
            Label::Polyp => "Polyp",
            Label::Ibd => "IBD",
            Label::BloodClot => "Blood clot",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for Label {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Label::from_code(c),
            _ => Err(ModelError::UnknownLabelCode(s.to_string())),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut buf = [0u8; 4];
        serializer.serialize_str(self.code().encode_utf8(&mut buf))
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open frame range `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct Interval {
    start_frame: u64,
    end_frame: u64,
}

#[derive(Deserialize)]
struct RawInterval {
    start_frame: u64,
    end_frame: u64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = ModelError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        Interval::new(raw.start_frame, raw.end_frame)
    }
}

impl Interval {
    pub fn new(start_frame: u64, end_frame: u64) -> Result<Interval, ModelError> {
        if start_frame >= end_frame {
            return Err(ModelError::EmptyInterval {
                start: start_frame,
                end: end_frame,
            });
        }
        Ok(Interval {
            start_frame,
            end_frame,
        })
    }

    /// Builds an interval from a press/release drag, in either direction.
    pub fn from_gesture(press_frame: u64, release_frame: u64) -> Result<Interval, ModelError> {
        Interval::new(
            press_frame.min(release_frame),
            press_frame.max(release_frame),
        )
    }

    pub fn start_frame(&self) -> u64 {
        self.start_frame
    }

    pub fn end_frame(&self) -> u64 {
        self.end_frame
    }

    pub fn frame_len(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn contains(&self, frame: u64) -> bool {
        self.start_frame <= frame && frame < self.end_frame
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start_frame < other.end_frame && other.start_frame < self.end_frame
    }

    /// Number of frames shared with `other`.
    pub fn overlap_len(&self, other: &Interval) -> u64 {
        let start = self.start_frame.max(other.start_frame);
        let end = self.end_frame.min(other.end_frame);
        end.saturating_sub(start)
    }

    /// Frames between `frame` and the nearest frame inside the interval.
    pub fn gap_to(&self, frame: u64) -> u64 {
        if frame < self.start_frame {
            self.start_frame - frame
        } else if frame >= self.end_frame {
            frame - (self.end_frame - 1)
        } else {
            0
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start_frame, self.end_frame)
    }
}

/// Frames per second as an exact positive ratio (e.g. 30000/1001).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fps(Ratio<u64>);

impl Fps {
    pub fn new(numer: u64, denom: u64) -> Result<Fps, ModelError> {
        if numer == 0 || denom == 0 {
            return Err(ModelError::InvalidFps(format!("{numer}/{denom}")));
        }
        Ok(Fps(Ratio::new(numer, denom)))
    }

    pub fn integer(fps: u64) -> Result<Fps, ModelError> {
        Fps::new(fps, 1)
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Fps {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidFps(s.to_string());
        match s.split_once('/') {
            Some((n, d)) => Fps::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => Fps::integer(s.trim().parse().map_err(|_| bad())?),
        }
    }
}

// Integral rates serialize as JSON integers, fractional ones as "num/den".
impl Serialize for Fps {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if *self.0.denom() == 1 {
            serializer.serialize_u64(*self.0.numer())
        } else {
            serializer.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(n) => Fps::integer(n),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVideoMeta")]
pub struct VideoMeta {
    pub video_id: String,
    frame_count: u64,
    pub fps: Fps,
    #[serde(default)]
    pub source_uri: Option<String>,
}

#[derive(Deserialize)]
struct RawVideoMeta {
    video_id: String,
    frame_count: u64,
    fps: Fps,
    #[serde(default)]
    source_uri: Option<String>,
}

impl TryFrom<RawVideoMeta> for VideoMeta {
    type Error = ModelError;

    fn try_from(raw: RawVideoMeta) -> Result<Self, Self::Error> {
        let mut meta = VideoMeta::new(raw.video_id, raw.frame_count, raw.fps)?;
        meta.source_uri = raw.source_uri;
        Ok(meta)
    }
}

impl VideoMeta {
    pub fn new(video_id: impl Into<String>, frame_count: u64, fps: Fps) -> Result<Self, ModelError> {
        if frame_count == 0 {
            return Err(ModelError::NoFrames);
        }
        Ok(VideoMeta {
            video_id: video_id.into(),
            frame_count,
            fps,
            source_uri: None,
        })
    }

    pub fn with_source_uri(mut self, uri: impl Into<String>) -> Self {
        self.source_uri = Some(uri.into());
        self
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    /// Exact duration in seconds.
    pub fn duration(&self) -> Ratio<u64> {
        self.frames_to_seconds(self.frame_count)
    }

    pub fn duration_seconds(&self) -> f64 {
        ratio_to_f64(self.duration())
    }

    pub fn frames_to_seconds(&self, frames: u64) -> Ratio<u64> {
        Ratio::from_integer(frames) / self.fps.ratio()
    }
}

pub(crate) fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

id_type!(AnnotationId);
id_type!(TagId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: AnnotationId,
    pub interval: Interval,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Annotation {
    pub fn layer(&self) -> u8 {
        self.label.layer()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TagOrigin {
    Manual,
    Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TagClass {
    /// Distance only: drawn as a tick on the timeline.
    DistanceMark,
    /// Carries findings and/or impressions text.
    FullTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub tag_id: TagId,
    pub frame: u64,
    #[serde(default)]
    pub distance_cm: Option<u32>,
    #[serde(default)]
    pub findings: Option<String>,
    #[serde(default)]
    pub impressions: Option<String>,
    pub origin: TagOrigin,
}

impl Tag {
    pub fn classify(&self) -> TagClass {
        classify_payload(
            self.distance_cm.is_some(),
            self.findings.is_some(),
            self.impressions.is_some(),
        )
    }

    pub fn is_full_tag(&self) -> bool {
        self.classify() == TagClass::FullTag
    }

    pub fn is_empty(&self) -> bool {
        self.distance_cm.is_none() && self.findings.is_none() && self.impressions.is_none()
    }
}

/// A tag is a distance mark only when distance is its sole payload.
pub fn classify_payload(has_distance: bool, has_findings: bool, has_impressions: bool) -> TagClass {
    if has_distance && !has_findings && !has_impressions {
        TagClass::DistanceMark
    } else {
        TagClass::FullTag
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub procedure_id: String,
    pub video: VideoMeta,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
    #[serde(default)]
    pub tags: Vec<Tag>,
    #[serde(default)]
    pub patient_ref: Option<String>,
    #[serde(default)]
    pub procedure_date: Option<NaiveDate>,
}

impl Timeline {
    pub fn new(procedure_id: impl Into<String>, video: VideoMeta) -> Timeline {
        Timeline {
            procedure_id: procedure_id.into(),
            video,
            annotations: Vec::new(),
            tags: Vec::new(),
            patient_ref: None,
            procedure_date: None,
        }
    }

    pub fn frame_count(&self) -> u64 {
        self.video.frame_count()
    }

    pub fn annotation(&self, id: &AnnotationId) -> Option<&Annotation> {
        self.annotations.iter().find(|a| &a.annotation_id == id)
    }

    pub fn tag(&self, id: &TagId) -> Option<&Tag> {
        self.tags.iter().find(|t| &t.tag_id == id)
    }

    pub fn segments(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(|a| a.label.is_segment())
    }

    pub fn anomalies(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(|a| !a.label.is_segment())
    }

    /// Earliest cecum interval by start frame; it governs the phase split.
    pub fn first_cecum(&self) -> Option<&Annotation> {
        self.annotations
            .iter()
            .filter(|a| a.label == Label::Cecum)
            .min_by_key(|a| (a.interval, &a.annotation_id))
    }

    /// Tags ordered by frame, then id.
    pub fn tags_in_order(&self) -> Vec<&Tag> {
        let mut tags: Vec<&Tag> = self.tags.iter().collect();
        tags.sort_by(|a, b| (a.frame, &a.tag_id).cmp(&(b.frame, &b.tag_id)));
        tags
    }

    pub(crate) fn next_annotation_id(&self) -> AnnotationId {
        AnnotationId(format!(
            "a{}",
            next_seq(self.annotations.iter().map(|a| a.annotation_id.as_str()), 'a')
        ))
    }

    pub(crate) fn next_tag_id(&self) -> TagId {
        TagId(format!(
            "t{}",
            next_seq(self.tags.iter().map(|t| t.tag_id.as_str()), 't')
        ))
    }
}

// Ids are `<prefix><n>` with n one past the largest in use, so removing the
// newest annotation restores the previous timeline exactly.
fn next_seq<'a>(ids: impl Iterator<Item = &'a str>, prefix: char) -> u64 {
    ids.filter_map(|id| id.strip_prefix(prefix)?.parse::<u64>().ok())
        .max()
        .map_or(1, |n| n + 1)
}
