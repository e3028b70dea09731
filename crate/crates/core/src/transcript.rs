//! Timestamped say-out-loud transcripts.
//!
//! Input is UTF-8 text with one `<seconds>\t<utterance>` record per line;
//! `#` starts a comment line and blank lines are skipped. Each utterance is
//! scanned left to right by a small keyword grammar:
//!
//! | rule | matches | event |
//! |------|---------|-------|
//! | G1 | number (digits or words up to three hundred) + `cm`/`centimeter(s)` | `DistanceCall` |
//! | G2 | rectum, sigmoid, descending, transverse, ascending, cecum | `SegmentCall` |
//! | G3 | polyp; ibd, inflammation, crohn; bleeding, blood clot, blood | `AnomalyCall` |
//! | G4 | splenic flexure, hepatic flexure, ileocecal valve, appendiceal orifice | `LandmarkCall` |
//!
//! Words no rule consumes are kept; three or more of them become a single
//! `FreeFinding`. Every event becomes one transcript-origin tag when applied.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Label, TagId, TagOrigin, Timeline, DISTANCE_STEP_CM};
use crate::ops::{add_tag, TagInput, TimelineError};
use crate::validate::{Diagnostic, DiagnosticCode, Subject};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub time_s: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("line {line_number}: {reason}")]
pub struct MalformedLine {
    pub line_number: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedTranscript {
    pub lines: Vec<TranscriptLine>,
    pub errors: Vec<MalformedLine>,
}

pub fn parse_transcript(raw: &str) -> ParsedTranscript {
    let mut parsed = ParsedTranscript::default();
    for (idx, line) in raw.lines().enumerate() {
        let line_number = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_record(line) {
            Ok(record) => parsed.lines.push(record),
            Err(reason) => parsed.errors.push(MalformedLine {
                line_number,
                reason: reason.to_string(),
            }),
        }
    }
    // stable sort keeps file order for equal timestamps
    parsed.lines.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    parsed
}

fn parse_record(line: &str) -> Result<TranscriptLine, &'static str> {
    let (stamp, text) = line
        .split_once('\t')
        .ok_or("expected <seconds><TAB><utterance>")?;
    let time_s = parse_seconds(stamp.trim()).ok_or("timestamp is not a non-negative decimal")?;
    let text = text.trim();
    if text.is_empty() {
        return Err("utterance is empty");
    }
    Ok(TranscriptLine {
        time_s,
        text: text.to_string(),
    })
}

fn parse_seconds(s: &str) -> Option<f64> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    let ok = match frac {
        None => digits(int),
        Some(f) => (digits(int) && (f.is_empty() || digits(f))) || (int.is_empty() && digits(f)),
    };
    if !ok {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Landmark {
    SplenicFlexure,
    HepaticFlexure,
    IleocecalValve,
    AppendicealOrifice,
}

impl Landmark {
    pub const ALL: [Landmark; 4] = [
        Landmark::SplenicFlexure,
        Landmark::HepaticFlexure,
        Landmark::IleocecalValve,
        Landmark::AppendicealOrifice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Landmark::SplenicFlexure => "splenic flexure",
            Landmark::HepaticFlexure => "hepatic flexure",
            Landmark::IleocecalValve => "ileocecal valve",
            Landmark::AppendicealOrifice => "appendiceal orifice",
        }
    }

    fn words(self) -> (&'static str, &'static str) {
        match self {
            Landmark::SplenicFlexure => ("splenic", "flexure"),
            Landmark::HepaticFlexure => ("hepatic", "flexure"),
            Landmark::IleocecalValve => ("ileocecal", "valve"),
            Landmark::AppendicealOrifice => ("appendiceal", "orifice"),
        }
    }
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum Utterance {
    DistanceCall(u32),
    SegmentCall(Label),
    AnomalyCall(Label),
    LandmarkCall(Landmark),
    FreeFinding(String),
}

impl Utterance {
    /// Findings text of the tag this call produces; `None` for distances.
    pub fn findings_text(&self) -> Option<String> {
        match self {
            Utterance::DistanceCall(_) => None,
            Utterance::SegmentCall(label) => Some(format!("segment: {}", label.name())),
            Utterance::AnomalyCall(label) => Some(label.name().to_string()),
            Utterance::LandmarkCall(landmark) => Some(landmark.name().to_string()),
            Utterance::FreeFinding(text) => Some(text.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEvent {
    pub at_s: f64,
    pub payload: Utterance,
}

struct Word<'a> {
    original: &'a str,
    norm: String,
}

/// Splits on whitespace and hyphens, and separates a digit run glued to a
/// unit ("105cm").
fn tokenize(text: &str) -> Vec<Word<'_>> {
    let mut words = Vec::new();
    for raw in text.split(|c: char| c.is_whitespace() || c == '-') {
        let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if trimmed.is_empty() {
            continue;
        }
        let digit_end = trimmed
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(trimmed.len());
        let parts: Vec<&str> = if digit_end > 0 && digit_end < trimmed.len() {
            vec![&trimmed[..digit_end], &trimmed[digit_end..]]
        } else {
            vec![trimmed]
        };
        for part in parts {
            let norm: String = part
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect();
            if !norm.is_empty() {
                words.push(Word {
                    original: part,
                    norm,
                });
            }
        }
    }
    words
}

fn is_unit(word: &str) -> bool {
    matches!(word, "cm" | "centimeter" | "centimeters")
}

fn small_number(word: &str) -> Option<u32> {
    Some(match word {
        "zero" => 0,
        "one" => 1,
        "two" => 2,
        "three" => 3,
        "four" => 4,
        "five" => 5,
        "six" => 6,
        "seven" => 7,
        "eight" => 8,
        "nine" => 9,
        "ten" => 10,
        "eleven" => 11,
        "twelve" => 12,
        "thirteen" => 13,
        "fourteen" => 14,
        "fifteen" => 15,
        "sixteen" => 16,
        "seventeen" => 17,
        "eighteen" => 18,
        "nineteen" => 19,
        _ => return None,
    })
}

fn tens_number(word: &str) -> Option<u32> {
    Some(match word {
        "twenty" => 20,
        "thirty" => 30,
        "forty" => 40,
        "fifty" => 50,
        "sixty" => 60,
        "seventy" => 70,
        "eighty" => 80,
        "ninety" => 90,
        _ => return None,
    })
}

/// Number words below one hundred: "seven", "forty", "forty five".
fn below_hundred(words: &[Word<'_>]) -> Option<(u32, usize)> {
    let first = &words.first()?.norm;
    if let Some(n) = small_number(first) {
        return Some((n, 1));
    }
    let tens = tens_number(first)?;
    match words.get(1).and_then(|w| small_number(&w.norm)) {
        Some(unit) if (1..=9).contains(&unit) => Some((tens + unit, 2)),
        _ => Some((tens, 1)),
    }
}

/// Longest number-word phrase at the start of `words`.
fn number_words(words: &[Word<'_>]) -> Option<(u32, usize)> {
    let (lead, used) = below_hundred(words)?;
    if (1..=3).contains(&lead) && words.get(used).is_some_and(|w| w.norm == "hundred") {
        let mut total = lead * 100;
        let mut consumed = used + 1;
        let mut rest = consumed;
        if words.get(rest).is_some_and(|w| w.norm == "and") {
            rest += 1;
        }
        if let Some((tail, n)) = below_hundred(&words[rest.min(words.len())..]) {
            if tail > 0 {
                total += tail;
                consumed = rest + n;
            }
        }
        return Some((total, consumed));
    }
    Some((lead, used))
}

/// Largest distance accepted in spoken number words.
const MAX_WORD_NUMBER: u32 = 300;

/// A number at the start of `words`: `Ok` if usable, `Err(consumed)` for a
/// word phrase beyond the supported range.
fn number_at(words: &[Word<'_>]) -> Option<Result<(u32, usize), usize>> {
    let first = &words.first()?.norm;
    if first.bytes().all(|b| b.is_ascii_digit()) {
        return first.parse::<u32>().ok().map(|n| Ok((n, 1)));
    }
    let (value, used) = number_words(words)?;
    Some(if value <= MAX_WORD_NUMBER { Ok((value, used)) } else { Err(used) })
}

fn anomaly_keyword(word: &str) -> Option<Label> {
    match word {
        "polyp" | "polyps" => Some(Label::Polyp),
        "ibd" | "inflammation" | "crohn" | "crohns" => Some(Label::Ibd),
        "bleeding" | "blood" => Some(Label::BloodClot),
        _ => None,
    }
}

fn segment_keyword(word: &str) -> Option<Label> {
    match word {
        "rectum" => Some(Label::Rectum),
        "sigmoid" => Some(Label::Sigmoid),
        "descending" => Some(Label::Descending),
        "transverse" => Some(Label::Transverse),
        "ascending" => Some(Label::Ascending),
        "cecum" => Some(Label::Cecum),
        _ => None,
    }
}

/// Keyword calls in the utterance, in reading order, followed by at most one
/// free finding built from the leftover words.
pub fn interpret_line(line: &TranscriptLine) -> Vec<UtteranceEvent> {
    let words = tokenize(&line.text);
    let mut calls = Vec::new();
    let mut residual: Vec<&str> = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let here = words[i].norm.as_str();
        let next = words.get(i + 1).map(|w| w.norm.as_str());

        if let Some(landmark) = Landmark::ALL.into_iter().find(|l| {
            let (a, b) = l.words();
            here == a && next == Some(b)
        }) {
            calls.push(Utterance::LandmarkCall(landmark));
            i += 2;
            continue;
        }
        if here == "blood" && matches!(next, Some("clot" | "clots")) {
            calls.push(Utterance::AnomalyCall(Label::BloodClot));
            i += 2;
            continue;
        }
        match number_at(&words[i..]) {
            Some(Ok((value, used))) if words.get(i + used).is_some_and(|w| is_unit(&w.norm)) => {
                calls.push(Utterance::DistanceCall(value));
                i += used + 1;
                continue;
            }
            Some(Err(used)) => {
                residual.extend(words[i..i + used].iter().map(|w| w.original));
                i += used;
                continue;
            }
            _ => {}
        }
        if let Some(label) = anomaly_keyword(here) {
            calls.push(Utterance::AnomalyCall(label));
            i += 1;
            continue;
        }
        if let Some(label) = segment_keyword(here) {
            calls.push(Utterance::SegmentCall(label));
            i += if next == Some("colon") { 2 } else { 1 };
            continue;
        }
        residual.push(words[i].original);
        i += 1;
    }
    if residual.len() >= 3 {
        calls.push(Utterance::FreeFinding(residual.join(" ")));
    }
    calls
        .into_iter()
        .map(|payload| UtteranceEvent {
            at_s: line.time_s,
            payload,
        })
        .collect()
}

/// Rounds a spoken distance to the nearest 5 cm mark, halves rounding up.
pub fn snap5(cm: u32) -> u32 {
    let step = u64::from(DISTANCE_STEP_CM);
    ((u64::from(cm) + step / 2) / step * step) as u32
}

/// Frame shown at `at_s`, rounding half up and clamped to the last frame.
pub fn frame_at(timeline: &Timeline, at_s: f64) -> u64 {
    let fps = timeline.video.fps.ratio();
    let exact = at_s * *fps.numer() as f64 / *fps.denom() as f64;
    let frame = (exact + 0.5).floor() as u64;
    frame.min(timeline.frame_count() - 1)
}

/// Adds one transcript-origin tag per event.
///
/// Fails without changing anything if any event lies past the end of the
/// video.
pub fn apply_events(
    timeline: &Timeline,
    events: &[UtteranceEvent],
) -> Result<(Timeline, Vec<Diagnostic>), TimelineError> {
    let duration = timeline.video.duration_seconds();
    if let Some(late) = events
        .iter()
        .find(|e| !(e.at_s >= 0.0 && e.at_s <= duration))
    {
        return Err(TimelineError::OutOfBounds {
            what: format!("utterance at {} s", late.at_s),
            frame_count: timeline.frame_count(),
        });
    }
    let mut current = timeline.clone();
    let mut diagnostics = Vec::new();
    for event in events {
        let frame = frame_at(&current, event.at_s);
        let (input, raw_distance) = match &event.payload {
            Utterance::DistanceCall(cm) => (TagInput::distance(snap5(*cm)), Some(*cm)),
            other => (
                TagInput {
                    findings: other.findings_text(),
                    ..TagInput::default()
                },
                None,
            ),
        };
        let (next, tag_id): (Timeline, TagId) =
            add_tag(&current, frame, input, TagOrigin::Transcript)?;
        if let Some(raw) = raw_distance.filter(|&d| snap5(d) != d) {
            diagnostics.push(Diagnostic::new(
                DiagnosticCode::DistanceSnapped,
                Subject::Tag(tag_id),
                frame,
                format!("heard {raw} cm at {} s, recorded {} cm", event.at_s, snap5(raw)),
            ));
        }
        current = next;
    }
    Ok((current, diagnostics))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptImport {
    pub timeline: Timeline,
    pub diagnostics: Vec<Diagnostic>,
    pub malformed: Vec<MalformedLine>,
    pub events: usize,
}

/// Parses, interprets and applies a whole transcript. Malformed lines are
/// reported and skipped.
pub fn import_transcript(timeline: &Timeline, raw: &str) -> Result<TranscriptImport, TimelineError> {
    let parsed = parse_transcript(raw);
    let events: Vec<UtteranceEvent> = parsed.lines.iter().flat_map(interpret_line).collect();
    let (timeline, diagnostics) = apply_events(timeline, &events)?;
    Ok(TranscriptImport {
        timeline,
        diagnostics,
        malformed: parsed.errors,
        events: events.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fps, TagClass, VideoMeta};
    use proptest::prelude::*;

    fn line(text: &str) -> TranscriptLine {
        TranscriptLine {
            time_s: 1.0,
            text: text.into(),
        }
    }

    fn calls(text: &str) -> Vec<Utterance> {
        interpret_line(&line(text))
            .into_iter()
            .map(|e| e.payload)
            .collect()
    }

    fn timeline() -> Timeline {
        Timeline::new(
            "p",
            VideoMeta::new("v", 27000, Fps::integer(15).unwrap()).unwrap(),
        )
    }

    #[test]
    fn parses_records_comments_and_blanks() {
        let parsed = parse_transcript("# prep notes\n\n240.0\tforty five centimeters\n");
        assert!(parsed.errors.is_empty());
        assert_eq!(
            parsed.lines,
            vec![TranscriptLine {
                time_s: 240.0,
                text: "forty five centimeters".into()
            }]
        );
    }

    #[test]
    fn malformed_lines_are_collected() {
        let parsed = parse_transcript("abc\tpolyp\n10\tcecum\nno tab here\n-4\tpolyp\n5\t  \n");
        assert_eq!(parsed.lines.len(), 1);
        let numbers: Vec<usize> = parsed.errors.iter().map(|e| e.line_number).collect();
        assert_eq!(numbers, vec![1, 3, 4, 5]);
    }

    #[test]
    fn lines_sorted_with_stable_ties() {
        let parsed = parse_transcript("30\tb\n10\ta\n30\tc\n.5\td\n");
        let texts: Vec<&str> = parsed.lines.iter().map(|l| l.text.as_str()).collect();
        assert_eq!(texts, vec!["d", "a", "b", "c"]);
    }

    #[test]
    fn grammar_examples() {
        assert_eq!(calls("45 centimeters"), vec![Utterance::DistanceCall(45)]);
        assert_eq!(
            calls("polyp at 105 cm"),
            vec![Utterance::AnomalyCall(Label::Polyp), Utterance::DistanceCall(105)]
        );
        assert_eq!(
            calls("entering the transverse colon"),
            vec![Utterance::SegmentCall(Label::Transverse)]
        );
        assert_eq!(calls("forty five centimeters"), vec![Utterance::DistanceCall(45)]);
    }

    #[test]
    fn number_words() {
        assert_eq!(calls("one hundred five cm"), vec![Utterance::DistanceCall(105)]);
        assert_eq!(
            calls("one hundred and sixty five centimeters"),
            vec![Utterance::DistanceCall(165)]
        );
        assert_eq!(calls("three hundred cm"), vec![Utterance::DistanceCall(300)]);
        assert_eq!(calls("zero cm"), vec![Utterance::DistanceCall(0)]);
        assert_eq!(calls("seventy-five cm"), vec![Utterance::DistanceCall(75)]);
        assert_eq!(calls("twenty cm"), vec![Utterance::DistanceCall(20)]);
        assert_eq!(calls("105cm"), vec![Utterance::DistanceCall(105)]);
        // beyond the supported word range: kept as text, never as 5 cm
        assert_eq!(
            calls("three hundred five cm"),
            vec![Utterance::FreeFinding("three hundred five cm".into())]
        );
        // a number without a unit is not a distance
        assert!(calls("45").is_empty());
    }

    #[test]
    fn anomaly_and_landmark_keywords() {
        assert_eq!(
            calls("Crohn's inflammation, IBD"),
            vec![Utterance::AnomalyCall(Label::Ibd); 3]
        );
        assert_eq!(
            calls("blood clot"),
            vec![Utterance::AnomalyCall(Label::BloodClot)]
        );
        assert_eq!(
            calls("bleeding"),
            vec![Utterance::AnomalyCall(Label::BloodClot)]
        );
        assert_eq!(
            calls("ileocecal valve and appendiceal orifice seen"),
            vec![
                Utterance::LandmarkCall(Landmark::IleocecalValve),
                Utterance::LandmarkCall(Landmark::AppendicealOrifice),
            ]
        );
        assert_eq!(
            calls("Splenic Flexure"),
            vec![Utterance::LandmarkCall(Landmark::SplenicFlexure)]
        );
        assert_eq!(
            calls("hepatic flexure, ascending colon"),
            vec![
                Utterance::LandmarkCall(Landmark::HepaticFlexure),
                Utterance::SegmentCall(Label::Ascending)
            ]
        );
    }

    #[test]
    fn residual_words_become_a_finding() {
        assert_eq!(
            calls("sessile polyp about eight millimeters wide"),
            vec![
                Utterance::AnomalyCall(Label::Polyp),
                Utterance::FreeFinding("sessile about eight millimeters wide".into())
            ]
        );
        assert!(calls("okay good").is_empty());
    }

    #[test]
    fn snapping_matches_round_half_up() {
        assert_eq!(snap5(47), 45);
        assert_eq!(snap5(48), 50);
        assert_eq!(snap5(42), 40);
        assert_eq!(snap5(43), 45);
        assert_eq!(snap5(0), 0);
        assert_eq!(snap5(u32::MAX), u32::MAX);
    }

    #[test]
    fn apply_snaps_and_warns() {
        // round(240 * 15) = 3600, snap5(47) = 45
        let events = [UtteranceEvent {
            at_s: 240.0,
            payload: Utterance::DistanceCall(47),
        }];
        let (t, diags) = apply_events(&timeline(), &events).unwrap();
        assert_eq!(t.tags.len(), 1);
        assert_eq!(t.tags[0].frame, 3600);
        assert_eq!(t.tags[0].distance_cm, Some(45));
        assert_eq!(t.tags[0].origin, TagOrigin::Transcript);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagnosticCode::DistanceSnapped);
        assert!(diags[0].message.contains("47"));

        let events = [UtteranceEvent {
            at_s: 240.0,
            payload: Utterance::DistanceCall(45),
        }];
        let (t, diags) = apply_events(&timeline(), &events).unwrap();
        assert_eq!(t.tags[0].classify(), TagClass::DistanceMark);
        assert!(diags.is_empty());
    }

    #[test]
    fn apply_nothing_is_identity() {
        let (t, diags) = apply_events(&timeline(), &[]).unwrap();
        assert_eq!(t, timeline());
        assert!(diags.is_empty());
    }

    #[test]
    fn apply_rejects_late_events_atomically() {
        let events = [
            UtteranceEvent {
                at_s: 10.0,
                payload: Utterance::DistanceCall(45),
            },
            UtteranceEvent {
                at_s: 1800.5,
                payload: Utterance::DistanceCall(45),
            },
        ];
        assert!(matches!(
            apply_events(&timeline(), &events),
            Err(TimelineError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn event_at_end_of_video_clamps() {
        let events = [UtteranceEvent {
            at_s: 1800.0,
            payload: Utterance::AnomalyCall(Label::Polyp),
        }];
        let (t, _) = apply_events(&timeline(), &events).unwrap();
        assert_eq!(t.tags[0].frame, 26999);
        assert_eq!(t.tags[0].findings.as_deref(), Some("polyp"));
    }

    #[test]
    fn segment_call_becomes_suggestion_tag() {
        let events = [UtteranceEvent {
            at_s: 2.0,
            payload: Utterance::SegmentCall(Label::Sigmoid),
        }];
        let (t, _) = apply_events(&timeline(), &events).unwrap();
        assert!(t.annotations.is_empty());
        assert_eq!(t.tags[0].findings.as_deref(), Some("segment: sigmoid"));
    }

    #[test]
    fn half_frame_rounds_up() {
        // 0.1 s at 15 fps is frame 1.5
        assert_eq!(frame_at(&timeline(), 0.1), 2);
        assert_eq!(frame_at(&timeline(), 0.09), 1);
    }

    proptest! {
        #[test]
        fn snap_property(d in 0u32..=300) {
            let s = snap5(d);
            prop_assert_eq!(s % 5, 0);
            prop_assert!(s.abs_diff(d) <= 2);
        }

        #[test]
        fn interpretation_is_deterministic(text in "[a-z0-9 ]{0,60}") {
            let l = line(&text);
            prop_assert_eq!(interpret_line(&l), interpret_line(&l));
        }

        #[test]
        fn one_tag_per_event(texts in proptest::collection::vec("(polyp|cecum|[0-9]{1,3} cm|blood clot|some free words here)( [a-z]{1,6}){0,4}", 0..12)) {
            let raw: String = texts
                .iter()
                .enumerate()
                .map(|(i, t)| format!("{}\t{}\n", i * 7, t))
                .collect();
            let imported = import_transcript(&timeline(), &raw).unwrap();
            prop_assert_eq!(imported.timeline.tags.len(), imported.events);
            prop_assert!(imported.timeline.annotations.is_empty());
            prop_assert!(crate::validate::errors_only(crate::validate::validate_timeline(&imported.timeline)).is_empty());
        }
    }
}
