//! Random but plausible procedures, mutator scripts and transcripts for
//! property tests and demos. Everything is driven by a caller-supplied RNG,
//! so a seeded generator reproduces the same output.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{AnnotationId, Fps, Interval, Label, TagOrigin, Timeline, VideoMeta};
use crate::ops::{add_annotation, add_tag, remove_annotation, TagInput, TimelineError};

const FPS_CHOICES: [(u64, u64); 8] = [
    (15, 1),
    (24, 1),
    (25, 1),
    (30, 1),
    (30000, 1001),
    (50, 1),
    (60, 1),
    (60000, 1001),
];

const FINDINGS: [&str; 6] = [
    "sessile polyp",
    "pedunculated polyp",
    "patchy erythema",
    "ulcerated mucosa",
    "diverticula",
    "normal vascular pattern",
];

const IMPRESSIONS: [&str; 4] = [
    "benign appearing",
    "biopsy taken",
    "removed with snare",
    "mild colitis",
];

pub fn random_fps<R: Rng + ?Sized>(rng: &mut R) -> Fps {
    let (n, d) = *FPS_CHOICES.choose(rng).expect("non-empty");
    Fps::new(n, d).expect("valid fps")
}

/// A video of 2 to 60 minutes.
pub fn random_video<R: Rng + ?Sized>(rng: &mut R, video_id: &str) -> VideoMeta {
    let fps = random_fps(rng);
    let seconds = rng.gen_range(120..=3600u64);
    let frames = (fps.ratio() * seconds).to_integer().max(1);
    VideoMeta::new(video_id, frames, fps).expect("non-empty video")
}

pub fn random_distance<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    rng.gen_range(0..=40u32) * 5
}

/// One of the seven non-empty tag payloads.
pub fn random_tag_input<R: Rng + ?Sized>(rng: &mut R) -> TagInput {
    let mask: u8 = rng.gen_range(1..8);
    TagInput {
        distance_cm: (mask & 1 != 0).then(|| random_distance(rng)),
        findings: (mask & 2 != 0).then(|| FINDINGS.choose(rng).expect("non-empty").to_string()),
        impressions: (mask & 4 != 0).then(|| IMPRESSIONS.choose(rng).expect("non-empty").to_string()),
    }
}

/// Insertion segments in anatomical order, the cecum, then withdrawal
/// segments in reverse order. Each segment sits inside its own slice of the
/// video, sometimes leaving unannotated gaps.
fn segment_sequence<R: Rng + ?Sized>(rng: &mut R, with_cecum: bool) -> Vec<Label> {
    let below_cecum = &Label::SEGMENTS[..5];
    let mut seq: Vec<Label> = below_cecum.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
    if with_cecum {
        seq.push(Label::Cecum);
        seq.extend(below_cecum.iter().rev().copied().filter(|_| rng.gen_bool(0.85)));
    } else {
        let turn = rng.gen_range(0..5);
        seq = below_cecum[..=turn].to_vec();
        seq.extend(below_cecum[..turn].iter().rev().copied().filter(|_| rng.gen_bool(0.85)));
    }
    seq
}

fn random_cuts<R: Rng + ?Sized>(rng: &mut R, frames: u64, pieces: usize) -> Vec<u64> {
    let mut cuts: Vec<u64> = (1..pieces).map(|_| rng.gen_range(1..frames)).collect();
    cuts.push(0);
    cuts.push(frames);
    cuts.sort_unstable();
    cuts.dedup();
    cuts
}

fn random_sub_interval<R: Rng + ?Sized>(rng: &mut R, start: u64, end: u64) -> Interval {
    if rng.gen_bool(0.5) || end - start < 4 {
        return Interval::new(start, end).expect("non-empty slice");
    }
    let a = rng.gen_range(start..end);
    let b = rng.gen_range(start..end);
    Interval::new(a.min(b), a.max(b) + 1).expect("non-empty slice")
}

fn random_anomaly_interval<R: Rng + ?Sized>(rng: &mut R, frames: u64) -> Interval {
    let len = rng.gen_range(1..=frames.min(600));
    let start = rng.gen_range(0..=frames - len);
    Interval::new(start, start + len).expect("non-empty anomaly")
}

/// A timeline without Error diagnostics. `complete` controls whether a
/// cecum annotation is present.
pub fn random_timeline<R: Rng + ?Sized>(rng: &mut R, procedure_id: &str, complete: bool) -> Timeline {
    let video = random_video(rng, &format!("{procedure_id}.mp4"));
    let frames = video.frame_count();
    let mut t = Timeline::new(procedure_id, video);

    let labels = segment_sequence(rng, complete);
    let cuts = random_cuts(rng, frames, labels.len());
    for (label, w) in labels.iter().zip(cuts.windows(2)) {
        let interval = random_sub_interval(rng, w[0], w[1]);
        t = add_annotation(&t, interval, *label).expect("disjoint slices").0;
    }
    if complete && t.first_cecum().is_none() {
        // more labels than distinct cut points; force a cecum in
        let interval = Interval::new(frames - 1, frames).expect("last frame");
        t.annotations.retain(|a| !a.interval.overlaps(&interval));
        t = add_annotation(&t, interval, Label::Cecum).expect("freed frame").0;
    }

    for _ in 0..rng.gen_range(0..8) {
        let label = *[Label::Polyp, Label::Ibd, Label::BloodClot].choose(rng).expect("non-empty");
        let polyp = t.annotations.iter().rev().filter(|a| a.label == Label::Polyp).map(|a| a.interval).next();
        let interval = match (label, polyp) {
            (Label::BloodClot, Some(p)) if rng.gen_bool(0.7) => random_sub_interval(rng, p.start_frame(), p.end_frame()),
            _ => random_anomaly_interval(rng, frames),
        };
        t = add_annotation(&t, interval, label).expect("anomalies never conflict").0;
    }
    let anomaly_starts: Vec<u64> = t.anomalies().map(|a| a.interval.start_frame()).collect();
    for start in anomaly_starts {
        if rng.gen_bool(0.8) {
            let input = TagInput {
                distance_cm: Some(random_distance(rng)),
                ..random_tag_input(rng)
            };
            t = add_tag(&t, start, input, TagOrigin::Manual).expect("valid tag").0;
        }
    }
    for _ in 0..rng.gen_range(0..6) {
        let frame = rng.gen_range(0..frames);
        t = add_tag(&t, frame, random_tag_input(rng), TagOrigin::Manual).expect("valid tag").0;
    }
    t
}

/// A single user-level edit, as the interface would issue it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    AddAnnotation { interval: Interval, label: Label },
    RemoveAnnotation(AnnotationId),
    AddTag { frame: u64, input: TagInput },
}

impl Mutation {
    pub fn apply(&self, timeline: &Timeline) -> Result<Timeline, TimelineError> {
        match self {
            Mutation::AddAnnotation { interval, label } => {
                add_annotation(timeline, *interval, *label).map(|(t, _)| t)
            }
            Mutation::RemoveAnnotation(id) => remove_annotation(timeline, id),
            Mutation::AddTag { frame, input } => {
                add_tag(timeline, *frame, input.clone(), TagOrigin::Manual).map(|(t, _)| t)
            }
        }
    }
}

/// Mostly well-formed edits with a share that should be rejected
/// (overlaps, out-of-range frames, bad distances, unknown ids).
pub fn random_mutation<R: Rng + ?Sized>(rng: &mut R, timeline: &Timeline) -> Mutation {
    let frames = timeline.frame_count();
    match rng.gen_range(0..10) {
        0..=4 => {
            let label = *Label::ALL.choose(rng).expect("non-empty");
            let reach = if rng.gen_bool(0.05) { frames + 50 } else { frames };
            let a = rng.gen_range(0..reach);
            let b = rng.gen_range(0..reach);
            let interval = if a == b {
                Interval::new(a, a + 1)
            } else {
                Interval::from_gesture(a, b)
            }
            .expect("non-empty");
            Mutation::AddAnnotation { interval, label }
        }
        5..=7 => {
            let id = match timeline.annotations.choose(rng) {
                Some(a) if rng.gen_bool(0.9) => a.annotation_id.clone(),
                _ => AnnotationId::from("a-missing"),
            };
            Mutation::RemoveAnnotation(id)
        }
        _ => {
            let frame = if rng.gen_bool(0.05) { frames } else { rng.gen_range(0..frames) };
            let mut input = random_tag_input(rng);
            if rng.gen_bool(0.05) {
                input = TagInput {
                    distance_cm: Some(rng.gen_range(0..200) * 5 + rng.gen_range(1..5)),
                    ..TagInput::default()
                };
            }
            Mutation::AddTag { frame, input }
        }
    }
}

const TRANSCRIPT_PHRASES: [&str; 18] = [
    "entering the rectum",
    "sigmoid colon",
    "descending colon now",
    "splenic flexure",
    "transverse colon",
    "hepatic flexure",
    "ascending colon",
    "cecum reached",
    "ileocecal valve seen",
    "appendiceal orifice",
    "small polyp here",
    "some inflammation",
    "blood clot on the polyp",
    "polyps at the fold",
    "mucosa looks normal throughout",
    "taking a biopsy from this area",
    "bleeding",
    "crohns",
];

const NUMBER_WORDS: [&str; 6] = ["forty", "sixty five", "one hundred", "one hundred and five", "eighty", "twenty"];

/// `lines` transcript records with ascending timestamps inside
/// `duration_s`, mixing distance calls, segment, anomaly and landmark
/// keywords, free findings, comments and blank lines.
pub fn synthetic_transcript<R: Rng + ?Sized>(rng: &mut R, lines: usize, duration_s: f64) -> String {
    let mut out = String::from("# synthetic say-out-loud transcript\n");
    let step = duration_s / (lines as f64 + 1.0);
    for i in 0..lines {
        let at = step * (i as f64 + rng.gen_range(0.5..1.0));
        let text = match rng.gen_range(0..4) {
            0 => format!("{} cm", rng.gen_range(0..=300)),
            1 => format!("{} centimeters", NUMBER_WORDS.choose(rng).expect("non-empty")),
            2 => format!(
                "{} {}cm",
                TRANSCRIPT_PHRASES.choose(rng).expect("non-empty"),
                rng.gen_range(0..=60) * 5
            ),
            _ => TRANSCRIPT_PHRASES.choose(rng).expect("non-empty").to_string(),
        };
        out.push_str(&format!("{at:.2}\t{text}\n"));
        if rng.gen_bool(0.1) {
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::{has_errors, validate_timeline};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_timelines_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..300 {
            let complete = i % 3 != 0;
            let t = random_timeline(&mut rng, &format!("p{i}"), complete);
            assert!(!has_errors(&validate_timeline(&t)), "{t:?}");
            assert_eq!(t.first_cecum().is_some(), complete);
        }
    }

    #[test]
    fn transcripts_are_reproducible() {
        let a = synthetic_transcript(&mut ChaCha8Rng::seed_from_u64(3), 50, 900.0);
        let b = synthetic_transcript(&mut ChaCha8Rng::seed_from_u64(3), 50, 900.0);
        assert_eq!(a, b);
        assert_eq!(a.lines().filter(|l| l.contains('\t')).count(), 50);
    }
}
