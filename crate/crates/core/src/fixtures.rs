//! The four reference procedures of the comparison view, built through the
//! public mutators so every fixture passes validation.
//!
//! All cases run at 30 fps. Segments follow the insertion/withdrawal
//! pattern: a few recognisable segments on the way in (the rest is blurry
//! and left unannotated), the cecum, then every segment on the way out.
//! Each anomaly has a tag at its first frame carrying the distance called
//! out by the endoscopist.

use crate::model::{Fps, Interval, Label, TagOrigin, Timeline, VideoMeta};
use crate::ops::{add_annotation, add_tag, TagInput, TimelineError};

pub const FIXTURE_FPS: u64 = 30;

/// Declarative recipe for a fixture timeline.
#[derive(Debug, Clone)]
pub struct CasePlan {
    pub procedure_id: &'static str,
    pub frame_count: u64,
    pub segments: Vec<(Label, u64, u64)>,
    pub anomalies: Vec<(Label, u64, u64)>,
    pub tags: Vec<(u64, TagInput)>,
}

impl CasePlan {
    pub fn video(&self) -> VideoMeta {
        let fps = Fps::integer(FIXTURE_FPS).expect("non-zero fps");
        VideoMeta::new(format!("{}.mp4", self.procedure_id), self.frame_count, fps)
            .expect("non-zero frame count")
    }

    pub fn build(&self) -> Result<Timeline, TimelineError> {
        let mut timeline = Timeline::new(self.procedure_id, self.video());
        for &(label, start, end) in self.segments.iter().chain(&self.anomalies) {
            let interval = Interval::new(start, end).expect("fixture interval");
            timeline = add_annotation(&timeline, interval, label)?.0;
        }
        for (frame, input) in &self.tags {
            timeline = add_tag(&timeline, *frame, input.clone(), TagOrigin::Manual)?.0;
        }
        Ok(timeline)
    }
}

fn s(seconds: u64) -> u64 {
    seconds * FIXTURE_FPS
}

fn tag(distance: u32, findings: &str, impressions: &str) -> TagInput {
    TagInput {
        distance_cm: Some(distance),
        findings: Some(findings.to_string()),
        impressions: Some(impressions.to_string()),
    }
}

/// Standard complete-procedure segment layout over a 20 minute video:
/// insertion 300 s, cecum dwell 60 s, withdrawal 840 s.
fn complete_segments() -> Vec<(Label, u64, u64)> {
    use Label::*;
    vec![
        (Rectum, 0, s(30)),
        (Sigmoid, s(30), s(80)),
        (Cecum, s(300), s(360)),
        (Ascending, s(360), s(500)),
        (Transverse, s(500), s(700)),
        (Descending, s(700), s(900)),
        (Sigmoid, s(900), s(1050)),
        (Rectum, s(1050), s(1200)),
    ]
}

/// Completed procedure: IBD in the cecum and polyps in the ascending,
/// transverse and descending colon.
pub fn case_1_plan() -> CasePlan {
    use Label::*;
    CasePlan {
        procedure_id: "case-1",
        frame_count: s(1200),
        segments: complete_segments(),
        anomalies: vec![
            (Ibd, s(320), s(330)),
            (Polyp, s(420), s(425)),
            (Polyp, s(600), s(606)),
            (Polyp, s(800), s(804)),
        ],
        tags: vec![
            (s(320), tag(165, "inflammation at the cecal base", "IBD in cecum")),
            (s(420), tag(140, "sessile polyp", "ascending colon polyp")),
            (s(600), tag(105, "pedunculated polyp", "transverse colon polyp")),
            (s(800), tag(45, "small polyp", "descending colon polyp")),
            (s(700), TagInput::distance(70)),
        ],
    }
}

/// Completed procedure: one polyp in the transverse colon.
pub fn case_2_plan() -> CasePlan {
    CasePlan {
        procedure_id: "case-2",
        frame_count: s(1200),
        segments: complete_segments(),
        anomalies: vec![(Label::Polyp, s(610), s(616))],
        tags: vec![(s(610), tag(100, "polyp", "transverse colon polyp"))],
    }
}

/// Completed procedure: IBD in the ascending and transverse colon and a
/// transverse polyp with a blood clot.
pub fn case_3_plan() -> CasePlan {
    use Label::*;
    CasePlan {
        procedure_id: "case-3",
        frame_count: s(1200),
        segments: complete_segments(),
        anomalies: vec![
            (Ibd, s(450), s(460)),
            (Ibd, s(560), s(570)),
            (Polyp, s(650), s(658)),
            (BloodClot, s(652), s(656)),
        ],
        tags: vec![
            (s(450), tag(120, "patchy inflammation", "IBD in ascending colon")),
            (s(560), tag(105, "ulcerated mucosa", "IBD in transverse colon")),
            (s(650), tag(75, "polyp with blood clot", "bleeding transverse polyp")),
        ],
    }
}

/// Incomplete procedure stopped at an obstruction before the cecum.
pub fn case_4_plan() -> CasePlan {
    use Label::*;
    CasePlan {
        procedure_id: "case-4",
        frame_count: s(600),
        segments: vec![
            (Rectum, 0, s(40)),
            (Sigmoid, s(40), s(150)),
            (Descending, s(150), s(330)),
            (Sigmoid, s(330), s(480)),
            (Rectum, s(480), s(600)),
        ],
        anomalies: vec![],
        tags: vec![(
            s(320),
            TagInput {
                distance_cm: Some(40),
                findings: Some("obstruction, scope could not pass".to_string()),
                impressions: Some("incomplete colonoscopy, refer for surgery".to_string()),
            },
        )],
    }
}

pub fn case_plans() -> [CasePlan; 4] {
    [case_1_plan(), case_2_plan(), case_3_plan(), case_4_plan()]
}

pub fn case_1() -> Timeline {
    case_1_plan().build().expect("case 1 fixture")
}

pub fn case_2() -> Timeline {
    case_2_plan().build().expect("case 2 fixture")
}

pub fn case_3() -> Timeline {
    case_3_plan().build().expect("case 3 fixture")
}

pub fn case_4() -> Timeline {
    case_4_plan().build().expect("case 4 fixture")
}

pub fn all_cases() -> [Timeline; 4] {
    [case_1(), case_2(), case_3(), case_4()]
}
