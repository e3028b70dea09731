use std::collections::BTreeSet;

use colotag_core::compare::{compare_cases, summarize_case, AnomalySummary, CaseSummary, SegmentSlot};
use colotag_core::fixtures;
use colotag_core::ops::hierarchy_layout;
use colotag_core::report::{generate_report, render_report, CompoundAttribute, PatientContext, RenderFormat};
use colotag_core::Label;

fn triples(summary: &CaseSummary) -> Vec<(Label, Option<Label>, Option<u32>, bool)> {
    let mut v: Vec<_> = summary
        .anomalies
        .iter()
        .map(|a: &AnomalySummary| {
            (
                a.label,
                a.segment,
                a.distance_cm,
                a.compound_attributes.contains(&CompoundAttribute::WithBloodClot),
            )
        })
        .collect();
    v.sort();
    v
}

fn sorted(mut v: Vec<(Label, Option<Label>, Option<u32>, bool)>) -> Vec<(Label, Option<Label>, Option<u32>, bool)> {
    v.sort();
    v
}

#[test]
fn case_1_ibd_in_cecum_and_three_polyps() {
    use Label::*;
    let s = summarize_case(&fixtures::case_1()).unwrap();
    assert!(s.complete);
    assert_eq!(
        triples(&s),
        sorted(vec![
            (Ibd, Some(Cecum), Some(165), false),
            (Polyp, Some(Ascending), Some(140), false),
            (Polyp, Some(Transverse), Some(105), false),
            (Polyp, Some(Descending), Some(45), false),
        ])
    );
    let distances: Vec<_> = s.anomalies.iter().map(|a| a.distance_cm).collect();
    assert_eq!(distances, vec![Some(165), Some(140), Some(105), Some(45)]);
}

#[test]
fn case_2_single_transverse_polyp() {
    let s = summarize_case(&fixtures::case_2()).unwrap();
    assert!(s.complete);
    assert_eq!(triples(&s), vec![(Label::Polyp, Some(Label::Transverse), Some(100), false)]);
}

#[test]
fn case_3_polyp_with_blood_clot() {
    use Label::*;
    let s = summarize_case(&fixtures::case_3()).unwrap();
    assert!(s.complete);
    assert_eq!(
        triples(&s),
        sorted(vec![
            (Ibd, Some(Ascending), Some(120), false),
            (Ibd, Some(Transverse), Some(105), false),
            (Polyp, Some(Transverse), Some(75), true),
        ])
    );
    assert_eq!(s.counts_in(SegmentSlot::Segment(Transverse)).blood_clot, 0);
}

#[test]
fn case_4_incomplete() {
    let s = summarize_case(&fixtures::case_4()).unwrap();
    assert!(!s.complete);
    assert_eq!(s.phase_times.insertion_s, None);
    assert_eq!(s.phase_times.withdrawal_s, None);
    assert_eq!(s.phase_times.cecum_dwell_s, None);
}

#[test]
fn complete_fixtures_insert_faster_than_they_withdraw() {
    for t in [fixtures::case_1(), fixtures::case_2(), fixtures::case_3()] {
        let s = summarize_case(&t).unwrap();
        assert!(s.phase_times.insertion_s.unwrap() < s.phase_times.withdrawal_s.unwrap());
        assert_eq!(s.phase_times.insertion_s, Some(300.0));
        assert_eq!(s.phase_times.withdrawal_s, Some(840.0));
    }
}

#[test]
fn case_2_layout_rows() {
    let rows = hierarchy_layout(&fixtures::case_2()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].entries.len(), 8);
    assert_eq!(rows[1].entries.len(), 1);
    assert!(rows[2].entries.is_empty());
    assert!(rows[3].entries.is_empty());
}

#[test]
fn case_2_document_has_one_finding_line() {
    let report = generate_report(&fixtures::case_2(), &PatientContext::new()).unwrap();
    let text = String::from_utf8(render_report(&report, RenderFormat::Document)).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with(' ') && l.contains(" cm from anus")).collect();
    assert_eq!(lines.len(), 1, "{text}");
    assert!(lines[0].contains("Polyp") && lines[0].contains("Transverse") && lines[0].contains("100 cm"));
}

#[test]
fn comparison_table_for_all_cases() {
    let summaries: Vec<CaseSummary> = fixtures::all_cases().iter().map(|t| summarize_case(t).unwrap()).collect();
    let table = compare_cases(&summaries).unwrap();
    assert_eq!(table.rows.len(), 4);
    let case_2 = &table.rows[1];
    assert_eq!(case_2.cell(Label::Transverse).polyp, 1);
    assert_eq!(case_2.total(), 1);
    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "case,R,S,D,T,A,C,insertion_s,withdrawal_s,complete");
    assert_eq!(lines[1], "case-1,P0/I0/B0,P0/I0/B0,P1/I0/B0,P1/I0/B0,P1/I0/B0,P0/I1/B0,300.0,840.0,true");
    assert_eq!(lines[2], "case-2,P0/I0/B0,P0/I0/B0,P0/I0/B0,P1/I0/B0,P0/I0/B0,P0/I0/B0,300.0,840.0,true");
    assert_eq!(lines[3], "case-3,P0/I0/B0,P0/I0/B0,P0/I0/B0,P1/I1/B0,P0/I1/B0,P0/I0/B0,300.0,840.0,true");
    assert_eq!(lines[4], "case-4,P0/I0/B0,P0/I0/B0,P0/I0/B0,P0/I0/B0,P0/I0/B0,P0/I0/B0,—,—,false");
    assert!(table.rows.iter().all(|r| !r.phase_ratio_warning));
}

#[test]
fn blood_clot_attached_not_listed() {
    let report = generate_report(&fixtures::case_3(), &PatientContext::new()).unwrap();
    let attached: BTreeSet<_> = report.findings.iter().flat_map(|f| f.attached.iter().cloned()).collect();
    assert_eq!(attached.len(), 1);
    assert_eq!(report.findings.len(), 3);
}
