use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::detection::TlClass;
use crate::error::{Error, Result};
use crate::simulator::GroundTruthFrame;
use crate::tracker::{FrameReport, TrackReport};

use super::eval::match_frame;

/// One CSV row: the light's state per source at one ground-truth frame.
/// States are empty when the source has nothing for the light.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceRow {
    pub t: f64,
    pub gt_state: Option<TlClass>,
    pub od_state: Option<TlClass>,
    pub pipeline_state: Option<TlClass>,
    pub flashing_flag: u8,
    pub occluded: u8,
}

/// Per-frame states of `light_id`. Reports are tied to the light through
/// the same 3D matching the evaluator uses.
pub fn sequence_rows(
    reports: &[FrameReport],
    od_reports: Option<&[FrameReport]>,
    ground_truth: &[GroundTruthFrame],
    light_id: &str,
) -> Result<Vec<SequenceRow>> {
    if !ground_truth.iter().flat_map(|f| &f.lights).any(|l| l.light_id == light_id) {
        return Err(Error::UnknownLight(light_id.into()));
    }
    let key = |t: f64| (t * 1e6).round() as i64;
    let index = |rs: &[FrameReport]| -> BTreeMap<i64, Vec<TrackReport>> {
        rs.iter().map(|r| (key(r.t), r.tracks.clone())).collect()
    };
    let pipeline = index(reports);
    let od = od_reports.map(index);

    let matched = |frame: &GroundTruthFrame, source: &BTreeMap<i64, Vec<TrackReport>>| -> Option<TrackReport> {
        let gi = frame.lights.iter().position(|l| l.light_id == light_id)?;
        let tracks = source.get(&key(frame.t))?;
        match_frame(&frame.lights, tracks)
            .into_iter()
            .find(|p| p.0 == gi)
            .map(|(_, j)| tracks[j].clone())
    };

    Ok(ground_truth
        .iter()
        .map(|frame| {
            let gt = frame.lights.iter().find(|l| l.light_id == light_id);
            let ours = matched(frame, &pipeline);
            SequenceRow {
                t: frame.t,
                gt_state: gt.map(|g| g.true_state),
                od_state: od.as_ref().and_then(|o| matched(frame, o)).map(|r| r.state),
                pipeline_state: ours.as_ref().map(|r| r.state),
                flashing_flag: u8::from(ours.is_some_and(|r| r.flashing)),
                occluded: u8::from(gt.is_some_and(|g| g.visible_in.is_empty())),
            }
        })
        .collect())
}

/// Writes the sequence of `light_id` as CSV with a header row.
pub fn emit_sequence_csv<W: Write>(
    out: W,
    reports: &[FrameReport],
    od_reports: Option<&[FrameReport]>,
    ground_truth: &[GroundTruthFrame],
    light_id: &str,
) -> Result<usize> {
    let rows = sequence_rows(reports, od_reports, ground_truth, light_id)?;
    let mut w = csv::Writer::from_writer(out);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::GroundTruthLight;

    fn scenario() -> (Vec<GroundTruthFrame>, Vec<FrameReport>) {
        let gt: Vec<_> = (0..100)
            .map(|k| GroundTruthFrame {
                t: k as f64 * 0.1,
                lights: vec![GroundTruthLight {
                    light_id: "L".into(),
                    x: 1.0,
                    y: 2.0,
                    z: 3.0,
                    true_state: if (40..60).contains(&k) { TlClass::FlashingYellowLeft4 } else { TlClass::RedLeft4 },
                    flashing: (40..60).contains(&k),
                    visible_in: if (20..25).contains(&k) { vec![] } else { vec!["c".into()] },
                }],
            })
            .collect();
        let reports = gt
            .iter()
            .map(|f| FrameReport {
                t: f.t,
                tracks: f
                    .lights
                    .iter()
                    .map(|g| TrackReport {
                        track_id: 0,
                        light_id: Some(g.light_id.clone()),
                        x: g.x,
                        y: g.y,
                        z: g.z,
                        tl_type: crate::detection::TlType::FourArrow,
                        state: g.true_state,
                        flashing: g.flashing,
                        belief: vec![],
                    })
                    .collect(),
            })
            .collect();
        (gt, reports)
    }

    #[test]
    fn one_row_per_frame_plus_header() {
        let (gt, reports) = scenario();
        let mut buf = Vec::new();
        assert_eq!(emit_sequence_csv(&mut buf, &reports, None, &gt, "L").unwrap(), 100);
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 101);
        assert_eq!(lines[0], "t,gt_state,od_state,pipeline_state,flashing_flag,occluded");
        assert_eq!(lines[1], "0.0,4-rleft,,4-rleft,0,0");
    }

    #[test]
    fn occlusion_and_flashing_columns() {
        let (gt, reports) = scenario();
        let rows = sequence_rows(&reports, Some(&reports), &gt, "L").unwrap();
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r.occluded == 1, (20..25).contains(&k));
            if (40..60).contains(&k) {
                assert_eq!(r.gt_state, Some(TlClass::FlashingYellowLeft4));
                assert_eq!(r.flashing_flag, 1);
            }
            assert_eq!(r.od_state, r.pipeline_state);
        }
    }

    #[test]
    fn unknown_light_is_an_error() {
        let (gt, reports) = scenario();
        assert!(matches!(
            sequence_rows(&reports, None, &gt, "nope"),
            Err(Error::UnknownLight(_))
        ));
    }
}
