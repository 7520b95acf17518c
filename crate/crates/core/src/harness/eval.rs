use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::association::{solve_assignment, CostMatrix};
use crate::detection::{TlClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::simulator::{GroundTruthFrame, GroundTruthLight};
use crate::tracker::{FrameReport, TrackReport};

/// Reports farther than this from a ground-truth light never match it.
pub const MATCH_RADIUS_M: f64 = 3.0;

const LABELS: usize = NUM_CLASSES + 1;

/// Rows are ground-truth labels, columns predicted labels, both indexed by
/// detector class with background last.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub labels: Vec<TlClass>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionTable {
    fn new() -> Self {
        ConfusionTable {
            labels: (0..LABELS).filter_map(TlClass::from_index).collect(),
            counts: vec![vec![0; LABELS]; LABELS],
        }
    }

    fn add(&mut self, truth: TlClass, predicted: TlClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: TlClass, predicted: TlClass) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn row_sum(&self, truth: TlClass) -> u64 {
        self.counts[truth.index()].iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LightBreakdown {
    pub frames: u64,
    pub matched: u64,
    pub correct: u64,
    pub class_accuracy: f64,
    pub ape_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: u64,
    pub gt_light_frames: u64,
    pub matched: u64,
    pub correct: u64,
    /// `None` when nothing matched.
    pub ape_m: Option<f64>,
    pub class_accuracy: f64,
    pub false_positives: u64,
    pub confusion: ConfusionTable,
    pub per_light: BTreeMap<String, LightBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

fn frame_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

/// Optimal one-to-one pairs `(gt index, report index)` within
/// [`MATCH_RADIUS_M`], minimizing total 3D distance.
pub fn match_frame(gt: &[GroundTruthLight], reports: &[TrackReport]) -> Vec<(usize, usize)> {
    let mut data = Vec::with_capacity(gt.len() * reports.len());
    for g in gt {
        for r in reports {
            let d = distance(g, r);
            data.push(if d <= MATCH_RADIUS_M { d } else { f64::INFINITY });
        }
    }
    let costs = CostMatrix::new(gt.len(), reports.len(), data).expect("distances are finite or infinite");
    solve_assignment(&costs).pairs
}

fn distance(g: &GroundTruthLight, r: &TrackReport) -> f64 {
    ((g.x - r.x).powi(2) + (g.y - r.y).powi(2) + (g.z - r.z).powi(2)).sqrt()
}

/// Scores a report stream against ground truth. A ground-truth light-frame
/// is correct when a report matches it, carries the same state, and agrees
/// on the flashing flag. Report frames with no ground-truth frame at the
/// same time are ignored.
pub fn evaluate(reports: &[FrameReport], ground_truth: &[GroundTruthFrame]) -> Result<EvalReport> {
    if ground_truth.iter().all(|f| f.lights.is_empty()) {
        return Err(Error::EmptyGroundTruth);
    }
    let by_time: BTreeMap<i64, &FrameReport> = reports.iter().map(|r| (frame_key(r.t), r)).collect();

    let mut confusion = ConfusionTable::new();
    let mut per_light: BTreeMap<String, (LightBreakdown, f64)> = BTreeMap::new();
    let (mut gt_light_frames, mut matched, mut correct, mut fps_count) = (0u64, 0u64, 0u64, 0u64);
    let mut err_sum = 0.0;

    for frame in ground_truth {
        let tracks = by_time.get(&frame_key(frame.t)).map_or(&[][..], |r| r.tracks.as_slice());
        let pairs = match_frame(&frame.lights, tracks);
        let mut report_used = vec![false; tracks.len()];
        let mut gt_match = vec![None; frame.lights.len()];
        for &(i, j) in &pairs {
            gt_match[i] = Some(j);
            report_used[j] = true;
        }
        for (g, m) in frame.lights.iter().zip(gt_match) {
            gt_light_frames += 1;
            let (entry, err) = per_light.entry(g.light_id.clone()).or_default();
            entry.frames += 1;
            match m {
                Some(j) => {
                    let r = &tracks[j];
                    let d = distance(g, r);
                    matched += 1;
                    entry.matched += 1;
                    err_sum += d;
                    *err += d;
                    confusion.add(g.true_state, r.state);
                    if r.state == g.true_state && r.flashing == g.flashing {
                        correct += 1;
                        entry.correct += 1;
                    }
                }
                None => confusion.add(g.true_state, TlClass::Background),
            }
        }
        for (r, used) in tracks.iter().zip(report_used) {
            if !used {
                fps_count += 1;
                confusion.add(TlClass::Background, r.state);
            }
        }
    }

    let per_light = per_light
        .into_iter()
        .map(|(id, (mut b, err))| {
            b.class_accuracy = b.correct as f64 / b.frames as f64;
            b.ape_m = (b.matched > 0).then(|| err / b.matched as f64);
            (id, b)
        })
        .collect();
    Ok(EvalReport {
        frames: ground_truth.len() as u64,
        gt_light_frames,
        matched,
        correct,
        ape_m: (matched > 0).then(|| err_sum / matched as f64),
        class_accuracy: correct as f64 / gt_light_frames as f64,
        false_positives: fps_count,
        confusion,
        per_light,
        fps: None,
    })
}
