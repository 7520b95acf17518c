//! Pipeline runner and evaluator.
//!
//! The runner is a single-threaded loop over grid frames. Each frame's
//! detections are associated per camera and handed to the tracker in
//! (timestamp, camera id) order, so output depends only on the inputs.

mod eval;
pub mod io;
mod sequence;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::association::{associate_camera, back_project, CameraAssociation};
use crate::config::PipelineConfig;
use crate::detection::{class_to_type, Detection2D};
use crate::error::{Error, Result};
use crate::geometry::{camera_from_utm, load_calibration_dir, CameraModel, PoseBuffer, TimedPose};
use crate::hdmap::{build_index, load_map, query_visible, HdMap, HousingCatalog};
use crate::simulator::SimOutput;
use crate::tracker::{FrameReport, TrackReport, Tracker};

pub use eval::{evaluate, match_frame, ConfusionTable, EvalReport, LightBreakdown, MATCH_RADIUS_M};
pub use sequence::{emit_sequence_csv, sequence_rows, SequenceRow};

/// Nested feature sets compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Every detection back-projected on its own, raw argmax class.
    OdOnly,
    /// Adds map association: matched lights report their map position.
    OdFusion,
    /// Adds track management, HMM refinement and flashing detection.
    OdFusionTracking,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::OdOnly, AblationMode::OdFusion, AblationMode::OdFusionTracking];

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::OdOnly => "od_only",
            AblationMode::OdFusion => "od_fusion",
            AblationMode::OdFusionTracking => "od_fusion_tracking",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "od" | "od_only" => Ok(AblationMode::OdOnly),
            "fusion" | "od_fusion" => Ok(AblationMode::OdFusion),
            "tracking" | "od_fusion_tracking" => Ok(AblationMode::OdFusionTracking),
            _ => Err(Error::invalid("mode", format!("unknown mode {s:?}"))),
        }
    }
}

/// Parsed runner inputs.
#[derive(Clone, Debug)]
pub struct PipelineInputs {
    pub map: HdMap,
    pub cameras: Vec<CameraModel>,
    pub detections: Vec<Detection2D>,
    pub poses: PoseBuffer,
}

impl PipelineInputs {
    /// Inputs as the runner would read them back from simulator files.
    pub fn from_sim(out: &SimOutput) -> Result<Self> {
        Ok(PipelineInputs {
            map: out.map.clone(),
            cameras: out.cameras.clone(),
            detections: out.detections.iter().cloned().map(Detection2D::try_from).collect::<Result<_>>()?,
            poses: PoseBuffer::new(out.poses.iter().cloned().map(TimedPose::try_from).collect::<Result<_>>()?)?,
        })
    }

    pub fn load(map: &Path, calib_dir: &Path, detections: &Path, poses: &Path) -> Result<Self> {
        Ok(PipelineInputs {
            map: load_map(map)?,
            cameras: load_calibration_dir(calib_dir)?,
            detections: io::load_detections(detections)?,
            poses: io::load_poses(poses)?,
        })
    }
}

/// Processing statistics, kept out of the report stream so reports stay
/// byte-identical between runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub mode: AblationMode,
    pub frames: usize,
    pub detections: usize,
    pub elapsed_s: f64,
    pub fps: f64,
}

/// Grid frames and per-frame detections.
struct FrameGrid {
    t0: f64,
    rate: f64,
    /// Per frame, per camera (ascending id), that camera's detections.
    frames: Vec<BTreeMap<String, Vec<Detection2D>>>,
}

impl FrameGrid {
    fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.rate
    }
}

fn bin_detections(inputs: &PipelineInputs, rate: f64) -> Result<FrameGrid> {
    let (t0, t1) = inputs.poses.span().ok_or(Error::EmptyPoseBuffer)?;
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize + 1;
    let mut frames = vec![BTreeMap::new(); n];
    for d in &inputs.detections {
        if !inputs.cameras.iter().any(|c| c.camera_id == d.camera_id) {
            return Err(Error::UnknownCamera(d.camera_id.clone()));
        }
        if !inputs.poses.covers(d.timestamp) {
            return Err(Error::PoseCoverage { t: d.timestamp });
        }
        let k = ((d.timestamp - t0) * rate).round() as usize;
        let k = k.min(n - 1);
        frames[k]
            .entry(d.camera_id.clone())
            .or_insert_with(Vec::new)
            .push(d.clone());
    }
    for frame in &mut frames {
        for dets in frame.values_mut() {
            dets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        }
    }
    Ok(FrameGrid { t0, rate, frames })
}

pub fn run_pipeline(inputs: &PipelineInputs, mode: AblationMode, config: &PipelineConfig) -> Result<Vec<FrameReport>> {
    run_pipeline_timed(inputs, mode, config).map(|(r, _)| r)
}

/// Runs the pipeline and measures processing time (input parsing excluded).
pub fn run_pipeline_timed(
    inputs: &PipelineInputs,
    mode: AblationMode,
    config: &PipelineConfig,
) -> Result<(Vec<FrameReport>, RunStats)> {
    config.validate()?;
    inputs.map.validate()?;
    let mut cameras = inputs.cameras.clone();
    cameras.sort_by(|a, b| a.camera_id.cmp(&b.camera_id));
    if cameras.windows(2).any(|w| w[0].camera_id == w[1].camera_id) {
        return Err(Error::invalid("calibration", "duplicate camera_id"));
    }

    let start = Instant::now();
    let grid = bin_detections(inputs, config.frame_rate_hz)?;
    let mut index = build_index(&inputs.map);
    let mut tracker = Tracker::new(
        config.tracker.clone(),
        config.flashing.clone(),
        config.hmm_set()?,
        config.housings,
    )?;
    let mut reports = Vec::with_capacity(grid.frames.len());
    let mut next_id = 0u64;

    for (k, per_camera) in grid.frames.iter().enumerate() {
        let t = grid.time(k);
        let tracks = match mode {
            AblationMode::OdOnly => {
                let mut out = Vec::new();
                for cam in &cameras {
                    let dets = per_camera.get(&cam.camera_id).map_or(&[][..], Vec::as_slice);
                    for d in dets {
                        let cfu = camera_from_utm(&cam.extrinsic, &inputs.poses.interpolate(d.timestamp)?)?;
                        out.push(raw_report(d, cam, &cfu, &config.housings, &mut next_id)?);
                    }
                }
                out
            }
            AblationMode::OdFusion | AblationMode::OdFusionTracking => {
                let assoc = associate_frame(&index, &cameras, per_camera, t, &inputs.poses, config.gate_px)?;
                if mode == AblationMode::OdFusionTracking {
                    tracker.update(&mut index, k as u64, &assoc)?
                } else {
                    fused_reports(&index, &assoc, &cameras, &config.housings, &mut next_id)?
                }
            }
        };
        reports.push(FrameReport { t, tracks });
    }

    let elapsed_s = start.elapsed().as_secs_f64();
    let stats = RunStats {
        mode,
        frames: reports.len(),
        detections: inputs.detections.len(),
        elapsed_s,
        fps: reports.len() as f64 / elapsed_s.max(1e-9),
    };
    Ok((reports, stats))
}

/// Per-camera association for one frame. A camera's pose is taken at its
/// first detection time, or at the grid time if it has none.
fn associate_frame(
    index: &crate::hdmap::SpatialIndex,
    cameras: &[CameraModel],
    per_camera: &BTreeMap<String, Vec<Detection2D>>,
    grid_t: f64,
    poses: &PoseBuffer,
    gate: f64,
) -> Result<Vec<CameraAssociation>> {
    cameras
        .iter()
        .map(|cam| {
            let dets = per_camera.get(&cam.camera_id).map_or(&[][..], Vec::as_slice);
            let t = dets.first().map_or(grid_t, |d| d.timestamp);
            let t = if poses.covers(t) { t } else { grid_t.clamp(poses.span().unwrap().0, poses.span().unwrap().1) };
            let pose = poses.interpolate(t)?;
            let visible = query_visible(index, &pose, std::slice::from_ref(cam))?;
            let cfu = camera_from_utm(&cam.extrinsic, &pose)?;
            Ok(associate_camera(cam, &cfu, t, &visible[0], dets, gate))
        })
        .collect()
}

fn raw_report(
    d: &Detection2D,
    cam: &CameraModel,
    cfu: &crate::geometry::RigidTransform,
    housings: &HousingCatalog,
    next_id: &mut u64,
) -> Result<TrackReport> {
    let class = d.detected_class();
    let tl_type = class_to_type(class)?;
    let p = back_project(d, &cam.intrinsics, cfu, housings.get(tl_type))?;
    let id = *next_id;
    *next_id += 1;
    Ok(TrackReport {
        track_id: id,
        light_id: None,
        x: p.x,
        y: p.y,
        z: p.z,
        tl_type,
        state: class,
        flashing: false,
        belief: d.confidence.restricted(tl_type).unwrap_or_default(),
    })
}

/// One report per associated light (highest-score detection over cameras)
/// plus raw reports for leftover detections.
fn fused_reports(
    index: &crate::hdmap::SpatialIndex,
    assoc: &[CameraAssociation],
    cameras: &[CameraModel],
    housings: &HousingCatalog,
    next_id: &mut u64,
) -> Result<Vec<TrackReport>> {
    let mut best: BTreeMap<&str, &crate::association::LightMatch> = BTreeMap::new();
    for a in assoc {
        for m in &a.matches {
            let keep = best.get(m.light_id.as_str()).is_some_and(|b| b.detection.score >= m.detection.score);
            if !keep {
                best.insert(&m.light_id, m);
            }
        }
    }
    let mut out = Vec::new();
    for (light_id, m) in best {
        let id = *next_id;
        *next_id += 1;
        let light = &index.get(light_id).ok_or_else(|| Error::UnknownLight(light_id.into()))?.light;
        out.push(TrackReport {
            track_id: id,
            light_id: Some(light_id.to_string()),
            x: light.position.x,
            y: light.position.y,
            z: light.position.z,
            tl_type: light.tl_type,
            state: m.detection.detected_class(),
            flashing: false,
            belief: m.detection.confidence.restricted(light.tl_type).unwrap_or_default(),
        });
    }
    for (a, cam) in assoc.iter().zip(cameras) {
        for d in &a.unmatched {
            out.push(raw_report(d, cam, &a.cam_from_utm, housings, next_id)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::benchmark::benchmark_scenario;
    use crate::simulator::{generate, NoiseModel, Scenario};

    fn inputs_from(out: &SimOutput) -> PipelineInputs {
        PipelineInputs::from_sim(out).unwrap()
    }

    fn noiseless_benchmark() -> Scenario {
        let mut s = benchmark_scenario();
        s.noise = NoiseModel::noiseless(1);
        s
    }

    #[test]
    fn mode_names_parse() {
        for m in AblationMode::ALL {
            assert_eq!(m.name().parse::<AblationMode>().unwrap(), m);
        }
        assert_eq!("tracking".parse::<AblationMode>().unwrap(), AblationMode::OdFusionTracking);
        assert!("bogus".parse::<AblationMode>().is_err());
    }

    #[test]
    fn noiseless_input_gives_ground_truth_classes_in_every_mode() {
        let out = generate(&noiseless_benchmark()).unwrap();
        let inputs = inputs_from(&out);
        // the flash release needs two frames of steady readings
        let settle = 2.0 / out.config.frame_rate_hz + 1e-9;
        for mode in AblationMode::ALL {
            let reports = run_pipeline(&inputs, mode, &out.config).unwrap();
            let mut last_flash: BTreeMap<&str, f64> = BTreeMap::new();
            let mut checked = 0;
            for (f, r) in out.ground_truth.iter().zip(&reports) {
                for (i, j) in match_frame(&f.lights, &r.tracks) {
                    let (g, t) = (&f.lights[i], &r.tracks[j]);
                    let settling = last_flash.get(g.light_id.as_str()).is_some_and(|lf| f.t - lf < settle);
                    // only tracking flags flashing, and it needs a full window to do so
                    if !g.flashing && !(mode == AblationMode::OdFusionTracking && settling) {
                        assert_eq!(t.state, g.true_state, "{mode} t={} {}", f.t, g.light_id);
                        assert!(!t.flashing);
                        checked += 1;
                    }
                }
                for g in f.lights.iter().filter(|g| g.flashing) {
                    last_flash.insert(&g.light_id, f.t);
                }
            }
            assert!(checked > 1000, "{mode}: {checked}");
        }
    }

    #[test]
    fn fusion_reports_map_positions() {
        let out = generate(&noiseless_benchmark()).unwrap();
        let reports = run_pipeline(&inputs_from(&out), AblationMode::OdFusion, &out.config).unwrap();
        let eval = evaluate(&reports, &out.ground_truth).unwrap();
        assert_eq!(eval.ape_m, Some(0.0));
    }

    #[test]
    fn unknown_camera_and_pose_gap_fail_fast() {
        let out = generate(&noiseless_benchmark()).unwrap();
        let mut inputs = inputs_from(&out);
        inputs.detections[0].camera_id = "nope".into();
        assert!(matches!(
            run_pipeline(&inputs, AblationMode::OdOnly, &out.config),
            Err(Error::UnknownCamera(_))
        ));
        let mut inputs = inputs_from(&out);
        inputs.detections[0].timestamp = -5.0;
        assert!(matches!(
            run_pipeline(&inputs, AblationMode::OdOnly, &out.config),
            Err(Error::PoseCoverage { t }) if t == -5.0
        ));
    }

    #[test]
    fn reports_cover_every_grid_frame() {
        let out = generate(&noiseless_benchmark()).unwrap();
        let reports = run_pipeline(&inputs_from(&out), AblationMode::OdFusionTracking, &out.config).unwrap();
        assert_eq!(reports.len(), out.ground_truth.len());
        for (r, g) in reports.iter().zip(&out.ground_truth) {
            assert_eq!(r.t, g.t);
        }
    }
}
