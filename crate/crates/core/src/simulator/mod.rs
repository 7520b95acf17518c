//! Deterministic scenario simulator: regulated light programs, a vehicle
//! trajectory, per-camera visibility and occlusion, and a confusion-matrix
//! detector noise model.
//!
//! Every random draw comes from a generator keyed by (seed, frame, camera,
//! light, stream), so output bytes depend only on the scenario.

pub mod benchmark;
mod noise;
mod program;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::detection::{Confidence, Detection2D, DetectionRecord, TlClass, TlType};
use crate::error::{Error, Result};
use crate::geometry::{
    camera_from_utm, project_box, CalibrationRecord, CameraModel, PixelBox, PoseBuffer, PoseRecord, TimedPose,
};
use crate::hdmap::{camera_sees, HdMap, HousingCatalog, MapTrafficLight};
use crate::statefilter::{HmmConfig, HmmSet};

pub use noise::{keyed_rng, sample_confidence, NoiseModel, Stream, TypeConfusion};
pub use program::{validate_program, LightProgram, Phase, ProgramViolation, TrueState, DUTY_MAX, DUTY_MIN};

/// Trajectory knot; poses between knots move at constant speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw_deg: f64,
}

/// A light hidden from one camera over `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occlusion {
    pub light_id: String,
    pub camera_id: String,
    pub start: f64,
    pub end: f64,
}

impl Occlusion {
    pub fn covers(&self, light_id: &str, camera_id: &str, t: f64) -> bool {
        self.light_id == light_id && self.camera_id == camera_id && t + 1e-9 >= self.start && t + 1e-9 < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Every physical light, including ones left out of the emitted map.
    pub map: HdMap,
    pub trajectory: Vec<Waypoint>,
    pub cameras: Vec<CalibrationRecord>,
    pub programs: Vec<LightProgram>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
    pub frame_rate: f64,
    pub noise: NoiseModel,
    /// Lights that exist but are missing from the emitted HD map.
    #[serde(default)]
    pub hidden_from_map: Vec<String>,
}

/// One light in a ground-truth frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLight {
    pub light_id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub true_state: TlClass,
    pub flashing: bool,
    /// Cameras that can see the light and are not occluded.
    pub visible_in: Vec<String>,
}

/// Every light in range of at least one camera at one grid time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub t: f64,
    pub lights: Vec<GroundTruthLight>,
}

/// Simulated streams for one scenario.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub detections: Vec<DetectionRecord>,
    pub poses: Vec<PoseRecord>,
    pub ground_truth: Vec<GroundTruthFrame>,
    /// The map handed to the pipeline (hidden lights removed).
    pub map: HdMap,
    pub cameras: Vec<CameraModel>,
    pub config: PipelineConfig,
}

impl Scenario {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::parse(source_name, &e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn camera_models(&self) -> Result<Vec<CameraModel>> {
        let mut cams = self
            .cameras
            .iter()
            .cloned()
            .map(CameraModel::from_calibration)
            .collect::<Result<Vec<_>>>()?;
        cams.sort_by(|a, b| a.camera_id.cmp(&b.camera_id));
        Ok(cams)
    }

    pub fn pose_buffer(&self) -> Result<PoseBuffer> {
        PoseBuffer::new(
            self.trajectory
                .iter()
                .map(|w| TimedPose::from_yaw(w.t, Vector3::new(w.x, w.y, w.z), w.yaw_deg))
                .collect(),
        )
    }

    /// Grid times covered by the trajectory.
    pub fn frame_times(&self) -> Vec<f64> {
        let (Some(first), Some(last)) = (self.trajectory.first(), self.trajectory.last()) else {
            return Vec::new();
        };
        let n = ((last.t - first.t) * self.frame_rate + 1e-9).floor() as u64 + 1;
        (0..n).map(|k| first.t + k as f64 / self.frame_rate).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Scenario(m));
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return fail("frame_rate must be positive".into());
        }
        if self.trajectory.is_empty() {
            return fail("trajectory needs at least one waypoint".into());
        }
        self.pose_buffer().map_err(|e| Error::Scenario(format!("trajectory: {e}")))?;
        let cams = self.camera_models()?;
        if cams.windows(2).any(|w| w[0].camera_id == w[1].camera_id) {
            return fail("duplicate camera_id".into());
        }
        self.map.validate()?;
        self.noise.validate()?;

        let mut programmed = BTreeSet::new();
        for p in &self.programs {
            let Some(light) = self.map.light(&p.light_id) else {
                return fail(format!("program for unknown light {}", p.light_id));
            };
            if !programmed.insert(p.light_id.as_str()) {
                return fail(format!("two programs for light {}", p.light_id));
            }
            let violations = validate_program(p, light.tl_type);
            if !violations.is_empty() {
                let list: Vec<String> = violations.iter().map(|v| format!("phase {}: {}", v.index, v.message)).collect();
                return fail(format!("program {}: {}", p.light_id, list.join("; ")));
            }
        }
        if let Some(l) = self.map.lights.iter().find(|l| !programmed.contains(l.light_id.as_str())) {
            return fail(format!("light {} has no program", l.light_id));
        }
        for o in &self.occlusions {
            if self.map.light(&o.light_id).is_none() || !cams.iter().any(|c| c.camera_id == o.camera_id) {
                return fail(format!("occlusion refers to unknown {} / {}", o.light_id, o.camera_id));
            }
            if !(o.start.is_finite() && o.end.is_finite() && o.start < o.end) {
                return fail(format!("occlusion of {} needs start < end", o.light_id));
            }
        }
        if let Some(id) = self.hidden_from_map.iter().find(|id| self.map.light(id).is_none()) {
            return fail(format!("hidden light {id} is not in the map"));
        }
        Ok(())
    }

    fn occluded(&self, light_id: &str, camera_id: &str, t: f64) -> bool {
        self.occlusions.iter().any(|o| o.covers(light_id, camera_id, t))
    }

    /// Runner configuration matched to this scenario: grid rate and HMM
    /// confusion counts taken from the noise model.
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            frame_rate_hz: self.frame_rate,
            ..PipelineConfig::default()
        };
        let defaults = HmmSet::defaults(cfg.self_transition)?;
        cfg.hmm = TlType::ALL
            .iter()
            .map(|&t| {
                let mut counts = self.noise.confusion_counts(t, 1000.0);
                let n = counts.len();
                for j in 0..n {
                    // an observed state the model never produces still needs
                    // a usable column
                    if (0..n).all(|i| counts[i][j] == 0) {
                        (0..n).for_each(|i| counts[i][j] = 1);
                    }
                }
                HmmConfig {
                    confusion_counts: Some(counts),
                    confusion: None,
                    ..defaults.get(t).to_config()
                }
            })
            .collect();
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Visible<'a> {
    light: &'a MapTrafficLight,
    bbox: PixelBox,
}

/// Lights whose clipped projection lands in `camera`'s image, by light id.
fn visible_lights<'a>(
    lights: &'a [MapTrafficLight],
    camera: &CameraModel,
    pose: &TimedPose,
) -> Result<Vec<Visible<'a>>> {
    let cfu = camera_from_utm(&camera.extrinsic, pose)?;
    let k = &camera.intrinsics;
    Ok(lights
        .iter()
        .filter(|l| camera_sees(camera, &cfu, &l.position))
        .filter_map(|l| {
            let bbox = project_box(l, &cfu, k)?.clipped_to(k.width, k.height)?;
            Some(Visible { light: l, bbox })
        })
        .collect())
}

/// Range of true box heights over the whole run, used to size false
/// positives.
fn height_range(scenario: &Scenario, lights: &[MapTrafficLight], cams: &[CameraModel], poses: &PoseBuffer) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in scenario.frame_times() {
        let pose = poses.interpolate(t)?;
        for cam in cams {
            for v in visible_lights(lights, cam, &pose)? {
                lo = lo.min(v.bbox.h);
                hi = hi.max(v.bbox.h);
            }
        }
    }
    Ok(if lo <= hi { (lo, hi) } else { (10.0, 60.0) })
}

pub fn generate(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let cams = scenario.camera_models()?;
    let poses = scenario.pose_buffer()?;
    let programs: BTreeMap<&str, &LightProgram> =
        scenario.programs.iter().map(|p| (p.light_id.as_str(), p)).collect();
    let mut lights = scenario.map.lights.clone();
    lights.sort_by(|a, b| a.light_id.cmp(&b.light_id));
    let noise = &scenario.noise;
    let (h_min, h_max) = height_range(scenario, &lights, &cams, &poses)?;
    let housings = HousingCatalog::default();
    let jitter = Normal::new(0.0, noise.jitter_px).map_err(|e| Error::Scenario(e.to_string()))?;

    let mut detections = Vec::new();
    let mut pose_records = Vec::new();
    let mut ground_truth = Vec::new();
    for (frame, t) in scenario.frame_times().into_iter().enumerate() {
        let frame = frame as u64;
        let pose = poses.interpolate(t)?;
        pose_records.push(TimedPose { timestamp: t, ..pose.clone() }.to_record());
        let mut gt: BTreeMap<&str, GroundTruthLight> = BTreeMap::new();

        for cam in &cams {
            let cid = cam.camera_id.as_str();
            for v in visible_lights(&lights, cam, &pose)? {
                let id = v.light.light_id.as_str();
                let state = programs[id].state_at(t).expect("validated programs are non-empty");
                let entry = gt.entry(id).or_insert_with(|| GroundTruthLight {
                    light_id: id.to_string(),
                    x: v.light.position.x,
                    y: v.light.position.y,
                    z: v.light.position.z,
                    true_state: state.label,
                    flashing: state.flashing,
                    visible_in: Vec::new(),
                });
                if scenario.occluded(id, cid, t) {
                    continue;
                }
                entry.visible_in.push(cid.to_string());
                if keyed_rng(noise.seed, frame, cid, id, Stream::Miss).random::<f64>() < noise.miss_rate {
                    continue;
                }
                let observed = noise.sample_observed(
                    &mut keyed_rng(noise.seed, frame, cid, id, Stream::Class),
                    v.light.tl_type,
                    state.displayed,
                );
                let confidence = if noise.soft_confidence {
                    sample_confidence(&mut keyed_rng(noise.seed, frame, cid, id, Stream::Confidence), observed)
                } else {
                    Confidence::one_hot(observed)
                };
                let mut bbox = v.bbox;
                if noise.jitter_px > 0.0 {
                    let mut rng = keyed_rng(noise.seed, frame, cid, id, Stream::Jitter);
                    bbox.cx += jitter.sample(&mut rng);
                    bbox.cy += jitter.sample(&mut rng);
                    bbox.h = (bbox.h + jitter.sample(&mut rng)).max(1.0);
                    bbox.w = (bbox.w + jitter.sample(&mut rng)).max(1.0);
                }
                let score = keyed_rng(noise.seed, frame, cid, id, Stream::Score).random_range(0.5..1.0);
                detections.push(Detection2D::new(cid, t, bbox, confidence, score)?.to_record());
            }

            let mut rng = keyed_rng(noise.seed, frame, cid, "", Stream::FalsePositive);
            if rng.random::<f64>() < noise.fp_rate {
                let class = TlClass::ALL[rng.random_range(0..TlClass::ALL.len())];
                let dims = housings.get(class.tl_type()?);
                let h = if h_max > h_min { rng.random_range(h_min..h_max) } else { h_min };
                let w = (h * dims.width / dims.height).max(1.0);
                let k = &cam.intrinsics;
                let cx = rng.random_range(0.5 * w..(k.width - 0.5 * w).max(0.5 * w + 1e-6));
                let cy = rng.random_range(0.5 * h..(k.height - 0.5 * h).max(0.5 * h + 1e-6));
                let confidence = sample_confidence(&mut rng, class);
                let score = rng.random_range(0.5..1.0);
                detections.push(Detection2D::new(cid, t, PixelBox::new(cx, cy, h, w), confidence, score)?.to_record());
            }
        }
        ground_truth.push(GroundTruthFrame {
            t,
            lights: gt.into_values().collect(),
        });
    }

    let hidden: BTreeSet<&str> = scenario.hidden_from_map.iter().map(String::as_str).collect();
    let map = HdMap {
        utm_zone: scenario.map.utm_zone.clone(),
        lights: scenario
            .map
            .lights
            .iter()
            .filter(|l| !hidden.contains(l.light_id.as_str()))
            .cloned()
            .collect(),
    };
    Ok(SimOutput {
        detections,
        poses: pose_records,
        ground_truth,
        map,
        cameras: cams,
        config: scenario.pipeline_config()?,
    })
}
