//! Track lifecycle: birth counters for map-backed and detection-spawned
//! lights, the death counter, cross-camera observation fusion and the
//! per-track history that feeds the state filter.
//!
//! Frames are counted on the pipeline grid. A light is "hit" in a frame if
//! any camera associated a detection with it, so birth needs that many
//! consecutive grid frames with at least one hit. A reported track keeps
//! being reported through `n_death` missed frames and is dropped on the
//! next one.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::association::{back_project, solve_assignment, CameraAssociation, CostMatrix};
use crate::detection::{class_to_type, Confidence, Detection2D, TlClass, TlType};
use crate::error::{Error, Result};
use crate::geometry::{project_point, PixelBox};
use crate::hdmap::{HousingCatalog, LightOrigin, MapTrafficLight, SpatialIndex};
use crate::statefilter::{BeliefState, FlashingConfig, FlashingLatch, HmmSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub n_birth_map: u32,
    pub n_birth_2d: u32,
    pub n_death: u32,
    pub history_len: usize,
    /// Gate for linking unmatched detections across frames before a light
    /// is spawned, applied after ego-motion compensation.
    pub candidate_gate_px: f64,
    /// A detection-spawned light is not created if a light of the same type
    /// is already indexed this close.
    pub spawn_merge_radius_m: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            n_birth_map: 2,
            n_birth_2d: 2,
            n_death: 15,
            history_len: 30,
            candidate_gate_px: 15.0,
            spawn_merge_radius_m: 3.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_birth_map == 0 || self.n_birth_2d == 0 || self.n_death == 0 || self.history_len == 0 {
            return Err(Error::invalid("tracker", "birth, death and history lengths must be >= 1"));
        }
        if !(self.candidate_gate_px > 0.0) || !(self.spawn_merge_radius_m >= 0.0) {
            return Err(Error::invalid("tracker", "gates must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub timestamp: f64,
    pub camera_id: String,
    pub bbox: PixelBox,
    pub detected_class: TlClass,
    pub confidence: Confidence,
}

impl Observation {
    pub fn from_detection(d: &Detection2D) -> Self {
        Observation {
            timestamp: d.timestamp,
            camera_id: d.camera_id.clone(),
            bbox: d.bbox,
            detected_class: d.detected_class(),
            confidence: d.confidence.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSource {
    MapBacked,
    DetectionSpawned,
}

impl From<LightOrigin> for TrackSource {
    fn from(o: LightOrigin) -> Self {
        match o {
            LightOrigin::Map => TrackSource::MapBacked,
            LightOrigin::Spawned => TrackSource::DetectionSpawned,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Track {
    pub track_id: u64,
    pub source: TrackSource,
    /// Index key: the map light id, or the generated id of a spawned light.
    pub light_id: String,
    pub position_3d: Point3<f64>,
    pub tl_type: TlType,
    pub history: VecDeque<Observation>,
    pub consecutive_hits: u32,
    pub missed_frames: u32,
    pub belief: BeliefState,
    pub flashing: FlashingLatch,
    pub reported: bool,
    pub last_hit_frame: u64,
}

impl Track {
    pub fn state(&self, hmms: &HmmSet) -> TlClass {
        self.flashing
            .active()
            .unwrap_or_else(|| hmms.get(self.tl_type).map_state(&self.belief))
    }

    pub fn history_classes(&self) -> Vec<TlClass> {
        self.history.iter().map(|o| o.detected_class).collect()
    }
}

/// One reported track in a frame of the report stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub track_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_id: Option<String>,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub tl_type: TlType,
    pub state: TlClass,
    pub flashing: bool,
    #[serde(default)]
    pub belief: Vec<f64>,
}

impl TrackReport {
    pub fn position(&self) -> Point3<f64> {
        Point3::new(self.x, self.y, self.z)
    }
}

/// All tracks reported at one grid time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub t: f64,
    pub tracks: Vec<TrackReport>,
}

/// A light seen on recent consecutive frames that is not yet tracked.
#[derive(Clone, Debug)]
struct LightCandidate {
    hits: u32,
    last_frame: u64,
    pending: Vec<Observation>,
}

/// Unmatched detections chained across frames in one camera.
#[derive(Clone, Debug)]
struct Provisional {
    camera_id: String,
    tl_type: TlType,
    hits: u32,
    last_frame: u64,
    bbox: PixelBox,
    /// Camera depth of the last back-projection.
    depth: f64,
    positions: Vec<Point3<f64>>,
    observations: Vec<Observation>,
}

/// Lifecycle counters, exposed for tests and diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrackerStats {
    pub births: u64,
    pub deaths: u64,
    pub spawned_lights: u64,
    pub observations: u64,
    pub filter_resets: u64,
}

pub struct Tracker {
    config: TrackerConfig,
    flashing: FlashingConfig,
    hmms: HmmSet,
    housings: HousingCatalog,
    tracks: BTreeMap<String, Track>,
    candidates: BTreeMap<String, LightCandidate>,
    provisionals: Vec<Provisional>,
    next_track_id: u64,
    next_spawn_id: u64,
    stats: TrackerStats,
}

impl Tracker {
    pub fn new(
        config: TrackerConfig,
        flashing: FlashingConfig,
        hmms: HmmSet,
        housings: HousingCatalog,
    ) -> Result<Self> {
        config.validate()?;
        flashing.validate()?;
        housings.validate()?;
        if config.history_len < flashing.window {
            return Err(Error::invalid("tracker", "history_len must cover the flashing window"));
        }
        Ok(Tracker {
            config,
            flashing,
            hmms,
            housings,
            tracks: BTreeMap::new(),
            candidates: BTreeMap::new(),
            provisionals: Vec::new(),
            next_track_id: 0,
            next_spawn_id: 0,
            stats: TrackerStats::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn hmms(&self) -> &HmmSet {
        &self.hmms
    }

    pub fn stats(&self) -> TrackerStats {
        self.stats
    }

    /// Live tracks keyed by light id.
    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    pub fn track_for_light(&self, light_id: &str) -> Option<&Track> {
        self.tracks.get(light_id)
    }

    /// Processes one grid frame. `cameras` holds every camera's association
    /// for this frame, including cameras with no detections. Spawned lights
    /// are inserted into `index`.
    pub fn update(
        &mut self,
        index: &mut SpatialIndex,
        frame: u64,
        cameras: &[CameraAssociation],
    ) -> Result<Vec<TrackReport>> {
        let mut order: Vec<&CameraAssociation> = cameras.iter().collect();
        order.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then_with(|| a.camera_id.cmp(&b.camera_id)));

        // detections per light, in (timestamp, camera) order
        let mut per_light: BTreeMap<String, (TrackSource, Vec<Observation>)> = BTreeMap::new();
        for cam in &order {
            for m in &cam.matches {
                per_light
                    .entry(m.light_id.clone())
                    .or_insert_with(|| (m.origin.into(), Vec::new()))
                    .1
                    .push(Observation::from_detection(&m.detection));
            }
        }

        for (light_id, (source, observations)) in per_light {
            if self.tracks.contains_key(&light_id) {
                let track = self.tracks.get_mut(&light_id).expect("checked");
                track.consecutive_hits += 1;
                track.missed_frames = 0;
                track.last_hit_frame = frame;
                fuse_observations(track, observations, &self.hmms, &self.flashing, &self.config, &mut self.stats)?;
                continue;
            }
            let threshold = match source {
                TrackSource::MapBacked => self.config.n_birth_map,
                TrackSource::DetectionSpawned => self.config.n_birth_2d,
            };
            let cand = self.candidates.entry(light_id.clone()).or_insert(LightCandidate {
                hits: 0,
                last_frame: frame,
                pending: Vec::new(),
            });
            if cand.hits > 0 && cand.last_frame + 1 != frame {
                cand.hits = 0;
                cand.pending.clear();
            }
            cand.hits += 1;
            cand.last_frame = frame;
            cand.pending.extend(observations);
            if cand.hits >= threshold {
                let cand = self.candidates.remove(&light_id).expect("present");
                let light = index
                    .get(&light_id)
                    .ok_or_else(|| Error::UnknownLight(light_id.clone()))?
                    .light
                    .clone();
                self.birth(light, source, cand.hits, cand.pending, frame)?;
            }
        }

        // candidates not hit this frame lose their streak
        self.candidates.retain(|_, c| c.last_frame == frame);

        // missed tracks
        let n_death = self.config.n_death;
        let mut dead = Vec::new();
        for (id, track) in self.tracks.iter_mut() {
            if track.last_hit_frame == frame {
                continue;
            }
            track.consecutive_hits = 0;
            track.missed_frames += 1;
            self.hmms.get(track.tl_type).predict(&mut track.belief);
            if track.missed_frames > n_death {
                track.reported = false;
                dead.push(id.clone());
            }
        }
        for id in dead {
            self.tracks.remove(&id);
            self.stats.deaths += 1;
        }

        self.link_unmatched(index, frame, &order)?;
        Ok(self.reports())
    }

    fn birth(
        &mut self,
        light: MapTrafficLight,
        source: TrackSource,
        hits: u32,
        pending: Vec<Observation>,
        frame: u64,
    ) -> Result<()> {
        let hmm = self.hmms.get(light.tl_type);
        let t0 = pending.first().map_or(0.0, |o| o.timestamp);
        let mut track = Track {
            track_id: self.next_track_id,
            source,
            light_id: light.light_id.clone(),
            position_3d: light.position,
            tl_type: light.tl_type,
            history: VecDeque::with_capacity(self.config.history_len),
            consecutive_hits: hits,
            missed_frames: 0,
            belief: hmm.initial_belief(t0),
            flashing: FlashingLatch::default(),
            reported: true,
            last_hit_frame: frame,
        };
        self.next_track_id += 1;
        self.stats.births += 1;
        fuse_observations(&mut track, pending, &self.hmms, &self.flashing, &self.config, &mut self.stats)?;
        log::debug!("track {} born for {}", track.track_id, track.light_id);
        self.tracks.insert(light.light_id, track);
        Ok(())
    }

    /// Chains unmatched detections per camera and spawns lights for chains
    /// that reach `n_birth_2d` consecutive frames.
    fn link_unmatched(&mut self, index: &mut SpatialIndex, frame: u64, order: &[&CameraAssociation]) -> Result<()> {
        let previous = std::mem::take(&mut self.provisionals);
        let mut next = Vec::new();
        for cam in order {
            let prev: Vec<&Provisional> = previous
                .iter()
                .filter(|p| p.camera_id == cam.camera_id && p.last_frame + 1 == frame)
                .collect();
            let dets: Vec<(&Detection2D, TlType)> = cam
                .unmatched
                .iter()
                .filter_map(|d| class_to_type(d.detected_class()).ok().map(|t| (d, t)))
                .collect();

            let mut costs = vec![f64::INFINITY; prev.len() * dets.len()];
            for (i, p) in prev.iter().enumerate() {
                let Some(predicted) = predict_box(p, cam) else { continue };
                for (j, (d, t)) in dets.iter().enumerate() {
                    if *t != p.tl_type {
                        continue;
                    }
                    let c = predicted.l2_distance(&d.bbox);
                    if c <= self.config.candidate_gate_px {
                        costs[i * dets.len() + j] = c;
                    }
                }
            }
            let assignment = solve_assignment(&CostMatrix::new(prev.len(), dets.len(), costs)?);

            for (j, (d, tl_type)) in dets.iter().enumerate() {
                let dims = self.housings.get(*tl_type);
                let position = back_project(d, &cam.intrinsics, &cam.cam_from_utm, dims)?;
                let depth = cam.cam_from_utm.transform_point(&position).z;
                let mut p = match assignment.row_for_col(j) {
                    Some(i) => {
                        let mut p = prev[i].clone();
                        p.hits += 1;
                        p
                    }
                    None => Provisional {
                        camera_id: cam.camera_id.clone(),
                        tl_type: *tl_type,
                        hits: 1,
                        last_frame: frame,
                        bbox: d.bbox,
                        depth,
                        positions: Vec::new(),
                        observations: Vec::new(),
                    },
                };
                p.last_frame = frame;
                p.bbox = d.bbox;
                p.depth = depth;
                p.positions.push(position);
                p.observations.push(Observation::from_detection(d));
                if p.hits >= self.config.n_birth_2d {
                    self.spawn(index, p, cam, frame)?;
                } else {
                    next.push(p);
                }
            }
        }
        self.provisionals = next;
        Ok(())
    }

    fn spawn(&mut self, index: &mut SpatialIndex, p: Provisional, cam: &CameraAssociation, frame: u64) -> Result<()> {
        let n = p.positions.len() as f64;
        let mean = p.positions.iter().fold(nalgebra::Vector3::zeros(), |acc, q| acc + q.coords) / n;
        let position = Point3::from(mean);
        let duplicate = index
            .query_radius(&position, self.config.spawn_merge_radius_m)
            .iter()
            .any(|l| l.light.tl_type == p.tl_type);
        if duplicate {
            return Ok(());
        }
        let camera_position = cam.cam_from_utm.inverse().transform_point(&Point3::origin());
        let facing = camera_position - position;
        let light = MapTrafficLight {
            light_id: format!("spawn-{}", self.next_spawn_id),
            position,
            heading_deg: facing.y.atan2(facing.x).to_degrees(),
            dims: *self.housings.get(p.tl_type),
            tl_type: p.tl_type,
        };
        self.next_spawn_id += 1;
        self.stats.spawned_lights += 1;
        index.insert_spawned(light.clone())?;
        log::debug!("spawned {} from camera {}", light.light_id, p.camera_id);
        self.birth(light, TrackSource::DetectionSpawned, p.hits, p.observations, frame)
    }

    /// Reported tracks sorted by track id.
    pub fn reports(&self) -> Vec<TrackReport> {
        let mut out: Vec<TrackReport> = self
            .tracks
            .values()
            .filter(|t| t.reported)
            .map(|t| TrackReport {
                track_id: t.track_id,
                light_id: (t.source == TrackSource::MapBacked).then(|| t.light_id.clone()),
                x: t.position_3d.x,
                y: t.position_3d.y,
                z: t.position_3d.z,
                tl_type: t.tl_type,
                state: t.state(&self.hmms),
                flashing: t.flashing.active().is_some(),
                belief: t.belief.alpha.iter().copied().collect(),
            })
            .collect();
        out.sort_by_key(|r| r.track_id);
        out
    }
}

/// Appends one observation per camera detection and runs one filter update
/// for each.
pub fn fuse_frame_observations(
    track: &mut Track,
    observations: Vec<Observation>,
    hmms: &HmmSet,
    flashing: &FlashingConfig,
    history_len: usize,
) -> Result<u64> {
    let hmm = hmms.get(track.tl_type);
    let mut resets = 0;
    let mut observations = observations;
    observations.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then_with(|| a.camera_id.cmp(&b.camera_id)));
    for obs in observations {
        if let Some(x) = obs.confidence.restricted(track.tl_type) {
            if hmm.observe(&mut track.belief, &x, obs.timestamp)? == crate::statefilter::StepOutcome::Reset {
                resets += 1;
            }
        }
        if track.history.len() == history_len {
            track.history.pop_front();
        }
        track.history.push_back(obs);
    }
    let classes = track.history_classes();
    track.flashing.update(&classes, flashing);
    Ok(resets)
}

fn fuse_observations(
    track: &mut Track,
    observations: Vec<Observation>,
    hmms: &HmmSet,
    flashing: &FlashingConfig,
    config: &TrackerConfig,
    stats: &mut TrackerStats,
) -> Result<()> {
    stats.observations += observations.len() as u64;
    stats.filter_resets += fuse_frame_observations(track, observations, hmms, flashing, config.history_len)?;
    Ok(())
}

/// Where a provisional chain's box should appear in the current image,
/// compensating for ego-motion through its back-projected position.
fn predict_box(p: &Provisional, cam: &CameraAssociation) -> Option<PixelBox> {
    let last = p.positions.last()?;
    let in_cam = cam.cam_from_utm.transform_point(last);
    let (u, v) = project_point(&cam.intrinsics, &in_cam).ok()?;
    let scale = p.depth / in_cam.z;
    Some(PixelBox::new(u, v, p.bbox.h * scale, p.bbox.w * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::associate_camera;
    use crate::geometry::{camera_from_utm, mounted_extrinsic, project_box, CameraIntrinsics, CameraModel, TimedPose};
    use crate::hdmap::{build_index, query_visible, HdMap, LightDims};
    use nalgebra::Vector3;

    fn camera(id: &str, y_offset: f64) -> CameraModel {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 600.0, 1920.0, 1200.0).unwrap();
        CameraModel::new(id, k, mounted_extrinsic(id, Vector3::new(0.0, y_offset, 0.0), 0.0), 100.0, 120.0).unwrap()
    }

    fn light(id: &str, p: Point3<f64>) -> MapTrafficLight {
        MapTrafficLight {
            light_id: id.into(),
            position: p,
            heading_deg: 180.0,
            dims: LightDims::new(0.35, 0.76, 0.3),
            tl_type: TlType::ThreeBulb,
        }
    }

    fn tracker() -> Tracker {
        Tracker::new(
            TrackerConfig::default(),
            FlashingConfig::default(),
            HmmSet::defaults(0.98).unwrap(),
            HousingCatalog::default(),
        )
        .unwrap()
    }

    struct Scene {
        cameras: Vec<CameraModel>,
        index: SpatialIndex,
        tracker: Tracker,
    }

    impl Scene {
        fn new(map_lights: Vec<MapTrafficLight>, cameras: Vec<CameraModel>) -> Self {
            let map = HdMap {
                utm_zone: "17T".into(),
                lights: map_lights,
            };
            Scene {
                cameras,
                index: build_index(&map),
                tracker: tracker(),
            }
        }

        /// Runs one frame; `seen` lists, per camera, the true lights to
        /// render as detections with class `class`.
        fn step(&mut self, frame: u64, x: f64, seen: &[Vec<&MapTrafficLight>], class: TlClass) -> Vec<TrackReport> {
            let t = frame as f64 * 0.1;
            let pose = TimedPose::from_yaw(t, Vector3::new(x, 0.0, 0.0), 0.0);
            let visible = query_visible(&self.index, &pose, &self.cameras).unwrap();
            let assoc: Vec<CameraAssociation> = self
                .cameras
                .iter()
                .enumerate()
                .map(|(c, cam)| {
                    let cfu = camera_from_utm(&cam.extrinsic, &pose).unwrap();
                    let dets: Vec<Detection2D> = seen[c]
                        .iter()
                        .map(|l| {
                            let b = project_box(l, &cfu, &cam.intrinsics).unwrap();
                            Detection2D::new(&cam.camera_id, t, b, Confidence::one_hot(class), 0.9).unwrap()
                        })
                        .collect();
                    associate_camera(cam, &cfu, t, &visible[c], &dets, 100.0)
                })
                .collect();
            self.tracker.update(&mut self.index, frame, &assoc).unwrap()
        }
    }

    #[test]
    fn birth_needs_two_consecutive_frames() {
        let l = light("L1", Point3::new(20.0, 0.0, 0.0));
        let mut s = Scene::new(vec![l.clone()], vec![camera("cam", 0.0)]);
        assert!(s.step(0, 0.0, &[vec![&l]], TlClass::Red3).is_empty());
        let r = s.step(1, 0.0, &[vec![&l]], TlClass::Red3);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].light_id.as_deref(), Some("L1"));
        assert_eq!(r[0].state, TlClass::Red3);
        assert_eq!(r[0].position(), l.position);
    }

    #[test]
    fn frame_gap_resets_birth_counter() {
        let l = light("L1", Point3::new(20.0, 0.0, 0.0));
        let mut s = Scene::new(vec![l.clone()], vec![camera("cam", 0.0)]);
        assert!(s.step(0, 0.0, &[vec![&l]], TlClass::Red3).is_empty());
        assert!(s.step(1, 0.0, &[vec![]], TlClass::Red3).is_empty());
        assert!(s.step(2, 0.0, &[vec![&l]], TlClass::Red3).is_empty());
        assert_eq!(s.step(3, 0.0, &[vec![&l]], TlClass::Red3).len(), 1);
    }

    #[test]
    fn death_after_more_than_n_death_misses() {
        let l = light("L1", Point3::new(20.0, 0.0, 0.0));
        let mut s = Scene::new(vec![l.clone()], vec![camera("cam", 0.0)]);
        s.step(0, 0.0, &[vec![&l]], TlClass::Red3);
        s.step(1, 0.0, &[vec![&l]], TlClass::Red3);
        for miss in 1..=15u64 {
            let r = s.step(1 + miss, 0.0, &[vec![]], TlClass::Red3);
            assert_eq!(r.len(), 1, "miss {miss}");
            assert_eq!(r[0].state, TlClass::Red3);
        }
        assert!(s.step(17, 0.0, &[vec![]], TlClass::Red3).is_empty());
        assert_eq!(s.tracker.stats().deaths, 1);
        assert!(s.index.get("L1").is_some());

        // rebirth gets a fresh id and a belief rebuilt from the prior
        s.step(18, 0.0, &[vec![&l]], TlClass::Green3);
        let r = s.step(19, 0.0, &[vec![&l]], TlClass::Green3);
        assert_eq!(r[0].track_id, 1);
        assert_eq!(r[0].state, TlClass::Green3);
    }

    #[test]
    fn cameras_give_separate_observations() {
        let l = light("L1", Point3::new(20.0, 0.0, 0.0));
        let mut s = Scene::new(vec![l.clone()], vec![camera("a", 0.2), camera("b", -0.2)]);
        s.step(0, 0.0, &[vec![&l], vec![&l]], TlClass::Red3);
        s.step(1, 0.0, &[vec![&l], vec![&l]], TlClass::Red3);
        let track = s.tracker.track_for_light("L1").unwrap();
        assert_eq!(track.history.len(), 4);
        let cams: Vec<&str> = track.history.iter().map(|o| o.camera_id.as_str()).collect();
        assert_eq!(cams, ["a", "b", "a", "b"]);
        assert_eq!(s.tracker.stats().observations, 4);

        s.step(2, 0.0, &[vec![&l], vec![]], TlClass::Red3);
        assert_eq!(s.tracker.track_for_light("L1").unwrap().history.len(), 5);
        s.step(3, 0.0, &[vec![], vec![]], TlClass::Red3);
        let track = s.tracker.track_for_light("L1").unwrap();
        assert_eq!(track.history.len(), 5);
        assert_eq!(track.missed_frames, 1);
    }

    #[test]
    fn history_is_bounded() {
        let l = light("L1", Point3::new(20.0, 0.0, 0.0));
        let mut s = Scene::new(vec![l.clone()], vec![camera("a", 0.2), camera("b", -0.2)]);
        for f in 0..40 {
            s.step(f, 0.0, &[vec![&l], vec![&l]], TlClass::Red3);
        }
        assert_eq!(s.tracker.track_for_light("L1").unwrap().history.len(), 30);
    }

    #[test]
    fn single_frame_false_positive_never_tracked() {
        let fp = light("ghost", Point3::new(25.0, 3.0, 1.0));
        let mut s = Scene::new(vec![], vec![camera("cam", 0.0)]);
        s.step(0, 0.0, &[vec![&fp]], TlClass::Green3);
        for f in 1..20 {
            assert!(s.step(f, 0.0, &[vec![]], TlClass::Green3).is_empty());
        }
        assert_eq!(s.tracker.stats().spawned_lights, 0);
        assert!(s.index.is_empty());
    }

    #[test]
    fn unmapped_light_spawns_on_second_frame() {
        let hidden = light("hidden", Point3::new(30.0, 2.0, 4.0));
        let mut s = Scene::new(vec![], vec![camera("cam", 0.0)]);
        assert!(s.step(0, 0.0, &[vec![&hidden]], TlClass::Red3).is_empty());
        // the vehicle moves 1 m between frames
        let r = s.step(1, 1.0, &[vec![&hidden]], TlClass::Red3);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].light_id, None);
        let err = (r[0].position() - hidden.position).norm();
        assert!(err < 0.1 * 29.0, "error {err}");
        assert!(err < 1e-6, "noiseless back-projection should be exact, got {err}");

        // later frames associate through the index, not new spawns
        for f in 2..10 {
            let r = s.step(f, f as f64, &[vec![&hidden]], TlClass::Red3);
            assert_eq!(r.len(), 1);
        }
        assert_eq!(s.tracker.stats().spawned_lights, 1);

        // the spawned position outlives the track
        for f in 10..30 {
            s.step(f, 9.0, &[vec![]], TlClass::Red3);
        }
        assert!(s.tracker.reports().is_empty());
        assert!(s.index.get("spawn-0").is_some());
    }

    #[test]
    fn two_cameras_spawn_one_light() {
        let hidden = light("hidden", Point3::new(30.0, 2.0, 4.0));
        let mut s = Scene::new(vec![], vec![camera("a", 0.2), camera("b", -0.2)]);
        s.step(0, 0.0, &[vec![&hidden], vec![&hidden]], TlClass::Red3);
        let r = s.step(1, 0.0, &[vec![&hidden], vec![&hidden]], TlClass::Red3);
        assert_eq!(r.len(), 1);
        assert_eq!(s.tracker.stats().spawned_lights, 1);
    }

    #[test]
    fn flashing_overrides_argmax() {
        let mut l = light("arrow", Point3::new(20.0, 0.0, 0.0));
        l.tl_type = TlType::FourArrow;
        l.dims = LightDims::new(0.35, 1.07, 0.3);
        let mut s = Scene::new(vec![l.clone()], vec![camera("cam", 0.0)]);
        let mut flagged = None;
        for f in 0..40u64 {
            let class = if (f / 5) % 2 == 0 {
                TlClass::FlashingYellowLeft4
            } else {
                TlClass::Off4
            };
            let r = s.step(f, 0.0, &[vec![&l]], class);
            if flagged.is_none() && r.first().is_some_and(|t| t.flashing) {
                flagged = Some(f);
                assert_eq!(r[0].state, TlClass::FlashingYellowLeft4);
            }
        }
        assert!(flagged.is_some());
    }

    #[test]
    fn config_validation() {
        let bad = TrackerConfig {
            n_death: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let short = TrackerConfig {
            history_len: 5,
            ..Default::default()
        };
        assert!(Tracker::new(short, FlashingConfig::default(), HmmSet::defaults(0.98).unwrap(), HousingCatalog::default()).is_err());
    }
}
