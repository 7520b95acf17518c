//! Walks one map light through birth, occlusion and death and prints the
//! tracker's view of it each frame.
//!
//!     cargo run --example track_lifecycle

use nalgebra::{Point3, Vector3};
use tlfusion::association::associate_camera;
use tlfusion::detection::{Confidence, Detection2D, TlClass, TlType};
use tlfusion::geometry::{camera_from_utm, project_box, TimedPose};
use tlfusion::hdmap::{build_index, query_visible, HdMap, HousingCatalog, LightDims, MapTrafficLight};
use tlfusion::simulator::benchmark::benchmark_scenario;
use tlfusion::statefilter::{FlashingConfig, HmmSet};
use tlfusion::tracker::{Tracker, TrackerConfig};

fn main() -> tlfusion::Result<()> {
    let light = MapTrafficLight {
        light_id: "L1".into(),
        position: Point3::new(30.0, 0.0, 5.5),
        heading_deg: 180.0,
        dims: LightDims::new(0.35, 0.76, 0.3),
        tl_type: TlType::ThreeBulb,
    };
    let mut index = build_index(&HdMap { utm_zone: "17T".into(), lights: vec![light.clone()] });
    let cameras = benchmark_scenario().camera_models()?;
    let mut tracker = Tracker::new(
        TrackerConfig::default(),
        FlashingConfig::default(),
        HmmSet::defaults(0.98)?,
        HousingCatalog::default(),
    )?;

    // seen on frames 0..5, occluded for 6, seen again, then gone for good
    let seen = |f: u64| f < 5 || (11..14).contains(&f);
    for frame in 0..32u64 {
        let t = frame as f64 * 0.1;
        let pose = TimedPose::from_yaw(t, Vector3::new(0.0, 0.0, 1.5), 0.0);
        let visible = query_visible(&index, &pose, &cameras)?;
        let assoc: Vec<_> = cameras
            .iter()
            .zip(&visible)
            .map(|(cam, vis)| {
                let cfu = camera_from_utm(&cam.extrinsic, &pose)?;
                let dets: Vec<Detection2D> = project_box(&light, &cfu, &cam.intrinsics)
                    .filter(|_| seen(frame))
                    .map(|b| Detection2D::new(&cam.camera_id, t, b, Confidence::one_hot(TlClass::Red3), 0.9))
                    .transpose()?
                    .into_iter()
                    .collect();
                Ok(associate_camera(cam, &cfu, t, vis, &dets, 100.0))
            })
            .collect::<tlfusion::Result<_>>()?;
        let reports = tracker.update(&mut index, frame, &assoc)?;
        let track = tracker.track_for_light("L1");
        println!(
            "frame {frame:>2} detected {:<5} reported {:<5} hits {} missed {}",
            seen(frame),
            !reports.is_empty(),
            track.map_or(0, |t| t.consecutive_hits),
            track.map_or(0, |t| t.missed_frames),
        );
    }
    let s = tracker.stats();
    println!("births {} deaths {}; light still in index: {}", s.births, s.deaths, index.get("L1").is_some());
    Ok(())
}
