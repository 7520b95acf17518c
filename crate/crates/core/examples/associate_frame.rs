//! Associates one camera image's detections with projected map lights,
//! including a type mismatch and a box outside the gate.
//!
//!     cargo run --example associate_frame

use nalgebra::{Point3, Vector3};
use tlfusion::association::{associate_camera, DEFAULT_GATE_PX};
use tlfusion::detection::{Confidence, Detection2D, TlClass, TlType};
use tlfusion::geometry::{camera_from_utm, project_box, PixelBox, TimedPose};
use tlfusion::hdmap::{build_index, query_visible, HdMap, LightDims, MapTrafficLight};
use tlfusion::simulator::benchmark::benchmark_scenario;

fn light(id: &str, y: f64, tl_type: TlType) -> MapTrafficLight {
    MapTrafficLight {
        light_id: id.into(),
        position: Point3::new(40.0, y, 5.5),
        heading_deg: 180.0,
        dims: LightDims::new(0.35, 0.76, 0.3),
        tl_type,
    }
}

fn main() -> tlfusion::Result<()> {
    let map = HdMap {
        utm_zone: "17T".into(),
        lights: vec![
            light("left", 3.0, TlType::ThreeBulb),
            light("mid", 0.0, TlType::FiveDoghouse),
            light("right", -3.0, TlType::ThreeBulb),
        ],
    };
    let index = build_index(&map);
    let camera = benchmark_scenario().camera_models()?.remove(0);
    let pose = TimedPose::from_yaw(0.0, Vector3::new(0.0, 0.0, 1.5), 0.0);
    let cfu = camera_from_utm(&camera.extrinsic, &pose)?;
    let visible = query_visible(&index, &pose, std::slice::from_ref(&camera))?;

    let shifted = |id: &str, du: f64| {
        let mut b = project_box(map.light(id).unwrap(), &cfu, &camera.intrinsics).unwrap();
        b.cx += du;
        b
    };
    let detections = vec![
        // close to "left"
        Detection2D::new("long", 0.0, shifted("left", 4.0), Confidence::one_hot(TlClass::Green3), 0.9)?,
        // on top of "mid" but labelled as a three-bulb class
        Detection2D::new("long", 0.0, shifted("mid", 0.0), Confidence::one_hot(TlClass::Red3), 0.8)?,
        // far from everything
        Detection2D::new("long", 0.0, PixelBox::new(100.0, 100.0, 20.0, 10.0), Confidence::one_hot(TlClass::Red3), 0.5)?,
    ];

    let assoc = associate_camera(&camera, &cfu, 0.0, &visible[0], &detections, DEFAULT_GATE_PX);
    for m in &assoc.matches {
        println!("{} <- {} (cost {:.1} px)", m.light_id, m.detection.detected_class(), m.cost);
    }
    for d in &assoc.unmatched {
        println!("unmatched {} at ({:.0}, {:.0})", d.detected_class(), d.bbox.cx, d.bbox.cy);
    }
    Ok(())
}
