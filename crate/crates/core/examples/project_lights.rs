//! Loads a map and a camera, finds the lights the camera can see from one
//! vehicle pose, projects their housings into the image and back-projects
//! the boxes to recover the 3D positions.
//!
//!     cargo run --example project_lights

use nalgebra::Vector3;
use tlfusion::association::back_project;
use tlfusion::detection::{Confidence, Detection2D, TlClass};
use tlfusion::geometry::{camera_from_utm, project_box, TimedPose};
use tlfusion::hdmap::{build_index, parse_map, query_visible};
use tlfusion::simulator::benchmark::benchmark_scenario;

const MAP: &str = r#"{
  "utm_zone": "17T",
  "lights": [
    {"light_id": "near", "x": 30.0, "y": 2.0, "z": 5.5, "heading_deg": 180.0,
     "width_m": 0.35, "height_m": 0.76, "depth_m": 0.3, "tl_type": "three_bulb"},
    {"light_id": "far", "x": 90.0, "y": -1.0, "z": 5.5, "heading_deg": 180.0,
     "width_m": 0.35, "height_m": 1.07, "depth_m": 0.3, "tl_type": "four_arrow"}
  ]
}"#;

fn main() -> tlfusion::Result<()> {
    let map = parse_map(MAP, "inline")?;
    let index = build_index(&map);
    let cameras = benchmark_scenario().camera_models()?;
    let pose = TimedPose::from_yaw(0.0, Vector3::new(0.0, 0.0, 1.5), 0.0);
    let visible = query_visible(&index, &pose, &cameras)?;

    for (camera, lights) in cameras.iter().zip(&visible) {
        let cam_from_utm = camera_from_utm(&camera.extrinsic, &pose)?;
        println!("camera {} ({:.0} m range)", camera.camera_id, camera.max_range);
        for entry in lights {
            let light = &entry.light;
            let Some(bbox) = project_box(light, &cam_from_utm, &camera.intrinsics) else {
                continue;
            };
            let det = Detection2D::new(&camera.camera_id, 0.0, bbox, Confidence::one_hot(TlClass::Red3), 1.0)?;
            let back = back_project(&det, &camera.intrinsics, &cam_from_utm, &light.dims)?;
            println!(
                "  {:<5} box ({:7.1}, {:6.1}) {:5.1}x{:4.1} px  back-projected error {:.4} m",
                light.light_id,
                bbox.cx,
                bbox.cy,
                bbox.w,
                bbox.h,
                (back - light.position).norm()
            );
        }
    }
    Ok(())
}
