//! Built-in scenarios.
//!
//! The benchmark drives through two intersections with a long-range and a
//! wide-angle camera. It stops 20 m before each; during the second stop a
//! protected-left arrow flashes for 20 s and one light is fully occluded
//! for ten frames.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detection::{TlClass, TlType};
use crate::geometry::{mounted_extrinsic, CalibrationRecord, CameraIntrinsics, CameraModel};
use crate::hdmap::{HdMap, HousingCatalog, MapTrafficLight};
use crate::statefilter::regulated_successors;

use super::{LightProgram, NoiseModel, Occlusion, Phase, Scenario, TypeConfusion, Waypoint};

/// UTM origin of the built-in scenarios.
pub const EASTING: f64 = 310_000.0;
pub const NORTHING: f64 = 4_690_000.0;
pub const GROUND: f64 = 250.0;
/// Light centres sit this far above the road.
const MOUNT_HEIGHT: f64 = 5.5;

pub const FLASH_LIGHT: &str = "B-2";
pub const FLASH_START: f64 = 27.0;
pub const FLASH_END: f64 = 47.0;
pub const OCCLUDED_LIGHT: &str = "B-1";
pub const OCCLUSION_START: f64 = 35.0;
pub const OCCLUSION_END: f64 = 36.0;

/// Camera from a horizontal field of view on a 1920x1200 sensor.
fn camera(id: &str, hfov_deg: f64, max_range: f64, lateral: f64) -> CameraModel {
    let fx = 960.0 / (0.5 * hfov_deg).to_radians().tan();
    let k = CameraIntrinsics::new(fx, fx, 960.0, 600.0, 1920.0, 1200.0).expect("valid intrinsics");
    CameraModel::new(id, k, mounted_extrinsic(id, Vector3::new(0.5, lateral, 1.5), 0.0), max_range, hfov_deg)
        .expect("valid camera")
}

pub fn benchmark_cameras() -> Vec<CalibrationRecord> {
    vec![
        camera("long", 47.3, 64.0, 0.15).to_calibration(),
        camera("wide", 85.7, 30.0, -0.15).to_calibration(),
    ]
}

fn light(id: &str, along: f64, lateral: f64, tl_type: TlType) -> MapTrafficLight {
    MapTrafficLight {
        light_id: id.into(),
        position: Point3::new(EASTING + along, NORTHING + lateral, GROUND + MOUNT_HEIGHT),
        heading_deg: 180.0,
        dims: *HousingCatalog::default().get(tl_type),
        tl_type,
    }
}

fn steady(state: TlClass, duration: f64) -> Phase {
    Phase::Steady { state, duration }
}

fn program(light_id: &str, phases: Vec<Phase>) -> LightProgram {
    LightProgram {
        light_id: light_id.into(),
        offset: 0.0,
        phases,
        repeat: false,
    }
}

fn waypoint(t: f64, along: f64) -> Waypoint {
    Waypoint {
        t,
        x: EASTING + along,
        y: NORTHING,
        z: GROUND,
        yaw_deg: 0.0,
    }
}

/// Row-stochastic confusion with `diag` on the diagonal and the rest of
/// each row given by `off` (relative weights, diagonal entry ignored).
fn confusion(diag: f64, off: &[&[f64]]) -> Vec<Vec<f64>> {
    off.iter()
        .enumerate()
        .map(|(i, row)| {
            let total: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, w)| w).sum();
            row.iter()
                .enumerate()
                .map(|(j, w)| if i == j { diag } else { (1.0 - diag) * w / total })
                .collect()
        })
        .collect()
}

/// Detector noise with a 93% diagonal. Arrow states are rarely mistaken
/// for the dark state, which in normal operation only appears while
/// flashing.
pub fn benchmark_noise(seed: u64) -> NoiseModel {
    NoiseModel {
        confusion: TypeConfusion {
            // red, yellow, green
            three_bulb: confusion(0.93, &[&[0.0, 5.0, 2.0], &[4.0, 0.0, 3.0], &[2.0, 5.0, 0.0]]),
            // rleft, yleft1, yleft2, gleft, off
            four_arrow: confusion(
                0.93,
                &[
                    &[0.0, 3.0, 2.0, 1.0, 1.0],
                    &[2.0, 0.0, 3.0, 1.0, 1.0],
                    &[1.0, 4.0, 0.0, 1.0, 1.0],
                    &[1.0, 2.0, 3.0, 0.0, 1.0],
                    &[1.0, 1.0, 3.0, 2.0, 0.0],
                ],
            ),
            // red, red-yleft, red-gleft, yellow, green
            five_doghouse: confusion(
                0.93,
                &[
                    &[0.0, 3.0, 2.0, 1.0, 1.0],
                    &[3.0, 0.0, 2.0, 1.0, 1.0],
                    &[2.0, 2.0, 0.0, 1.0, 2.0],
                    &[2.0, 2.0, 1.0, 0.0, 2.0],
                    &[1.0, 1.0, 3.0, 2.0, 0.0],
                ],
            ),
        },
        miss_rate: 0.03,
        fp_rate: 0.1,
        jitter_px: 1.0,
        soft_confidence: true,
        seed,
    }
}

pub fn benchmark_scenario() -> Scenario {
    use TlClass::*;
    let lights = vec![
        light("A-1", 70.0, 4.0, TlType::ThreeBulb),
        light("A-2", 70.0, -1.0, TlType::ThreeBulb),
        light("A-3", 70.0, -5.0, TlType::FiveDoghouse),
        light("B-1", 130.0, 4.0, TlType::ThreeBulb),
        light("B-2", 130.0, 0.0, TlType::FourArrow),
        light("B-3", 130.0, -4.0, TlType::ThreeBulb),
    ];
    let programs = vec![
        program("A-1", vec![steady(Red3, 9.0), steady(Green3, 21.0), steady(Yellow3, 4.0), steady(Red3, 26.0)]),
        program("A-2", vec![steady(Red3, 9.0), steady(Green3, 21.0), steady(Yellow3, 4.0), steady(Red3, 26.0)]),
        program(
            "A-3",
            vec![steady(Red5, 7.0), steady(RedGreenLeft5, 5.0), steady(RedYellowLeft5, 3.0), steady(Red5, 45.0)],
        ),
        program("B-1", vec![steady(Green3, 20.0), steady(Yellow3, 4.0), steady(Red3, 25.0), steady(Green3, 11.0)]),
        program(
            "B-2",
            vec![
                steady(RedLeft4, 15.0),
                steady(GreenLeft4, 8.0),
                steady(YellowLeft4, FLASH_START - 23.0),
                Phase::Flashing {
                    on_class: FlashingYellowLeft4,
                    frequency_hz: 1.0,
                    duty: 0.5,
                    duration: FLASH_END - FLASH_START,
                },
                steady(RedLeft4, 13.0),
            ],
        ),
        program("B-3", vec![steady(Red3, 25.0), steady(Green3, 20.0), steady(Yellow3, 4.0), steady(Red3, 11.0)]),
    ];
    let occlusions = ["long", "wide"]
        .iter()
        .map(|cam| Occlusion {
            light_id: OCCLUDED_LIGHT.into(),
            camera_id: (*cam).into(),
            start: OCCLUSION_START,
            end: OCCLUSION_END,
        })
        .collect();
    Scenario {
        map: HdMap {
            utm_zone: "17T".into(),
            lights,
        },
        trajectory: vec![
            waypoint(0.0, 0.0),
            waypoint(5.0, 50.0),
            waypoint(12.0, 50.0),
            waypoint(18.0, 110.0),
            waypoint(50.0, 110.0),
            waypoint(56.0, 170.0),
        ],
        cameras: benchmark_cameras(),
        programs,
        occlusions,
        frame_rate: 10.0,
        noise: benchmark_noise(7),
        hidden_from_map: Vec::new(),
    }
}

/// Stationary vehicle 25 m before a gantry of ten lights that both
/// cameras see, for throughput measurement.
pub fn throughput_scenario(duration_s: f64) -> Scenario {
    let types = [TlType::ThreeBulb, TlType::FourArrow, TlType::FiveDoghouse];
    let mut lights = Vec::new();
    let mut programs = Vec::new();
    for i in 0..10 {
        let tl_type = types[i % 3];
        let id = format!("G-{i}");
        lights.push(light(&id, 25.0, -9.0 + 2.0 * i as f64, tl_type));
        programs.push(LightProgram {
            repeat: true,
            ..program(&id, steady_cycle(tl_type, 8.0))
        });
    }
    Scenario {
        map: HdMap {
            utm_zone: "17T".into(),
            lights,
        },
        trajectory: vec![waypoint(0.0, 0.0), waypoint(duration_s, 0.0)],
        cameras: benchmark_cameras(),
        programs,
        occlusions: Vec::new(),
        frame_rate: 10.0,
        noise: benchmark_noise(11),
        hidden_from_map: Vec::new(),
    }
}

/// One full regulated cycle through the type's lit states.
fn steady_cycle(tl_type: TlType, phase_s: f64) -> Vec<Phase> {
    use TlClass::*;
    let states: &[TlClass] = match tl_type {
        TlType::ThreeBulb => &[Red3, Green3, Yellow3],
        TlType::FourArrow => &[RedLeft4, GreenLeft4, YellowLeft4, FlashingYellowLeft4],
        TlType::FiveDoghouse => &[Red5, RedGreenLeft5, RedYellowLeft5, Red5, Green5, Yellow5],
    };
    states.iter().map(|s| steady(*s, phase_s)).collect()
}

/// Random regulated walk over lit states only (no dark state, so nothing
/// flashes),
/// with phase lengths of 2 to 20 s.
pub fn random_steady_program(light_id: &str, tl_type: TlType, total_s: f64, rng: &mut impl Rng) -> LightProgram {
    let lit: Vec<TlClass> = tl_type.valid_states().iter().copied().filter(|c| c.is_on()).collect();
    let mut state = lit[rng.random_range(0..lit.len())];
    let mut phases = Vec::new();
    let mut elapsed = 0.0;
    while elapsed < total_s {
        let d = rng.random_range(2.0..20.0_f64).round();
        phases.push(steady(state, d));
        elapsed += d;
        // every lit state has a lit successor; steady 4-yleft2 closes the
        // arrow cycle without the dark state
        let next: Vec<TlClass> = regulated_successors(state).iter().copied().filter(|c| c.is_on()).collect();
        state = next[rng.random_range(0..next.len())];
    }
    program(light_id, phases)
}

/// Stationary vehicle before one light of each type running random steady
/// programs, for false-flashing checks over long runs.
pub fn steady_fuzz_scenario(frames: u64, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let duration = (frames - 1) as f64 / 10.0;
    let specs = [
        ("F-3", -3.0, TlType::ThreeBulb),
        ("F-4", 0.0, TlType::FourArrow),
        ("F-5", 3.0, TlType::FiveDoghouse),
    ];
    let lights = specs.iter().map(|(id, lat, t)| light(id, 22.0, *lat, *t)).collect();
    let programs = specs
        .iter()
        .map(|(id, _, t)| random_steady_program(id, *t, duration + 1.0, &mut rng))
        .collect();
    Scenario {
        map: HdMap {
            utm_zone: "17T".into(),
            lights,
        },
        trajectory: vec![waypoint(0.0, 0.0), waypoint(duration, 0.0)],
        cameras: benchmark_cameras(),
        programs,
        occlusions: Vec::new(),
        frame_rate: 10.0,
        noise: benchmark_noise(seed),
        hidden_from_map: Vec::new(),
    }
}
