//! HD-map traffic lights, the spatial index over them, and per-camera
//! visibility queries.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Point3;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::detection::TlType;
use crate::error::{Error, Result};
use crate::geometry::{camera_from_utm, CameraModel, OrientedBox, RigidTransform, TimedPose};

/// Housing size in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightDims {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
}

impl LightDims {
    pub fn new(width: f64, height: f64, depth: f64) -> Self {
        LightDims {
            width,
            height,
            depth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.width, self.height, self.depth]
            .iter()
            .all(|d| d.is_finite() && *d > 0.0)
        {
            Ok(())
        } else {
            Err(Error::invalid(
                "light dims",
                format!("{self:?} must all be > 0"),
            ))
        }
    }
}

/// Nominal housing size per type, used as the size prior for
/// back-projection and for lights spawned from detections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HousingCatalog {
    pub three_bulb: LightDims,
    pub four_arrow: LightDims,
    pub five_doghouse: LightDims,
}

impl Default for HousingCatalog {
    fn default() -> Self {
        HousingCatalog {
            three_bulb: LightDims::new(0.35, 0.76, 0.3),
            four_arrow: LightDims::new(0.35, 1.07, 0.3),
            five_doghouse: LightDims::new(0.76, 0.76, 0.3),
        }
    }
}

impl HousingCatalog {
    pub fn get(&self, tl_type: TlType) -> &LightDims {
        match tl_type {
            TlType::ThreeBulb => &self.three_bulb,
            TlType::FourArrow => &self.four_arrow,
            TlType::FiveDoghouse => &self.five_doghouse,
        }
    }

    pub fn validate(&self) -> Result<()> {
        TlType::ALL.iter().try_for_each(|t| self.get(*t).validate())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapTrafficLight {
    pub light_id: String,
    /// Housing centre, UTM metres.
    pub position: Point3<f64>,
    /// Facing direction, degrees counter-clockwise from UTM east.
    pub heading_deg: f64,
    pub dims: LightDims,
    pub tl_type: TlType,
}

impl MapTrafficLight {
    pub fn oriented_box(&self) -> OrientedBox {
        OrientedBox {
            center: self.position,
            heading_deg: self.heading_deg,
            width: self.dims.width,
            height: self.dims.height,
            depth: self.dims.depth,
        }
    }

    pub fn to_record(&self) -> MapLightRecord {
        MapLightRecord {
            light_id: self.light_id.clone(),
            x: self.position.x,
            y: self.position.y,
            z: self.position.z,
            heading_deg: self.heading_deg,
            width_m: self.dims.width,
            height_m: self.dims.height,
            depth_m: self.dims.depth,
            tl_type: self.tl_type,
        }
    }
}

/// Flat JSON form of a map light.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapLightRecord {
    pub light_id: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading_deg: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub depth_m: f64,
    pub tl_type: TlType,
}

impl From<MapLightRecord> for MapTrafficLight {
    fn from(r: MapLightRecord) -> Self {
        MapTrafficLight {
            light_id: r.light_id,
            position: Point3::new(r.x, r.y, r.z),
            heading_deg: r.heading_deg,
            dims: LightDims::new(r.width_m, r.height_m, r.depth_m),
            tl_type: r.tl_type,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "HdMapRecord", into = "HdMapRecord")]
pub struct HdMap {
    pub utm_zone: String,
    pub lights: Vec<MapTrafficLight>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct HdMapRecord {
    utm_zone: String,
    lights: Vec<MapLightRecord>,
}

impl From<HdMapRecord> for HdMap {
    fn from(r: HdMapRecord) -> Self {
        HdMap {
            utm_zone: r.utm_zone,
            lights: r.lights.into_iter().map(Into::into).collect(),
        }
    }
}

impl From<HdMap> for HdMapRecord {
    fn from(m: HdMap) -> Self {
        HdMapRecord {
            utm_zone: m.utm_zone,
            lights: m.lights.iter().map(MapTrafficLight::to_record).collect(),
        }
    }
}

impl HdMap {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for light in &self.lights {
            if !seen.insert(light.light_id.as_str()) {
                return Err(Error::DuplicateLightId(light.light_id.clone()));
            }
            light.dims.validate()?;
        }
        Ok(())
    }

    pub fn light(&self, light_id: &str) -> Option<&MapTrafficLight> {
        self.lights.iter().find(|l| l.light_id == light_id)
    }
}

pub fn parse_map(text: &str, source_name: &str) -> Result<HdMap> {
    let map: HdMap = serde_json::from_str(text).map_err(|e| Error::parse(source_name, &e))?;
    map.validate()?;
    Ok(map)
}

pub fn load_map(path: &Path) -> Result<HdMap> {
    let text = std::fs::read_to_string(path)?;
    parse_map(&text, &path.display().to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LightOrigin {
    Map,
    /// Inserted at runtime from back-projected detections.
    Spawned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexedLight {
    pub light: MapTrafficLight,
    pub origin: LightOrigin,
}

type Entry = GeomWithData<[f64; 3], usize>;

/// R-tree over light positions.
///
/// Map lights are bulk loaded; spawned lights are added through
/// [`SpatialIndex::insert_spawned`], which needs `&mut self`, so readers
/// always see a consistent snapshot.
#[derive(Clone, Debug, Default)]
pub struct SpatialIndex {
    tree: RTree<Entry>,
    entries: Vec<IndexedLight>,
    ids: HashMap<String, usize>,
}

pub fn build_index(map: &HdMap) -> SpatialIndex {
    let entries: Vec<IndexedLight> = map
        .lights
        .iter()
        .map(|l| IndexedLight {
            light: l.clone(),
            origin: LightOrigin::Map,
        })
        .collect();
    let tree = RTree::bulk_load(
        entries
            .iter()
            .enumerate()
            .map(|(i, e)| Entry::new(point_key(&e.light.position), i))
            .collect(),
    );
    let ids = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.light.light_id.clone(), i))
        .collect();
    SpatialIndex { tree, entries, ids }
}

fn point_key(p: &Point3<f64>) -> [f64; 3] {
    [p.x, p.y, p.z]
}

impl SpatialIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexedLight] {
        &self.entries
    }

    pub fn get(&self, light_id: &str) -> Option<&IndexedLight> {
        self.ids.get(light_id).map(|&i| &self.entries[i])
    }

    /// Lights within `radius` (inclusive) of `center`, in insertion order.
    pub fn query_radius(&self, center: &Point3<f64>, radius: f64) -> Vec<&IndexedLight> {
        let mut hits: Vec<usize> = self
            .tree
            .locate_within_distance(point_key(center), radius * radius)
            .map(|e| e.data)
            .collect();
        hits.sort_unstable();
        hits.into_iter().map(|i| &self.entries[i]).collect()
    }

    pub fn insert_spawned(&mut self, light: MapTrafficLight) -> Result<()> {
        if self.ids.contains_key(&light.light_id) {
            return Err(Error::DuplicateLightId(light.light_id));
        }
        light.dims.validate()?;
        let i = self.entries.len();
        self.tree.insert(Entry::new(point_key(&light.position), i));
        self.ids.insert(light.light_id.clone(), i);
        self.entries.push(IndexedLight {
            light,
            origin: LightOrigin::Spawned,
        });
        Ok(())
    }
}

/// Horizontal field-of-view and range test for a UTM point.
pub fn camera_sees(
    camera: &CameraModel,
    cam_from_utm: &RigidTransform,
    point: &Point3<f64>,
) -> bool {
    let p = cam_from_utm.transform_point(point);
    if p.coords.norm() > camera.max_range {
        return false;
    }
    let bearing = p.x.atan2(p.z).to_degrees();
    bearing.abs() <= 0.5 * camera.horizontal_fov_deg
}

/// Per-camera candidate lights: a coarse radius query around the vehicle,
/// then a per-camera range and horizontal FOV filter.
pub fn query_visible<'a>(
    index: &'a SpatialIndex,
    vehicle_pose: &TimedPose,
    cameras: &[CameraModel],
) -> Result<Vec<Vec<&'a IndexedLight>>> {
    // padding by the lever arm keeps the coarse query a superset of what any
    // camera can see
    let radius = cameras
        .iter()
        .map(|c| c.max_range + c.position_in_ins().norm())
        .fold(0.0, f64::max);
    let center = Point3::from(vehicle_pose.translation);
    let nearby = index.query_radius(&center, radius);
    cameras
        .iter()
        .map(|camera| {
            let cam_from_utm = camera_from_utm(&camera.extrinsic, vehicle_pose)?;
            Ok(nearby
                .iter()
                .copied()
                .filter(|l| camera_sees(camera, &cam_from_utm, &l.light.position))
                .collect())
        })
        .collect()
}
