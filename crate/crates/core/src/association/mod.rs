//! Map-to-detection association: gated box costs, optimal one-to-one
//! assignment, and size-prior back-projection for detections that match no
//! known light.

mod hungarian;

use nalgebra::Point3;

use crate::detection::{Detection2D, TlType};
use crate::error::{Error, Result};
use crate::geometry::{project_box, CameraIntrinsics, CameraModel, PixelBox, RigidTransform};
use crate::hdmap::{IndexedLight, LightDims, LightOrigin};

/// Default association gate, pixels.
pub const DEFAULT_GATE_PX: f64 = 100.0;

/// Dense `rows x cols` cost matrix; `f64::INFINITY` marks a forbidden pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data
            .iter()
            .find(|c| !(c.is_finite() && **c >= 0.0) && **c != f64::INFINITY)
        {
            return Err(Error::invalid(
                "cost",
                format!("entry {bad} is neither finite >= 0 nor infinite"),
            ));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged cost rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn is_feasible(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_finite()
    }
}

/// One-to-one pairs `(row, col)` sorted by row, and the sum of their costs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn col_for_row(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == i).map(|p| p.1)
    }

    pub fn row_for_col(&self, j: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == j).map(|p| p.0)
    }
}

/// `c(i, j) = c_L2 + c_type`: the (cx, cy, h, w) distance when it is within
/// `gate` and the detection's class belongs to the light's type, infinity
/// otherwise.
pub fn build_cost_matrix(
    projected: &[(PixelBox, TlType)],
    detections: &[Detection2D],
    gate: f64,
) -> CostMatrix {
    let mut data = Vec::with_capacity(projected.len() * detections.len());
    for (bbox, tl_type) in projected {
        for det in detections {
            let l2 = bbox.l2_distance(&det.bbox);
            let compatible = tl_type.contains(det.detected_class());
            data.push(if compatible && l2 <= gate {
                l2
            } else {
                f64::INFINITY
            });
        }
    }
    CostMatrix {
        rows: projected.len(),
        cols: detections.len(),
        data,
    }
}

/// Optimal assignment over the finite entries.
///
/// Infinite entries are replaced by a sentinel larger than the sum of all
/// finite costs, so the solver first maximizes the number of feasible pairs
/// and then minimizes their total cost; sentinel pairs are dropped.
pub fn solve_assignment(costs: &CostMatrix) -> Assignment {
    let (rows, cols) = (costs.rows, costs.cols);
    if rows == 0 || cols == 0 || costs.data.iter().all(|c| c.is_infinite()) {
        return Assignment::default();
    }
    let finite_sum: f64 = costs.data.iter().filter(|c| c.is_finite()).sum();
    let sentinel = 2.0 * finite_sum + 1.0;
    let sub = |c: f64| if c.is_finite() { c } else { sentinel };

    let transposed = rows > cols;
    let (n, m) = if transposed {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let mut dense = Vec::with_capacity(n * m);
    for a in 0..n {
        for b in 0..m {
            let (i, j) = if transposed { (b, a) } else { (a, b) };
            dense.push(sub(costs.get(i, j)));
        }
    }
    let choice = hungarian::solve_dense(&dense, n, m);

    let mut pairs: Vec<(usize, usize)> = choice
        .into_iter()
        .enumerate()
        .map(|(a, b)| if transposed { (b, a) } else { (a, b) })
        .filter(|&(i, j)| costs.is_feasible(i, j))
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| costs.get(i, j)).sum();
    Assignment { pairs, total_cost }
}

/// Camera-frame housing centroid from a detection box and a known housing
/// size, assuming the housing squarely faces the camera.
///
/// On the optical axis the apparent height is set by the near face, so the
/// centroid lies half a housing depth beyond `fy * height / h`. Off axis the
/// hull also takes in part of a top or side face; a few fixed-point steps
/// move the estimate until its projected hull matches the observed box.
pub fn back_project_camera(bbox: &PixelBox, k: &CameraIntrinsics, dims: &LightDims) -> Result<Point3<f64>> {
    if !(bbox.h > 0.0) {
        return Err(Error::DegenerateBox { h: bbox.h });
    }
    if !(dims.height > 0.0) || dims.depth < 0.0 || dims.width < 0.0 {
        return Err(Error::invalid("housing", format!("{dims:?}")));
    }
    let ray_point = |u: f64, v: f64, z: f64| Point3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z);
    let (mut u, mut v) = (bbox.cx, bbox.cy);
    let mut z = k.fy * dims.height / bbox.h + 0.5 * dims.depth;
    for _ in 0..BACK_PROJECT_ITERATIONS {
        let Some(hull) = facing_hull(&ray_point(u, v, z), k, dims) else {
            break;
        };
        z *= hull.h / bbox.h;
        u += bbox.cx - hull.cx;
        v += bbox.cy - hull.cy;
    }
    Ok(ray_point(u, v, z))
}

const BACK_PROJECT_ITERATIONS: usize = 8;

/// Projected hull of a camera-aligned housing centred at `p`.
fn facing_hull(p: &Point3<f64>, k: &CameraIntrinsics, dims: &LightDims) -> Option<PixelBox> {
    let (hw, hh, hd) = (0.5 * dims.width, 0.5 * dims.height, 0.5 * dims.depth);
    if p.z - hd <= 0.0 {
        return None;
    }
    let mut ext = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let z = p.z + sz * hd;
                let u = k.fx * (p.x + sx * hw) / z + k.cx;
                let v = k.fy * (p.y + sy * hh) / z + k.cy;
                ext = (ext.0.min(u), ext.1.min(v), ext.2.max(u), ext.3.max(v));
            }
        }
    }
    Some(PixelBox::from_extent(ext.0, ext.1, ext.2, ext.3))
}

/// UTM position of an unmatched detection.
pub fn back_project(
    detection: &Detection2D,
    k: &CameraIntrinsics,
    cam_from_utm: &RigidTransform,
    dims: &LightDims,
) -> Result<Point3<f64>> {
    let p_cam = back_project_camera(&detection.bbox, k, dims)?;
    Ok(cam_from_utm.inverse().transform_point(&p_cam))
}

/// A detection paired with a light from the index.
#[derive(Clone, Debug, PartialEq)]
pub struct LightMatch {
    pub light_id: String,
    pub origin: LightOrigin,
    pub tl_type: TlType,
    pub position: Point3<f64>,
    /// Projected (and clipped) map box.
    pub projected: PixelBox,
    pub detection: Detection2D,
    pub cost: f64,
}

/// Association result for one camera image.
#[derive(Clone, Debug)]
pub struct CameraAssociation {
    pub camera_id: String,
    pub timestamp: f64,
    pub cam_from_utm: RigidTransform,
    pub intrinsics: CameraIntrinsics,
    /// Sorted by light id.
    pub matches: Vec<LightMatch>,
    /// Detections left over, in input order.
    pub unmatched: Vec<Detection2D>,
}

/// Projects the candidate lights, clips them to the image, and solves the
/// gated assignment against this camera's detections.
pub fn associate_camera(
    camera: &CameraModel,
    cam_from_utm: &RigidTransform,
    timestamp: f64,
    visible: &[&IndexedLight],
    detections: &[Detection2D],
    gate: f64,
) -> CameraAssociation {
    let k = &camera.intrinsics;
    let projected: Vec<(&IndexedLight, PixelBox)> = visible
        .iter()
        .filter_map(|l| {
            let b = project_box(&l.light, cam_from_utm, k)?.clipped_to(k.width, k.height)?;
            Some((*l, b))
        })
        .collect();
    let rows: Vec<(PixelBox, TlType)> = projected
        .iter()
        .map(|(l, b)| (*b, l.light.tl_type))
        .collect();
    let costs = build_cost_matrix(&rows, detections, gate);
    let assignment = solve_assignment(&costs);

    let mut matched_cols = vec![false; detections.len()];
    let mut matches: Vec<LightMatch> = assignment
        .pairs
        .iter()
        .map(|&(i, j)| {
            matched_cols[j] = true;
            let (light, bbox) = projected[i];
            LightMatch {
                light_id: light.light.light_id.clone(),
                origin: light.origin,
                tl_type: light.light.tl_type,
                position: light.light.position,
                projected: bbox,
                detection: detections[j].clone(),
                cost: costs.get(i, j),
            }
        })
        .collect();
    matches.sort_by(|a, b| a.light_id.cmp(&b.light_id));
    let unmatched = detections
        .iter()
        .zip(matched_cols)
        .filter(|(_, m)| !m)
        .map(|(d, _)| d.clone())
        .collect();
    CameraAssociation {
        camera_id: camera.camera_id.clone(),
        timestamp,
        cam_from_utm: cam_from_utm.clone(),
        intrinsics: k.clone(),
        matches,
        unmatched,
    }
}
