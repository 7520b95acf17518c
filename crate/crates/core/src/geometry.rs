//! Rigid transforms, timed pose interpolation and pinhole projection.
//!
//! Conventions: a [`RigidTransform`] from frame `A` to frame `B` maps point
//! coordinates expressed in `A` into `B`. The INS body frame is x-forward,
//! y-left, z-up; camera frames are x-right, y-down, z along the optical axis.
//! Images are assumed rectified.

use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdmap::MapTrafficLight;

pub const INS_FRAME: &str = "ins";
pub const UTM_FRAME: &str = "utm";

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// SE(3) transform between two named frames.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    pub frame_from: String,
    pub frame_to: String,
    pub isometry: Isometry3<f64>,
}

impl RigidTransform {
    pub fn new(
        frame_from: impl Into<String>,
        frame_to: impl Into<String>,
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
    ) -> Self {
        RigidTransform {
            frame_from: frame_from.into(),
            frame_to: frame_to.into(),
            isometry: Isometry3::from_parts(Translation3::from(translation), rotation),
        }
    }

    pub fn identity(frame_from: impl Into<String>, frame_to: impl Into<String>) -> Self {
        Self::new(
            frame_from,
            frame_to,
            UnitQuaternion::identity(),
            Vector3::zeros(),
        )
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.isometry.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.isometry.translation.vector
    }

    pub fn inverse(&self) -> RigidTransform {
        RigidTransform {
            frame_from: self.frame_to.clone(),
            frame_to: self.frame_from.clone(),
            isometry: self.isometry.inverse(),
        }
    }

    /// `self ∘ inner`: apply `inner` first. `inner` must end where `self` starts.
    pub fn compose(&self, inner: &RigidTransform) -> Result<RigidTransform> {
        if self.frame_from != inner.frame_to {
            return Err(Error::FrameChain {
                left_from: self.frame_from.clone(),
                left_to: self.frame_to.clone(),
                right_from: inner.frame_from.clone(),
                right_to: inner.frame_to.clone(),
            });
        }
        Ok(RigidTransform {
            frame_from: inner.frame_from.clone(),
            frame_to: self.frame_to.clone(),
            isometry: self.isometry * inner.isometry,
        })
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.isometry.transform_point(p)
    }
}

/// Vehicle pose (INS to UTM) at a timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedPose {
    pub timestamp: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl TimedPose {
    pub fn new(timestamp: f64, rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        TimedPose {
            timestamp,
            rotation,
            translation,
        }
    }

    /// Planar pose with heading `yaw_deg` (counter-clockwise from UTM east).
    pub fn from_yaw(timestamp: f64, translation: Vector3<f64>, yaw_deg: f64) -> Self {
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians());
        TimedPose::new(timestamp, rotation, translation)
    }

    pub fn as_transform(&self) -> RigidTransform {
        RigidTransform::new(INS_FRAME, UTM_FRAME, self.rotation, self.translation)
    }

    pub fn to_record(&self) -> PoseRecord {
        let q = self.rotation.quaternion();
        PoseRecord {
            t: self.timestamp,
            x: self.translation.x,
            y: self.translation.y,
            z: self.translation.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
        }
    }
}

/// One line of the pose JSONL stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
}

impl TryFrom<PoseRecord> for TimedPose {
    type Error = Error;

    fn try_from(r: PoseRecord) -> Result<Self> {
        let rotation = unit_quaternion_wxyz([r.qw, r.qx, r.qy, r.qz])?;
        Ok(TimedPose::new(r.t, rotation, Vector3::new(r.x, r.y, r.z)))
    }
}

fn unit_quaternion_wxyz(q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = quat.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(Error::invalid(
            "quaternion",
            format!("norm {norm} is not 1"),
        ));
    }
    Ok(UnitQuaternion::from_quaternion(quat))
}

/// Time-ordered pose buffer with strictly increasing timestamps.
#[derive(Clone, Debug, Default)]
pub struct PoseBuffer {
    poses: Vec<TimedPose>,
}

impl PoseBuffer {
    pub fn new(poses: Vec<TimedPose>) -> Result<Self> {
        for (i, w) in poses.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::UnorderedPoses { index: i + 1 });
            }
        }
        Ok(PoseBuffer { poses })
    }

    pub fn poses(&self) -> &[TimedPose] {
        &self.poses
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.poses.first()?.timestamp, self.poses.last()?.timestamp))
    }

    pub fn covers(&self, t: f64) -> bool {
        self.span().is_some_and(|(a, b)| a <= t && t <= b)
    }

    pub fn interpolate(&self, t: f64) -> Result<TimedPose> {
        interpolate_pose(&self.poses, t)
    }
}

/// Pose at `t`: linear in translation, spherical in rotation, between the
/// two bracketing samples. Exact timestamps return the stored pose verbatim.
pub fn interpolate_pose(buffer: &[TimedPose], t: f64) -> Result<TimedPose> {
    let (first, last) = match (buffer.first(), buffer.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyPoseBuffer),
    };
    if !(first.timestamp <= t && t <= last.timestamp) {
        return Err(Error::Extrapolation {
            t,
            start: first.timestamp,
            end: last.timestamp,
        });
    }
    // index of the first pose with timestamp >= t
    let hi = buffer.partition_point(|p| p.timestamp < t);
    let upper = &buffer[hi];
    if upper.timestamp == t {
        return Ok(upper.clone());
    }
    let lower = &buffer[hi - 1];
    let s = (t - lower.timestamp) / (upper.timestamp - lower.timestamp);
    let translation = lower.translation.lerp(&upper.translation, s);
    // try_slerp only fails for antipodal rotations; there is no unique path then.
    let rotation = lower
        .rotation
        .try_slerp(&upper.rotation, s, 1e-12)
        .unwrap_or(if s < 0.5 {
            lower.rotation
        } else {
            upper.rotation
        });
    Ok(TimedPose::new(t, rotation, translation))
}

/// `T_cam_utm(t) = T_cam_ins · T_utm_ins(t)⁻¹`.
pub fn camera_from_utm(
    extrinsic: &RigidTransform,
    vehicle_pose: &TimedPose,
) -> Result<RigidTransform> {
    extrinsic.compose(&vehicle_pose.as_transform().inverse())
}

/// Pinhole intrinsics, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(
                "intrinsics",
                "focal lengths must be positive",
            ));
        }
        if !(0.0 < self.cx && self.cx < self.width && 0.0 < self.cy && self.cy < self.height) {
            return Err(Error::invalid(
                "intrinsics",
                "principal point must lie inside the image",
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Pinhole projection of a camera-frame point.
pub fn project_point(k: &CameraIntrinsics, p_cam: &Point3<f64>) -> Result<(f64, f64)> {
    if p_cam.z <= 0.0 {
        return Err(Error::BehindCamera { z: p_cam.z });
    }
    Ok((
        k.fx * p_cam.x / p_cam.z + k.cx,
        k.fy * p_cam.y / p_cam.z + k.cy,
    ))
}

/// A mounted camera.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub camera_id: String,
    pub intrinsics: CameraIntrinsics,
    /// INS to camera.
    pub extrinsic: RigidTransform,
    pub max_range: f64,
    pub horizontal_fov_deg: f64,
}

impl CameraModel {
    pub fn new(
        camera_id: impl Into<String>,
        intrinsics: CameraIntrinsics,
        extrinsic: RigidTransform,
        max_range: f64,
        horizontal_fov_deg: f64,
    ) -> Result<Self> {
        let camera = CameraModel {
            camera_id: camera_id.into(),
            intrinsics,
            extrinsic,
            max_range,
            horizontal_fov_deg,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !(self.max_range > 0.0) {
            return Err(Error::invalid("camera", "max_range must be positive"));
        }
        if !(self.horizontal_fov_deg > 0.0 && self.horizontal_fov_deg < 180.0) {
            return Err(Error::invalid(
                "camera",
                "horizontal fov must lie in (0, 180)",
            ));
        }
        if self.extrinsic.frame_from != INS_FRAME || self.extrinsic.frame_to != self.camera_id {
            return Err(Error::invalid(
                "camera",
                format!(
                    "extrinsic must map `{INS_FRAME}` to `{}`, got `{}` to `{}`",
                    self.camera_id, self.extrinsic.frame_from, self.extrinsic.frame_to
                ),
            ));
        }
        Ok(())
    }

    /// Camera position in the INS frame.
    pub fn position_in_ins(&self) -> Vector3<f64> {
        self.extrinsic.inverse().translation()
    }

    pub fn from_calibration(rec: CalibrationRecord) -> Result<Self> {
        let rotation = unit_quaternion_wxyz(rec.extrinsic.quaternion)?;
        let t = rec.extrinsic.translation;
        let extrinsic = RigidTransform::new(
            INS_FRAME,
            rec.camera_id.clone(),
            rotation,
            Vector3::new(t[0], t[1], t[2]),
        );
        let intrinsics = CameraIntrinsics {
            fx: rec.fx,
            fy: rec.fy,
            cx: rec.cx,
            cy: rec.cy,
            width: rec.width,
            height: rec.height,
        };
        CameraModel::new(
            rec.camera_id,
            intrinsics,
            extrinsic,
            rec.max_range_m,
            rec.hfov_deg,
        )
    }

    pub fn to_calibration(&self) -> CalibrationRecord {
        let q = self.extrinsic.rotation().quaternion();
        let t = self.extrinsic.translation();
        CalibrationRecord {
            camera_id: self.camera_id.clone(),
            fx: self.intrinsics.fx,
            fy: self.intrinsics.fy,
            cx: self.intrinsics.cx,
            cy: self.intrinsics.cy,
            width: self.intrinsics.width,
            height: self.intrinsics.height,
            extrinsic: ExtrinsicRecord {
                quaternion: [q.w, q.i, q.j, q.k],
                translation: [t.x, t.y, t.z],
            },
            max_range_m: self.max_range,
            hfov_deg: self.horizontal_fov_deg,
        }
    }
}

/// Extrinsic for a forward-looking camera mounted at `position` in the INS
/// frame and yawed by `yaw_deg` about the INS z axis.
pub fn mounted_extrinsic(camera_id: &str, position: Vector3<f64>, yaw_deg: f64) -> RigidTransform {
    // rows: cam x = -ins y, cam y = -ins z, cam z = ins x
    let base = Rotation3::from_matrix_unchecked(Matrix3::new(
        0.0, -1.0, 0.0, //
        0.0, 0.0, -1.0, //
        1.0, 0.0, 0.0,
    ));
    let yaw = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians());
    let cam_from_ins = base * yaw.inverse();
    let rotation = UnitQuaternion::from_rotation_matrix(&cam_from_ins);
    let translation = -(cam_from_ins * position);
    RigidTransform::new(INS_FRAME, camera_id, rotation, translation)
}

/// Per-camera calibration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub camera_id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub extrinsic: ExtrinsicRecord,
    pub max_range_m: f64,
    pub hfov_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicRecord {
    /// w, x, y, z
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

pub fn load_calibration(path: &Path) -> Result<CameraModel> {
    let text = std::fs::read_to_string(path)?;
    let rec: CalibrationRecord =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), &e))?;
    CameraModel::from_calibration(rec)
}

/// Loads every `*.json` in `dir`, sorted by camera id.
pub fn load_calibration_dir(dir: &Path) -> Result<Vec<CameraModel>> {
    let mut cameras = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            cameras.push(load_calibration(&path)?);
        }
    }
    cameras.sort_by(|a, b| a.camera_id.cmp(&b.camera_id));
    for w in cameras.windows(2) {
        if w[0].camera_id == w[1].camera_id {
            return Err(Error::invalid(
                "calibration",
                format!("duplicate camera `{}`", w[0].camera_id),
            ));
        }
    }
    if cameras.is_empty() {
        return Err(Error::invalid(
            "calibration",
            format!("no camera files in {}", dir.display()),
        ));
    }
    Ok(cameras)
}

/// Axis-aligned image box given by centre and size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub cx: f64,
    pub cy: f64,
    pub h: f64,
    pub w: f64,
}

impl PixelBox {
    pub fn new(cx: f64, cy: f64, h: f64, w: f64) -> Self {
        PixelBox { cx, cy, h, w }
    }

    pub fn from_extent(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Self {
        PixelBox {
            cx: 0.5 * (u_min + u_max),
            cy: 0.5 * (v_min + v_max),
            h: v_max - v_min,
            w: u_max - u_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.h, self.w]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.h < 0.0 || self.w < 0.0 {
            return Err(Error::invalid("box", format!("{self:?}")));
        }
        Ok(())
    }

    /// (u_min, v_min, u_max, v_max)
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        )
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        let (u0, v0, u1, v1) = self.extent();
        u0 <= u && u <= u1 && v0 <= v && v <= v1
    }

    /// Euclidean norm of the (cx, cy, h, w) difference.
    pub fn l2_distance(&self, other: &PixelBox) -> f64 {
        let d = [
            self.cx - other.cx,
            self.cy - other.cy,
            self.h - other.h,
            self.w - other.w,
        ];
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Intersection with `[0, width] x [0, height]`; `None` if empty.
    pub fn clipped_to(&self, width: f64, height: f64) -> Option<PixelBox> {
        let (u0, v0, u1, v1) = self.extent();
        let (u0, v0) = (u0.max(0.0), v0.max(0.0));
        let (u1, v1) = (u1.min(width), v1.min(height));
        (u1 > u0 && v1 > v0).then(|| PixelBox::from_extent(u0, v0, u1, v1))
    }
}

/// Oriented 3D box: `heading_deg` is the facing direction, counter-clockwise
/// from +x in the horizontal plane; depth runs along the facing direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Point3<f64>,
    pub heading_deg: f64,
    pub width: f64,
    pub height: f64,
    pub depth: f64,
}

impl OrientedBox {
    pub fn corners(&self) -> [Point3<f64>; 8] {
        let (s, c) = self.heading_deg.to_radians().sin_cos();
        let forward = Vector3::new(c, s, 0.0) * (0.5 * self.depth);
        let lateral = Vector3::new(-s, c, 0.0) * (0.5 * self.width);
        let up = Vector3::new(0.0, 0.0, 0.5 * self.height);
        let mut out = [self.center; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let sf = if i & 1 == 0 { 1.0 } else { -1.0 };
            let sl = if i & 2 == 0 { 1.0 } else { -1.0 };
            let su = if i & 4 == 0 { 1.0 } else { -1.0 };
            *corner += forward * sf + lateral * sl + up * su;
        }
        out
    }
}

/// Projects the light housing into the image as the axis-aligned hull of
/// its eight projected corners. `None` when any corner is at or behind the
/// camera plane, or when the hull misses the image entirely. The returned
/// box is not clipped; see [`PixelBox::clipped_to`].
pub fn project_box(
    light: &MapTrafficLight,
    cam_from_utm: &RigidTransform,
    k: &CameraIntrinsics,
) -> Option<PixelBox> {
    let (mut u0, mut v0) = (f64::INFINITY, f64::INFINITY);
    let (mut u1, mut v1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for corner in light.oriented_box().corners() {
        let p = cam_from_utm.transform_point(&corner);
        let (u, v) = project_point(k, &p).ok()?;
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    if u1 < 0.0 || v1 < 0.0 || u0 > k.width || v0 > k.height {
        return None;
    }
    Some(PixelBox::from_extent(u0, v0, u1, v1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::TlType;
    use crate::hdmap::LightDims;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn k1000() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 960.0, 600.0, 1920.0, 1200.0).unwrap()
    }

    fn yaw(deg: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), deg.to_radians())
    }

    fn light_at(center: Point3<f64>, heading_deg: f64, dims: LightDims) -> MapTrafficLight {
        MapTrafficLight {
            light_id: "l".into(),
            position: center,
            heading_deg,
            dims,
            tl_type: TlType::ThreeBulb,
        }
    }

    #[test]
    fn interpolation_exact_sample() {
        let a = TimedPose::new(0.0, yaw(10.0), Vector3::new(1.0, 2.0, 3.0));
        let b = TimedPose::new(1.0, yaw(20.0), Vector3::new(4.0, 5.0, 6.0));
        let buf = vec![a.clone(), b.clone()];
        assert_eq!(interpolate_pose(&buf, 0.0).unwrap(), a);
        assert_eq!(interpolate_pose(&buf, 1.0).unwrap(), b);
    }

    #[test]
    fn interpolation_linear_translation() {
        let buf = vec![
            TimedPose::new(0.0, UnitQuaternion::identity(), Vector3::zeros()),
            TimedPose::new(2.0, UnitQuaternion::identity(), Vector3::new(2.0, 0.0, 0.0)),
        ];
        let mid = interpolate_pose(&buf, 1.0).unwrap();
        assert_relative_eq!(
            mid.translation,
            Vector3::new(1.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn interpolation_slerp_half_yaw() {
        let buf = vec![
            TimedPose::new(0.0, UnitQuaternion::identity(), Vector3::zeros()),
            TimedPose::new(1.0, yaw(90.0), Vector3::zeros()),
        ];
        let mid = interpolate_pose(&buf, 0.5).unwrap();
        // hand oracle: slerp halfway between 0 and 90 degrees about z is 45 degrees
        let (roll, pitch, yaw_rad) = mid.rotation.euler_angles();
        assert_relative_eq!(roll, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pitch, 0.0, epsilon = 1e-12);
        assert_relative_eq!(yaw_rad.to_degrees(), 45.0, epsilon = 1e-9);
    }

    #[test]
    fn interpolation_refuses_extrapolation() {
        let buf = vec![
            TimedPose::new(1.0, UnitQuaternion::identity(), Vector3::zeros()),
            TimedPose::new(2.0, UnitQuaternion::identity(), Vector3::zeros()),
        ];
        match interpolate_pose(&buf, 2.5) {
            Err(Error::Extrapolation { start, end, .. }) => {
                assert_eq!((start, end), (1.0, 2.0));
            }
            other => panic!("expected extrapolation error, got {other:?}"),
        }
        assert!(matches!(
            interpolate_pose(&[], 0.0),
            Err(Error::EmptyPoseBuffer)
        ));
    }

    #[test]
    fn pose_buffer_requires_increasing_timestamps() {
        let p = |t| TimedPose::new(t, UnitQuaternion::identity(), Vector3::zeros());
        assert!(PoseBuffer::new(vec![p(0.0), p(1.0)]).is_ok());
        assert!(matches!(
            PoseBuffer::new(vec![p(0.0), p(0.0)]),
            Err(Error::UnorderedPoses { index: 1 })
        ));
    }

    #[test]
    fn camera_chain_identity() {
        let ext = RigidTransform::identity(INS_FRAME, "cam");
        let pose = TimedPose::new(0.0, UnitQuaternion::identity(), Vector3::zeros());
        let t = camera_from_utm(&ext, &pose).unwrap();
        assert_eq!(t.frame_from, UTM_FRAME);
        assert_eq!(t.frame_to, "cam");
        assert_relative_eq!(t.translation(), Vector3::zeros());
        assert_relative_eq!(t.rotation().angle(), 0.0);
    }

    #[test]
    fn camera_chain_pure_translation() {
        let ext = RigidTransform::identity(INS_FRAME, "cam");
        let pose = TimedPose::new(0.0, UnitQuaternion::identity(), Vector3::new(5.0, 0.0, 0.0));
        let t = camera_from_utm(&ext, &pose).unwrap();
        assert_relative_eq!(
            t.translation(),
            Vector3::new(-5.0, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn camera_chain_single_link_rotation() {
        let ext = RigidTransform::new(INS_FRAME, "cam", yaw(90.0), Vector3::zeros());
        let pose = TimedPose::new(0.0, UnitQuaternion::identity(), Vector3::zeros());
        let t = camera_from_utm(&ext, &pose).unwrap();
        assert_relative_eq!(t.rotation().angle_to(&yaw(90.0)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn camera_chain_frame_mismatch() {
        let ext = RigidTransform::identity("lidar", "cam");
        let pose = TimedPose::new(0.0, UnitQuaternion::identity(), Vector3::zeros());
        assert!(matches!(
            camera_from_utm(&ext, &pose),
            Err(Error::FrameChain { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let k = k1000();
        assert_eq!(
            project_point(&k, &Point3::new(0.0, 0.0, 20.0)).unwrap(),
            (960.0, 600.0)
        );
        let (u, v) = project_point(&k, &Point3::new(1.0, 0.0, 10.0)).unwrap();
        assert_relative_eq!(u, 1060.0);
        assert_relative_eq!(v, 600.0);
        assert!(matches!(
            project_point(&k, &Point3::new(0.0, 0.0, -5.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn cube_on_axis_projects_by_near_face() {
        // Camera frame equals the map frame. The hull is set by the near face
        // at z = 9.5: half extent 1000 * 0.5 / 9.5.
        let cam = RigidTransform::identity(UTM_FRAME, "cam");
        let cube = light_at(
            Point3::new(0.0, 0.0, 10.0),
            0.0,
            LightDims::new(1.0, 1.0, 1.0),
        );
        let b = project_box(&cube, &cam, &k1000()).unwrap();
        let expected = 1000.0 / 9.5;
        assert_relative_eq!(b.h, expected, epsilon = 1e-9);
        assert_relative_eq!(b.w, expected, epsilon = 1e-9);
        assert_relative_eq!(b.cx, 960.0, epsilon = 1e-9);
        assert_relative_eq!(b.cy, 600.0, epsilon = 1e-9);
    }

    #[test]
    fn thin_plate_on_axis_projects_to_similar_triangles() {
        // camera at the origin looking along +x (map frame = INS frame here)
        let ext = mounted_extrinsic("cam", Vector3::zeros(), 0.0);
        let cam = camera_from_utm(&ext, &TimedPose::from_yaw(0.0, Vector3::zeros(), 0.0)).unwrap();
        let plate = light_at(
            Point3::new(10.0, 0.0, 0.0),
            180.0,
            LightDims::new(1.0, 1.0, 1e-9),
        );
        let b = project_box(&plate, &cam, &k1000()).unwrap();
        assert_relative_eq!(b.h, 100.0, epsilon = 1e-6);
        assert_relative_eq!(b.w, 100.0, epsilon = 1e-6);
        assert_relative_eq!(b.cx, 960.0, epsilon = 1e-9);
    }

    #[test]
    fn project_box_culls_behind_and_out_of_frame() {
        let cam = RigidTransform::identity(UTM_FRAME, "cam");
        let behind = light_at(
            Point3::new(0.0, 0.0, -10.0),
            0.0,
            LightDims::new(1.0, 1.0, 1.0),
        );
        assert!(project_box(&behind, &cam, &k1000()).is_none());
        // straddling the camera plane also culls
        let straddle = light_at(
            Point3::new(0.0, 0.0, 0.2),
            0.0,
            LightDims::new(1.0, 1.0, 1.0),
        );
        assert!(project_box(&straddle, &cam, &k1000()).is_none());
        // u = 1000 * (-20 / 10) + 960 = -1040, far left of the image
        let left = light_at(
            Point3::new(-20.0, 0.0, 10.0),
            0.0,
            LightDims::new(1.0, 1.0, 1.0),
        );
        assert!(project_box(&left, &cam, &k1000()).is_none());
    }

    #[test]
    fn clipping_keeps_partial_boxes() {
        let b = PixelBox::new(-10.0, 100.0, 40.0, 40.0);
        let c = b.clipped_to(1920.0, 1200.0).unwrap();
        assert_relative_eq!(c.w, 10.0);
        assert_relative_eq!(c.cx, 5.0);
        assert!(PixelBox::new(-50.0, 100.0, 40.0, 40.0)
            .clipped_to(1920.0, 1200.0)
            .is_none());
    }

    #[test]
    fn calibration_round_trip() {
        let ext = mounted_extrinsic("long", Vector3::new(0.5, 0.0, 1.0), 0.0);
        let cam = CameraModel::new("long", k1000(), ext, 64.0, 47.3).unwrap();
        let back = CameraModel::from_calibration(cam.to_calibration()).unwrap();
        assert_eq!(back.camera_id, "long");
        assert_relative_eq!(
            back.position_in_ins(),
            Vector3::new(0.5, 0.0, 1.0),
            epsilon = 1e-12
        );
        let json = serde_json::to_value(cam.to_calibration()).unwrap();
        for key in [
            "camera_id",
            "fx",
            "fy",
            "cx",
            "cy",
            "width",
            "height",
            "extrinsic",
            "max_range_m",
            "hfov_deg",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn mounted_extrinsic_looks_forward() {
        let ext = mounted_extrinsic("c", Vector3::new(1.0, 0.0, 2.0), 0.0);
        // a point 10 m ahead of the camera lands on the optical axis
        let p = ext.transform_point(&Point3::new(11.0, 0.0, 2.0));
        assert_relative_eq!(p, Point3::new(0.0, 0.0, 10.0), epsilon = 1e-12);
        // left of the vehicle is negative camera x, up is negative camera y
        let q = ext.transform_point(&Point3::new(11.0, 1.0, 3.0));
        assert_relative_eq!(q, Point3::new(-1.0, -1.0, 10.0), epsilon = 1e-12);
    }

    fn arb_quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
        (-3.1f64..3.1, -1.5f64..1.5, -3.1f64..3.1)
            .prop_map(|(r, p, y)| UnitQuaternion::from_euler_angles(r, p, y))
    }

    fn arb_vec(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(q in arb_quat(), t in arb_vec(100.0)) {
            let a = RigidTransform::new("a", "b", q, t);
            let id = a.compose(&a.inverse()).unwrap();
            prop_assert!(id.rotation().angle() < 1e-9);
            prop_assert!(id.translation().norm() < 1e-9);
        }

        #[test]
        fn projection_is_scale_invariant(x in -5.0f64..5.0, y in -5.0f64..5.0, z in 0.1f64..80.0, s in 0.01f64..100.0) {
            let k = k1000();
            let (u, v) = project_point(&k, &Point3::new(x, y, z)).unwrap();
            let (us, vs) = project_point(&k, &Point3::new(s * x, s * y, s * z)).unwrap();
            prop_assert!((u - us).abs() < 1e-9 && (v - vs).abs() < 1e-9);
        }

        #[test]
        fn extrinsic_chain_consistency(
            qe in arb_quat(), te in arb_vec(2.0),
            qp in arb_quat(), tp in arb_vec(1000.0),
            p in arb_vec(50.0),
        ) {
            let ext = RigidTransform::new(INS_FRAME, "cam", qe, te);
            let pose = TimedPose::new(0.0, qp, tp);
            let cam_utm = camera_from_utm(&ext, &pose).unwrap();
            let chain = cam_utm.compose(&pose.as_transform()).unwrap();
            let point = Point3::from(p);
            let a = chain.transform_point(&point);
            let b = ext.transform_point(&point);
            prop_assert!((a - b).norm() < 1e-9);
        }

        #[test]
        fn interpolation_is_continuous(t in 0.001f64..0.999, yaw_b in -170.0f64..170.0) {
            let buf = vec![
                TimedPose::new(0.0, UnitQuaternion::identity(), Vector3::zeros()),
                TimedPose::new(1.0, yaw(yaw_b), Vector3::new(10.0, -3.0, 1.0)),
            ];
            let eps = 1e-6;
            let a = interpolate_pose(&buf, t - eps).unwrap();
            let b = interpolate_pose(&buf, t + eps).unwrap();
            let dt = (a.translation - b.translation).norm();
            let da = a.rotation.angle_to(&b.rotation);
            // bounded by the segment's rates: 10.5 m/s and ~3 rad/s
            prop_assert!(dt <= 11.0 * 2.0 * eps);
            prop_assert!(da <= 3.1 * 2.0 * eps + 1e-12);
        }

        #[test]
        fn projected_box_contains_projected_centre(
            x in -8.0f64..8.0, y in -4.0f64..4.0, z in 3.0f64..70.0, heading in 0.0f64..360.0,
        ) {
            let cam = RigidTransform::identity(UTM_FRAME, "cam");
            let light = light_at(Point3::new(x, y, z), heading, LightDims::new(0.35, 0.76, 0.3));
            if let Some(b) = project_box(&light, &cam, &k1000()) {
                let (u, v) = project_point(&k1000(), &Point3::new(x, y, z)).unwrap();
                prop_assert!(b.contains(u, v));
            }
        }
    }
}
