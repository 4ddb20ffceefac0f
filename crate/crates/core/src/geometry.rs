//! SE(3) poses, delta-action integration, and pinhole camera math.
//!
//! Conventions:
//! - World frame is z-up, meters.
//! - Cameras follow the OpenCV convention (x right, y down, z forward).
//! - Pixel `(u, v)` addresses the center of column `u`, row `v`.
//! - Action rotations are extrinsic XYZ Euler deltas, pre-multiplied in the
//!   world frame.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::episode::Action;
use crate::error::{Error, Result};
use crate::raster::{DepthMap, LabelMask};

pub type Vec3 = Vector3<f64>;

/// Points closer than this to the camera plane cannot be projected.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-6;

/// Rigid transform: `p' = rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            translation: Vec3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vec3, rotation: UnitQuaternion<f64>) -> Self {
        Pose {
            translation,
            rotation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Vec3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Pose::new(Vec3::from(xyz), euler_xyz(rpy))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.translation + self.rotation * other.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            translation: -(rotation * self.translation),
            rotation,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.translation)
    }

    /// Heading of the local x axis projected on the world xy plane.
    pub fn yaw(&self) -> f64 {
        let x_axis = self.rotation * Vec3::x();
        x_axis.y.atan2(x_axis.x)
    }

    /// Row-major homogeneous 4×4 matrix.
    pub fn to_matrix(&self) -> [f64; 16] {
        let r = self.rotation.to_rotation_matrix();
        let m = r.matrix();
        let t = &self.translation;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            t.x,
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            t.y,
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    /// Parses a row-major homogeneous matrix; the 3×3 block must be a rotation
    /// within 1e-6.
    pub fn from_matrix(m: &[f64]) -> Result<Pose> {
        if m.len() != 16 {
            return Err(Error::LengthMismatch {
                field: "pose matrix".into(),
                expected: 16,
                found: m.len(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose matrix", "non-finite entry"));
        }
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::invalid("pose matrix", "last row must be 0 0 0 1"));
        }
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let ortho_err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho_err > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(
                "pose matrix",
                "rotation block is not a proper rotation",
            ));
        }
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        Ok(Pose::new(Vec3::new(m[3], m[7], m[11]), rotation))
    }

    /// Camera-to-world pose of a camera at `eye` looking at `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_columns(&[x, y, z]);
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        Pose::new(eye, rotation)
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn pose_inverse(p: &Pose) -> Pose {
    p.inverse()
}

/// Extrinsic XYZ Euler angles `[roll, pitch, yaw]`: `Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn euler_xyz(rpy: [f64; 3]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2])
}

/// Advance an end-effector pose by one delta action. The gripper channel is
/// ignored here.
pub fn apply_action(ee: &Pose, action: &Action) -> Pose {
    Pose {
        translation: ee.translation + Vec3::from(action.d_translation),
        rotation: euler_xyz(action.d_rotation) * ee.rotation,
    }
}

/// Exact inverse of [`apply_action`]: the negated translation and the inverse
/// Euler rotation.
pub fn undo_action(ee: &Pose, action: &Action) -> Pose {
    Pose {
        translation: ee.translation - Vec3::from(action.d_translation),
        rotation: euler_xyz(action.d_rotation).inverse() * ee.rotation,
    }
}

/// Pinhole camera with a world placement.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub cam_to_world: Pose,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("cameras.{}.{f}", self.name);
        if self.name.is_empty() {
            return Err(Error::invalid("cameras.name", "empty camera name"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(field("width"), "zero image size"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid(
                field("fx"),
                "focal lengths must be positive",
            ));
        }
        if !(0.0..f64::from(self.width)).contains(&self.cx) {
            return Err(Error::invalid(field("cx"), "principal point outside image"));
        }
        if !(0.0..f64::from(self.height)).contains(&self.cy) {
            return Err(Error::invalid(field("cy"), "principal point outside image"));
        }
        if !self.cam_to_world.is_finite() {
            return Err(Error::invalid(field("cam_to_world"), "non-finite pose"));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.cam_to_world.inverse_transform_point(p_world)
    }

    pub fn camera_center(&self) -> Vec3 {
        self.cam_to_world.translation
    }

    /// Projects a camera-frame point; no behind-camera check.
    #[inline]
    pub fn project_camera_point(&self, p_cam: &Vec3) -> (f64, f64) {
        (
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= -0.5
            && v >= -0.5
            && u < f64::from(self.width) - 0.5
            && v < f64::from(self.height) - 0.5
    }
}

/// Projects a world point to pixel coordinates, or reports that it lies
/// behind (or on) the camera plane.
pub fn project_point(cam: &CameraModel, p_world: &Vec3) -> Result<(f64, f64)> {
    let p = cam.world_to_camera(p_world);
    if p.z <= MIN_PROJECTION_DEPTH {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok(cam.project_camera_point(&p))
}

/// Lifts pixel `(u, v)` at camera-frame depth `depth` (meters along the
/// optical axis) to a world point.
pub fn backproject_pixel(cam: &CameraModel, u: f64, v: f64, depth: f64) -> Result<Vec3> {
    if depth.is_nan() || depth <= 0.0 {
        return Err(Error::NonPositiveDepth(depth));
    }
    let p_cam = Vec3::new(
        (u - cam.cx) / cam.fx * depth,
        (v - cam.cy) / cam.fy * depth,
        depth,
    );
    Ok(cam.cam_to_world.transform_point(&p_cam))
}

/// World-frame point set with optional per-point labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<u8>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One world point per valid depth pixel. With `mask = Some((m, label))`,
/// only pixels where `m == label` contribute and each point carries `label`.
pub fn depth_to_pointcloud(
    cam: &CameraModel,
    depth: &DepthMap,
    mask: Option<(&LabelMask, u8)>,
) -> Result<PointCloud> {
    if depth.width() != cam.width || depth.height() != cam.height {
        return Err(Error::DimensionMismatch(format!(
            "depth {}x{} vs camera {}x{}",
            depth.width(),
            depth.height(),
            cam.width,
            cam.height
        )));
    }
    if let Some((m, _)) = mask {
        if m.width() != cam.width || m.height() != cam.height {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs camera {}x{}",
                m.width(),
                m.height(),
                cam.width,
                cam.height
            )));
        }
    }
    let mut points = Vec::new();
    for v in 0..cam.height {
        for u in 0..cam.width {
            if let Some((m, label)) = mask {
                if m.get(u, v) != label {
                    continue;
                }
            }
            if let Some(d) = depth.meters(u, v) {
                points.push(backproject_pixel(cam, f64::from(u), f64::from(v), d)?);
            }
        }
    }
    let labels = mask.map(|(_, label)| vec![label; points.len()]);
    Ok(PointCloud { points, labels })
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_matrix().to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Vec::<f64>::deserialize(d)?;
        Pose::from_matrix(&m).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use proptest::prelude::*;

    fn action(dt: [f64; 3], dr: [f64; 3]) -> Action {
        Action {
            d_translation: dt,
            d_rotation: dr,
            gripper: 1.0,
        }
    }

    fn pose_close(a: &Pose, b: &Pose, tol: f64) -> bool {
        (a.translation - b.translation).norm() <= tol && a.rotation.angle_to(&b.rotation) <= tol
    }

    pub(crate) fn test_camera() -> CameraModel {
        CameraModel {
            name: "cam".into(),
            width: 128,
            height: 128,
            fx: 100.0,
            fy: 100.0,
            cx: 64.0,
            cy: 64.0,
            cam_to_world: Pose::identity(),
        }
    }

    #[test]
    fn identity_is_neutral() {
        let p = Pose::from_xyz_rpy([0.1, -0.2, 0.3], [0.4, 0.5, -0.6]);
        assert_eq!(Pose::identity().compose(&p), p);
        assert!(pose_close(&p.compose(&Pose::identity()), &p, 1e-15));
    }

    #[test]
    fn two_eighth_turns_make_a_quarter_turn() {
        let yaw45 = Pose::from_xyz_rpy([0.0; 3], [0.0, 0.0, FRAC_PI_4]);
        let yaw90 = Pose::from_xyz_rpy([0.0; 3], [0.0, 0.0, FRAC_PI_2]);
        assert!(pose_close(&pose_compose(&yaw45, &yaw45), &yaw90, 1e-12));
    }

    #[test]
    fn translations_commute() {
        let c = pose_compose(
            &Pose::from_translation(1.0, 0.0, 0.0),
            &Pose::from_translation(0.0, 2.0, 0.0),
        );
        assert_eq!(c.translation, Vec3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn pure_translation_action() {
        let p = apply_action(&Pose::identity(), &action([0.01, 0.0, 0.0], [0.0; 3]));
        assert_eq!(p.translation, Vec3::new(0.01, 0.0, 0.0));
        assert_eq!(p.rotation, UnitQuaternion::identity());
    }

    #[test]
    fn repeated_z_steps_accumulate_linearly() {
        let a = action([0.0, 0.0, 0.005], [0.0; 3]);
        let p = (0..10).fold(Pose::identity(), |p, _| apply_action(&p, &a));
        assert!((p.translation.z - 0.05).abs() <= 1e-12);
    }

    #[test]
    fn yaw_action_rotates_about_world_z() {
        let p = apply_action(&Pose::identity(), &action([0.0; 3], [0.0, 0.0, FRAC_PI_2]));
        let expected = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2);
        assert!(p.rotation.angle_to(&expected) < 1e-12);
        assert!((p.yaw() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn single_axis_action_is_undone_by_its_negation() {
        let p0 = Pose::from_xyz_rpy([0.3, 0.1, 0.9], [3.1, 0.05, 0.4]);
        let a = action([0.01, -0.02, 0.003], [0.0, 0.0, 0.2]);
        let neg = action([-0.01, 0.02, -0.003], [0.0, 0.0, -0.2]);
        assert!(pose_close(
            &apply_action(&apply_action(&p0, &a), &neg),
            &p0,
            1e-9
        ));
    }

    #[test]
    fn project_principal_ray() {
        let cam = test_camera();
        assert_eq!(
            project_point(&cam, &Vec3::new(0.0, 0.0, 1.0)).unwrap(),
            (64.0, 64.0)
        );
        let (u, v) = project_point(&cam, &Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((u - 74.0).abs() < 1e-12 && v == 64.0);
        assert!(matches!(
            project_point(&cam, &Vec3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera { .. })
        ));
        assert!(matches!(
            project_point(&cam, &Vec3::new(0.0, 0.0, 0.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn backproject_principal_ray_and_bad_depth() {
        let cam = test_camera();
        assert_eq!(
            backproject_pixel(&cam, 64.0, 64.0, 1.0).unwrap(),
            Vec3::new(0.0, 0.0, 1.0)
        );
        assert!(matches!(
            backproject_pixel(&cam, 1.0, 1.0, 0.0),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(backproject_pixel(&cam, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Vec3::new(0.3, -0.7, 1.2);
        let target = Vec3::new(0.4, 0.0, 0.75);
        let mut cam = test_camera();
        cam.cam_to_world = Pose::look_at(eye, target, Vec3::z());
        let (u, v) = project_point(&cam, &target).unwrap();
        assert!((u - 64.0).abs() < 1e-9 && (v - 64.0).abs() < 1e-9);
        // world up appears toward the top of the image
        let (_, v_up) = project_point(&cam, &(target + Vec3::new(0.0, 0.0, 0.1))).unwrap();
        assert!(v_up < 64.0);
    }

    #[test]
    fn pointcloud_constant_plane() {
        let cam = CameraModel {
            width: 4,
            height: 4,
            cx: 2.0,
            cy: 2.0,
            ..test_camera()
        };
        let depth = DepthMap::from_fn(4, 4, |_, _| 1000);
        let cloud = depth_to_pointcloud(&cam, &depth, None).unwrap();
        assert_eq!(cloud.len(), 16);
        assert!(cloud.points.iter().all(|p| p.z == 1.0));
    }

    #[test]
    fn pointcloud_respects_mask_and_invalid_depth() {
        let cam = CameraModel {
            width: 4,
            height: 4,
            cx: 2.0,
            cy: 2.0,
            ..test_camera()
        };
        let depth = DepthMap::from_fn(4, 4, |x, y| if y == 0 && x < 3 { 0 } else { 800 });
        assert_eq!(depth_to_pointcloud(&cam, &depth, None).unwrap().len(), 13);

        let full = DepthMap::from_fn(4, 4, |_, _| 800);
        let mask = LabelMask::from_fn(4, 4, |x, y| u8::from(y * 4 + x < 5) * 3);
        let cloud = depth_to_pointcloud(&cam, &full, Some((&mask, 3))).unwrap();
        assert_eq!(cloud.len(), 5);
        assert_eq!(cloud.labels.as_deref(), Some(&[3u8; 5][..]));

        let wrong = DepthMap::new(3, 4);
        assert!(matches!(
            depth_to_pointcloud(&cam, &wrong, None),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matrix_round_trip_and_rejection() {
        let p = Pose::from_xyz_rpy([0.1, 0.2, 0.3], [0.3, -0.2, 1.0]);
        let back = Pose::from_matrix(&p.to_matrix()).unwrap();
        assert!(pose_close(&p, &back, 1e-12));
        let mut m = p.to_matrix();
        m[0] = 2.0;
        assert!(Pose::from_matrix(&m).is_err());
        assert!(Pose::from_matrix(&m[..15]).is_err());
    }

    #[test]
    fn camera_validation() {
        let mut cam = test_camera();
        cam.validate().unwrap();
        cam.cx = 128.0;
        assert!(cam.validate().is_err());
        let mut cam = test_camera();
        cam.fy = 0.0;
        assert!(cam.validate().is_err());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-2.0..2.0f64),
            prop::array::uniform3(-3.1..3.1f64),
        )
            .prop_map(|(t, r)| Pose::from_xyz_rpy(t, r))
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(p in arb_pose()) {
            let id = pose_compose(&p, &pose_inverse(&p));
            prop_assert!(pose_close(&id, &Pose::identity(), 1e-9));
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(pose_close(&left, &right, 1e-9));
        }

        #[test]
        fn action_is_exactly_invertible(
            p in arb_pose(),
            dt in prop::array::uniform3(-0.05..0.05f64),
            dr in prop::array::uniform3(-0.5..0.5f64),
        ) {
            let a = action(dt, dr);
            prop_assert!(pose_close(&undo_action(&apply_action(&p, &a), &a), &p, 1e-9));
        }

        #[test]
        fn projection_round_trip(
            p in arb_pose(),
            u in 0.0..128.0f64,
            v in 0.0..128.0f64,
            d in 0.011..10.0f64,
        ) {
            let cam = CameraModel { cam_to_world: p, ..test_camera() };
            let w = backproject_pixel(&cam, u, v, d).unwrap();
            let (u2, v2) = project_point(&cam, &w).unwrap();
            prop_assert!((u - u2).abs() < 1e-6 && (v - v2).abs() < 1e-6);
        }
    }
}
