//! Kinematic trajectory replay against a substitute object.
//!
//! The recorded delta actions drive the gripper tip from a known start pose.
//! The substitute object is spawned where the tip is when the gripper closes,
//! attaches rigidly if it fits the gripper, and is released where the gripper
//! opens again. A distance trace between tip and grasp center over the grasp
//! window decides whether the replay is kept.

use serde::{Deserialize, Serialize};

use crate::episode::{Action, Episode, ObjectAsset};
use crate::error::{Error, Result};
use crate::geometry::{apply_action, euler_xyz, Pose, Vec3};
use crate::scene::SceneConfig;

/// Gripper commands below this are "closed".
pub const GRIPPER_THRESHOLD: f64 = 0.5;

/// Pose given as position plus extrinsic XYZ Euler angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        Pose::from_xyz_rpy(self.xyz, self.rpy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub r_attach: f64,
    pub r_valid: f64,
    pub max_aperture: f64,
    pub w_min: f64,
    /// Gripper tip at t = 0 relative to the robot base.
    pub home_tip_offset: PoseSpec,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            r_attach: 0.05,
            r_valid: 0.08,
            max_aperture: 0.085,
            w_min: 0.005,
            home_tip_offset: PoseSpec {
                xyz: [0.3, 0.0, 0.25],
                rpy: [std::f64::consts::PI, 0.0, 0.0],
            },
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r_attach", self.r_attach),
            ("r_valid", self.r_valid),
            ("max_aperture", self.max_aperture),
            ("w_min", self.w_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.w_min > self.max_aperture {
            return Err(Error::Config("w_min exceeds max_aperture".into()));
        }
        Ok(())
    }

    /// Whether an object of this graspable width fits between the fingers.
    pub fn fits(&self, asset: &ObjectAsset) -> bool {
        (self.w_min..=self.max_aperture).contains(&asset.graspable_width)
    }
}

/// 1-based timesteps at which the gripper closes and reopens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraspWindow {
    pub t_start: usize,
    pub t_end: usize,
}

impl GraspWindow {
    pub fn contains(&self, t: usize) -> bool {
        (self.t_start..=self.t_end).contains(&t)
    }
}

/// Finds the first open→closed transition and the first closed→open
/// transition after it. Without a reopen the window runs to the last step.
pub fn detect_grasp_window(actions: &[Action]) -> Result<GraspWindow> {
    let t_len = actions.len();
    if t_len < 2 {
        return Err(Error::NoGraspWindow);
    }
    let closed = |i: usize| actions[i].gripper < GRIPPER_THRESHOLD;
    // index i is timestep i + 1
    let start = (1..t_len)
        .find(|&i| !closed(i - 1) && closed(i))
        .ok_or(Error::NoGraspWindow)?;
    let end = (start + 1..t_len)
        .find(|&i| closed(i - 1) && !closed(i))
        .unwrap_or(t_len - 1);
    let window = GraspWindow {
        t_start: start + 1,
        t_end: end + 1,
    };
    if window.t_end <= window.t_start {
        return Err(Error::NoGraspWindow);
    }
    Ok(window)
}

/// Tip pose at t = 0.
pub fn ee_start(robot_base: &Pose, cfg: &ReplayConfig) -> Pose {
    robot_base.compose(&cfg.home_tip_offset.to_pose())
}

/// Tip poses for t = 1..=T, where pose t has actions 1..=t applied.
pub fn replay_ee(ee_start: &Pose, actions: &[Action]) -> Vec<Pose> {
    actions
        .iter()
        .scan(*ee_start, |ee, a| {
            *ee = apply_action(ee, a);
            Some(*ee)
        })
        .collect()
}

/// World position of the asset's grasp center at `pose`.
pub fn grasp_center(asset: &ObjectAsset, pose: &Pose) -> Vec3 {
    pose.transform_point(&Vec3::from(asset.grasp_center_offset))
}

fn upright(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
    Pose::new(Vec3::new(x, y, z), euler_xyz([0.0, 0.0, yaw]))
}

/// Spawns `asset` on the table under the tip position at `t_start`, with its
/// yaw aligned to the gripper.
pub fn place_object(
    scene: &SceneConfig,
    actions: &[Action],
    window: &GraspWindow,
    asset: &ObjectAsset,
    ee_start: &Pose,
) -> Result<Pose> {
    let ee = replay_ee(ee_start, &actions[..window.t_start]);
    let tip_pose = ee[window.t_start - 1];
    let tip = tip_pose.translation;
    if !scene.workspace_bounds.contains(&tip) {
        return Err(Error::OutsideWorkspace {
            x: tip.x,
            y: tip.y,
            z: tip.z,
        });
    }
    let yaw = tip_pose.yaw();
    let z = scene.table_height + asset.shape.half_height();
    // put the grasp center, not the body center, under the tip
    let offset = euler_xyz([0.0, 0.0, yaw]) * Vec3::from(asset.grasp_center_offset);
    Ok(upright(tip.x - offset.x, tip.y - offset.y, z, yaw))
}

fn footprint(asset: &ObjectAsset, pose: &Pose) -> ([f64; 2], [f64; 2]) {
    let [hx, hy] = asset.shape.footprint_half_extents(pose.yaw());
    let c = pose.translation;
    ([c.x - hx, c.y - hy], [c.x + hx, c.y + hy])
}

/// Fraction of the first footprint covered by the second.
fn footprint_overlap(a: &([f64; 2], [f64; 2]), b: &([f64; 2], [f64; 2])) -> f64 {
    let w = (a.1[0].min(b.1[0]) - a.0[0].max(b.0[0])).max(0.0);
    let h = (a.1[1].min(b.1[1]) - a.0[1].max(b.0[1])).max(0.0);
    let area = (a.1[0] - a.0[0]) * (a.1[1] - a.0[1]);
    if area <= 0.0 {
        0.0
    } else {
        w * h / area
    }
}

/// Places `container` on the table under the tip position at `t_end`. Fails if
/// it would cover more than half of the object's spawn footprint.
pub fn place_container(
    scene: &SceneConfig,
    actions: &[Action],
    window: &GraspWindow,
    container: &ObjectAsset,
    ee_start: &Pose,
    object: (&ObjectAsset, &Pose),
) -> Result<Pose> {
    let ee = replay_ee(ee_start, &actions[..window.t_end]);
    let tip = ee[window.t_end - 1].translation;
    if !scene.workspace_bounds.contains(&tip) {
        return Err(Error::OutsideWorkspace {
            x: tip.x,
            y: tip.y,
            z: tip.z,
        });
    }
    let pose = upright(
        tip.x,
        tip.y,
        scene.table_height + container.shape.half_height(),
        0.0,
    );
    let overlap = footprint_overlap(&footprint(object.0, object.1), &footprint(container, &pose));
    if overlap > 0.5 {
        return Err(Error::PlacementCollision { overlap });
    }
    Ok(pose)
}

/// Where a released object comes to rest: upright with its yaw kept, on the
/// container top if its center is over the container, else on the table.
fn settle(
    scene: &SceneConfig,
    asset: &ObjectAsset,
    released: &Pose,
    container: Option<(&ObjectAsset, &Pose)>,
) -> Pose {
    let c = released.translation;
    let support = container
        .filter(|(ca, cp)| {
            let (lo, hi) = footprint(ca, cp);
            (lo[0]..=hi[0]).contains(&c.x) && (lo[1]..=hi[1]).contains(&c.y)
        })
        .map(|(ca, cp)| cp.translation.z + ca.shape.half_height())
        .unwrap_or(scene.table_height);
    upright(
        c.x,
        c.y,
        support + asset.shape.half_height(),
        released.yaw(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    AffordanceIncompatible,
    GraspSlip,
    NoGraspWindow,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::AffordanceIncompatible => "affordance_incompatible",
            FailureReason::GraspSlip => "grasp_slip",
            FailureReason::NoGraspWindow => "no_grasp_window",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: usize,
    /// Gripper tip frame.
    pub ee: Pose,
    pub aperture: f64,
    pub object_pose: Pose,
    pub attached: bool,
    pub container_pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrajectory {
    pub states: Vec<SimState>,
    pub scene: SceneConfig,
    pub asset: ObjectAsset,
    pub container: Option<ObjectAsset>,
    pub grasp_window: GraspWindow,
    /// Object pose in the tip frame while attached.
    pub attach_transform: Option<Pose>,
    /// Why attachment was refused at `t_start`, if it was.
    pub attach_failure: Option<FailureReason>,
}

impl SimTrajectory {
    pub fn spawn_pose(&self) -> Pose {
        self.states[0].object_pose
    }

    pub fn state(&self, t: usize) -> &SimState {
        &self.states[t - 1]
    }
}

/// Replays `episode.actions` from `ee_start` against `asset` (and optionally a
/// container). Grasp failures are recorded on the trajectory, not raised.
pub fn simulate_replay(
    scene: &SceneConfig,
    episode: &Episode,
    asset: &ObjectAsset,
    container: Option<&ObjectAsset>,
    ee_start: &Pose,
    cfg: &ReplayConfig,
) -> Result<SimTrajectory> {
    let actions = &episode.actions;
    let window = detect_grasp_window(actions)?;
    let spawn = place_object(scene, actions, &window, asset, ee_start)?;
    let container_pose = match container {
        Some(c) => Some(place_container(
            scene,
            actions,
            &window,
            c,
            ee_start,
            (asset, &spawn),
        )?),
        None => None,
    };
    let support = container.zip(container_pose.as_ref());

    let ees = replay_ee(ee_start, actions);
    let mut object = spawn;
    let mut attached = false;
    let mut attach_transform = None;
    let mut attach_failure = None;
    let mut states = Vec::with_capacity(actions.len());

    for (i, (ee, action)) in ees.iter().zip(actions).enumerate() {
        let t = i + 1;
        if t == window.t_start {
            let tip = ee.translation;
            if !cfg.fits(asset) {
                attach_failure = Some(FailureReason::AffordanceIncompatible);
            } else if (grasp_center(asset, &object) - tip).norm() > cfg.r_attach {
                attach_failure = Some(FailureReason::GraspSlip);
            } else {
                // fingers center the object on the tip as they close
                let snapped = Pose::new(
                    object.translation + (tip - grasp_center(asset, &object)),
                    object.rotation,
                );
                attach_transform = Some(ee.inverse().compose(&snapped));
                attached = true;
            }
        }
        if let Some(rel) = attach_transform.filter(|_| attached) {
            object = ee.compose(&rel);
        }
        let commanded = action.gripper.clamp(0.0, 1.0) * cfg.max_aperture;
        states.push(SimState {
            t,
            ee: *ee,
            // closed fingers stop at the held object
            aperture: if attached {
                commanded.max(asset.graspable_width)
            } else {
                commanded
            },
            object_pose: object,
            attached,
            container_pose,
        });
        // released objects settle from the next step on
        if attached && t == window.t_end && t < actions.len() {
            attached = false;
            object = settle(scene, asset, &object, support);
        }
    }

    Ok(SimTrajectory {
        states,
        scene: scene.clone(),
        asset: asset.clone(),
        container: container.cloned(),
        grasp_window: window,
        attach_transform,
        attach_failure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub success: bool,
    pub max_distance: f64,
    pub distance_trace: Vec<(usize, f64)>,
    pub failure_reason: Option<FailureReason>,
}

impl ValidationReport {
    /// Outcome for an episode whose gripper never closes.
    pub fn no_grasp_window() -> Self {
        ValidationReport {
            success: false,
            max_distance: f64::INFINITY,
            distance_trace: Vec::new(),
            failure_reason: Some(FailureReason::NoGraspWindow),
        }
    }
}

/// Tip-to-grasp-center distance over the grasp window; success requires an
/// attachment and a maximum distance of at most `r_valid`.
pub fn validate_replay(traj: &SimTrajectory, r_valid: f64) -> ValidationReport {
    let w = traj.grasp_window;
    let distance_trace: Vec<(usize, f64)> = (w.t_start..=w.t_end)
        .map(|t| {
            let s = traj.state(t);
            (
                t,
                (s.ee.translation - grasp_center(&traj.asset, &s.object_pose)).norm(),
            )
        })
        .collect();
    let max_distance = distance_trace.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let attached = traj.state(w.t_start).attached;
    let success = attached && max_distance <= r_valid;
    let failure_reason = if success {
        None
    } else {
        Some(traj.attach_failure.unwrap_or(FailureReason::GraspSlip))
    };
    ValidationReport {
        success,
        max_distance,
        distance_trace,
        failure_reason,
    }
}
