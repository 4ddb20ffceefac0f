//! Deterministic synthetic "real" datasets for tests, demos, and benchmarks.
//!
//! A textured table under two opposed cameras; the recorded robot and a
//! yellow mug are rendered with the same rasterizer as the sim layer, masks
//! come from the render labels, and frame-1 depth is exact up to millimeter
//! quantization.

use std::fs;
use std::path::{Path, PathBuf};

use image::Rgb;

use crate::episode::{
    save_asset_catalog, save_episode, write_manifest, Action, AssetKind, Episode, Frame,
    ObjectAsset, Shape,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose, Vec3};
use crate::pipeline::PipelineConfig;
use crate::raster::{DepthMap, LabelMask, RgbImage, LABEL_TABLE};
use crate::render::{composite_frame, rasterize_scene, GripperGeometry};
use crate::replay::{ee_start, simulate_replay, ReplayConfig, SimTrajectory};
use crate::scene::{Aabb, AlignConfig, SceneConfig};

pub const TABLE_HEIGHT: f64 = 0.74;
pub const T_LEN: usize = 20;
pub const IMAGE_SIZE: u32 = 128;
/// Table top extent in world x and y.
const TABLE_X: (f64, f64) = (-0.1, 1.0);
const TABLE_Y: (f64, f64) = (-0.6, 0.6);

pub fn robot_base() -> Pose {
    Pose::from_translation(0.0, 0.0, TABLE_HEIGHT)
}

/// Two cameras on opposite sides of the workspace, both looking at it.
pub fn cameras(size: u32) -> Vec<CameraModel> {
    let f = 110.0 * f64::from(size) / 128.0;
    let c = f64::from(size) / 2.0;
    let target = Vec3::new(0.38, 0.0, 0.82);
    [
        ("left", Vec3::new(0.3, -0.55, 1.15)),
        ("right", Vec3::new(0.46, 0.62, 1.15)),
    ]
    .into_iter()
    .map(|(name, eye)| CameraModel {
        name: name.into(),
        width: size,
        height: size,
        fx: f,
        fy: f,
        cx: c,
        cy: c,
        cam_to_world: Pose::look_at(eye, target, Vec3::z()),
    })
    .collect()
}

/// The object held in the recorded episodes.
pub fn source_object() -> ObjectAsset {
    ObjectAsset {
        name: "yellow-mug".into(),
        display_name: "yellow mug".into(),
        kind: AssetKind::Object,
        shape: Shape::Cylinder {
            radius: 0.035,
            height: 0.09,
        },
        color: [230, 200, 40],
        graspable_width: 0.07,
        grasp_center_offset: [0.0; 3],
    }
}

fn object(name: &str, display: &str, shape: Shape, color: [u8; 3], width: f64) -> ObjectAsset {
    ObjectAsset {
        name: name.into(),
        display_name: display.into(),
        kind: AssetKind::Object,
        shape,
        color,
        graspable_width: width,
        grasp_center_offset: [0.0; 3],
    }
}

/// Three graspable objects, one too wide for the gripper, and two containers.
pub fn catalog() -> Vec<ObjectAsset> {
    let container = |a: ObjectAsset| ObjectAsset {
        kind: AssetKind::Container,
        ..a
    };
    vec![
        object(
            "spoon-block",
            "spoon",
            Shape::Box {
                extents: [0.04, 0.04, 0.08],
            },
            [190, 190, 200],
            0.04,
        ),
        object(
            "apple",
            "apple",
            Shape::Sphere { radius: 0.03 },
            [200, 30, 30],
            0.06,
        ),
        object(
            "can",
            "soda can",
            Shape::Cylinder {
                radius: 0.025,
                height: 0.1,
            },
            [40, 90, 200],
            0.05,
        ),
        object(
            "big-box",
            "cereal box",
            Shape::Box {
                extents: [0.12, 0.12, 0.1],
            },
            [230, 120, 20],
            0.12,
        ),
        container(object(
            "towel",
            "towel",
            Shape::Box {
                extents: [0.15, 0.15, 0.01],
            },
            [60, 160, 90],
            0.15,
        )),
        container(object(
            "bowl",
            "bowl",
            Shape::Cylinder {
                radius: 0.07,
                height: 0.04,
            },
            [240, 240, 230],
            0.14,
        )),
    ]
}

fn step(d: [f64; 3], yaw: f64, gripper: f64) -> Action {
    Action {
        d_translation: d,
        d_rotation: [0.0, 0.0, yaw],
        gripper,
    }
}

/// Recorded pick-and-place actions; `index` selects one of two paths.
pub fn actions(index: usize) -> Vec<Action> {
    let mut a = Vec::with_capacity(T_LEN);
    if index.is_multiple_of(2) {
        // turn while descending, grasp at t = 6, carry toward +y, release at t = 16
        a.extend((0..5).map(|_| step([0.0, 0.0, -0.046], 0.3, 1.0)));
        a.push(step([0.0; 3], 0.0, 0.0));
        a.extend((0..3).map(|_| step([0.0, 0.0, 0.05], 0.0, 0.0)));
        a.extend((0..4).map(|_| step([0.02, 0.05, 0.0], 0.0, 0.0)));
        a.extend((0..2).map(|_| step([0.0, 0.0, -0.05], 0.0, 0.0)));
        a.push(step([0.0; 3], 0.0, 1.0));
        a.extend((0..4).map(|_| step([0.0, 0.0, 0.04], 0.0, 1.0)));
    } else {
        // approach diagonally, grasp at t = 6, carry toward -y, release at t = 17
        a.extend((0..5).map(|_| step([0.02, -0.01, -0.046], -0.35, 1.0)));
        a.push(step([0.0; 3], 0.0, 0.0));
        a.extend((0..3).map(|_| step([0.0, 0.0, 0.04], 0.0, 0.0)));
        a.extend((0..5).map(|_| step([-0.01, -0.04, 0.0], 0.05, 0.0)));
        a.extend((0..2).map(|_| step([0.0, 0.0, -0.04], 0.0, 0.0)));
        a.push(step([0.0; 3], 0.0, 1.0));
        a.extend((0..3).map(|_| step([0.0, 0.0, 0.05], 0.0, 1.0)));
    }
    debug_assert_eq!(a.len(), T_LEN);
    a
}

fn instruction(index: usize) -> (String, String, Option<String>) {
    if index.is_multiple_of(2) {
        (
            "put the yellow mug on the table".into(),
            "yellow mug".into(),
            Some("table".into()),
        )
    } else {
        (
            "move the yellow mug to the left".into(),
            "yellow mug".into(),
            None,
        )
    }
}

fn hash2(a: i64, b: i64, salt: u64) -> u64 {
    let mut z = (a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (b as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ salt;
    z = (z ^ (z >> 31)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 29)
}

fn shade_rgb(base: [i32; 3], delta: i32) -> Rgb<u8> {
    Rgb(base.map(|c| (c + delta).clamp(0, 255) as u8))
}

/// What a background ray hits.
struct Hit {
    color: Rgb<u8>,
    depth: Option<f64>,
    table: bool,
}

fn cast(cam: &CameraModel, x: u32, y: u32) -> Hit {
    let dir_cam = Vec3::new(
        (f64::from(x) - cam.cx) / cam.fx,
        (f64::from(y) - cam.cy) / cam.fy,
        1.0,
    );
    let origin = cam.camera_center();
    let dir = cam.cam_to_world.rotation * dir_cam;
    let plane = |z: f64| {
        (dir.z < 0.0)
            .then(|| (z - origin.z) / dir.z)
            .filter(|s| *s > 0.0)
    };
    if let Some(s) = plane(TABLE_HEIGHT) {
        let p = origin + dir * s;
        if (TABLE_X.0..=TABLE_X.1).contains(&p.x) && (TABLE_Y.0..=TABLE_Y.1).contains(&p.y) {
            let (i, j) = ((p.x / 0.04).floor() as i64, (p.y / 0.04).floor() as i64);
            let (k, l) = ((p.x / 0.01).floor() as i64, (p.y / 0.01).floor() as i64);
            let checker = if (i + j) % 2 == 0 { 14 } else { -14 };
            let grain = (hash2(k, l, 1) % 17) as i32 - 8;
            return Hit {
                color: shade_rgb([168, 128, 88], checker + grain),
                depth: Some(s),
                table: true,
            };
        }
    }
    if let Some(s) = plane(0.0) {
        let p = origin + dir * s;
        let (i, j) = ((p.x / 0.25).floor() as i64, (p.y / 0.25).floor() as i64);
        let tone = if (i + j) % 2 == 0 { 10 } else { -10 };
        return Hit {
            color: shade_rgb([96, 96, 108], tone + (hash2(i, j, 2) % 9) as i32 - 4),
            depth: Some(s),
            table: false,
        };
    }
    let stripe = (hash2((dir.x * 20.0).floor() as i64, 0, 3) % 7) as i32;
    Hit {
        color: shade_rgb([200, 206, 214], stripe - (dir.z * 40.0) as i32),
        depth: None,
        table: false,
    }
}

/// Static background image, its z-depth (`None` where nothing is hit), and a
/// table label map for one camera.
pub fn background(cam: &CameraModel) -> (RgbImage, Vec<Option<f64>>, LabelMask) {
    let mut img = RgbImage::new(cam.width, cam.height);
    let mut depth = Vec::with_capacity((cam.width * cam.height) as usize);
    let mut table = LabelMask::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let hit = cast(cam, x, y);
            img.put_pixel(x, y, hit.color);
            // ray parameter s along an unnormalized ray with unit camera z is z-depth
            depth.push(hit.depth);
            if hit.table {
                table.set(x, y, LABEL_TABLE);
            }
        }
    }
    (img, depth, table)
}

pub fn scene(cams: &[CameraModel]) -> SceneConfig {
    let a = AlignConfig::default();
    let base = robot_base().translation;
    SceneConfig {
        table_height: TABLE_HEIGHT,
        robot_base: robot_base(),
        cameras: cams.to_vec(),
        workspace_bounds: Aabb {
            min: base + Vec3::from(a.workspace_min),
            max: base + Vec3::from(a.workspace_max),
        },
    }
}

/// The recorded replay of `source_object` along `actions(index)`.
pub fn recorded_trajectory(index: usize, size: u32) -> Result<SimTrajectory> {
    let cams = cameras(size);
    let cfg = ReplayConfig::default();
    let shell = Episode {
        id: format!("fixture-{index:02}"),
        instruction: String::new(),
        object_phrase: String::new(),
        container_phrase: None,
        frames: Vec::new(),
        actions: actions(index),
        cameras: cams.clone(),
        robot_base_pose: robot_base(),
        depth_frame_1: None,
        masks: Vec::new(),
        provenance: None,
    };
    simulate_replay(
        &scene(&cams),
        &shell,
        &source_object(),
        None,
        &ee_start(&robot_base(), &cfg),
        &cfg,
    )
}

/// Builds recorded episode `index` at `size`×`size` pixels.
pub fn episode(index: usize, size: u32) -> Result<Episode> {
    let cams = cameras(size);
    let traj = recorded_trajectory(index, size)?;
    let gripper = GripperGeometry::default();
    let mut images: Vec<Vec<RgbImage>> = vec![Vec::with_capacity(T_LEN); cams.len()];
    let mut masks: Vec<Vec<LabelMask>> = vec![Vec::with_capacity(T_LEN); cams.len()];
    let mut depth_frame_1 = None;
    for (c, cam) in cams.iter().enumerate() {
        let (bg, bg_depth, table) = background(cam);
        for state in &traj.states {
            let sim = rasterize_scene(cam, state, &traj.asset, None, &gripper);
            images[c].push(composite_frame(&sim, &bg, false)?);
            let mask =
                LabelMask::from_fn(cam.width, cam.height, |x, y| match sim.label.get(x, y) {
                    0 => table.get(x, y),
                    l => l,
                });
            if c == 0 && state.t == 1 {
                depth_frame_1 = Some(DepthMap::from_fn(cam.width, cam.height, |x, y| {
                    let i = (y * cam.width + x) as usize;
                    let d = sim.depth_at(x, y);
                    DepthMap::encode_meters(if d.is_finite() {
                        d
                    } else {
                        bg_depth[i].unwrap_or(0.0)
                    })
                }));
            }
            masks[c].push(mask);
        }
    }
    let (instruction, object_phrase, container_phrase) = instruction(index);
    let mut columns: Vec<_> = images.into_iter().map(Vec::into_iter).collect();
    let frames = (1..=T_LEN)
        .map(|t| Frame {
            timestep: t as u32,
            images: columns
                .iter_mut()
                .map(|c| c.next().expect("one image per state"))
                .collect(),
        })
        .collect();
    let ep = Episode {
        id: format!("fixture-{index:02}"),
        instruction,
        object_phrase,
        container_phrase,
        frames,
        actions: actions(index),
        cameras: cams,
        robot_base_pose: robot_base(),
        depth_frame_1,
        masks,
        provenance: None,
    };
    ep.validate()?;
    Ok(ep)
}

#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub catalog: PathBuf,
    pub config: PathBuf,
}

/// Writes `count` recorded episodes, their manifest, the asset catalog, and a
/// pipeline config (3 variants, seed 7, output `<root>/out`) under `root`.
pub fn write_dataset(root: &Path, count: usize, size: u32) -> Result<FixturePaths> {
    let source = root.join("source");
    fs::create_dir_all(&source).map_err(|e| Error::io(&source, e))?;
    let mut listed = Vec::with_capacity(count);
    for i in 0..count {
        let ep = episode(i, size)?;
        let dir = source.join(&ep.id);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        save_episode(&ep, &dir)?;
        listed.push((ep.id, dir));
    }
    let manifest = source.join("manifest.json");
    write_manifest(&listed, &manifest, "fixture")?;
    let catalog_path = root.join("catalog.json");
    save_asset_catalog(&catalog(), &catalog_path)?;

    let mut cfg = PipelineConfig::new(
        "source/manifest.json".into(),
        "out".into(),
        "catalog.json".into(),
    );
    cfg.variants_per_episode = 3;
    cfg.seed = 7;
    let config = root.join("config.json");
    crate::episode::write_json(&config, &cfg)?;
    Ok(FixturePaths {
        root: root.to_path_buf(),
        manifest,
        catalog: catalog_path,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::validate_replay;

    #[test]
    fn recorded_replays_hold_the_mug() {
        for i in 0..2 {
            let traj = recorded_trajectory(i, 64).unwrap();
            let report = validate_replay(&traj, ReplayConfig::default().r_valid);
            assert!(report.success, "{i}: {report:?}");
            assert_eq!(traj.states.len(), T_LEN);
        }
    }

    #[test]
    fn background_depth_matches_table_plane() {
        let cam = &cameras(64)[0];
        let (_, depth, table) = background(cam);
        let mut n = 0;
        for y in 0..64 {
            for x in 0..64 {
                if table.get(x, y) == LABEL_TABLE {
                    let p = crate::geometry::backproject_pixel(
                        cam,
                        f64::from(x),
                        f64::from(y),
                        depth[(y * 64 + x) as usize].unwrap(),
                    )
                    .unwrap();
                    assert!((p.z - TABLE_HEIGHT).abs() < 1e-9);
                    n += 1;
                }
            }
        }
        assert!(n > 64 * 64 / 4);
    }

    #[test]
    fn episode_is_deterministic() {
        let a = episode(1, 48).unwrap();
        let b = episode(1, 48).unwrap();
        assert_eq!(a.frames[7].images, b.frames[7].images);
        assert_eq!(a.masks, b.masks);
        assert!(a.table_mask().is_some());
    }
}
