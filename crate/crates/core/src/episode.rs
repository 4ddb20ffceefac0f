//! Episode data model and the on-disk dataset layout.
//!
//! ```text
//! <episode>/
//! ├── meta.json
//! ├── frames/<camera>/000001.png …    8-bit RGB
//! ├── depth/000001.pgm                16-bit millimeters, 0 = invalid
//! ├── masks/<camera>/000001.pgm …     optional labels (0 bg, 1 robot, 2 object, 3 table)
//! └── provenance.json                 synthetic episodes only
//! ```
//!
//! Masks are optional per camera; when present there is either a single
//! frame-1 map (table only) or one map per frame.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};
use crate::raster::{self, DepthMap, LabelMask, RgbImage, LABEL_TABLE};

/// One delta end-effector command. `gripper` is normalized so 1.0 = open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub d_translation: [f64; 3],
    pub d_rotation: [f64; 3],
    pub gripper: f64,
}

impl Action {
    pub fn to_row(&self) -> [f64; 7] {
        let [dx, dy, dz] = self.d_translation;
        let [r, p, y] = self.d_rotation;
        [dx, dy, dz, r, p, y, self.gripper]
    }

    pub fn from_row(row: [f64; 7]) -> Self {
        Action {
            d_translation: [row[0], row[1], row[2]],
            d_rotation: [row[3], row[4], row[5]],
            gripper: row[6],
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.to_row().iter().all(|v| v.is_finite()) {
            return Err("non-finite component".into());
        }
        if !(0.0..=1.0).contains(&self.gripper) {
            return Err(format!("gripper {} outside [0, 1]", self.gripper));
        }
        Ok(())
    }

    /// Bitwise equality on all seven components.
    pub fn bit_eq(&self, other: &Action) -> bool {
        self.to_row()
            .iter()
            .zip(other.to_row().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Bitwise comparison of two action sequences.
pub fn actions_bit_identical(a: &[Action], b: &[Action]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestep: u32,
    /// One image per camera, in camera order.
    pub images: Vec<RgbImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_episode_id: String,
    pub asset_name: String,
    pub container_asset_name: Option<String>,
    pub seed: u64,
}

/// A recorded or synthesized manipulation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub instruction: String,
    pub object_phrase: String,
    pub container_phrase: Option<String>,
    pub frames: Vec<Frame>,
    pub actions: Vec<Action>,
    pub cameras: Vec<CameraModel>,
    pub robot_base_pose: Pose,
    pub depth_frame_1: Option<DepthMap>,
    /// Per camera: empty, frame 1 only, or one mask per frame.
    pub masks: Vec<Vec<LabelMask>>,
    /// Present on synthetic episodes only.
    pub provenance: Option<Provenance>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_synthetic(&self) -> bool {
        self.provenance.is_some()
    }

    /// Frame-1 table mask of the first camera, if it labels any table pixel.
    pub fn table_mask(&self) -> Option<&LabelMask> {
        self.masks
            .first()
            .and_then(|m| m.first())
            .filter(|m| m.count(LABEL_TABLE) > 0)
    }

    /// Full-length mask sequence for camera `cam`, if available.
    pub fn frame_masks(&self, cam: usize) -> Option<&[LabelMask]> {
        self.masks
            .get(cam)
            .filter(|m| m.len() == self.frames.len())
            .map(Vec::as_slice)
    }

    /// All images of camera `cam` in temporal order.
    pub fn camera_frames(&self, cam: usize) -> Vec<&RgbImage> {
        self.frames.iter().map(|f| &f.images[cam]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("id", "empty episode id"));
        }
        if !self.instruction.contains(&self.object_phrase) || self.object_phrase.is_empty() {
            return Err(Error::PhraseNotFound {
                field: "object_phrase".into(),
                phrase: self.object_phrase.clone(),
            });
        }
        if let Some(c) = &self.container_phrase {
            if c.is_empty() || !self.instruction.contains(c.as_str()) {
                return Err(Error::PhraseNotFound {
                    field: "container_phrase".into(),
                    phrase: c.clone(),
                });
            }
        }
        if self.actions.len() != self.frames.len() {
            return Err(Error::LengthMismatch {
                field: "actions".into(),
                expected: self.frames.len(),
                found: self.actions.len(),
            });
        }
        if self.frames.len() < 2 {
            return Err(Error::invalid(
                "frames",
                "an episode needs at least 2 frames",
            ));
        }
        for (i, a) in self.actions.iter().enumerate() {
            a.validate()
                .map_err(|reason| Error::invalid(format!("actions[{i}]"), reason))?;
        }
        if self.cameras.is_empty() {
            return Err(Error::invalid("cameras", "at least one camera is required"));
        }
        let mut names = HashSet::new();
        for cam in &self.cameras {
            cam.validate()?;
            if !names.insert(cam.name.as_str()) {
                return Err(Error::invalid(
                    "cameras.name",
                    format!("duplicate camera `{}`", cam.name),
                ));
            }
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.timestep as usize != i + 1 {
                return Err(Error::invalid(
                    "frames.timestep",
                    format!("expected {}, found {}", i + 1, frame.timestep),
                ));
            }
            if frame.images.len() != self.cameras.len() {
                return Err(Error::LengthMismatch {
                    field: format!("frames[{}].images", i + 1),
                    expected: self.cameras.len(),
                    found: frame.images.len(),
                });
            }
            for (img, cam) in frame.images.iter().zip(&self.cameras) {
                if img.width() != cam.width || img.height() != cam.height {
                    return Err(Error::DimensionMismatch(format!(
                        "frame {} camera `{}`: image {}x{} vs camera {}x{}",
                        i + 1,
                        cam.name,
                        img.width(),
                        img.height(),
                        cam.width,
                        cam.height
                    )));
                }
            }
        }
        if let (Some(depth), Some(cam)) = (&self.depth_frame_1, self.cameras.first()) {
            if depth.width() != cam.width || depth.height() != cam.height {
                return Err(Error::DimensionMismatch(format!(
                    "depth {}x{} vs camera `{}` {}x{}",
                    depth.width(),
                    depth.height(),
                    cam.name,
                    cam.width,
                    cam.height
                )));
            }
        }
        if !self.masks.is_empty() && self.masks.len() != self.cameras.len() {
            return Err(Error::LengthMismatch {
                field: "masks".into(),
                expected: self.cameras.len(),
                found: self.masks.len(),
            });
        }
        for (masks, cam) in self.masks.iter().zip(&self.cameras) {
            if !(masks.len() <= 1 || masks.len() == self.frames.len()) {
                return Err(Error::LengthMismatch {
                    field: format!("masks.{}", cam.name),
                    expected: self.frames.len(),
                    found: masks.len(),
                });
            }
            if let Some(m) = masks
                .iter()
                .find(|m| m.width() != cam.width || m.height() != cam.height)
            {
                return Err(Error::DimensionMismatch(format!(
                    "mask {}x{} vs camera `{}`",
                    m.width(),
                    m.height(),
                    cam.name
                )));
            }
        }
        if let Some(p) = &self.provenance {
            if p.source_episode_id.is_empty() || p.asset_name.is_empty() {
                return Err(Error::invalid("provenance", "empty provenance field"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraMeta {
    name: String,
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    cam_to_world: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeMeta {
    id: String,
    instruction: String,
    object_phrase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    container_phrase: Option<String>,
    gripper_open_is_one: bool,
    actions: Vec<Vec<f64>>,
    cameras: Vec<CameraMeta>,
    robot_base_pose: Vec<f64>,
}

pub fn frame_file_name(t: usize, ext: &str) -> String {
    format!("{t:06}.{ext}")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Numbered files `000001.<ext>`, `000002.<ext>`, … in `dir`, which must be
/// consecutive from 1.
fn numbered_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut stems: Vec<usize> = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        match stem.parse::<usize>() {
            Ok(n) if stem.len() == 6 && n >= 1 => stems.push(n),
            _ => {
                return Err(Error::invalid(
                    path.display().to_string(),
                    "file name is not a 6-digit timestep",
                ))
            }
        }
    }
    stems.sort_unstable();
    for (i, n) in stems.iter().enumerate() {
        if *n != i + 1 {
            return Err(Error::invalid(
                dir.display().to_string(),
                format!("missing timestep {}", i + 1),
            ));
        }
    }
    Ok(stems
        .iter()
        .map(|n| dir.join(frame_file_name(*n, ext)))
        .collect())
}

/// Loads and validates an episode directory.
pub fn load_episode(dir: &Path) -> Result<Episode> {
    let meta: EpisodeMeta = read_json(&dir.join("meta.json"))?;

    let mut actions = Vec::with_capacity(meta.actions.len());
    for (i, row) in meta.actions.iter().enumerate() {
        let row: [f64; 7] = row
            .as_slice()
            .try_into()
            .map_err(|_| Error::LengthMismatch {
                field: format!("actions[{i}]"),
                expected: 7,
                found: row.len(),
            })?;
        let mut a = Action::from_row(row);
        if !meta.gripper_open_is_one {
            a.gripper = 1.0 - a.gripper;
        }
        actions.push(a);
    }

    let mut cameras = Vec::with_capacity(meta.cameras.len());
    for c in &meta.cameras {
        let cam_to_world = Pose::from_matrix(&c.cam_to_world).map_err(|e| {
            Error::invalid(format!("cameras.{}.cam_to_world", c.name), e.to_string())
        })?;
        cameras.push(CameraModel {
            name: c.name.clone(),
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            cam_to_world,
        });
    }
    let robot_base_pose = Pose::from_matrix(&meta.robot_base_pose)
        .map_err(|e| Error::invalid("robot_base_pose", e.to_string()))?;
    if cameras.is_empty() {
        return Err(Error::invalid("cameras", "at least one camera is required"));
    }

    let mut per_camera: Vec<Vec<RgbImage>> = Vec::with_capacity(cameras.len());
    for cam in &cameras {
        let files = numbered_files(&dir.join("frames").join(&cam.name), "png")?;
        let images = files
            .iter()
            .map(|p| raster::read_rgb_png(p))
            .collect::<Result<Vec<_>>>()?;
        per_camera.push(images);
    }
    let t_len = per_camera[0].len();
    for (images, cam) in per_camera.iter().zip(&cameras) {
        if images.len() != t_len {
            return Err(Error::LengthMismatch {
                field: format!("frames.{}", cam.name),
                expected: t_len,
                found: images.len(),
            });
        }
    }
    if actions.len() != t_len {
        return Err(Error::LengthMismatch {
            field: "actions".into(),
            expected: t_len,
            found: actions.len(),
        });
    }
    let mut columns: Vec<_> = per_camera.into_iter().map(Vec::into_iter).collect();
    let frames = (1..=t_len)
        .map(|t| Frame {
            timestep: t as u32,
            images: columns
                .iter_mut()
                .map(|c| c.next().expect("length checked"))
                .collect(),
        })
        .collect();

    let depth_path = dir.join("depth").join(frame_file_name(1, "pgm"));
    let depth_frame_1 = if depth_path.exists() {
        Some(raster::read_depth_pgm(&depth_path)?)
    } else {
        None
    };

    let masks_root = dir.join("masks");
    let mut masks = Vec::new();
    if masks_root.is_dir() {
        for cam in &cameras {
            let cam_dir = masks_root.join(&cam.name);
            if !cam_dir.is_dir() {
                masks.push(Vec::new());
                continue;
            }
            let maps = numbered_files(&cam_dir, "pgm")?
                .iter()
                .map(|p| raster::read_label_pgm(p))
                .collect::<Result<Vec<_>>>()?;
            masks.push(maps);
        }
        if masks.iter().all(Vec::is_empty) {
            masks.clear();
        }
    }

    let prov_path = dir.join("provenance.json");
    let provenance = if prov_path.exists() {
        Some(read_json(&prov_path)?)
    } else {
        None
    };

    let episode = Episode {
        id: meta.id,
        instruction: meta.instruction,
        object_phrase: meta.object_phrase,
        container_phrase: meta.container_phrase,
        frames,
        actions,
        cameras,
        robot_base_pose,
        depth_frame_1,
        masks,
        provenance,
    };
    episode.validate()?;
    Ok(episode)
}

/// Writes `episode` in the standard layout under `dir`. Gripper values are
/// written in the normalized open-is-one convention.
pub fn save_episode(episode: &Episode, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let meta = EpisodeMeta {
        id: episode.id.clone(),
        instruction: episode.instruction.clone(),
        object_phrase: episode.object_phrase.clone(),
        container_phrase: episode.container_phrase.clone(),
        gripper_open_is_one: true,
        actions: episode
            .actions
            .iter()
            .map(|a| a.to_row().to_vec())
            .collect(),
        cameras: episode
            .cameras
            .iter()
            .map(|c| CameraMeta {
                name: c.name.clone(),
                width: c.width,
                height: c.height,
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                cam_to_world: c.cam_to_world.to_matrix().to_vec(),
            })
            .collect(),
        robot_base_pose: episode.robot_base_pose.to_matrix().to_vec(),
    };
    write_json(&dir.join("meta.json"), &meta)?;

    for (ci, cam) in episode.cameras.iter().enumerate() {
        let cam_dir = dir.join("frames").join(&cam.name);
        create_dir(&cam_dir)?;
        for frame in &episode.frames {
            let path = cam_dir.join(frame_file_name(frame.timestep as usize, "png"));
            raster::write_rgb_png(&path, &frame.images[ci])?;
        }
    }
    if let Some(depth) = &episode.depth_frame_1 {
        let depth_dir = dir.join("depth");
        create_dir(&depth_dir)?;
        raster::write_depth_pgm(&depth_dir.join(frame_file_name(1, "pgm")), depth)?;
    }
    for (masks, cam) in episode.masks.iter().zip(&episode.cameras) {
        if masks.is_empty() {
            continue;
        }
        let cam_dir = dir.join("masks").join(&cam.name);
        create_dir(&cam_dir)?;
        for (i, m) in masks.iter().enumerate() {
            raster::write_label_pgm(&cam_dir.join(frame_file_name(i + 1, "pgm")), m)?;
        }
    }
    if let Some(p) = &episode.provenance {
        write_json(&dir.join("provenance.json"), p)?;
    }
    Ok(())
}

/// Primitive body shape with its dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { extents: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    pub fn half_height(&self) -> f64 {
        match *self {
            Shape::Box { extents } => extents[2] / 2.0,
            Shape::Sphere { radius } => radius,
            Shape::Cylinder { height, .. } => height / 2.0,
        }
    }

    /// Half extents of the axis-aligned xy footprint after rotating by `yaw`.
    pub fn footprint_half_extents(&self, yaw: f64) -> [f64; 2] {
        match *self {
            Shape::Box { extents } => {
                let (s, c) = yaw.sin_cos();
                let (hx, hy) = (extents[0] / 2.0, extents[1] / 2.0);
                [c.abs() * hx + s.abs() * hy, s.abs() * hx + c.abs() * hy]
            }
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => [radius, radius],
        }
    }

    pub fn min_horizontal_extent(&self) -> f64 {
        match *self {
            Shape::Box { extents } => extents[0].min(extents[1]),
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => 2.0 * radius,
        }
    }

    pub fn max_horizontal_extent(&self) -> f64 {
        match *self {
            Shape::Box { extents } => extents[0].max(extents[1]),
            Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => 2.0 * radius,
        }
    }

    fn dimensions(&self) -> Vec<f64> {
        match *self {
            Shape::Box { extents } => extents.to_vec(),
            Shape::Sphere { radius } => vec![radius],
            Shape::Cylinder { radius, height } => vec![radius, height],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    #[default]
    Object,
    Container,
}

/// A primitive stand-in for a simulated object or container.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAsset {
    pub name: String,
    pub display_name: String,
    pub kind: AssetKind,
    pub shape: Shape,
    pub color: [u8; 3],
    pub graspable_width: f64,
    pub grasp_center_offset: [f64; 3],
}

impl ObjectAsset {
    pub fn validate(&self) -> Result<()> {
        let dims = self.shape.dimensions();
        if dims
            .iter()
            .any(|d| d.is_nan() || *d <= 0.0 || !d.is_finite())
        {
            return Err(Error::NonPositiveDimension(self.name.clone()));
        }
        if self.graspable_width.is_nan() || self.graspable_width <= 0.0 {
            return Err(Error::NonPositiveDimension(self.name.clone()));
        }
        if self.graspable_width > self.shape.max_horizontal_extent() + 1e-12 {
            return Err(Error::invalid(
                format!("assets.{}.graspable_width", self.name),
                "exceeds the largest horizontal extent",
            ));
        }
        if self.grasp_center_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                format!("assets.{}.grasp_center_offset", self.name),
                "non-finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeName {
    Box,
    Sphere,
    Cylinder,
}

#[derive(Debug, Serialize, Deserialize)]
struct AssetRecord {
    name: String,
    display_name: String,
    #[serde(default)]
    kind: AssetKind,
    shape: ShapeName,
    dimensions: Vec<f64>,
    color: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    graspable_width: Option<f64>,
    #[serde(default)]
    grasp_center_offset: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogFile {
    assets: Vec<AssetRecord>,
}

fn asset_from_record(r: AssetRecord) -> Result<ObjectAsset> {
    let want = match r.shape {
        ShapeName::Box => 3,
        ShapeName::Sphere => 1,
        ShapeName::Cylinder => 2,
    };
    if r.dimensions.len() != want {
        return Err(Error::LengthMismatch {
            field: format!("assets.{}.dimensions", r.name),
            expected: want,
            found: r.dimensions.len(),
        });
    }
    let d = &r.dimensions;
    let shape = match r.shape {
        ShapeName::Box => Shape::Box {
            extents: [d[0], d[1], d[2]],
        },
        ShapeName::Sphere => Shape::Sphere { radius: d[0] },
        ShapeName::Cylinder => Shape::Cylinder {
            radius: d[0],
            height: d[1],
        },
    };
    if d.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::NonPositiveDimension(r.name));
    }
    let asset = ObjectAsset {
        graspable_width: r
            .graspable_width
            .unwrap_or_else(|| shape.min_horizontal_extent()),
        name: r.name,
        display_name: r.display_name,
        kind: r.kind,
        shape,
        color: r.color,
        grasp_center_offset: r.grasp_center_offset,
    };
    asset.validate()?;
    Ok(asset)
}

fn record_from_asset(a: &ObjectAsset) -> AssetRecord {
    let shape = match a.shape {
        Shape::Box { .. } => ShapeName::Box,
        Shape::Sphere { .. } => ShapeName::Sphere,
        Shape::Cylinder { .. } => ShapeName::Cylinder,
    };
    AssetRecord {
        name: a.name.clone(),
        display_name: a.display_name.clone(),
        kind: a.kind,
        shape,
        dimensions: a.shape.dimensions(),
        color: a.color,
        graspable_width: Some(a.graspable_width),
        grasp_center_offset: a.grasp_center_offset,
    }
}

pub fn parse_asset_catalog(text: &str, origin: &Path) -> Result<Vec<ObjectAsset>> {
    let file: CatalogFile = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
    let mut seen = HashSet::new();
    let mut assets = Vec::with_capacity(file.assets.len());
    for record in file.assets {
        if !seen.insert(record.name.clone()) {
            return Err(Error::DuplicateAsset(record.name));
        }
        assets.push(asset_from_record(record)?);
    }
    Ok(assets)
}

pub fn load_asset_catalog(path: &Path) -> Result<Vec<ObjectAsset>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_asset_catalog(&text, path)
}

pub fn save_asset_catalog(assets: &[ObjectAsset], path: &Path) -> Result<()> {
    let file = CatalogFile {
        assets: assets.iter().map(record_from_asset).collect(),
    };
    write_json(path, &file)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source_dataset_tag: String,
    pub count: usize,
    pub episodes: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Absolute (or cwd-relative) episode directories.
    pub fn resolve(&self, manifest_path: &Path) -> Vec<(String, PathBuf)> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        self.episodes
            .iter()
            .map(|e| (e.id.clone(), base.join(&e.path)))
            .collect()
    }
}

/// Writes `manifest.json` listing `episodes` (id, directory). Directories are
/// stored relative to the manifest when they live beneath it.
pub fn write_manifest(
    episodes: &[(String, PathBuf)],
    path: &Path,
    source_dataset_tag: &str,
) -> Result<DatasetManifest> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::with_capacity(episodes.len());
    for (id, dir) in episodes {
        if !dir.join("meta.json").is_file() {
            return Err(Error::DanglingPath(dir.clone()));
        }
        let rel = dir
            .strip_prefix(base)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| dir.clone());
        entries.push(ManifestEntry {
            id: id.clone(),
            path: rel,
        });
    }
    let manifest = DatasetManifest {
        source_dataset_tag: source_dataset_tag.to_string(),
        count: entries.len(),
        episodes: entries,
    };
    write_json(path, &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = read_json(path)?;
    if manifest.count != manifest.episodes.len() {
        return Err(Error::LengthMismatch {
            field: "count".into(),
            expected: manifest.episodes.len(),
            found: manifest.count,
        });
    }
    Ok(manifest)
}
