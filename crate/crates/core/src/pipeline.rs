//! Batch orchestration: configuration, seeded asset selection, instruction
//! rewriting, per-episode synthesis, and dataset-level metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episode::{
    load_asset_catalog, load_episode, read_manifest, save_episode, write_json, write_manifest,
    AssetKind, DatasetManifest, Episode, Frame, ObjectAsset, Provenance,
};
use crate::error::{Error, Result};
use crate::exchange::{self, PointPrompt};
use crate::geometry::{project_point, Pose, Vec3};
use crate::quality::{evaluate_video, mean_scores, QualityReport, QualityScores, DEFAULT_S_REF};
use crate::raster::{LabelMask, RgbImage, LABEL_BACKGROUND, LABEL_CONTAINER, LABEL_TABLE};
use crate::render::{
    composite_frame, make_point_prompt, naive_inpaint, rasterize_scene, synthesize_video,
    GripperGeometry, SynthesizedView,
};
use crate::replay::{
    detect_grasp_window, ee_start, place_object, replay_ee, simulate_replay, validate_replay,
    FailureReason, PoseSpec, ReplayConfig, SimState, SimTrajectory, ValidationReport,
};
use crate::scene::{build_scene_config, build_scene_config_with_mask, AlignConfig, SceneConfig};

/// Overrides the configured worker count.
pub const WORKERS_ENV: &str = "TRAJSYNTH_WORKERS";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub r_attach: f64,
    pub r_valid: f64,
    pub max_aperture: f64,
    pub w_min: f64,
    pub iqr_multiplier: f64,
    pub s_ref: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let r = ReplayConfig::default();
        Thresholds {
            r_attach: r.r_attach,
            r_valid: r.r_valid,
            max_aperture: r.max_aperture,
            w_min: r.w_min,
            iqr_multiplier: AlignConfig::default().iqr_multiplier,
            s_ref: DEFAULT_S_REF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input_manifest: PathBuf,
    pub output_dir: PathBuf,
    pub asset_catalog: PathBuf,
    pub variants_per_episode: usize,
    pub seed: u64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub use_adapter: bool,
    #[serde(default)]
    pub feather: bool,
    /// Substitute a catalog container when the instruction names one.
    #[serde(default = "default_true")]
    pub place_containers: bool,
    /// Program and leading arguments of the adapter executable.
    #[serde(default)]
    pub adapter_command: Vec<String>,
    #[serde(default)]
    pub home_tip_offset: Option<PoseSpec>,
    #[serde(default)]
    pub workspace_min: Option<[f64; 3]>,
    #[serde(default)]
    pub workspace_max: Option<[f64; 3]>,
    #[serde(default)]
    pub gripper: GripperGeometry,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    pub fn new(input_manifest: PathBuf, output_dir: PathBuf, asset_catalog: PathBuf) -> Self {
        PipelineConfig {
            input_manifest,
            output_dir,
            asset_catalog,
            variants_per_episode: 1,
            seed: 0,
            thresholds: Thresholds::default(),
            use_adapter: false,
            feather: false,
            place_containers: true,
            adapter_command: Vec::new(),
            home_tip_offset: None,
            workspace_min: None,
            workspace_max: None,
            gripper: GripperGeometry::default(),
            workers: None,
        }
    }

    /// Reads a config file; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [
            &mut cfg.input_manifest,
            &mut cfg.output_dir,
            &mut cfg.asset_catalog,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants_per_episode < 1 {
            return Err(Error::Config(
                "variants_per_episode must be at least 1".into(),
            ));
        }
        let t = &self.thresholds;
        for (name, v) in [
            ("r_attach", t.r_attach),
            ("r_valid", t.r_valid),
            ("max_aperture", t.max_aperture),
            ("w_min", t.w_min),
            ("iqr_multiplier", t.iqr_multiplier),
            ("s_ref", t.s_ref),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "threshold {name} must be positive, got {v}"
                )));
            }
        }
        self.replay_config().validate()?;
        if self.use_adapter && self.adapter_command.is_empty() {
            return Err(Error::Config("use_adapter requires adapter_command".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn replay_config(&self) -> ReplayConfig {
        let t = &self.thresholds;
        let mut cfg = ReplayConfig {
            r_attach: t.r_attach,
            r_valid: t.r_valid,
            max_aperture: t.max_aperture,
            w_min: t.w_min,
            ..ReplayConfig::default()
        };
        if let Some(h) = self.home_tip_offset {
            cfg.home_tip_offset = h;
        }
        cfg
    }

    pub fn align_config(&self) -> AlignConfig {
        let d = AlignConfig::default();
        AlignConfig {
            iqr_multiplier: self.thresholds.iqr_multiplier,
            workspace_min: self.workspace_min.unwrap_or(d.workspace_min),
            workspace_max: self.workspace_max.unwrap_or(d.workspace_max),
        }
    }

    /// Environment override, then config, then available parallelism.
    pub fn worker_count(&self) -> usize {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|n| *n > 0)
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream seed for one episode; depends only on the run seed and the id.
pub fn episode_seed(seed: u64, episode_id: &str) -> u64 {
    splitmix(seed ^ splitmix(fnv1a(episode_id.as_bytes())))
}

/// Draws `k` objects for an episode: a shuffled pass over the object pool,
/// then uniform draws with replacement. Each draw gets a container when
/// `with_container` is set and the catalog has any.
pub fn select_assets(
    catalog: &[ObjectAsset],
    seed: u64,
    episode_id: &str,
    k: usize,
    with_container: bool,
) -> Result<Vec<(ObjectAsset, Option<ObjectAsset>)>> {
    let objects: Vec<&ObjectAsset> = catalog
        .iter()
        .filter(|a| a.kind == AssetKind::Object)
        .collect();
    let containers: Vec<&ObjectAsset> = catalog
        .iter()
        .filter(|a| a.kind == AssetKind::Container)
        .collect();
    if objects.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, episode_id));
    let mut container_rng = rng.clone();
    container_rng.set_stream(1);
    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.shuffle(&mut rng);
    let mut picks = Vec::with_capacity(k);
    for i in 0..k {
        let obj = match order.get(i) {
            Some(&j) => objects[j],
            None => objects[rng.random_range(0..objects.len())],
        };
        let container = (with_container && !containers.is_empty())
            .then(|| containers[container_rng.random_range(0..containers.len())].clone());
        picks.push((obj.clone(), container));
    }
    Ok(picks)
}

/// Replaces the first occurrence of `object_phrase` with the asset's display
/// name and, when both are given, the first non-overlapping occurrence of
/// `container_phrase` with the container's.
pub fn rewrite_instruction(
    instruction: &str,
    object_phrase: &str,
    container_phrase: Option<&str>,
    asset: &ObjectAsset,
    container_asset: Option<&ObjectAsset>,
) -> Result<String> {
    let missing = |field: &str, phrase: &str| Error::PhraseNotFound {
        field: field.into(),
        phrase: phrase.into(),
    };
    if object_phrase.is_empty() {
        return Err(missing("object_phrase", object_phrase));
    }
    let obj_start = instruction
        .find(object_phrase)
        .ok_or_else(|| missing("object_phrase", object_phrase))?;
    let obj = (
        obj_start,
        obj_start + object_phrase.len(),
        asset.display_name.as_str(),
    );
    let mut edits = vec![obj];
    if let (Some(phrase), Some(c)) = (container_phrase, container_asset) {
        let start = instruction
            .match_indices(phrase)
            .map(|(i, _)| i)
            .find(|&i| !phrase.is_empty() && (i + phrase.len() <= obj.0 || i >= obj.1))
            .ok_or_else(|| missing("container_phrase", phrase))?;
        edits.push((start, start + phrase.len(), c.display_name.as_str()));
    }
    edits.sort_by_key(|e| e.0);
    let mut out = String::with_capacity(instruction.len() + 16);
    let mut cursor = 0;
    for (start, end, text) in edits {
        out.push_str(&instruction[cursor..start]);
        out.push_str(text);
        cursor = end;
    }
    out.push_str(&instruction[cursor..]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Validated,
    Discarded,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub source_episode_id: String,
    pub variant: usize,
    pub asset: String,
    pub container: Option<String>,
    pub outcome: AttemptOutcome,
    pub failure_reason: Option<FailureReason>,
    pub max_distance: Option<f64>,
    pub output_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeError {
    pub source_episode_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub attempted: usize,
    pub validated: usize,
    pub emitted: usize,
    pub discarded: BTreeMap<String, usize>,
    /// Source episodes that could not be processed at all.
    pub errors: Vec<EpisodeError>,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest: DatasetManifest,
    pub report: RunReport,
}

impl RunSummary {
    /// Process exit code: success iff at least one episode was emitted.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.count > 0 {
            0
        } else {
            1
        }
    }
}

#[derive(Default)]
struct EpisodeOutcome {
    attempts: Vec<AttemptRecord>,
    error: Option<EpisodeError>,
    emitted: Vec<(String, PathBuf)>,
}

pub fn synthetic_id(source_id: &str, variant: usize) -> String {
    format!("{source_id}_syn{variant:03}")
}

/// Runs the full batch described by `cfg` and writes `manifest.json` and
/// `run_report.json` into the output directory.
pub fn run_synthesis(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let manifest = read_manifest(&cfg.input_manifest)?;
    let catalog = load_asset_catalog(&cfg.asset_catalog)?;
    if !catalog.iter().any(|a| a.kind == AssetKind::Object) {
        return Err(Error::EmptyCatalog);
    }
    let episodes_dir = cfg.output_dir.join("episodes");
    fs::create_dir_all(&episodes_dir).map_err(|e| Error::io(&episodes_dir, e))?;

    let sources = manifest.resolve(&cfg.input_manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<EpisodeOutcome> = pool.install(|| {
        sources
            .par_iter()
            .map(|(id, dir)| process_episode(cfg, &catalog, id, dir))
            .collect()
    });

    let mut report = RunReport {
        attempted: 0,
        validated: 0,
        emitted: 0,
        discarded: BTreeMap::new(),
        errors: Vec::new(),
        attempts: Vec::new(),
    };
    let mut emitted = Vec::new();
    for o in outcomes {
        for a in &o.attempts {
            report.attempted += 1;
            match a.outcome {
                AttemptOutcome::Validated => report.validated += 1,
                AttemptOutcome::Discarded => {
                    let reason = a.failure_reason.map_or("unknown", |r| r.as_str());
                    *report.discarded.entry(reason.to_string()).or_default() += 1;
                }
                AttemptOutcome::Error => {}
            }
        }
        report.attempts.extend(o.attempts);
        report.errors.extend(o.error);
        emitted.extend(o.emitted);
    }
    report.emitted = emitted.len();
    let manifest = write_manifest(
        &emitted,
        &cfg.output_dir.join(MANIFEST_FILE),
        &format!("{}+synthetic", manifest.source_dataset_tag),
    )?;
    write_json(&cfg.output_dir.join(RUN_REPORT_FILE), &report)?;
    Ok(RunSummary { manifest, report })
}

fn episode_error(id: &str, e: impl std::fmt::Display) -> EpisodeOutcome {
    EpisodeOutcome {
        error: Some(EpisodeError {
            source_episode_id: id.to_string(),
            message: e.to_string(),
        }),
        ..Default::default()
    }
}

/// Masks and backgrounds for a source episode.
struct Layers {
    table_mask: Option<LabelMask>,
    backgrounds: Vec<Vec<RgbImage>>,
}

fn builtin_layers(ep: &Episode) -> Result<Layers> {
    let backgrounds = (0..ep.cameras.len())
        .map(|c| {
            let masks = ep.frame_masks(c).ok_or_else(|| {
                Error::invalid(
                    format!("masks.{}", ep.cameras[c].name),
                    "built-in inpainting needs a mask for every frame",
                )
            })?;
            let frames: Vec<RgbImage> = ep.camera_frames(c).into_iter().cloned().collect();
            naive_inpaint(&frames, masks)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Layers {
        table_mask: ep.table_mask().cloned(),
        backgrounds,
    })
}

/// Segmentation seed for the adapter: the spawn-pose grasp center of the
/// first selected asset when the table is known, else the tip at `t_start`.
fn adapter_prompt(
    cfg: &PipelineConfig,
    ep: &Episode,
    first_asset: &ObjectAsset,
) -> Result<PointPrompt> {
    let window = detect_grasp_window(&ep.actions)?;
    let replay = cfg.replay_config();
    let start = ee_start(&ep.robot_base_pose, &replay);
    let cam = &ep.cameras[0];
    let uv = match build_scene_config(ep, &cfg.align_config()) {
        Ok(scene) => {
            let spawn = place_object(&scene, &ep.actions, &window, first_asset, &start)?;
            make_point_prompt(cam, first_asset, &spawn)?
        }
        Err(_) => {
            let tip =
                replay_ee(&start, &ep.actions[..window.t_start])[window.t_start - 1].translation;
            project_point(cam, &tip)?
        }
    };
    Ok(PointPrompt::new(&cam.name, window.t_start, uv))
}

fn adapter_layers(
    cfg: &PipelineConfig,
    ep: &Episode,
    dir: &Path,
    first_asset: &ObjectAsset,
) -> Result<Layers> {
    let prompt = adapter_prompt(cfg, ep, first_asset)?;
    prompt.validate(&ep.cameras, ep.len())?;
    let work = cfg.output_dir.join("adapter").join(&ep.id);
    if work.exists() {
        fs::remove_dir_all(&work).map_err(|e| Error::io(&work, e))?;
    }
    let job = exchange::prepare_job(&work, dir, prompt)?;
    let job_path = work.join("job.json");
    exchange::run_adapter(&cfg.adapter_command, "segment", &job_path)?;
    let masks = exchange::read_exchange_masks(&job.masks_dir, &ep.cameras, ep.len())?;
    exchange::run_adapter(&cfg.adapter_command, "inpaint", &job_path)?;
    let backgrounds =
        exchange::read_exchange_backgrounds(&job.backgrounds_dir, &ep.cameras, ep.len())?;
    let table_mask = ep.table_mask().cloned().or_else(|| {
        masks[0]
            .first()
            .filter(|m| m.count(LABEL_TABLE) > 0)
            .cloned()
    });
    Ok(Layers {
        table_mask,
        backgrounds,
    })
}

fn process_episode(
    cfg: &PipelineConfig,
    catalog: &[ObjectAsset],
    id: &str,
    dir: &Path,
) -> EpisodeOutcome {
    let ep = match load_episode(dir) {
        Ok(ep) => ep,
        Err(e) => return episode_error(id, e),
    };
    let selections = match select_assets(
        catalog,
        cfg.seed,
        &ep.id,
        cfg.variants_per_episode,
        cfg.place_containers && ep.container_phrase.is_some(),
    ) {
        Ok(s) => s,
        Err(e) => return episode_error(id, e),
    };
    let record =
        |variant: usize, asset: &ObjectAsset, container: &Option<ObjectAsset>| AttemptRecord {
            source_episode_id: ep.id.clone(),
            variant,
            asset: asset.name.clone(),
            container: container.as_ref().map(|c| c.name.clone()),
            outcome: AttemptOutcome::Discarded,
            failure_reason: None,
            max_distance: None,
            output_id: None,
            error: None,
        };

    if detect_grasp_window(&ep.actions).is_err() {
        let attempts = selections
            .iter()
            .enumerate()
            .map(|(k, (a, c))| AttemptRecord {
                failure_reason: Some(FailureReason::NoGraspWindow),
                ..record(k, a, c)
            })
            .collect();
        return EpisodeOutcome {
            attempts,
            ..Default::default()
        };
    }

    let layers = if cfg.use_adapter {
        adapter_layers(cfg, &ep, dir, &selections[0].0)
    } else {
        builtin_layers(&ep)
    };
    let layers = match layers {
        Ok(l) => l,
        Err(e) => return episode_error(id, e),
    };
    let scene =
        match build_scene_config_with_mask(&ep, layers.table_mask.as_ref(), &cfg.align_config()) {
            Ok(s) => s,
            Err(e) => return episode_error(id, e),
        };

    let replay = cfg.replay_config();
    let start = ee_start(&ep.robot_base_pose, &replay);
    let mut outcome = EpisodeOutcome::default();
    for (k, (asset, container)) in selections.iter().enumerate() {
        let mut rec = record(k, asset, container);
        let attempt = simulate_replay(&scene, &ep, asset, container.as_ref(), &start, &replay)
            .and_then(|traj| {
                let report = validate_replay(&traj, replay.r_valid);
                if !report.success {
                    return Ok((report, None));
                }
                let out_id = synthetic_id(&ep.id, k);
                let out_dir = cfg.output_dir.join("episodes").join(&out_id);
                let syn = build_synthetic_episode(cfg, &ep, &traj, &layers.backgrounds, &out_id)?;
                if out_dir.exists() {
                    fs::remove_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
                }
                save_episode(&syn, &out_dir)?;
                Ok((report, Some((out_id, out_dir))))
            });
        match attempt {
            Ok((report, written)) => {
                rec.max_distance = report
                    .max_distance
                    .is_finite()
                    .then_some(report.max_distance);
                rec.failure_reason = report.failure_reason;
                if let Some((out_id, out_dir)) = written {
                    rec.outcome = AttemptOutcome::Validated;
                    rec.output_id = Some(out_id.clone());
                    outcome.emitted.push((out_id, out_dir));
                }
            }
            Err(e) => {
                rec.outcome = AttemptOutcome::Error;
                rec.error = Some(e.to_string());
            }
        }
        outcome.attempts.push(rec);
    }
    outcome
}

/// Saved label maps: container pixels become background; frame 1 keeps the
/// source's table label wherever the sim layer is empty.
fn synthetic_masks(view: &SynthesizedView, source_frame1: Option<&LabelMask>) -> Vec<LabelMask> {
    view.labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut m = l.clone();
            for p in m.0.pixels_mut() {
                if p.0[0] == LABEL_CONTAINER {
                    p.0[0] = LABEL_BACKGROUND;
                }
            }
            if let (0, Some(src)) = (i, source_frame1) {
                for (p, s) in m.0.pixels_mut().zip(src.as_raw()) {
                    if p.0[0] == LABEL_BACKGROUND && *s == LABEL_TABLE {
                        p.0[0] = LABEL_TABLE;
                    }
                }
            }
            m
        })
        .collect()
}

/// Assembles the synthetic episode for a validated trajectory.
pub fn build_synthetic_episode(
    cfg: &PipelineConfig,
    source: &Episode,
    traj: &SimTrajectory,
    backgrounds: &[Vec<RgbImage>],
    out_id: &str,
) -> Result<Episode> {
    let views = synthesize_video(
        &source.cameras,
        traj,
        backgrounds,
        &cfg.gripper,
        cfg.feather,
    )?;
    let container = traj.container.as_ref();
    let instruction = rewrite_instruction(
        &source.instruction,
        &source.object_phrase,
        source.container_phrase.as_deref(),
        &traj.asset,
        container,
    )?;
    let container_phrase = match (&source.container_phrase, container) {
        (Some(_), Some(c)) => Some(c.display_name.clone()),
        (p, _) => p.clone(),
    };
    let frames = (0..source.len())
        .map(|t| Frame {
            timestep: t as u32 + 1,
            images: views.iter().map(|v| v.frames[t].clone()).collect(),
        })
        .collect();
    let masks = views
        .iter()
        .enumerate()
        .map(|(c, v)| synthetic_masks(v, source.masks.get(c).and_then(|m| m.first())))
        .collect();
    let episode = Episode {
        id: out_id.to_string(),
        instruction,
        object_phrase: traj.asset.display_name.clone(),
        container_phrase,
        frames,
        actions: source.actions.clone(),
        cameras: source.cameras.clone(),
        robot_base_pose: source.robot_base_pose,
        depth_frame_1: source.depth_frame_1.clone(),
        masks,
        provenance: Some(Provenance {
            source_episode_id: source.id.clone(),
            asset_name: traj.asset.name.clone(),
            container_asset_name: container.map(|c| c.name.clone()),
            seed: cfg.seed,
        }),
    };
    episode.validate()?;
    Ok(episode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraMetrics {
    pub camera: String,
    pub report: QualityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub id: String,
    /// Mean over cameras.
    pub scores: QualityScores,
    pub cameras: Vec<CameraMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub episodes: Vec<EpisodeMetrics>,
    /// Mean over episodes.
    pub aggregate: QualityScores,
}

fn dataset_episodes(dataset_dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let manifest_path = dataset_dir.join(MANIFEST_FILE);
    if manifest_path.is_file() {
        return Ok(read_manifest(&manifest_path)?.resolve(&manifest_path));
    }
    let mut dirs = Vec::new();
    let entries = fs::read_dir(dataset_dir).map_err(|e| Error::io(dataset_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dataset_dir, e))?.path();
        if path.join("meta.json").is_file() {
            let id = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            dirs.push((id, path));
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn evaluate_episode(ep: &Episode, s_ref: f64) -> Result<EpisodeMetrics> {
    let cameras = ep
        .cameras
        .iter()
        .enumerate()
        .map(|(c, cam)| {
            let masks = ep.frame_masks(c).ok_or_else(|| {
                Error::invalid(
                    format!("masks.{}", cam.name),
                    "metrics need a mask for every frame",
                )
            })?;
            let frames: Vec<RgbImage> = ep.camera_frames(c).into_iter().cloned().collect();
            Ok(CameraMetrics {
                camera: cam.name.clone(),
                report: evaluate_video(&frames, masks, s_ref)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_camera: Vec<QualityScores> = cameras.iter().map(|c| c.report.scores.clone()).collect();
    Ok(EpisodeMetrics {
        id: ep.id.clone(),
        scores: mean_scores(&per_camera).expect("episodes have at least one camera"),
        cameras,
    })
}

/// Scores every episode of a dataset directory (its `manifest.json`, or each
/// subdirectory holding a `meta.json`) and writes `metrics.json` there.
pub fn run_metrics(dataset_dir: &Path, s_ref: f64) -> Result<DatasetMetrics> {
    let sources = dataset_episodes(dataset_dir)?;
    if sources.is_empty() {
        return Err(Error::EmptyDataset(dataset_dir.to_path_buf()));
    }
    let episodes = sources
        .par_iter()
        .map(|(_, dir)| evaluate_episode(&load_episode(dir)?, s_ref))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<QualityScores> = episodes.iter().map(|e| e.scores.clone()).collect();
    let metrics = DatasetMetrics {
        aggregate: mean_scores(&scores).expect("dataset is nonempty"),
        episodes,
    };
    write_json(&dataset_dir.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

/// Replays one episode against a named catalog asset (no container).
pub fn validate_with_asset(
    episode_dir: &Path,
    catalog: &[ObjectAsset],
    asset_name: &str,
    cfg: &PipelineConfig,
) -> Result<ValidationReport> {
    let ep = load_episode(episode_dir)?;
    let asset = catalog
        .iter()
        .find(|a| a.name == asset_name)
        .ok_or_else(|| Error::invalid("asset", format!("`{asset_name}` not in catalog")))?;
    if detect_grasp_window(&ep.actions).is_err() {
        return Ok(ValidationReport::no_grasp_window());
    }
    let scene = build_scene_config(&ep, &cfg.align_config())?;
    let replay = cfg.replay_config();
    let traj = simulate_replay(
        &scene,
        &ep,
        asset,
        None,
        &ee_start(&ep.robot_base_pose, &replay),
        &replay,
    )?;
    Ok(validate_replay(&traj, replay.r_valid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub id: String,
    pub instruction: String,
    pub object_phrase: String,
    pub container_phrase: Option<String>,
    pub timesteps: usize,
    pub cameras: Vec<String>,
    pub resolution: Vec<[u32; 2]>,
    pub has_depth: bool,
    pub mask_frames: Vec<usize>,
    pub grasp_window: Option<[usize; 2]>,
    pub table_height: Option<f64>,
    pub provenance: Option<Provenance>,
}

pub fn inspect_episode(dir: &Path) -> Result<EpisodeSummary> {
    let ep = load_episode(dir)?;
    let table_height = build_scene_config(&ep, &AlignConfig::default())
        .ok()
        .map(|s| s.table_height);
    Ok(EpisodeSummary {
        grasp_window: detect_grasp_window(&ep.actions)
            .ok()
            .map(|w| [w.t_start, w.t_end]),
        table_height,
        timesteps: ep.len(),
        cameras: ep.cameras.iter().map(|c| c.name.clone()).collect(),
        resolution: ep.cameras.iter().map(|c| [c.width, c.height]).collect(),
        has_depth: ep.depth_frame_1.is_some(),
        mask_frames: (0..ep.cameras.len())
            .map(|c| ep.masks.get(c).map_or(0, Vec::len))
            .collect(),
        id: ep.id,
        instruction: ep.instruction,
        object_phrase: ep.object_phrase,
        container_phrase: ep.container_phrase,
        provenance: ep.provenance,
    })
}

/// Corruption baseline: every frame shows a randomly drawn catalog object at
/// a jittered position and yaw instead of the replayed one.
#[allow(clippy::too_many_arguments)]
pub fn random_subject_video(
    traj: &SimTrajectory,
    scene: &SceneConfig,
    cam_index: usize,
    catalog: &[ObjectAsset],
    backgrounds: &[RgbImage],
    gripper: &GripperGeometry,
    jitter: f64,
    seed: u64,
) -> Result<SynthesizedView> {
    let objects: Vec<&ObjectAsset> = catalog
        .iter()
        .filter(|a| a.kind == AssetKind::Object)
        .collect();
    if objects.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let cam = scene
        .cameras
        .get(cam_index)
        .ok_or_else(|| Error::invalid("cam_index", "no such camera"))?;
    if backgrounds.len() != traj.states.len() {
        return Err(Error::LengthMismatch {
            field: "backgrounds".into(),
            expected: traj.states.len(),
            found: backgrounds.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut view = SynthesizedView {
        frames: Vec::with_capacity(backgrounds.len()),
        labels: Vec::with_capacity(backgrounds.len()),
    };
    for (state, bg) in traj.states.iter().zip(backgrounds) {
        let asset = objects[rng.random_range(0..objects.len())];
        let c = state.object_pose.translation;
        let offset = Vec3::new(
            rng.random_range(-jitter..=jitter),
            rng.random_range(-jitter..=jitter),
            0.0,
        );
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let z = if state.attached {
            c.z
        } else {
            scene.table_height + asset.shape.half_height()
        };
        let pose = Pose::from_xyz_rpy([c.x + offset.x, c.y + offset.y, z], [0.0, 0.0, yaw]);
        let corrupted = SimState {
            object_pose: pose,
            ..*state
        };
        let sim = rasterize_scene(cam, &corrupted, asset, traj.container.as_ref(), gripper);
        view.frames.push(composite_frame(&sim, bg, false)?);
        view.labels.push(sim.label);
    }
    Ok(view)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::Shape;
    use std::collections::HashSet;

    fn asset(name: &str, display: &str) -> ObjectAsset {
        ObjectAsset {
            name: name.into(),
            display_name: display.into(),
            kind: AssetKind::Object,
            shape: Shape::Sphere { radius: 0.02 },
            color: [1, 2, 3],
            graspable_width: 0.04,
            grasp_center_offset: [0.0; 3],
        }
    }

    fn container(name: &str, display: &str) -> ObjectAsset {
        ObjectAsset {
            kind: AssetKind::Container,
            ..asset(name, display)
        }
    }

    fn catalog(n: usize) -> Vec<ObjectAsset> {
        (0..n)
            .map(|i| asset(&format!("a{i}"), &format!("thing {i}")))
            .collect()
    }

    #[test]
    fn selection_is_deterministic_and_keyed() {
        let cat = catalog(5);
        let a = select_assets(&cat, 7, "ep1", 4, false).unwrap();
        assert_eq!(a, select_assets(&cat, 7, "ep1", 4, false).unwrap());
        let names = |s: &[(ObjectAsset, Option<ObjectAsset>)]| {
            s.iter().map(|(a, _)| a.name.clone()).collect::<Vec<_>>()
        };
        // keyed by both seed and id
        let others = [
            select_assets(&cat, 8, "ep1", 4, false).unwrap(),
            select_assets(&cat, 7, "ep2", 4, false).unwrap(),
        ];
        assert!(others.iter().any(|o| names(o) != names(&a)));
    }

    #[test]
    fn selection_without_then_with_replacement() {
        let cat = catalog(5);
        let three = select_assets(&cat, 1, "x", 3, false).unwrap();
        let distinct: HashSet<_> = three.iter().map(|(a, _)| a.name.clone()).collect();
        assert_eq!(distinct.len(), 3);
        let seven = select_assets(&cat, 1, "x", 7, false).unwrap();
        let distinct: HashSet<_> = seven.iter().map(|(a, _)| a.name.clone()).collect();
        assert_eq!(distinct.len(), 5);
        assert_eq!(seven.len(), 7);
        // a prefix of the draw does not depend on k
        assert_eq!(three[..], seven[..3]);
    }

    #[test]
    fn selection_containers_and_empty_catalog() {
        let mut cat = catalog(2);
        cat.push(container("towel", "towel"));
        let picks = select_assets(&cat, 3, "e", 4, true).unwrap();
        assert!(picks
            .iter()
            .all(|(a, c)| a.kind == AssetKind::Object && c.as_ref().unwrap().name == "towel"));
        assert!(select_assets(&cat, 3, "e", 4, false)
            .unwrap()
            .iter()
            .all(|(_, c)| c.is_none()));
        assert!(matches!(
            select_assets(&[], 0, "e", 1, false),
            Err(Error::EmptyCatalog)
        ));
        assert!(matches!(
            select_assets(&[container("c", "c")], 0, "e", 1, false),
            Err(Error::EmptyCatalog)
        ));
    }

    #[test]
    fn rewrite_examples() {
        let spoon = asset("spoon-block", "spoon");
        let towel = container("towel", "towel");
        assert_eq!(
            rewrite_instruction(
                "put the yellow mug on the table",
                "yellow mug",
                Some("table"),
                &spoon,
                Some(&towel)
            )
            .unwrap(),
            "put the spoon on the towel"
        );
        assert_eq!(
            rewrite_instruction(
                "put the yellow mug on the table",
                "yellow mug",
                None,
                &spoon,
                None
            )
            .unwrap(),
            "put the spoon on the table"
        );
        assert!(matches!(
            rewrite_instruction(
                "put the yellow mug on the table",
                "mugg",
                None,
                &spoon,
                None
            ),
            Err(Error::PhraseNotFound { .. })
        ));
        // only the first occurrence changes
        assert_eq!(
            rewrite_instruction("mug to mug", "mug", None, &spoon, None).unwrap(),
            "spoon to mug"
        );
        // the container occurrence must not overlap the object phrase
        assert_eq!(
            rewrite_instruction(
                "move the table lamp to the table",
                "table lamp",
                Some("table"),
                &spoon,
                Some(&towel)
            )
            .unwrap(),
            "move the spoon to the towel"
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::new("m.json".into(), "out".into(), "c.json".into());
        cfg.validate().unwrap();
        cfg.variants_per_episode = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.variants_per_episode = 2;
        cfg.thresholds.r_valid = 0.0;
        assert!(cfg.validate().is_err());
        cfg.thresholds = Thresholds::default();
        cfg.use_adapter = true;
        assert!(cfg.validate().is_err());
        cfg.adapter_command = vec!["adapter".into()];
        cfg.validate().unwrap();
    }

    #[test]
    fn config_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(
            &path,
            r#"{"input_manifest": "in/manifest.json", "output_dir": "/abs/out", "asset_catalog": "cat.json",
                "variants_per_episode": 2, "seed": 5}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.input_manifest, dir.path().join("in/manifest.json"));
        assert_eq!(cfg.output_dir, PathBuf::from("/abs/out"));
        assert_eq!(cfg.thresholds, Thresholds::default());
        fs::write(&path, r#"{"input_manifest": "m", "output_dir": "o", "asset_catalog": "c", "variants_per_episode": 0, "seed": 1}"#)
            .unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn episode_seed_is_stable() {
        assert_eq!(episode_seed(1, "a"), episode_seed(1, "a"));
        assert_ne!(episode_seed(1, "a"), episode_seed(1, "b"));
        assert_ne!(episode_seed(1, "a"), episode_seed(2, "a"));
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
