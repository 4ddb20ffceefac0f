//! File exchange with the external segmentation/inpainting adapter.
//!
//! ```text
//! <work>/prompt.json                      {camera, t_start, u, v, text_prompts}
//! <work>/job.json                         {episode_dir, prompt, masks_dir, backgrounds_dir}
//! <work>/masks/<camera>/000001.pgm …      labels 0 bg, 1 robot, 2 object, 3 table
//! <work>/backgrounds/<camera>/000001.png  robot and object removed
//! ```
//!
//! The adapter runs as `<command…> segment --job job.json` followed by
//! `<command…> inpaint --job job.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::episode::{frame_file_name, write_json};
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::raster::{self, LabelMask, RgbImage};

pub const TEXT_PROMPTS: [&str; 2] = ["robot", "table"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub camera: String,
    pub t_start: usize,
    pub u: f64,
    pub v: f64,
    pub text_prompts: Vec<String>,
}

impl PointPrompt {
    pub fn new(camera: &str, t_start: usize, (u, v): (f64, f64)) -> Self {
        PointPrompt {
            camera: camera.to_string(),
            t_start,
            u,
            v,
            text_prompts: TEXT_PROMPTS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Checks the prompt against the episode it refers to.
    pub fn validate(&self, cameras: &[CameraModel], t_len: usize) -> Result<()> {
        let cam = cameras
            .iter()
            .find(|c| c.name == self.camera)
            .ok_or_else(|| {
                Error::invalid("prompt.camera", format!("unknown camera `{}`", self.camera))
            })?;
        if !cam.contains_pixel(self.u, self.v) {
            return Err(Error::invalid(
                "prompt",
                format!(
                    "pixel ({:.2}, {:.2}) outside {}x{}",
                    self.u, self.v, cam.width, cam.height
                ),
            ));
        }
        if !(1..=t_len).contains(&self.t_start) {
            return Err(Error::invalid(
                "prompt.t_start",
                format!("{} outside 1..={t_len}", self.t_start),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterJob {
    pub episode_dir: PathBuf,
    pub prompt: PointPrompt,
    pub masks_dir: PathBuf,
    pub backgrounds_dir: PathBuf,
}

fn read_sequence<T>(
    root: &Path,
    cameras: &[CameraModel],
    t_len: usize,
    ext: &str,
    read: impl Fn(&Path) -> Result<T>,
    size: impl Fn(&T) -> (u32, u32),
) -> Result<Vec<Vec<T>>> {
    cameras
        .iter()
        .map(|cam| {
            let dir = root.join(&cam.name);
            let items = (1..=t_len)
                .map(|t| {
                    let path = dir.join(frame_file_name(t, ext));
                    let item = read(&path)?;
                    if size(&item) != (cam.width, cam.height) {
                        return Err(Error::DimensionMismatch(format!(
                            "{}: {:?} vs camera `{}` {}x{}",
                            path.display(),
                            size(&item),
                            cam.name,
                            cam.width,
                            cam.height
                        )));
                    }
                    Ok(item)
                })
                .collect::<Result<Vec<_>>>()?;
            let extra = dir.join(frame_file_name(t_len + 1, ext));
            if extra.exists() {
                return Err(Error::LengthMismatch {
                    field: dir.display().to_string(),
                    expected: t_len,
                    found: t_len + 1,
                });
            }
            Ok(items)
        })
        .collect()
}

/// Reads `masks/<camera>/%06d.pgm` for every camera and timestep.
pub fn read_exchange_masks(
    root: &Path,
    cameras: &[CameraModel],
    t_len: usize,
) -> Result<Vec<Vec<LabelMask>>> {
    read_sequence(root, cameras, t_len, "pgm", raster::read_label_pgm, |m| {
        (m.width(), m.height())
    })
}

/// Reads `backgrounds/<camera>/%06d.png` for every camera and timestep.
pub fn read_exchange_backgrounds(
    root: &Path,
    cameras: &[CameraModel],
    t_len: usize,
) -> Result<Vec<Vec<RgbImage>>> {
    read_sequence(root, cameras, t_len, "png", raster::read_rgb_png, |i| {
        i.dimensions()
    })
}

pub fn write_exchange_masks(
    root: &Path,
    cameras: &[CameraModel],
    masks: &[Vec<LabelMask>],
) -> Result<()> {
    for (cam, seq) in cameras.iter().zip(masks) {
        let dir = root.join(&cam.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, m) in seq.iter().enumerate() {
            raster::write_label_pgm(&dir.join(frame_file_name(i + 1, "pgm")), m)?;
        }
    }
    Ok(())
}

pub fn write_exchange_backgrounds(
    root: &Path,
    cameras: &[CameraModel],
    frames: &[Vec<RgbImage>],
) -> Result<()> {
    for (cam, seq) in cameras.iter().zip(frames) {
        let dir = root.join(&cam.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, img) in seq.iter().enumerate() {
            raster::write_rgb_png(&dir.join(frame_file_name(i + 1, "png")), img)?;
        }
    }
    Ok(())
}

/// Writes `prompt.json` and `job.json` into `work_dir` and returns the job.
pub fn prepare_job(work_dir: &Path, episode_dir: &Path, prompt: PointPrompt) -> Result<AdapterJob> {
    fs::create_dir_all(work_dir).map_err(|e| Error::io(work_dir, e))?;
    let job = AdapterJob {
        episode_dir: episode_dir.to_path_buf(),
        prompt,
        masks_dir: work_dir.join("masks"),
        backgrounds_dir: work_dir.join("backgrounds"),
    };
    write_json(&work_dir.join("prompt.json"), &job.prompt)?;
    write_json(&work_dir.join("job.json"), &job)?;
    Ok(job)
}

/// Runs `<command…> <subcommand> --job <job_path>` and fails on a nonzero exit.
pub fn run_adapter(command: &[String], subcommand: &str, job_path: &Path) -> Result<()> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::Adapter("empty adapter command".into()))?;
    let output = Command::new(program)
        .args(args)
        .arg(subcommand)
        .arg("--job")
        .arg(job_path)
        .output()
        .map_err(|e| Error::Adapter(format!("cannot start `{program}`: {e}")))?;
    if !output.status.success() {
        return Err(Error::Adapter(format!(
            "`{subcommand}` exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use image::Rgb;

    fn cams() -> Vec<CameraModel> {
        ["left", "right"]
            .iter()
            .map(|n| CameraModel {
                name: n.to_string(),
                width: 6,
                height: 4,
                fx: 5.0,
                fy: 5.0,
                cx: 3.0,
                cy: 2.0,
                cam_to_world: Pose::identity(),
            })
            .collect()
    }

    #[test]
    fn masks_and_backgrounds_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cams = cams();
        let masks: Vec<Vec<LabelMask>> = (0..2)
            .map(|c| {
                (0..3)
                    .map(|t| LabelMask::from_fn(6, 4, |x, y| ((x + y + t + c) % 4) as u8))
                    .collect()
            })
            .collect();
        let bgs: Vec<Vec<RgbImage>> = (0..2)
            .map(|c| {
                (0..3)
                    .map(|t| RgbImage::from_fn(6, 4, |x, y| Rgb([x as u8, y as u8, (t + c) as u8])))
                    .collect()
            })
            .collect();
        write_exchange_masks(&dir.path().join("masks"), &cams, &masks).unwrap();
        write_exchange_backgrounds(&dir.path().join("backgrounds"), &cams, &bgs).unwrap();
        assert_eq!(
            read_exchange_masks(&dir.path().join("masks"), &cams, 3).unwrap(),
            masks
        );
        assert_eq!(
            read_exchange_backgrounds(&dir.path().join("backgrounds"), &cams, 3).unwrap(),
            bgs
        );
        // wrong length either way is an error
        assert!(read_exchange_masks(&dir.path().join("masks"), &cams, 4).is_err());
        assert!(matches!(
            read_exchange_masks(&dir.path().join("masks"), &cams, 2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn prompt_schema_and_bounds() {
        let p = PointPrompt::new("left", 3, (2.5, 1.0));
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"camera": "left", "t_start": 3, "u": 2.5, "v": 1.0, "text_prompts": ["robot", "table"]})
        );
        assert!(p.validate(&cams(), 5).is_ok());
        assert!(p.validate(&cams(), 2).is_err());
        assert!(PointPrompt::new("left", 1, (6.0, 1.0))
            .validate(&cams(), 5)
            .is_err());
        assert!(PointPrompt::new("top", 1, (1.0, 1.0))
            .validate(&cams(), 5)
            .is_err());
    }

    #[test]
    fn adapter_failures_surface() {
        let dir = tempfile::tempdir().unwrap();
        let job = dir.path().join("job.json");
        assert!(matches!(
            run_adapter(&[], "segment", &job),
            Err(Error::Adapter(_))
        ));
        assert!(run_adapter(&["/nonexistent/adapter".into()], "segment", &job).is_err());
        assert!(run_adapter(&["false".into()], "segment", &job).is_err());
        run_adapter(&["true".into()], "segment", &job).unwrap();
    }
}
