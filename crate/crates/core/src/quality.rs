//! Model-free video quality proxies: subject and background consistency,
//! motion smoothness, and imaging sharpness.
//!
//! Subject pixels are labels 1 and 2; every other label counts as background.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::episode::write_json;
use crate::error::{Error, Result};
use crate::raster::{luma, LabelMask, RgbImage};
use crate::render::label_centroid;

/// Side length of the grayscale subject crops compared by NCC.
pub const SUBJECT_CROP_SIZE: u32 = 64;
/// Second-difference normalizer as a fraction of the image diagonal.
pub const MOTION_SCALE: f64 = 0.05;
pub const DEFAULT_S_REF: f64 = 20.0;

type GrayF = ImageBuffer<Luma<f32>, Vec<f32>>;

fn check_lengths(frames: &[RgbImage], labels: &[LabelMask]) -> Result<()> {
    if frames.len() != labels.len() {
        return Err(Error::LengthMismatch {
            field: "labels".into(),
            expected: frames.len(),
            found: labels.len(),
        });
    }
    for (f, l) in frames.iter().zip(labels) {
        if f.dimensions() != (l.width(), l.height()) {
            return Err(Error::DimensionMismatch(
                "frame and label sizes differ".into(),
            ));
        }
    }
    Ok(())
}

fn subject_bbox(mask: &LabelMask) -> Option<(u32, u32, u32, u32)> {
    let mut bbox: Option<(u32, u32, u32, u32)> = None;
    for (x, y, p) in mask.0.enumerate_pixels() {
        if LabelMask::is_subject(p.0[0]) {
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    bbox
}

fn subject_crop(frame: &RgbImage, mask: &LabelMask) -> Option<Vec<f64>> {
    let (x0, y0, x1, y1) = subject_bbox(mask)?;
    // float resampling clamps to [0, 1]
    let crop = GrayF::from_fn(x1 - x0 + 1, y1 - y0 + 1, |x, y| {
        Luma([(luma(frame.get_pixel(x0 + x, y0 + y)) / 255.0) as f32])
    });
    let resized = imageops::resize(
        &crop,
        SUBJECT_CROP_SIZE,
        SUBJECT_CROP_SIZE,
        FilterType::Triangle,
    );
    Some(resized.into_raw().into_iter().map(f64::from).collect())
}

/// Normalized cross-correlation. Constant inputs correlate fully with an
/// identical input and not at all otherwise.
pub fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn require_frames(n: usize, needed: usize, what: &str) -> Result<()> {
    if n < needed {
        return Err(Error::UndefinedScore(format!(
            "{what} needs at least {needed} frames, got {n}"
        )));
    }
    Ok(())
}

/// Per-pair scores; `None` marks a skipped pair.
pub fn subject_consistency_trace(
    frames: &[RgbImage],
    labels: &[LabelMask],
) -> Result<Vec<Option<f64>>> {
    check_lengths(frames, labels)?;
    require_frames(frames.len(), 2, "subject consistency")?;
    let crops: Vec<Option<Vec<f64>>> = frames
        .iter()
        .zip(labels)
        .map(|(f, m)| subject_crop(f, m))
        .collect();
    Ok(crops
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => Some((ncc(a, b) + 1.0) / 2.0),
            _ => None,
        })
        .collect())
}

pub fn subject_consistency(frames: &[RgbImage], labels: &[LabelMask]) -> Result<f64> {
    mean(
        subject_consistency_trace(frames, labels)?
            .into_iter()
            .flatten(),
    )
    .ok_or_else(|| Error::UndefinedScore("subject absent in every frame pair".into()))
}

pub fn background_consistency_trace(
    frames: &[RgbImage],
    labels: &[LabelMask],
) -> Result<Vec<Option<f64>>> {
    check_lengths(frames, labels)?;
    require_frames(frames.len(), 2, "background consistency")?;
    Ok((1..frames.len())
        .map(|t| {
            let (fa, fb) = (frames[t - 1].as_raw(), frames[t].as_raw());
            let (la, lb) = (labels[t - 1].as_raw(), labels[t].as_raw());
            let (mut sum, mut n) = (0u64, 0u64);
            for i in 0..la.len() {
                if !LabelMask::is_subject(la[i]) && !LabelMask::is_subject(lb[i]) {
                    for c in 3 * i..3 * i + 3 {
                        sum += u64::from(fa[c].abs_diff(fb[c]));
                    }
                    n += 3;
                }
            }
            (n > 0).then(|| 1.0 - sum as f64 / n as f64 / 255.0)
        })
        .collect())
}

pub fn background_consistency(frames: &[RgbImage], labels: &[LabelMask]) -> Result<f64> {
    mean(
        background_consistency_trace(frames, labels)?
            .into_iter()
            .flatten(),
    )
    .ok_or_else(|| Error::UndefinedScore("no shared background pixels".into()))
}

/// Second-difference magnitude of the subject centroid per interior frame;
/// `None` where any of the three frames lacks a subject.
pub fn motion_trace(labels: &[LabelMask]) -> Vec<Option<f64>> {
    let centroids: Vec<Option<(f64, f64)>> = labels
        .iter()
        .map(|m| label_centroid(m, LabelMask::is_subject).map(|(x, y, _)| (x, y)))
        .collect();
    centroids
        .windows(3)
        .map(|w| match (w[0], w[1], w[2]) {
            (Some(a), Some(b), Some(c)) => {
                Some((c.0 - 2.0 * b.0 + a.0).hypot(c.1 - 2.0 * b.1 + a.1))
            }
            _ => None,
        })
        .collect()
}

pub fn motion_smoothness(labels: &[LabelMask]) -> Result<f64> {
    let first = labels
        .first()
        .ok_or_else(|| Error::UndefinedScore("motion smoothness needs frames".into()))?;
    let diag = f64::from(first.width()).hypot(f64::from(first.height()));
    let m = mean(motion_trace(labels).into_iter().flatten()).ok_or_else(|| {
        Error::UndefinedScore("subject never visible in 3 consecutive frames".into())
    })?;
    Ok(1.0 - (m / (MOTION_SCALE * diag)).min(1.0))
}

/// Mean absolute 4-neighbor Laplacian of the luma over interior pixels.
pub fn laplacian_energy(frame: &RgbImage) -> f64 {
    let (w, h) = frame.dimensions();
    if w < 3 || h < 3 {
        return 0.0;
    }
    let y: Vec<f64> = frame.pixels().map(luma).collect();
    let at = |x: u32, yy: u32| y[(yy * w + x) as usize];
    let mut sum = 0.0;
    for j in 1..h - 1 {
        for i in 1..w - 1 {
            sum +=
                (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j)).abs();
        }
    }
    sum / f64::from((w - 2) * (h - 2))
}

pub fn imaging_quality_trace(frames: &[RgbImage], s_ref: f64) -> Vec<f64> {
    frames
        .iter()
        .map(|f| (laplacian_energy(f) / s_ref).clamp(0.0, 1.0))
        .collect()
}

pub fn imaging_quality(frames: &[RgbImage], s_ref: f64) -> Result<f64> {
    if s_ref.is_nan() || s_ref <= 0.0 {
        return Err(Error::invalid("s_ref", "must be > 0"));
    }
    mean(imaging_quality_trace(frames, s_ref))
        .ok_or_else(|| Error::UndefinedScore("imaging quality needs at least one frame".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub subject_consistency: Option<f64>,
    pub background_consistency: Option<f64>,
    pub motion_smoothness: Option<f64>,
    pub imaging_quality: f64,
    /// Mean of the three temporal scores; absent unless all three are.
    pub temporal_average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityTraces {
    pub subject_consistency: Vec<Option<f64>>,
    pub background_consistency: Vec<Option<f64>>,
    pub centroid_second_difference: Vec<Option<f64>>,
    pub imaging_quality: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkippedPairs {
    pub subject: usize,
    pub background: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub scores: QualityScores,
    pub traces: QualityTraces,
    pub skipped_pairs: SkippedPairs,
}

impl QualityReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn undefined_as_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedScore(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores one camera's video. Temporal scores that are undefined (too few
/// frames, subject never visible) are reported as absent.
pub fn evaluate_video(
    frames: &[RgbImage],
    labels: &[LabelMask],
    s_ref: f64,
) -> Result<QualityReport> {
    check_lengths(frames, labels)?;
    let imaging = imaging_quality(frames, s_ref)?;
    let mut traces = QualityTraces {
        imaging_quality: imaging_quality_trace(frames, s_ref),
        centroid_second_difference: motion_trace(labels),
        ..Default::default()
    };
    if frames.len() >= 2 {
        traces.subject_consistency = subject_consistency_trace(frames, labels)?;
        traces.background_consistency = background_consistency_trace(frames, labels)?;
    }
    let subject = undefined_as_none(subject_consistency(frames, labels))?;
    let background = undefined_as_none(background_consistency(frames, labels))?;
    let motion = undefined_as_none(motion_smoothness(labels))?;
    let temporal_average = match (subject, background, motion) {
        (Some(a), Some(b), Some(c)) => Some((a + b + c) / 3.0),
        _ => None,
    };
    let skipped = |v: &[Option<f64>]| v.iter().filter(|s| s.is_none()).count();
    Ok(QualityReport {
        skipped_pairs: SkippedPairs {
            subject: skipped(&traces.subject_consistency),
            background: skipped(&traces.background_consistency),
        },
        traces,
        scores: QualityScores {
            subject_consistency: subject,
            background_consistency: background,
            motion_smoothness: motion,
            imaging_quality: imaging,
            temporal_average,
        },
    })
}

/// Field-wise mean over reports; a score is present only if present in all.
pub fn mean_scores(scores: &[QualityScores]) -> Option<QualityScores> {
    if scores.is_empty() {
        return None;
    }
    let avg = |f: &dyn Fn(&QualityScores) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = scores.iter().map(f).collect();
        vals.and_then(mean)
    };
    Some(QualityScores {
        subject_consistency: avg(&|s| s.subject_consistency),
        background_consistency: avg(&|s| s.background_consistency),
        motion_smoothness: avg(&|s| s.motion_smoothness),
        imaging_quality: avg(&|s| Some(s.imaging_quality)).unwrap_or(0.0),
        temporal_average: avg(&|s| s.temporal_average),
    })
}
