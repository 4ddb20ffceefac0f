//! Digital-twin scene setup: table height from frame-1 depth, plus robot and
//! camera placement copied from episode metadata.

use serde::{Deserialize, Serialize};

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::geometry::{depth_to_pointcloud, CameraModel, PointCloud, Pose, Vec3};
use crate::raster::{LabelMask, LABEL_TABLE};

pub const MIN_TABLE_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEstimate {
    pub height: f64,
    pub inlier_count: usize,
    pub rejected_count: usize,
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|i| self.max[i].is_nan() || self.min[i].is_nan() || self.max[i] <= self.min[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    /// Tukey fence multiplier applied to the interquartile range.
    pub iqr_multiplier: f64,
    /// Workspace box corners relative to the robot base position.
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            iqr_multiplier: 1.5,
            workspace_min: [-0.3, -0.9, -0.5],
            workspace_max: [1.1, 0.9, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub table_height: f64,
    pub robot_base: Pose,
    pub cameras: Vec<CameraModel>,
    pub workspace_bounds: Aabb,
}

/// Quantile of ascending `sorted` values, linearly interpolated between the
/// order statistics at rank `p·(n−1)`.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Table height as the mean z of points inside the Tukey fences
/// `[Q1 − k·IQR, Q3 + k·IQR]`.
pub fn estimate_table_height(cloud: &PointCloud, iqr_multiplier: f64) -> Result<TableEstimate> {
    if cloud.len() < MIN_TABLE_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_TABLE_POINTS,
            got: cloud.len(),
        });
    }
    let mut z: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
    z.sort_by(f64::total_cmp);
    let q1 = quantile_linear(&z, 0.25);
    let q3 = quantile_linear(&z, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - iqr_multiplier * iqr, q3 + iqr_multiplier * iqr);

    // Sum in sorted order so the result does not depend on input order.
    let (sum, kept) = z
        .iter()
        .filter(|v| **v >= lo && **v <= hi)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    // The median always lies inside the fences.
    assert!(kept >= 1, "Tukey fences rejected every point");
    Ok(TableEstimate {
        height: sum / kept as f64,
        inlier_count: kept,
        rejected_count: z.len() - kept,
    })
}

/// Scene setup from the episode's own frame-1 table mask.
pub fn build_scene_config(episode: &Episode, cfg: &AlignConfig) -> Result<SceneConfig> {
    build_scene_config_with_mask(episode, episode.table_mask(), cfg)
}

/// Scene setup using `table_mask` (label 3 = table) over the first camera's
/// frame-1 depth.
pub fn build_scene_config_with_mask(
    episode: &Episode,
    table_mask: Option<&LabelMask>,
    cfg: &AlignConfig,
) -> Result<SceneConfig> {
    let depth = episode
        .depth_frame_1
        .as_ref()
        .ok_or(Error::DepthUnavailable)?;
    let mask = table_mask.ok_or(Error::TableMaskUnavailable)?;
    let cam = &episode.cameras[0];
    let cloud = depth_to_pointcloud(cam, depth, Some((mask, LABEL_TABLE)))?;
    let table = estimate_table_height(&cloud, cfg.iqr_multiplier)?;

    let base = episode.robot_base_pose.translation;
    let workspace_bounds = Aabb {
        min: base + Vec3::from(cfg.workspace_min),
        max: base + Vec3::from(cfg.workspace_max),
    };
    if workspace_bounds.is_degenerate() {
        return Err(Error::Config("degenerate workspace bounds".into()));
    }
    if !(workspace_bounds.min.z..=workspace_bounds.max.z).contains(&table.height) {
        return Err(Error::invalid(
            "table_height",
            format!("{:.4} m lies outside the workspace z-range", table.height),
        ));
    }
    Ok(SceneConfig {
        table_height: table.height,
        robot_base: episode.robot_base_pose,
        cameras: episode.cameras.clone(),
        workspace_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{Action, Frame};
    use crate::raster::{DepthMap, RgbImage};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(z: &[f64]) -> PointCloud {
        PointCloud::from_points(z.iter().map(|&z| Vec3::new(0.0, 0.0, z)).collect())
    }

    /// k-th order statistic by counting, no sorting.
    fn order_statistic(v: &[f64], k: usize) -> f64 {
        *v.iter()
            .find(|&&x| {
                let less = v.iter().filter(|&&y| y < x).count();
                let equal = v.iter().filter(|&&y| y == x).count();
                less <= k && k < less + equal
            })
            .unwrap()
    }

    fn oracle_height(z: &[f64]) -> (f64, usize) {
        let q = |p: f64| {
            let r = p * (z.len() - 1) as f64;
            let (a, b) = (
                order_statistic(z, r.floor() as usize),
                order_statistic(z, r.ceil() as usize),
            );
            a + (b - a) * (r - r.floor())
        };
        let (q1, q3) = (q(0.25), q(0.75));
        let iqr = q3 - q1;
        let kept: Vec<f64> = z
            .iter()
            .copied()
            .filter(|&v| v >= q1 - 1.5 * iqr && v <= q3 + 1.5 * iqr)
            .collect();
        (
            kept.iter().sum::<f64>() / kept.len() as f64,
            z.len() - kept.len(),
        )
    }

    #[test]
    fn constant_input() {
        let est = estimate_table_height(&cloud(&[0.74; 100]), 1.5).unwrap();
        assert!((est.height - 0.74).abs() < 1e-12);
        assert_eq!(est.rejected_count, 0);
        assert_eq!(est.inlier_count, 100);
    }

    #[test]
    fn gross_outliers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut z: Vec<f64> = (0..95)
            .map(|_| 0.74 + rng.random_range(-0.002..0.002))
            .collect();
        z.extend([1.5; 5]);
        let est = estimate_table_height(&cloud(&z), 1.5).unwrap();
        let (oracle, rejected) = oracle_height(&z);
        assert_eq!(est.rejected_count, 5);
        assert_eq!(rejected, 5);
        assert!((est.height - oracle).abs() < 1e-12);
        assert!((est.height - 0.74).abs() <= 0.002);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            estimate_table_height(&cloud(&[0.7, 0.7, 0.7]), 1.5),
            Err(Error::TooFewPoints { got: 3, .. })
        ));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_linear(&v, 0.25), 1.75);
        assert_eq!(quantile_linear(&v, 0.75), 3.25);
        assert_eq!(quantile_linear(&v, 0.5), 2.5);
    }

    fn overhead_episode(cam_z: f64, table_mask: bool) -> Episode {
        // Camera looking straight down: optical axis along world −z.
        let down = Pose::look_at(
            Vec3::new(0.4, 0.0, cam_z),
            Vec3::new(0.4, 0.0, 0.0),
            Vec3::y(),
        );
        let cam = CameraModel {
            name: "top".into(),
            width: 16,
            height: 12,
            fx: 20.0,
            fy: 20.0,
            cx: 8.0,
            cy: 6.0,
            cam_to_world: down,
        };
        let img = RgbImage::new(16, 12);
        Episode {
            id: "e".into(),
            instruction: "pick the cube".into(),
            object_phrase: "cube".into(),
            container_phrase: None,
            frames: vec![
                Frame {
                    timestep: 1,
                    images: vec![img.clone()],
                },
                Frame {
                    timestep: 2,
                    images: vec![img],
                },
            ],
            actions: vec![Action::from_row([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]); 2],
            cameras: vec![cam],
            robot_base_pose: Pose::from_translation(0.0, 0.0, 0.0),
            depth_frame_1: Some(DepthMap::from_fn(16, 12, |_, _| 1000)),
            masks: if table_mask {
                vec![vec![LabelMask::from_fn(16, 12, |_, _| LABEL_TABLE)]]
            } else {
                vec![]
            },
            provenance: None,
        }
    }

    #[test]
    fn overhead_camera_sees_table_one_meter_below() {
        let ep = overhead_episode(1.74, true);
        let scene = build_scene_config(&ep, &AlignConfig::default()).unwrap();
        assert!((scene.table_height - 0.74).abs() < 1e-12);
        assert_eq!(scene.cameras, ep.cameras);
    }

    #[test]
    fn missing_table_mask_is_an_error() {
        let ep = overhead_episode(1.74, false);
        assert!(matches!(
            build_scene_config(&ep, &AlignConfig::default()),
            Err(Error::TableMaskUnavailable)
        ));
        let mut ep = overhead_episode(1.74, true);
        ep.depth_frame_1 = None;
        assert!(matches!(
            build_scene_config(&ep, &AlignConfig::default()),
            Err(Error::DepthUnavailable)
        ));
    }

    proptest! {
        #[test]
        fn permutation_and_duplication_invariant(
            mut z in prop::collection::vec(0.5..1.0f64, 4..200),
            seed in any::<u64>(),
        ) {
            let base = estimate_table_height(&cloud(&z), 1.5).unwrap().height;
            let doubled: Vec<f64> = z.iter().flat_map(|v| [*v, *v]).collect();
            // Interpolated quartiles move slightly when the sample is doubled;
            // the height is unchanged whenever that move crosses no sample.
            let fences = |v: &[f64]| {
                let mut s = v.to_vec();
                s.sort_by(f64::total_cmp);
                let (q1, q3) = (quantile_linear(&s, 0.25), quantile_linear(&s, 0.75));
                (q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1))
            };
            let ((lo, hi), (lo2, hi2)) = (fences(&z), fences(&doubled));
            let between = |v: f64, a: f64, b: f64| v >= a.min(b) && v <= a.max(b) && a != b;
            if !z.iter().any(|&v| between(v, lo, lo2) || between(v, hi, hi2)) {
                let dup = estimate_table_height(&cloud(&doubled), 1.5).unwrap().height;
                prop_assert!((base - dup).abs() <= 1e-12);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..z.len()).rev() {
                z.swap(i, rng.random_range(0..=i));
            }
            let shuffled = estimate_table_height(&cloud(&z), 1.5).unwrap().height;
            prop_assert_eq!(base, shuffled);
        }

        #[test]
        fn outliers_move_estimate_less_than_inlier_std(
            seed in any::<u64>(),
            n_out in 0usize..=5,
            far in prop::bool::ANY,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inliers: Vec<f64> = (0..100).map(|_| 0.74 + rng.random_range(-0.003..0.003)).collect();
            let clean = estimate_table_height(&cloud(&inliers), 1.5).unwrap().height;
            let mean = inliers.iter().sum::<f64>() / 100.0;
            let std = (inliers.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
            let mut sorted = inliers.clone();
            sorted.sort_by(f64::total_cmp);
            let iqr = quantile_linear(&sorted, 0.75) - quantile_linear(&sorted, 0.25);
            let offset = 10.0 * iqr + 0.01;
            let mut noisy = inliers.clone();
            noisy.extend((0..n_out).map(|_| if far { 0.74 + offset } else { 0.74 - offset }));
            let est = estimate_table_height(&cloud(&noisy), 1.5).unwrap().height;
            prop_assert!((est - clean).abs() < std);
        }
    }
}
