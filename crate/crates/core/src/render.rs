//! Sim layer rendering, background inpainting, and compositing.
//!
//! Bodies are tessellated primitives rendered by a depth-buffered triangle
//! rasterizer with flat Lambert shading. Pixel `(x, y)` samples the image
//! plane at `(x, y)`, matching [`crate::geometry`]'s pixel convention.

use image::Rgb;
use serde::{Deserialize, Serialize};

use crate::episode::{ObjectAsset, Shape};
use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraModel, Pose, Vec3};
use crate::raster::{LabelMask, RgbImage, LABEL_CONTAINER, LABEL_OBJECT, LABEL_ROBOT};
use crate::replay::{grasp_center, SimState, SimTrajectory};

/// Camera-space near plane for triangle clipping (meters).
const NEAR_PLANE: f64 = 0.01;
const AMBIENT: f64 = 0.35;
const SPHERE_STACKS: usize = 16;
const SPHERE_SLICES: usize = 32;
const CYLINDER_SEGMENTS: usize = 32;

/// Triangle mesh in a body's local frame.
#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    fn push_quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.triangles.push([a, b, c]);
        self.triangles.push([a, c, d]);
    }

    /// Winds every triangle counter-clockwise seen from outside. Valid for
    /// convex meshes around `center`.
    fn orient_outward(mut self, center: Vec3) -> Self {
        for tri in &mut self.triangles {
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            let n = (b - a).cross(&(c - a));
            if n.dot(&((a + b + c) / 3.0 - center)) < 0.0 {
                tri.swap(1, 2);
            }
        }
        self
    }

    pub fn cuboid(center: Vec3, half: Vec3) -> Mesh {
        let mut m = Mesh::default();
        for i in 0..8 {
            let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
            m.vertices
                .push(center + Vec3::new(s(0) * half.x, s(1) * half.y, s(2) * half.z));
        }
        for (a, b, c, d) in [
            (0, 1, 3, 2),
            (4, 5, 7, 6),
            (0, 1, 5, 4),
            (2, 3, 7, 6),
            (0, 2, 6, 4),
            (1, 3, 7, 5),
        ] {
            m.push_quad(a, b, c, d);
        }
        m.orient_outward(center)
    }

    pub fn sphere(radius: f64) -> Mesh {
        let mut m = Mesh::default();
        m.vertices.push(Vec3::new(0.0, 0.0, radius));
        for i in 1..SPHERE_STACKS {
            let theta = std::f64::consts::PI * i as f64 / SPHERE_STACKS as f64;
            for j in 0..SPHERE_SLICES {
                let phi = std::f64::consts::TAU * j as f64 / SPHERE_SLICES as f64;
                m.vertices.push(
                    radius
                        * Vec3::new(
                            theta.sin() * phi.cos(),
                            theta.sin() * phi.sin(),
                            theta.cos(),
                        ),
                );
            }
        }
        m.vertices.push(Vec3::new(0.0, 0.0, -radius));
        let south = m.vertices.len() - 1;
        let ring = |i: usize, j: usize| 1 + (i - 1) * SPHERE_SLICES + j % SPHERE_SLICES;
        for j in 0..SPHERE_SLICES {
            m.triangles.push([0, ring(1, j), ring(1, j + 1)]);
            m.triangles.push([
                south,
                ring(SPHERE_STACKS - 1, j),
                ring(SPHERE_STACKS - 1, j + 1),
            ]);
        }
        for i in 1..SPHERE_STACKS - 1 {
            for j in 0..SPHERE_SLICES {
                m.push_quad(
                    ring(i, j),
                    ring(i, j + 1),
                    ring(i + 1, j + 1),
                    ring(i + 1, j),
                );
            }
        }
        m.orient_outward(Vec3::zeros())
    }

    pub fn cylinder(radius: f64, height: f64) -> Mesh {
        let mut m = Mesh::default();
        let h = height / 2.0;
        m.vertices.push(Vec3::new(0.0, 0.0, h));
        m.vertices.push(Vec3::new(0.0, 0.0, -h));
        for j in 0..CYLINDER_SEGMENTS {
            let phi = std::f64::consts::TAU * j as f64 / CYLINDER_SEGMENTS as f64;
            let (s, c) = phi.sin_cos();
            m.vertices.push(Vec3::new(radius * c, radius * s, h));
            m.vertices.push(Vec3::new(radius * c, radius * s, -h));
        }
        let top = |j: usize| 2 + 2 * (j % CYLINDER_SEGMENTS);
        let bottom = |j: usize| 3 + 2 * (j % CYLINDER_SEGMENTS);
        for j in 0..CYLINDER_SEGMENTS {
            m.triangles.push([0, top(j), top(j + 1)]);
            m.triangles.push([1, bottom(j), bottom(j + 1)]);
            m.push_quad(top(j), top(j + 1), bottom(j + 1), bottom(j));
        }
        m.orient_outward(Vec3::zeros())
    }

    pub fn for_shape(shape: &Shape) -> Mesh {
        match *shape {
            Shape::Box { extents } => Mesh::cuboid(Vec3::zeros(), Vec3::from(extents) / 2.0),
            Shape::Sphere { radius } => Mesh::sphere(radius),
            Shape::Cylinder { radius, height } => Mesh::cylinder(radius, height),
        }
    }

    pub fn transformed(&self, pose: &Pose) -> Mesh {
        Mesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| pose.transform_point(v))
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    fn extend(&mut self, other: Mesh) {
        let base = self.vertices.len();
        self.vertices.extend(other.vertices);
        self.triangles
            .extend(other.triangles.into_iter().map(|t| t.map(|i| i + base)));
    }
}

/// Parametric two-finger gripper in the tip frame: local +z is the approach
/// direction, fingers open along local y, fingertips end at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperGeometry {
    /// Finger size (x, y, z), meters.
    pub finger: [f64; 3],
    /// Palm size (x, y, z), meters.
    pub palm: [f64; 3],
    /// Wrist column above the palm (x, y, z), meters; zero length disables it.
    pub wrist: [f64; 3],
    pub color: [u8; 3],
}

impl Default for GripperGeometry {
    fn default() -> Self {
        GripperGeometry {
            finger: [0.02, 0.012, 0.05],
            palm: [0.04, 0.115, 0.025],
            wrist: [0.035, 0.035, 0.12],
            color: [70, 70, 78],
        }
    }
}

impl GripperGeometry {
    pub fn mesh(&self, aperture: f64) -> Mesh {
        let [fx, fy, fz] = self.finger;
        let mut m = Mesh::default();
        for side in [-1.0, 1.0] {
            m.extend(Mesh::cuboid(
                Vec3::new(0.0, side * (aperture / 2.0 + fy / 2.0), -fz / 2.0),
                Vec3::new(fx / 2.0, fy / 2.0, fz / 2.0),
            ));
        }
        let [px, py, pz] = self.palm;
        m.extend(Mesh::cuboid(
            Vec3::new(0.0, 0.0, -fz - pz / 2.0),
            Vec3::new(px / 2.0, py / 2.0, pz / 2.0),
        ));
        let [wx, wy, wz] = self.wrist;
        if wz > 0.0 {
            m.extend(Mesh::cuboid(
                Vec3::new(0.0, 0.0, -fz - pz - wz / 2.0),
                Vec3::new(wx / 2.0, wy / 2.0, wz / 2.0),
            ));
        }
        m
    }
}

/// Rendered sim layer: color, body labels, and camera-space depth (∞ where
/// nothing was drawn).
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub rgb: RgbImage,
    pub label: LabelMask,
    pub depth: Vec<f64>,
}

impl SimFrame {
    pub fn empty(width: u32, height: u32) -> Self {
        SimFrame {
            rgb: RgbImage::new(width, height),
            label: LabelMask::new(width, height),
            depth: vec![f64::INFINITY; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f64 {
        self.depth[(y * self.width() + x) as usize]
    }

    /// Mean pixel coordinate of all pixels carrying `label`.
    pub fn centroid(&self, label: u8) -> Option<(f64, f64, usize)> {
        label_centroid(&self.label, |l| l == label)
    }
}

pub(crate) fn label_centroid(
    mask: &LabelMask,
    pred: impl Fn(u8) -> bool,
) -> Option<(f64, f64, usize)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y, p) in mask.0.enumerate_pixels() {
        if pred(p.0[0]) {
            sx += f64::from(x);
            sy += f64::from(y);
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64, n))
}

fn light_direction() -> Vec3 {
    Vec3::new(0.35, -0.45, 1.0).normalize()
}

fn shade(color: [u8; 3], normal: &Vec3) -> Rgb<u8> {
    let k = AMBIENT + (1.0 - AMBIENT) * normal.dot(&light_direction()).max(0.0);
    Rgb(color.map(|c| (f64::from(c) * k).round().clamp(0.0, 255.0) as u8))
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    u: f64,
    v: f64,
    inv_z: f64,
}

/// Clips a camera-space triangle against the near plane.
fn clip_near(tri: [Vec3; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let s = (NEAR_PLANE - a.z) / (b.z - a.z);
            out.push(a + (b - a) * s);
        }
    }
    out
}

fn edge(a: &ScreenVertex, b: &ScreenVertex, x: f64, y: f64) -> f64 {
    (b.u - a.u) * (y - a.v) - (b.v - a.v) * (x - a.u)
}

impl SimFrame {
    /// Z-buffered draw of a world-space mesh. Ties keep the earlier body.
    pub fn draw_mesh(&mut self, cam: &CameraModel, world: &Mesh, label: u8, color: [u8; 3]) {
        let (w, h) = (self.width() as i64, self.height() as i64);
        for tri in &world.triangles {
            let [a, b, c] = tri.map(|i| world.vertices[i]);
            let normal = (b - a).cross(&(c - a));
            let norm = normal.norm();
            if norm == 0.0 {
                continue;
            }
            let rgb = shade(color, &(normal / norm));
            let cam_tri = [a, b, c].map(|p| cam.world_to_camera(&p));
            let poly = clip_near(cam_tri);
            if poly.len() < 3 {
                continue;
            }
            let verts: Vec<ScreenVertex> = poly
                .iter()
                .map(|p| {
                    let (u, v) = cam.project_camera_point(p);
                    ScreenVertex {
                        u,
                        v,
                        inv_z: 1.0 / p.z,
                    }
                })
                .collect();
            for k in 1..verts.len() - 1 {
                let (p0, p1, p2) = (verts[0], verts[k], verts[k + 1]);
                let area = edge(&p0, &p1, p2.u, p2.v);
                if area == 0.0 || !area.is_finite() {
                    continue;
                }
                let min_x = p0.u.min(p1.u).min(p2.u).ceil().max(0.0) as i64;
                let max_x = (p0.u.max(p1.u).max(p2.u).floor() as i64).min(w - 1);
                let min_y = p0.v.min(p1.v).min(p2.v).ceil().max(0.0) as i64;
                let max_y = (p0.v.max(p1.v).max(p2.v).floor() as i64).min(h - 1);
                for y in min_y..=max_y {
                    for x in min_x..=max_x {
                        let (fx, fy) = (x as f64, y as f64);
                        let w0 = edge(&p1, &p2, fx, fy) / area;
                        let w1 = edge(&p2, &p0, fx, fy) / area;
                        let w2 = edge(&p0, &p1, fx, fy) / area;
                        if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                            continue;
                        }
                        let depth = 1.0 / (w0 * p0.inv_z + w1 * p1.inv_z + w2 * p2.inv_z);
                        let idx = (y * w + x) as usize;
                        if depth < self.depth[idx] {
                            self.depth[idx] = depth;
                            self.rgb.put_pixel(x as u32, y as u32, rgb);
                            self.label.set(x as u32, y as u32, label);
                        }
                    }
                }
            }
        }
    }
}

/// Renders one sim state: gripper (label 1), object (label 2), and the
/// optional container (render-only label 4).
pub fn rasterize_scene(
    cam: &CameraModel,
    state: &SimState,
    asset: &ObjectAsset,
    container: Option<&ObjectAsset>,
    gripper: &GripperGeometry,
) -> SimFrame {
    let mut frame = SimFrame::empty(cam.width, cam.height);
    frame.draw_mesh(
        cam,
        &gripper.mesh(state.aperture).transformed(&state.ee),
        LABEL_ROBOT,
        gripper.color,
    );
    frame.draw_mesh(
        cam,
        &Mesh::for_shape(&asset.shape).transformed(&state.object_pose),
        LABEL_OBJECT,
        asset.color,
    );
    if let (Some(c), Some(pose)) = (container, state.container_pose.as_ref()) {
        frame.draw_mesh(
            cam,
            &Mesh::for_shape(&c.shape).transformed(pose),
            LABEL_CONTAINER,
            c.color,
        );
    }
    frame
}

/// Renders only the object at `pose`.
pub fn rasterize_object(cam: &CameraModel, asset: &ObjectAsset, pose: &Pose) -> SimFrame {
    let mut frame = SimFrame::empty(cam.width, cam.height);
    frame.draw_mesh(
        cam,
        &Mesh::for_shape(&asset.shape).transformed(pose),
        LABEL_OBJECT,
        asset.color,
    );
    frame
}

/// Segmentation seed: the spawn-pose grasp center projected into `cam`.
pub fn make_point_prompt(
    cam: &CameraModel,
    asset: &ObjectAsset,
    object_spawn: &Pose,
) -> Result<(f64, f64)> {
    project_point(cam, &grasp_center(asset, object_spawn))
}

/// Minimum number of unmasked samples for a temporal median fill.
pub const MIN_TEMPORAL_SAMPLES: usize = 3;

/// Removes robot and object pixels (labels 1 and 2) from a video.
///
/// Masked pixels take the per-channel temporal median over the frames where
/// they are unmasked. Pixels with fewer than three such frames are filled by
/// repeated dilation from resolved 4-neighbors (checked left, right, up,
/// down). Unmasked pixels pass through unchanged.
pub fn naive_inpaint(frames: &[RgbImage], masks: &[LabelMask]) -> Result<Vec<RgbImage>> {
    if frames.len() != masks.len() {
        return Err(Error::LengthMismatch {
            field: "masks".into(),
            expected: frames.len(),
            found: masks.len(),
        });
    }
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let (w, h) = first.dimensions();
    for (f, m) in frames.iter().zip(masks) {
        if f.dimensions() != (w, h) || m.width() != w || m.height() != h {
            return Err(Error::DimensionMismatch(
                "frames and masks must share one size".into(),
            ));
        }
    }
    let n = (w * h) as usize;
    let removed = |t: usize, i: usize| LabelMask::is_subject(masks[t].as_raw()[i]);

    // per-pixel temporal median over unmasked frames
    let mut median: Vec<Option<[u8; 3]>> = vec![None; n];
    let mut samples: [Vec<u8>; 3] = Default::default();
    for (i, slot) in median.iter_mut().enumerate() {
        for s in &mut samples {
            s.clear();
        }
        for (t, f) in frames.iter().enumerate() {
            if !removed(t, i) {
                let px = &f.as_raw()[3 * i..3 * i + 3];
                for c in 0..3 {
                    samples[c].push(px[c]);
                }
            }
        }
        if samples[0].len() >= MIN_TEMPORAL_SAMPLES {
            let mut out = [0u8; 3];
            for c in 0..3 {
                samples[c].sort_unstable();
                out[c] = samples[c][(samples[c].len() - 1) / 2];
            }
            *slot = Some(out);
        }
    }

    let mut result = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let mut out = frame.clone();
        let mut resolved = vec![true; n];
        for i in 0..n {
            if removed(t, i) {
                match median[i] {
                    Some(px) => out.as_mut()[3 * i..3 * i + 3].copy_from_slice(&px),
                    None => resolved[i] = false,
                }
            }
        }
        spatial_fill(&mut out, &mut resolved);
        result.push(out);
    }
    Ok(result)
}

fn spatial_fill(img: &mut RgbImage, resolved: &mut [bool]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    loop {
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = (y * w + x) as usize;
                if resolved[i] {
                    continue;
                }
                let source = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
                    .into_iter()
                    .filter(|&(nx, ny)| nx >= 0 && ny >= 0 && nx < w && ny < h)
                    .map(|(nx, ny)| (ny * w + nx) as usize)
                    .find(|&j| resolved[j]);
                if let Some(j) = source {
                    updates.push((i, j));
                }
            }
        }
        if updates.is_empty() {
            return;
        }
        let raw: &mut [u8] = img.as_mut();
        for &(i, j) in &updates {
            let px = [raw[3 * j], raw[3 * j + 1], raw[3 * j + 2]];
            raw[3 * i..3 * i + 3].copy_from_slice(&px);
        }
        for (i, _) in updates {
            resolved[i] = true;
        }
    }
}

/// Merges the sim layer over the background: sim pixels wherever the sim
/// label is nonzero. With `feather`, sim pixels bordering background are a
/// 50/50 blend.
pub fn composite_frame(sim: &SimFrame, background: &RgbImage, feather: bool) -> Result<RgbImage> {
    if sim.rgb.dimensions() != background.dimensions() {
        return Err(Error::DimensionMismatch(format!(
            "sim {:?} vs background {:?}",
            sim.rgb.dimensions(),
            background.dimensions()
        )));
    }
    let (w, h) = background.dimensions();
    let mut out = background.clone();
    for y in 0..h {
        for x in 0..w {
            if sim.label.get(x, y) == 0 {
                continue;
            }
            let s = sim.rgb.get_pixel(x, y);
            let edge = feather
                && [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|&(dx, dy)| {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        nx >= 0
                            && ny >= 0
                            && nx < w as i64
                            && ny < h as i64
                            && sim.label.get(nx as u32, ny as u32) == 0
                    });
            let px = if edge {
                let b = background.get_pixel(x, y);
                Rgb([0, 1, 2].map(|c| (u16::from(s.0[c]) + u16::from(b.0[c])).div_ceil(2) as u8))
            } else {
                *s
            };
            out.put_pixel(x, y, px);
        }
    }
    Ok(out)
}

/// Per-camera output of [`synthesize_video`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedView {
    pub frames: Vec<RgbImage>,
    /// Sim labels per frame (0, 1, 2, or 4 for a container).
    pub labels: Vec<LabelMask>,
}

/// Composites the rendered trajectory over per-camera backgrounds.
pub fn synthesize_video(
    cameras: &[CameraModel],
    traj: &SimTrajectory,
    backgrounds: &[Vec<RgbImage>],
    gripper: &GripperGeometry,
    feather: bool,
) -> Result<Vec<SynthesizedView>> {
    if backgrounds.len() != cameras.len() {
        return Err(Error::LengthMismatch {
            field: "backgrounds".into(),
            expected: cameras.len(),
            found: backgrounds.len(),
        });
    }
    cameras
        .iter()
        .zip(backgrounds)
        .map(|(cam, bgs)| {
            if bgs.len() != traj.states.len() {
                return Err(Error::LengthMismatch {
                    field: format!("backgrounds.{}", cam.name),
                    expected: traj.states.len(),
                    found: bgs.len(),
                });
            }
            let mut view = SynthesizedView {
                frames: Vec::with_capacity(bgs.len()),
                labels: Vec::with_capacity(bgs.len()),
            };
            for (state, bg) in traj.states.iter().zip(bgs) {
                let sim =
                    rasterize_scene(cam, state, &traj.asset, traj.container.as_ref(), gripper);
                view.frames.push(composite_frame(&sim, bg, feather)?);
                view.labels.push(sim.label);
            }
            Ok(view)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiviewSample {
    pub t: usize,
    pub camera: String,
    pub deviation_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiviewReport {
    pub max_deviation_px: f64,
    pub samples: Vec<MultiviewSample>,
    /// (t, camera) pairs where the object was clipped or out of view.
    pub skipped: Vec<(usize, String)>,
}

/// For every timestep and view, compares the projected grasp center with
/// the centroid of the object's own silhouette. Occluders are ignored.
pub fn check_multiview_consistency(
    traj: &SimTrajectory,
    cameras: &[CameraModel],
) -> Result<MultiviewReport> {
    if cameras.len() < 2 {
        return Err(Error::NotEnoughViews(cameras.len()));
    }
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for state in &traj.states {
        let center = grasp_center(&traj.asset, &state.object_pose);
        for cam in cameras {
            let alone = rasterize_object(cam, &traj.asset, &state.object_pose);
            let usable = match (alone.centroid(LABEL_OBJECT), project_point(cam, &center)) {
                (Some((cx, cy, _)), Ok((u, v))) if !touches_border(&alone.label) => {
                    Some(((cx, cy), (u, v)))
                }
                _ => None,
            };
            match usable {
                Some(((cx, cy), (u, v))) => samples.push(MultiviewSample {
                    t: state.t,
                    camera: cam.name.clone(),
                    deviation_px: ((cx - u).powi(2) + (cy - v).powi(2)).sqrt(),
                }),
                None => skipped.push((state.t, cam.name.clone())),
            }
        }
    }
    let max_deviation_px = samples.iter().map(|s| s.deviation_px).fold(0.0, f64::max);
    Ok(MultiviewReport {
        max_deviation_px,
        samples,
        skipped,
    })
}

fn touches_border(mask: &LabelMask) -> bool {
    let (w, h) = (mask.width(), mask.height());
    (0..w).any(|x| mask.get(x, 0) != 0 || mask.get(x, h - 1) != 0)
        || (0..h).any(|y| mask.get(0, y) != 0 || mask.get(w - 1, y) != 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::AssetKind;
    use crate::geometry::Pose;

    fn camera() -> CameraModel {
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

    fn sphere_asset(r: f64) -> ObjectAsset {
        ObjectAsset {
            name: "ball".into(),
            display_name: "ball".into(),
            kind: AssetKind::Object,
            shape: Shape::Sphere { radius: r },
            color: [220, 40, 40],
            graspable_width: 2.0 * r,
            grasp_center_offset: [0.0; 3],
        }
    }

    fn state(ee: Pose, object: Pose) -> SimState {
        SimState {
            t: 1,
            ee,
            aperture: 0.05,
            object_pose: object,
            attached: false,
            container_pose: None,
        }
    }

    #[test]
    fn nothing_visible_behind_camera() {
        let s = state(
            Pose::from_translation(0.0, 0.0, -1.0),
            Pose::from_translation(0.1, 0.0, -0.5),
        );
        let f = rasterize_scene(
            &camera(),
            &s,
            &sphere_asset(0.05),
            None,
            &GripperGeometry::default(),
        );
        assert!(f.label.as_raw().iter().all(|&l| l == 0));
        assert!(f.depth.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn sphere_on_axis_is_a_centered_disk() {
        let r = 0.1;
        let s = state(
            Pose::from_translation(0.0, 0.0, -5.0),
            Pose::from_translation(0.0, 0.0, 1.0),
        );
        let f = rasterize_scene(
            &camera(),
            &s,
            &sphere_asset(r),
            None,
            &GripperGeometry::default(),
        );
        let (cx, cy, n) = f.centroid(LABEL_OBJECT).unwrap();
        assert!(
            (cx - 64.0).abs() < 0.5 && (cy - 64.0).abs() < 0.5,
            "{cx} {cy}"
        );
        // analytic silhouette radius of a sphere at distance d: f·r/√(d²−r²)
        let analytic = 100.0 * r / (1.0f64 - r * r).sqrt();
        let measured = (n as f64 / std::f64::consts::PI).sqrt();
        assert!((measured - 100.0 * r).abs() <= 1.0, "measured {measured}");
        assert!((measured - analytic).abs() <= 1.0);
        // label ⇔ finite depth
        for (i, l) in f.label.as_raw().iter().enumerate() {
            assert_eq!(*l != 0, f.depth[i].is_finite());
        }
    }

    #[test]
    fn nearer_gripper_occludes_object() {
        // tip 0.2 m in front of the object center along the optical axis,
        // approaching away from the camera
        let ee = Pose::from_translation(0.0, 0.0, 0.8);
        let s = state(ee, Pose::from_translation(0.0, 0.0, 1.0));
        let f = rasterize_scene(
            &camera(),
            &s,
            &sphere_asset(0.1),
            None,
            &GripperGeometry::default(),
        );
        let robot = f.label.count(LABEL_ROBOT);
        assert!(robot > 0);
        let alone = rasterize_object(&camera(), &sphere_asset(0.1), &s.object_pose);
        let gripper_only = {
            let mut g = SimFrame::empty(128, 128);
            g.draw_mesh(
                &camera(),
                &GripperGeometry::default().mesh(0.05).transformed(&ee),
                LABEL_ROBOT,
                [1, 1, 1],
            );
            g
        };
        for y in 0..128 {
            for x in 0..128 {
                let (dg, dobj) = (gripper_only.depth_at(x, y), alone.depth_at(x, y));
                if dg.is_finite() && dobj.is_finite() {
                    let want = if dg < dobj { LABEL_ROBOT } else { LABEL_OBJECT };
                    assert_eq!(f.label.get(x, y), want);
                }
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = state(
            Pose::from_xyz_rpy([0.02, 0.0, 0.7], [3.0, 0.1, 0.4]),
            Pose::from_translation(0.0, 0.0, 1.0),
        );
        let a = rasterize_scene(
            &camera(),
            &s,
            &sphere_asset(0.05),
            None,
            &GripperGeometry::default(),
        );
        let b = rasterize_scene(
            &camera(),
            &s,
            &sphere_asset(0.05),
            None,
            &GripperGeometry::default(),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn point_prompt_on_axis_and_behind() {
        let a = sphere_asset(0.05);
        assert_eq!(
            make_point_prompt(&camera(), &a, &Pose::from_translation(0.0, 0.0, 1.0)).unwrap(),
            (64.0, 64.0)
        );
        assert!(matches!(
            make_point_prompt(&camera(), &a, &Pose::from_translation(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        // a quad crossing the camera plane still draws its visible half
        let mut f = SimFrame::empty(128, 128);
        let m = Mesh::cuboid(Vec3::new(0.0, 0.3, 0.5), Vec3::new(0.2, 0.01, 1.0));
        f.draw_mesh(&camera(), &m, LABEL_OBJECT, [9, 9, 9]);
        assert!(f.label.count(LABEL_OBJECT) > 0);
        assert!(f
            .depth
            .iter()
            .filter(|d| d.is_finite())
            .all(|d| *d >= NEAR_PLANE - 1e-12));
    }

    fn flat(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v.wrapping_mul(3), 255 - v]))
    }

    #[test]
    fn static_background_recovered_under_moving_mask() {
        let bg = RgbImage::from_fn(8, 6, |x, y| Rgb([(x * 20) as u8, (y * 30) as u8, 77]));
        let mut frames = Vec::new();
        let mut masks = Vec::new();
        for t in 0..6u32 {
            let mask = LabelMask::from_fn(
                8,
                6,
                |x, _| if x == t || x == t + 1 { LABEL_ROBOT } else { 0 },
            );
            let mut f = bg.clone();
            for (x, y, p) in f.enumerate_pixels_mut() {
                if mask.get(x, y) != 0 {
                    *p = Rgb([255, 0, 255]);
                }
            }
            frames.push(f);
            masks.push(mask);
        }
        let out = naive_inpaint(&frames, &masks).unwrap();
        assert!(out.iter().all(|f| *f == bg));
    }

    #[test]
    fn always_masked_pixel_takes_left_neighbor() {
        let frames: Vec<RgbImage> = (0..4).map(|t| flat(3, 1, 10 * t as u8 + 5)).collect();
        let masks: Vec<LabelMask> = (0..4)
            .map(|_| LabelMask::from_fn(3, 1, |x, _| if x >= 1 { 2 } else { 0 }))
            .collect();
        let out = naive_inpaint(&frames, &masks).unwrap();
        for (f, o) in frames.iter().zip(&out) {
            assert_eq!(o.get_pixel(1, 0), f.get_pixel(0, 0));
            assert_eq!(o.get_pixel(2, 0), f.get_pixel(0, 0));
        }
    }

    #[test]
    fn empty_masks_pass_through() {
        let frames: Vec<RgbImage> = (0..3)
            .map(|t| RgbImage::from_fn(5, 4, |x, y| Rgb([x as u8, y as u8, t])))
            .collect();
        let masks = vec![LabelMask::new(5, 4); 3];
        assert_eq!(naive_inpaint(&frames, &masks).unwrap(), frames);
        // table label is not removed
        let table = vec![LabelMask::from_fn(5, 4, |_, _| 3); 3];
        assert_eq!(naive_inpaint(&frames, &table).unwrap(), frames);
        assert!(matches!(
            naive_inpaint(&frames, &masks[..2]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn composite_identity_and_overwrite() {
        let bg = RgbImage::from_fn(6, 5, |x, y| Rgb([x as u8, y as u8, 3]));
        let empty = SimFrame::empty(6, 5);
        assert_eq!(composite_frame(&empty, &bg, false).unwrap(), bg);
        let mut full = SimFrame::empty(6, 5);
        full.rgb = RgbImage::from_pixel(6, 5, Rgb([200, 100, 50]));
        full.label = LabelMask::from_fn(6, 5, |_, _| LABEL_OBJECT);
        assert_eq!(composite_frame(&full, &bg, false).unwrap(), full.rgb);
        assert!(composite_frame(&full, &RgbImage::new(5, 5), false).is_err());
    }

    #[test]
    fn feather_blends_only_boundary() {
        let bg = RgbImage::from_pixel(5, 5, Rgb([0, 0, 0]));
        let mut sim = SimFrame::empty(5, 5);
        sim.rgb = RgbImage::from_pixel(5, 5, Rgb([200, 200, 200]));
        sim.label = LabelMask::from_fn(5, 5, |x, y| {
            u8::from((1..4).contains(&x) && (1..4).contains(&y))
        });
        let out = composite_frame(&sim, &bg, true).unwrap();
        assert_eq!(out.get_pixel(2, 2).0, [200; 3]);
        assert_eq!(out.get_pixel(1, 1).0, [100; 3]);
        assert_eq!(out.get_pixel(0, 0).0, [0; 3]);
    }

    #[test]
    fn multiview_needs_two_cameras() {
        let traj_cam = camera();
        let asset = sphere_asset(0.03);
        let s = state(
            Pose::from_translation(0.0, 0.0, -1.0),
            Pose::from_translation(0.0, 0.0, 1.0),
        );
        let traj = SimTrajectory {
            states: vec![s],
            scene: crate::scene::SceneConfig {
                table_height: 0.0,
                robot_base: Pose::identity(),
                cameras: vec![],
                workspace_bounds: crate::scene::Aabb {
                    min: Vec3::repeat(-1.0),
                    max: Vec3::repeat(1.0),
                },
            },
            asset,
            container: None,
            grasp_window: crate::replay::GraspWindow {
                t_start: 1,
                t_end: 1,
            },
            attach_transform: None,
            attach_failure: None,
        };
        assert!(matches!(
            check_multiview_consistency(&traj, std::slice::from_ref(&traj_cam)),
            Err(Error::NotEnoughViews(1))
        ));
        // a view from behind sees nothing: skipped, not failed
        let mut back = traj_cam.clone();
        back.name = "back".into();
        back.cam_to_world = Pose::from_translation(0.0, 0.0, 2.0);
        let report = check_multiview_consistency(&traj, &[traj_cam, back]).unwrap();
        assert_eq!(report.samples.len(), 1);
        assert_eq!(report.skipped, vec![(1, "back".to_string())]);
        assert!(report.max_deviation_px < 0.5);
    }
}
