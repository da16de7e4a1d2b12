//! Synthetic worlds, ground-truth trajectories, simulated scans and noisy
//! priors for the drift benchmark.
//!
//! Scenes are built from analytic surfaces (axis-aligned rectangles and a
//! closed-form height field), so surface membership and normals have exact
//! oracles. Scans are range-limited surface samples with Gaussian range
//! noise along the viewing ray; priors perturb the true pose the way an
//! odometry + IMU stack would: translation noise and yaw drift accumulate
//! freely while roll and pitch stay near truth, perturbed only by the
//! attitude noise.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, UnitVector3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Closed rectangular tube along x, partitioned by bulkhead walls with
    /// doorway openings.
    Tunnel,
    /// Floor and two walls along x (open top) with doorway bulkheads.
    Corridor,
    /// Open undulating ground strip along x.
    TerrainStrip,
}

/// An analytic world. Extents are meters; the tube interior spans
/// x ∈ [0, length], y ∈ [−width/2, width/2], z ∈ [0, height].
#[derive(Debug, Clone, Copy)]
pub struct Scene {
    pub kind: SceneKind,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Spacing of transverse bulkhead walls along x; 0 disables them. The
    /// bulkheads are what makes the travel direction observable inside an
    /// otherwise featureless tube.
    pub bulkhead_spacing: f64,
    /// Doorway opening left in each bulkhead, centered at y = 0, starting
    /// at the floor.
    pub door_width: f64,
    pub door_height: f64,
    pub terrain_amplitude: f64,
    pub terrain_wavelength: f64,
}

impl Scene {
    pub fn tunnel(length: f64, width: f64, height: f64) -> Self {
        Scene {
            kind: SceneKind::Tunnel,
            length,
            width,
            height,
            bulkhead_spacing: 6.0,
            door_width: (0.45 * width).min(2.6),
            door_height: (0.65 * height).min(2.4),
            terrain_amplitude: 0.0,
            terrain_wavelength: 1.0,
        }
    }

    pub fn corridor(length: f64, width: f64, wall_height: f64) -> Self {
        Scene {
            kind: SceneKind::Corridor,
            ..Scene::tunnel(length, width, wall_height)
        }
    }

    pub fn terrain_strip(length: f64, width: f64, amplitude: f64, wavelength: f64) -> Self {
        Scene {
            kind: SceneKind::TerrainStrip,
            length,
            width,
            height: 0.0,
            bulkhead_spacing: 0.0,
            door_width: 0.0,
            door_height: 0.0,
            terrain_amplitude: amplitude,
            terrain_wavelength: wavelength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::param("scene extents must be positive"));
        }
        match self.kind {
            SceneKind::Tunnel | SceneKind::Corridor => {
                if !(self.height > 0.0) {
                    return Err(Error::param("tube height must be positive"));
                }
                if self.bulkhead_spacing > 0.0
                    && !(self.door_width > 0.0
                        && self.door_width < self.width
                        && self.door_height > 0.0
                        && self.door_height <= self.height)
                {
                    return Err(Error::param("bulkhead door must fit inside the tube"));
                }
            }
            SceneKind::TerrainStrip => {
                if !(self.terrain_wavelength > 0.0) {
                    return Err(Error::param("terrain wavelength must be positive"));
                }
                if self.terrain_amplitude < 0.0 {
                    return Err(Error::param("terrain amplitude must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Ground elevation of the terrain strip.
    pub fn terrain_height(&self, x: f64, y: f64) -> f64 {
        let kx = 2.0 * std::f64::consts::PI / self.terrain_wavelength;
        let ky = 2.0 * std::f64::consts::PI / (0.8 * self.terrain_wavelength);
        self.terrain_amplitude * (kx * x).sin() * (ky * y).cos()
    }

    fn terrain_normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let kx = 2.0 * std::f64::consts::PI / self.terrain_wavelength;
        let ky = 2.0 * std::f64::consts::PI / (0.8 * self.terrain_wavelength);
        let dfdx = self.terrain_amplitude * kx * (kx * x).cos() * (ky * y).cos();
        let dfdy = -self.terrain_amplitude * ky * (kx * x).sin() * (ky * y).sin();
        Vector3::new(-dfdx, -dfdy, 1.0).normalize()
    }

    fn panels(&self) -> Vec<Panel> {
        let (l, w, h) = (self.length, self.width, self.height);
        let mut panels = Vec::new();
        if self.kind == SceneKind::TerrainStrip {
            return panels;
        }

        let floor = Panel::new(
            Vector3::new(0.0, -w / 2.0, 0.0),
            Vector3::new(l, 0.0, 0.0),
            Vector3::new(0.0, w, 0.0),
            Vector3::z(),
            false,
        );
        let left_wall = Panel::new(
            Vector3::new(0.0, -w / 2.0, 0.0),
            Vector3::new(l, 0.0, 0.0),
            Vector3::new(0.0, 0.0, h),
            Vector3::y(),
            false,
        );
        let right_wall = Panel::new(
            Vector3::new(0.0, w / 2.0, 0.0),
            Vector3::new(l, 0.0, 0.0),
            Vector3::new(0.0, 0.0, h),
            -Vector3::y(),
            false,
        );
        panels.push(floor);
        panels.push(left_wall);
        panels.push(right_wall);
        if self.kind == SceneKind::Tunnel {
            panels.push(Panel::new(
                Vector3::new(0.0, -w / 2.0, h),
                Vector3::new(l, 0.0, 0.0),
                Vector3::new(0.0, w, 0.0),
                -Vector3::z(),
                false,
            ));
        }

        if self.bulkhead_spacing > 0.0 {
            let dw = self.door_width;
            let dh = self.door_height;
            let jamb = (w - dw) / 2.0;
            let mut x = self.bulkhead_spacing;
            while x < l {
                panels.push(Panel::new(
                    Vector3::new(x, -w / 2.0, 0.0),
                    Vector3::new(0.0, jamb, 0.0),
                    Vector3::new(0.0, 0.0, h),
                    Vector3::x(),
                    true,
                ));
                panels.push(Panel::new(
                    Vector3::new(x, dw / 2.0, 0.0),
                    Vector3::new(0.0, jamb, 0.0),
                    Vector3::new(0.0, 0.0, h),
                    Vector3::x(),
                    true,
                ));
                if dh < h {
                    // Lintel above the doorway.
                    panels.push(Panel::new(
                        Vector3::new(x, -dw / 2.0, dh),
                        Vector3::new(0.0, dw, 0.0),
                        Vector3::new(0.0, 0.0, h - dh),
                        Vector3::x(),
                        true,
                    ));
                }
                x += self.bulkhead_spacing;
            }
        }
        panels
    }

    /// Distance from a point to the nearest scene surface; the membership
    /// oracle used by tests. For the terrain strip this is the vertical
    /// distance to the height field.
    pub fn surface_distance(&self, p: &Point3) -> f64 {
        match self.kind {
            SceneKind::TerrainStrip => {
                if p.x < 0.0 || p.x > self.length || p.y.abs() > self.width / 2.0 {
                    f64::INFINITY
                } else {
                    (p.z - self.terrain_height(p.x, p.y)).abs()
                }
            }
            _ => self
                .panels()
                .iter()
                .map(|panel| panel.distance_to(&p.vector()))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// True when a sensor position lies in free space inside the scene.
    pub fn contains(&self, p: &Point3) -> bool {
        let in_strip = p.x >= 0.0 && p.x <= self.length && p.y.abs() < self.width / 2.0;
        match self.kind {
            SceneKind::Tunnel => in_strip && p.z > 0.0 && p.z < self.height,
            SceneKind::Corridor => in_strip && p.z > 0.0,
            SceneKind::TerrainStrip => in_strip && p.z > self.terrain_height(p.x, p.y),
        }
    }

    /// Samples the scene surfaces at the given density (points per square
    /// meter) with analytic normals — a ground-truth reference map.
    pub fn sample_reference_map(&self, density: f64, seed: u64) -> Result<PointCloud> {
        self.validate()?;
        if !(density > 0.0) {
            return Err(Error::param("density must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut normals = Vec::new();
        match self.kind {
            SceneKind::TerrainStrip => {
                let area = self.length * self.width;
                let count = (density * area).round() as usize;
                for _ in 0..count {
                    let x = rng.random_range(0.0..self.length);
                    let y = rng.random_range(-self.width / 2.0..self.width / 2.0);
                    points.push(Point3::new(x, y, self.terrain_height(x, y)));
                    normals.push(
                        UnitVector3::from_vector(self.terrain_normal(x, y))
                            .expect("terrain normal is never zero"),
                    );
                }
            }
            _ => {
                for panel in self.panels() {
                    let count = (density * panel.area()).round() as usize;
                    for _ in 0..count {
                        let a = rng.random_range(0.0..1.0);
                        let b = rng.random_range(0.0..1.0);
                        points.push(Point3::from_vector(panel.at(a, b)));
                        normals.push(
                            UnitVector3::from_vector(panel.normal)
                                .expect("panel normal is unit length"),
                        );
                    }
                }
            }
        }
        if points.is_empty() {
            return Err(Error::param("density too low: empty reference map"));
        }
        PointCloud::with_normals(points, normals, "map")
    }
}

/// A one- or two-sided axis-aligned rectangle.
#[derive(Debug, Clone, Copy)]
struct Panel {
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    normal: Vector3<f64>,
    two_sided: bool,
}

impl Panel {
    fn new(
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        normal: Vector3<f64>,
        two_sided: bool,
    ) -> Self {
        Panel { origin, u, v, normal, two_sided }
    }

    fn area(&self) -> f64 {
        self.u.norm() * self.v.norm()
    }

    fn at(&self, a: f64, b: f64) -> Vector3<f64> {
        self.origin + self.u * a + self.v * b
    }

    fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        let rel = p - self.origin;
        let u_len = self.u.norm();
        let v_len = self.v.norm();
        let a = (rel.dot(&self.u) / u_len).clamp(0.0, u_len);
        let b = (rel.dot(&self.v) / v_len).clamp(0.0, v_len);
        let closest = self.origin + self.u * (a / u_len) + self.v * (b / v_len);
        (p - closest).norm()
    }

    /// Restricts the panel to x ∈ [lo, hi]; None when outside the window.
    fn clipped_x(&self, lo: f64, hi: f64) -> Option<Panel> {
        if self.u.x.abs() > 0.0 {
            // u runs along x for all longitudinal panels.
            let x0 = self.origin.x;
            let x1 = self.origin.x + self.u.x;
            let new_lo = x0.max(lo);
            let new_hi = x1.min(hi);
            if new_lo >= new_hi {
                return None;
            }
            let mut clipped = *self;
            clipped.origin.x = new_lo;
            clipped.u.x = new_hi - new_lo;
            Some(clipped)
        } else {
            // Transverse panels sit at fixed x.
            (self.origin.x >= lo && self.origin.x <= hi).then_some(*self)
        }
    }
}

/// Field of view of the simulated sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fov {
    FullSphere,
    /// Rays limited to |elevation| ≤ half_angle (radians) in the sensor frame.
    VerticalCone { half_angle: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct SensorModel {
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub points_per_scan: usize,
    pub fov: Fov,
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::param("max_range must be positive"));
        }
        if self.range_noise_sigma < 0.0 {
            return Err(Error::param("range noise sigma must be non-negative"));
        }
        if self.points_per_scan == 0 {
            return Err(Error::param("points_per_scan must be at least 1"));
        }
        Ok(())
    }
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            max_range: 12.0,
            range_noise_sigma: 0.03,
            points_per_scan: 2000,
            fov: Fov::FullSphere,
        }
    }
}

/// How the simulated odometry + IMU prior deviates from truth.
#[derive(Debug, Clone, Copy)]
pub struct PriorModel {
    /// Gaussian noise per axis on the prior translation, meters per scan.
    pub odom_translation_noise_sigma: f64,
    /// Deterministic yaw error accumulating linearly with scan index,
    /// radians per scan. Yaw is not gravity-observable.
    pub yaw_drift_per_scan: f64,
    /// Fresh Gaussian error on the prior roll and pitch per scan, radians.
    /// These are the gravity-observable channels, so the error is bounded
    /// and does not accumulate.
    pub rollpitch_noise_sigma: f64,
}

impl PriorModel {
    pub fn validate(&self) -> Result<()> {
        if self.odom_translation_noise_sigma < 0.0 || self.rollpitch_noise_sigma < 0.0 {
            return Err(Error::param("noise sigmas must be non-negative"));
        }
        Ok(())
    }

    pub fn noiseless() -> Self {
        PriorModel {
            odom_translation_noise_sigma: 0.0,
            yaw_drift_per_scan: 0.0,
            rollpitch_noise_sigma: 0.0,
        }
    }
}

impl Default for PriorModel {
    fn default() -> Self {
        PriorModel {
            odom_translation_noise_sigma: 0.02,
            yaw_drift_per_scan: 0.0005,
            rollpitch_noise_sigma: 0.004,
        }
    }
}

/// A straight constant-heading path: pose i sits at `start + i·step·heading`
/// with the given yaw. For terrain scenes, z rides the ground at the start
/// clearance.
#[derive(Debug, Clone, Copy)]
pub struct PathSpec {
    pub start: Vector3<f64>,
    pub yaw: f64,
    pub step: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec {
            start: Vector3::new(1.0, 0.0, 1.2),
            yaw: 0.0,
            step: 0.5,
        }
    }
}

impl PathSpec {
    pub fn truth_poses(&self, scene: &Scene, n: usize) -> Result<Vec<RigidTransform>> {
        let dir = Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0);
        let mut poses = Vec::with_capacity(n);
        for i in 0..n {
            let mut pos = self.start + dir * (self.step * i as f64);
            if scene.kind == SceneKind::TerrainStrip {
                pos.z = scene.terrain_height(pos.x, pos.y) + self.start.z;
            }
            let pose = RigidTransform::from_euler(0.0, 0.0, self.yaw, pos);
            if !scene.contains(&Point3::from_vector(pos)) {
                return Err(Error::param(format!(
                    "path outside scene at pose {i} ({:.2}, {:.2}, {:.2})",
                    pos.x, pos.y, pos.z
                )));
            }
            poses.push(pose);
        }
        Ok(poses)
    }
}

/// One simulated observation: a scan in the sensor frame, the noisy prior
/// that an odometry + IMU stack would hand the mapper, and the true pose.
#[derive(Debug, Clone)]
pub struct ScanFrame {
    pub stamp: f64,
    pub scan: PointCloud,
    pub prior: RigidTransform,
    pub truth: RigidTransform,
}

const SCAN_PERIOD: f64 = 0.1;

pub fn generate_sequence(
    scene: &Scene,
    path: &PathSpec,
    sensor: &SensorModel,
    prior_model: &PriorModel,
    n_scans: usize,
    seed: u64,
) -> Result<Vec<ScanFrame>> {
    scene.validate()?;
    sensor.validate()?;
    prior_model.validate()?;
    if n_scans == 0 {
        return Err(Error::param("n_scans must be at least 1"));
    }
    let truth_poses = path.truth_poses(scene, n_scans)?;
    let panels = scene.panels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut frames = Vec::with_capacity(n_scans);
    for (i, truth) in truth_poses.iter().enumerate() {
        let scan = sample_scan(scene, &panels, truth, sensor, &mut rng)?;

        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        let t_noise = Vector3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng))
            * prior_model.odom_translation_noise_sigma;
        let roll = normal(&mut rng) * prior_model.rollpitch_noise_sigma;
        let pitch = normal(&mut rng) * prior_model.rollpitch_noise_sigma;
        let yaw = path.yaw + prior_model.yaw_drift_per_scan * i as f64;
        let prior = RigidTransform::from_euler(roll, pitch, yaw, truth.translation() + t_noise);

        frames.push(ScanFrame {
            stamp: i as f64 * SCAN_PERIOD,
            scan,
            prior,
            truth: *truth,
        });
    }
    Ok(frames)
}

fn sample_scan(
    scene: &Scene,
    panels: &[Panel],
    truth: &RigidTransform,
    sensor: &SensorModel,
    rng: &mut ChaCha8Rng,
) -> Result<PointCloud> {
    let origin = truth.translation();
    let x_lo = origin.x - sensor.max_range;
    let x_hi = origin.x + sensor.max_range;

    // Candidate surfaces restricted to the reachable x window, with their
    // cumulative areas for area-weighted selection.
    let mut clipped: Vec<Panel> = Vec::new();
    let mut terrain_window: Option<(f64, f64)> = None;
    let mut cumulative: Vec<f64> = Vec::new();
    let mut total = 0.0;
    if scene.kind == SceneKind::TerrainStrip {
        let lo = x_lo.max(0.0);
        let hi = x_hi.min(scene.length);
        if lo < hi {
            terrain_window = Some((lo, hi));
            total += (hi - lo) * scene.width;
            cumulative.push(total);
        }
    } else {
        for panel in panels {
            if let Some(c) = panel.clipped_x(x_lo, x_hi) {
                total += c.area();
                cumulative.push(total);
                clipped.push(c);
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::param("sensor sees no surface within range"));
    }

    let inverse_truth = truth.inverse();
    let mut points = Vec::with_capacity(sensor.points_per_scan);
    let max_attempts = sensor.points_per_scan * 1000;
    let mut attempts = 0;
    while points.len() < sensor.points_per_scan {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::param(
                "sensor sees too little surface within range and field of view",
            ));
        }

        let pick = rng.random_range(0.0..total);
        let which = cumulative.partition_point(|&c| c <= pick);
        let (p, n, two_sided) = if let Some((lo, hi)) = terrain_window {
            let x = rng.random_range(lo..hi);
            let y = rng.random_range(-scene.width / 2.0..scene.width / 2.0);
            (
                Vector3::new(x, y, scene.terrain_height(x, y)),
                scene.terrain_normal(x, y),
                false,
            )
        } else {
            let panel = &clipped[which.min(clipped.len() - 1)];
            let a = rng.random_range(0.0..1.0);
            let b = rng.random_range(0.0..1.0);
            (panel.at(a, b), panel.normal, panel.two_sided)
        };

        let ray = p - origin;
        let range = ray.norm();
        if range > sensor.max_range || range < 1e-9 {
            continue;
        }
        if !two_sided && n.dot(&(origin - p)) <= 0.0 {
            continue;
        }
        if let Fov::VerticalCone { half_angle } = sensor.fov {
            let in_sensor = inverse_truth.apply_vector(ray);
            let elevation = in_sensor.z.atan2((in_sensor.x * in_sensor.x
                + in_sensor.y * in_sensor.y)
                .sqrt());
            if elevation.abs() > half_angle {
                continue;
            }
        }

        let eta: f64 = rng.sample(StandardNormal);
        let noisy = p + (ray / range) * (eta * sensor.range_noise_sigma);
        points.push(inverse_truth.apply_point(&Point3::from_vector(noisy)));
    }
    Ok(PointCloud::new(points, "sensor"))
}
