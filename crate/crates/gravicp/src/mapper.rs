//! Incremental scan-to-map front-end: subsample, pre-align with the prior,
//! register, insert with bounded density. A localization-only mode runs the
//! same loop against a frozen reference map.

use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform, UnitVector3};
use crate::icp::{register, IcpConfig, IcpResult};
use crate::kdtree::KdTree;
use crate::preprocess::{normal_from_neighborhood, random_subsample, NormalEstimationParams};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy)]
pub struct MapperConfig {
    pub icp: IcpConfig,
    /// Newly aligned points closer than this to any existing map point are
    /// not inserted; keeps the map density bounded. 0 disables the gate.
    pub insertion_min_spacing: f64,
    /// Random subsampling ratio applied to every incoming scan.
    pub scan_keep_ratio: f64,
    /// Neighborhood size for map-side normal estimation.
    pub normal_k: usize,
    /// Freeze the map: register scans but never insert.
    pub localize_only: bool,
    pub seed: u64,
}

impl MapperConfig {
    pub fn validate(&self) -> Result<()> {
        self.icp.validate()?;
        if self.insertion_min_spacing < 0.0 {
            return Err(Error::param("insertion_min_spacing must be non-negative"));
        }
        if !(self.scan_keep_ratio > 0.0 && self.scan_keep_ratio <= 1.0) {
            return Err(Error::param("scan_keep_ratio must be in (0, 1]"));
        }
        if self.normal_k < 3 {
            return Err(Error::param("normal_k must be at least 3"));
        }
        Ok(())
    }
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            icp: IcpConfig::default(),
            insertion_min_spacing: 0.1,
            scan_keep_ratio: 1.0,
            normal_k: 10,
            localize_only: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScanEvent {
    /// First scan into an empty map; no registration possible.
    Bootstrap,
    Registered,
    /// Registration failed; the pose fell back to the prior and nothing was
    /// inserted.
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct ScanRecord {
    pub index: usize,
    pub stamp: f64,
    pub event: ScanEvent,
    pub pose: RigidTransform,
    pub inserted: usize,
    pub icp: Option<IcpResult>,
}

/// The growing map plus its spatial index and the pose log.
#[derive(Debug, Clone)]
pub struct MapState {
    cloud: PointCloud,
    index: Option<KdTree>,
    pose_log: Trajectory,
}

impl MapState {
    pub fn empty() -> Self {
        MapState {
            cloud: PointCloud::new(Vec::new(), "map"),
            index: None,
            pose_log: Trajectory::new(),
        }
    }

    /// Wraps a pre-built reference map for localization. Normals are
    /// estimated if missing, oriented toward the cloud centroid (the sign is
    /// irrelevant to the point-to-plane objective). Pre-loaded maps are
    /// exempt from the insertion spacing bound.
    pub fn from_reference_map(cloud: PointCloud, normal_k: usize) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyReferenceCloud);
        }
        let cloud = if cloud.has_normals() {
            cloud
        } else {
            let centroid = cloud
                .points()
                .iter()
                .map(|p| p.vector())
                .sum::<Vector3<f64>>()
                / cloud.len() as f64;
            let params =
                NormalEstimationParams::new(normal_k, Point3::from_vector(centroid))?;
            crate::preprocess::estimate_normals(&cloud, &params)?
        };
        let index = KdTree::build(cloud.points())?;
        Ok(MapState {
            cloud,
            index: Some(index),
            pose_log: Trajectory::new(),
        })
    }

    pub fn map(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.pose_log
    }

    /// Inserts without the spacing gate and (re)estimates normals for every
    /// point — the bootstrap scan effectively *is* the initial map.
    fn insert_bootstrap(&mut self, aligned: &PointCloud, sensor: Vector3<f64>, k: usize) {
        let points = aligned.points().to_vec();
        let tree = KdTree::build(&points).expect("bootstrap scan is non-empty");
        let (normals, flags) = estimate_batch_normals(&tree, &points, &points, sensor, k);
        let mut cloud = PointCloud::new(points, "map");
        cloud.set_normals(normals, flags);
        self.cloud = cloud;
        self.index = Some(tree);
    }

    /// Inserts aligned points that clear the spacing gate against both the
    /// existing map and the already-accepted part of this batch. Normals for
    /// the new points come from the post-insertion neighborhood; existing
    /// normals are not refreshed. Returns the number of inserted points.
    fn insert_gated(
        &mut self,
        aligned: &PointCloud,
        sensor: Vector3<f64>,
        spacing: f64,
        k: usize,
    ) -> Result<usize> {
        let index = self.index.as_ref().expect("map index exists when non-empty");
        let mut accepted: Vec<Point3> = Vec::new();
        for p in aligned.points() {
            if spacing > 0.0 {
                if index.nearest(p).distance < spacing {
                    continue;
                }
                if accepted.iter().any(|q| q.distance(p) < spacing) {
                    continue;
                }
            }
            accepted.push(*p);
        }
        if accepted.is_empty() {
            return Ok(0);
        }

        let mut all_points = self.cloud.points().to_vec();
        all_points.extend_from_slice(&accepted);
        let tree = KdTree::build(&all_points)?;
        let (normals, flags) = estimate_batch_normals(&tree, &all_points, &accepted, sensor, k);
        self.cloud.append(&accepted, &normals, &flags);
        self.index = Some(tree);
        Ok(accepted.len())
    }
}

/// Normals for `targets` using neighborhoods drawn from `all_points`.
fn estimate_batch_normals(
    tree: &KdTree,
    all_points: &[Point3],
    targets: &[Point3],
    sensor: Vector3<f64>,
    k: usize,
) -> (Vec<UnitVector3>, Vec<bool>) {
    let orient = Point3::from_vector(sensor);
    let k_eff = k.min(all_points.len());
    let mut normals = Vec::with_capacity(targets.len());
    let mut flags = Vec::with_capacity(targets.len());
    let mut neighborhood = Vec::with_capacity(k_eff);
    for p in targets {
        if k_eff < 3 {
            normals.push(UnitVector3::new(0.0, 0.0, 1.0).expect("unit z"));
            flags.push(true);
            continue;
        }
        neighborhood.clear();
        for n in tree.knn(k_eff, p) {
            neighborhood.push(all_points[n.index].vector());
        }
        let (normal, degenerate) = normal_from_neighborhood(&neighborhood, p, &orient);
        normals.push(normal);
        flags.push(degenerate);
    }
    (normals, flags)
}

/// Runs one scan through the mapper: subsample, register against the map
/// (bootstrap the map on the very first scan), insert, log the pose.
/// Registration failures are recorded as [`ScanEvent::Failed`] with the pose
/// falling back to the prior; they are not hard errors.
pub fn process_scan(
    state: &mut MapState,
    scan: &PointCloud,
    prior: &RigidTransform,
    stamp: f64,
    config: &MapperConfig,
) -> Result<ScanRecord> {
    config.validate()?;
    if scan.is_empty() {
        return Err(Error::EmptyScan);
    }
    let index = state.pose_log.len();
    let scan_seed = mix_seed(config.seed, index as u64);
    let sub = random_subsample(scan, config.scan_keep_ratio, scan_seed)?;
    if sub.is_empty() {
        return Err(Error::EmptyScan);
    }

    if state.cloud.is_empty() {
        if config.localize_only {
            return Err(Error::EmptyReferenceCloud);
        }
        let aligned = sub.transformed(prior);
        state.insert_bootstrap(&aligned, prior.translation(), config.normal_k);
        state.pose_log.push(stamp, *prior)?;
        return Ok(ScanRecord {
            index,
            stamp,
            event: ScanEvent::Bootstrap,
            pose: *prior,
            inserted: aligned.len(),
            icp: None,
        });
    }

    match register(&sub, &state.cloud, prior, &config.icp) {
        Ok(result) => {
            let pose = result.transform;
            let inserted = if config.localize_only {
                0
            } else {
                let aligned = sub.transformed(&pose);
                state.insert_gated(
                    &aligned,
                    pose.translation(),
                    config.insertion_min_spacing,
                    config.normal_k,
                )?
            };
            state.pose_log.push(stamp, pose)?;
            Ok(ScanRecord {
                index,
                stamp,
                event: ScanEvent::Registered,
                pose,
                inserted,
                icp: Some(result),
            })
        }
        Err(e @ (Error::NoCorrespondences | Error::DegenerateGeometry)) => {
            state.pose_log.push(stamp, *prior)?;
            Ok(ScanRecord {
                index,
                stamp,
                event: ScanEvent::Failed(e.to_string()),
                pose: *prior,
                inserted: 0,
                icp: None,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug)]
pub struct MappingRun {
    pub state: MapState,
    pub records: Vec<ScanRecord>,
}

impl MappingRun {
    pub fn trajectory(&self) -> &Trajectory {
        self.state.trajectory()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ScanRecord> {
        self.records
            .iter()
            .filter(|r| matches!(r.event, ScanEvent::Failed(_)))
    }
}

/// Folds [`process_scan`] over a time-ordered scan sequence starting from an
/// empty map (or a frozen reference map when `localize_only` is set and a
/// state is supplied through [`run_sequence_from`]).
pub fn run_sequence<'a>(
    scans: impl IntoIterator<Item = (&'a PointCloud, RigidTransform, f64)>,
    config: &MapperConfig,
) -> Result<MappingRun> {
    run_sequence_from(MapState::empty(), scans, config)
}

pub fn run_sequence_from<'a>(
    mut state: MapState,
    scans: impl IntoIterator<Item = (&'a PointCloud, RigidTransform, f64)>,
    config: &MapperConfig,
) -> Result<MappingRun> {
    let mut records = Vec::new();
    for (scan, prior, stamp) in scans {
        records.push(process_scan(&mut state, scan, &prior, stamp, config)?);
    }
    Ok(MappingRun { state, records })
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_sequence, PathSpec, PriorModel, Scene, SensorModel};

    fn corridor_frames(
        n: usize,
        prior_model: PriorModel,
        seed: u64,
    ) -> Vec<crate::synth::ScanFrame> {
        let scene = Scene::corridor(60.0, 6.0, 3.0);
        let sensor = SensorModel {
            max_range: 8.0,
            range_noise_sigma: 0.0,
            points_per_scan: 4000,
            ..SensorModel::default()
        };
        let path = PathSpec {
            start: Vector3::new(1.0, 0.0, 1.2),
            yaw: 0.0,
            step: 0.5,
        };
        generate_sequence(&scene, &path, &sensor, &prior_model, n, seed).unwrap()
    }

    fn mapper_config() -> MapperConfig {
        MapperConfig {
            icp: IcpConfig {
                match_params: crate::matching::MatchParams::new(1.0, 0.8).unwrap(),
                ..IcpConfig::default()
            },
            insertion_min_spacing: 0.1,
            scan_keep_ratio: 1.0,
            seed: 5,
            ..MapperConfig::default()
        }
    }

    #[test]
    fn bootstrap_scan_becomes_the_map() {
        let frames = corridor_frames(1, PriorModel::noiseless(), 1);
        let scan = &frames[0].scan;
        let prior = frames[0].prior;
        let config = mapper_config();

        let mut state = MapState::empty();
        let record = process_scan(&mut state, scan, &prior, 0.0, &config).unwrap();

        assert_eq!(record.event, ScanEvent::Bootstrap);
        assert_eq!(record.pose, prior);
        let expected = random_subsample(scan, config.scan_keep_ratio, mix_seed(config.seed, 0))
            .unwrap()
            .transformed(&prior);
        assert_eq!(state.map().points(), expected.points());
        assert!(state.map().has_normals());
        assert_eq!(state.trajectory().len(), 1);
    }

    #[test]
    fn duplicate_scan_registers_to_identity_and_inserts_nothing() {
        let frames = corridor_frames(1, PriorModel::noiseless(), 2);
        let scan = &frames[0].scan;
        let truth = frames[0].truth;
        let config = MapperConfig {
            scan_keep_ratio: 1.0,
            ..mapper_config()
        };

        let mut state = MapState::empty();
        process_scan(&mut state, scan, &truth, 0.0, &config).unwrap();
        let record = process_scan(&mut state, scan, &truth, 0.1, &config).unwrap();

        assert_eq!(record.event, ScanEvent::Registered);
        let icp = record.icp.unwrap();
        assert!(icp.converged);
        let correction = record.pose.compose(&truth.inverse());
        assert!(correction.translation_norm() < 1e-3);
        assert!(correction.rotation_angle() < 1e-3);
        assert_eq!(record.inserted, 0);
    }

    #[test]
    fn localize_only_never_touches_the_map() {
        let scene = Scene::corridor(60.0, 6.0, 3.0);
        let reference = scene.sample_reference_map(30.0, 3).unwrap();
        let frames = corridor_frames(5, PriorModel::noiseless(), 4);

        let state = MapState::from_reference_map(reference, 10).unwrap();
        let before = state.map().clone();
        let config = MapperConfig {
            localize_only: true,
            ..mapper_config()
        };
        let run = run_sequence_from(
            state,
            frames.iter().map(|f| (&f.scan, f.prior, f.stamp)),
            &config,
        )
        .unwrap();

        assert_eq!(*run.state.map(), before);
        assert_eq!(run.trajectory().len(), 5);
        for record in &run.records {
            assert_eq!(record.inserted, 0);
            assert_eq!(record.event, ScanEvent::Registered);
        }
    }

    #[test]
    fn noise_free_corridor_tracks_ground_truth() {
        let frames = corridor_frames(20, PriorModel::noiseless(), 6);
        let run = run_sequence(
            frames.iter().map(|f| (&f.scan, f.prior, f.stamp)),
            &mapper_config(),
        )
        .unwrap();
        assert_eq!(run.failures().count(), 0);
        for (entry, frame) in run.trajectory().entries().iter().zip(frames.iter()) {
            let err = (entry.pose.translation() - frame.truth.translation()).norm();
            assert!(err < 1e-3, "pose error {err} exceeds 1 mm");
        }
    }

    #[test]
    fn yaw_perturbed_priors_keep_z_pinned() {
        let prior_model = PriorModel {
            odom_translation_noise_sigma: 0.0,
            yaw_drift_per_scan: 0.01,
            rollpitch_noise_sigma: 0.0,
        };
        let frames = corridor_frames(20, prior_model, 7);
        let run = run_sequence(
            frames.iter().map(|f| (&f.scan, f.prior, f.stamp)),
            &mapper_config(),
        )
        .unwrap();
        for (entry, frame) in run.trajectory().entries().iter().zip(frames.iter()) {
            let ez = entry.pose.translation().z - frame.truth.translation().z;
            assert!(ez.abs() <= 1e-2, "z error {ez} above 1 cm");
        }
    }

    #[test]
    fn mapping_is_deterministic() {
        let frames = corridor_frames(8, PriorModel::default(), 8);
        let run = |seed: u64| {
            // Subsampling keeps the seed relevant.
            let config = MapperConfig {
                seed,
                scan_keep_ratio: 0.7,
                ..mapper_config()
            };
            run_sequence(
                frames.iter().map(|f| (&f.scan, f.prior, f.stamp)),
                &config,
            )
            .unwrap()
        };
        let a = run(3);
        let b = run(3);
        assert_eq!(a.state.map(), b.state.map());
        assert_eq!(a.trajectory(), b.trajectory());
        let c = run(4);
        assert_ne!(a.state.map(), c.state.map());
    }

    #[test]
    fn inserted_points_respect_the_spacing_bound() {
        let frames = corridor_frames(6, PriorModel::noiseless(), 9);
        let config = mapper_config();
        let run = run_sequence(
            frames.iter().map(|f| (&f.scan, f.prior, f.stamp)),
            &config,
        )
        .unwrap();
        let bootstrap_count = run.records[0].inserted;
        let points = run.state.map().points();
        // Every post-bootstrap insertion was gated against the whole map of
        // its time, so it keeps the spacing to *all* earlier points.
        for i in bootstrap_count..points.len() {
            for j in 0..i {
                let d = points[i].distance(&points[j]);
                assert!(
                    d >= config.insertion_min_spacing,
                    "points {j},{i} violate spacing: {d}"
                );
            }
        }
    }

    #[test]
    fn empty_scan_is_a_hard_error() {
        let mut state = MapState::empty();
        let scan = PointCloud::new(vec![], "scan");
        assert!(matches!(
            process_scan(&mut state, &scan, &RigidTransform::identity(), 0.0, &mapper_config()),
            Err(Error::EmptyScan)
        ));
    }

    #[test]
    fn localize_without_reference_map_is_rejected() {
        let mut state = MapState::empty();
        let scan = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)], "scan");
        let config = MapperConfig {
            localize_only: true,
            ..mapper_config()
        };
        assert!(matches!(
            process_scan(&mut state, &scan, &RigidTransform::identity(), 0.0, &config),
            Err(Error::EmptyReferenceCloud)
        ));
    }

    #[test]
    fn registration_failure_falls_back_to_the_prior() {
        // A scan displaced far beyond the matching gate cannot register.
        let frames = corridor_frames(2, PriorModel::noiseless(), 10);
        let config = mapper_config();
        let mut state = MapState::empty();
        process_scan(&mut state, &frames[0].scan, &frames[0].prior, 0.0, &config).unwrap();

        let bad_prior = RigidTransform::from_euler(
            0.0,
            0.0,
            0.0,
            frames[1].truth.translation() + Vector3::new(0.0, 0.0, 50.0),
        );
        let before = state.map().clone();
        let record = process_scan(&mut state, &frames[1].scan, &bad_prior, 0.1, &config).unwrap();
        assert!(matches!(record.event, ScanEvent::Failed(_)));
        assert_eq!(record.pose, bad_prior);
        assert_eq!(record.inserted, 0);
        assert_eq!(*state.map(), before);
        assert_eq!(state.trajectory().len(), 2);
    }
}
