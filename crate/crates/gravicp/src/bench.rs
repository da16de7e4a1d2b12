//! The synthetic drift benchmark: paired 4-DOF / 6-DOF mapping runs over
//! identical inputs, per-seed, reporting vertical drift and normalized error
//! quartiles for both modes.
//!
//! Both modes see exactly the same scans and the same noisy priors; the only
//! difference is the minimizer parameterization. The 6-DOF baseline
//! re-estimates roll and pitch from the data each scan, so its attitude
//! errors feed back into the map and compound; the 4-DOF variant holds the
//! gravity-observable angles at the prior values, which bounds them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{associate, compute_ate, AteReport};
use crate::icp::IcpMode;
use crate::io::write_trajectory;
use crate::mapper::{run_sequence, MapperConfig, ScanEvent};
use crate::synth::{generate_sequence, PathSpec, PriorModel, ScanFrame, Scene, SensorModel};
use crate::trajectory::Trajectory;

/// Everything needed to reproduce one benchmark: world, path, sensor, prior
/// corruption, and the mapper configuration (whose mode is overridden per
/// run).
#[derive(Debug, Clone)]
pub struct DriftScenario {
    pub scene: Scene,
    pub path: PathSpec,
    pub sensor: SensorModel,
    pub prior_model: PriorModel,
    pub n_scans: usize,
    pub mapper: MapperConfig,
}

impl Default for DriftScenario {
    fn default() -> Self {
        let mut mapper = MapperConfig::default();
        mapper.insertion_min_spacing = 0.15;
        mapper.scan_keep_ratio = 0.5;
        DriftScenario {
            scene: Scene::tunnel(110.0, 6.0, 4.0),
            path: PathSpec {
                start: nalgebra::Vector3::new(1.0, 0.0, 1.4),
                yaw: 0.0,
                step: 0.5,
            },
            sensor: SensorModel::default(),
            prior_model: PriorModel::default(),
            n_scans: 200,
            mapper,
        }
    }
}

/// One mapping run of one mode on one seed.
#[derive(Debug, Clone)]
pub struct ModeOutcome {
    pub mode: IcpMode,
    pub trajectory: Trajectory,
    pub ate: AteReport,
    pub final_abs_ez: f64,
    pub failed_scans: usize,
    /// Largest deviation of estimated roll or pitch from the prior's,
    /// radians. Zero (to rounding) in 4-DOF mode by construction.
    pub max_rollpitch_dev: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub truth: Trajectory,
    pub four_dof: ModeOutcome,
    pub six_dof: ModeOutcome,
}

#[derive(Debug, Clone)]
pub struct DriftReport {
    pub runs: Vec<SeedRun>,
    pub median_final_ez_four: f64,
    pub median_final_ez_six: f64,
    /// Seeds where 4-DOF ended with strictly smaller |e_z|.
    pub four_dof_wins: usize,
}

pub fn run_drift_benchmark(scenario: &DriftScenario, seeds: &[u64]) -> Result<DriftReport> {
    if seeds.is_empty() {
        return Err(Error::param("at least one seed required"));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let frames = generate_sequence(
            &scenario.scene,
            &scenario.path,
            &scenario.sensor,
            &scenario.prior_model,
            scenario.n_scans,
            seed,
        )?;
        let mut truth = Trajectory::new();
        for f in &frames {
            truth.push(f.stamp, f.truth)?;
        }
        let four_dof = run_mode(scenario, &frames, &truth, IcpMode::FourDof, seed)?;
        let six_dof = run_mode(scenario, &frames, &truth, IcpMode::SixDof, seed)?;
        runs.push(SeedRun { seed, truth, four_dof, six_dof });
    }

    let ez_four: Vec<f64> = runs.iter().map(|r| r.four_dof.final_abs_ez).collect();
    let ez_six: Vec<f64> = runs.iter().map(|r| r.six_dof.final_abs_ez).collect();
    let four_dof_wins = runs
        .iter()
        .filter(|r| r.four_dof.final_abs_ez < r.six_dof.final_abs_ez)
        .count();
    Ok(DriftReport {
        runs,
        median_final_ez_four: median(ez_four),
        median_final_ez_six: median(ez_six),
        four_dof_wins,
    })
}

fn run_mode(
    scenario: &DriftScenario,
    frames: &[ScanFrame],
    truth: &Trajectory,
    mode: IcpMode,
    seed: u64,
) -> Result<ModeOutcome> {
    let mut config = scenario.mapper;
    config.icp.mode = mode;
    config.seed = seed;
    let run = run_sequence(frames.iter().map(|f| (&f.scan, f.prior, f.stamp)), &config)?;

    let mut max_rollpitch_dev = 0.0f64;
    for (record, frame) in run.records.iter().zip(frames) {
        let (er, ep, _) = record.pose.euler_angles();
        let (pr, pp, _) = frame.prior.euler_angles();
        max_rollpitch_dev = max_rollpitch_dev
            .max((er - pr).abs())
            .max((ep - pp).abs());
    }
    let failed_scans = run
        .records
        .iter()
        .filter(|r| matches!(r.event, ScanEvent::Failed(_)))
        .count();

    let trajectory = run.trajectory().clone();
    let pairs = associate(&trajectory, truth, 1e-6)?;
    let ate = compute_ate(&pairs, false)?;
    Ok(ModeOutcome {
        mode,
        final_abs_ez: ate.final_abs_z(),
        failed_scans,
        max_rollpitch_dev,
        trajectory,
        ate,
    })
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl DriftReport {
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed  final|e_z| 4dof  final|e_z| 6dof  norm-ATE 4dof (q1|med|q3)%  norm-ATE 6dof (q1|med|q3)%  failures 4/6"
        );
        for run in &self.runs {
            let q4 = run.four_dof.ate.quartiles_normalized;
            let q6 = run.six_dof.ate.quartiles_normalized;
            let _ = writeln!(
                out,
                "{:>4}  {:>15.4} {:>16.4}  ({:.2}|{:.2}|{:.2})           ({:.2}|{:.2}|{:.2})           {}/{}",
                run.seed,
                run.four_dof.final_abs_ez,
                run.six_dof.final_abs_ez,
                q4.q1,
                q4.median,
                q4.q3,
                q6.q1,
                q6.median,
                q6.q3,
                run.four_dof.failed_scans,
                run.six_dof.failed_scans,
            );
        }
        let _ = writeln!(
            out,
            "median final |e_z|: 4dof {:.4} m, 6dof {:.4} m (ratio {:.3})",
            self.median_final_ez_four,
            self.median_final_ez_six,
            if self.median_final_ez_six > 0.0 {
                self.median_final_ez_four / self.median_final_ez_six
            } else {
                f64::NAN
            }
        );
        let _ = writeln!(
            out,
            "4dof wins on final |e_z| in {}/{} seeds",
            self.four_dof_wins,
            self.runs.len()
        );
        out
    }

    /// Writes trajectories, ATE series and the summary into `dir`:
    /// `truth_seed<N>.txt`, `est_{4dof,6dof}_seed<N>.txt`,
    /// `ate_{4dof,6dof}_seed<N>.txt`, and `report.txt`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(Error::Io)?;
        for run in &self.runs {
            write_trajectory(&run.truth, dir.join(format!("truth_seed{}.txt", run.seed)))?;
            for outcome in [&run.four_dof, &run.six_dof] {
                let tag = match outcome.mode {
                    IcpMode::FourDof => "4dof",
                    IcpMode::SixDof => "6dof",
                };
                write_trajectory(
                    &outcome.trajectory,
                    dir.join(format!("est_{tag}_seed{}.txt", run.seed)),
                )?;
                fs::write(
                    dir.join(format!("ate_{tag}_seed{}.txt", run.seed)),
                    outcome.ate.series_text(),
                )
                .map_err(Error::Io)?;
            }
        }
        fs::write(dir.join("report.txt"), self.summary_text()).map_err(Error::Io)?;
        Ok(())
    }
}
