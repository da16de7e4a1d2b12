//! Plain-text `key = value` configuration files: benchmark scenarios and
//! mapper settings. Unknown or duplicate keys are rejected with their line
//! number; `#` starts a comment.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::bench::DriftScenario;
use crate::error::{Error, Result};
use crate::icp::IcpMode;
use crate::mapper::MapperConfig;
use crate::synth::{Fov, Scene, SceneKind};

#[derive(Debug, Clone)]
struct KvFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl KvFile {
    fn parse(text: &str) -> Result<KvFile> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::parse(line, format!("expected 'key = value', got '{content}'")));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::parse(line, "empty key or value"));
            }
            if let Some((_, first)) = entries.insert(key.clone(), (value, line)) {
                return Err(Error::parse(
                    line,
                    format!("duplicate key '{key}' (first set at line {first})"),
                ));
            }
        }
        Ok(KvFile { entries })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("'{key}' must be a number, got '{value}'"))),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("'{key}' must be a count, got '{value}'"))),
        }
    }

    fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse::<u64>()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("'{key}' must be an integer, got '{value}'"))),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(Error::parse(line, format!("unknown key '{key}'")));
        }
        Ok(())
    }
}

/// A parsed scenario: the drift-benchmark configuration plus dataset-only
/// extras.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub drift: DriftScenario,
    /// Surface sampling density (points/m²) for the reference map written by
    /// dataset generation; 0 disables the reference map.
    pub map_density: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            drift: DriftScenario::default(),
            map_density: 0.0,
        }
    }
}

/// Parses a scenario file. Every key is optional; omitted keys keep the
/// default tunnel benchmark values.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let mut kv = KvFile::parse(text)?;
    let mut config = ScenarioConfig::default();
    let scenario = &mut config.drift;

    if let Some((value, line)) = kv.take("scene") {
        scenario.scene.kind = match value.as_str() {
            "tunnel" => SceneKind::Tunnel,
            "corridor" => SceneKind::Corridor,
            "terrain" => SceneKind::TerrainStrip,
            other => {
                return Err(Error::parse(
                    line,
                    format!("'scene' must be tunnel, corridor or terrain, got '{other}'"),
                ))
            }
        };
    }
    let scene_defaults = match scenario.scene.kind {
        SceneKind::Tunnel => Scene::tunnel(110.0, 6.0, 4.0),
        SceneKind::Corridor => Scene::corridor(110.0, 6.0, 3.0),
        SceneKind::TerrainStrip => Scene::terrain_strip(110.0, 24.0, 1.5, 18.0),
    };
    scenario.scene = scene_defaults;
    if let Some(v) = kv.take_f64("length")? {
        scenario.scene.length = v;
    }
    if let Some(v) = kv.take_f64("width")? {
        scenario.scene.width = v;
    }
    if let Some(v) = kv.take_f64("height")? {
        scenario.scene.height = v;
    }
    if let Some(v) = kv.take_f64("bulkhead_spacing")? {
        scenario.scene.bulkhead_spacing = v;
    }
    if let Some(v) = kv.take_f64("door_width")? {
        scenario.scene.door_width = v;
    }
    if let Some(v) = kv.take_f64("door_height")? {
        scenario.scene.door_height = v;
    }
    if let Some(v) = kv.take_f64("terrain_amplitude")? {
        scenario.scene.terrain_amplitude = v;
    }
    if let Some(v) = kv.take_f64("terrain_wavelength")? {
        scenario.scene.terrain_wavelength = v;
    }

    let mut start = scenario.path.start;
    if let Some(v) = kv.take_f64("start_x")? {
        start.x = v;
    }
    if let Some(v) = kv.take_f64("start_y")? {
        start.y = v;
    }
    if let Some(v) = kv.take_f64("start_z")? {
        start.z = v;
    }
    scenario.path.start = start;
    if let Some(v) = kv.take_f64("path_yaw")? {
        scenario.path.yaw = v;
    }
    if let Some(v) = kv.take_f64("step")? {
        scenario.path.step = v;
    }

    if let Some(v) = kv.take_f64("max_range")? {
        scenario.sensor.max_range = v;
    }
    if let Some(v) = kv.take_f64("range_noise_sigma")? {
        scenario.sensor.range_noise_sigma = v;
    }
    if let Some(v) = kv.take_usize("points_per_scan")? {
        scenario.sensor.points_per_scan = v;
    }
    if let Some((value, line)) = kv.take("fov") {
        scenario.sensor.fov = parse_fov(&value, line)?;
    }

    if let Some(v) = kv.take_f64("odom_noise_sigma")? {
        scenario.prior_model.odom_translation_noise_sigma = v;
    }
    if let Some(v) = kv.take_f64("yaw_drift_per_scan")? {
        scenario.prior_model.yaw_drift_per_scan = v;
    }
    if let Some(v) = kv.take_f64("rollpitch_noise_sigma")? {
        scenario.prior_model.rollpitch_noise_sigma = v;
    }

    if let Some(v) = kv.take_usize("n_scans")? {
        scenario.n_scans = v;
    }
    if let Some(v) = kv.take_f64("map_density")? {
        config.map_density = v;
    }

    apply_mapper_keys(&mut kv, &mut scenario.mapper)?;
    kv.finish()?;
    Ok(config)
}

/// Parses a mapper configuration file (the `map` / `localize` commands).
pub fn parse_mapper_config(text: &str) -> Result<MapperConfig> {
    let mut kv = KvFile::parse(text)?;
    let mut config = MapperConfig::default();
    apply_mapper_keys(&mut kv, &mut config)?;
    kv.finish()?;
    Ok(config)
}

fn apply_mapper_keys(kv: &mut KvFile, config: &mut MapperConfig) -> Result<()> {
    if let Some((value, line)) = kv.take("mode") {
        config.icp.mode = parse_mode(&value, line)?;
    }
    if let Some(v) = kv.take_usize("max_iterations")? {
        config.icp.max_iterations = v;
    }
    if let Some(v) = kv.take_f64("trans_epsilon")? {
        config.icp.trans_epsilon = v;
    }
    if let Some(v) = kv.take_f64("rot_epsilon")? {
        config.icp.rot_epsilon = v;
    }
    if let Some(v) = kv.take_f64("max_distance")? {
        config.icp.match_params.max_distance = v;
    }
    if let Some(v) = kv.take_f64("trim_ratio")? {
        config.icp.match_params.trim_ratio = v;
    }
    if let Some(v) = kv.take_f64("insertion_min_spacing")? {
        config.insertion_min_spacing = v;
    }
    if let Some(v) = kv.take_f64("scan_keep_ratio")? {
        config.scan_keep_ratio = v;
    }
    if let Some(v) = kv.take_usize("normal_k")? {
        config.normal_k = v;
    }
    if let Some(v) = kv.take_u64("seed")? {
        config.seed = v;
    }
    Ok(())
}

pub fn parse_mode(value: &str, line: usize) -> Result<IcpMode> {
    match value {
        "4dof" => Ok(IcpMode::FourDof),
        "6dof" => Ok(IcpMode::SixDof),
        other => Err(Error::parse(
            line,
            format!("'mode' must be 4dof or 6dof, got '{other}'"),
        )),
    }
}

fn parse_fov(value: &str, line: usize) -> Result<Fov> {
    if value == "full" {
        return Ok(Fov::FullSphere);
    }
    if let Some(degrees) = value.strip_prefix("cone:") {
        let degrees: f64 = degrees
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad cone angle '{degrees}'")))?;
        if !(degrees > 0.0 && degrees <= 90.0) {
            return Err(Error::parse(line, "cone angle must be in (0, 90] degrees"));
        }
        return Ok(Fov::VerticalCone {
            half_angle: degrees.to_radians(),
        });
    }
    Err(Error::parse(
        line,
        format!("'fov' must be 'full' or 'cone:<degrees>', got '{value}'"),
    ))
}
