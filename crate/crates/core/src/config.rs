//! Flat `section.key = value` pipeline configuration with defaults, file
//! loading, and command-line overrides. Unknown keys are rejected.

use std::path::Path;

use crate::classify::ClassifyConfig;
use crate::error::{Error, Result};
use crate::normals::NormalConfig;
use crate::range_image::ProjectionConfig;
use crate::registration::RegistrationParams;
use crate::scan_context::ScanContextConfig;

#[derive(Clone, Debug)]
pub struct MapConfig {
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    pub max_map_range: f64,
}

#[derive(Clone, Debug)]
pub struct GraphConfig {
    pub max_iterations: usize,
    pub convergence_eps: f64,
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub max_dt: f64,
    pub rpe_delta: usize,
    pub align: bool,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub proj: ProjectionConfig,
    pub normals: NormalConfig,
    pub classify: ClassifyConfig,
    pub map: MapConfig,
    pub icp: RegistrationParams,
    pub sc: ScanContextConfig,
    pub graph: GraphConfig,
    pub eval: EvalConfig,
    pub loop_closure_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            proj: ProjectionConfig {
                width: 1024,
                height: 64,
                theta_min: -std::f64::consts::PI,
                theta_max: std::f64::consts::PI,
                phi_min: -25.0_f64.to_radians(),
                phi_max: 15.0_f64.to_radians(),
                r_min: 0.3,
                r_max: 80.0,
            },
            normals: NormalConfig::default(),
            classify: ClassifyConfig::default(),
            map: MapConfig {
                voxel_size: 0.5,
                max_points_per_voxel: 20,
                max_map_range: 100.0,
            },
            icp: RegistrationParams::default(),
            sc: ScanContextConfig::default(),
            graph: GraphConfig {
                max_iterations: 50,
                convergence_eps: 1e-9,
            },
            eval: EvalConfig {
                max_dt: 0.02,
                rpe_delta: 1,
                align: true,
            },
            loop_closure_enabled: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Config(format!(
            "invalid boolean {other:?} for key {key}"
        ))),
    }
}

impl PipelineConfig {
    /// Applies one `section.key = value` assignment. Unknown keys error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "proj.width" => self.proj.width = parse_num(key, value)?,
            "proj.height" => self.proj.height = parse_num(key, value)?,
            "proj.fov_up_deg" => self.proj.phi_max = parse_num::<f64>(key, value)?.to_radians(),
            "proj.fov_down_deg" => self.proj.phi_min = parse_num::<f64>(key, value)?.to_radians(),
            "proj.range_min" => self.proj.r_min = parse_num(key, value)?,
            "proj.range_max" => self.proj.r_max = parse_num(key, value)?,
            "normals.discontinuity_abs" => self.normals.discontinuity_abs = parse_num(key, value)?,
            "normals.discontinuity_rel" => self.normals.discontinuity_rel = parse_num(key, value)?,
            "classify.edge_angle_rad" => self.classify.edge_angle_rad = parse_num(key, value)?,
            "classify.majority_fraction" => {
                self.classify.majority_fraction = parse_num(key, value)?
            }
            "map.voxel_size" => self.map.voxel_size = parse_num(key, value)?,
            "map.max_points_per_voxel" => self.map.max_points_per_voxel = parse_num(key, value)?,
            "map.max_map_range" => self.map.max_map_range = parse_num(key, value)?,
            "icp.max_iterations" => self.icp.max_iterations = parse_num(key, value)?,
            "icp.convergence_eps" => self.icp.convergence_eps = parse_num(key, value)?,
            "icp.max_dist" => self.icp.max_dist = parse_num(key, value)?,
            "icp.alpha_min" => self.icp.alpha_min = parse_num(key, value)?,
            "icp.alpha_max" => self.icp.alpha_max = parse_num(key, value)?,
            "icp.lm_damping" => self.icp.lm_damping = parse_num(key, value)?,
            "icp.degeneracy_weights" => self.icp.degeneracy_weights = parse_bool(key, value)?,
            // Negative disables the override (adaptive blend).
            "icp.fixed_alpha" => {
                let a: f64 = parse_num(key, value)?;
                self.icp.fixed_alpha = if a < 0.0 { None } else { Some(a) };
            }
            "sc.n_ring" => self.sc.n_ring = parse_num(key, value)?,
            "sc.n_sector" => self.sc.n_sector = parse_num(key, value)?,
            "sc.max_radius" => self.sc.max_radius = parse_num(key, value)?,
            "sc.num_candidates" => self.sc.num_candidates = parse_num(key, value)?,
            "sc.accept_threshold" => self.sc.accept_threshold = parse_num(key, value)?,
            "sc.exclusion_window" => self.sc.exclusion_window = parse_num(key, value)?,
            "sc.keyframe_every" => self.sc.keyframe_every = parse_num(key, value)?,
            "sc.keyframe_dist" => self.sc.keyframe_dist = parse_num(key, value)?,
            "graph.max_iterations" => self.graph.max_iterations = parse_num(key, value)?,
            "graph.convergence_eps" => self.graph.convergence_eps = parse_num(key, value)?,
            "eval.max_dt" => self.eval.max_dt = parse_num(key, value)?,
            "eval.rpe_delta" => self.eval.rpe_delta = parse_num(key, value)?,
            "eval.align" => self.eval.align = parse_bool(key, value)?,
            "loop_closure.enabled" => self.loop_closure_enabled = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", ln + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut config = PipelineConfig::default();
        config.apply_text(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.proj.validate()?;
        self.icp.validate()?;
        if !(self.map.voxel_size > 0.0) {
            return Err(Error::Config("map.voxel_size must be positive".into()));
        }
        if self.map.max_points_per_voxel == 0 {
            return Err(Error::Config("map.max_points_per_voxel must be positive".into()));
        }
        if !(self.map.max_map_range > 0.0) {
            return Err(Error::Config("map.max_map_range must be positive".into()));
        }
        if self.sc.n_ring == 0 || self.sc.n_sector == 0 || !(self.sc.max_radius > 0.0) {
            return Err(Error::Config("sc grid must be non-empty with positive radius".into()));
        }
        if !(self.eval.max_dt > 0.0) || self.eval.rpe_delta == 0 {
            return Err(Error::Config("eval.max_dt and eval.rpe_delta must be positive".into()));
        }
        if !(self.classify.edge_angle_rad > 0.0)
            || !(self.classify.majority_fraction > 0.0 && self.classify.majority_fraction <= 1.0)
        {
            return Err(Error::Config("classify thresholds out of range".into()));
        }
        Ok(())
    }
}
