//! Experiment configuration: one TOML file describes the scenario, the
//! algorithm variant and constants, the stopping rule, and the optional
//! sweep / calibration-study / formation sections the subcommands read.

use crate::error::{Error, Result};
use crate::formation::{FormationParams, TargetShape};
use crate::optical::{NoiseKind, OpticalParams, SensorModel};
use crate::swarm::{AttenuationLaw, ChannelModel, ScenarioKind, ScenarioSpec};
use crate::vec2::Vec2;
use crate::vpe::{ConvergenceCriterion, RunBudget, Variant, VpeParams};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

/// Which pipeline runs the localization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VariantChoice {
    #[default]
    Matrix,
    Optical,
}

impl FromStr for VariantChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "matrix" => Ok(VariantChoice::Matrix),
            "optical" => Ok(VariantChoice::Optical),
            other => Err(format!("unknown variant `{other}` (matrix|optical)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Span proxy: robot count for lines, sqrt of robot count in 2D.
    #[serde(default)]
    pub size_factor: Option<f64>,
    /// Exact robot count (alternative to size_factor for planar kinds).
    #[serde(default)]
    pub robots: Option<usize>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_law")]
    pub law: AttenuationLaw,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
    /// Defaults to the spacing.
    #[serde(default)]
    pub reference_distance: Option<f64>,
    /// Result-extraction scale; defaults to the attenuation-weighted mean
    /// pairwise distance.
    #[serde(default)]
    pub r0: Option<f64>,
}

fn default_spacing() -> f64 {
    1.0
}
fn default_law() -> AttenuationLaw {
    AttenuationLaw::InverseSquare
}
fn default_max_range() -> f64 {
    2.5
}

impl ScenarioConfig {
    pub fn size_factor(&self) -> Result<f64> {
        match (self.size_factor, self.robots) {
            (Some(sf), None) => Ok(sf),
            (None, Some(n)) => Ok(match self.kind {
                ScenarioKind::Line => n as f64,
                _ => ((n as f64) - 0.5).max(4.0).sqrt(),
            }),
            (Some(_), Some(_)) => Err(Error::InvalidParameter(
                "set either scenario.size_factor or scenario.robots, not both".into(),
            )),
            (None, None) => Err(Error::InvalidParameter(
                "scenario needs size_factor or robots".into(),
            )),
        }
    }

    pub fn channel(&self) -> Result<ChannelModel> {
        ChannelModel::new(
            self.law,
            self.max_range,
            self.reference_distance.unwrap_or(self.spacing),
        )
    }

    pub fn to_spec(&self) -> Result<ScenarioSpec> {
        Ok(ScenarioSpec {
            kind: self.kind,
            size_factor: self.size_factor()?,
            spacing: self.spacing,
            channel: self.channel()?,
            seed: self.seed,
            r0_override: self.r0,
        })
    }

    /// Same recipe with a different size factor / range / seed, used by the
    /// sweep commands.
    pub fn spec_with(&self, size_factor: f64, max_range: f64, seed: u64) -> Result<ScenarioSpec> {
        let mut spec = self.to_spec()?;
        spec.size_factor = size_factor;
        spec.channel = ChannelModel::new(
            self.law,
            max_range,
            self.reference_distance.unwrap_or(self.spacing),
        )?;
        spec.seed = seed;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VpeConfig {
    #[serde(default = "d_k")]
    pub k: f64,
    #[serde(default = "d_k0")]
    pub k0: f64,
    #[serde(default = "d_k1")]
    pub k1: f64,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "d_normalize_every")]
    pub normalize_every: u64,
    #[serde(default = "d_max_iterations")]
    pub max_iterations: u64,
}

fn d_k() -> f64 {
    0.15
}
fn d_k0() -> f64 {
    0.05
}
fn d_k1() -> f64 {
    0.05
}
fn d_normalize_every() -> u64 {
    20
}
fn d_max_iterations() -> u64 {
    200_000
}

impl Default for VpeConfig {
    fn default() -> Self {
        VpeConfig {
            k: d_k(),
            k0: d_k0(),
            k1: d_k1(),
            variant: Variant::UnitDirection,
            normalize_every: d_normalize_every(),
            max_iterations: d_max_iterations(),
        }
    }
}

impl VpeConfig {
    pub fn params(&self) -> VpeParams {
        VpeParams {
            k: self.k,
            k0: self.k0,
            k1: self.k1,
            variant: self.variant,
            normalize_every: self.normalize_every,
            beacons: Vec::new(),
        }
    }

    pub fn budget(&self) -> RunBudget {
        RunBudget {
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    /// Maximum discrepancy against the spectral-oracle equilibrium.
    #[default]
    Oracle,
    /// Oracle-free sliding-window variation of the translated result.
    Window,
    /// Fixed round count.
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default)]
    pub kind: StopKind,
    /// Oracle tolerance in length units.
    #[serde(default = "d_tolerance")]
    pub tolerance: f64,
    #[serde(default = "d_window")]
    pub window: u64,
    /// Window tolerance as a fraction of r0.
    #[serde(default = "d_window_tol_r0")]
    pub window_tol_r0: f64,
    /// Round count of the fixed-length stop.
    #[serde(default = "d_fixed_iterations")]
    pub iterations: u64,
}

fn d_tolerance() -> f64 {
    0.1
}
fn d_window() -> u64 {
    200
}
fn d_window_tol_r0() -> f64 {
    0.1
}
fn d_fixed_iterations() -> u64 {
    2000
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            kind: StopKind::Oracle,
            tolerance: d_tolerance(),
            window: d_window(),
            window_tol_r0: d_window_tol_r0(),
            iterations: d_fixed_iterations(),
        }
    }
}

impl StopConfig {
    pub fn criterion(&self, r0: f64) -> ConvergenceCriterion {
        match self.kind {
            StopKind::Oracle => ConvergenceCriterion::OracleTolerance {
                tol: self.tolerance,
            },
            StopKind::Window => ConvergenceCriterion::SlidingWindow {
                window: self.window,
                tol: self.window_tol_r0 * r0,
            },
            StopKind::Fixed => ConvergenceCriterion::FixedIterations {
                iterations: self.iterations,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub fraction: f64,
    pub bias_plus: f64,
    pub bias_minus: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            kind: NoiseKind::None,
            fraction: 0.0,
            bias_plus: 0.0,
            bias_minus: 0.0,
            seed: 7,
        }
    }
}

impl NoiseConfig {
    pub fn sensor_model(&self) -> SensorModel {
        SensorModel {
            noise: self.kind,
            noise_fraction: self.fraction,
            bias_plus: self.bias_plus,
            bias_minus: self.bias_minus,
            rng_seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k: f64,
    pub recalibrate_c_every_round: bool,
    pub calibrate_every: u64,
    pub exact_calibration: bool,
    pub calibration_rounds: u64,
    pub skip_probability: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        let p = OpticalParams::default();
        OpticalConfig {
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            k4: p.k4,
            k: p.k,
            recalibrate_c_every_round: p.recalibrate_c_every_round,
            calibrate_every: p.calibrate_every,
            exact_calibration: p.exact_calibration,
            calibration_rounds: p.calibration_rounds,
            skip_probability: p.skip_probability,
        }
    }
}

impl OpticalConfig {
    pub fn params(&self) -> OpticalParams {
        OpticalParams {
            k1: self.k1,
            k2: self.k2,
            k3: self.k3,
            k4: self.k4,
            k: self.k,
            recalibrate_c_every_round: self.recalibrate_c_every_round,
            calibrate_every: self.calibrate_every,
            exact_calibration: self.exact_calibration,
            calibration_rounds: self.calibration_rounds,
            skip_probability: self.skip_probability,
        }
    }
}

/// How the sweep picks r0 per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepR0Rule {
    /// (floor(max_range) + 1) / 2 per line scenario, the value the line
    /// experiments quote.
    #[default]
    PaperLine,
    /// Whatever the scenario config says (explicit r0 or weighted mean).
    Config,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub size_factors: Vec<f64>,
    #[serde(default)]
    pub max_ranges: Vec<f64>,
    #[serde(default = "d_seeds_per_point")]
    pub seeds_per_point: u64,
    #[serde(default = "d_true")]
    pub optimize_r0: bool,
    #[serde(default)]
    pub r0_rule: SweepR0Rule,
}

fn d_seeds_per_point() -> u64 {
    10
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationStudyConfig {
    pub iterations: u64,
    pub warmup: u64,
    /// Pass bound for the calibrated run, as a fraction of r0.
    pub drift_threshold_r0: f64,
}

impl Default for CalibrationStudyConfig {
    fn default() -> Self {
        CalibrationStudyConfig {
            iterations: 2000,
            warmup: 400,
            drift_threshold_r0: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeChoice {
    #[default]
    Triangle,
    LetterK,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationConfig {
    pub shape: ShapeChoice,
    /// Vertices of a custom target polygon.
    pub vertices: Vec<[f64; 2]>,
    /// Target area as a multiple of robots * spacing^2.
    pub area_factor: f64,
    /// Absolute target area; overrides area_factor.
    pub area: Option<f64>,
    pub steps: usize,
    pub snapshot_every: usize,
    pub c1: f64,
    pub c2: f64,
    pub i0: f64,
    pub k_prime: f64,
    pub c3: f64,
    pub c4: f64,
    pub step_cap: f64,
    pub initial_loc_iters: u64,
    pub reloc_iters: u64,
}

impl Default for FormationConfig {
    fn default() -> Self {
        let p = FormationParams::default();
        FormationConfig {
            shape: ShapeChoice::Triangle,
            vertices: Vec::new(),
            area_factor: 1.0,
            area: None,
            steps: 250,
            snapshot_every: 50,
            c1: p.c1,
            c2: p.c2,
            i0: p.i0,
            k_prime: p.k_prime,
            c3: p.c3,
            c4: p.c4,
            step_cap: p.step_cap,
            initial_loc_iters: p.initial_loc_iters,
            reloc_iters: p.reloc_iters,
        }
    }
}

impl FormationConfig {
    pub fn params(&self) -> FormationParams {
        FormationParams {
            c1: self.c1,
            c2: self.c2,
            i0: self.i0,
            k_prime: self.k_prime,
            c3: self.c3,
            c4: self.c4,
            step_cap: self.step_cap,
            initial_loc_iters: self.initial_loc_iters,
            reloc_iters: self.reloc_iters,
        }
    }

    pub fn target_shape(&self, robots: usize, spacing: f64) -> Result<TargetShape> {
        let area = self
            .area
            .unwrap_or(self.area_factor * robots as f64 * spacing * spacing);
        match self.shape {
            ShapeChoice::Triangle => TargetShape::triangle(area),
            ShapeChoice::LetterK => TargetShape::letter_k(area),
            ShapeChoice::Custom => {
                if self.vertices.len() < 3 {
                    return Err(Error::InvalidParameter(
                        "custom shape needs formation.vertices".into(),
                    ));
                }
                TargetShape::new(
                    self.vertices
                        .iter()
                        .map(|[x, y]| Vec2::new(*x, *y))
                        .collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub variant: VariantChoice,
    #[serde(default)]
    pub vpe: VpeConfig,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub optical: OpticalConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub calibration_study: Option<CalibrationStudyConfig>,
    #[serde(default)]
    pub formation: Option<FormationConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parsed configuration plus the provenance hash of the raw file bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text)
        .map_err(|e| Error::InvalidParameter(format!("config parse error: {e}")))?;
    validate(&config)?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    let config = parse_config(&text)?;
    Ok(LoadedConfig {
        config,
        hash: content_hash(text.as_bytes()),
    })
}

/// First 16 hex characters of the SHA-256 of the config bytes; embedded in
/// every output file for provenance.
pub fn content_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        use std::fmt::Write;
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Every referenced block must satisfy its module invariants before any run
/// starts.
fn validate(config: &ExperimentConfig) -> Result<()> {
    let spec = config.scenario.to_spec()?;
    if !(spec.size_factor >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "size_factor must be at least 2, got {}",
            spec.size_factor
        )));
    }
    config.vpe.params().validate()?;
    config.optical.params().validate()?;
    config.noise.sensor_model().validate()?;
    if let Some(formation) = &config.formation {
        formation.params().validate()?;
        // Shape validation needs the robot count; probe with a nominal one.
        formation.target_shape(52, config.scenario.spacing)?;
    }
    if let Some(sweep) = &config.sweep {
        if sweep.size_factors.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep.size_factors must not be empty".into(),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = parse_config(
            r#"
[scenario]
kind = "line"
size_factor = 5.0
law = "unit-within-range"
max_range = 1.5
"#,
        )
        .unwrap();
        assert_eq!(config.scenario.kind, ScenarioKind::Line);
        assert_eq!(config.vpe.normalize_every, 20);
        assert_eq!(config.stop.kind, StopKind::Oracle);
        assert!(config.sweep.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(
            r#"
[scenario]
kind = "line"
size_factor = 5.0
banana = 3
"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn robots_count_maps_to_size_factor() {
        let config = parse_config(
            r#"
[scenario]
kind = "square"
robots = 52
spacing = 0.2
max_range = 0.5
"#,
        )
        .unwrap();
        let spec = config.scenario.to_spec().unwrap();
        let scenario = spec.build().unwrap();
        assert_eq!(scenario.len(), 52);
    }

    #[test]
    fn hash_is_stable_and_short() {
        let a = content_hash(b"hello");
        let b = content_hash(b"hello");
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert_ne!(a, content_hash(b"world"));
    }
}
