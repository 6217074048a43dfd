//! Run configuration: TOML schema, defaults and builders.
//!
//! Every key is optional. Defaults reproduce the table-wiping parameter row
//! (Exp. 1); the shipped files under `scenarios/` override what differs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{ufic, ControllerKind, DsController, DsParams, LpfController, LpfParams};
use crate::controller::{Controller, GainSet, TankMode, UnifiedConfig, UnifiedController};
use crate::error::ConfigError;
use crate::passivity::{AuditTolerance, StorageModel};
use crate::plant::{EnvironmentModel, HumanScript, PlantModel, Segment};
use crate::scenarios::{ReferenceParams, Task};
use crate::tanks::{ChamberThresholds, TankParams};

/// One row of the experimental parameter table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableParameters {
    /// Desired contact force along z [N].
    pub f_dz: f64,
    /// Force valve rate while draining [W].
    pub p_vf: f64,
    /// Impedance valve rate while draining [W].
    pub p_vi: f64,
    /// Interactive chamber budgets [J].
    pub ie_f: f64,
    pub ie_i: f64,
    /// Total tank budgets [J].
    pub te_f: f64,
    pub te_i: f64,
    /// Chamber loading times [s].
    pub t_lf: f64,
    pub t_li: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Translational [N/m] and rotational [N·m/rad] stiffness.
    pub ks_t: f64,
    pub ks_r: f64,
    /// Translational [N·s/m] and rotational [N·m·s/rad] damping.
    pub dd_t: f64,
    pub dd_r: f64,
}

impl Default for TableParameters {
    fn default() -> Self {
        Self {
            f_dz: -10.0,
            p_vf: 0.03,
            p_vi: 0.01,
            ie_f: 0.1,
            ie_i: 0.1,
            te_f: 1.0,
            te_i: 1.0,
            t_lf: 2.0,
            t_li: 2.0,
            kp: 2.0,
            ki: 2.0,
            kd: 0.02,
            ks_t: 800.0,
            ks_r: 25.0,
            dd_t: 300.0,
            dd_r: 3.0,
        }
    }
}

/// Threshold placement and damping-law constants shared by both tanks.
/// Thresholds are fractions of the respective chamber budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TankShape {
    pub total_lower: f64,
    pub total_soft: f64,
    pub total_hard: f64,
    pub inter_lower: f64,
    pub inter_soft: f64,
    pub inter_hard: f64,
    pub p_drain: f64,
    pub p_recover: f64,
    pub epsilon: f64,
    pub z_min: f64,
}

impl Default for TankShape {
    fn default() -> Self {
        Self {
            total_lower: 0.0,
            total_soft: 0.2,
            total_hard: 0.8,
            inter_lower: 0.0,
            inter_soft: 0.2,
            inter_hard: 1.0,
            p_drain: 1.0,
            p_recover: 10.0,
            epsilon: 1e-4,
            z_min: 1e-2,
        }
    }
}

impl TankShape {
    pub fn build(
        &self,
        total_upper: f64,
        inter_upper: f64,
        valve_drain: f64,
        t_load: f64,
    ) -> Result<TankParams, ConfigError> {
        let params = TankParams {
            total_upper,
            inter_upper,
            total: ChamberThresholds::fractions(
                total_upper,
                self.total_lower,
                self.total_soft,
                self.total_hard,
            )?,
            inter: ChamberThresholds::fractions(
                inter_upper,
                self.inter_lower,
                self.inter_soft,
                self.inter_hard,
            )?,
            valve_drain,
            t_load,
            p_drain: self.p_drain,
            p_recover: self.p_recover,
            epsilon: self.epsilon,
            z_min: self.z_min,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcePidConfig {
    /// Bound on each component of the integral action [N].
    pub windup: f64,
    /// Error-rate filter cutoff [Hz].
    pub rate_cutoff: f64,
}

impl Default for ForcePidConfig {
    fn default() -> Self {
        Self {
            windup: 50.0,
            rate_cutoff: 50.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub mass: f64,
    pub rotational_inertia: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            mass: 10.0,
            rotational_inertia: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UficConfig {
    /// Budget of each UFIC tank [J].
    pub budget: f64,
}

impl Default for UficConfig {
    fn default() -> Self {
        Self { budget: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub task: Task,
    /// Reference amplitude [m]; task default when absent.
    pub amplitude: Option<f64>,
    /// Reference frequency [Hz]; task default when absent.
    pub frequency: Option<f64>,
    pub surface_height: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            task: Task::Wiping,
            amplitude: None,
            frequency: None,
            surface_height: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanConfig {
    /// Number of copies of `segments`, each shifted by `period`.
    pub repeat: usize,
    pub period: f64,
    pub segments: Vec<Segment>,
}

impl HumanConfig {
    pub fn script(&self) -> Result<HumanScript, ConfigError> {
        let base = HumanScript::new(self.segments.clone())?;
        if self.repeat > 1 {
            Ok(base.repeated(self.repeat, self.period)?)
        } else {
            Ok(base)
        }
    }
}

/// Measurement noise on the external wrench seen by the controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Standard deviation of force components [N].
    pub force_std: f64,
    /// Standard deviation of moment components [N·m].
    pub moment_std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            force_std: 0.2,
            moment_std: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Human work after which interaction efficiency is reported [J].
    pub work_target: f64,
    /// Time window for peak contact force and speed [s].
    pub window: Option<[f64; 2]>,
    /// Contact force considered unsafe [N].
    pub safety_bound: Option<f64>,
    pub audit_absolute: f64,
    pub audit_rate: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let tol = AuditTolerance::default();
        Self {
            work_target: 10.0,
            window: None,
            safety_bound: None,
            audit_absolute: tol.absolute,
            audit_rate: tol.rate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TelemetryConfig {
    /// Snapshot rate of `serve` [Hz].
    pub rate: f64,
    /// Simulated seconds per wall-clock second.
    pub realtime_factor: f64,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self {
            rate: 30.0,
            realtime_factor: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub name: String,
    pub controller: ControllerKind,
    /// Control period [s].
    pub dt: f64,
    /// Simulated time [s].
    pub duration: f64,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    /// Replaces the task's default contact model.
    pub environment: Option<EnvironmentModel>,
    pub human: HumanConfig,
    pub parameters: TableParameters,
    pub tanks: TankShape,
    pub pid: ForcePidConfig,
    pub plant: PlantConfig,
    pub ufic: UficConfig,
    pub lpf: LpfParams,
    pub ds: DsParams,
    pub noise: NoiseConfig,
    pub metrics: MetricsConfig,
    pub output: OutputConfig,
    pub telemetry: TelemetryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            controller: ControllerKind::Ific,
            dt: 1e-3,
            duration: 150.0,
            seed: 0,
            scenario: ScenarioConfig::default(),
            environment: None,
            human: HumanConfig::default(),
            parameters: TableParameters::default(),
            tanks: TankShape::default(),
            pid: ForcePidConfig::default(),
            plant: PlantConfig::default(),
            ufic: UficConfig::default(),
            lpf: LpfParams::default(),
            ds: DsParams::default(),
            noise: NoiseConfig::default(),
            metrics: MetricsConfig::default(),
            output: OutputConfig::default(),
            telemetry: TelemetryConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        if !(self.plant.mass > 0.0 && self.plant.rotational_inertia > 0.0) {
            return Err(ConfigError::Invalid("plant inertia must be positive".into()));
        }
        if !(self.telemetry.rate > 0.0 && self.telemetry.realtime_factor > 0.0) {
            return Err(ConfigError::Invalid(
                "telemetry rate and realtime factor must be positive".into(),
            ));
        }
        if !(self.noise.force_std >= 0.0 && self.noise.moment_std >= 0.0) {
            return Err(ConfigError::Invalid("noise deviations must be non-negative".into()));
        }
        if !(self.ufic.budget > 0.0) {
            return Err(ConfigError::Invalid("ufic budget must be positive".into()));
        }
        let reference = self.reference_params();
        if !(reference.amplitude >= 0.0 && reference.frequency >= 0.0) {
            return Err(ConfigError::Invalid(
                "reference amplitude and frequency must be non-negative".into(),
            ));
        }
        self.environment().validate()?;
        self.force_tank()?;
        self.impedance_tank()?;
        self.human.script()?;
        self.lpf.validate()?;
        self.ds.validate()?;
        Ok(())
    }

    pub fn gains(&self) -> GainSet {
        let p = &self.parameters;
        let mut gains = GainSet::diagonal(p.kp, p.ki, p.kd, (p.ks_t, p.ks_r), (p.dd_t, p.dd_r));
        gains.windup = self.pid.windup;
        gains.rate_cutoff = self.pid.rate_cutoff;
        gains
    }

    pub fn force_tank(&self) -> Result<TankParams, ConfigError> {
        let p = &self.parameters;
        self.tanks.build(p.te_f, p.ie_f, p.p_vf, p.t_lf)
    }

    pub fn impedance_tank(&self) -> Result<TankParams, ConfigError> {
        let p = &self.parameters;
        self.tanks.build(p.te_i, p.ie_i, p.p_vi, p.t_li)
    }

    pub fn plant_model(&self) -> PlantModel {
        PlantModel::diagonal(self.plant.mass, self.plant.rotational_inertia)
            .expect("validated positive inertia")
    }

    pub fn storage_model(&self) -> StorageModel {
        StorageModel {
            inertia: self.plant_model().inertia,
            stiffness: self.gains().stiffness,
        }
    }

    pub fn audit_tolerance(&self) -> AuditTolerance {
        AuditTolerance {
            absolute: self.metrics.audit_absolute,
            rate: self.metrics.audit_rate,
            ..AuditTolerance::default()
        }
    }

    pub fn environment(&self) -> EnvironmentModel {
        let mut env = self.environment.unwrap_or(match self.scenario.task {
            Task::Wiping => EnvironmentModel::table(),
            Task::UltrasoundPhantom => EnvironmentModel::phantom(),
            Task::UltrasoundArm => EnvironmentModel::arm(),
        });
        if self.environment.is_none() {
            env.surface_height = self.scenario.surface_height;
        }
        env
    }

    pub fn reference_params(&self) -> ReferenceParams {
        let defaults = ReferenceParams::for_task(self.scenario.task);
        ReferenceParams {
            amplitude: self.scenario.amplitude.unwrap_or(defaults.amplitude),
            frequency: self.scenario.frequency.unwrap_or(defaults.frequency),
            force_z: self.parameters.f_dz,
            surface_height: self.environment().surface_height,
        }
    }

    /// Force and impedance tank parameters used by `kind`. UFIC replaces both
    /// total budgets with its own.
    pub fn tank_params_for(&self, kind: ControllerKind) -> Result<(TankParams, TankParams), ConfigError> {
        if kind != ControllerKind::Ufic {
            return Ok((self.force_tank()?, self.impedance_tank()?));
        }
        let p = &self.parameters;
        let budget = self.ufic.budget;
        Ok((
            self.tanks.build(budget, p.ie_f.min(budget), p.p_vf, p.t_lf)?,
            self.tanks.build(budget, p.ie_i.min(budget), p.p_vi, p.t_li)?,
        ))
    }

    /// Builds the selected controller.
    pub fn build_controller(
        &self,
        kind: ControllerKind,
    ) -> Result<Box<dyn Controller + Send>, ConfigError> {
        let gains = self.gains();
        let (force_tank, impedance_tank) = self.tank_params_for(kind)?;
        Ok(match kind {
            ControllerKind::Ific => Box::new(UnifiedController::new(UnifiedConfig {
                gains,
                force_tank,
                impedance_tank,
                mode: TankMode::Interactive,
            })?),
            ControllerKind::Ufic => Box::new(ufic(gains, force_tank, impedance_tank)?),
            ControllerKind::Lpf => Box::new(LpfController::new(gains, self.lpf)?),
            ControllerKind::Ds => Box::new(DsController::new(gains, self.ds)?),
        })
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml_str(&text)
}
