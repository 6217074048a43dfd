//! Task references, the closed-loop simulation and trace metrics.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::ControllerKind;
use crate::config::RunConfig;
use crate::controller::{ControlContext, Controller, Reference};
use crate::error::{ConfigError, MetricError, SimulationError};
use crate::geometry::{DirectionalBasis, Rotation, Twist, Wrench};
use crate::passivity::{port_power_balance, storage_value, StorageModel};
use crate::plant::{
    plant_step, Action, EnvironmentModel, Human, PlantModel, PlantState, Segment,
};
use crate::trace::TraceRecord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Wiping,
    UltrasoundPhantom,
    UltrasoundArm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceParams {
    /// [m]
    pub amplitude: f64,
    /// [Hz]
    pub frequency: f64,
    /// Desired contact force along z [N].
    pub force_z: f64,
    pub surface_height: f64,
}

impl ReferenceParams {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Wiping => Self {
                amplitude: 0.1,
                frequency: 0.2,
                force_z: -10.0,
                surface_height: 0.0,
            },
            Task::UltrasoundPhantom | Task::UltrasoundArm => Self {
                amplitude: 0.05,
                frequency: 0.05,
                force_z: -3.0,
                surface_height: 0.0,
            },
        }
    }
}

fn contact_reference(position: [f64; 3], velocity: [f64; 3], accel: [f64; 3], force_z: f64) -> Reference {
    let pad = |v: [f64; 3]| Vector6::new(v[0], v[1], v[2], 0.0, 0.0, 0.0);
    Reference::new(
        pad(position),
        Twist(pad(velocity)),
        pad(accel),
        Wrench::new(Vector3::new(0.0, 0.0, force_z), Vector3::zeros()),
        Rotation::identity(),
    )
}

/// Planar circle-like reciprocation: `x = A sin ωt`, `y = A sin(ωt + π/2)`,
/// pressing down with `force_z`.
pub fn wiping_reference(t: f64, p: &ReferenceParams) -> Reference {
    let w = 2.0 * PI * p.frequency;
    let a = p.amplitude;
    let (sx, cx) = (w * t).sin_cos();
    let (sy, cy) = (w * t + FRAC_PI_2).sin_cos();
    contact_reference(
        [a * sx, a * sy, p.surface_height],
        [a * w * cx, a * w * cy, 0.0],
        [-a * w * w * sx, -a * w * w * sy, 0.0],
        p.force_z,
    )
}

/// Scan line along x.
pub fn ultrasound_reference(t: f64, p: &ReferenceParams) -> Reference {
    let w = 2.0 * PI * p.frequency;
    let a = p.amplitude;
    let (s, c) = (w * t).sin_cos();
    contact_reference(
        [a * s, 0.0, p.surface_height],
        [a * w * c, 0.0, 0.0],
        [-a * w * w * s, 0.0, 0.0],
        p.force_z,
    )
}

pub fn task_reference(task: Task, t: f64, p: &ReferenceParams) -> Reference {
    match task {
        Task::Wiping => wiping_reference(t, p),
        Task::UltrasoundPhantom | Task::UltrasoundArm => ultrasound_reference(t, p),
    }
}

/// Closed-loop scenario: plant, environment, scripted human and controller.
pub struct Simulation {
    config: RunConfig,
    kind: ControllerKind,
    model: PlantModel,
    environment: EnvironmentModel,
    reference: ReferenceParams,
    storage: StorageModel,
    human: Human,
    controller: Box<dyn Controller + Send>,
    state: PlantState,
    cycle: u64,
    live: Wrench,
    live_log: Vec<(u64, Wrench)>,
    rng: ChaCha8Rng,
    noise: Option<(Normal<f64>, Normal<f64>)>,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self, ConfigError> {
        Self::with_controller(config, config.controller)
    }

    pub fn with_controller(config: &RunConfig, kind: ControllerKind) -> Result<Self, ConfigError> {
        config.validate()?;
        let noise = if config.noise.enabled {
            let n = |std: f64| Normal::new(0.0, std).map_err(|e| ConfigError::Invalid(e.to_string()));
            Some((n(config.noise.force_std)?, n(config.noise.moment_std)?))
        } else {
            None
        };
        let mut sim = Self {
            config: config.clone(),
            kind,
            model: config.plant_model(),
            environment: config.environment(),
            reference: config.reference_params(),
            storage: config.storage_model(),
            human: Human::new(config.human.script()?),
            controller: config.build_controller(kind)?,
            state: PlantState::default(),
            cycle: 0,
            live: Wrench::zero(),
            live_log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            noise,
        };
        sim.state = sim.initial_state();
        Ok(sim)
    }

    /// Runs `controller` instead of the one built from the config. `kind` only
    /// labels the run; `select_controller` still builds from the config.
    pub fn with_custom_controller(
        config: &RunConfig,
        kind: ControllerKind,
        controller: Box<dyn Controller + Send>,
    ) -> Result<Self, ConfigError> {
        let mut sim = Self::with_controller(config, kind)?;
        sim.controller = controller;
        sim.controller.reset();
        Ok(sim)
    }

    /// On the reference path at contact equilibrium with the desired force.
    fn initial_state(&self) -> PlantState {
        let r = task_reference(self.config.scenario.task, 0.0, &self.reference);
        let penetration = if self.environment.stiffness > 0.0 {
            self.reference.force_z.abs() / self.environment.stiffness
        } else {
            0.0
        };
        let mut position = Vector3::new(r.pose[0], r.pose[1], r.pose[2]);
        position.z = self.environment.surface_height - penetration;
        PlantState {
            position,
            orientation: Vector3::zeros(),
            twist: r.twist,
            time: 0.0,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn controller(&self) -> &(dyn Controller + Send) {
        self.controller.as_ref()
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn time(&self) -> f64 {
        self.cycle as f64 * self.config.dt
    }

    /// Number of cycles covering the configured duration.
    pub fn total_cycles(&self) -> u64 {
        (self.config.duration / self.config.dt).round() as u64
    }

    pub fn live_wrench(&self) -> Wrench {
        self.live
    }

    /// Adds `wrench` to the external wrench from the next cycle on, until
    /// replaced. Pass zero on release.
    pub fn set_live_wrench(&mut self, wrench: Wrench) {
        if wrench != self.live {
            self.live = wrench;
            self.live_log.push((self.cycle, wrench));
        }
    }

    /// The live wrench history as script segments. Replaying them through a
    /// human script reproduces the live run.
    pub fn live_segments(&self) -> Vec<Segment> {
        let dt = self.config.dt;
        let mut segments = Vec::new();
        for (i, &(start, wrench)) in self.live_log.iter().enumerate() {
            let end = self.live_log.get(i + 1).map_or(self.cycle, |next| next.0);
            if end > start && wrench != Wrench::zero() {
                segments.push(Segment {
                    t_start: start as f64 * dt,
                    t_end: end as f64 * dt,
                    action: Action::Constant {
                        wrench: wrench.to_array(),
                    },
                });
            }
        }
        segments
    }

    /// Back to `t = 0` with a fresh controller; the live wrench is released.
    pub fn reset(&mut self) {
        self.controller.reset();
        self.human.reset();
        self.cycle = 0;
        self.live = Wrench::zero();
        self.live_log.clear();
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.state = self.initial_state();
    }

    /// Swaps the controller and restarts from `t = 0`.
    pub fn select_controller(&mut self, kind: ControllerKind) -> Result<(), ConfigError> {
        self.controller = self.config.build_controller(kind)?;
        self.kind = kind;
        self.reset();
        Ok(())
    }

    /// Live update of one entry of the parameter table. Only valve rates,
    /// budgets and loading times are accepted.
    pub fn set_parameter(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
        let mut config = self.config.clone();
        let p = &mut config.parameters;
        let slot = match key {
            "p_vf" => &mut p.p_vf,
            "p_vi" => &mut p.p_vi,
            "ie_f" => &mut p.ie_f,
            "ie_i" => &mut p.ie_i,
            "te_f" => &mut p.te_f,
            "te_i" => &mut p.te_i,
            "t_lf" => &mut p.t_lf,
            "t_li" => &mut p.t_li,
            "ufic_budget" => &mut config.ufic.budget,
            other => {
                return Err(ConfigError::Invalid(format!("`{other}` is not a live parameter")));
            }
        };
        *slot = value;
        config.validate()?;
        let (force, impedance) = config.tank_params_for(self.kind)?;
        self.controller.retune_tanks(force, impedance)?;
        self.config = config;
        Ok(())
    }

    /// Advances one control period and returns its record.
    pub fn step(&mut self) -> Result<TraceRecord, SimulationError> {
        let dt = self.config.dt;
        let t = self.time();
        let reference = task_reference(self.config.scenario.task, t, &self.reference);
        let state = self.state;

        let script = self.human.script();
        let (offset, rate) = script.surface_motion(t);
        let guidance = script.guidance_active(t);
        let scripted = script.active(t).is_some_and(Segment::is_contact);
        let f_human = self.human.wrench(&state, t) + self.live;
        let f_env = self.environment.wrench_with_motion(&state, offset, rate);
        let f_ext = f_env + f_human;
        let f_meas = match &self.noise {
            Some((force, moment)) => {
                let mut v = f_ext.0;
                for i in 0..3 {
                    v[i] += force.sample(&mut self.rng);
                    v[i + 3] += moment.sample(&mut self.rng);
                }
                Wrench(v)
            }
            None => f_ext,
        };

        let tanks = self.controller.tank_energies();
        let ctx = ControlContext {
            state: &state,
            reference: &reference,
            external: f_meas,
            model: &self.model,
            dt,
        };
        let out = self.controller.step(&ctx)?;
        let mut next = plant_step(&state, &self.model, &out.command, &f_ext, dt)?;
        self.cycle += 1;
        next.time = self.time();
        self.state = next;

        let storage = storage_value(&state, &out.setpoint, &tanks, &self.storage);
        let a = |v: Vector6<f64>| -> [f64; 6] { v.into() };
        let mut rec = TraceRecord {
            t,
            pose: a(state.pose()),
            twist: a(state.twist.0),
            setpoint: a(out.setpoint.pose),
            setpoint_twist: a(out.setpoint.twist.0),
            tracked_twist: a(out.setpoint.tracked.0),
            setpoint_accel: a(out.setpoint.accel),
            desired_twist: a(reference.twist.0),
            task_force: a(reference.force_world().0),
            desired_force: a(out.desired_force.0),
            f_ext: a(f_ext.0),
            f_meas: a(f_meas.0),
            f_human: a(f_human.0),
            f_env: a(f_env.0),
            f_f: a(out.force.0),
            f_f_out: a(out.force_out.0),
            f_imp: a(out.impedance.0),
            port_c_interaction: a(out.sub_ports.c_interaction.0),
            port_regulation: a(out.sub_ports.regulation.0),
            port_u_interaction: a(out.sub_ports.u_interaction.0),
            port_u_desired: a(out.sub_ports.u_desired.0),
            p_c: out.powers.p_c,
            p_u: out.powers.p_u,
            power_f: out.powers.force_tank,
            power_i: out.powers.impedance_tank,
            damping_c: out.powers.constrained_damping,
            damping_u: out.powers.tracking_damping,
            discarded: out.powers.discarded,
            suppressed: out.powers.suppressed,
            e_f: tanks.force_total,
            ei_f: tanks.force_inter,
            e_i: tanks.impedance_total,
            ei_i: tanks.impedance_inter,
            d_ft: out.force_gates.d_total,
            d_fi: out.force_gates.d_inter,
            d_it: out.impedance_gates.d_total,
            d_ii: out.impedance_gates.d_inter,
            lambda_c: out.lambda_c,
            v_kinetic: storage.kinetic,
            v_elastic: storage.elastic,
            v_tank_f: storage.tank_force,
            v_tank_i: storage.tank_impedance,
            v_total: storage.total,
            balance_residual: 0.0,
            guidance,
            human_active: scripted || self.live != Wrench::zero(),
        };
        rec.balance_residual = port_power_balance(&rec).residual;
        Ok(rec)
    }
}

/// Output of [`run_scenario`]. On failure, `records` holds every cycle
/// completed before it.
#[derive(Clone, Debug)]
pub struct Trace {
    pub controller: ControllerKind,
    pub dt: f64,
    pub records: Vec<TraceRecord>,
    pub failure: Option<SimulationError>,
}

pub fn run_with(config: &RunConfig, kind: ControllerKind) -> Result<Trace, ConfigError> {
    let mut sim = Simulation::with_controller(config, kind)?;
    let cycles = sim.total_cycles();
    let mut records = Vec::with_capacity(cycles as usize);
    let mut failure = None;
    for _ in 0..cycles {
        match sim.step() {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("{kind} aborted at t = {:.4} s: {e}", sim.time());
                failure = Some(e);
                break;
            }
        }
    }
    Ok(Trace {
        controller: kind,
        dt: config.dt,
        records,
        failure,
    })
}

pub fn run_scenario(config: &RunConfig) -> Result<Trace, ConfigError> {
    run_with(config, config.controller)
}

/// Cycles in which no interaction is in progress: both interactive chambers
/// at or above their hard threshold.
pub fn interaction_free_mask(records: &[TraceRecord], force_hard: f64, impedance_hard: f64) -> Vec<bool> {
    // chambers refill to exactly their budget; allow rounding in the last bit
    let tol = 1e-12;
    records
        .iter()
        .map(|r| r.ei_f >= force_hard - tol && r.ei_i >= impedance_hard - tol)
        .collect()
}

/// RMSE of `([D_w](F_ext + F_d))_z` over the cycles selected by `mask`
/// (all cycles when `None`).
pub fn force_rmse(
    records: &[TraceRecord],
    mask: Option<&[bool]>,
    basis: &DirectionalBasis,
) -> Result<f64, MetricError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, r) in records.iter().enumerate() {
        if mask.is_some_and(|m| !m.get(i).copied().unwrap_or(false)) {
            continue;
        }
        let error = Vector6::from(r.f_ext) + Vector6::from(r.task_force);
        let z = basis.project_span(&error)[2];
        sum += z * z;
        count += 1;
    }
    if count == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok((sum / count as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    /// `x_g / W_h`
    pub e_h: f64,
    /// Human work `Σ max(P_u, 0)·dt` [J].
    pub w_h: f64,
    /// Path length during guidance [m].
    pub x_g: f64,
    /// Guidance cycles counted.
    pub cycles: usize,
    /// Whether `W_h` reached the work target before the trace ended.
    pub target_reached: bool,
}

/// Interaction efficiency over guidance cycles. With a `work_target`,
/// accumulation stops at the first cycle where `W_h` reaches it.
pub fn interaction_efficiency(
    records: &[TraceRecord],
    dt: f64,
    work_target: Option<f64>,
) -> Result<Efficiency, MetricError> {
    let mut w_h = 0.0;
    let mut x_g = 0.0;
    let mut cycles = 0;
    let mut target_reached = false;
    for pair in records.windows(2) {
        let r = &pair[0];
        if !r.guidance {
            continue;
        }
        w_h += r.p_u.max(0.0) * dt;
        let step = Vector3::new(
            pair[1].pose[0] - r.pose[0],
            pair[1].pose[1] - r.pose[1],
            pair[1].pose[2] - r.pose[2],
        );
        x_g += step.norm();
        cycles += 1;
        if work_target.is_some_and(|target| w_h >= target) {
            target_reached = true;
            break;
        }
    }
    if !(w_h > 0.0) {
        return Err(MetricError::NoHumanWork);
    }
    Ok(Efficiency {
        e_h: x_g / w_h,
        w_h,
        x_g,
        cycles,
        target_reached,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TankSide {
    Force,
    Impedance,
}

/// Time from the last cycle with positive interaction power to the first
/// cycle where the interactive gate is back at 1, for every detachment.
pub fn recovery_times(records: &[TraceRecord], side: TankSide) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last_positive: Option<f64> = None;
    let mut detached = false;
    for r in records {
        let (power, gate) = match side {
            TankSide::Force => (r.p_c, r.d_fi),
            TankSide::Impedance => (r.p_u, r.d_ii),
        };
        if gate > 1.0 {
            detached = true;
            if power > 0.0 {
                last_positive = Some(r.t);
            }
        } else if detached {
            if let Some(t0) = last_positive {
                out.push(r.t - t0);
            }
            detached = false;
            last_positive = None;
        }
    }
    out
}

fn in_window(t: f64, window: Option<[f64; 2]>) -> bool {
    window.is_none_or(|[a, b]| t >= a && t <= b)
}

/// Largest environment normal force inside `window`.
pub fn peak_contact_force(records: &[TraceRecord], window: Option<[f64; 2]>) -> f64 {
    records
        .iter()
        .filter(|r| in_window(r.t, window))
        .map(|r| r.f_env[2].abs())
        .fold(0.0, f64::max)
}

/// Largest translational speed inside `window`.
pub fn peak_speed(records: &[TraceRecord], window: Option<[f64; 2]>) -> f64 {
    records
        .iter()
        .filter(|r| in_window(r.t, window))
        .map(|r| Vector3::new(r.twist[0], r.twist[1], r.twist[2]).norm())
        .fold(0.0, f64::max)
}

/// Time of the first cycle inside `window` without environment contact.
pub fn first_contact_loss(records: &[TraceRecord], window: Option<[f64; 2]>) -> Option<f64> {
    records
        .iter()
        .find(|r| in_window(r.t, window) && r.f_env[2] == 0.0)
        .map(|r| r.t)
}

/// Largest translational speed from the first contact loss inside `window`
/// to the window's end. `None` if contact is never lost.
pub fn peak_speed_after_contact_loss(records: &[TraceRecord], window: Option<[f64; 2]>) -> Option<f64> {
    let lost = first_contact_loss(records, window)?;
    let end = window.map_or(f64::INFINITY, |w| w[1]);
    Some(peak_speed(records, Some([lost, end])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub controller: ControllerKind,
    pub cycles: usize,
    pub rmse_masked: Option<f64>,
    pub rmse_unmasked: Option<f64>,
    pub efficiency: Option<Efficiency>,
    pub peak_contact_force: f64,
    pub peak_speed: f64,
    pub peak_speed_after_contact_loss: Option<f64>,
    pub safety_bound: Option<f64>,
    pub exceeds_safety_bound: Option<bool>,
    pub recovery_force: Vec<f64>,
    pub recovery_impedance: Vec<f64>,
    pub failure: Option<String>,
}

pub fn compute_metrics(trace: &Trace, config: &RunConfig) -> Result<MetricsReport, ConfigError> {
    let records = &trace.records;
    let (force, impedance) = config.tank_params_for(trace.controller)?;
    let mask = interaction_free_mask(records, force.inter.hard, impedance.inter.hard);
    let basis = task_reference(config.scenario.task, 0.0, &config.reference_params()).force_basis();
    let window = config.metrics.window;
    let peak = peak_contact_force(records, window);
    Ok(MetricsReport {
        controller: trace.controller,
        cycles: records.len(),
        rmse_masked: force_rmse(records, Some(&mask), &basis).ok(),
        rmse_unmasked: force_rmse(records, None, &basis).ok(),
        efficiency: interaction_efficiency(records, trace.dt, Some(config.metrics.work_target)).ok(),
        peak_contact_force: peak,
        peak_speed: peak_speed(records, window),
        peak_speed_after_contact_loss: peak_speed_after_contact_loss(records, window),
        safety_bound: config.metrics.safety_bound,
        exceeds_safety_bound: config.metrics.safety_bound.map(|b| peak > b),
        recovery_force: recovery_times(records, TankSide::Force),
        recovery_impedance: recovery_times(records, TankSide::Impedance),
        failure: trace.failure.as_ref().map(|e| e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(t: f64) -> TraceRecord {
        TraceRecord {
            t,
            ..Default::default()
        }
    }

    #[test]
    fn speed_after_contact_loss() {
        let records: Vec<_> = (0..10)
            .map(|k| {
                let mut r = record(k as f64);
                r.f_env[2] = if k == 4 || k == 5 { 0.0 } else { 3.0 };
                r.twist[2] = if k == 2 { 0.5 } else { 0.1 * k as f64 };
                r
            })
            .collect();
        assert_eq!(first_contact_loss(&records, Some([1.0, 8.0])), Some(4.0));
        assert_eq!(first_contact_loss(&records, Some([6.0, 8.0])), None);
        let peak = peak_speed_after_contact_loss(&records, Some([1.0, 8.0])).unwrap();
        assert_relative_eq!(peak, 0.8, epsilon = 1e-12);
        assert_eq!(peak_speed_after_contact_loss(&records, Some([6.0, 8.0])), None);
    }

    #[test]
    fn wiping_reference_at_zero() {
        let p = ReferenceParams::for_task(Task::Wiping);
        let r = wiping_reference(0.0, &p);
        assert_eq!(r.pose[0], 0.0);
        assert_relative_eq!(r.pose[1], 0.1, epsilon = 1e-15);
        assert_relative_eq!(r.twist.0[0], 2.0 * PI * 0.2 * 0.1, epsilon = 1e-15);
        assert_eq!(r.force.0, Vector6::new(0.0, 0.0, -10.0, 0.0, 0.0, 0.0));
        assert_eq!(r.force_pattern.as_vector(), Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn references_are_complementary() {
        for task in [Task::Wiping, Task::UltrasoundPhantom] {
            let p = ReferenceParams::for_task(task);
            for k in 0..500 {
                let r = task_reference(task, k as f64 * 0.037, &p);
                assert_eq!(r.twist.0.dot(&r.force_world().0), 0.0);
            }
        }
    }

    #[test]
    fn reference_derivatives_match_differences() {
        let p = ReferenceParams::for_task(Task::Wiping);
        let h = 1e-6;
        let t = 1.3;
        let (a, b) = (wiping_reference(t - h, &p), wiping_reference(t + h, &p));
        let r = wiping_reference(t, &p);
        let v = (b.pose - a.pose) / (2.0 * h);
        let acc = (b.twist.0 - a.twist.0) / (2.0 * h);
        assert!((v - r.twist.0).norm() < 1e-8);
        assert!((acc - r.accel).norm() < 1e-7);
    }

    #[test]
    fn rmse_examples() {
        let basis = task_reference(Task::Wiping, 0.0, &ReferenceParams::for_task(Task::Wiping)).force_basis();
        let mut recs = vec![record(0.0); 4];
        for r in &mut recs {
            r.task_force[2] = -10.0;
            r.f_ext[2] = 10.0;
        }
        assert_eq!(force_rmse(&recs, None, &basis).unwrap(), 0.0);
        for r in &mut recs {
            r.f_ext[2] = 11.0;
            r.f_ext[0] = 5.0;
        }
        assert_relative_eq!(force_rmse(&recs, None, &basis).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(force_rmse(&recs, Some(&[false; 4]), &basis), Err(MetricError::EmptyMask));
    }

    #[test]
    fn efficiency_closed_form() {
        let dt = 1e-3;
        let recs: Vec<_> = (0..=10_000)
            .map(|k| {
                let t = k as f64 * dt;
                let mut r = record(t);
                r.pose[0] = t;
                r.p_u = 1.0;
                r.guidance = true;
                r
            })
            .collect();
        let e = interaction_efficiency(&recs, dt, None).unwrap();
        assert_relative_eq!(e.w_h, 10.0, epsilon = 1e-9);
        assert_relative_eq!(e.x_g, 10.0, epsilon = 1e-9);
        assert_relative_eq!(e.e_h, 1.0, epsilon = 1e-9);

        let capped = interaction_efficiency(&recs, dt, Some(5.0)).unwrap();
        assert!(capped.target_reached);
        assert_relative_eq!(capped.w_h, 5.0, epsilon = 1e-6);

        let idle = vec![record(0.0); 10];
        assert_eq!(interaction_efficiency(&idle, dt, None), Err(MetricError::NoHumanWork));
    }

    #[test]
    fn recovery_from_pulse() {
        let mut recs: Vec<_> = (0..100).map(|k| record(k as f64 * 0.01)).collect();
        for r in &mut recs {
            r.d_ii = 1.0;
            r.d_fi = 1.0;
        }
        for r in &mut recs[10..60] {
            r.d_ii = 5.0;
        }
        for r in &mut recs[10..20] {
            r.p_u = 1.0;
        }
        let times = recovery_times(&recs, TankSide::Impedance);
        assert_eq!(times.len(), 1);
        assert_relative_eq!(times[0], 0.41, epsilon = 1e-12);
        assert!(recovery_times(&recs, TankSide::Force).is_empty());
    }

    #[test]
    fn peaks_respect_window() {
        let mut recs: Vec<_> = (0..10).map(|k| record(k as f64)).collect();
        assert_eq!(peak_contact_force(&recs, None), 0.0);
        recs[2].f_env[2] = 40.0;
        recs[7].f_env[2] = 12.0;
        recs[7].twist[2] = -0.3;
        assert_eq!(peak_contact_force(&recs, None), 40.0);
        assert_eq!(peak_contact_force(&recs, Some([5.0, 9.0])), 12.0);
        assert_eq!(peak_speed(&recs, Some([5.0, 9.0])), 0.3);
    }

    fn short(controller: ControllerKind, duration: f64) -> RunConfig {
        RunConfig {
            controller,
            duration,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_duration_is_empty() {
        let trace = run_scenario(&short(ControllerKind::Ific, 0.0)).unwrap();
        assert!(trace.records.is_empty());
        assert!(trace.failure.is_none());
    }

    #[test]
    fn starts_at_contact_equilibrium() {
        let trace = run_scenario(&short(ControllerKind::Ific, 0.01)).unwrap();
        assert_eq!(trace.records.len(), 10);
        assert_relative_eq!(trace.records[0].f_env[2], 10.0, epsilon = 1e-2);
    }

    #[test]
    fn live_wrench_replays_as_script() {
        let config = short(ControllerKind::Ific, 0.5);
        let mut live = Simulation::new(&config).unwrap();
        let mut live_records = Vec::new();
        for k in 0..500 {
            match k {
                100 => live.set_live_wrench(Wrench::from_array([0.0, 0.0, 30.0, 0.0, 0.0, 0.0])),
                150 => live.set_live_wrench(Wrench::from_array([5.0, 0.0, 0.0, 0.0, 0.0, 0.0])),
                300 => live.set_live_wrench(Wrench::zero()),
                _ => {}
            }
            live_records.push(live.step().unwrap());
        }
        let mut replay = config.clone();
        replay.human.segments = live.live_segments();
        assert_eq!(replay.human.segments.len(), 2);
        let trace = run_scenario(&replay).unwrap();
        assert_eq!(crate::trace::trace_hash(&trace.records), crate::trace::trace_hash(&live_records));
    }

    #[test]
    fn reset_restores_initial_state() {
        let mut sim = Simulation::new(&short(ControllerKind::Ific, 1.0)).unwrap();
        let first = sim.step().unwrap();
        for _ in 0..200 {
            sim.step().unwrap();
        }
        sim.reset();
        assert_eq!(sim.time(), 0.0);
        assert_eq!(sim.step().unwrap(), first);
    }

    #[test]
    fn live_parameters_whitelisted() {
        let mut sim = Simulation::new(&short(ControllerKind::Ific, 1.0)).unwrap();
        sim.set_parameter("p_vf", 0.05).unwrap();
        assert_eq!(sim.config().parameters.p_vf, 0.05);
        assert!(sim.set_parameter("kp", 3.0).is_err());
        assert!(sim.set_parameter("ie_f", 5.0).is_err());
        sim.set_parameter("te_f", 0.5).unwrap();
        assert!(sim.controller().tank_energies().force_total <= 0.5);
    }
}
