//! Unified force-impedance control law and its interactive tank orchestration.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::geometry::{
    build_directional_basis, interaction_powers, rotate_gain, BinaryPattern, DirectionalBasis,
    Rotation, Twist, Wrench,
};
use crate::plant::{PlantModel, PlantState};
use crate::tanks::{
    EnergyTank, ForceTankTerms, ImpedanceTankTerms, InteractionFlow, TankFlow, TankGates,
    TankParams,
};

/// Desired motion and contact wrench for one control cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    /// Desired pose `x_d`: position and rotation vector.
    pub pose: Vector6<f64>,
    pub twist: Twist,
    pub accel: Vector6<f64>,
    /// Desired wrench `F^𝓕_d`, expressed in the task frame.
    pub force: Wrench,
    /// Orientation of the task frame in the world.
    pub rotation: Rotation,
    /// Force-controlled directions of the task frame. Fixed by the task, so a
    /// baseline that scales `force` towards zero keeps the same projectors.
    pub force_pattern: BinaryPattern,
}

impl Reference {
    pub fn new(
        pose: Vector6<f64>,
        twist: Twist,
        accel: Vector6<f64>,
        force: Wrench,
        rotation: Rotation,
    ) -> Self {
        Self {
            pose,
            twist,
            accel,
            force,
            rotation,
            force_pattern: BinaryPattern::from_nonzeros(&force.0),
        }
    }

    /// Motion-controlled directions: the complement of the force pattern.
    pub fn motion_pattern(&self) -> BinaryPattern {
        self.force_pattern.complement()
    }

    /// `F_d = R̄ F^𝓕_d`
    pub fn force_world(&self) -> Wrench {
        Wrench(self.rotation.block() * self.force.0)
    }

    pub fn force_basis(&self) -> DirectionalBasis {
        build_directional_basis(&self.rotation, &self.force_pattern)
    }

    pub fn motion_basis(&self) -> DirectionalBasis {
        build_directional_basis(&self.rotation, &self.motion_pattern())
    }
}

/// Force PID gains (task frame) and impedance gains (world frame).
#[derive(Clone, Debug, PartialEq)]
pub struct GainSet {
    pub kp: Matrix6<f64>,
    pub ki: Matrix6<f64>,
    pub kd: Matrix6<f64>,
    pub stiffness: Matrix6<f64>,
    pub damping: Matrix6<f64>,
    /// Bound on each component of the integral action `K_i ∫e` [N].
    pub windup: f64,
    /// Cutoff of the error-rate filter [Hz].
    pub rate_cutoff: f64,
}

impl GainSet {
    pub fn diagonal(
        kp: f64,
        ki: f64,
        kd: f64,
        stiffness: (f64, f64),
        damping: (f64, f64),
    ) -> Self {
        let split = |(t, r): (f64, f64)| Matrix6::from_diagonal(&Vector6::new(t, t, t, r, r, r));
        Self {
            kp: Matrix6::identity() * kp,
            ki: Matrix6::identity() * ki,
            kd: Matrix6::identity() * kd,
            stiffness: split(stiffness),
            damping: split(damping),
            windup: 50.0,
            rate_cutoff: 50.0,
        }
    }
}

impl Default for GainSet {
    fn default() -> Self {
        Self::diagonal(2.0, 2.0, 0.02, (800.0, 25.0), (300.0, 3.0))
    }
}

/// Integrator and filtered error rate of the force PID.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForcePidState {
    pub integral: Vector6<f64>,
    pub prev_error: Option<Vector6<f64>>,
    pub filtered_error_rate: Vector6<f64>,
}

/// Intermediate quantities of one force-law evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceTerms {
    /// `F'_d`
    pub desired: Wrench,
    /// `F_d = R̄F^𝓕_d`
    pub feedforward: Wrench,
    /// `F^{i,d}_f = K_i∫e + K_d ė + F_d`
    pub integral_derivative: Wrench,
    /// `F_f`
    pub output: Wrench,
}

/// `F'_d = R̄(F^𝓕_d + (F^bin_d - 1) ⊙ R̄ᵀF_ext)`
pub fn desired_force_world(reference: &Reference, external: &Wrench) -> Wrench {
    let block = reference.rotation.block();
    let local = block.transpose() * external.0;
    let bin = reference.force_pattern.as_vector();
    let masked = (bin - Vector6::repeat(1.0)).component_mul(&local);
    Wrench(block * (reference.force.0 + masked))
}

/// Evaluates the force PID and advances its state. `integration_scale` slows
/// the integrator while the output is attenuated so it does not wind up on an
/// error the detached controller cannot act on.
pub fn force_pid(
    pid: &mut ForcePidState,
    reference: &Reference,
    external: &Wrench,
    gains: &GainSet,
    dt: f64,
    integration_scale: f64,
) -> Result<ForceTerms, ControlError> {
    if !(dt > 0.0) {
        return Err(ControlError::NonPositiveStep(dt));
    }
    let kp = rotate_gain(&gains.kp, &reference.rotation);
    let ki = rotate_gain(&gains.ki, &reference.rotation);
    let kd = rotate_gain(&gains.kd, &reference.rotation);

    let desired = desired_force_world(reference, external);
    let feedforward = reference.force_world();
    let error = desired.0 + external.0;

    pid.integral += error * (dt * integration_scale);
    for i in 0..6 {
        let k = ki[(i, i)].abs();
        if k > 0.0 {
            let limit = gains.windup / k;
            pid.integral[i] = pid.integral[i].clamp(-limit, limit);
        }
    }

    let raw_rate = match pid.prev_error {
        Some(prev) => (error - prev) / dt,
        None => Vector6::zeros(),
    };
    let tau = 1.0 / (2.0 * std::f64::consts::PI * gains.rate_cutoff);
    let alpha = dt / (dt + tau);
    pid.filtered_error_rate += (raw_rate - pid.filtered_error_rate) * alpha;
    pid.prev_error = Some(error);

    let integral_derivative =
        Wrench(ki * pid.integral + kd * pid.filtered_error_rate + feedforward.0);
    let output = Wrench(kp * error) + integral_derivative;
    Ok(ForceTerms {
        desired,
        feedforward,
        integral_derivative,
        output,
    })
}

/// The four force sub-ports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubPorts {
    /// `K_p[D_w]F_ext`
    pub c_interaction: Wrench,
    /// `F^r_f = K_p[D_w]F'_d + F^{i,d}_f`
    pub regulation: Wrench,
    /// `K_p<D_w>F_ext`
    pub u_interaction: Wrench,
    /// `K_p<D_w>F'_d`
    pub u_desired: Wrench,
}

impl SubPorts {
    pub fn sum(&self) -> Wrench {
        self.c_interaction + self.regulation + self.u_interaction + self.u_desired
    }
}

pub fn split_force_ports(
    terms: &ForceTerms,
    external: &Wrench,
    reference: &Reference,
    basis_w: &DirectionalBasis,
    gains: &GainSet,
) -> Result<SubPorts, ControlError> {
    let kp = rotate_gain(&gains.kp, &reference.rotation);
    let ports = SubPorts {
        c_interaction: Wrench(kp * (basis_w.span * external.0)),
        regulation: Wrench(kp * (basis_w.span * terms.desired.0)) + terms.integral_derivative,
        u_interaction: Wrench(kp * (basis_w.kernel * external.0)),
        u_desired: Wrench(kp * (basis_w.kernel * terms.desired.0)),
    };
    let residual = (ports.sum() - terms.output).norm();
    let scale = 1.0 + terms.output.norm();
    if residual > 1e-6 * scale {
        return Err(ControlError::Decomposition(residual));
    }
    Ok(ports)
}

/// Modified setpoint `x'_d` with its velocity and acceleration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub pose: Vector6<f64>,
    pub twist: Twist,
    pub accel: Vector6<f64>,
    /// Twist the rate error `x̃˙'` is taken against: `ẋ_d` times the previous
    /// cycle's velocity scale. The jump to `twist` only reaches the plant
    /// through this cycle's `Λẍ'_d`, so the two differ while the scale moves.
    pub tracked: Twist,
}

/// `Λẍ'_d - λ_c D_d<D_i>ẋ - D_d[D_i]x̃˙' - K_s x̃' + μẋ'_d + F_g`
pub fn impedance_wrench(
    state: &PlantState,
    setpoint: &Setpoint,
    lambda_c: bool,
    basis_i: &DirectionalBasis,
    gains: &GainSet,
    model: &PlantModel,
) -> Wrench {
    let v = state.twist.0;
    let error = state.pose() - setpoint.pose;
    let rate_error = v - setpoint.tracked.0;
    let mut f = model.inertia * setpoint.accel
        - gains.damping * (basis_i.span * rate_error)
        - gains.stiffness * error
        + model.coriolis * setpoint.twist.0
        + model.gravity.0;
    if lambda_c {
        f -= gains.damping * (basis_i.kernel * v);
    }
    Wrench(f)
}

/// How the tanks take part in a unified controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TankMode {
    /// Dual-chamber tanks with interactive drain.
    Interactive,
    /// Tanks on the controller ports only; interactive chambers unused.
    ControllerOnly,
    /// Tanks held full and transparent, constrained-direction damping on.
    Pinned,
}

/// Extra multiplicative gates applied by a baseline on top of the tanks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputGates {
    pub force: f64,
    pub impedance: f64,
}

impl Default for OutputGates {
    fn default() -> Self {
        Self {
            force: 1.0,
            impedance: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedConfig {
    pub gains: GainSet,
    pub force_tank: TankParams,
    pub impedance_tank: TankParams,
    pub mode: TankMode,
}

impl Default for UnifiedConfig {
    fn default() -> Self {
        Self {
            gains: GainSet::default(),
            force_tank: TankParams::new(1.0, 0.1, 0.03, 2.0).expect("valid defaults"),
            impedance_tank: TankParams::new(1.0, 0.1, 0.01, 2.0).expect("valid defaults"),
            mode: TankMode::Interactive,
        }
    }
}

/// Inputs shared by every controller for one cycle.
#[derive(Clone, Copy, Debug)]
pub struct ControlContext<'a> {
    pub state: &'a PlantState,
    pub reference: &'a Reference,
    /// Measured external wrench `F_ext`.
    pub external: Wrench,
    pub model: &'a PlantModel,
    pub dt: f64,
}

/// Interaction and port powers of one cycle [W], plus tank bookkeeping [J].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PortPowers {
    pub p_c: f64,
    pub p_u: f64,
    pub force_tank: f64,
    pub impedance_tank: f64,
    /// `ẋᵀD_d<D_i>ẋ`
    pub constrained_damping: f64,
    /// `x̃˙'ᵀD_d[D_i]x̃˙'`
    pub tracking_damping: f64,
    pub discarded: f64,
    pub suppressed: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TankEnergies {
    pub force_total: f64,
    pub force_inter: f64,
    pub impedance_total: f64,
    pub impedance_inter: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerOutput {
    /// `F'_d`
    pub desired_force: Wrench,
    /// `F_f`
    pub force: Wrench,
    /// `F'_f`
    pub force_out: Wrench,
    pub impedance: Wrench,
    /// Wrench sent to the plant.
    pub command: Wrench,
    pub setpoint: Setpoint,
    pub sub_ports: SubPorts,
    pub lambda_c: bool,
    pub force_gates: TankGates,
    pub impedance_gates: TankGates,
    pub powers: PortPowers,
    /// Tank energies after this cycle's update.
    pub tanks: TankEnergies,
}

/// Common surface of IFIC and the baselines.
pub trait Controller {
    fn step(&mut self, ctx: &ControlContext) -> Result<ControllerOutput, ControlError>;
    /// Returns to the initial state; the next step re-anchors the setpoint.
    fn reset(&mut self);
    fn name(&self) -> &'static str;
    /// Current tank energies, before the next update.
    fn tank_energies(&self) -> TankEnergies;
    /// Replaces the tank parameters in place. Controllers without tanks
    /// ignore the call.
    fn retune_tanks(&mut self, _force: TankParams, _impedance: TankParams) -> Result<(), ControlError> {
        Ok(())
    }
}

/// The unified law with tanks. IFIC, UFIC and the tank-free variant used by
/// the other baselines are all instances of this type.
#[derive(Clone, Debug)]
pub struct UnifiedController {
    config: UnifiedConfig,
    pid: ForcePidState,
    force_tank: EnergyTank,
    impedance_tank: EnergyTank,
    setpoint: Option<Vector6<f64>>,
    prev_velocity_scale: Option<f64>,
}

impl UnifiedController {
    pub fn new(config: UnifiedConfig) -> Result<Self, ControlError> {
        config.force_tank.validate()?;
        config.impedance_tank.validate()?;
        Ok(Self {
            force_tank: EnergyTank::full(&config.force_tank),
            impedance_tank: EnergyTank::full(&config.impedance_tank),
            config,
            pid: ForcePidState::default(),
            setpoint: None,
            prev_velocity_scale: None,
        })
    }

    pub fn config(&self) -> &UnifiedConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut UnifiedConfig {
        &mut self.config
    }

    pub fn force_tank(&self) -> &EnergyTank {
        &self.force_tank
    }

    pub fn impedance_tank(&self) -> &EnergyTank {
        &self.impedance_tank
    }

    pub fn set_tanks(&mut self, force: EnergyTank, impedance: EnergyTank) {
        self.force_tank = force;
        self.impedance_tank = impedance;
    }

    pub fn pid(&self) -> &ForcePidState {
        &self.pid
    }

    /// One cycle of the unified law with additional baseline gates.
    pub fn step_gated(
        &mut self,
        ctx: &ControlContext,
        gates: OutputGates,
    ) -> Result<ControllerOutput, ControlError> {
        let dt = ctx.dt;
        if !(dt > 0.0) {
            return Err(ControlError::NonPositiveStep(dt));
        }
        let reference = ctx.reference;
        let external = ctx.external;
        let v = ctx.state.twist;
        let basis_w = reference.force_basis();
        let basis_i = reference.motion_basis();
        let gains = &self.config.gains;
        let kp = rotate_gain(&gains.kp, &reference.rotation);

        let powers = interaction_powers(&v, &external, &basis_w);
        let c_flow = InteractionFlow {
            raw: powers.constrained,
            weighted: v.0.dot(&(kp * (basis_w.span * external.0))),
        };
        let u_flow = InteractionFlow {
            raw: powers.unconstrained,
            weighted: v.0.dot(&(kp * (basis_w.kernel * external.0))),
        };

        let (force_gates, impedance_gates, interactive) = match self.config.mode {
            TankMode::Interactive => (
                self.force_tank.gates(&self.config.force_tank, c_flow, true),
                self.impedance_tank.gates(&self.config.impedance_tank, u_flow, true),
                true,
            ),
            TankMode::ControllerOnly => (
                self.force_tank.gates(&self.config.force_tank, c_flow, false),
                self.impedance_tank.gates(&self.config.impedance_tank, u_flow, false),
                false,
            ),
            TankMode::Pinned => {
                let pinned = TankGates {
                    lambda: true,
                    ..TankGates::transparent()
                };
                (pinned, pinned, false)
            }
        };
        let lambda_c = force_gates.lambda;
        let force_scale = gates.force / force_gates.product();
        let velocity_scale = gates.impedance / impedance_gates.product();

        let terms = force_pid(&mut self.pid, reference, &external, gains, dt, force_scale)?;
        let sub_ports = split_force_ports(&terms, &external, reference, &basis_w, gains)?;
        let force_out = terms.output * force_scale;

        let prev_scale = self.prev_velocity_scale.unwrap_or(velocity_scale);
        self.prev_velocity_scale = Some(velocity_scale);
        let twist = reference.twist * velocity_scale;
        let accel = reference.accel * velocity_scale
            + reference.twist.0 * ((velocity_scale - prev_scale) / dt);
        let pose = self.setpoint.unwrap_or(reference.pose) + twist.0 * dt;
        self.setpoint = Some(pose);
        let tracked = reference.twist * prev_scale;
        let setpoint = Setpoint {
            pose,
            twist,
            accel,
            tracked,
        };

        let impedance = impedance_wrench(ctx.state, &setpoint, lambda_c, &basis_i, gains, ctx.model)
            * gates.impedance;

        let rate_error = v.0 - tracked.0;
        let constrained_damping = v.0.dot(&(gains.damping * (basis_i.kernel * v.0)));
        let tracking_damping = rate_error.dot(&(gains.damping * (basis_i.span * rate_error)));

        let force_terms = ForceTankTerms {
            regulation: v.power(&sub_ports.regulation),
            constrained_damping,
            interaction: c_flow.weighted,
        };
        let impedance_terms = ImpedanceTankTerms {
            task: reference.twist.power(&(force_out + external)),
            tracking_damping,
        };
        let force_power = force_terms.port_power(lambda_c);
        let impedance_power = impedance_terms.port_power();

        let (f_flow, i_flow) = if self.config.mode == TankMode::Pinned {
            (TankFlow::default(), TankFlow::default())
        } else {
            let f = self.force_tank.integrate(
                &self.config.force_tank,
                &force_gates,
                force_power,
                c_flow,
                interactive,
                dt,
            );
            let i = self.impedance_tank.integrate(
                &self.config.impedance_tank,
                &impedance_gates,
                impedance_power,
                u_flow,
                interactive,
                dt,
            );
            (f, i)
        };

        Ok(ControllerOutput {
            desired_force: terms.desired,
            force: terms.output,
            force_out,
            impedance,
            command: force_out + impedance,
            setpoint,
            sub_ports,
            lambda_c,
            force_gates,
            impedance_gates,
            powers: PortPowers {
                p_c: powers.constrained,
                p_u: powers.unconstrained,
                force_tank: force_power,
                impedance_tank: impedance_power,
                constrained_damping,
                tracking_damping,
                discarded: f_flow.discarded + i_flow.discarded,
                suppressed: f_flow.suppressed + i_flow.suppressed,
            },
            tanks: TankEnergies {
                force_total: self.force_tank.total_energy(),
                force_inter: self.force_tank.inter_energy(),
                impedance_total: self.impedance_tank.total_energy(),
                impedance_inter: self.impedance_tank.inter_energy(),
            },
        })
    }
}

impl Controller for UnifiedController {
    fn step(&mut self, ctx: &ControlContext) -> Result<ControllerOutput, ControlError> {
        self.step_gated(ctx, OutputGates::default())
    }

    fn reset(&mut self) {
        self.pid = ForcePidState::default();
        self.force_tank = EnergyTank::full(&self.config.force_tank);
        self.impedance_tank = EnergyTank::full(&self.config.impedance_tank);
        self.setpoint = None;
        self.prev_velocity_scale = None;
    }

    fn name(&self) -> &'static str {
        match self.config.mode {
            TankMode::Interactive => "ific",
            TankMode::ControllerOnly => "ufic",
            TankMode::Pinned => "unified",
        }
    }

    fn retune_tanks(&mut self, force: TankParams, impedance: TankParams) -> Result<(), ControlError> {
        force.validate()?;
        impedance.validate()?;
        self.force_tank = EnergyTank::with_energies(
            &force,
            self.force_tank.total_energy(),
            self.force_tank.inter_energy(),
        );
        self.impedance_tank = EnergyTank::with_energies(
            &impedance,
            self.impedance_tank.total_energy(),
            self.impedance_tank.inter_energy(),
        );
        self.config.force_tank = force;
        self.config.impedance_tank = impedance;
        Ok(())
    }

    fn tank_energies(&self) -> TankEnergies {
        TankEnergies {
            force_total: self.force_tank.total_energy(),
            force_inter: self.force_tank.inter_energy(),
            impedance_total: self.impedance_tank.total_energy(),
            impedance_inter: self.impedance_tank.inter_energy(),
        }
    }
}

/// IFIC with the given gains and tanks.
pub fn ific(gains: GainSet, force_tank: TankParams, impedance_tank: TankParams) -> UnifiedController {
    UnifiedController::new(UnifiedConfig {
        gains,
        force_tank,
        impedance_tank,
        mode: TankMode::Interactive,
    })
    .expect("tank parameters validated by construction")
}
